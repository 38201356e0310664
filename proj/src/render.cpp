#include "waitcast/render.hpp"

#include "waitcast/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace waitcast {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

/// Element-wise mean over children, truncated to the shortest series.
std::vector<double> mean_series(const std::vector<ChildResult>& children, bool predicted) {
  if (children.empty()) return {};
  std::size_t len = SIZE_MAX;
  for (const auto& c : children) len = std::min(len, (predicted ? c.predicted : c.actual).size());
  std::vector<double> out(len, 0.0);
  for (const auto& c : children) {
    const auto& v = predicted ? c.predicted : c.actual;
    for (std::size_t i = 0; i < len; ++i) out[i] += v[i];
  }
  for (auto& x : out) x /= static_cast<double>(children.size());
  return out;
}

}  // namespace

std::vector<TableRow> ranking(const EvalReport& r) {
  std::vector<TableRow> rows;
  for (auto m : kModels) {
    TableRow row{m, r.model_average(m), 0};
    for (auto st : all_strata())
      if (const auto* e = r.find(m, st); e && e->metrics) ++row.strata;
    rows.push_back(row);
  }
  std::stable_sort(rows.begin(), rows.end(), [](const TableRow& a, const TableRow& b) {
    if (a.average.has_value() != b.average.has_value()) return a.average.has_value();
    if (a.average && a.average->rmse != b.average->rmse) return a.average->rmse < b.average->rmse;
    return to_string(a.model) < to_string(b.model);
  });
  return rows;
}

void write_table(const EvalReport& r, std::ostream& out) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-6s %10s %10s %10s %7s\n", "model", "rmse", "mae", "mbe", "strata");
  out << buf;
  for (const auto& row : ranking(r)) {
    const std::string name(to_string(row.model));
    if (row.average)
      std::snprintf(buf, sizeof buf, "%-6s %10.4f %10.4f %10.4f %5zu/6\n", name.c_str(), row.average->rmse,
                    row.average->mae, row.average->mbe, row.strata);
    else
      std::snprintf(buf, sizeof buf, "%-6s %10s %10s %10s %5zu/6\n", name.c_str(), "-", "-", "-", row.strata);
    out << buf;
  }
}

void write_model_svg(const EvalReport& r, ModelKind m, std::ostream& out) {
  constexpr double panel_w = 360, panel_h = 200, margin = 50, gap = 40, top = 60;
  const double width = margin * 2 + panel_w * 2 + gap;
  const double footer_top = top + 3 * (panel_h + gap);
  const double height = footer_top + 7 * 18 + 20;
  const std::string name(to_string(m));

  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" viewBox=\"0 0 " << width << ' ' << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << margin << "\" y=\"30\" font-size=\"18\">" << xml_escape(name)
      << ": mean test-bin counts, actual vs predicted</text>\n";

  std::size_t cell = 0;
  for (auto st : all_strata()) {
    const double x0 = margin + static_cast<double>(cell % 2) * (panel_w + gap);
    const double y0 = top + static_cast<double>(cell / 2) * (panel_h + gap);
    ++cell;
    const auto* e = r.find(m, st);
    out << "<g>\n<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << panel_w << "\" height=\"" << panel_h
        << "\" fill=\"none\" stroke=\"#888\"/>\n";
    out << "<text x=\"" << x0 + 4 << "\" y=\"" << y0 - 6 << "\">age " << years(st.age) << ", "
        << to_string(st.category) << "</text>\n";
    if (!e || e->children.empty()) {
      out << "<text x=\"" << x0 + panel_w / 2 << "\" y=\"" << y0 + panel_h / 2
          << "\" text-anchor=\"middle\" fill=\"#a00\">missing</text>\n</g>\n";
      continue;
    }
    const auto actual = mean_series(e->children, false);
    const auto predicted = mean_series(e->children, true);
    double hi = 1.0;
    for (double v : actual) hi = std::max(hi, v);
    for (double v : predicted) hi = std::max(hi, v);
    double lo = 0.0;
    for (double v : predicted) lo = std::min(lo, v);
    const std::size_t n = actual.size();
    auto px = [&](std::size_t i) { return x0 + (n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5) * panel_w; };
    auto py = [&](double v) { return y0 + panel_h - (v - lo) / (hi - lo) * panel_h; };
    auto polyline = [&](const std::vector<double>& v, const char* colour, const char* dash) {
      out << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\"" << dash << " points=\"";
      for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << fmt("%.2f", px(i)) << ',' << fmt("%.2f", py(v[i]));
      out << "\"/>\n";
    };
    polyline(actual, "#1f4e79", "");
    polyline(predicted, "#c55a11", " stroke-dasharray=\"5,3\"");
    out << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + 10 << "\" text-anchor=\"end\">" << fmt("%.0f", hi) << "</text>\n";
    out << "<text x=\"" << x0 - 4 << "\" y=\"" << y0 + panel_h << "\" text-anchor=\"end\">" << fmt("%.0f", lo)
        << "</text>\n</g>\n";
  }

  out << "<g font-family=\"monospace\">\n";
  double y = footer_top;
  out << "<text x=\"" << margin << "\" y=\"" << y << "\">stratum        rmse     mae      mbe   (solid actual, dashed predicted)</text>\n";
  for (auto st : all_strata()) {
    y += 18;
    const auto* e = r.find(m, st);
    std::string line = stratum_label(st);
    line.resize(14, ' ');
    if (e && e->metrics)
      line += fmt("%7.3f", e->metrics->rmse) + "  " + fmt("%7.3f", e->metrics->mae) + "  " + fmt("%7.3f", e->metrics->mbe);
    else
      line += "   missing";
    out << "<text x=\"" << margin << "\" y=\"" << y << "\" xml:space=\"preserve\">" << xml_escape(line) << "</text>\n";
  }
  out << "</g>\n</svg>\n";
}

std::vector<fs::path> render_report(const EvalReport& r, const fs::path& dir) {
  if (r.present() == 0) throw Error(Errc::empty_report, "report has no metric entries");
  fs::create_directories(dir);
  std::vector<fs::path> written;
  for (auto m : kModels) {
    const auto path = dir / (std::string(to_string(m)) + ".svg");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Errc::io_error, "cannot write " + path.string());
    write_model_svg(r, m, out);
    written.push_back(path);
  }
  const auto table = dir / "summary.txt";
  std::ofstream out(table, std::ios::binary);
  if (!out) throw Error(Errc::io_error, "cannot write " + table.string());
  write_table(r, out);
  written.push_back(table);
  return written;
}

}  // namespace waitcast
