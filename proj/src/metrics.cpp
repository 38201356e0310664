#include "waitcast/metrics.hpp"

#include "waitcast/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

namespace waitcast {

namespace {

void check_pair(std::span<const double> pred, std::span<const double> actual) {
  if (pred.size() != actual.size())
    throw Error(Errc::length_mismatch, std::to_string(pred.size()) + " predictions for " +
                                           std::to_string(actual.size()) + " actual values");
  if (pred.empty()) throw Error(Errc::empty_input, "metric over zero values");
}

MetricTriple mean_of(const std::vector<MetricTriple>& xs) {
  MetricTriple m;
  for (const auto& x : xs) {
    m.rmse += x.rmse;
    m.mae += x.mae;
    m.mbe += x.mbe;
  }
  const double n = static_cast<double>(xs.size());
  m.rmse /= n;
  m.mae /= n;
  m.mbe /= n;
  return m;
}

void check_ordering(const MetricTriple& m, const std::string& where) {
  const double slack = 1e-9 * std::max(1.0, m.rmse);
  if (!(m.rmse + slack >= m.mae && m.mae + slack >= std::abs(m.mbe)))
    throw std::logic_error("metric ordering rmse >= mae >= |mbe| violated for " + where);
}

}  // namespace

double rmse(std::span<const double> pred, std::span<const double> actual) {
  check_pair(pred, actual);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - actual[i]) * (pred[i] - actual[i]);
  return std::sqrt(s / static_cast<double>(pred.size()));
}

double mae(std::span<const double> pred, std::span<const double> actual) {
  check_pair(pred, actual);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - actual[i]);
  return s / static_cast<double>(pred.size());
}

double mbe(std::span<const double> pred, std::span<const double> actual) {
  check_pair(pred, actual);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += pred[i] - actual[i];
  return s / static_cast<double>(pred.size());
}

MetricTriple metric_triple(std::span<const double> pred, std::span<const double> actual) {
  return {rmse(pred, actual), mae(pred, actual), mbe(pred, actual)};
}

std::string_view to_string(ModelKind m) noexcept {
  switch (m) {
    case ModelKind::enr: return "ENR";
    case ModelKind::rf: return "RF";
    case ModelKind::xgb: return "XGB";
    case ModelKind::lstm: return "LSTM";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  for (auto m : kModels)
    if (to_string(m) == text) return m;
  throw Error(Errc::invalid_config, "unknown model '" + std::string(text) + "'");
}

std::size_t EvalReport::present() const {
  std::size_t n = 0;
  for (const auto& [model, strata] : entries)
    for (const auto& [st, e] : strata) n += e.metrics.has_value();
  return n;
}

std::optional<MetricTriple> EvalReport::model_average(ModelKind m) const {
  const auto it = entries.find(m);
  if (it == entries.end()) return std::nullopt;
  std::vector<MetricTriple> xs;
  for (const auto& [st, e] : it->second)
    if (e.metrics) xs.push_back(*e.metrics);
  if (xs.empty()) return std::nullopt;
  return mean_of(xs);
}

const StratumEntry* EvalReport::find(ModelKind m, Stratum st) const {
  const auto it = entries.find(m);
  if (it == entries.end()) return nullptr;
  const auto jt = it->second.find(st);
  return jt == it->second.end() ? nullptr : &jt->second;
}

bool EvalReport::operator==(const EvalReport& o) const { return report_json(*this) == report_json(o); }

EvalReport evaluate_all(const std::vector<ChildForecast>& forecasts, std::uint64_t seed, std::string config_digest) {
  EvalReport r;
  r.seed = seed;
  r.config_digest = std::move(config_digest);
  for (auto m : kModels)
    for (auto st : all_strata()) r.entries[m][st];

  for (const auto& f : forecasts) {
    ChildResult c{f.child_id, f.actual, f.predicted, metric_triple(f.predicted, f.actual)};
    r.entries[f.model][f.stratum].children.push_back(std::move(c));
  }
  for (auto& [model, strata] : r.entries) {
    for (auto& [st, e] : strata) {
      const auto where = std::string(to_string(model)) + " " + stratum_label(st);
      if (e.children.empty()) {
        e.note = std::string(errc_name(Errc::missing_stratum)) + ": no forecasts for " + where;
        continue;
      }
      std::sort(e.children.begin(), e.children.end(),
                [](const ChildResult& a, const ChildResult& b) { return a.child_id < b.child_id; });
      std::vector<MetricTriple> xs;
      for (const auto& c : e.children) xs.push_back(c.metrics);
      e.metrics = mean_of(xs);
      check_ordering(*e.metrics, where);
    }
  }
  return r;
}

namespace {

using nlohmann::ordered_json;

ordered_json triple_json(const MetricTriple& m) { return {{"rmse", m.rmse}, {"mae", m.mae}, {"mbe", m.mbe}}; }

MetricTriple triple_from(const ordered_json& j) {
  return {j.at("rmse").get<double>(), j.at("mae").get<double>(), j.at("mbe").get<double>()};
}

}  // namespace

std::string report_json(const EvalReport& r) {
  ordered_json root;
  root["seed"] = r.seed;
  root["config_digest"] = r.config_digest;
  ordered_json ks = ordered_json::object();
  for (const auto& [st, k] : r.selected_k) ks[stratum_label(st)] = k;
  root["selected_k"] = ks;

  ordered_json models = ordered_json::object();
  ordered_json averages = ordered_json::object();
  for (const auto& [model, strata] : r.entries) {
    ordered_json by_age = ordered_json::object();
    for (const auto& [st, e] : strata) {
      ordered_json cell = ordered_json::object();
      if (e.metrics) {
        cell = triple_json(*e.metrics);
      } else {
        cell["missing"] = e.note;
      }
      ordered_json children = ordered_json::array();
      for (const auto& c : e.children) {
        children.push_back({{"child_id", c.child_id},
                            {"rmse", c.metrics.rmse},
                            {"mae", c.metrics.mae},
                            {"mbe", c.metrics.mbe},
                            {"actual", c.actual},
                            {"predicted", c.predicted}});
      }
      cell["children"] = std::move(children);
      by_age[std::to_string(years(st.age))][std::string(to_string(st.category))] = std::move(cell);
    }
    models[std::string(to_string(model))] = std::move(by_age);
    if (auto avg = r.model_average(model)) averages[std::string(to_string(model))] = triple_json(*avg);
  }
  root["models"] = std::move(models);
  root["averages"] = std::move(averages);
  return root.dump(2) + "\n";
}

EvalReport parse_report_json(std::string_view text) {
  ordered_json root;
  try {
    root = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::io_error, std::string("report is not valid JSON: ") + e.what());
  }
  EvalReport r;
  try {
    r.seed = root.at("seed").get<std::uint64_t>();
    r.config_digest = root.at("config_digest").get<std::string>();
    for (auto st : all_strata()) {
      const auto label = stratum_label(st);
      if (root.at("selected_k").contains(label)) r.selected_k[st] = root["selected_k"][label].get<int>();
    }
    for (const auto& [name, by_age] : root.at("models").items()) {
      const auto model = parse_model_kind(name);
      for (const auto& [age, by_cat] : by_age.items()) {
        for (const auto& [cat, cell] : by_cat.items()) {
          const Stratum st{parse_age(age), parse_category(cat)};
          auto& e = r.entries[model][st];
          if (cell.contains("rmse"))
            e.metrics = triple_from(cell);
          else
            e.note = cell.value("missing", "");
          for (const auto& c : cell.at("children")) {
            e.children.push_back({c.at("child_id").get<std::string>(), c.at("actual").get<std::vector<double>>(),
                                  c.at("predicted").get<std::vector<double>>(), triple_from(c)});
          }
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::io_error, std::string("report JSON has an unexpected layout: ") + e.what());
  }
  return r;
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_report_json(ss.str());
}

void write_report_csv(const EvalReport& r, std::ostream& out) {
  out << "model,age,category,rmse,mae,mbe\n";
  char buf[128];
  for (const auto& [model, strata] : r.entries) {
    for (const auto& [st, e] : strata) {
      out << to_string(model) << ',' << years(st.age) << ',' << to_string(st.category) << ',';
      if (e.metrics) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", e.metrics->rmse, e.metrics->mae, e.metrics->mbe);
        out << buf << '\n';
      } else {
        out << "NA,NA,NA\n";
      }
    }
  }
}

}  // namespace waitcast
