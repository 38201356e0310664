#include "waitcast/cluster.hpp"

#include "waitcast/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <utility>

namespace waitcast {

namespace {

double row_distance(const Eigen::MatrixXd& data, Eigen::Index i, Eigen::Index j) {
  double acc = 0.0;
  for (Eigen::Index t = 0; t < data.cols(); ++t) {
    const double diff = data(i, t) - data(j, t);
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

}  // namespace

DistanceMatrix distance_matrix(const Eigen::MatrixXd& data, std::vector<std::string> ids, Execution exec) {
  const Eigen::Index n = data.rows();
  if (n < 2) throw Error(Errc::too_few_series, "distance matrix needs at least 2 series");
  if (static_cast<Eigen::Index>(ids.size()) != n) throw Error(Errc::length_mismatch, "ids do not match data rows");

  DistanceMatrix dm{std::move(ids), Eigen::MatrixXd::Zero(n, n)};
  auto& d = dm.d;
  if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 4)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = row_distance(data, i, j);
  } else {
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = row_distance(data, i, j);
  }
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) d(j, i) = d(i, j);
  return dm;
}

DistanceMatrix distance_matrix(const std::vector<BinnedSeries>& series, Execution exec) {
  std::vector<std::string> ids;
  for (const auto& s : series) {
    if (s.age != series.front().age || s.category != series.front().category)
      throw Error(Errc::length_mismatch, "series from different strata");
    ids.push_back(s.child_id);
  }
  return distance_matrix(binned_matrix(series), std::move(ids), exec);
}

Dendrogram ward_agglomerate(const DistanceMatrix& dm, const Eigen::MatrixXd& data) {
  const int n = static_cast<int>(dm.size());
  if (n < 2) throw Error(Errc::too_few_series, "ward needs at least 2 points");
  if (data.rows() != n) throw Error(Errc::dimension_mismatch, "data rows do not match distance matrix");

  // Slot i holds one active cluster; `cost` is only read for active pairs.
  Eigen::MatrixXd cost = 0.5 * dm.d.array().square().matrix();
  std::vector<int> cluster_id(static_cast<std::size_t>(n));
  std::vector<int> size(static_cast<std::size_t>(n), 1);
  std::vector<bool> active(static_cast<std::size_t>(n), true);
  std::iota(cluster_id.begin(), cluster_id.end(), 0);

  Dendrogram dg;
  dg.n = n;
  dg.leaf_ids = dm.ids;
  dg.merges.reserve(static_cast<std::size_t>(n - 1));

  for (int step = 0; step < n - 1; ++step) {
    int best_i = -1, best_j = -1;
    double best = std::numeric_limits<double>::infinity();
    std::pair<int, int> best_key{std::numeric_limits<int>::max(), std::numeric_limits<int>::max()};
    for (int i = 0; i < n; ++i) {
      if (!active[static_cast<std::size_t>(i)]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (!active[static_cast<std::size_t>(j)]) continue;
        const double c = cost(i, j);
        const int ci = cluster_id[static_cast<std::size_t>(i)], cj = cluster_id[static_cast<std::size_t>(j)];
        const std::pair<int, int> key{std::min(ci, cj), std::max(ci, cj)};
        if (c < best || (c == best && key < best_key)) {
          best = c;
          best_key = key;
          best_i = i;
          best_j = j;
        }
      }
    }

    const auto ui = static_cast<std::size_t>(best_i), uj = static_cast<std::size_t>(best_j);
    const double ni = size[ui], nj = size[uj];
    for (int k = 0; k < n; ++k) {
      const auto uk = static_cast<std::size_t>(k);
      if (!active[uk] || k == best_i || k == best_j) continue;
      const double nk = size[uk];
      const double updated = ((ni + nk) * cost(best_i, k) + (nj + nk) * cost(best_j, k) - nk * best) / (ni + nj + nk);
      cost(best_i, k) = cost(k, best_i) = updated;
    }
    const int new_id = n + step;
    dg.merges.push_back({best_key.first, best_key.second, best, new_id, size[ui] + size[uj]});
    cluster_id[ui] = new_id;
    size[ui] += size[uj];
    active[uj] = false;
  }

  // In-order traversal from the root.
  std::vector<int> stack{2 * n - 2};
  while (!stack.empty()) {
    const int c = stack.back();
    stack.pop_back();
    if (c < n) {
      dg.leaf_order.push_back(c);
      continue;
    }
    const auto& m = dg.merges[static_cast<std::size_t>(c - n)];
    stack.push_back(m.b);
    stack.push_back(m.a);
  }
  return dg;
}

std::vector<int> cut_dendrogram(const Dendrogram& dg, int k) {
  const int n = dg.n;
  if (k < 1 || k > n) throw Error(Errc::invalid_config, "cut needs 1 <= k <= n");
  // Union-find over cluster ids 0..2n-2.
  std::vector<int> parent(static_cast<std::size_t>(2 * n - 1));
  std::iota(parent.begin(), parent.end(), 0);
  for (int s = 0; s < n - k; ++s) {
    const auto& m = dg.merges[static_cast<std::size_t>(s)];
    parent[static_cast<std::size_t>(m.a)] = m.id;
    parent[static_cast<std::size_t>(m.b)] = m.id;
  }
  auto root = [&](int c) {
    while (parent[static_cast<std::size_t>(c)] != c) c = parent[static_cast<std::size_t>(c)];
    return c;
  };
  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  std::vector<int> label_of_root(static_cast<std::size_t>(2 * n - 1), -1);
  int next = 0;
  for (int leaf = 0; leaf < n; ++leaf) {
    auto& l = label_of_root[static_cast<std::size_t>(root(leaf))];
    if (l < 0) l = next++;
    labels[static_cast<std::size_t>(leaf)] = l;
  }
  return labels;
}

ChScore calinski_harabasz(const Eigen::MatrixXd& data, const std::vector<int>& labels, int k) {
  const Eigen::Index n = data.rows();
  if (static_cast<Eigen::Index>(labels.size()) != n) throw Error(Errc::length_mismatch, "labels do not match data");
  if (k < 2 || k >= n) throw Error(Errc::invalid_config, "CH needs 2 <= K <= n-1");

  const Eigen::RowVectorXd grand = data.colwise().mean();
  Eigen::MatrixXd centroid = Eigen::MatrixXd::Zero(k, data.cols());
  std::vector<double> count(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    centroid.row(l) += data.row(i);
    count[static_cast<std::size_t>(l)] += 1.0;
  }
  for (int l = 0; l < k; ++l) centroid.row(l) /= count[static_cast<std::size_t>(l)];

  ChScore s;
  for (int l = 0; l < k; ++l) s.between += count[static_cast<std::size_t>(l)] * (centroid.row(l) - grand).squaredNorm();
  for (Eigen::Index i = 0; i < n; ++i)
    s.within += (data.row(i) - centroid.row(labels[static_cast<std::size_t>(i)])).squaredNorm();
  const double num = s.between / (k - 1);
  const double den = s.within / static_cast<double>(n - k);
  s.ch = den > 0.0 ? num / den : std::numeric_limits<double>::infinity();
  return s;
}

ClusterAssignment select_k_ch(const Dendrogram& dg, const Eigen::MatrixXd& data, int k_min, int k_max) {
  const int n = dg.n;
  if (k_min < 2 || k_max < k_min || k_max > n - 1)
    throw Error(Errc::invalid_config, "k range must satisfy 2 <= k_min <= k_max <= n-1");

  ClusterAssignment best;
  bool all_zero = true;
  for (int k = k_min; k <= k_max; ++k) {
    auto labels = cut_dendrogram(dg, k);
    const auto score = calinski_harabasz(data, labels, k);
    if (score.within > 0.0 || score.between > 0.0) all_zero = false;
    best.scores.push_back(score.ch);
    if (best.k == 0 || score.ch > best.ch_score) {
      best.k = k;
      best.ch_score = score.ch;
      best.labels = std::move(labels);
    }
  }
  if (all_zero) {
    best.k = k_min;
    best.labels = cut_dendrogram(dg, k_min);
    best.ch_score = std::numeric_limits<double>::infinity();
    best.degenerate = true;
  }
  return best;
}

PredictorResponseSplit split_predictor_response(const DistanceMatrix& dm, double q) {
  const auto n = dm.size();
  if (n < 3) throw Error(Errc::too_few_series, "predictor/response split needs at least 3 series");
  if (!(q > 0.0 && q < 1.0)) throw Error(Errc::invalid_config, "response fraction must lie in (0, 1)");

  PredictorResponseSplit out;
  out.mean_distance.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.mean_distance[i] = dm.d.row(static_cast<Eigen::Index>(i)).sum() / static_cast<double>(n - 1);

  std::vector<std::size_t> rank(n);
  std::iota(rank.begin(), rank.end(), std::size_t{0});
  std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    if (out.mean_distance[a] != out.mean_distance[b]) return out.mean_distance[a] < out.mean_distance[b];
    return dm.ids[a] < dm.ids[b];
  });

  auto n_resp = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
  n_resp = std::clamp<std::size_t>(n_resp, 1, n - 1);
  for (std::size_t r = 0; r < n; ++r)
    (r + n_resp >= n ? out.responses : out.predictors).push_back(dm.ids[rank[r]]);
  std::sort(out.predictors.begin(), out.predictors.end());
  std::sort(out.responses.begin(), out.responses.end());
  return out;
}

SimilarityMatrix similarity_matrix(const DistanceMatrix& dm, const std::vector<int>& order) {
  const auto n = dm.size();
  std::vector<bool> seen(n, false);
  if (order.size() != n) throw Error(Errc::bad_permutation, "order length differs from matrix size");
  for (int o : order) {
    if (o < 0 || static_cast<std::size_t>(o) >= n || seen[static_cast<std::size_t>(o)])
      throw Error(Errc::bad_permutation, "order is not a permutation");
    seen[static_cast<std::size_t>(o)] = true;
  }
  const double dmax = n ? dm.d.maxCoeff() : 0.0;
  SimilarityMatrix sm;
  sm.s.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    sm.ids.push_back(dm.ids[static_cast<std::size_t>(order[i])]);
    for (std::size_t j = 0; j < n; ++j) {
      const double d = dm.d(order[i], order[j]);
      sm.s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dmax > 0.0 ? 1.0 - d / dmax : 1.0;
    }
  }
  return sm;
}

void write_heatmap_csv(const SimilarityMatrix& sm, std::ostream& out) {
  out << "child_id";
  for (const auto& id : sm.ids) out << ',' << id;
  out << '\n';
  char buf[32];
  for (Eigen::Index i = 0; i < sm.s.rows(); ++i) {
    out << sm.ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < sm.s.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.10g", sm.s(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

namespace {

// High similarity is dark blue, low similarity light yellow.
std::string ramp_color(double s) {
  s = std::clamp(s, 0.0, 1.0);
  constexpr double lo[3] = {255, 255, 204};
  constexpr double hi[3] = {8, 48, 107};
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround(lo[0] + s * (hi[0] - lo[0]))),
                static_cast<int>(std::lround(lo[1] + s * (hi[1] - lo[1]))),
                static_cast<int>(std::lround(lo[2] + s * (hi[2] - lo[2]))));
  return buf;
}

std::string xml_escape(const std::string& s) {
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

}  // namespace

void write_heatmap_svg(const SimilarityMatrix& sm, std::ostream& out, const std::string& title) {
  constexpr double kSize = 1024.0;
  constexpr double kMargin = 64.0;
  const auto n = static_cast<double>(sm.ids.size());
  const double cell = n > 0 ? (kSize - 2 * kMargin) / n : 0.0;
  char buf[256];
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1024\" height=\"1024\" viewBox=\"0 0 1024 1024\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"1024\" height=\"1024\" fill=\"#ffffff\"/>\n";
  if (!title.empty())
    out << "<text x=\"512\" y=\"36\" font-family=\"sans-serif\" font-size=\"22\" text-anchor=\"middle\">"
        << xml_escape(title) << "</text>\n";
  for (Eigen::Index i = 0; i < sm.s.rows(); ++i) {
    for (Eigen::Index j = 0; j < sm.s.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "<rect x=\"%.3f\" y=\"%.3f\" width=\"%.3f\" height=\"%.3f\" fill=\"%s\"/>\n",
                    kMargin + static_cast<double>(j) * cell, kMargin + static_cast<double>(i) * cell, cell, cell,
                    ramp_color(sm.s(i, j)).c_str());
      out << buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.3f\" y=\"%.3f\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">",
                  kMargin - 4, kMargin + (static_cast<double>(i) + 0.5) * cell + 4);
    out << buf << xml_escape(sm.ids[static_cast<std::size_t>(i)]) << "</text>\n";
  }
  out << "</svg>\n";
}

SimilarityMatrix similarity_heatmap(const DistanceMatrix& dm, const std::vector<int>& order,
                                    const std::filesystem::path& base, const std::string& title) {
  auto sm = similarity_matrix(dm, order);
  auto csv_path = base;
  csv_path += ".csv";
  auto svg_path = base;
  svg_path += ".svg";
  std::ofstream csv(csv_path, std::ios::binary);
  std::ofstream svg(svg_path, std::ios::binary);
  if (!csv || !svg) throw Error(Errc::io_error, "cannot write heatmap " + base.string());
  write_heatmap_csv(sm, csv);
  write_heatmap_svg(sm, svg, title);
  return sm;
}

}  // namespace waitcast
