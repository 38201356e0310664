#pragma once

#include "waitcast/data.hpp"
#include "waitcast/execution.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <string>
#include <vector>

namespace waitcast {

/// Pairwise Euclidean distances between series, with their ids.
struct DistanceMatrix {
  std::vector<std::string> ids;
  Eigen::MatrixXd d;

  std::size_t size() const noexcept { return ids.size(); }
};

/// Rows of `data` are points. OpenMP over rows; the serial path is the reference.
DistanceMatrix distance_matrix(const Eigen::MatrixXd& data, std::vector<std::string> ids,
                               Execution exec = Execution::parallel);
DistanceMatrix distance_matrix(const std::vector<BinnedSeries>& series, Execution exec = Execution::parallel);

/// One agglomeration step. Leaves are clusters 0..n-1; the i-th merge
/// creates cluster n+i. `a < b` always.
struct Merge {
  int a;
  int b;
  double cost;
  int id;
  int size;
};

struct Dendrogram {
  int n = 0;
  std::vector<Merge> merges;      // n - 1 entries, in merge order
  std::vector<int> leaf_order;    // in-order traversal, left = smaller id
  std::vector<std::string> leaf_ids;
};

/// Ward linkage. The merge cost is
///   delta(A, B) = n_A n_B / (n_A + n_B) * |m_A - m_B|^2,
/// initialised from the distance matrix (delta = d^2 / 2 between leaves)
/// and updated with the Lance-Williams recurrence. Equal costs are broken
/// towards the lexicographically smallest (min id, max id) pair.
Dendrogram ward_agglomerate(const DistanceMatrix& dm, const Eigen::MatrixXd& data);

/// Cluster labels per leaf after applying the first n - k merges. Labels
/// are numbered by the smallest leaf index they contain.
std::vector<int> cut_dendrogram(const Dendrogram& dg, int k);

struct ChScore {
  double between = 0.0;  // B(K)
  double within = 0.0;   // W(K)
  double ch = 0.0;
};

/// Calinski-Harabasz index CH(K) = [B/(K-1)] / [W/(n-K)] for a labelling.
/// W = 0 gives +inf.
ChScore calinski_harabasz(const Eigen::MatrixXd& data, const std::vector<int>& labels, int k);

struct ClusterAssignment {
  int k = 0;
  std::vector<int> labels;          // aligned with the dendrogram leaves
  double ch_score = 0.0;
  bool degenerate = false;          // all points identical: W = 0 everywhere
  std::vector<double> scores;       // CH for k_min..k_max
};

/// Argmax of CH over [k_min, k_max]; ties go to the smaller k.
ClusterAssignment select_k_ch(const Dendrogram& dg, const Eigen::MatrixXd& data, int k_min, int k_max);

struct PredictorResponseSplit {
  std::vector<std::string> predictors;  // id order
  std::vector<std::string> responses;   // id order
  std::vector<double> mean_distance;    // aligned with dm.ids
};

/// Children are ranked by mean distance to all others; the top ceil(q n)
/// (ties broken towards larger ids) form the response set.
PredictorResponseSplit split_predictor_response(const DistanceMatrix& dm, double q);

/// s = 1 - d / max(d) reordered so that entry (i, j) is s[order[i]][order[j]].
/// max(d) = 0 gives all ones.
struct SimilarityMatrix {
  std::vector<std::string> ids;
  Eigen::MatrixXd s;
};

SimilarityMatrix similarity_matrix(const DistanceMatrix& dm, const std::vector<int>& order);

void write_heatmap_csv(const SimilarityMatrix& sm, std::ostream& out);
void write_heatmap_svg(const SimilarityMatrix& sm, std::ostream& out, const std::string& title = "");

/// Writes `<base>.csv` and `<base>.svg`.
SimilarityMatrix similarity_heatmap(const DistanceMatrix& dm, const std::vector<int>& order,
                                    const std::filesystem::path& base, const std::string& title = "");

}  // namespace waitcast
