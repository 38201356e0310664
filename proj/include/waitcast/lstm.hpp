#pragma once

#include "waitcast/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace waitcast {

/// Gate weights act on the concatenation [h_prev, x]; each W_* is
/// hidden x (hidden + input).
struct LstmLayer {
  Eigen::MatrixXd Wf, Wi, Wc, Wo;
  Eigen::VectorXd bf, bi, bc, bo;

  int hidden() const noexcept { return static_cast<int>(bf.size()); }
  int input() const noexcept { return static_cast<int>(Wf.cols()) - hidden(); }
};

struct NamedTensor {
  std::string name;
  std::span<double> values;
  int rows;
  int cols;
};

struct LstmParams {
  std::vector<LstmLayer> layers;
  Eigen::VectorXd head_w;  // dense head on the last layer's final hidden state
  Eigen::VectorXd head_b;  // size 1

  /// Views over every parameter block in a fixed order (layer-major, then head).
  std::vector<NamedTensor> tensors();
  std::size_t parameter_count() const;
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& flat);
  /// Same shapes, all zeros.
  LstmParams zeros_like() const;
};

struct LstmConfig {
  int hidden_size = 32;
  int layers = 4;
  double dropout_rate = 0.2;
  int window = 4;
  int epochs = 200;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;
  double init_scale = 0.08;
  double forget_bias = 1.0;

  void validate() const;
};

/// U(-init_scale, init_scale) weights, zero biases except the forget gate.
LstmParams init_params(const LstmConfig& cfg, int input_size);

struct CellState {
  Eigen::VectorXd h, c;
  Eigen::VectorXd f, i, g, o;  // gate activations and candidate
};

/// f = s(Wf[h,x]+bf), i = s(Wi[h,x]+bi), g = tanh(Wc[h,x]+bc),
/// o = s(Wo[h,x]+bo), c = f*c_prev + i*g, h = o*tanh(c).
CellState lstm_cell_forward(const Eigen::VectorXd& x, const Eigen::VectorXd& h_prev, const Eigen::VectorXd& c_prev,
                            const LstmLayer& layer);

enum class Mode { train, eval };

/// Rows of `sequence` are time steps. In train mode an inverted dropout
/// mask (scale 1/(1-rate)) follows every layer, including the last one
/// before the head; eval mode draws nothing from `rng`.
double lstm_forward(const Eigen::MatrixXd& sequence, const LstmParams& params, const LstmConfig& cfg, Mode mode,
                    Rng* rng = nullptr);

struct SequenceSample {
  Eigen::MatrixXd inputs;  // window x features
  double target = 0.0;
};

/// Windows of `window` consecutive steps of [features, target] predicting
/// the target at the next step, for targets t in [first_target, end_target).
std::vector<SequenceSample> make_windows(const Eigen::MatrixXd& features, const Eigen::VectorXd& target, int window,
                                         Eigen::Index first_target, Eigen::Index end_target);

/// Mean squared error over the samples and its gradient by backpropagation
/// through time. With a non-null rng the forward passes run in train mode.
double loss_and_gradient(const LstmParams& params, const std::vector<SequenceSample>& samples, const LstmConfig& cfg,
                         LstmParams& grad, Rng* dropout_rng = nullptr);
double batch_loss(const LstmParams& params, const std::vector<SequenceSample>& samples, const LstmConfig& cfg);

/// Scales `grad` in place so its global norm is at most max_norm; returns
/// the norm before clipping.
double clip_gradient(LstmParams& grad, double max_norm);

struct LstmTrainResult {
  LstmParams params;
  std::vector<double> loss_curve;  // training loss at the start of each epoch
};

/// Full-batch Adam (0.9, 0.999, 1e-8) with global-norm clipping.
LstmTrainResult lstm_train(const std::vector<SequenceSample>& samples, const LstmConfig& cfg);

struct GradientCheck {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// Central differences on up to `count` randomly chosen parameters (all of
/// them when fewer exist) against the analytic gradient; dropout is off.
/// relative error = |a - n| / max(|a|, |n|, 1e-8).
GradientCheck gradient_check(const LstmParams& params, const std::vector<SequenceSample>& samples,
                             const LstmConfig& cfg, double eps = 1e-5, std::size_t count = 200,
                             std::uint64_t seed = 1, bool head_only = false);

/// Central-difference derivative of the batch loss in one flat parameter.
double numeric_gradient(const LstmParams& params, const std::vector<SequenceSample>& samples, const LstmConfig& cfg,
                        std::size_t flat_index, double eps);

void dump_params(LstmParams& params, std::ostream& out);
void write_loss_curve(const std::vector<double>& curve, std::ostream& out);

}  // namespace waitcast
