#include "waitcast/lstm.hpp"

#include "waitcast/error.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace waitcast {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

template <typename Params, typename Fn>
void for_each_block(Params& p, Fn&& fn) {
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    auto& L = p.layers[l];
    const auto pre = "layer" + std::to_string(l) + ".";
    fn(pre + "W_f", L.Wf);
    fn(pre + "W_i", L.Wi);
    fn(pre + "W_C", L.Wc);
    fn(pre + "W_o", L.Wo);
    fn(pre + "b_f", L.bf);
    fn(pre + "b_i", L.bi);
    fn(pre + "b_C", L.bc);
    fn(pre + "b_o", L.bo);
  }
  fn(std::string("head.w"), p.head_w);
  fn(std::string("head.b"), p.head_b);
}

VectorXd sigmoid(const VectorXd& a) { return (1.0 + (-a.array()).exp()).inverse().matrix(); }

}  // namespace

std::vector<NamedTensor> LstmParams::tensors() {
  std::vector<NamedTensor> out;
  for_each_block(*this, [&](const std::string& name, auto& block) {
    out.push_back({name, std::span<double>(block.data(), static_cast<std::size_t>(block.size())),
                   static_cast<int>(block.rows()), static_cast<int>(block.cols())});
  });
  return out;
}

std::size_t LstmParams::parameter_count() const {
  std::size_t n = 0;
  for_each_block(*this, [&](const std::string&, const auto& block) { n += static_cast<std::size_t>(block.size()); });
  return n;
}

VectorXd LstmParams::flatten() const {
  VectorXd flat(static_cast<Index>(parameter_count()));
  Index at = 0;
  for_each_block(*this, [&](const std::string&, const auto& block) {
    flat.segment(at, block.size()) = Eigen::Map<const VectorXd>(block.data(), block.size());
    at += block.size();
  });
  return flat;
}

void LstmParams::assign(const VectorXd& flat) {
  if (static_cast<std::size_t>(flat.size()) != parameter_count())
    throw Error(Errc::shape_mismatch, "flat parameter vector has the wrong length");
  Index at = 0;
  for_each_block(*this, [&](const std::string&, auto& block) {
    Eigen::Map<VectorXd>(block.data(), block.size()) = flat.segment(at, block.size());
    at += block.size();
  });
}

LstmParams LstmParams::zeros_like() const {
  LstmParams z = *this;
  for_each_block(z, [](const std::string&, auto& block) { block.setZero(); });
  return z;
}

void LstmConfig::validate() const {
  if (hidden_size < 1) throw Error(Errc::invalid_config, "hidden_size must be >= 1");
  if (layers < 1) throw Error(Errc::invalid_config, "layers must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error(Errc::invalid_config, "dropout_rate must lie in [0, 1)");
  if (window < 1) throw Error(Errc::invalid_config, "window must be >= 1");
  if (epochs < 0) throw Error(Errc::invalid_config, "epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw Error(Errc::invalid_config, "learning_rate must be > 0");
  if (!(clip_norm > 0.0)) throw Error(Errc::invalid_config, "clip_norm must be > 0");
}

LstmParams init_params(const LstmConfig& cfg, int input_size) {
  cfg.validate();
  if (input_size < 1) throw Error(Errc::shape_mismatch, "input width must be >= 1");
  auto rng = Rng::substream(cfg.seed, {0x696e6974u});
  const int H = cfg.hidden_size;
  auto uniform = [&](Index rows, Index cols) {
    MatrixXd m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-cfg.init_scale, cfg.init_scale);
    return m;
  };
  LstmParams p;
  for (int l = 0; l < cfg.layers; ++l) {
    const int in = l == 0 ? input_size : H;
    LstmLayer L;
    L.Wf = uniform(H, H + in);
    L.Wi = uniform(H, H + in);
    L.Wc = uniform(H, H + in);
    L.Wo = uniform(H, H + in);
    L.bf = VectorXd::Constant(H, cfg.forget_bias);
    L.bi = VectorXd::Zero(H);
    L.bc = VectorXd::Zero(H);
    L.bo = VectorXd::Zero(H);
    p.layers.push_back(std::move(L));
  }
  p.head_w = uniform(H, 1);
  p.head_b = VectorXd::Zero(1);
  return p;
}

CellState lstm_cell_forward(const VectorXd& x, const VectorXd& h_prev, const VectorXd& c_prev, const LstmLayer& layer) {
  const int H = layer.hidden();
  if (h_prev.size() != H || c_prev.size() != H || x.size() != layer.input())
    throw Error(Errc::shape_mismatch, "cell expects hidden " + std::to_string(H) + " and input " +
                                          std::to_string(layer.input()));
  VectorXd z(H + x.size());
  z << h_prev, x;
  CellState s;
  s.f = sigmoid(layer.Wf * z + layer.bf);
  s.i = sigmoid(layer.Wi * z + layer.bi);
  s.g = (layer.Wc * z + layer.bc).array().tanh().matrix();
  s.o = sigmoid(layer.Wo * z + layer.bo);
  s.c = s.f.cwiseProduct(c_prev) + s.i.cwiseProduct(s.g);
  s.h = s.o.cwiseProduct(s.c.array().tanh().matrix());
  // Saturated gates round to exactly 0 or 1 in double precision.
  assert((s.f.array() >= 0.0).all() && (s.f.array() <= 1.0).all());
  assert((s.i.array() >= 0.0).all() && (s.i.array() <= 1.0).all());
  assert((s.o.array() >= 0.0).all() && (s.o.array() <= 1.0).all());
  assert((s.g.array() >= -1.0).all() && (s.g.array() <= 1.0).all());
  return s;
}

namespace {

struct StepCache {
  VectorXd x, h_prev, c_prev;
  CellState cell;
};

struct ForwardCache {
  std::vector<std::vector<StepCache>> steps;  // [layer][t]
  std::vector<std::vector<VectorXd>> masks;   // [layer][t], empty when no dropout
  VectorXd head_in;
  double prediction = 0.0;
};

double forward(const MatrixXd& sequence, const LstmParams& p, const LstmConfig& cfg, Mode mode, Rng* rng,
               ForwardCache* cache) {
  const auto T = static_cast<std::size_t>(sequence.rows());
  const auto L = p.layers.size();
  if (T == 0) throw Error(Errc::shape_mismatch, "empty input sequence");
  if (L == 0) throw Error(Errc::shape_mismatch, "no LSTM layers");
  const bool drop = mode == Mode::train && cfg.dropout_rate > 0.0;
  if (drop && rng == nullptr) throw Error(Errc::invalid_config, "train-mode dropout needs an rng");
  const double keep = 1.0 - cfg.dropout_rate;

  if (cache) {
    cache->steps.assign(L, {});
    cache->masks.assign(L, {});
  }
  std::vector<VectorXd> xs(T);
  for (std::size_t t = 0; t < T; ++t) xs[t] = sequence.row(static_cast<Index>(t)).transpose();

  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = p.layers[l];
    const int H = layer.hidden();
    VectorXd h = VectorXd::Zero(H), c = VectorXd::Zero(H);
    std::vector<VectorXd> outs(T);
    if (cache) cache->steps[l].resize(T);
    for (std::size_t t = 0; t < T; ++t) {
      auto cell = lstm_cell_forward(xs[t], h, c, layer);
      if (cache) {
        auto& sc = cache->steps[l][t];
        sc.x = xs[t];
        sc.h_prev = h;
        sc.c_prev = c;
      }
      h = cell.h;
      c = cell.c;
      outs[t] = h;
      if (cache) cache->steps[l][t].cell = std::move(cell);
    }
    if (drop) {
      // Only the final step of the last layer reaches the head.
      const std::size_t first = l + 1 == L ? T - 1 : 0;
      std::vector<VectorXd> masks(T);
      for (std::size_t t = first; t < T; ++t) {
        masks[t].resize(H);
        for (int j = 0; j < H; ++j) masks[t](j) = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
        outs[t] = outs[t].cwiseProduct(masks[t]);
      }
      if (cache) cache->masks[l] = std::move(masks);
    }
    xs = std::move(outs);
  }

  const VectorXd& top = xs[T - 1];
  if (top.size() != p.head_w.size()) throw Error(Errc::shape_mismatch, "head width differs from hidden size");
  const double pred = p.head_w.dot(top) + p.head_b(0);
  if (cache) {
    cache->head_in = top;
    cache->prediction = pred;
  }
  return pred;
}

// Accumulates d(loss)/d(params) for one sample into `grad`, given dL/dpred.
void backward(const LstmParams& p, const ForwardCache& cache, double dpred, LstmParams& grad) {
  const std::size_t L = p.layers.size();
  const std::size_t T = cache.steps.front().size();
  grad.head_w += dpred * cache.head_in;
  grad.head_b(0) += dpred;

  std::vector<VectorXd> dh_out(T);
  for (auto& v : dh_out) v = VectorXd::Zero(p.layers.back().hidden());
  dh_out[T - 1] = dpred * p.head_w;
  if (!cache.masks[L - 1].empty()) dh_out[T - 1] = dh_out[T - 1].cwiseProduct(cache.masks[L - 1][T - 1]);

  for (std::size_t li = L; li-- > 0;) {
    const auto& layer = p.layers[li];
    auto& g = grad.layers[li];
    const int H = layer.hidden();
    VectorXd dh_next = VectorXd::Zero(H), dc_next = VectorXd::Zero(H);
    std::vector<VectorXd> dx(T);
    for (std::size_t t = T; t-- > 0;) {
      const auto& sc = cache.steps[li][t];
      const auto& s = sc.cell;
      const VectorXd dh = dh_out[t] + dh_next;
      const VectorXd tanh_c = s.c.array().tanh().matrix();
      const VectorXd d_o = dh.cwiseProduct(tanh_c);
      const VectorXd dc = dc_next + dh.cwiseProduct(s.o).cwiseProduct((1.0 - tanh_c.array().square()).matrix());
      const VectorXd a_f = (dc.cwiseProduct(sc.c_prev)).cwiseProduct((s.f.array() * (1.0 - s.f.array())).matrix());
      const VectorXd a_i = (dc.cwiseProduct(s.g)).cwiseProduct((s.i.array() * (1.0 - s.i.array())).matrix());
      const VectorXd a_g = (dc.cwiseProduct(s.i)).cwiseProduct((1.0 - s.g.array().square()).matrix());
      const VectorXd a_o = d_o.cwiseProduct((s.o.array() * (1.0 - s.o.array())).matrix());

      VectorXd z(H + sc.x.size());
      z << sc.h_prev, sc.x;
      g.Wf.noalias() += a_f * z.transpose();
      g.Wi.noalias() += a_i * z.transpose();
      g.Wc.noalias() += a_g * z.transpose();
      g.Wo.noalias() += a_o * z.transpose();
      g.bf += a_f;
      g.bi += a_i;
      g.bc += a_g;
      g.bo += a_o;

      VectorXd dz = layer.Wf.transpose() * a_f;
      dz.noalias() += layer.Wi.transpose() * a_i;
      dz.noalias() += layer.Wc.transpose() * a_g;
      dz.noalias() += layer.Wo.transpose() * a_o;
      dh_next = dz.head(H);
      dx[t] = dz.tail(sc.x.size());
      dc_next = dc.cwiseProduct(s.f);
    }
    if (li == 0) break;
    const auto& below_masks = cache.masks[li - 1];
    for (std::size_t t = 0; t < T; ++t) dh_out[t] = below_masks.empty() ? dx[t] : dx[t].cwiseProduct(below_masks[t]);
  }
}

}  // namespace

double lstm_forward(const MatrixXd& sequence, const LstmParams& params, const LstmConfig& cfg, Mode mode, Rng* rng) {
  if (sequence.rows() != cfg.window)
    throw Error(Errc::shape_mismatch, "sequence length " + std::to_string(sequence.rows()) + " differs from window " +
                                          std::to_string(cfg.window));
  return forward(sequence, params, cfg, mode, rng, nullptr);
}

std::vector<SequenceSample> make_windows(const MatrixXd& features, const VectorXd& target, int window,
                                         Index first_target, Index end_target) {
  if (features.rows() != target.size()) throw Error(Errc::dimension_mismatch, "features and target lengths differ");
  if (window < 1) throw Error(Errc::invalid_config, "window must be >= 1");
  first_target = std::max<Index>(first_target, window);
  end_target = std::min<Index>(end_target, target.size());
  std::vector<SequenceSample> out;
  for (Index t = first_target; t < end_target; ++t) {
    SequenceSample s;
    s.inputs.resize(window, features.cols() + 1);
    for (int k = 0; k < window; ++k) {
      const Index src = t - window + k;
      s.inputs.row(k).head(features.cols()) = features.row(src);
      s.inputs(k, features.cols()) = target(src);
    }
    s.target = target(t);
    out.push_back(std::move(s));
  }
  return out;
}

double loss_and_gradient(const LstmParams& params, const std::vector<SequenceSample>& samples, const LstmConfig& cfg,
                         LstmParams& grad, Rng* dropout_rng) {
  if (samples.empty()) throw Error(Errc::empty_input, "no training samples");
  grad = params.zeros_like();
  const double n = static_cast<double>(samples.size());
  const Mode mode = dropout_rng ? Mode::train : Mode::eval;
  double loss = 0.0;
  ForwardCache cache;
  for (const auto& s : samples) {
    const double pred = forward(s.inputs, params, cfg, mode, dropout_rng, &cache);
    const double err = pred - s.target;
    loss += err * err / n;
    backward(params, cache, 2.0 * err / n, grad);
  }
  return loss;
}

double batch_loss(const LstmParams& params, const std::vector<SequenceSample>& samples, const LstmConfig& cfg) {
  if (samples.empty()) throw Error(Errc::empty_input, "no samples");
  double loss = 0.0;
  for (const auto& s : samples) {
    const double err = forward(s.inputs, params, cfg, Mode::eval, nullptr, nullptr) - s.target;
    loss += err * err;
  }
  return loss / static_cast<double>(samples.size());
}

double clip_gradient(LstmParams& grad, double max_norm) {
  VectorXd flat = grad.flatten();
  const double norm = flat.norm();
  if (norm > max_norm) {
    flat *= max_norm / norm;
    grad.assign(flat);
  }
  return norm;
}

LstmTrainResult lstm_train(const std::vector<SequenceSample>& samples, const LstmConfig& cfg) {
  cfg.validate();
  if (samples.size() < 2) throw Error(Errc::too_few_samples, "LSTM training needs at least 2 windows");
  LstmTrainResult r;
  r.params = init_params(cfg, static_cast<int>(samples.front().inputs.cols()));

  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  const auto size = static_cast<Index>(r.params.parameter_count());
  VectorXd m1 = VectorXd::Zero(size), m2 = VectorXd::Zero(size);
  LstmParams grad;
  double b1t = 1.0, b2t = 1.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto rng = Rng::substream(cfg.seed, {0x64726f70u, static_cast<std::uint64_t>(epoch)});
    const double loss = loss_and_gradient(r.params, samples, cfg, grad, cfg.dropout_rate > 0.0 ? &rng : nullptr);
    if (!std::isfinite(loss))
      throw Error(Errc::non_finite_loss, "LSTM loss became non-finite at epoch " + std::to_string(epoch));
    r.loss_curve.push_back(loss);
    clip_gradient(grad, cfg.clip_norm);

    const VectorXd g = grad.flatten();
    VectorXd theta = r.params.flatten();
    b1t *= beta1;
    b2t *= beta2;
    m1 = beta1 * m1 + (1.0 - beta1) * g;
    m2 = beta2 * m2 + (1.0 - beta2) * g.cwiseProduct(g);
    const VectorXd mhat = m1 / (1.0 - b1t);
    const VectorXd vhat = m2 / (1.0 - b2t);
    theta.array() -= cfg.learning_rate * mhat.array() / (vhat.array().sqrt() + adam_eps);
    r.params.assign(theta);
  }
  return r;
}

namespace {

using MatrixXe = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
using VectorXe = Eigen::Matrix<long double, Eigen::Dynamic, 1>;

struct LayerE {
  MatrixXe Wf, Wi, Wc, Wo;
  VectorXe bf, bi, bc, bo;
};

VectorXe sigmoid_e(const VectorXe& a) { return (1.0L + (-a.array()).exp()).inverse().matrix(); }

// Eval-mode loss in extended precision, so central differences at small eps
// are not swamped by double rounding.
long double batch_loss_extended(const LstmParams& p, const std::vector<SequenceSample>& samples) {
  std::vector<LayerE> layers;
  for (const auto& L : p.layers)
    layers.push_back({L.Wf.cast<long double>(), L.Wi.cast<long double>(), L.Wc.cast<long double>(),
                      L.Wo.cast<long double>(), L.bf.cast<long double>(), L.bi.cast<long double>(),
                      L.bc.cast<long double>(), L.bo.cast<long double>()});
  const VectorXe head_w = p.head_w.cast<long double>();
  const long double head_b = p.head_b(0);
  long double loss = 0.0L;
  for (const auto& s : samples) {
    const auto T = s.inputs.rows();
    std::vector<VectorXe> xs(static_cast<std::size_t>(T));
    for (Index t = 0; t < T; ++t) xs[static_cast<std::size_t>(t)] = s.inputs.row(t).transpose().cast<long double>();
    for (const auto& L : layers) {
      const auto H = L.bf.size();
      VectorXe h = VectorXe::Zero(H), c = VectorXe::Zero(H);
      for (auto& x : xs) {
        VectorXe z(H + x.size());
        z << h, x;
        const VectorXe f = sigmoid_e(L.Wf * z + L.bf);
        const VectorXe i = sigmoid_e(L.Wi * z + L.bi);
        const VectorXe g = (L.Wc * z + L.bc).array().tanh().matrix();
        const VectorXe o = sigmoid_e(L.Wo * z + L.bo);
        c = f.cwiseProduct(c) + i.cwiseProduct(g);
        h = o.cwiseProduct(c.array().tanh().matrix());
        x = h;
      }
    }
    const long double err = head_w.dot(xs.back()) + head_b - static_cast<long double>(s.target);
    loss += err * err;
  }
  return loss / static_cast<long double>(samples.size());
}

}  // namespace

double numeric_gradient(const LstmParams& params, const std::vector<SequenceSample>& samples, const LstmConfig& cfg,
                        std::size_t flat_index, double eps) {
  (void)batch_loss(params, samples, cfg);  // shape and emptiness checks
  const VectorXd base = params.flatten();
  if (flat_index >= static_cast<std::size_t>(base.size()))
    throw Error(Errc::shape_mismatch, "parameter index out of range");
  const auto k = static_cast<Index>(flat_index);
  const double hi = base(k) + eps, lo = base(k) - eps;
  LstmParams probe = params;
  VectorXd shifted = base;
  shifted(k) = hi;
  probe.assign(shifted);
  const long double up = batch_loss_extended(probe, samples);
  shifted(k) = lo;
  probe.assign(shifted);
  const long double down = batch_loss_extended(probe, samples);
  return static_cast<double>((up - down) / (static_cast<long double>(hi) - static_cast<long double>(lo)));
}

GradientCheck gradient_check(const LstmParams& params, const std::vector<SequenceSample>& samples,
                             const LstmConfig& cfg, double eps, std::size_t count, std::uint64_t seed,
                             bool head_only) {
  LstmConfig nodrop = cfg;
  nodrop.dropout_rate = 0.0;
  LstmParams grad;
  loss_and_gradient(params, samples, nodrop, grad, nullptr);
  const VectorXd analytic = grad.flatten();

  std::vector<std::size_t> candidates;
  std::size_t at = 0;
  LstmParams shape = params;
  for (const auto& t : shape.tensors()) {
    const bool is_head = t.name.rfind("head.", 0) == 0;
    for (std::size_t k = 0; k < t.values.size(); ++k, ++at)
      if (!head_only || is_head) candidates.push_back(at);
  }
  if (candidates.size() > count) {
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(candidates));
    candidates.resize(count);
    std::sort(candidates.begin(), candidates.end());
  }

  GradientCheck out;
  for (auto idx : candidates) {
    const double a = analytic(static_cast<Index>(idx));
    const double num = numeric_gradient(params, samples, nodrop, idx, eps);
    const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), 1e-8});
    out.max_relative_error = std::max(out.max_relative_error, rel);
    ++out.checked;
  }
  return out;
}

void dump_params(LstmParams& params, std::ostream& out) {
  char buf[40];
  for (const auto& t : params.tensors()) {
    out << t.name << ' ' << t.rows << ' ' << t.cols << '\n';
    for (std::size_t k = 0; k < t.values.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", t.values[k]);
      out << (k ? " " : "") << buf;
    }
    out << '\n';
  }
}

void write_loss_curve(const std::vector<double>& curve, std::ostream& out) {
  out << "epoch,train_loss\n";
  char buf[40];
  for (std::size_t e = 0; e < curve.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%.17g", curve[e]);
    out << e << ',' << buf << '\n';
  }
}

}  // namespace waitcast
