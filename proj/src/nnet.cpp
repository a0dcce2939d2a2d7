#include "wsipipe/nnet.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "wsipipe/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wsipipe {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using MapRowC = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;
using MapVecC = Eigen::Map<const Eigen::VectorXd>;

struct ImageTrace {
  std::vector<double> input;
  std::vector<double> stem_a;
  std::vector<std::vector<double>> block_a1;
  std::vector<std::vector<double>> block_out;
  std::vector<double> gap;
  std::vector<double> mask1;  // scaled keep mask; empty in infer mode
  std::vector<double> cat;
  std::vector<double> fc1_a;
  std::vector<double> mask2;
  std::vector<double> fc1_h;
  double logit = 0.0;
};

ForwardTrace::ForwardTrace() = default;
ForwardTrace::~ForwardTrace() = default;
ForwardTrace::ForwardTrace(ForwardTrace&&) noexcept = default;
ForwardTrace& ForwardTrace::operator=(ForwardTrace&&) noexcept = default;

NetConfig NetConfig::clinical() {
  NetConfig cfg;
  cfg.stem_width = 64;
  cfg.stages = {{64, 2, 2}, {128, 2, 2}, {256, 2, 2}, {512, 2, 2}};
  return cfg;
}

NetConfig NetConfig::tiny() {
  NetConfig cfg;
  cfg.input_size = 8;
  cfg.stem_width = 4;
  cfg.stages = {{4, 2, 2}, {8, 2, 2}};
  cfg.hidden = 16;
  return cfg;
}

Sample sample_from_tile(const ImageRGB& tile, const std::array<double, 9>& cov) {
  Sample s;
  const std::size_t hw = static_cast<std::size_t>(tile.width) * tile.height;
  s.image.resize(3 * hw);
  // Centered planar layout: 0 -> -1, 255 -> +1. Centering matters for a
  // normalization-free net trained from scratch; raw [0,1] stain imagery has
  // mean ~0.8, which badly conditions the early conv layers.
  for (std::size_t i = 0; i < hw; ++i)
    for (int c = 0; c < 3; ++c)
      s.image[c * hw + i] = tile.data[3 * i + c] / 127.5 - 1.0;
  s.covariates.assign(cov.begin(), cov.end());
  return s;
}

double bce_loss(const std::vector<double>& probs, const std::vector<double>& labels) {
  if (probs.size() != labels.size() || probs.empty())
    throw InvalidInput("bce_loss: batch size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], 1e-7, 1.0 - 1e-7);
    sum += -(labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
  }
  return sum / static_cast<double>(probs.size());
}

namespace {

int ceil_div(int a, int b) { return (a + b - 1) / b; }

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// Same-padding im2col: col is (in_ch*k*k) x (out_h*out_w), column-major.
void im2col(const double* in, int in_ch, int in_h, int in_w, int k, int stride,
            int pad_top, int pad_left, int out_h, int out_w, Eigen::MatrixXd& col) {
  const int rows = in_ch * k * k;
  col.resize(rows, out_h * out_w);
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox) {
      double* dst = col.data() +
                    static_cast<std::size_t>(oy * out_w + ox) * rows;
      for (int c = 0; c < in_ch; ++c) {
        const double* plane = in + static_cast<std::size_t>(c) * in_h * in_w;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad_top + ky;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad_left + kx;
            *dst++ = (iy >= 0 && iy < in_h && ix >= 0 && ix < in_w)
                         ? plane[static_cast<std::size_t>(iy) * in_w + ix]
                         : 0.0;
          }
        }
      }
    }
}

void col2im(const Eigen::MatrixXd& dcol, int in_ch, int in_h, int in_w, int k,
            int stride, int pad_top, int pad_left, int out_h, int out_w,
            double* d_in) {
  const int rows = in_ch * k * k;
  for (int oy = 0; oy < out_h; ++oy)
    for (int ox = 0; ox < out_w; ++ox) {
      const double* src = dcol.data() +
                          static_cast<std::size_t>(oy * out_w + ox) * rows;
      for (int c = 0; c < in_ch; ++c) {
        double* plane = d_in + static_cast<std::size_t>(c) * in_h * in_w;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad_top + ky;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad_left + kx;
            const double v = *src++;
            if (iy >= 0 && iy < in_h && ix >= 0 && ix < in_w)
              plane[static_cast<std::size_t>(iy) * in_w + ix] += v;
          }
        }
      }
    }
}

void relu_inplace(std::vector<double>& v) {
  for (double& x : v)
    if (x < 0.0) x = 0.0;
}

std::vector<double> dropout_mask(std::uint64_t seed, std::size_t n, double rate) {
  std::vector<double> mask(n, 1.0);
  if (rate <= 0.0) return mask;
  const double keep = 1.0 - rate;
  Rng rng(seed);
  for (double& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

}  // namespace

Network::Network(NetConfig cfg) : config_(std::move(cfg)) {
  if (config_.input_size < 1 || config_.in_channels < 1 || config_.hidden < 1)
    throw InvalidInput("NetConfig: invalid dimensions");
  if (config_.dropout_rate < 0.0 || config_.dropout_rate >= 1.0)
    throw InvalidInput("NetConfig: dropout_rate outside [0,1)");

  auto add_param = [this](const std::string& name, std::vector<int> shape) {
    Tensor t;
    t.name = name;
    t.shape = std::move(shape);
    param_meta_.push_back(std::move(t));
    return static_cast<int>(param_meta_.size() - 1);
  };
  auto make_conv = [&](const std::string& name, int in_ch, int out_ch, int k,
                       int stride, int in_h, int in_w) {
    ConvPlan cp;
    cp.name = name;
    cp.in_ch = in_ch;
    cp.out_ch = out_ch;
    cp.k = k;
    cp.stride = stride;
    cp.in_h = in_h;
    cp.in_w = in_w;
    cp.out_h = ceil_div(in_h, stride);
    cp.out_w = ceil_div(in_w, stride);
    const int pad_h = std::max((cp.out_h - 1) * stride + k - in_h, 0);
    const int pad_w = std::max((cp.out_w - 1) * stride + k - in_w, 0);
    cp.pad_top = pad_h / 2;
    cp.pad_left = pad_w / 2;
    cp.w_param = add_param(name + ".w", {out_ch, in_ch * k * k});
    cp.b_param = add_param(name + ".b", {out_ch});
    return cp;
  };

  int h = config_.input_size, w = config_.input_size;
  int ch = config_.in_channels;
  stem_ = make_conv("stem", ch, config_.stem_width, 3, config_.stem_stride, h, w);
  h = stem_.out_h;
  w = stem_.out_w;
  ch = config_.stem_width;
  for (std::size_t si = 0; si < config_.stages.size(); ++si) {
    const auto& stage = config_.stages[si];
    for (int bi = 0; bi < stage.blocks; ++bi) {
      const int stride = bi == 0 ? stage.stride : 1;
      const std::string base =
          "s" + std::to_string(si) + ".b" + std::to_string(bi);
      BlockPlan block;
      block.conv1 = make_conv(base + ".conv1", ch, stage.width, 3, stride, h, w);
      block.conv2 = make_conv(base + ".conv2", stage.width, stage.width, 3, 1,
                              block.conv1.out_h, block.conv1.out_w);
      if (stride != 1 || ch != stage.width)
        block.proj = make_conv(base + ".proj", ch, stage.width, 1, stride, h, w);
      h = block.conv1.out_h;
      w = block.conv1.out_w;
      ch = stage.width;
      blocks_.push_back(std::move(block));
    }
  }
  if (h < 1 || w < 1) throw InvalidInput("NetConfig: spatial map collapsed");
  if (h != w) throw InvalidInput("NetConfig: non-square final map");
  final_hw_ = h;
  fc1_w_ = add_param("fc1.w", {config_.hidden, ch + config_.covariate_dim});
  fc1_b_ = add_param("fc1.b", {config_.hidden});
  fc2_w_ = add_param("fc2.w", {1, config_.hidden});
  fc2_b_ = add_param("fc2.b", {1});
}

NetState Network::init_state(std::uint64_t seed) const {
  NetState s;
  s.config = config_;
  s.init_seed = seed;
  for (const Tensor& meta : param_meta_) {
    Tensor t = meta;
    std::size_t n = 1;
    for (int d : t.shape) n *= static_cast<std::size_t>(d);
    t.data.assign(n, 0.0);
    if (t.name.ends_with(".w")) {
      // He-normal on the fan-in (row length).
      const int fan_in = t.shape.back();
      const double stddev = std::sqrt(2.0 / fan_in);
      Rng rng(derive_seed(seed, "init." + t.name));
      for (double& v : t.data) v = rng.normal(0.0, stddev);
    }
    Tensor zeros = t;
    std::fill(zeros.data.begin(), zeros.data.end(), 0.0);
    s.adam_m.push_back(zeros);
    s.adam_v.push_back(zeros);
    s.params.push_back(std::move(t));
  }
  return s;
}

void Network::conv_forward(const ConvPlan& cp, const NetState& s, const double* in,
                           double* out) const {
  Eigen::MatrixXd col;
  im2col(in, cp.in_ch, cp.in_h, cp.in_w, cp.k, cp.stride, cp.pad_top,
         cp.pad_left, cp.out_h, cp.out_w, col);
  const int npos = cp.out_h * cp.out_w;
  MapRowC weight(s.params[cp.w_param].data.data(), cp.out_ch,
                 cp.in_ch * cp.k * cp.k);
  MapVecC bias(s.params[cp.b_param].data.data(), cp.out_ch);
  MapRow output(out, cp.out_ch, npos);
  output.noalias() = weight * col;
  output.colwise() += bias;
}

void Network::conv_backward(const ConvPlan& cp, const NetState& s, const double* in,
                            const double* d_out, double* d_in,
                            GradSet& grads) const {
  Eigen::MatrixXd col;
  im2col(in, cp.in_ch, cp.in_h, cp.in_w, cp.k, cp.stride, cp.pad_top,
         cp.pad_left, cp.out_h, cp.out_w, col);
  const int npos = cp.out_h * cp.out_w;
  const int rows = cp.in_ch * cp.k * cp.k;
  MapRowC grad_out(d_out, cp.out_ch, npos);
  MapRow d_weight(grads[cp.w_param].data(), cp.out_ch, rows);
  MapVec d_bias(grads[cp.b_param].data(), cp.out_ch);
  d_weight.noalias() += grad_out * col.transpose();
  d_bias += grad_out.rowwise().sum();
  if (d_in) {
    MapRowC weight(s.params[cp.w_param].data.data(), cp.out_ch, rows);
    Eigen::MatrixXd dcol(rows, npos);
    dcol.noalias() = weight.transpose() * grad_out;
    col2im(dcol, cp.in_ch, cp.in_h, cp.in_w, cp.k, cp.stride, cp.pad_top,
           cp.pad_left, cp.out_h, cp.out_w, d_in);
  }
}

void Network::forward_image(const NetState& s, const Sample& sample, RunMode mode,
                            std::uint64_t dropout_seed, std::size_t image_index,
                            ImageTrace& trace) const {
  const std::size_t in_len = static_cast<std::size_t>(config_.in_channels) *
                             config_.input_size * config_.input_size;
  if (sample.image.size() != in_len ||
      sample.covariates.size() != static_cast<std::size_t>(config_.covariate_dim))
    throw InvalidInput("forward: sample shape mismatch");

  trace.input = sample.image;
  trace.stem_a.assign(static_cast<std::size_t>(stem_.out_ch) * stem_.out_h *
                          stem_.out_w,
                      0.0);
  conv_forward(stem_, s, trace.input.data(), trace.stem_a.data());
  relu_inplace(trace.stem_a);

  trace.block_a1.resize(blocks_.size());
  trace.block_out.resize(blocks_.size());
  const std::vector<double>* a_in = &trace.stem_a;
  for (std::size_t bi = 0; bi < blocks_.size(); ++bi) {
    const BlockPlan& block = blocks_[bi];
    auto& a1 = trace.block_a1[bi];
    auto& out = trace.block_out[bi];
    a1.assign(static_cast<std::size_t>(block.conv1.out_ch) * block.conv1.out_h *
                  block.conv1.out_w,
              0.0);
    conv_forward(block.conv1, s, a_in->data(), a1.data());
    relu_inplace(a1);
    out.assign(a1.size(), 0.0);
    conv_forward(block.conv2, s, a1.data(), out.data());
    if (block.proj) {
      std::vector<double> shortcut(out.size(), 0.0);
      conv_forward(*block.proj, s, a_in->data(), shortcut.data());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += shortcut[i];
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += (*a_in)[i];
    }
    relu_inplace(out);
    a_in = &out;
  }

  const int feat = config_.feature_dim();
  const int npos = final_hw_ * final_hw_;
  trace.gap.assign(feat, 0.0);
  const std::vector<double>& final_map = *a_in;
  for (int c = 0; c < feat; ++c) {
    double sum = 0.0;
    for (int i = 0; i < npos; ++i)
      sum += final_map[static_cast<std::size_t>(c) * npos + i];
    trace.gap[c] = sum / npos;
  }

  const bool train = mode == RunMode::kTrain;
  const int cat_dim = feat + config_.covariate_dim;
  trace.cat.assign(cat_dim, 0.0);
  if (train) {
    trace.mask1 = dropout_mask(derive_seed(dropout_seed, "dropout1", image_index),
                               static_cast<std::size_t>(feat), config_.dropout_rate);
    for (int i = 0; i < feat; ++i) trace.cat[i] = trace.gap[i] * trace.mask1[i];
  } else {
    for (int i = 0; i < feat; ++i) trace.cat[i] = trace.gap[i];
  }
  for (int i = 0; i < config_.covariate_dim; ++i)
    trace.cat[feat + i] = sample.covariates[i];

  trace.fc1_a.assign(config_.hidden, 0.0);
  {
    MapRowC w1(s.params[fc1_w_].data.data(), config_.hidden, cat_dim);
    MapVecC b1(s.params[fc1_b_].data.data(), config_.hidden);
    MapVecC cat(trace.cat.data(), cat_dim);
    MapVec z(trace.fc1_a.data(), config_.hidden);
    z.noalias() = w1 * cat + b1;
  }
  relu_inplace(trace.fc1_a);

  if (train) {
    trace.mask2 = dropout_mask(derive_seed(dropout_seed, "dropout2", image_index),
                               static_cast<std::size_t>(config_.hidden),
                               config_.dropout_rate);
    trace.fc1_h.resize(config_.hidden);
    for (int i = 0; i < config_.hidden; ++i)
      trace.fc1_h[i] = trace.fc1_a[i] * trace.mask2[i];
  } else {
    trace.fc1_h = trace.fc1_a;
  }

  {
    MapVecC w2(s.params[fc2_w_].data.data(), config_.hidden);
    MapVecC h(trace.fc1_h.data(), config_.hidden);
    trace.logit = w2.dot(h) + s.params[fc2_b_].data[0];
  }
  if (!std::isfinite(trace.logit))
    throw NumericalError("forward: non-finite activation");
}

std::vector<double> Network::forward(const NetState& s,
                                     const std::vector<Sample>& batch,
                                     RunMode mode, std::uint64_t dropout_seed,
                                     ForwardTrace* trace) const {
  if (batch.empty()) throw InvalidInput("forward: empty batch");
  ForwardTrace local;
  ForwardTrace& t = trace ? *trace : local;
  t.mode = mode;
  t.dropout_seed = dropout_seed;
  t.images.clear();
  t.images.resize(batch.size());
  t.logits.assign(batch.size(), 0.0);
  t.probs.assign(batch.size(), 0.0);

  std::exception_ptr error;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(batch.size()); ++i) {
    try {
      forward_image(s, batch[i], mode, dropout_seed,
                    static_cast<std::size_t>(i), t.images[i]);
      t.logits[i] = t.images[i].logit;
      t.probs[i] = sigmoid(t.images[i].logit);
    } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  if (!trace) return std::move(local.probs);
  return t.probs;
}

void Network::backward_image(const NetState& s, const ForwardTrace& trace,
                             std::size_t image_index, double d_logit,
                             GradSet& grads) const {
  const ImageTrace& it = trace.images[image_index];
  const int feat = config_.feature_dim();
  const int cat_dim = feat + config_.covariate_dim;
  const int hidden = config_.hidden;

  // fc2
  grads[fc2_b_][0] += d_logit;
  std::vector<double> dh(hidden);
  for (int i = 0; i < hidden; ++i) {
    grads[fc2_w_][i] += d_logit * it.fc1_h[i];
    dh[i] = d_logit * s.params[fc2_w_].data[i];
  }
  // dropout2 + relu
  std::vector<double> dz1(hidden);
  for (int i = 0; i < hidden; ++i) {
    const double da = it.mask2.empty() ? dh[i] : dh[i] * it.mask2[i];
    dz1[i] = it.fc1_a[i] > 0.0 ? da : 0.0;
  }
  // fc1
  std::vector<double> dcat(cat_dim, 0.0);
  {
    MapRow dw1(grads[fc1_w_].data(), hidden, cat_dim);
    MapVec db1(grads[fc1_b_].data(), hidden);
    MapVecC cat(it.cat.data(), cat_dim);
    MapVecC dz1v(dz1.data(), hidden);
    dw1.noalias() += dz1v * cat.transpose();
    db1 += dz1v;
    MapRowC w1(s.params[fc1_w_].data.data(), hidden, cat_dim);
    MapVec dcatv(dcat.data(), cat_dim);
    dcatv.noalias() = w1.transpose() * dz1v;
  }
  // dropout1 + GAP
  const int npos = final_hw_ * final_hw_;
  std::vector<double> d_map(static_cast<std::size_t>(feat) * npos);
  for (int c = 0; c < feat; ++c) {
    const double dg = it.mask1.empty() ? dcat[c] : dcat[c] * it.mask1[c];
    const double per_pos = dg / npos;
    for (int i = 0; i < npos; ++i)
      d_map[static_cast<std::size_t>(c) * npos + i] = per_pos;
  }

  // Residual blocks, reversed.
  std::vector<double> d_out = std::move(d_map);
  for (int bi = static_cast<int>(blocks_.size()) - 1; bi >= 0; --bi) {
    const BlockPlan& block = blocks_[bi];
    const std::vector<double>& a_in =
        bi == 0 ? it.stem_a : it.block_out[bi - 1];
    const std::vector<double>& a1 = it.block_a1[bi];
    const std::vector<double>& out = it.block_out[bi];
    // ReLU at the block output.
    std::vector<double> dz_sum(d_out.size());
    for (std::size_t i = 0; i < d_out.size(); ++i)
      dz_sum[i] = out[i] > 0.0 ? d_out[i] : 0.0;
    // Main path: conv2 then conv1.
    std::vector<double> da1(a1.size(), 0.0);
    conv_backward(block.conv2, s, a1.data(), dz_sum.data(), da1.data(), grads);
    for (std::size_t i = 0; i < da1.size(); ++i)
      if (a1[i] <= 0.0) da1[i] = 0.0;
    std::vector<double> d_in(a_in.size(), 0.0);
    conv_backward(block.conv1, s, a_in.data(), da1.data(), d_in.data(), grads);
    // Shortcut path.
    if (block.proj) {
      conv_backward(*block.proj, s, a_in.data(), dz_sum.data(), d_in.data(),
                    grads);
    } else {
      for (std::size_t i = 0; i < d_in.size(); ++i) d_in[i] += dz_sum[i];
    }
    d_out = std::move(d_in);
  }

  // Stem.
  std::vector<double> dz_stem(d_out.size());
  for (std::size_t i = 0; i < d_out.size(); ++i)
    dz_stem[i] = it.stem_a[i] > 0.0 ? d_out[i] : 0.0;
  conv_backward(stem_, s, it.input.data(), dz_stem.data(), nullptr, grads);
}

GradSet Network::backward(const NetState& s, const ForwardTrace& trace,
                          const std::vector<double>& labels) const {
  if (labels.size() != trace.images.size() || labels.empty())
    throw InvalidInput("backward: trace/label batch mismatch");
  const std::size_t batch = labels.size();

  auto empty_grads = [this] {
    GradSet g(param_meta_.size());
    for (std::size_t i = 0; i < param_meta_.size(); ++i) {
      std::size_t n = 1;
      for (int d : param_meta_[i].shape) n *= static_cast<std::size_t>(d);
      g[i].assign(n, 0.0);
    }
    return g;
  };

  std::vector<GradSet> per_image(batch);
  std::exception_ptr error;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(batch); ++i) {
    try {
      per_image[i] = empty_grads();
      const double d_logit =
          (trace.probs[i] - labels[i]) / static_cast<double>(batch);
      backward_image(s, trace, static_cast<std::size_t>(i), d_logit,
                     per_image[i]);
    } catch (...) {
#ifdef _OPENMP
#pragma omp critical
#endif
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);

  // Fixed-order reduction keeps results independent of thread count.
  GradSet total = empty_grads();
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t p = 0; p < total.size(); ++p)
      for (std::size_t j = 0; j < total[p].size(); ++j)
        total[p][j] += per_image[i][p][j];
  return total;
}

void Network::adam_step(NetState& s, const GradSet& grads, double lr,
                        double beta1, double beta2, double epsilon) const {
  if (grads.size() != s.params.size())
    throw InvalidInput("adam_step: gradient structure mismatch");
  for (std::size_t p = 0; p < grads.size(); ++p) {
    if (grads[p].size() != s.params[p].data.size())
      throw InvalidInput("adam_step: gradient shape mismatch");
    for (double g : grads[p])
      if (!std::isfinite(g)) throw NumericalError("adam_step: non-finite gradient");
  }
  const std::int64_t t = s.step + 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t p = 0; p < grads.size(); ++p) {
    auto& theta = s.params[p].data;
    auto& m = s.adam_m[p].data;
    auto& v = s.adam_v[p].data;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grads[p][i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + epsilon);
    }
  }
  s.step = t;
  apply_max_norm(s, config_.maxnorm_c);
}

void Network::apply_max_norm(NetState& s, double c) const {
  if (c <= 0.0) throw InvalidInput("apply_max_norm: c must be positive");
  Tensor& w1 = s.params[fc1_w_];
  const int rows = w1.shape[0], cols = w1.shape[1];
  for (int r = 0; r < rows; ++r) {
    double* row = w1.data.data() + static_cast<std::size_t>(r) * cols;
    double norm_sq = 0.0;
    for (int j = 0; j < cols; ++j) norm_sq += row[j] * row[j];
    const double norm = std::sqrt(norm_sq);
    if (norm > c) {
      const double scale = c / norm;
      for (int j = 0; j < cols; ++j) row[j] *= scale;
    }
  }
}

std::vector<double> Network::features(const ForwardTrace& trace,
                                      int image_index) const {
  return trace.images.at(image_index).gap;
}

const std::vector<double>& Network::final_conv_map(const ForwardTrace& trace,
                                                   int image_index) const {
  const ImageTrace& it = trace.images.at(image_index);
  return it.block_out.empty() ? it.stem_a : it.block_out.back();
}

std::vector<double> Network::logit_gradient_wrt_final_map(
    const NetState& s, const ForwardTrace& trace, int image_index) const {
  const ImageTrace& it = trace.images.at(image_index);
  const int feat = config_.feature_dim();
  const int cat_dim = feat + config_.covariate_dim;
  const int hidden = config_.hidden;
  std::vector<double> dz1(hidden);
  for (int i = 0; i < hidden; ++i) {
    const double da = it.mask2.empty()
                          ? s.params[fc2_w_].data[i]
                          : s.params[fc2_w_].data[i] * it.mask2[i];
    dz1[i] = it.fc1_a[i] > 0.0 ? da : 0.0;
  }
  std::vector<double> dcat(cat_dim, 0.0);
  MapRowC w1(s.params[fc1_w_].data.data(), hidden, cat_dim);
  MapVecC dz1v(dz1.data(), hidden);
  MapVec dcatv(dcat.data(), cat_dim);
  dcatv.noalias() = w1.transpose() * dz1v;
  const int npos = final_hw_ * final_hw_;
  std::vector<double> d_map(static_cast<std::size_t>(feat) * npos);
  for (int c = 0; c < feat; ++c) {
    const double dg = it.mask1.empty() ? dcat[c] : dcat[c] * it.mask1[c];
    const double per_pos = dg / npos;
    for (int i = 0; i < npos; ++i)
      d_map[static_cast<std::size_t>(c) * npos + i] = per_pos;
  }
  return d_map;
}

// ---------------------------------------------------------------------------
// Checkpoint format (documented in the README): little-endian, magic
// "WSNET1\n", then the config JSON (u32 length + bytes), step (i64),
// init_seed (u64), parameter count (u32), and per parameter: name (u32 +
// bytes), rank (u32), dims (u32 each), then value/adam_m/adam_v arrays as
// float64.
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[] = "WSNET1\n";

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw InvalidInput("checkpoint: truncated file");
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in) {
  const std::uint32_t n = read_pod<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw InvalidInput("checkpoint: truncated file");
  return s;
}

void write_doubles(std::ofstream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

void read_doubles(std::ifstream& in, std::vector<double>& v) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw InvalidInput("checkpoint: truncated file");
}

}  // namespace

std::string net_config_to_json(const NetConfig& cfg) {
  nlohmann::json j;
  j["input_size"] = cfg.input_size;
  j["in_channels"] = cfg.in_channels;
  j["stem_width"] = cfg.stem_width;
  j["stem_stride"] = cfg.stem_stride;
  j["stages"] = nlohmann::json::array();
  for (const auto& st : cfg.stages)
    j["stages"].push_back(
        {{"width", st.width}, {"blocks", st.blocks}, {"stride", st.stride}});
  j["covariate_dim"] = cfg.covariate_dim;
  j["hidden"] = cfg.hidden;
  j["dropout_rate"] = cfg.dropout_rate;
  j["maxnorm_c"] = cfg.maxnorm_c;
  return j.dump();
}

NetConfig net_config_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  NetConfig cfg;
  cfg.input_size = j.at("input_size").get<int>();
  cfg.in_channels = j.at("in_channels").get<int>();
  cfg.stem_width = j.at("stem_width").get<int>();
  cfg.stem_stride = j.at("stem_stride").get<int>();
  cfg.stages.clear();
  for (const auto& st : j.at("stages"))
    cfg.stages.push_back({st.at("width").get<int>(), st.at("blocks").get<int>(),
                          st.at("stride").get<int>()});
  cfg.covariate_dim = j.at("covariate_dim").get<int>();
  cfg.hidden = j.at("hidden").get<int>();
  cfg.dropout_rate = j.at("dropout_rate").get<double>();
  cfg.maxnorm_c = j.at("maxnorm_c").get<double>();
  return cfg;
}

void save_checkpoint(const NetState& s, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("checkpoint: cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic) - 1);
  write_string(out, net_config_to_json(s.config));
  write_pod<std::int64_t>(out, s.step);
  write_pod<std::uint64_t>(out, s.init_seed);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.params.size()));
  for (std::size_t p = 0; p < s.params.size(); ++p) {
    const Tensor& t = s.params[p];
    write_string(out, t.name);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    write_doubles(out, t.data);
    write_doubles(out, s.adam_m[p].data);
    write_doubles(out, s.adam_v[p].data);
  }
}

NetState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("checkpoint: cannot open " + path.string());
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw InvalidInput("checkpoint: bad magic in " + path.string());
  NetState s;
  s.config = net_config_from_json(read_string(in));
  s.step = read_pod<std::int64_t>(in);
  s.init_seed = read_pod<std::uint64_t>(in);
  const std::uint32_t n_params = read_pod<std::uint32_t>(in);
  for (std::uint32_t p = 0; p < n_params; ++p) {
    Tensor t;
    t.name = read_string(in);
    const std::uint32_t rank = read_pod<std::uint32_t>(in);
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(static_cast<int>(read_pod<std::uint32_t>(in)));
      n *= static_cast<std::size_t>(t.shape.back());
    }
    t.data.resize(n);
    Tensor m = t, v = t;
    read_doubles(in, t.data);
    read_doubles(in, m.data);
    read_doubles(in, v.data);
    s.params.push_back(std::move(t));
    s.adam_m.push_back(std::move(m));
    s.adam_v.push_back(std::move(v));
  }
  return s;
}

}  // namespace wsipipe
