#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "wsipipe/errors.hpp"
#include "wsipipe/image.hpp"

namespace wsipipe {

struct Tensor {
  std::string name;
  std::vector<int> shape;
  std::vector<double> data;

  std::size_t size() const { return data.size(); }
};

struct NetConfig {
  int input_size = 299;
  int in_channels = 3;
  int stem_width = 8;
  int stem_stride = 2;
  struct Stage {
    int width = 64;
    int blocks = 2;
    int stride = 2;  // entry stride
  };
  std::vector<Stage> stages = {{8, 2, 2}, {16, 2, 2}, {32, 2, 2}, {64, 2, 2}};
  int covariate_dim = 9;
  int hidden = 256;
  double dropout_rate = 0.5;
  double maxnorm_c = 3.0;

  int feature_dim() const { return stages.empty() ? stem_width : stages.back().width; }

  // Full-scale clinical variant with a 512-wide feature vector.
  static NetConfig clinical();
  // Tiny 8x8 two-stage variant used for gradient checking.
  static NetConfig tiny();
};

struct NetState {
  NetConfig config;
  std::vector<Tensor> params;
  std::vector<Tensor> adam_m;
  std::vector<Tensor> adam_v;
  std::int64_t step = 0;
  std::uint64_t init_seed = 0;
};

using GradSet = std::vector<std::vector<double>>;  // aligned with params

enum class RunMode { kTrain, kInfer };

// One network input: planar C x H x W image centered to [-1,1] plus the
// covariate one-hots.
struct Sample {
  std::vector<double> image;
  std::vector<double> covariates;
};

Sample sample_from_tile(const ImageRGB& tile, const std::array<double, 9>& cov);

struct ImageTrace;

struct ForwardTrace {
  RunMode mode = RunMode::kTrain;
  std::uint64_t dropout_seed = 0;
  std::vector<double> probs;
  std::vector<double> logits;
  std::vector<ImageTrace> images;
  ~ForwardTrace();
  ForwardTrace();
  ForwardTrace(ForwardTrace&&) noexcept;
  ForwardTrace& operator=(ForwardTrace&&) noexcept;
};

// Mean binary cross-entropy with probabilities clamped to [1e-7, 1-1e-7].
double bce_loss(const std::vector<double>& probs, const std::vector<double>& labels);

class Network {
 public:
  explicit Network(NetConfig cfg);

  const NetConfig& config() const { return config_; }
  int final_map_hw() const { return final_hw_; }  // H' = W' of the last stage

  NetState init_state(std::uint64_t seed) const;

  // Batched forward pass. In train mode dropout masks are derived from
  // (dropout_seed, image index) so results never depend on thread count.
  std::vector<double> forward(const NetState& s, const std::vector<Sample>& batch,
                              RunMode mode, std::uint64_t dropout_seed = 0,
                              ForwardTrace* trace = nullptr) const;

  // Exact gradients of the mean BCE loss w.r.t. every parameter, reusing the
  // dropout masks recorded in the trace.
  GradSet backward(const NetState& s, const ForwardTrace& trace,
                   const std::vector<double>& labels) const;

  // Bias-corrected Adam update followed by the max-norm projection on the
  // hidden fully connected layer.
  void adam_step(NetState& s, const GradSet& grads, double lr,
                 double beta1 = 0.9, double beta2 = 0.999,
                 double epsilon = 1e-8) const;

  void apply_max_norm(NetState& s, double c) const;

  // Post-GAP, pre-dropout feature vector of one traced image.
  std::vector<double> features(const ForwardTrace& trace, int image_index) const;

  // Final conv activation map (F x H' x W') of one traced image.
  const std::vector<double>& final_conv_map(const ForwardTrace& trace,
                                            int image_index) const;

  // Gradient of the pre-sigmoid logit w.r.t. the final conv activations for
  // one traced image (used by Grad-CAM; head-only, infer-mode trace).
  std::vector<double> logit_gradient_wrt_final_map(const NetState& s,
                                                   const ForwardTrace& trace,
                                                   int image_index) const;

 private:
  struct ConvPlan {
    std::string name;
    int w_param = -1, b_param = -1;
    int in_ch = 0, out_ch = 0, k = 3, stride = 1;
    int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
    int pad_top = 0, pad_left = 0;
  };
  struct BlockPlan {
    ConvPlan conv1, conv2;
    std::optional<ConvPlan> proj;
  };

  void conv_forward(const ConvPlan& cp, const NetState& s, const double* in,
                    double* out) const;
  void conv_backward(const ConvPlan& cp, const NetState& s, const double* in,
                     const double* d_out, double* d_in, GradSet& grads) const;
  void forward_image(const NetState& s, const Sample& sample, RunMode mode,
                     std::uint64_t dropout_seed, std::size_t image_index,
                     ImageTrace& trace) const;
  void backward_image(const NetState& s, const ForwardTrace& trace,
                      std::size_t image_index, double d_logit,
                      GradSet& grads) const;

  NetConfig config_;
  ConvPlan stem_;
  std::vector<BlockPlan> blocks_;
  int final_hw_ = 0;
  int fc1_w_ = -1, fc1_b_ = -1, fc2_w_ = -1, fc2_b_ = -1;
  std::vector<Tensor> param_meta_;  // names and shapes, data left empty
};

void save_checkpoint(const NetState& s, const std::filesystem::path& path);
NetState load_checkpoint(const std::filesystem::path& path);

NetConfig net_config_from_json(const std::string& json_text);
std::string net_config_to_json(const NetConfig& cfg);

}  // namespace wsipipe
