#include "wsipipe/interpret.hpp"

#include <algorithm>
#include <cmath>

namespace wsipipe {

std::vector<double> cam_coarse(const std::vector<double>& activations,
                               const std::vector<double>& gradients,
                               int channels, int hw) {
  const std::size_t plane = static_cast<std::size_t>(hw) * hw;
  if (activations.size() != plane * channels ||
      gradients.size() != plane * channels)
    throw InvalidInput("cam_coarse: map shape mismatch");
  std::vector<double> coarse(plane, 0.0);
  for (int c = 0; c < channels; ++c) {
    const double* grad = gradients.data() + c * plane;
    const double* act = activations.data() + c * plane;
    double alpha = 0.0;
    for (std::size_t i = 0; i < plane; ++i) alpha += grad[i];
    alpha /= static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) coarse[i] += alpha * act[i];
  }
  for (double& v : coarse)
    if (v < 0.0) v = 0.0;
  return coarse;
}

std::vector<double> bilinear_upsample(const std::vector<double>& coarse,
                                      int in_hw, int out_hw) {
  if (in_hw < 1 || out_hw < 1 ||
      coarse.size() != static_cast<std::size_t>(in_hw) * in_hw)
    throw InvalidInput("bilinear_upsample: bad dimensions");
  std::vector<double> out(static_cast<std::size_t>(out_hw) * out_hw, 0.0);
  if (in_hw == 1) {
    std::fill(out.begin(), out.end(), coarse[0]);
    return out;
  }
  const double scale = out_hw > 1
                           ? static_cast<double>(in_hw - 1) / (out_hw - 1)
                           : 0.0;  // align corners
  for (int oy = 0; oy < out_hw; ++oy) {
    const double sy = oy * scale;
    const int y0 = std::min(static_cast<int>(sy), in_hw - 2);
    const double fy = sy - y0;
    for (int ox = 0; ox < out_hw; ++ox) {
      const double sx = ox * scale;
      const int x0 = std::min(static_cast<int>(sx), in_hw - 2);
      const double fx = sx - x0;
      const double a = coarse[static_cast<std::size_t>(y0) * in_hw + x0];
      const double b = coarse[static_cast<std::size_t>(y0) * in_hw + x0 + 1];
      const double c = coarse[static_cast<std::size_t>(y0 + 1) * in_hw + x0];
      const double d = coarse[static_cast<std::size_t>(y0 + 1) * in_hw + x0 + 1];
      out[static_cast<std::size_t>(oy) * out_hw + ox] =
          (1.0 - fy) * ((1.0 - fx) * a + fx * b) +
          fy * ((1.0 - fx) * c + fx * d);
    }
  }
  return out;
}

CamHeatmap grad_cam(const Network& net, const NetState& state,
                    const Sample& sample) {
  ForwardTrace trace;
  net.forward(state, {sample}, RunMode::kInfer, 0, &trace);
  const std::vector<double>& act = net.final_conv_map(trace, 0);
  const std::vector<double> grad =
      net.logit_gradient_wrt_final_map(state, trace, 0);
  const int hw = net.final_map_hw();
  const int channels = net.config().feature_dim();
  const std::vector<double> coarse = cam_coarse(act, grad, channels, hw);

  CamHeatmap cam;
  cam.size = net.config().input_size;
  cam.values = bilinear_upsample(coarse, hw, cam.size);
  cam.raw_max = *std::max_element(cam.values.begin(), cam.values.end());
  if (cam.raw_max > 0.0)
    for (double& v : cam.values) v /= cam.raw_max;
  return cam;
}

ImageGray heatmap_image(const CamHeatmap& cam) {
  ImageGray img(cam.size, cam.size);
  for (std::size_t i = 0; i < cam.values.size(); ++i)
    img.data[i] = static_cast<std::uint8_t>(
        std::clamp<long>(std::lround(cam.values[i] * 255.0), 0, 255));
  return img;
}

ImageRGB heatmap_overlay(const ImageRGB& tile, const CamHeatmap& cam,
                         double alpha) {
  if (tile.width != cam.size || tile.height != cam.size)
    throw InvalidInput("heatmap_overlay: tile/heatmap size mismatch");
  ImageRGB out(tile.width, tile.height);
  for (int y = 0; y < tile.height; ++y)
    for (int x = 0; x < tile.width; ++x) {
      const double v =
          cam.values[static_cast<std::size_t>(y) * cam.size + x];
      const double heat[3] = {v * 255.0, 0.0, 0.0};
      for (int c = 0; c < 3; ++c) {
        const double mixed =
            (1.0 - alpha) * tile.at(x, y, c) + alpha * heat[c];
        out.at(x, y, c) = static_cast<std::uint8_t>(
            std::clamp<long>(std::lround(mixed), 0, 255));
      }
    }
  return out;
}

std::vector<std::vector<double>> export_features(
    const Network& net, const NetState& state,
    const std::vector<Sample>& samples) {
  ForwardTrace trace;
  net.forward(state, samples, RunMode::kInfer, 0, &trace);
  std::vector<std::vector<double>> rows;
  rows.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    rows.push_back(net.features(trace, static_cast<int>(i)));
  return rows;
}

}  // namespace wsipipe
