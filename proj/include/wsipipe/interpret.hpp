#pragma once

#include <vector>

#include "wsipipe/image.hpp"
#include "wsipipe/nnet.hpp"

namespace wsipipe {

// Grad-CAM saliency for one tile plus the feature-vector export feeding
// external embedding tools.

struct CamHeatmap {
  int size = 299;               // output side length
  std::vector<double> values;   // size*size, in [0,1]
  double raw_max = 0.0;         // pre-normalization maximum
};

// ReLU of the alpha-weighted sum of the activation maps, where alpha_k is
// the spatial mean of gradient map k. Both inputs are channels x hw x hw.
std::vector<double> cam_coarse(const std::vector<double>& activations,
                               const std::vector<double>& gradients,
                               int channels, int hw);

// Bilinear upsampling with corner alignment.
std::vector<double> bilinear_upsample(const std::vector<double>& coarse,
                                      int in_hw, int out_hw);

// Full Grad-CAM: infer-mode forward, gradient of the pre-sigmoid logit
// w.r.t. the final conv activations, coarse map, upsample, normalize by the
// maximum when positive.
CamHeatmap grad_cam(const Network& net, const NetState& state,
                    const Sample& sample);

ImageGray heatmap_image(const CamHeatmap& cam);

// Heatmap rendered red and alpha-blended over the tile.
ImageRGB heatmap_overlay(const ImageRGB& tile, const CamHeatmap& cam,
                         double alpha = 0.4);

// Post-GAP, pre-dropout feature vectors, one row per sample.
std::vector<std::vector<double>> export_features(
    const Network& net, const NetState& state,
    const std::vector<Sample>& samples);

}  // namespace wsipipe
