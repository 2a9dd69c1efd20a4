#pragma once

// Grad-CAM over the image encoder's last convolution block.

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "vistext/agent.hpp"
#include "vistext/encoders.hpp"

namespace vistext::explain {

struct Heatmap {
  int grid_h = 0;
  int grid_w = 0;
  std::vector<double> grid;  // row-major, >= 0, max 1 unless all zero
  ImageTensor overlay;       // image blended with the upsampled map
  std::vector<double> upsampled;  // image-resolution map
  std::string query;
  std::string action;

  double at(int y, int x) const { return grid[static_cast<std::size_t>(y) * grid_w + x]; }
  // Share of upsampled mass in quadrants TL, TR, BL, BR; zeros for an empty map.
  std::array<double, 4> quadrant_mass() const;
};

// Scalar function of the image feature; writes d(target)/d(feature).
using FeatureTarget = std::function<double(const Vec& feature, Vec& dfeature)>;

Heatmap grad_cam(const ImageTensor& image, const FeatureTarget& target, const encoders::Model& model);

struct ExplainBundle {
  std::string observation;
  std::string action;
  std::vector<std::string> queries;
  std::vector<ImageTensor> images;
  std::vector<Heatmap> heatmaps;
  std::string note;  // set when there is nothing to explain
};

// One greedy decision from `observation` (fresh recurrent state). Every
// fetched image gets a map whose target is the chosen action's logit.
ExplainBundle explain_step(const envcore::Observation& observation, agent::AgentKind kind,
                           agent::AgentResources& res, const agent::TrainConfig& config);

// Writes <i>_raw.png, <i>_overlay.png (titled with the action) and manifest.json.
void export_bundle(const ExplainBundle& bundle, const std::filesystem::path& dir);

// Oracle encoder: the first conv is a brightness detector (mean RGB - 0.5),
// later convs pass the centre tap through, fc reads the pooled response.
encoders::Model matched_filter_model(int image_size = kCanonicalSize);
// Dark image with a white square filling the middle of one quadrant (0 TL,
// 1 TR, 2 BL, 3 BR).
ImageTensor patch_stimulus(int image_size, int quadrant);

}  // namespace vistext::explain
