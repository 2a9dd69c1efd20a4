#pragma once

// Policy network: stacked bidirectional GRU over observation tokens, a small
// CNN over the step's images, concatenation fusion, and an MLP action scorer
// with a linear value head. Every forward returns a trace that its backward
// consumes.

#include <array>
#include <string>
#include <vector>

#include "vistext/image.hpp"
#include "vistext/params.hpp"
#include "vistext/vocab.hpp"

namespace vistext::encoders {

// Init scale of the image projection.
inline constexpr double kImageFeatureGain = 3.0;

struct EncoderConfig {
  int embed_dim = 64;
  int hidden = 128;  // per direction
  int layers = 2;
  std::vector<int> cnn_channels{8, 16, 32, 32};
  int image_feature = 128;
  int mlp_hidden = 64;
  int image_size = kCanonicalSize;
  bool use_images = true;

  int text_feature() const { return 2 * hidden; }
  int fused_dim() const { return text_feature() + image_feature; }
  std::string to_json() const;
  static EncoderConfig from_json(const std::string& text);
  bool operator==(const EncoderConfig&) const = default;
};

struct Model {
  EncoderConfig config;
  Vocabulary vocab;
  ParamStore store;
};

Model init_model(const EncoderConfig& config, const Vocabulary& vocab, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Text

RowMatrix embed_tokens(const std::vector<std::string>& tokens, const Model& model);

struct TextEncoderState {
  // [layer][direction] -> hidden vector; direction 0 forward, 1 backward.
  std::vector<std::array<Vec, 2>> h;
  static TextEncoderState zeros(const EncoderConfig& config);
};

struct GruCellTrace {
  Vec h_prev, r, z, n, hn;  // hn = W_hn h_prev + b_hn
};

struct GruDirectionTrace {
  std::vector<int> order;            // positions in processing order
  std::vector<GruCellTrace> cells;   // aligned with order
};

struct TextTrace {
  std::vector<int> ids;
  std::vector<RowMatrix> inputs;     // per layer: T x in_dim
  std::vector<std::array<GruDirectionTrace, 2>> dirs;
  std::vector<RowMatrix> outputs;    // per layer: T x 2H
  TextEncoderState state_in, state_out;
  Vec feature;                       // [fwd final top || bwd final top]
};

TextTrace encode_text(const std::vector<std::string>& tokens, const TextEncoderState& state, const Model& model);
TextTrace encode_text_ids(const std::vector<int>& ids, const TextEncoderState& state, const Model& model);

// Accumulates parameter gradients given d/dfeature and d/d(state_out);
// returns d/d(state_in).
TextEncoderState text_backward(const TextTrace& trace, const Vec& dfeature, const TextEncoderState& dstate_out,
                               Model& model);

// ---------------------------------------------------------------------------
// Images

struct ConvLayerTrace {
  RowMatrix input;  // channels x (h*w)
  int in_h = 0, in_w = 0;
  RowMatrix pre;    // conv output before ReLU
  int out_h = 0, out_w = 0;
};

struct ImageTrace {
  std::vector<ConvLayerTrace> layers;
  Vec pooled;
  Vec feature;
  // Last conv block's post-ReLU activations, channels x (h*w).
  RowMatrix last_activations() const;
};

ImageTrace encode_image(const ImageTensor& image, const Model& model);
// Mean of per-image features.
Vec encode_images(const std::vector<ImageTensor>& images, const Model& model);
// Gradient w.r.t. the image; accumulates CNN gradients.
ImageTensor image_backward(const ImageTrace& trace, const Vec& dfeature, Model& model, bool need_image_grad);
// d(feature)/d(last activations) for a feature gradient, used by saliency.
RowMatrix feature_grad_to_last_activations(const ImageTrace& trace, const Vec& dfeature, const Model& model);

// ---------------------------------------------------------------------------
// Fusion and heads

struct FusedFeature {
  Vec text_feature;
  Vec image_feature;
  Vec fused;
};

FusedFeature fuse(const Vec& text_feature, const Vec& image_feature);

struct ScoreTrace {
  Vec fused;
  std::vector<std::vector<int>> action_ids;
  RowMatrix action_emb;  // A x E
  RowMatrix pre;         // A x Hm
  Vec logits;
  Vec policy;
  double value = 0.0;
};

ScoreTrace score_actions(const FusedFeature& fused, const std::vector<std::string>& admissible, const Model& model);
ScoreTrace score_action_tokens(const FusedFeature& fused, const std::vector<std::vector<std::string>>& actions,
                               const Model& model);
// Returns d/dfused; accumulates head and action-embedding gradients.
Vec score_backward(const ScoreTrace& trace, const Vec& dlogits, double dvalue, Model& model);

std::vector<std::string> tokenize(const std::string& text);

}  // namespace vistext::encoders
