#include "vistext/explain.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "vistext/common.hpp"

namespace vistext::explain {

using nlohmann::json;

std::array<double, 4> Heatmap::quadrant_mass() const {
  std::array<double, 4> m{0, 0, 0, 0};
  const int h = overlay.height, w = overlay.width;
  double total = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = upsampled[static_cast<std::size_t>(y) * w + x];
      m[(y < h / 2 ? 0 : 2) + (x < w / 2 ? 0 : 1)] += v;
      total += v;
    }
  if (total > 0.0)
    for (double& v : m) v /= total;
  return m;
}

namespace {

// Bilinear, align-corners=false.
std::vector<double> upsample(const std::vector<double>& g, int gh, int gw, int h, int w) {
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const double sy = std::clamp((y + 0.5) * gh / h - 0.5, 0.0, gh - 1.0);
    const int y0 = static_cast<int>(sy), y1 = std::min(y0 + 1, gh - 1);
    const double fy = sy - y0;
    for (int x = 0; x < w; ++x) {
      const double sx = std::clamp((x + 0.5) * gw / w - 0.5, 0.0, gw - 1.0);
      const int x0 = static_cast<int>(sx), x1 = std::min(x0 + 1, gw - 1);
      const double fx = sx - x0;
      auto at = [&](int yy, int xx) { return g[static_cast<std::size_t>(yy) * gw + xx]; };
      out[static_cast<std::size_t>(y) * w + x] = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) +
                                                 fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
    }
  }
  return out;
}

// Jet-like ramp: blue -> cyan -> yellow -> red.
std::array<double, 3> heat_color(double v) {
  const double r = std::clamp(1.5 - std::abs(4 * v - 3), 0.0, 1.0);
  const double g = std::clamp(1.5 - std::abs(4 * v - 2), 0.0, 1.0);
  const double b = std::clamp(1.5 - std::abs(4 * v - 1), 0.0, 1.0);
  return {r, g, b};
}

}  // namespace

Heatmap grad_cam(const ImageTensor& image, const FeatureTarget& target, const encoders::Model& model) {
  auto trace = encoders::encode_image(image, model);
  Vec dfeature = Vec::Zero(trace.feature.size());
  target(trace.feature, dfeature);
  RowMatrix acts = trace.last_activations();  // C x (h*w)
  RowMatrix grads = encoders::feature_grad_to_last_activations(trace, dfeature, model);
  Vec weights = grads.rowwise().mean();
  Vec cam = (acts.transpose() * weights).cwiseMax(0.0);

  Heatmap hm;
  const auto& last = trace.layers.back();
  hm.grid_h = last.out_h;
  hm.grid_w = last.out_w;
  hm.grid.assign(cam.data(), cam.data() + cam.size());
  const double mx = cam.size() ? cam.maxCoeff() : 0.0;
  if (mx > 0.0)
    for (double& v : hm.grid) v /= mx;
  else
    std::fill(hm.grid.begin(), hm.grid.end(), 0.0);
  hm.upsampled = upsample(hm.grid, hm.grid_h, hm.grid_w, image.height, image.width);
  hm.overlay = image;
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const double v = hm.upsampled[static_cast<std::size_t>(y) * image.width + x];
      const auto c = heat_color(v);
      for (int ch = 0; ch < 3; ++ch) hm.overlay.at(y, x, ch) = 0.5 * image.at(y, x, ch) + 0.5 * v * c[ch];
    }
  return hm;
}

ExplainBundle explain_step(const envcore::Observation& obs, agent::AgentKind kind, agent::AgentResources& res,
                           const agent::TrainConfig& config) {
  ExplainBundle b;
  b.observation = obs.text;
  if (kind == agent::AgentKind::random) {
    b.note = "the random agent has no image encoder";
    return b;
  }
  if (!res.model) throw std::invalid_argument("explain needs a model");
  if (obs.admissible_actions.empty()) throw std::invalid_argument("observation has no admissible actions");
  const auto& model = *res.model;
  auto text = encoders::encode_text(encoders::tokenize(obs.text), encoders::TextEncoderState::zeros(model.config), model);
  const bool images = kind == agent::AgentKind::multimodal && config.image_source != agent::ImageSourceKind::none;
  if (images) {
    b.queries = phrasex::select_queries(phrasex::extract_phrases(obs.text, res.lexicon), config.k_images);
    for (const auto& q : b.queries) {
      if (config.image_source == agent::ImageSourceKind::generator) {
        if (!res.generator) throw std::invalid_argument("generator image source needs generator params");
        b.images.push_back(imagery::generate_image(q, *res.generator, imagery::query_noise_seed(res.noise_seed, q)));
      } else {
        if (!res.retrieval) throw std::invalid_argument("retrieval image source needs a source");
        b.images.push_back(res.retrieval->image(q));
      }
    }
  }
  std::vector<Vec> feats;
  Vec image_feature = Vec::Zero(model.config.image_feature);
  for (const auto& img : b.images) {
    feats.push_back(encoders::encode_image(img, model).feature);
    image_feature += feats.back();
  }
  if (!feats.empty()) image_feature /= static_cast<double>(feats.size());
  auto score = encoders::score_actions(encoders::fuse(text.feature, image_feature), obs.admissible_actions, model);
  Rng rng(0);
  const auto chosen = agent::select_action(score.policy, agent::SelectMode::greedy, rng);
  b.action = obs.admissible_actions[chosen];
  if (b.images.empty()) {
    b.note = images ? "the observation produced no image queries" : "the text-only agent has no image branch";
    return b;
  }

  // logit(chosen) as a function of image i's feature, the others held fixed.
  const double k = static_cast<double>(feats.size());
  for (std::size_t i = 0; i < b.images.size(); ++i) {
    Vec rest = image_feature - feats[i] / k;
    FeatureTarget target = [&](const Vec& f, Vec& df) {
      encoders::Model scratch = model;  // score_backward writes gradient buffers
      auto s = encoders::score_actions(encoders::fuse(text.feature, rest + f / k), obs.admissible_actions, scratch);
      Vec dlogits = Vec::Zero(s.logits.size());
      dlogits(static_cast<Eigen::Index>(chosen)) = 1.0;
      Vec dfused = encoders::score_backward(s, dlogits, 0.0, scratch);
      df = dfused.tail(f.size()) / k;
      return s.logits(static_cast<Eigen::Index>(chosen));
    };
    auto hm = grad_cam(b.images[i], target, model);
    hm.query = b.queries[i];
    hm.action = b.action;
    b.heatmaps.push_back(std::move(hm));
  }
  return b;
}

void export_bundle(const ExplainBundle& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json items = json::array();
  for (std::size_t i = 0; i < b.heatmaps.size(); ++i) {
    const auto& hm = b.heatmaps[i];
    const std::string stem = std::to_string(i);
    write_png(dir / (stem + "_raw.png"), b.images[i], hm.query);
    write_png(dir / (stem + "_overlay.png"), hm.overlay, b.action);
    auto q = hm.quadrant_mass();
    items.push_back({{"query", hm.query},
                     {"action", hm.action},
                     {"raw", stem + "_raw.png"},
                     {"overlay", stem + "_overlay.png"},
                     {"grid", {hm.grid_h, hm.grid_w}},
                     {"mass_per_quadrant", {{"top_left", q[0]}, {"top_right", q[1]}, {"bottom_left", q[2]},
                                            {"bottom_right", q[3]}}}});
  }
  json manifest = {{"observation", b.observation}, {"action", b.action}, {"items", items}};
  if (!b.note.empty()) manifest["note"] = b.note;
  write_file_atomic(dir / "manifest.json", manifest.dump(2));
}

encoders::Model matched_filter_model(int image_size) {
  encoders::EncoderConfig c;
  c.embed_dim = 1;
  c.hidden = 1;
  c.layers = 1;
  c.cnn_channels = {1, 1, 1, 1};
  c.image_feature = 1;
  c.mlp_hidden = 1;
  c.image_size = image_size;
  auto m = encoders::init_model(c, Vocabulary{}, 0);
  auto& s = m.store;
  for (std::size_t i = 0; i < 4; ++i) {
    auto& w = s.at("image.conv" + std::to_string(i) + ".w");
    auto& b = s.at("image.conv" + std::to_string(i) + ".b");
    std::fill(w.value.begin(), w.value.end(), 0.0);
    const std::size_t cin = w.shape[1];
    for (std::size_t ci = 0; ci < cin; ++ci) w.value[ci * 9 + 4] = i == 0 ? 1.0 / 3.0 : 1.0;
    b.value[0] = i == 0 ? -0.5 : 0.0;
  }
  s.at("image.fc.w").value[0] = 1.0;
  s.at("image.fc.b").value[0] = 0.0;
  return m;
}

ImageTensor patch_stimulus(int image_size, int quadrant) {
  if (quadrant < 0 || quadrant > 3) throw std::invalid_argument("quadrant must be 0..3");
  ImageTensor img = ImageTensor::filled(image_size, image_size, 0.05);
  const int half = image_size / 2, side = half / 2;
  const int y0 = (quadrant / 2) * half + (half - side) / 2;
  const int x0 = (quadrant % 2) * half + (half - side) / 2;
  for (int y = y0; y < y0 + side; ++y)
    for (int x = x0; x < x0 + side; ++x)
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = 1.0;
  return img;
}

}  // namespace vistext::explain
