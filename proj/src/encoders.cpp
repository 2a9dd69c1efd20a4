#include "vistext/encoders.hpp"

#include <stdexcept>

#include "json.hpp"
#include "nn_ops.hpp"
#include "vistext/phrasex.hpp"

namespace vistext::encoders {

using nlohmann::json;

std::string EncoderConfig::to_json() const {
  json j = {{"embed_dim", embed_dim},       {"hidden", hidden},         {"layers", layers},
            {"cnn_channels", cnn_channels}, {"image_feature", image_feature}, {"mlp_hidden", mlp_hidden},
            {"image_size", image_size},     {"use_images", use_images}};
  return j.dump();
}

EncoderConfig EncoderConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  EncoderConfig c;
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.cnn_channels = j.value("cnn_channels", c.cnn_channels);
  c.image_feature = j.value("image_feature", c.image_feature);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.image_size = j.value("image_size", c.image_size);
  c.use_images = j.value("use_images", c.use_images);
  return c;
}

namespace {

std::string gru_name(int layer, int dir, const char* what) {
  return "text.gru.l" + std::to_string(layer) + (dir == 0 ? ".f." : ".b.") + what;
}

std::string conv_name(std::size_t i, const char* what) { return "image.conv" + std::to_string(i) + "." + what; }

Vec sigmoid(const Vec& x) { return x.unaryExpr([](double v) { return nn::sigmoid(v); }); }

}  // namespace

Model init_model(const EncoderConfig& config, const Vocabulary& vocab, std::uint64_t seed) {
  if (config.layers < 1 || config.hidden < 1 || config.embed_dim < 1)
    throw std::invalid_argument("encoder widths must be positive");
  Model m;
  m.config = config;
  m.vocab = vocab;
  Rng rng(seed);
  auto& s = m.store;
  const std::size_t e = config.embed_dim, h = config.hidden;
  s.add_uniform("text.embed", {vocab.size(), e}, 1, rng);
  for (int l = 0; l < config.layers; ++l)
    for (int d = 0; d < 2; ++d) {
      const std::size_t in = l == 0 ? e : 2 * h;
      s.add_uniform(gru_name(l, d, "w_ih"), {3 * h, in}, h, rng);
      s.add_uniform(gru_name(l, d, "w_hh"), {3 * h, h}, h, rng);
      s.add(gru_name(l, d, "b_ih"), {3 * h});
      s.add(gru_name(l, d, "b_hh"), {3 * h});
    }
  std::size_t cin = 3;
  for (std::size_t i = 0; i < config.cnn_channels.size(); ++i) {
    const std::size_t cout = config.cnn_channels[i];
    s.add_uniform(conv_name(i, "w"), {cout, cin, 3, 3}, cin * 9, rng, std::sqrt(6.0));  // He
    s.add(conv_name(i, "b"), {cout});
    cin = cout;
  }
  const std::size_t f = config.image_feature, fused = config.fused_dim(), hm = config.mlp_hidden;
  s.add_uniform("image.fc.w", {f, cin}, cin, rng, kImageFeatureGain);
  s.add("image.fc.b", {f});
  s.add_uniform("head.w1f", {hm, fused}, fused + e, rng);
  s.add_uniform("head.w1a", {hm, e}, fused + e, rng);
  s.add("head.b1", {hm});
  s.add_uniform("head.w2", {1, hm}, hm, rng);
  s.add("head.b2", {1});
  s.add_uniform("head.v.w", {1, fused}, fused, rng);
  s.add("head.v.b", {1});
  // Center image features on a mid-gray reference so colour differences,
  // not the shared post-ReLU offset, dominate what the head sees.
  const Vec ref = encode_image(ImageTensor::filled(config.image_size, config.image_size, 0.5), m).feature;
  VecMap(s.at("image.fc.b").value.data(), static_cast<Eigen::Index>(f)) = -ref;
  return m;
}

std::vector<std::string> tokenize(const std::string& text) { return phrasex::word_tokens(text); }

RowMatrix embed_tokens(const std::vector<std::string>& tokens, const Model& model) {
  auto ids = model.vocab.ids(tokens);
  const auto& table = model.store.at("text.embed").mat();
  RowMatrix out(static_cast<Eigen::Index>(ids.size()), model.config.embed_dim);
  for (std::size_t i = 0; i < ids.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
  return out;
}

// ---------------------------------------------------------------------------
// GRU

TextEncoderState TextEncoderState::zeros(const EncoderConfig& config) {
  TextEncoderState s;
  s.h.resize(config.layers);
  for (auto& layer : s.h)
    for (auto& v : layer) v = Vec::Zero(config.hidden);
  return s;
}

TextTrace encode_text(const std::vector<std::string>& tokens, const TextEncoderState& state, const Model& model) {
  return encode_text_ids(model.vocab.ids(tokens), state, model);
}

TextTrace encode_text_ids(const std::vector<int>& ids, const TextEncoderState& state, const Model& model) {
  const auto& cfg = model.config;
  const int H = cfg.hidden;
  const Eigen::Index T = static_cast<Eigen::Index>(ids.size());
  if (static_cast<int>(state.h.size()) != cfg.layers) throw std::invalid_argument("encoder state has wrong depth");
  TextTrace tr;
  tr.ids = ids;
  tr.state_in = state;
  tr.state_out = state;
  const auto& table = model.store.at("text.embed").mat();
  RowMatrix x(T, cfg.embed_dim);
  for (Eigen::Index i = 0; i < T; ++i) x.row(i) = table.row(ids[i]);

  for (int l = 0; l < cfg.layers; ++l) {
    tr.inputs.push_back(x);
    RowMatrix out(T, 2 * H);
    std::array<GruDirectionTrace, 2> dirs;
    for (int d = 0; d < 2; ++d) {
      const auto& w_ih = model.store.at(gru_name(l, d, "w_ih")).mat();
      const auto& w_hh = model.store.at(gru_name(l, d, "w_hh")).mat();
      const auto b_ih = model.store.at(gru_name(l, d, "b_ih")).vec();
      const auto b_hh = model.store.at(gru_name(l, d, "b_hh")).vec();
      RowMatrix gx = x * w_ih.transpose();
      gx.rowwise() += b_ih.transpose();
      Vec h = state.h[l][d];
      auto& dt = dirs[d];
      for (Eigen::Index k = 0; k < T; ++k) {
        const int pos = static_cast<int>(d == 0 ? k : T - 1 - k);
        GruCellTrace c;
        c.h_prev = h;
        Vec gh = w_hh * h + b_hh;
        Vec gxp = gx.row(pos).transpose();
        c.r = sigmoid(gxp.segment(0, H) + gh.segment(0, H));
        c.z = sigmoid(gxp.segment(H, H) + gh.segment(H, H));
        c.hn = gh.segment(2 * H, H);
        c.n = (gxp.segment(2 * H, H).array() + c.r.array() * c.hn.array()).tanh();
        h = (1.0 - c.z.array()) * c.n.array() + c.z.array() * h.array();
        out.block(pos, d * H, 1, H) = h.transpose();
        dt.order.push_back(pos);
        dt.cells.push_back(std::move(c));
      }
      tr.state_out.h[l][d] = h;
    }
    tr.dirs.push_back(std::move(dirs));
    tr.outputs.push_back(out);
    x = out;
  }
  const auto& top = tr.state_out.h.back();
  tr.feature.resize(2 * H);
  tr.feature << top[0], top[1];
  return tr;
}

TextEncoderState text_backward(const TextTrace& tr, const Vec& dfeature, const TextEncoderState& dstate_out,
                               Model& model) {
  const auto& cfg = model.config;
  const int H = cfg.hidden;
  const int L = cfg.layers;
  const Eigen::Index T = static_cast<Eigen::Index>(tr.ids.size());
  TextEncoderState din = TextEncoderState::zeros(cfg);

  RowMatrix dout = RowMatrix::Zero(T, 2 * H);  // gradient on the current layer's outputs
  for (int l = L - 1; l >= 0; --l) {
    RowMatrix dx = RowMatrix::Zero(T, tr.inputs[l].cols());
    for (int d = 0; d < 2; ++d) {
      auto& pw_ih = model.store.at(gru_name(l, d, "w_ih"));
      auto& pw_hh = model.store.at(gru_name(l, d, "w_hh"));
      auto& pb_ih = model.store.at(gru_name(l, d, "b_ih"));
      auto& pb_hh = model.store.at(gru_name(l, d, "b_hh"));
      const auto w_hh = pw_hh.mat();
      Vec dh = dstate_out.h[l][d];
      if (l == L - 1) dh += dfeature.segment(d * H, H);
      RowMatrix dgx = RowMatrix::Zero(T, 3 * H);
      const auto& dt = tr.dirs[l][d];
      for (Eigen::Index k = T - 1; k >= 0; --k) {
        const int pos = dt.order[k];
        const auto& c = dt.cells[k];
        dh += dout.block(pos, d * H, 1, H).transpose();
        Vec dn = dh.array() * (1.0 - c.z.array());
        Vec dz = dh.array() * (c.h_prev.array() - c.n.array());
        Vec dprev = dh.array() * c.z.array();
        Vec dn_pre = dn.array() * (1.0 - c.n.array().square());
        Vec dr = dn_pre.array() * c.hn.array();
        Vec dhn = dn_pre.array() * c.r.array();
        Vec dr_pre = dr.array() * c.r.array() * (1.0 - c.r.array());
        Vec dz_pre = dz.array() * c.z.array() * (1.0 - c.z.array());
        Vec dgh(3 * H);
        dgh << dr_pre, dz_pre, dhn;
        dgx.block(pos, 0, 1, H) = dr_pre.transpose();
        dgx.block(pos, H, 1, H) = dz_pre.transpose();
        dgx.block(pos, 2 * H, 1, H) = dn_pre.transpose();
        pw_hh.grad_mat().noalias() += dgh * c.h_prev.transpose();
        pb_hh.grad_vec() += dgh;
        dprev.noalias() += w_hh.transpose() * dgh;
        dh = dprev;
      }
      din.h[l][d] = dh;
      pw_ih.grad_mat().noalias() += dgx.transpose() * tr.inputs[l];
      pb_ih.grad_vec() += dgx.colwise().sum().transpose();
      dx.noalias() += dgx * pw_ih.mat();
    }
    if (l > 0) {
      dout = dx;
    } else {
      auto g = model.store.at("text.embed").grad_mat();
      for (Eigen::Index i = 0; i < T; ++i) g.row(tr.ids[i]) += dx.row(i);
    }
  }
  return din;
}

// ---------------------------------------------------------------------------
// CNN

RowMatrix ImageTrace::last_activations() const { return nn::relu(layers.back().pre); }

ImageTrace encode_image(const ImageTensor& image, const Model& model) {
  const auto& cfg = model.config;
  if (image.height != cfg.image_size || image.width != cfg.image_size)
    throw std::invalid_argument("image does not have the configured size");
  ImageTrace tr;
  nn::FeatureMap cur = nn::image_to_map(image);
  for (std::size_t i = 0; i < cfg.cnn_channels.size(); ++i) {
    ConvLayerTrace lt;
    lt.input = cur.x;
    lt.in_h = cur.h;
    lt.in_w = cur.w;
    nn::FeatureMap pre = nn::conv2d(cur, model.store.at(conv_name(i, "w")), model.store.at(conv_name(i, "b")), 2, 1);
    lt.pre = pre.x;
    lt.out_h = pre.h;
    lt.out_w = pre.w;
    cur = nn::FeatureMap{pre.h, pre.w, nn::relu(pre.x)};
    tr.layers.push_back(std::move(lt));
  }
  tr.pooled = cur.x.rowwise().mean();
  tr.feature = model.store.at("image.fc.w").mat() * tr.pooled + model.store.at("image.fc.b").vec();
  return tr;
}

Vec encode_images(const std::vector<ImageTensor>& images, const Model& model) {
  Vec sum = Vec::Zero(model.config.image_feature);
  if (images.empty()) return sum;
  for (const auto& img : images) sum += encode_image(img, model).feature;
  return sum / static_cast<double>(images.size());
}

RowMatrix feature_grad_to_last_activations(const ImageTrace& tr, const Vec& dfeature, const Model& model) {
  Vec dpooled = model.store.at("image.fc.w").mat().transpose() * dfeature;
  const auto& last = tr.layers.back();
  const double inv = 1.0 / static_cast<double>(last.out_h * last.out_w);
  RowMatrix d(dpooled.size(), static_cast<Eigen::Index>(last.out_h) * last.out_w);
  d.colwise() = dpooled * inv;
  return d;
}

ImageTensor image_backward(const ImageTrace& tr, const Vec& dfeature, Model& model, bool need_image_grad) {
  model.store.at("image.fc.w").grad_mat().noalias() += dfeature * tr.pooled.transpose();
  model.store.at("image.fc.b").grad_vec() += dfeature;
  RowMatrix dact = feature_grad_to_last_activations(tr, dfeature, model);
  RowMatrix dinput;
  for (std::size_t i = tr.layers.size(); i-- > 0;) {
    const auto& lt = tr.layers[i];
    RowMatrix dpre = nn::relu_backward(lt.pre, dact);
    nn::FeatureMap in{lt.in_h, lt.in_w, lt.input};
    bool need = i > 0 || need_image_grad;
    dinput = nn::conv2d_backward(in, model.store.at(conv_name(i, "w")), dpre, lt.out_h, lt.out_w, 2, 1,
                                 &model.store.at(conv_name(i, "w")), &model.store.at(conv_name(i, "b")), need);
    dact = dinput;
  }
  if (!need_image_grad) return {};
  return nn::map_to_image(dinput, tr.layers[0].in_h, tr.layers[0].in_w);
}

// ---------------------------------------------------------------------------
// Heads

FusedFeature fuse(const Vec& text_feature, const Vec& image_feature) {
  FusedFeature f{text_feature, image_feature, Vec(text_feature.size() + image_feature.size())};
  f.fused << text_feature, image_feature;
  return f;
}

ScoreTrace score_actions(const FusedFeature& fused, const std::vector<std::string>& admissible, const Model& model) {
  std::vector<std::vector<std::string>> actions;
  for (const auto& a : admissible) actions.push_back(tokenize(a));
  return score_action_tokens(fused, actions, model);
}

ScoreTrace score_action_tokens(const FusedFeature& fused, const std::vector<std::vector<std::string>>& admissible,
                               const Model& model) {
  if (admissible.empty()) throw std::invalid_argument("no admissible actions to score");
  const auto& cfg = model.config;
  if (fused.fused.size() != cfg.fused_dim()) throw std::invalid_argument("fused feature has wrong size");
  ScoreTrace tr;
  tr.fused = fused.fused;
  const Eigen::Index A = static_cast<Eigen::Index>(admissible.size());
  const auto& table = model.store.at("text.embed").mat();
  tr.action_emb = RowMatrix::Zero(A, cfg.embed_dim);
  for (Eigen::Index a = 0; a < A; ++a) {
    auto ids = model.vocab.ids(admissible[static_cast<std::size_t>(a)]);
    for (int id : ids) tr.action_emb.row(a) += table.row(id);
    if (!ids.empty()) tr.action_emb.row(a) /= static_cast<double>(ids.size());
    tr.action_ids.push_back(std::move(ids));
  }
  Vec base = model.store.at("head.w1f").mat() * tr.fused + model.store.at("head.b1").vec();
  tr.pre = tr.action_emb * model.store.at("head.w1a").mat().transpose();
  tr.pre.rowwise() += base.transpose();
  RowMatrix h = nn::relu(tr.pre);
  tr.logits = h * model.store.at("head.w2").mat().row(0).transpose();
  tr.logits.array() += model.store.at("head.b2").value[0];
  const double mx = tr.logits.maxCoeff();
  tr.policy = (tr.logits.array() - mx).exp();
  tr.policy /= tr.policy.sum();
  tr.value = model.store.at("head.v.w").mat().row(0).dot(tr.fused) + model.store.at("head.v.b").value[0];
  return tr;
}

Vec score_backward(const ScoreTrace& tr, const Vec& dlogits, double dvalue, Model& model) {
  auto& s = model.store;
  RowMatrix h = nn::relu(tr.pre);
  s.at("head.w2").grad_mat().row(0) += dlogits.transpose() * h;
  s.at("head.b2").grad[0] += dlogits.sum();
  RowMatrix dh = dlogits * s.at("head.w2").mat().row(0);
  RowMatrix dpre = nn::relu_backward(tr.pre, dh);
  Vec dbase = dpre.colwise().sum().transpose();
  s.at("head.w1f").grad_mat().noalias() += dbase * tr.fused.transpose();
  s.at("head.b1").grad_vec() += dbase;
  s.at("head.w1a").grad_mat().noalias() += dpre.transpose() * tr.action_emb;
  RowMatrix demb = dpre * s.at("head.w1a").mat();
  auto g = s.at("text.embed").grad_mat();
  for (std::size_t a = 0; a < tr.action_ids.size(); ++a) {
    const auto& ids = tr.action_ids[a];
    if (ids.empty()) continue;
    const double inv = 1.0 / static_cast<double>(ids.size());
    for (int id : ids) g.row(id) += demb.row(static_cast<Eigen::Index>(a)) * inv;
  }
  s.at("head.v.w").grad_mat().row(0) += tr.fused.transpose() * dvalue;
  s.at("head.v.b").grad[0] += dvalue;
  Vec dfused = s.at("head.w1f").mat().transpose() * dbase;
  dfused += s.at("head.v.w").mat().row(0).transpose() * dvalue;
  return dfused;
}

}  // namespace vistext::encoders
