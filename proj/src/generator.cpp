#include <cmath>

#include "json.hpp"
#include "nn_ops.hpp"
#include "vistext/common.hpp"
#include "vistext/imagery.hpp"
#include "vistext/phrasex.hpp"

namespace vistext::imagery {

using nlohmann::json;

std::string GeneratorConfig::to_json() const {
  std::vector<std::string> words(vocab.words().begin() + 1, vocab.words().end());
  json j = {{"image_size", image_size},        {"word_dim", word_dim},
            {"noise_dim", noise_dim},          {"base_channels", base_channels},
            {"stage1_channels", stage1_channels}, {"stage2_channels", stage2_channels},
            {"vocab", words}};
  return j.dump();
}

GeneratorConfig GeneratorConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  GeneratorConfig c;
  c.image_size = j.at("image_size").get<int>();
  c.word_dim = j.at("word_dim").get<int>();
  c.noise_dim = j.at("noise_dim").get<int>();
  c.base_channels = j.at("base_channels").get<int>();
  c.stage1_channels = j.at("stage1_channels").get<int>();
  c.stage2_channels = j.at("stage2_channels").get<int>();
  c.vocab = Vocabulary(j.at("vocab").get<std::vector<std::string>>());
  return c;
}

GeneratorParams init_generator(const GeneratorConfig& config, std::uint64_t seed) {
  if (config.image_size % 8 != 0) throw std::invalid_argument("generator image size must be a multiple of 8");
  GeneratorParams p;
  p.config = config;
  Rng rng(seed);
  const std::size_t v = config.vocab.size(), dw = config.word_dim, nz = config.noise_dim;
  const std::size_t c0 = config.base_channels, c1 = config.stage1_channels, c2 = config.stage2_channels;
  const std::size_t bb = static_cast<std::size_t>(config.base_size()) * config.base_size();
  auto& s = p.store;
  s.add_uniform("gen.embed", {v, dw}, 1, rng);
  s.add_uniform("gen.cond.w", {c0 * bb, dw + nz}, dw + nz, rng);
  s.add("gen.cond.b", {c0 * bb});
  s.add_uniform("gen.s1.word", {c0, dw}, dw, rng);
  s.add_uniform("gen.s1.conv.w", {c1, 2 * c0, 3, 3}, 2 * c0 * 9, rng);
  s.add("gen.s1.conv.b", {c1});
  s.add_uniform("gen.s2.word", {c1, dw}, dw, rng);
  s.add_uniform("gen.s2.conv.w", {c2, 2 * c1, 3, 3}, 2 * c1 * 9, rng);
  s.add("gen.s2.conv.b", {c2});
  s.add_uniform("gen.rgb.w", {3, c2}, c2, rng);
  s.add("gen.rgb.b", {3});
  return p;
}

namespace {

std::vector<int> query_ids(const GeneratorConfig& config, const std::string& query) {
  auto ids = config.vocab.ids(phrasex::word_tokens(query));
  if (ids.empty()) ids.push_back(Vocabulary::kOov);
  return ids;
}

struct Attention {
  RowMatrix proj;  // c x T
  RowMatrix attn;  // HW x T
  RowMatrix ctx;   // c x HW
};

Attention attend(const RowMatrix& u, const Param& word_proj, const RowMatrix& words) {
  Attention a;
  a.proj = word_proj.mat() * words.transpose();
  const double scale = 1.0 / std::sqrt(static_cast<double>(u.rows()));
  a.attn = nn::softmax_rows((u.transpose() * a.proj) * scale);
  a.ctx = a.proj * a.attn.transpose();
  return a;
}

// Adds d/du to du; returns d/dproj.
RowMatrix attend_backward(const RowMatrix& u, const RowMatrix& proj, const RowMatrix& attn,
                          const RowMatrix& dctx, RowMatrix& du) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(u.rows()));
  RowMatrix dproj = dctx * attn;
  RowMatrix dattn = dctx.transpose() * proj;
  RowMatrix dscores = nn::softmax_rows_backward(attn, dattn) * scale;
  du.noalias() += proj * dscores.transpose();
  dproj.noalias() += u * dscores;
  return dproj;
}

RowMatrix stack(const RowMatrix& a, const RowMatrix& b) {
  RowMatrix out(a.rows() + b.rows(), a.cols());
  out << a, b;
  return out;
}

GeneratorTrace forward_ids(const GeneratorConfig& config, const ParamStore& store, std::vector<int> ids,
                           std::uint64_t noise_seed) {
  GeneratorTrace t;
  t.ids = std::move(ids);
  const int dw = config.word_dim, b = config.base_size();
  const Param& embed = store.at("gen.embed");
  t.words.resize(static_cast<Eigen::Index>(t.ids.size()), dw);
  for (std::size_t i = 0; i < t.ids.size(); ++i) t.words.row(static_cast<Eigen::Index>(i)) = embed.mat().row(t.ids[i]);

  Rng rng(noise_seed);
  t.noise.resize(config.noise_dim);
  for (double& z : t.noise) z = rng.uniform(-1.0, 1.0);
  t.cond_in.resize(dw + config.noise_dim);
  t.cond_in.head(dw) = t.words.colwise().mean().transpose();
  for (int i = 0; i < config.noise_dim; ++i) t.cond_in(dw + i) = t.noise[i];
  t.cond_out = (store.at("gen.cond.w").mat() * t.cond_in + store.at("gen.cond.b").vec()).array().tanh();

  nn::FeatureMap base{b, b, Eigen::Map<const RowMatrix>(t.cond_out.data(), config.base_channels, b * b)};
  nn::FeatureMap up1 = nn::upsample_nearest(base, 4);
  t.up1 = up1.x;
  Attention a1 = attend(t.up1, store.at("gen.s1.word"), t.words);
  t.proj1 = a1.proj;
  t.attention1 = a1.attn;
  t.ctx1 = a1.ctx;
  nn::FeatureMap cat1{up1.h, up1.w, stack(t.up1, t.ctx1)};
  nn::FeatureMap pre1 = nn::conv2d(cat1, store.at("gen.s1.conv.w"), store.at("gen.s1.conv.b"), 1, 1);
  t.pre1 = pre1.x;

  nn::FeatureMap h1{pre1.h, pre1.w, nn::relu(t.pre1)};
  nn::FeatureMap up2 = nn::upsample_nearest(h1, 2);
  t.up2 = up2.x;
  Attention a2 = attend(t.up2, store.at("gen.s2.word"), t.words);
  t.proj2 = a2.proj;
  t.attention2 = a2.attn;
  t.ctx2 = a2.ctx;
  nn::FeatureMap cat2{up2.h, up2.w, stack(t.up2, t.ctx2)};
  nn::FeatureMap pre2 = nn::conv2d(cat2, store.at("gen.s2.conv.w"), store.at("gen.s2.conv.b"), 1, 1);
  t.pre2 = pre2.x;

  RowMatrix logits = store.at("gen.rgb.w").mat() * nn::relu(t.pre2);
  logits.colwise() += store.at("gen.rgb.b").vec();
  t.rgb = logits.unaryExpr([](double v) { return nn::sigmoid(v); });
  t.image = nn::map_to_image(t.rgb, up2.h, up2.w);
  return t;
}

}  // namespace

GeneratorTrace generator_forward(const GeneratorConfig& config, const ParamStore& store,
                                 const std::string& query, std::uint64_t noise_seed) {
  return forward_ids(config, store, query_ids(config, query), noise_seed);
}

void generator_backward(const GeneratorConfig& config, const ParamStore& store, const GeneratorTrace& t,
                        const ImageTensor& dimage, ParamStore& grads) {
  const int b = config.base_size();
  const int s1 = 4 * b, s2 = 8 * b;
  const Eigen::Index c0 = config.base_channels, c1 = config.stage1_channels;

  RowMatrix drgb = nn::image_to_map(dimage).x;
  RowMatrix dlogits = drgb.array() * t.rgb.array() * (1.0 - t.rgb.array());
  RowMatrix h2 = nn::relu(t.pre2);
  grads.at("gen.rgb.w").grad_mat().noalias() += dlogits * h2.transpose();
  grads.at("gen.rgb.b").grad_vec() += dlogits.rowwise().sum();
  RowMatrix dh2 = store.at("gen.rgb.w").mat().transpose() * dlogits;
  RowMatrix dpre2 = nn::relu_backward(t.pre2, dh2);

  RowMatrix dwords = RowMatrix::Zero(t.words.rows(), t.words.cols());

  nn::FeatureMap cat2{s2, s2, stack(t.up2, t.ctx2)};
  RowMatrix dcat2 = nn::conv2d_backward(cat2, store.at("gen.s2.conv.w"), dpre2, s2, s2, 1, 1,
                                        &grads.at("gen.s2.conv.w"), &grads.at("gen.s2.conv.b"));
  RowMatrix dup2 = dcat2.topRows(c1);
  RowMatrix dctx2 = dcat2.bottomRows(c1);
  RowMatrix dproj2 = attend_backward(t.up2, t.proj2, t.attention2, dctx2, dup2);
  grads.at("gen.s2.word").grad_mat().noalias() += dproj2 * t.words;
  dwords.noalias() += dproj2.transpose() * store.at("gen.s2.word").mat();

  RowMatrix dh1 = nn::upsample_nearest_backward(dup2, s1, s1, 2);
  RowMatrix dpre1 = nn::relu_backward(t.pre1, dh1);
  nn::FeatureMap cat1{s1, s1, stack(t.up1, t.ctx1)};
  RowMatrix dcat1 = nn::conv2d_backward(cat1, store.at("gen.s1.conv.w"), dpre1, s1, s1, 1, 1,
                                        &grads.at("gen.s1.conv.w"), &grads.at("gen.s1.conv.b"));
  RowMatrix dup1 = dcat1.topRows(c0);
  RowMatrix dctx1 = dcat1.bottomRows(c0);
  RowMatrix dproj1 = attend_backward(t.up1, t.proj1, t.attention1, dctx1, dup1);
  grads.at("gen.s1.word").grad_mat().noalias() += dproj1 * t.words;
  dwords.noalias() += dproj1.transpose() * store.at("gen.s1.word").mat();

  RowMatrix dbase = nn::upsample_nearest_backward(dup1, b, b, 4);
  Eigen::VectorXd dcond_out = Eigen::Map<const Eigen::VectorXd>(dbase.data(), dbase.size());
  Eigen::VectorXd dpre = dcond_out.array() * (1.0 - t.cond_out.array().square());
  grads.at("gen.cond.w").grad_mat().noalias() += dpre * t.cond_in.transpose();
  grads.at("gen.cond.b").grad_vec() += dpre;
  Eigen::VectorXd dcond_in = store.at("gen.cond.w").mat().transpose() * dpre;
  const double inv_t = 1.0 / static_cast<double>(t.ids.size());
  for (Eigen::Index i = 0; i < dwords.rows(); ++i)
    dwords.row(i) += dcond_in.head(config.word_dim).transpose() * inv_t;

  auto gembed = grads.at("gen.embed").grad_mat();
  for (std::size_t i = 0; i < t.ids.size(); ++i) gembed.row(t.ids[i]) += dwords.row(static_cast<Eigen::Index>(i));
}

ImageTensor generate_image(const std::string& query, const GeneratorParams& params, std::uint64_t noise_seed) {
  return generator_forward(params.config, params.store, query, noise_seed).image;
}

// ---------------------------------------------------------------------------
// Pretraining

namespace {

double mse(const ImageTensor& a, const ImageTensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    s += d * d;
  }
  return s / static_cast<double>(a.data.size());
}

// Conditional critic over a 4x4 average-pooled image and the (detached)
// mean caption embedding.
struct Discriminator {
  static constexpr int kGrid = 4;
  static constexpr int kHidden = 16;
  ParamStore store;

  Discriminator(int word_dim, Rng& rng) {
    const std::size_t in = 3 * kGrid * kGrid + word_dim;
    store.add_uniform("disc.w1", {kHidden, in}, in, rng);
    store.add("disc.b1", {kHidden});
    store.add_uniform("disc.w2", {1, kHidden}, kHidden, rng);
    store.add("disc.b2", {1});
  }

  static Eigen::VectorXd pool(const ImageTensor& img) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(3 * kGrid * kGrid);
    const int cell = img.height / kGrid;
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < 3; ++c) f(c * kGrid * kGrid + (y / cell) * kGrid + x / cell) += img.at(y, x, c);
    return f / static_cast<double>(cell * cell);
  }

  struct Pass {
    Eigen::VectorXd in, pre;
    double logit = 0.0;
  };

  Pass forward(const ImageTensor& img, const Eigen::VectorXd& sentence) const {
    Pass p;
    Eigen::VectorXd pooled = pool(img);
    p.in.resize(pooled.size() + sentence.size());
    p.in << pooled, sentence;
    p.pre = store.at("disc.w1").mat() * p.in + store.at("disc.b1").vec();
    p.logit = (store.at("disc.w2").mat() * p.pre.cwiseMax(0.0))(0) + store.at("disc.b2").value[0];
    return p;
  }

  // Accumulates critic gradients when `train` is set; returns d/dimage.
  ImageTensor backward(const Pass& p, double dlogit, int size, bool train) {
    Eigen::VectorXd h = p.pre.cwiseMax(0.0);
    Eigen::VectorXd dh = store.at("disc.w2").mat().row(0).transpose() * dlogit;
    Eigen::VectorXd dpre = (p.pre.array() > 0.0).select(dh, 0.0);
    if (train) {
      store.at("disc.w2").grad_mat().row(0) += h.transpose() * dlogit;
      store.at("disc.b2").grad[0] += dlogit;
      store.at("disc.w1").grad_mat().noalias() += dpre * p.in.transpose();
      store.at("disc.b1").grad_vec() += dpre;
    }
    Eigen::VectorXd din = store.at("disc.w1").mat().transpose() * dpre;
    ImageTensor d = ImageTensor::filled(size, size, 0.0);
    const int cell = size / kGrid;
    const double norm = 1.0 / (cell * cell);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        for (int c = 0; c < 3; ++c) d.at(y, x, c) = din(c * kGrid * kGrid + (y / cell) * kGrid + x / cell) * norm;
    return d;
  }
};

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace

double reconstruction_loss(const CaptionDataset& dataset, const GeneratorParams& params, std::uint64_t seed) {
  double total = 0.0;
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    const auto& [caption, target] = dataset.items[i];
    auto img = generate_image(caption, params, derive_seed({"eval-noise", std::to_string(seed), std::to_string(i)}));
    total += mse(img, target);
  }
  return total / static_cast<double>(dataset.items.size());
}

PretrainResult pretrain_generator(const CaptionDataset& dataset, const PretrainConfig& config,
                                  const std::function<void(int, double)>& log) {
  if (dataset.items.empty()) throw std::invalid_argument("caption dataset is empty");
  GeneratorConfig gc = config.generator;
  if (gc.vocab.size() <= 1) gc.vocab = Vocabulary(dataset.words());
  for (const auto& [caption, img] : dataset.items)
    if (img.height != gc.image_size || img.width != gc.image_size)
      throw std::invalid_argument("dataset image does not match generator size: " + caption);

  PretrainResult result;
  result.params = init_generator(gc, derive_seed({"gen-init", std::to_string(config.seed)}));
  auto& store = result.params.store;
  result.epoch_loss.push_back(reconstruction_loss(dataset, result.params, config.seed));
  if (log) log(0, result.epoch_loss.back());

  Rng rng(derive_seed({"gen-pretrain", std::to_string(config.seed)}));
  Adam adam(config.learning_rate);
  Rng disc_rng(derive_seed({"disc-init", std::to_string(config.seed)}));
  Discriminator disc(gc.word_dim, disc_rng);
  Adam disc_adam(config.learning_rate);
  const bool adversarial = config.objective == PretrainObjective::adversarial;

  std::vector<std::size_t> order(dataset.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t batch = static_cast<std::size_t>(std::max(1, config.batch_size));

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      store.zero_grad();
      disc.store.zero_grad();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& [caption, target] = dataset.items[order[k]];
        auto ids = query_ids(gc, caption);
        for (int& id : ids)
          if (rng.uniform() < config.token_dropout) id = Vocabulary::kOov;
        auto trace = forward_ids(gc, store, ids, rng.next());
        ImageTensor dimage = ImageTensor::filled(gc.image_size, gc.image_size, 0.0);
        if (!adversarial) {
          double loss = mse(trace.image, target);
          const double scale = 2.0 * inv_b / static_cast<double>(target.data.size());
          for (std::size_t i = 0; i < dimage.data.size(); ++i)
            dimage.data[i] = scale * (trace.image.data[i] - target.data[i]);
          batch_loss += loss;
        } else {
          Eigen::VectorXd sentence = trace.words.colwise().mean().transpose();
          auto real = disc.forward(target, sentence);
          auto fake = disc.forward(trace.image, sentence);
          // critic: softplus(-D(real)) + softplus(D(fake))
          disc.backward(real, -nn::sigmoid(-real.logit) * inv_b, gc.image_size, true);
          disc.backward(fake, nn::sigmoid(fake.logit) * inv_b, gc.image_size, true);
          // generator: softplus(-D(fake)); its critic gradient is discarded
          dimage = disc.backward(fake, -nn::sigmoid(-fake.logit) * inv_b, gc.image_size, false);
          batch_loss += softplus(-fake.logit);
        }
        generator_backward(gc, store, trace, dimage, store);
      }
      if (!std::isfinite(batch_loss) || !store.all_finite())
        throw DivergenceError("generator pretraining diverged at epoch " + std::to_string(epoch));
      adam.step(store);
      if (adversarial) disc_adam.step(disc.store);
      epoch_total += batch_loss;
    }
    double mean_loss = epoch_total / static_cast<double>(order.size());
    if (!std::isfinite(mean_loss)) throw DivergenceError("generator pretraining loss is not finite");
    result.epoch_loss.push_back(mean_loss);
    if (log) log(epoch, mean_loss);
  }
  return result;
}

}  // namespace vistext::imagery
