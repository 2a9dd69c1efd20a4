#include "doctest.h"
#include "test_support.hpp"

using namespace vistext;
using namespace vistext::imagery;

namespace {

GeneratorParams small() {
  return init_generator(vt_test::reduced_generator(Vocabulary({"red", "blue", "apple", "on", "table"})), 3);
}

}  // namespace

TEST_CASE("output shape, range and determinism") {
  auto g = small();
  auto a = generate_image("red apple on table", g, 9);
  CHECK(a.height == 8);
  CHECK(a.width == 8);
  CHECK(a.in_unit_range());
  CHECK(a == generate_image("red apple on table", g, 9));
  CHECK_FALSE(a == generate_image("red apple on table", g, 10));
}

TEST_CASE("attention rows sum to one") {
  auto g = small();
  auto t = generator_forward(g.config, g.store, "blue apple on table", 2);
  for (const RowMatrix* a : {&t.attention1, &t.attention2})
    for (Eigen::Index r = 0; r < a->rows(); ++r) CHECK(a->row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("generator gradient matches finite differences") {
  auto g = small();
  const std::string q = "red apple on table";
  auto t = generator_forward(g.config, g.store, q, 5);
  ImageTensor ones = t.image;
  std::fill(ones.data.begin(), ones.data.end(), 1.0);
  g.store.zero_grad();
  ParamStore grads = g.store;
  grads.zero_grad();
  generator_backward(g.config, g.store, t, ones, grads);
  for (auto& [name, p] : g.store.all()) p.grad = grads.at(name).grad;
  auto loss = [&] {
    auto img = generator_forward(g.config, g.store, q, 5).image;
    double s = 0;
    for (double v : img.data) s += v;
    return s;
  };
  std::size_t total = 0;
  for (const auto& [n, p] : g.store.all()) total += p.size();
  auto errs = vt_test::check_gradients(g.store, loss, std::max<std::size_t>(2, total / 100 / g.store.all().size() + 1));
  for (const auto& e : errs) CHECK_MESSAGE(e.rel < 1e-4, e.name);
}

TEST_CASE("config json round trip") {
  auto g = small();
  auto back = GeneratorConfig::from_json(g.config.to_json());
  CHECK(back.to_json() == g.config.to_json());
  CHECK(back.vocab.words() == g.config.vocab.words());
}

TEST_CASE("caption dataset and color map") {
  auto ds = color_caption_dataset(envcore::EntityPool::minihouse(), 8);
  CHECK(!ds.items.empty());
  auto words = ds.words();
  for (const auto& c : caption_color_words()) CHECK(std::find(words.begin(), words.end(), c) != words.end());
  for (const auto& n : held_out_nouns()) CHECK(std::find(words.begin(), words.end(), n) == words.end());
  auto red = tag_color("red");
  CHECK(red[0] > red[1]);
  CHECK(red[0] > red[2]);
}

TEST_CASE("pretraining lowers reconstruction loss") {
  auto ds = color_caption_dataset(envcore::EntityPool::minihouse(), 8);
  PretrainConfig pc;
  pc.epochs = 3;
  pc.generator = vt_test::reduced_generator(Vocabulary{});
  auto r = pretrain_generator(ds, pc);
  REQUIRE(r.epoch_loss.size() == 4);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  auto again = pretrain_generator(ds, pc);
  CHECK(again.params.store == r.params.store);
}
