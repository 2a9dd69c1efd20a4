#include "doctest.h"
#include "test_support.hpp"
#include "vistext/vocab.hpp"

using namespace vistext;

TEST_CASE("sha256 known vector") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("derive_seed is stable and part-sensitive") {
  CHECK(derive_seed({"a", "b"}) == derive_seed({"a", "b"}));
  CHECK(derive_seed({"a", "b"}) != derive_seed({"b", "a"}));
  CHECK(derive_seed({"ab"}) != derive_seed({"a", "b"}));
}

TEST_CASE("rng draws") {
  Rng a(3), b(3);
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  Rng c(5);
  for (int i = 0; i < 100; ++i) CHECK(c.index(7) < 7);
  std::vector<int> v{1, 2, 3, 4, 5};
  Rng d(9);
  d.shuffle(v);
  std::sort(v.begin(), v.end());
  CHECK(v == std::vector<int>{1, 2, 3, 4, 5});
}

TEST_CASE("string helpers") {
  CHECK(to_lower("ApPle") == "apple");
  CHECK(split_words("  a b\tc ") == std::vector<std::string>{"a", "b", "c"});
  CHECK(join({"a", "b"}, "|") == "a|b");
}

TEST_CASE("atomic file write round trip") {
  auto dir = vt_test::temp_dir("common");
  write_file_atomic(dir / "x.txt", "hello");
  CHECK(read_file(dir / "x.txt") == "hello");
  write_file_atomic(dir / "x.txt", "again");
  CHECK(read_file(dir / "x.txt") == "again");
  CHECK_THROWS(read_file(dir / "missing"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("vocabulary maps unknown words to the shared bucket") {
  Vocabulary v({"b", "a", "a"});
  CHECK(v.words().front() == Vocabulary::kOovToken);
  CHECK(v.size() == 3);
  CHECK(v.id("a") != Vocabulary::kOov);
  CHECK(v.id("zzz") == Vocabulary::kOov);
  CHECK(v.ids({"a", "zzz"}) == std::vector<int>{v.id("a"), 0});
}

TEST_CASE("param store checkpoint round trip") {
  ParamStore s;
  Rng rng(1);
  s.add_uniform("w", {3, 4}, 4, rng);
  s.add("b", {4});
  std::string meta;
  auto back = decode_checkpoint(encode_checkpoint(s, "{\"k\":1}"), &meta);
  CHECK(back == s);
  CHECK(meta == "{\"k\":1}");
  CHECK_THROWS(decode_checkpoint("garbage"));
  for (double x : s.at("w").value) CHECK(std::abs(x) <= 0.5);
}

TEST_CASE("sgd and adam move against the gradient") {
  ParamStore s;
  s.add("x", {1}).value[0] = 1.0;
  s.at("x").grad[0] = 2.0;
  sgd_step(s, 0.1, {});
  CHECK(s.at("x").value[0] == doctest::Approx(0.8));
  Adam adam(0.01);
  s.at("x").grad[0] = 5.0;
  adam.step(s);
  CHECK(s.at("x").value[0] == doctest::Approx(0.79));
}
