#include "doctest.h"
#include "test_support.hpp"

using namespace vistext;
using namespace vistext::imagery;

namespace {

class CountingBackend : public RetrievalBackend {
 public:
  explicit CountingBackend(RetrievalBackend& inner) : inner_(inner) {}
  ImageTensor fetch(const std::string& q) override {
    ++calls;
    if (offline) throw BackendUnavailable(q);
    return inner_.fetch(q);
  }
  std::string name() const override { return "counting"; }
  int calls = 0;
  bool offline = false;

 private:
  RetrievalBackend& inner_;
};

}  // namespace

TEST_CASE("png round trip keeps 8-bit values and title") {
  ImageTensor img = ImageTensor::filled(4, 5, 0.2);
  img.at(1, 2, 0) = 1.0;
  auto bytes = encode_png(img, "red apple");
  auto back = decode_png(bytes);
  CHECK(back == quantize8(img));
  CHECK(png_title(bytes) == "red apple");
  CHECK_THROWS_AS(decode_png("nope"), ImageDecodeError);
}

TEST_CASE("canonicalization crops and resizes") {
  auto img = ImageTensor::filled(20, 40, 0.3);
  auto c = to_canonical(img, 16);
  CHECK(c.height == 16);
  CHECK(c.width == 16);
  CHECK(c.channel_mean(1) == doctest::Approx(0.3));
}

TEST_CASE("local corpus matches by tag overlap") {
  auto dir = vt_test::temp_dir("corpus");
  write_png(dir / "apple_red.png", ImageTensor::filled(8, 8, 0.9));
  write_png(dir / "book_blue.png", ImageTensor::filled(8, 8, 0.1));
  LocalCorpusBackend b(dir, 8);
  CHECK(b.match("red apple on table")->filename() == "apple_red.png");
  CHECK(b.match("blue thing")->filename() == "book_blue.png");
  CHECK_FALSE(b.match("zebra").has_value());
  auto gray = b.fetch("zebra");
  CHECK(gray.channel_mean(0) == doctest::Approx(0.5));
  std::filesystem::remove_all(dir);
}

TEST_CASE("cache hits avoid the backend and survive disconnection") {
  auto dir = vt_test::temp_dir("cache");
  write_synthetic_corpus(dir / "corpus", envcore::EntityPool::minihouse(), 16);
  auto local = local_corpus_backend(dir / "corpus");
  CountingBackend backend(*local);
  ImageCache cache(dir / "cache", 16);
  auto first = fetch_retrieved("red apple", backend, cache);
  auto again = fetch_retrieved("red apple", backend, cache);
  CHECK(backend.calls == 1);
  CHECK(first == again);
  backend.offline = true;
  ImageCache reopened(dir / "cache", 16);
  CHECK(fetch_retrieved("red apple", backend, reopened) == first);
  CHECK_THROWS_AS(fetch_retrieved("blue mug", backend, reopened), BackendUnavailable);
  CHECK(reopened.stats().hits == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corrupt cache entries are reported") {
  auto dir = vt_test::temp_dir("corrupt");
  ImageCache cache(dir, 8);
  cache.store("mug", ImageTensor::filled(8, 8, 0.4), "test");
  write_file_atomic(dir / "blobs" / (ImageCache::key("mug") + ".png"), "broken");
  CHECK_THROWS_AS(cache.lookup("mug"), CorruptCacheEntry);
  cache.evict("mug");
  CHECK_FALSE(cache.lookup("mug").has_value());
  std::filesystem::remove_all(dir);
}

TEST_CASE("fetch_images gives one tensor per query or one blank") {
  auto g = init_generator(vt_test::reduced_generator(Vocabulary({"red", "apple"})), 1);
  GeneratorSource src(g, 4);
  CHECK(fetch_images({"red apple", "apple"}, src).size() == 2);
  auto none = fetch_images({}, src);
  REQUIRE(none.size() == 1);
  CHECK(none[0].height == 8);
}

TEST_CASE("synthetic corpus covers the pool") {
  auto dir = vt_test::temp_dir("synth");
  write_synthetic_corpus(dir, envcore::EntityPool::minihouse(), 8);
  auto b = local_corpus_backend(dir);
  auto img = b->fetch("apple");
  CHECK(img.channel_mean(0) > img.channel_mean(2));
  std::filesystem::remove_all(dir);
}
