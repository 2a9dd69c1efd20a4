#include "vistext/imagery.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "httplib.h"
#include "json.hpp"
#include "vistext/common.hpp"
#include "vistext/phrasex.hpp"

namespace vistext::imagery {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Local corpus

namespace {

std::vector<std::string> stem_tags(const fs::path& file) {
  std::string stem = to_lower(file.stem().string());
  for (char& ch : stem)
    if (ch == '_' || ch == '-' || ch == '.') ch = ' ';
  auto words = split_words(stem);
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  return words;
}

}  // namespace

LocalCorpusBackend::LocalCorpusBackend(const fs::path& corpus_dir, int size) : size_(size) {
  if (fs::is_directory(corpus_dir))
    for (const auto& e : fs::directory_iterator(corpus_dir)) {
      if (!e.is_regular_file() || to_lower(e.path().extension().string()) != ".png") continue;
      entries_.push_back({e.path(), stem_tags(e.path())});
    }
  if (entries_.empty()) throw std::runtime_error("image corpus is empty: " + corpus_dir.string());
  std::sort(entries_.begin(), entries_.end(),
            [](const Entry& a, const Entry& b) { return a.file.filename() < b.file.filename(); });
}

std::optional<fs::path> LocalCorpusBackend::match(const std::string& query) const {
  auto tokens = phrasex::word_tokens(query);
  std::set<std::string> q(tokens.begin(), tokens.end());
  std::size_t best = 0;
  const Entry* chosen = nullptr;
  for (const auto& e : entries_) {
    std::size_t overlap = 0;
    for (const auto& t : e.tags) overlap += q.count(t);
    if (overlap > best) {
      best = overlap;
      chosen = &e;
    }
  }
  if (!chosen) return std::nullopt;
  return chosen->file;
}

ImageTensor LocalCorpusBackend::fetch(const std::string& query) {
  auto file = match(query);
  if (!file) return ImageTensor::filled(size_, size_, 0.5);
  return read_png(*file);
}

std::unique_ptr<RetrievalBackend> local_corpus_backend(const fs::path& corpus_dir) {
  return std::make_unique<LocalCorpusBackend>(corpus_dir);
}

HttpBackend::HttpBackend(std::string base_url) {
  std::string rest = base_url;
  const std::string scheme = "http://";
  if (rest.rfind(scheme, 0) == 0) rest = rest.substr(scheme.size());
  auto slash = rest.find('/');
  std::string hostport = rest.substr(0, slash);
  path_prefix_ = slash == std::string::npos ? "" : rest.substr(slash);
  if (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  auto colon = hostport.find(':');
  host_ = hostport.substr(0, colon);
  if (colon != std::string::npos) port_ = std::stoi(hostport.substr(colon + 1));
  if (host_.empty()) throw std::invalid_argument("bad backend url: " + base_url);
}

ImageTensor HttpBackend::fetch(const std::string& query) {
  httplib::Client client(host_, port_);
  client.set_connection_timeout(5);
  client.set_read_timeout(20);
  httplib::Params params{{"q", query}};
  auto res = client.Get(path_prefix_ + "/search", params, httplib::Headers{});
  if (!res || res->status != 200) throw BackendUnavailable(query);
  try {
    return decode_png(res->body);
  } catch (const ImageDecodeError&) {
    throw BackendUnavailable(query);
  }
}

// ---------------------------------------------------------------------------
// Cache

ImageCache::ImageCache(fs::path root, int size) : root_(std::move(root)), size_(size) {
  fs::create_directories(root_ / "blobs");
  fs::path index_file = root_ / "index.json";
  if (fs::exists(index_file)) {
    try {
      json j = json::parse(read_file(index_file));
      for (auto it = j.begin(); it != j.end(); ++it) {
        std::string hash = it.value().get<std::string>();
        if (fs::exists(root_ / "blobs" / (hash + ".png"))) index_[it.key()] = hash;
      }
    } catch (const json::exception&) {
      index_.clear();
    }
  }
}

std::string ImageCache::key(const std::string& query) { return sha256_hex(query); }

std::optional<ImageTensor> ImageCache::lookup(const std::string& query) const {
  std::string hash;
  {
    std::lock_guard lock(mu_);
    auto it = index_.find(query);
    if (it == index_.end()) return std::nullopt;
    hash = it->second;
  }
  try {
    ImageTensor t = read_png(root_ / "blobs" / (hash + ".png"));
    if (t.height != size_ || t.width != size_) throw CorruptCacheEntry(query);
    return t;
  } catch (const CorruptCacheEntry&) {
    throw;
  } catch (const std::exception&) {
    throw CorruptCacheEntry(query);
  }
}

void ImageCache::store(const std::string& query, const ImageTensor& canonical, const std::string& source) {
  std::string hash = key(query);
  write_png(root_ / "blobs" / (hash + ".png"), canonical);
  json side = {{"query", query}, {"source", source}, {"timestamp", utc_timestamp()}};
  write_file_atomic(root_ / "blobs" / (hash + ".json"), side.dump(2) + "\n");
  std::lock_guard lock(mu_);
  index_[query] = hash;
  write_index();
}

void ImageCache::evict(const std::string& query) {
  std::lock_guard lock(mu_);
  auto it = index_.find(query);
  if (it == index_.end()) return;
  std::error_code ec;
  fs::remove(root_ / "blobs" / (it->second + ".png"), ec);
  fs::remove(root_ / "blobs" / (it->second + ".json"), ec);
  index_.erase(it);
  write_index();
}

void ImageCache::clear() {
  std::lock_guard lock(mu_);
  std::error_code ec;
  fs::remove_all(root_ / "blobs", ec);
  fs::create_directories(root_ / "blobs");
  index_.clear();
  write_index();
}

void ImageCache::write_index() const {
  json j = json::object();
  for (const auto& [q, h] : index_) j[q] = h;
  write_file_atomic(root_ / "index.json", j.dump(2) + "\n");
}

std::size_t ImageCache::size() const {
  std::lock_guard lock(mu_);
  return index_.size();
}

CacheStats ImageCache::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

void ImageCache::reset_stats() {
  std::lock_guard lock(mu_);
  stats_ = {};
}

std::unique_lock<std::mutex> ImageCache::lock_key(const std::string& query) {
  std::mutex* m;
  {
    std::lock_guard lock(mu_);
    auto& slot = key_locks_[query];
    if (!slot) slot = std::make_unique<std::mutex>();
    m = slot.get();
  }
  return std::unique_lock<std::mutex>(*m);
}

ImageTensor fetch_retrieved(const std::string& query, RetrievalBackend& backend, ImageCache& cache) {
  auto key_lock = cache.lock_key(query);
  try {
    if (auto hit = cache.lookup(query)) {
      std::lock_guard lock(cache.mu_);
      ++cache.stats_.hits;
      return *hit;
    }
  } catch (const CorruptCacheEntry&) {
    cache.evict(query);
  }
  {
    std::lock_guard lock(cache.mu_);
    ++cache.stats_.misses;
    ++cache.stats_.backend_calls;
  }
  ImageTensor raw = backend.fetch(query);
  ImageTensor canonical = quantize8(to_canonical(raw, cache.image_size()));
  cache.store(query, canonical, backend.name());
  return canonical;
}

// ---------------------------------------------------------------------------
// Synthetic data

const std::vector<std::string>& caption_color_words() {
  static const std::vector<std::string> words{"red", "green", "blue"};
  return words;
}

const std::vector<std::string>& caption_generic_nouns() {
  static const std::vector<std::string> words{
      "ball",  "box",   "cup",   "hat",    "shoe", "car",  "kite",  "bag",  "bird",   "fish",
      "flower", "chair", "bottle", "pillow", "towel", "coat", "bucket", "fan", "basket", "rug"};
  return words;
}

const std::vector<std::string>& held_out_nouns() {
  static const std::vector<std::string> words{"boat", "drum", "sock", "pen",    "key",
                                              "shell", "leaf", "ring", "comb", "brush"};
  return words;
}

std::array<double, 3> tag_color(const std::string& tag) {
  if (tag == "red") return {0.85, 0.15, 0.15};
  if (tag == "green") return {0.15, 0.8, 0.2};
  if (tag == "blue") return {0.15, 0.25, 0.85};
  if (tag == "yellow") return {0.85, 0.8, 0.15};
  return {0.6, 0.6, 0.6};
}

ImageTensor render_swatch(const std::array<double, 3>& fg, const std::array<double, 3>& bg, int size,
                          std::uint64_t variant) {
  Rng rng(variant);
  double cy = size * rng.uniform(0.4, 0.6);
  double cx = size * rng.uniform(0.4, 0.6);
  double r = size * rng.uniform(0.25, 0.35);
  ImageTensor img = ImageTensor::filled(size, size, 0.0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double dy = y + 0.5 - cy, dx = x + 0.5 - cx;
      bool inside = dy * dy + dx * dx <= r * r;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = inside ? fg[c] : bg[c];
    }
  return img;
}

std::vector<std::string> CaptionDataset::words() const {
  std::set<std::string> all;
  for (const auto& [caption, img] : items)
    for (auto& w : phrasex::word_tokens(caption)) all.insert(w);
  return {all.begin(), all.end()};
}

CaptionDataset color_caption_dataset(const envcore::EntityPool& pool, int size) {
  const std::array<double, 3> gray{0.5, 0.5, 0.5};
  CaptionDataset ds;
  auto add = [&](const std::string& caption, const std::array<double, 3>& fg) {
    ds.items.emplace_back(caption, render_swatch(fg, gray, size, derive_seed({"swatch", caption})));
  };
  for (const auto& color : caption_color_words())
    for (const auto& noun : caption_generic_nouns()) add(color + " " + noun, tag_color(color));
  for (const auto& o : pool.objects) add(o.name, tag_color(o.visual_tag));
  for (const auto& c : pool.containers) add(c.name, tag_color(c.visual_tag));
  std::size_t rel = 0;
  for (const auto& o : pool.objects) {
    auto goals = pool.goal_map.find(o.name);
    if (goals == pool.goal_map.end()) continue;
    const auto* c = pool.find_container(goals->second[rel++ % goals->second.size()]);
    add(o.name + " " + std::string(envcore::to_string(c->preposition)) + " " + c->name,
        tag_color(o.visual_tag));
  }
  return ds;
}

void write_synthetic_corpus(const fs::path& dir, const envcore::EntityPool& pool, int size) {
  fs::create_directories(dir);
  const std::array<double, 3> gray{0.5, 0.5, 0.5};
  auto put = [&](const std::string& stem, const std::array<double, 3>& fg) {
    write_png(dir / (stem + ".png"), render_swatch(fg, gray, size, derive_seed({"corpus", stem})));
  };
  for (const auto& o : pool.objects) put(o.name + "_" + o.visual_tag, tag_color(o.visual_tag));
  for (const auto& c : pool.containers) put(c.name + "_" + c.visual_tag, tag_color(c.visual_tag));
  for (const auto& r : pool.rooms) put(r, {0.7, 0.65, 0.55});
  put(std::string(envcore::kFloor), {0.45, 0.35, 0.25});
  for (const auto& color : caption_color_words()) put(color, tag_color(color));
}

// ---------------------------------------------------------------------------
// Sources

std::uint64_t query_noise_seed(std::uint64_t base_seed, const std::string& query) {
  return derive_seed({"noise", std::to_string(base_seed), query});
}

ImageTensor GeneratorSource::image(const std::string& query) {
  return generate_image(query, params_, query_noise_seed(noise_seed_, query));
}

ImageTensor blank_image(int size) { return ImageTensor::filled(size, size, 0.0); }

std::vector<ImageTensor> fetch_images(const std::vector<std::string>& queries, ImageSource& source) {
  if (queries.empty()) return {blank_image(source.image_size())};
  std::vector<ImageTensor> out;
  out.reserve(queries.size());
  for (const auto& q : queries) {
    try {
      out.push_back(source.image(q));
    } catch (const SourceError&) {
      throw;
    } catch (const std::exception& e) {
      throw SourceError(q, e.what());
    }
  }
  return out;
}

}  // namespace vistext::imagery
