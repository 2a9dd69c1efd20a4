#pragma once

// Image acquisition for phrase queries: cached retrieval from a backend, or
// a small attention-driven text-to-image generator.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vistext/envcore.hpp"
#include "vistext/image.hpp"
#include "vistext/params.hpp"
#include "vistext/vocab.hpp"

namespace vistext::imagery {

class BackendUnavailable : public std::runtime_error {
 public:
  explicit BackendUnavailable(const std::string& query)
      : std::runtime_error("retrieval backend unavailable for query '" + query + "'"), query_(query) {}
  const std::string& query() const { return query_; }

 private:
  std::string query_;
};

class CorruptCacheEntry : public std::runtime_error {
 public:
  explicit CorruptCacheEntry(const std::string& query)
      : std::runtime_error("corrupt cache entry for '" + query + "'"), query_(query) {}
  const std::string& query() const { return query_; }

 private:
  std::string query_;
};

// Wraps any source failure with the query that triggered it.
class SourceError : public std::runtime_error {
 public:
  SourceError(const std::string& query, const std::string& cause)
      : std::runtime_error("image source failed for '" + query + "': " + cause), query_(query) {}
  const std::string& query() const { return query_; }

 private:
  std::string query_;
};

// ---------------------------------------------------------------------------
// Retrieval

class RetrievalBackend {
 public:
  virtual ~RetrievalBackend() = default;
  // Any shape; the cache canonicalizes. Throws BackendUnavailable.
  virtual ImageTensor fetch(const std::string& query) = 0;
  virtual std::string name() const = 0;
};

// Resolves a query to the corpus image whose filename tags overlap it most
// (ties by filename order); no overlap yields a uniform 0.5 placeholder.
// Tags are the '_' / '-' separated words of the file stem.
class LocalCorpusBackend : public RetrievalBackend {
 public:
  explicit LocalCorpusBackend(const std::filesystem::path& corpus_dir, int size = kCanonicalSize);
  ImageTensor fetch(const std::string& query) override;
  std::string name() const override { return "local-corpus"; }
  // Chosen file for a query, nullopt for the placeholder.
  std::optional<std::filesystem::path> match(const std::string& query) const;

 private:
  struct Entry {
    std::filesystem::path file;
    std::vector<std::string> tags;
  };
  std::vector<Entry> entries_;
  int size_;
};

std::unique_ptr<RetrievalBackend> local_corpus_backend(const std::filesystem::path& corpus_dir);

// Stands in for a backend that cannot be reached.
class OfflineBackend : public RetrievalBackend {
 public:
  ImageTensor fetch(const std::string& query) override { throw BackendUnavailable(query); }
  std::string name() const override { return "offline"; }
};

// Optional web plugin: GET <base_url>/search?q=<query> answering with a PNG.
class HttpBackend : public RetrievalBackend {
 public:
  explicit HttpBackend(std::string base_url);
  ImageTensor fetch(const std::string& query) override;
  std::string name() const override { return "http"; }

 private:
  std::string host_;
  int port_ = 80;
  std::string path_prefix_;
};

struct CacheStats {
  long hits = 0;
  long misses = 0;
  long backend_calls = 0;
  bool operator==(const CacheStats&) const = default;
};

// <root>/index.json maps query -> sha256(query); blobs/<hash>.png holds the
// canonical image and blobs/<hash>.json its sidecar (query, source, timestamp).
class ImageCache {
 public:
  explicit ImageCache(std::filesystem::path root, int size = kCanonicalSize);

  // Throws CorruptCacheEntry when the blob is unreadable or misshapen.
  std::optional<ImageTensor> lookup(const std::string& query) const;
  void store(const std::string& query, const ImageTensor& canonical, const std::string& source);
  void evict(const std::string& query);
  void clear();

  std::size_t size() const;
  CacheStats stats() const;
  void reset_stats();
  const std::filesystem::path& root() const { return root_; }
  int image_size() const { return size_; }
  static std::string key(const std::string& query);

  // Serializes concurrent misses on the same query.
  std::unique_lock<std::mutex> lock_key(const std::string& query);

 private:
  friend ImageTensor fetch_retrieved(const std::string&, RetrievalBackend&, ImageCache&);
  void write_index() const;

  std::filesystem::path root_;
  int size_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> index_;
  std::map<std::string, std::unique_ptr<std::mutex>> key_locks_;
  CacheStats stats_;
};

ImageTensor fetch_retrieved(const std::string& query, RetrievalBackend& backend, ImageCache& cache);

// ---------------------------------------------------------------------------
// Generator: sentence + noise -> base grid, then two upsampling stages (x4,
// x2) that each attend over the query's words before a 3x3 convolution.

struct GeneratorConfig {
  int image_size = kCanonicalSize;  // base grid is image_size / 8
  int word_dim = 32;
  int noise_dim = 16;
  int base_channels = 16;
  int stage1_channels = 16;
  int stage2_channels = 8;
  Vocabulary vocab;

  int base_size() const { return std::max(1, image_size / 8); }
  std::string to_json() const;
  static GeneratorConfig from_json(const std::string& text);
};

struct GeneratorParams {
  GeneratorConfig config;
  ParamStore store;  // every name starts with "gen."
};

GeneratorParams init_generator(const GeneratorConfig& config, std::uint64_t seed);

struct GeneratorTrace {
  std::vector<int> ids;
  std::vector<double> noise;
  RowMatrix words;       // T x word_dim
  Eigen::VectorXd cond_in;
  Eigen::VectorXd cond_out;  // tanh output, base_channels*b*b
  RowMatrix up1, ctx1, pre1;
  RowMatrix up2, ctx2, pre2;
  RowMatrix proj1, proj2;  // projected words, channels x T
  RowMatrix attention1;  // (4b)^2 x T
  RowMatrix attention2;  // (8b)^2 x T
  RowMatrix rgb;         // 3 x (8b)^2, after the sigmoid
  ImageTensor image;
};

GeneratorTrace generator_forward(const GeneratorConfig& config, const ParamStore& store,
                                 const std::string& query, std::uint64_t noise_seed);
// Accumulates d(loss)/d(params) into grads given d(loss)/d(image).
void generator_backward(const GeneratorConfig& config, const ParamStore& store,
                        const GeneratorTrace& trace, const ImageTensor& dimage, ParamStore& grads);

ImageTensor generate_image(const std::string& query, const GeneratorParams& params,
                           std::uint64_t noise_seed);

// ---------------------------------------------------------------------------
// Pretraining on a synthetic captioned-image set

struct CaptionDataset {
  std::vector<std::pair<std::string, ImageTensor>> items;
  std::vector<std::string> words() const;
};

const std::vector<std::string>& caption_color_words();     // red, green, blue
const std::vector<std::string>& caption_generic_nouns();   // paired with every color word
const std::vector<std::string>& held_out_nouns();          // never captioned

// Dominant RGB for a visual tag or color word; gray for unknown tags.
std::array<double, 3> tag_color(const std::string& tag);
// A disk of `fg` over `bg`, geometry jittered by `variant`.
ImageTensor render_swatch(const std::array<double, 3>& fg, const std::array<double, 3>& bg, int size,
                          std::uint64_t variant);

// Color-word captions over generic nouns, plus captions naming each pool
// entity (and entity relations) rendered in the entity's visual tag color.
CaptionDataset color_caption_dataset(const envcore::EntityPool& pool, int size = kCanonicalSize);

enum class PretrainObjective { reconstruction, adversarial };

struct PretrainConfig {
  int epochs = 40;
  int batch_size = 8;
  double learning_rate = 0.003;
  double token_dropout = 0.15;
  PretrainObjective objective = PretrainObjective::reconstruction;
  std::uint64_t seed = 1;
  GeneratorConfig generator;  // vocab is filled from the dataset when empty
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PretrainResult {
  GeneratorParams params;
  std::vector<double> epoch_loss;  // entry 0 is the loss before any update
};

PretrainResult pretrain_generator(const CaptionDataset& dataset, const PretrainConfig& config,
                                  const std::function<void(int, double)>& log = {});
// Mean squared reconstruction error over the dataset with fixed noise.
double reconstruction_loss(const CaptionDataset& dataset, const GeneratorParams& params,
                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Uniform source interface used by the agent

class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual ImageTensor image(const std::string& query) = 0;
  virtual int image_size() const = 0;
};

class RetrievalSource : public ImageSource {
 public:
  RetrievalSource(RetrievalBackend& backend, ImageCache& cache) : backend_(backend), cache_(cache) {}
  ImageTensor image(const std::string& query) override { return fetch_retrieved(query, backend_, cache_); }
  int image_size() const override { return cache_.image_size(); }

 private:
  RetrievalBackend& backend_;
  ImageCache& cache_;
};

class GeneratorSource : public ImageSource {
 public:
  GeneratorSource(const GeneratorParams& params, std::uint64_t noise_seed)
      : params_(params), noise_seed_(noise_seed) {}
  ImageTensor image(const std::string& query) override;
  int image_size() const override { return params_.config.image_size; }

 private:
  const GeneratorParams& params_;
  std::uint64_t noise_seed_;
};

// Per-query noise seed used by every generator-backed path.
std::uint64_t query_noise_seed(std::uint64_t base_seed, const std::string& query);

ImageTensor blank_image(int size = kCanonicalSize);

// One tensor per query in order; a single blank tensor for no queries.
std::vector<ImageTensor> fetch_images(const std::vector<std::string>& queries, ImageSource& source);

// Writes <name>_<tag>.png swatches for every pool entity plus room/floor and
// color-word images.
void write_synthetic_corpus(const std::filesystem::path& dir, const envcore::EntityPool& pool,
                            int size = kCanonicalSize);

}  // namespace vistext::imagery
