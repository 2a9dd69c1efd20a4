#include "vistext/params.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

namespace vistext {

namespace {
constexpr char kMagic[8] = {'V', 'T', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(std::string_view in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[pos + i]);
  return v;
}
}  // namespace

Param& ParamStore::add(const std::string& name, std::vector<std::size_t> shape) {
  if (params_.count(name)) throw std::invalid_argument("duplicate parameter " + name);
  std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  Param p{std::move(shape), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  return params_.emplace(name, std::move(p)).first->second;
}

Param& ParamStore::add_uniform(const std::string& name, std::vector<std::size_t> shape,
                               std::size_t fan_in, Rng& rng, double gain) {
  Param& p = add(name, std::move(shape));
  double bound = gain / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : p.value) v = rng.uniform(-bound, bound);
  return p;
}

Param& ParamStore::at(std::string_view name) {
  auto it = params_.find(std::string(name));
  if (it == params_.end()) throw std::out_of_range("no parameter " + std::string(name));
  return it->second;
}

const Param& ParamStore::at(std::string_view name) const {
  auto it = params_.find(std::string(name));
  if (it == params_.end()) throw std::out_of_range("no parameter " + std::string(name));
  return it->second;
}

std::vector<std::string> ParamStore::names(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& [n, p] : params_)
    if (n.compare(0, prefix.size(), prefix) == 0) out.push_back(n);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [n, p] : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

bool ParamStore::all_finite() const {
  for (const auto& [n, p] : params_)
    for (double v : p.value)
      if (!std::isfinite(v)) return false;
  return true;
}

void ParamStore::merge(const ParamStore& other) {
  for (const auto& [n, p] : other.params_) {
    if (params_.count(n)) throw std::invalid_argument("duplicate parameter " + n);
    params_.emplace(n, p);
  }
}

ParamStore ParamStore::subset(std::string_view prefix) const {
  ParamStore out;
  for (const auto& [n, p] : params_)
    if (n.compare(0, prefix.size(), prefix) == 0) out.params_.emplace(n, p);
  return out;
}

void ParamStore::assign_values(const ParamStore& other) {
  for (auto& [n, p] : params_) {
    auto it = other.params_.find(n);
    if (it == other.params_.end()) continue;
    if (it->second.shape != p.shape) throw std::invalid_argument("shape mismatch for " + n);
    p.value = it->second.value;
  }
}

double ParamStore::grad_norm(std::string_view prefix) const {
  double s = 0.0;
  for (const auto& [n, p] : params_)
    if (n.compare(0, prefix.size(), prefix) == 0)
      for (double g : p.grad) s += g * g;
  return std::sqrt(s);
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (const auto& [n, p] : params_) {
    auto it = other.params_.find(n);
    if (it == other.params_.end() || it->second.shape != p.shape) return false;
    if (std::memcmp(p.value.data(), it->second.value.data(), p.value.size() * sizeof(double)) != 0)
      return false;
  }
  return true;
}

void sgd_step(ParamStore& store, double lr, const std::vector<std::string>& prefixes) {
  for (auto& [n, p] : store.all()) {
    bool selected = prefixes.empty();
    for (const auto& pre : prefixes)
      if (n.compare(0, pre.size(), pre) == 0) selected = true;
    if (!selected) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
  }
}

void Adam::step(ParamStore& store) {
  ++t_;
  double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [n, p] : store.all()) {
    auto& m = m_[n];
    auto& v = v_[n];
    if (m.empty()) {
      m.assign(p.size(), 0.0);
      v.assign(p.size(), 0.0);
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1 - beta2_) * g * g;
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

std::string encode_checkpoint(const ParamStore& store, const std::string& manifest_json) {
  nlohmann::json header;
  header["meta"] = manifest_json.empty() ? nlohmann::json::object() : nlohmann::json::parse(manifest_json);
  header["params"] = nlohmann::json::array();
  for (const auto& [n, p] : store.all()) header["params"].push_back({{"name", n}, {"shape", p.shape}});
  auto text = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put_u64(out, text.size());
  out += text;
  for (const auto& [n, p] : store.all())
    for (double v : p.value) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      put_u64(out, bits);
    }
  return out;
}

ParamStore decode_checkpoint(std::string_view bytes, std::string* manifest_json) {
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("not a checkpoint archive");
  auto len = get_u64(bytes, 8);
  if (16 + len > bytes.size()) throw std::runtime_error("truncated checkpoint manifest");
  auto header = nlohmann::json::parse(bytes.substr(16, len));
  if (manifest_json) *manifest_json = header["meta"].dump();
  ParamStore store;
  std::size_t pos = 16 + len;
  for (const auto& entry : header.at("params")) {
    auto& p = store.add(entry.at("name").get<std::string>(),
                        entry.at("shape").get<std::vector<std::size_t>>());
    if (pos + 8 * p.size() > bytes.size()) throw std::runtime_error("truncated checkpoint payload");
    for (double& v : p.value) {
      auto bits = get_u64(bytes, pos);
      std::memcpy(&v, &bits, sizeof v);
      pos += 8;
    }
  }
  if (pos != bytes.size()) throw std::runtime_error("trailing bytes in checkpoint");
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const std::string& manifest_json) {
  write_file_atomic(path, encode_checkpoint(store, manifest_json));
}

ParamStore load_checkpoint(const std::filesystem::path& path, std::string* manifest_json) {
  return decode_checkpoint(read_file(path), manifest_json);
}

}  // namespace vistext
