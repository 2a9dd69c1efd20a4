#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vistext/common.hpp"

namespace vistext {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using Vec = Eigen::VectorXd;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

struct Param {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const { return value.size(); }
  std::size_t rows() const { return shape.empty() ? 1 : shape[0]; }
  std::size_t cols() const { return shape.empty() ? 1 : value.size() / shape[0]; }
  // Leading dimension by the product of the rest.
  ConstMatMap mat() const { return {value.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())}; }
  MatMap grad_mat() { return {grad.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())}; }
  ConstVecMap vec() const { return {value.data(), static_cast<Eigen::Index>(value.size())}; }
  VecMap grad_vec() { return {grad.data(), static_cast<Eigen::Index>(grad.size())}; }
};

// Named trainable tensors with paired gradient buffers.
class ParamStore {
 public:
  Param& add(const std::string& name, std::vector<std::size_t> shape);
  // U(-gain/sqrt(fan_in), gain/sqrt(fan_in))
  Param& add_uniform(const std::string& name, std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng,
                     double gain = 1.0);

  bool contains(std::string_view name) const { return params_.find(std::string(name)) != params_.end(); }
  Param& at(std::string_view name);
  const Param& at(std::string_view name) const;

  const std::map<std::string, Param>& all() const { return params_; }
  std::map<std::string, Param>& all() { return params_; }
  std::vector<std::string> names(std::string_view prefix = "") const;

  void zero_grad();
  bool all_finite() const;
  // Adds every parameter of `other` under its own name; names must not clash.
  void merge(const ParamStore& other);
  ParamStore subset(std::string_view prefix) const;
  // Copies values from `other` for every name present in both.
  void assign_values(const ParamStore& other);
  double grad_norm(std::string_view prefix = "") const;

  bool operator==(const ParamStore& other) const;

 private:
  std::map<std::string, Param> params_;
};

// Gradients keyed by prefix; an empty filter list means all.
void sgd_step(ParamStore& store, double lr, const std::vector<std::string>& prefixes);

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParamStore& store);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// Binary archive: magic, manifest length, JSON manifest, then each tensor's
// little-endian float64 payload in manifest order.
std::string encode_checkpoint(const ParamStore& store, const std::string& manifest_json);
ParamStore decode_checkpoint(std::string_view bytes, std::string* manifest_json = nullptr);
void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                     const std::string& manifest_json);
ParamStore load_checkpoint(const std::filesystem::path& path, std::string* manifest_json = nullptr);

}  // namespace vistext
