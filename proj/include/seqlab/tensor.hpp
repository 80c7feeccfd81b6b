#pragma once

// Dense row-major tensors, rank 1 or 2, always double precision.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace seqlab {

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != static_cast<std::size_t>(numel_of(shape)))
      throw TensorError("tensor data length does not match shape");
  }

  static long long numel_of(const std::vector<int>& s) {
    long long n = 1;
    for (int d : s) {
      if (d <= 0) throw TensorError("tensor dims must be positive");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    auto n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  static Tensor vec(std::vector<double> d) {
    int n = static_cast<int>(d.size());
    return Tensor({n}, std::move(d));
  }

  int rank() const { return static_cast<int>(shape.size()); }
  std::size_t numel() const { return data.size(); }

  int rows() const { return rank() == 2 ? shape[0] : 1; }
  int cols() const { return rank() == 2 ? shape[1] : shape[0]; }

  double& at(int i) { return data[static_cast<std::size_t>(i)]; }
  double at(int i) const { return data[static_cast<std::size_t>(i)]; }
  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline std::string shape_str(const Tensor& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.shape[i]);
  }
  return s + "]";
}

// Ordered name -> Tensor map. Used both as the trainable-parameter registry
// and as the gradient map returned by backward(); iteration order is
// insertion order, which keeps every reduction over parameters deterministic.
class NamedTensorMap {
 public:
  Tensor& emplace(const std::string& name, Tensor t) {
    if (index_.count(name))
      throw TensorError("duplicate tensor name: " + name);
    index_[name] = entries_.size();
    entries_.push_back({name, std::move(t)});
    return entries_.back().second;
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw TensorError("no tensor named: " + name);
    return entries_[it->second].second;
  }
  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw TensorError("no tensor named: " + name);
    return entries_[it->second].second;
  }

  std::size_t size() const { return entries_.size(); }

  std::vector<std::string> names() const {
    std::vector<std::string> n;
    n.reserve(entries_.size());
    for (const auto& e : entries_) n.push_back(e.first);
    return n;
  }

  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

using ParameterStore = NamedTensorMap;
using GradientMap = NamedTensorMap;

}  // namespace seqlab
