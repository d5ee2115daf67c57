#include "rebelhad/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "rebelhad/error.hpp"

namespace rebelhad {

size_t ParamTree::add(std::string name, Tensor value, bool frozen) {
  if (by_name_.contains(name)) throw SpecError("duplicate parameter name: " + name);
  const size_t i = entries_.size();
  by_name_.emplace(name, i);
  Tensor grad = Tensor::zeros_like(value);
  entries_.push_back(ParamEntry{std::move(name), std::move(value), frozen, std::move(grad)});
  return i;
}

bool ParamTree::contains(std::string_view name) const {
  return by_name_.find(std::string(name)) != by_name_.end();
}

size_t ParamTree::index(std::string_view name) const {
  auto it = by_name_.find(std::string(name));
  if (it == by_name_.end()) throw ModelError("unknown parameter: " + std::string(name));
  return it->second;
}

Tensor* ParamTree::grad(std::string_view name) {
  ParamEntry& e = entries_[index(name)];
  return e.frozen ? nullptr : &e.grad;
}

void ParamTree::zero_grad() {
  for (auto& e : entries_) e.grad.set_zero();
}

void ParamTree::set_frozen(std::string_view prefix, bool frozen) {
  for (auto& e : entries_) {
    if (e.name.starts_with(prefix)) e.frozen = frozen;
  }
}

size_t ParamTree::parameter_count() const {
  size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

size_t ParamTree::trainable_count() const {
  size_t n = 0;
  for (const auto& e : entries_) {
    if (!e.frozen) n += e.value.size();
  }
  return n;
}

double ParamTree::trainable_norm() const {
  double s = 0.0;
  for (const auto& e : entries_) {
    if (!e.frozen) s += e.value.squared_norm();
  }
  return std::sqrt(s);
}

bool ParamTree::grads_finite() const {
  for (const auto& e : entries_) {
    if (!e.grad.all_finite()) return false;
  }
  return true;
}

uint64_t ParamTree::hash_entry(size_t i) const {
  const Tensor& t = entries_[i].value;
  uint64_t h = 1469598103934665603ULL;
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
  for (size_t k = 0; k < t.size() * sizeof(double); ++k) {
    h ^= bytes[k];
    h *= 1099511628211ULL;
  }
  return h;
}

void ParamTree::merge(const ParamTree& other, std::string_view prefix) {
  for (const auto& e : other.entries_) add(std::string(prefix) + e.name, e.value, e.frozen);
}

ParamTree ParamTree::extract(std::string_view prefix) const {
  ParamTree out;
  for (const auto& e : entries_) {
    if (e.name.starts_with(prefix)) out.add(e.name.substr(prefix.size()), e.value, e.frozen);
  }
  return out;
}

void add_conv(ParamTree& tree, const std::string& name, int cout, int cin, int k, bool frozen,
              SplitMix64& rng) {
  Tensor w(cout, cin, k, k);
  const double bound = std::sqrt(6.0 / (cin * k * k));
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  tree.add(name + ".w", std::move(w), frozen);
  tree.add(name + ".b", Tensor(cout, 1, 1, 1), frozen);
}

void add_conv_transpose(ParamTree& tree, const std::string& name, int cin, int cout, int k,
                        int stride, bool frozen, SplitMix64& rng) {
  Tensor w(cin, cout, k, k);
  const int taps = std::max(1, (k * k) / (stride * stride));
  const double bound = std::sqrt(6.0 / (cin * taps));
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  tree.add(name + ".w", std::move(w), frozen);
  tree.add(name + ".b", Tensor(cout, 1, 1, 1), frozen);
}

}  // namespace rebelhad
