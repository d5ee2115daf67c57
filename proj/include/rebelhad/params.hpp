#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rebelhad/rng.hpp"
#include "rebelhad/tensor.hpp"

namespace rebelhad {

struct ParamEntry {
  std::string name;
  Tensor value;
  bool frozen = false;
  Tensor grad;  // same shape as value
};

/// Ordered, uniquely named parameter tensors with per-entry freeze flags.
/// Frozen entries never expose a gradient buffer to the backward passes
/// and are skipped by the optimizer.
class ParamTree {
 public:
  size_t add(std::string name, Tensor value, bool frozen = false);

  bool contains(std::string_view name) const;
  size_t index(std::string_view name) const;

  ParamEntry& entry(size_t i) { return entries_[i]; }
  const ParamEntry& entry(size_t i) const { return entries_[i]; }
  size_t size() const { return entries_.size(); }
  std::span<ParamEntry> entries() { return entries_; }
  std::span<const ParamEntry> entries() const { return entries_; }

  const Tensor& value(std::string_view name) const { return entries_[index(name)].value; }
  Tensor& value(std::string_view name) { return entries_[index(name)].value; }
  // Gradient accumulator, or nullptr for frozen entries.
  Tensor* grad(std::string_view name);

  void zero_grad();
  // Sets the frozen flag of every entry whose name starts with `prefix`.
  void set_frozen(std::string_view prefix, bool frozen);
  bool frozen(std::string_view name) const { return entries_[index(name)].frozen; }

  size_t parameter_count() const;
  size_t trainable_count() const;
  double trainable_norm() const;
  bool grads_finite() const;

  // FNV-1a over the raw bytes of one entry's values.
  uint64_t hash_entry(size_t i) const;

  // Appends copies of every entry of `other` with `prefix` prepended.
  void merge(const ParamTree& other, std::string_view prefix);
  // Copies entries whose names start with `prefix` (prefix stripped).
  ParamTree extract(std::string_view prefix) const;

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, size_t> by_name_;
};

// Kaiming-uniform (fan-in, ReLU gain) weights and zero bias, registered as
// `<name>.w` with shape (cout, cin, k, k) and `<name>.b` with shape (cout,1,1,1).
void add_conv(ParamTree& tree, const std::string& name, int cout, int cin, int k, bool frozen,
              SplitMix64& rng);

// Transposed-conv weights, shape (cin, cout, k, k); fan-in counts the
// taps that reach one output at the given stride.
void add_conv_transpose(ParamTree& tree, const std::string& name, int cin, int cout, int k,
                        int stride, bool frozen, SplitMix64& rng);

}  // namespace rebelhad
