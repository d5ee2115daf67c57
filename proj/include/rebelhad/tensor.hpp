#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rebelhad {

/// Dense NCHW tensor of doubles. Rank is fixed at four; lower-rank data
/// (biases, vectors) use trailing unit axes. Row-major, width innermost.
class Tensor {
 public:
  using Shape = std::array<int, 4>;

  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0);
  explicit Tensor(Shape shape, double fill = 0.0);

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

  const Shape& shape() const { return shape_; }
  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  size_t plane() const { return static_cast<size_t>(shape_[2]) * shape_[3]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  size_t offset(int ni, int ci, int y, int x) const {
    return ((static_cast<size_t>(ni) * shape_[1] + ci) * shape_[2] + y) * shape_[3] + x;
  }
  double& at(int ni, int ci, int y, int x) { return data_[offset(ni, ci, y, x)]; }
  double at(int ni, int ci, int y, int x) const { return data_[offset(ni, ci, y, x)]; }
  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  // Pointer to the start of sample `ni` (c*h*w contiguous values).
  double* sample(int ni) { return data_.data() + static_cast<size_t>(ni) * sample_size(); }
  const double* sample(int ni) const {
    return data_.data() + static_cast<size_t>(ni) * sample_size();
  }
  size_t sample_size() const { return static_cast<size_t>(shape_[1]) * plane(); }

  void fill(double v);
  void set_zero() { fill(0.0); }

  Tensor& operator+=(const Tensor& o);
  Tensor& operator-=(const Tensor& o);
  Tensor& operator*=(double s);

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  double sum() const;
  double squared_norm() const;

  std::string shape_string() const;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double s);

// Copies samples [first, first+count) of a batch into a new tensor.
Tensor slice_batch(const Tensor& t, int first, int count);
// Concatenates along the channel axis.
Tensor concat_channels(std::span<const Tensor* const> parts);
// Stacks single-sample tensors of identical shape into a batch.
Tensor stack_batch(std::span<const Tensor> samples);

double dot(const Tensor& a, const Tensor& b);

// Throws ShapeError mentioning `what` when shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);
// Throws NumericalError when any value is NaN or Inf.
void require_finite(const Tensor& t, const char* what);

}  // namespace rebelhad
