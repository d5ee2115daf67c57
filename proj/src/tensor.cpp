#include "rebelhad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "rebelhad/error.hpp"

namespace rebelhad {

Tensor::Tensor(int n, int c, int h, int w, double fill) : Tensor(Shape{n, c, h, w}, fill) {}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  for (int d : shape_) {
    if (d < 0) throw ShapeError("negative tensor dimension");
  }
  data_.assign(static_cast<size_t>(shape_[0]) * shape_[1] * shape_[2] * shape_[3], fill);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& o) {
  require_same_shape(*this, o, "tensor +=");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& o) {
  require_same_shape(*this, o, "tensor -=");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::sum() const {
  double s = 0.0;
  for (double v : data_) s += v;
  return s;
}

double Tensor::squared_norm() const {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return s;
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '(' << shape_[0] << ',' << shape_[1] << ',' << shape_[2] << ',' << shape_[3] << ')';
  return os.str();
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double s) { return a *= s; }

Tensor slice_batch(const Tensor& t, int first, int count) {
  if (first < 0 || count < 0 || first + count > t.n()) throw RangeError("batch slice out of range");
  Tensor out(count, t.c(), t.h(), t.w());
  if (count > 0) {
    std::memcpy(out.data(), t.sample(first), sizeof(double) * t.sample_size() * count);
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Tensor& first = *parts[0];
  int channels = 0;
  for (const Tensor* p : parts) {
    if (p->n() != first.n() || p->h() != first.h() || p->w() != first.w()) {
      throw ShapeError("concat_channels: mismatched batch or spatial dims");
    }
    channels += p->c();
  }
  Tensor out(first.n(), channels, first.h(), first.w());
  for (int ni = 0; ni < first.n(); ++ni) {
    double* dst = out.sample(ni);
    for (const Tensor* p : parts) {
      std::memcpy(dst, p->sample(ni), sizeof(double) * p->sample_size());
      dst += p->sample_size();
    }
  }
  return out;
}

Tensor stack_batch(std::span<const Tensor> samples) {
  if (samples.empty()) throw ShapeError("stack of zero tensors");
  const Tensor& first = samples[0];
  Tensor out(static_cast<int>(samples.size()) * first.n(), first.c(), first.h(), first.w());
  double* dst = out.data();
  for (const Tensor& s : samples) {
    require_same_shape(s, first, "stack_batch");
    std::memcpy(dst, s.data(), sizeof(double) * s.size());
    dst += s.size();
  }
  return out;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shape " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

void require_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericalError(std::string(what) + ": non-finite values");
}

}  // namespace rebelhad
