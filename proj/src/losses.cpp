#include "rebelhad/losses.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "rebelhad/error.hpp"
#include "rebelhad/ops.hpp"

namespace rebelhad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapMat = Eigen::Map<RowMat>;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double logistic(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

void require_finite_part(double v, const char* name) {
  if (!std::isfinite(v)) throw NumericalError(std::string("non-finite loss component: ") + name);
}

}  // namespace

double loss_sim(std::span<const Tensor> decoder, std::span<const Tensor> encoder,
                std::vector<Tensor>* d_decoder, std::vector<Tensor>* d_encoder) {
  if (decoder.size() != encoder.size() || decoder.empty()) {
    throw ShapeError("loss_sim: decoder and encoder scale counts differ");
  }
  const size_t scales = decoder.size();
  if (d_decoder) d_decoder->assign(scales, Tensor());
  if (d_encoder) d_encoder->assign(scales, Tensor());
  double mean_cos = 0.0;
  for (size_t s = 0; s < scales; ++s) {
    const Tensor& g = decoder[s];
    const Tensor& f = encoder[s];
    require_same_shape(g, f, "loss_sim");
    const size_t plane = g.plane();
    const double locations = static_cast<double>(plane) * g.n();
    Tensor dg, df;
    if (d_decoder) dg = Tensor(g.shape());
    if (d_encoder) df = Tensor(f.shape());
    double total = 0.0;
    for (int n = 0; n < g.n(); ++n) {
      const double* pg = g.sample(n);
      const double* pf = f.sample(n);
      for (size_t l = 0; l < plane; ++l) {
        double gf = 0.0, gg = 0.0, ff = 0.0;
        for (int c = 0; c < g.c(); ++c) {
          const double a = pg[c * plane + l], b = pf[c * plane + l];
          gf += a * b;
          gg += a * a;
          ff += b * b;
        }
        if (!(gg > 0.0 && ff > 0.0)) continue;
        const double ng = std::sqrt(gg), nf = std::sqrt(ff);
        const double cos = gf / (ng * nf);
        total += cos;
        // d(-cos / (scales * locations)) is accumulated below.
        const double k = -1.0 / (static_cast<double>(scales) * locations);
        for (int c = 0; c < g.c(); ++c) {
          const double a = pg[c * plane + l], b = pf[c * plane + l];
          if (d_decoder) dg.sample(n)[c * plane + l] = k * (b / (ng * nf) - cos * a / gg);
          if (d_encoder) df.sample(n)[c * plane + l] = k * (a / (ng * nf) - cos * b / ff);
        }
      }
    }
    mean_cos += total / locations;
    if (d_decoder) (*d_decoder)[s] = std::move(dg);
    if (d_encoder) (*d_encoder)[s] = std::move(df);
  }
  return 1.0 - mean_cos / static_cast<double>(scales);
}

double loss_mse(const Tensor& target, const Tensor& recon, Tensor* d_recon, Tensor* d_target) {
  require_same_shape(target, recon, "loss_mse");
  const double count = static_cast<double>(target.size());
  double s = 0.0;
  for (size_t i = 0; i < target.size(); ++i) {
    const double d = recon[i] - target[i];
    s += d * d;
  }
  if (d_recon) {
    *d_recon = Tensor(recon.shape());
    for (size_t i = 0; i < recon.size(); ++i) (*d_recon)[i] = 2.0 * (recon[i] - target[i]) / count;
  }
  if (d_target) {
    *d_target = Tensor(target.shape());
    for (size_t i = 0; i < target.size(); ++i) (*d_target)[i] = 2.0 * (target[i] - recon[i]) / count;
  }
  return s / count;
}

double loss_z(const Tensor& o, Tensor* d_o) {
  if (o.c() != 1) throw ShapeError("loss_z: expects a one-channel map, got " + o.shape_string());
  const double count = static_cast<double>(o.size());
  double s = 0.0;
  for (size_t i = 0; i < o.size(); ++i) s += softplus(o[i]);
  if (d_o) {
    *d_o = Tensor(o.shape());
    for (size_t i = 0; i < o.size(); ++i) (*d_o)[i] = logistic(o[i]) / count;
  }
  return s / count;
}

double stage1_total(const Stage1Parts& parts, const Stage1Weights& w) {
  require_finite_part(parts.sim, "sim");
  require_finite_part(parts.mse, "mse");
  require_finite_part(parts.z, "z");
  return parts.sim + w.mse * parts.mse + w.z * parts.z;
}

double loss_cc(const Tensor& teacher, const Tensor& student, double eps, Tensor* d_student) {
  if (teacher.n() != student.n() || teacher.h() != student.h() || teacher.w() != student.w()) {
    throw ShapeError("loss_cc: teacher " + teacher.shape_string() + " vs student " +
                     student.shape_string());
  }
  const Tensor x = whiten(teacher, eps);
  WhitenCache wc;
  const Tensor y = whiten(student, eps, &wc);
  const auto plane = static_cast<Eigen::Index>(x.plane());
  const double scale = 1.0 / (static_cast<double>(plane) * x.n());
  RowMat cross = RowMat::Zero(x.c(), y.c());
  for (int n = 0; n < x.n(); ++n) {
    cross.noalias() += ConstMapMat(x.sample(n), x.c(), plane) * ConstMapMat(y.sample(n), y.c(), plane).transpose();
  }
  cross *= scale;
  if (d_student) {
    Tensor dy(y.shape());
    const RowMat ct = (2.0 * scale) * cross.transpose();
    for (int n = 0; n < x.n(); ++n) {
      MapMat(dy.sample(n), y.c(), plane).noalias() = ct * ConstMapMat(x.sample(n), x.c(), plane);
    }
    *d_student = whiten_backward(wc, dy);
  }
  return cross.squaredNorm();
}

double loss_cos(const Tensor& teacher, const Tensor& student, Tensor* d_student) {
  require_same_shape(teacher, student, "loss_cos");
  if (d_student) *d_student = cosine_sim_grad_b(teacher, student);
  return 1.0 + cosine_sim(teacher, student);
}

double loss_var(const Tensor& student, double tau, Tensor* d_student) {
  if (!(tau > 0.0)) throw RangeError("loss_var: tau must be > 0");
  const size_t plane = student.plane();
  const double count = static_cast<double>(plane) * student.n();
  const int channels = student.c();
  if (d_student) *d_student = Tensor(student.shape());
  double hinge = 0.0;
  for (int c = 0; c < channels; ++c) {
    double mean = 0.0;
    for (int n = 0; n < student.n(); ++n) {
      const double* r = student.sample(n) + c * plane;
      for (size_t i = 0; i < plane; ++i) mean += r[i];
    }
    mean /= count;
    double var = 0.0;
    for (int n = 0; n < student.n(); ++n) {
      const double* r = student.sample(n) + c * plane;
      for (size_t i = 0; i < plane; ++i) var += (r[i] - mean) * (r[i] - mean);
    }
    var /= count;
    if (tau - var > 0.0) {
      hinge += tau - var;
      if (d_student) {
        const double k = -2.0 / (count * channels);
        for (int n = 0; n < student.n(); ++n) {
          const double* r = student.sample(n) + c * plane;
          double* o = d_student->sample(n) + c * plane;
          for (size_t i = 0; i < plane; ++i) o[i] = k * (r[i] - mean);
        }
      }
    }
  }
  const double total = static_cast<double>(student.size());
  double l1 = 0.0;
  for (size_t i = 0; i < student.size(); ++i) l1 += std::fabs(student[i]);
  if (d_student) {
    for (size_t i = 0; i < student.size(); ++i) {
      (*d_student)[i] += ((student[i] > 0.0) - (student[i] < 0.0)) / total;
    }
  }
  return hinge / channels + l1 / total;
}

double loss_recon(const Tensor& target, const Tensor& recon, double lambda_ssim, Tensor* d_recon) {
  require_same_shape(target, recon, "loss_recon");
  const double mse = loss_mse(target, recon, d_recon);
  if (lambda_ssim == 0.0) return mse;
  if (d_recon) *d_recon += ssim_grad_b(target, recon, -lambda_ssim);
  return mse + lambda_ssim * (1.0 - ssim(target, recon));
}

double loss_decorr(const Stage2Parts& parts, const Stage2Weights& w) {
  require_finite_part(parts.cc, "cc");
  require_finite_part(parts.cos, "cos");
  require_finite_part(parts.var, "var");
  return parts.cc + w.cos * parts.cos + w.var * parts.var;
}

double stage2_total(const Stage2Parts& parts, const Stage2Weights& w) {
  require_finite_part(parts.recon, "recon");
  return loss_decorr(parts, w) + w.recon * parts.recon;
}

}  // namespace rebelhad
