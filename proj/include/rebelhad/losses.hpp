#pragma once

#include <span>
#include <vector>

#include "rebelhad/tensor.hpp"

// Training objectives. Each loss returns its value and, when a gradient
// pointer is supplied, writes the unweighted gradient of the loss with
// respect to that input. Teacher features never receive a gradient.

namespace rebelhad {

struct Stage1Weights {
  double mse = 0.1;
  double z = 0.1;
};

struct Stage2Weights {
  double recon = 1.0;
  double cos = 0.1;
  double var = 0.1;
  double ssim = 0.01;
  double tau = 1.0;
};

inline constexpr double kWhitenEps = 1e-5;

struct Stage1Parts {
  double sim = 0.0;
  double mse = 0.0;
  double z = 0.0;
};

struct Stage2Parts {
  double cc = 0.0;
  double cos = 0.0;
  double var = 0.0;
  double recon = 0.0;
};

// 1 - mean over scales of the per-location channel-vector cosine,
// averaged over batch and locations. Range [0, 2].
double loss_sim(std::span<const Tensor> decoder, std::span<const Tensor> encoder,
                std::vector<Tensor>* d_decoder = nullptr, std::vector<Tensor>* d_encoder = nullptr);

// Mean squared error over all entries.
double loss_mse(const Tensor& target, const Tensor& recon, Tensor* d_recon = nullptr,
                Tensor* d_target = nullptr);

// Mean of -log(1 - sigmoid(o)) = softplus(o) over all entries of a
// one-channel map.
double loss_z(const Tensor& o, Tensor* d_o = nullptr);

// L_sim + w.mse * L_mse + w.z * L_Z. Throws NumericalError on a non-finite part.
double stage1_total(const Stage1Parts& parts, const Stage1Weights& w);

// Squared Frobenius norm of the cross-covariance between whitened teacher
// and student features, C = X Y^T / (N * H * W).
double loss_cc(const Tensor& teacher, const Tensor& student, double eps = kWhitenEps,
               Tensor* d_student = nullptr);

// 1 + cosine_sim(teacher, student); per-sample cosine averaged over batch.
double loss_cos(const Tensor& teacher, const Tensor& student, Tensor* d_student = nullptr);

// Mean over channels of max(0, tau - Var_k) plus the mean absolute value.
double loss_var(const Tensor& student, double tau, Tensor* d_student = nullptr);

// MSE + lambda_ssim * (1 - SSIM).
double loss_recon(const Tensor& target, const Tensor& recon, double lambda_ssim,
                  Tensor* d_recon = nullptr);

// L_cc + w.cos * L_cos + w.var * L_var.
double loss_decorr(const Stage2Parts& parts, const Stage2Weights& w);

// loss_decorr + w.recon * L_recon.
double stage2_total(const Stage2Parts& parts, const Stage2Weights& w);

}  // namespace rebelhad
