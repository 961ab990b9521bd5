#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "loft/nn/tensor.hpp"

namespace loft::gan {

struct LossWeights {
  double dev = 22.0;
  double dis = 0.03;
  double con = 0.03;
  double con_gen = 1e-6;  ///< content weight on the generator update

  /// Throws std::invalid_argument if any weight is negative or not finite.
  void validate() const;
};

enum class AblationMode { full, enc_only, no_dis_loss, no_content_loss };

std::string_view to_string(AblationMode mode);
/// Accepts "full", "enc_only", "no_dis" / "no_dis_loss", "no_content" / "no_content_loss".
AblationMode parse_mode(std::string_view name);

/// Weights actually applied in `mode`.
LossWeights effective_weights(const LossWeights& w, AblationMode mode);

inline constexpr double kStyleEps = 1e-7;
inline constexpr double kVarianceFloor = 1e-8;

struct LossGrad {
  double value = 0.0;
  nn::Tensor grad;  ///< d value / d first argument
};

/// Batch mean of the squared Frobenius norm ||pred - truth||^2. The leading dimension is the batch.
double loss_dev(const nn::Tensor& pred, const nn::Tensor& truth);
LossGrad loss_dev_grad(const nn::Tensor& pred, const nn::Tensor& truth);

/// KL(N(mu_p, var_p) || N(mu_t, var_t)) with moments taken over every element of each batch.
double loss_dis(const nn::Tensor& pred, const nn::Tensor& truth);
LossGrad loss_dis_grad(const nn::Tensor& pred, const nn::Tensor& truth);

struct StyleGrads {
  double value = 0.0;
  nn::Tensor d_real, d_fake_x, d_fake_enc;
};

/// mean log D(y) + mean log(1 - D(Gen(x))) + mean log(1 - D(Gen(Enc(y)))), each value clamped
/// to [eps, 1 - eps]. Clamped entries get zero gradient.
double loss_style(const nn::Tensor& real, const nn::Tensor& fake_x, const nn::Tensor& fake_enc);
StyleGrads loss_style_grad(const nn::Tensor& real, const nn::Tensor& fake_x, const nn::Tensor& fake_enc);

/// 0.5 * ||h_real - h_fake||^2 / batch. The gradient is taken with respect to h_fake.
double loss_content(const nn::Tensor& h_real, const nn::Tensor& h_fake);
LossGrad loss_content_grad(const nn::Tensor& h_real, const nn::Tensor& h_fake);

/// Plain adversarial objective mean log D(real) + mean log(1 - D(fake)); not used in training.
double loss_gan(const nn::Tensor& d_real, const nn::Tensor& d_fake);

/// KL between `bins`-bin histograms of values in [0, 1] (empty bins smoothed by 1e-10). Reporting only.
double histogram_kl(const nn::Tensor& pred, const nn::Tensor& truth, std::size_t bins = 32);

}  // namespace loft::gan
