#include "loft/loftgan/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "loft/error.hpp"

namespace loft::gan {

using nn::Tensor;

void LossWeights::validate() const {
  const std::pair<const char*, double> items[] = {{"dev", dev}, {"dis", dis}, {"con", con}, {"con_gen", con_gen}};
  for (auto [name, v] : items) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string("loss weight ") + name + " must be finite and >= 0");
    }
  }
}

std::string_view to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::full: return "full";
    case AblationMode::enc_only: return "enc_only";
    case AblationMode::no_dis_loss: return "no_dis";
    case AblationMode::no_content_loss: return "no_content";
  }
  return "full";
}

AblationMode parse_mode(std::string_view name) {
  if (name == "full") return AblationMode::full;
  if (name == "enc_only") return AblationMode::enc_only;
  if (name == "no_dis" || name == "no_dis_loss") return AblationMode::no_dis_loss;
  if (name == "no_content" || name == "no_content_loss") return AblationMode::no_content_loss;
  throw std::invalid_argument("unknown mode '" + std::string(name) + "' (expected full, enc_only, no_dis, no_content)");
}

LossWeights effective_weights(const LossWeights& w, AblationMode mode) {
  LossWeights e = w;
  switch (mode) {
    case AblationMode::full: break;
    case AblationMode::enc_only:
      e.con = 0.0;
      e.con_gen = 0.0;
      break;
    case AblationMode::no_dis_loss: e.dis = 0.0; break;
    case AblationMode::no_content_loss:
      e.con = 0.0;
      e.con_gen = 0.0;
      break;
  }
  return e;
}

namespace {

std::size_t batch_of(const Tensor& t, const char* what) {
  if (t.rank() == 0 || t.dim(0) == 0) throw ShapeError(std::string(what) + ": empty batch");
  return t.dim(0);
}

struct Moments {
  double mean, var;  // var is the floored population variance
  bool floored;
};

Moments moments(const Tensor& t) {
  const double n = static_cast<double>(t.size());
  double mean = 0.0;
  for (double v : t.data()) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : t.data()) var += (v - mean) * (v - mean);
  var /= n;
  if (var < kVarianceFloor) return {mean, kVarianceFloor, true};
  return {mean, var, false};
}

double gaussian_kl(const Moments& p, const Moments& q) {
  return 0.5 * std::log(q.var / p.var) + (p.var + (p.mean - q.mean) * (p.mean - q.mean)) / (2.0 * q.var) - 0.5;
}

double clamp_prob(double v) { return std::clamp(v, kStyleEps, 1.0 - kStyleEps); }

// mean log(v) (or log(1 - v) when `complement`) and its gradient.
double log_mean(const Tensor& t, bool complement, Tensor* grad) {
  const double n = static_cast<double>(t.size());
  double acc = 0.0;
  if (grad) *grad = Tensor(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = t[i];
    const double c = clamp_prob(v);
    acc += complement ? std::log(1.0 - c) : std::log(c);
    if (grad && c == v) (*grad)[i] = complement ? -1.0 / (n * (1.0 - v)) : 1.0 / (n * v);
  }
  return acc / n;
}

}  // namespace

double loss_dev(const Tensor& pred, const Tensor& truth) {
  nn::require_same_shape(pred, truth, "loss_dev");
  const double b = static_cast<double>(batch_of(pred, "loss_dev"));
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return acc / b;
}

LossGrad loss_dev_grad(const Tensor& pred, const Tensor& truth) {
  LossGrad r{loss_dev(pred, truth), Tensor(pred.shape())};
  const double b = static_cast<double>(pred.dim(0));
  for (std::size_t i = 0; i < pred.size(); ++i) r.grad[i] = 2.0 * (pred[i] - truth[i]) / b;
  return r;
}

double loss_dis(const Tensor& pred, const Tensor& truth) {
  batch_of(pred, "loss_dis");
  batch_of(truth, "loss_dis");
  return gaussian_kl(moments(pred), moments(truth));
}

LossGrad loss_dis_grad(const Tensor& pred, const Tensor& truth) {
  const Moments p = moments(pred), q = moments(truth);
  LossGrad r{gaussian_kl(p, q), Tensor(pred.shape())};
  const double n = static_cast<double>(pred.size());
  const double d_mean = (p.mean - q.mean) / q.var;
  const double d_var = p.floored ? 0.0 : -0.5 / p.var + 0.5 / q.var;
  // d mean / d x_i = 1/n; d var / d x_i = 2 (x_i - mean) / n
  for (std::size_t i = 0; i < pred.size(); ++i) r.grad[i] = (d_mean + d_var * 2.0 * (pred[i] - p.mean)) / n;
  return r;
}

double loss_style(const Tensor& real, const Tensor& fake_x, const Tensor& fake_enc) {
  nn::require_same_shape(real, fake_x, "loss_style");
  nn::require_same_shape(real, fake_enc, "loss_style");
  batch_of(real, "loss_style");
  return log_mean(real, false, nullptr) + log_mean(fake_x, true, nullptr) + log_mean(fake_enc, true, nullptr);
}

StyleGrads loss_style_grad(const Tensor& real, const Tensor& fake_x, const Tensor& fake_enc) {
  nn::require_same_shape(real, fake_x, "loss_style");
  nn::require_same_shape(real, fake_enc, "loss_style");
  batch_of(real, "loss_style");
  StyleGrads g;
  g.value = log_mean(real, false, &g.d_real) + log_mean(fake_x, true, &g.d_fake_x) +
            log_mean(fake_enc, true, &g.d_fake_enc);
  return g;
}

double loss_content(const Tensor& h_real, const Tensor& h_fake) {
  nn::require_same_shape(h_real, h_fake, "loss_content");
  const double b = static_cast<double>(batch_of(h_real, "loss_content"));
  double acc = 0.0;
  for (std::size_t i = 0; i < h_real.size(); ++i) acc += (h_real[i] - h_fake[i]) * (h_real[i] - h_fake[i]);
  return 0.5 * acc / b;
}

LossGrad loss_content_grad(const Tensor& h_real, const Tensor& h_fake) {
  LossGrad r{loss_content(h_real, h_fake), Tensor(h_fake.shape())};
  const double b = static_cast<double>(h_real.dim(0));
  for (std::size_t i = 0; i < h_fake.size(); ++i) r.grad[i] = (h_fake[i] - h_real[i]) / b;
  return r;
}

double loss_gan(const Tensor& d_real, const Tensor& d_fake) {
  batch_of(d_real, "loss_gan");
  batch_of(d_fake, "loss_gan");
  return log_mean(d_real, false, nullptr) + log_mean(d_fake, true, nullptr);
}

double histogram_kl(const Tensor& pred, const Tensor& truth, std::size_t bins) {
  if (bins == 0) throw std::invalid_argument("histogram_kl: bins must be >= 1");
  batch_of(pred, "histogram_kl");
  batch_of(truth, "histogram_kl");
  auto hist = [bins](const Tensor& t) {
    std::vector<double> h(bins, 0.0);
    for (double v : t.data()) {
      if (!(v >= 0.0 && v <= 1.0)) throw RangeError("histogram_kl: value outside [0, 1]");
      const auto k = std::min(bins - 1, static_cast<std::size_t>(v * static_cast<double>(bins)));
      h[k] += 1.0;
    }
    double total = 0.0;
    for (double& c : h) total += (c += 1e-10);
    for (double& c : h) c /= total;
    return h;
  };
  const auto p = hist(pred), q = hist(truth);
  double kl = 0.0;
  for (std::size_t k = 0; k < bins; ++k) kl += p[k] * std::log(p[k] / q[k]);
  return kl;
}

}  // namespace loft::gan
