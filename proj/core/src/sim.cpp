#include "loft/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include "loft/error.hpp"
#include "loft/rng.hpp"

namespace loft {

namespace {

std::size_t square_side(std::size_t n, const char* what) {
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  if (side * side != n) {
    throw ShapeError(std::string(what) + " of length " + std::to_string(n) + " is not a square grid");
  }
  return side;
}

cplx unit_phasor(double code) {
  const double angle = 2.0 * std::numbers::pi * code;
  return {std::cos(angle), std::sin(angle)};
}

}  // namespace

TransmissionMatrix::TransmissionMatrix(std::size_t rows, std::size_t cols, std::vector<cplx> entries,
                                       std::uint64_t seed)
    : rows_(rows), cols_(cols), entries_(std::move(entries)), seed_(seed) {
  if (rows_ == 0 || cols_ == 0) {
    throw std::invalid_argument("transmission matrix needs at least one row and one column");
  }
  if (entries_.size() != rows_ * cols_) {
    throw ShapeError("transmission matrix entry count " + std::to_string(entries_.size()) + " != " +
                     std::to_string(rows_) + " x " + std::to_string(cols_));
  }
  for (const auto& e : entries_) {
    if (!std::isfinite(e.real()) || !std::isfinite(e.imag())) {
      throw NumericFault("transmission matrix entry is not finite");
    }
  }
}

PhasePattern::PhasePattern(std::vector<double> values) : values_(std::move(values)) {
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw RangeError("phase value " + std::to_string(v) + " outside [0, 1]");
    }
  }
}

std::size_t PhasePattern::side() const { return square_side(values_.size(), "phase pattern"); }

PhasePattern PhasePattern::quantized(int levels) const {
  if (levels < 2) {
    throw std::invalid_argument("quantization needs at least 2 levels");
  }
  std::vector<double> q(values_.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    auto k = static_cast<long>(std::floor(values_[i] * levels + 0.5));
    k %= levels;
    q[i] = static_cast<double>(k) / levels;
  }
  PhasePattern out(std::move(q));
  out.levels_ = levels;
  return out;
}

SpecklePattern::SpecklePattern(std::vector<double> values, bool normalized)
    : values_(std::move(values)), normalized_(normalized) {
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw RangeError("speckle intensity must be finite and nonnegative");
    }
  }
  scale_ = values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
  if (normalized_ && scale_ > 1.0) {
    throw RangeError("normalized speckle has values above 1");
  }
}

SpecklePattern::SpecklePattern(std::vector<double> normalized_values, double scale)
    : SpecklePattern(std::move(normalized_values), true) {
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw RangeError("speckle scale must be finite and nonnegative");
  scale_ = scale;
}

std::size_t SpecklePattern::side() const { return square_side(values_.size(), "speckle pattern"); }

SpecklePattern SpecklePattern::normalize() const {
  const double peak = values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
  std::vector<double> out = values_;
  if (peak > 0.0) {
    for (double& v : out) v /= peak;
  }
  SpecklePattern result(std::move(out), true);
  result.scale_ = normalized_ ? scale_ : peak;
  return result;
}

TransmissionMatrix gen_tm(std::size_t n_inputs, std::size_t n_outputs, std::uint64_t seed) {
  if (n_inputs == 0 || n_outputs == 0) {
    throw std::invalid_argument("gen_tm: n_inputs and n_outputs must be >= 1");
  }
  Rng rng(seed);
  const double sigma = std::sqrt(0.5);
  std::vector<cplx> entries(n_inputs * n_outputs);
  for (auto& e : entries) {
    const double re = rng.normal() * sigma;
    const double im = rng.normal() * sigma;
    e = {re, im};
  }
  return TransmissionMatrix(n_outputs, n_inputs, std::move(entries), seed);
}

ComplexField propagate(const TransmissionMatrix& tm, const PhasePattern& phase) {
  if (phase.size() != tm.cols()) {
    throw ShapeError("propagate: phase length " + std::to_string(phase.size()) + " != matrix columns " +
                     std::to_string(tm.cols()));
  }
  const std::size_t n = tm.cols();
  const double amplitude = 1.0 / std::sqrt(static_cast<double>(n));
  std::vector<cplx> input(n);
  for (std::size_t i = 0; i < n; ++i) input[i] = amplitude * unit_phasor(phase[i]);

  ComplexField field;
  field.values.resize(tm.rows());
  for (std::size_t m = 0; m < tm.rows(); ++m) {
    const auto row = tm.row(m);
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const cplx& t = row[i];
      const cplx& u = input[i];
      re += t.real() * u.real() - t.imag() * u.imag();
      im += t.real() * u.imag() + t.imag() * u.real();
    }
    field.values[m] = {re, im};
  }
  return field;
}

SpecklePattern intensity(const ComplexField& field, bool normalize) {
  if (field.values.empty()) {
    throw std::invalid_argument("intensity: empty field");
  }
  std::vector<double> out(field.values.size());
  for (std::size_t m = 0; m < out.size(); ++m) {
    const cplx& e = field.values[m];
    if (!std::isfinite(e.real()) || !std::isfinite(e.imag())) {
      throw NumericFault("intensity: non-finite field");
    }
    out[m] = e.real() * e.real() + e.imag() * e.imag();
  }
  SpecklePattern raw(std::move(out), false);
  return normalize ? raw.normalize() : raw;
}

SpecklePattern speckle(const TransmissionMatrix& tm, const PhasePattern& phase, bool normalize) {
  return intensity(propagate(tm, phase), normalize);
}

std::vector<PhasePattern> hadamard_basis(std::size_t n) {
  if (n == 0 || !std::has_single_bit(n)) {
    throw std::invalid_argument("hadamard_basis: n = " + std::to_string(n) + " is not a power of 2");
  }
  std::vector<PhasePattern> basis;
  basis.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = hadamard_sign(k, i) > 0 ? 0.0 : 0.5;
    basis.emplace_back(std::move(v));
  }
  return basis;
}

namespace {

/// Result of one stepped series: the cross term and mean intensity per output row.
struct SteppedSeries {
  std::vector<cplx> cross;
  std::vector<double> mean;
};

class Calibrator {
 public:
  Calibrator(const IntensityOracle& probe, std::size_t n_inputs, std::size_t n_outputs, std::size_t steps)
      : probe_(probe), n_(n_inputs), m_(n_outputs), steps_(steps) {}

  std::vector<double> measure(const std::vector<double>& codes) const {
    const SpecklePattern s = probe_(PhasePattern(codes));
    if (s.size() != m_) {
      throw ShapeError("calibrate_tm: oracle returned " + std::to_string(s.size()) + " outputs, expected " +
                       std::to_string(m_));
    }
    if (s.normalized()) {
      throw std::invalid_argument("calibrate_tm: oracle must return unnormalized intensities");
    }
    return {s.values().begin(), s.values().end()};
  }

  /// Steps the pixels where `stepped` is true through 2*pi*k/steps on top of `base`.
  /// With field F on the stepped pixels and G on the others, cross = F * conj(G)
  /// and mean = |F|^2 + |G|^2.
  SteppedSeries stepped(const std::vector<bool>& stepped, const std::vector<double>& base) const {
    SteppedSeries out{std::vector<cplx>(m_), std::vector<double>(m_, 0.0)};
    for (std::size_t k = 0; k < steps_; ++k) {
      const double delta = static_cast<double>(k) / static_cast<double>(steps_);
      std::vector<double> codes(n_);
      for (std::size_t i = 0; i < n_; ++i) codes[i] = stepped[i] ? delta : base[i];
      const auto intensities = measure(codes);
      const double angle = -2.0 * std::numbers::pi * delta;
      const cplx weight(std::cos(angle), std::sin(angle));
      for (std::size_t m = 0; m < m_; ++m) {
        out.cross[m] += intensities[m] * weight;
        out.mean[m] += intensities[m];
      }
    }
    const double inv = 1.0 / static_cast<double>(steps_);
    for (std::size_t m = 0; m < m_; ++m) {
      out.cross[m] *= inv;
      out.mean[m] *= inv;
    }
    return out;
  }

  TransmissionMatrix run() const {
    const std::vector<double> flat(n_, 0.0);
    const auto ref_power = measure(flat);  // |R_m|^2

    // projection[m][k] = s_k * conj(R_m) where s_k is the field of Hadamard row k.
    std::vector<std::vector<cplx>> projection(m_, std::vector<cplx>(n_));
    for (std::size_t m = 0; m < m_; ++m) projection[m][0] = ref_power[m];

    for (std::size_t k = 1; k < n_; ++k) {
      std::vector<bool> in_p(n_);
      for (std::size_t i = 0; i < n_; ++i) in_p[i] = hadamard_sign(k, i) > 0;
      const SteppedSeries s1 = stepped(in_p, flat);

      std::vector<std::optional<double>> triple_estimate(m_);
      if (n_ >= 4) {
        const std::size_t aux = (k == 1) ? 2 : 1;
        std::vector<double> base_q(n_, 0.0);
        std::vector<bool> in_q1(n_, false);
        for (std::size_t i = 0; i < n_; ++i) {
          if (in_p[i]) continue;
          if (hadamard_sign(aux, i) > 0) {
            in_q1[i] = true;
          } else {
            base_q[i] = 0.25;
          }
        }
        const SteppedSeries s2 = stepped(in_p, base_q);  // A conj(B1 + i B2)
        const SteppedSeries s3 = stepped(in_q1, flat);   // B1 conj(A + B2)
        for (std::size_t m = 0; m < m_; ++m) {
          const cplx ab2 = (s1.cross[m] - s2.cross[m]) / cplx(1.0, 1.0);
          const cplx ab1 = s1.cross[m] - ab2;
          const cplx b1b2 = s3.cross[m] - std::conj(ab1);
          if (std::abs(b1b2) > 1e-14 * (s1.mean[m] + 1e-300)) {
            triple_estimate[m] = (ab1 * std::conj(ab2) / std::conj(b1b2)).real();
          }
        }
      }

      for (std::size_t m = 0; m < m_; ++m) {
        const double total = s1.mean[m];
        const double disc = std::sqrt(std::max(0.0, total * total - 4.0 * std::norm(s1.cross[m])));
        const double hi = 0.5 * (total + disc);
        const double lo = 0.5 * (total - disc);
        double a_power = hi;
        if (const auto& est = triple_estimate[m]) {
          a_power = std::abs(*est - hi) <= std::abs(*est - lo) ? hi : lo;
        }
        const cplx a_ref = a_power + s1.cross[m];  // A conj(R), since R = A + B
        projection[m][k] = 2.0 * a_ref - ref_power[m];
      }
    }

    std::vector<cplx> entries(m_ * n_);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n_));
    for (std::size_t m = 0; m < m_; ++m) {
      const double ref_mag = std::sqrt(ref_power[m]);
      if (ref_mag == 0.0) continue;  // no reference light in this row; estimate stays zero
      for (std::size_t i = 0; i < n_; ++i) {
        cplx acc = 0.0;
        for (std::size_t k = 0; k < n_; ++k) acc += static_cast<double>(hadamard_sign(k, i)) * projection[m][k];
        entries[m * n_ + i] = acc * inv_sqrt_n / ref_mag;
      }
    }
    return TransmissionMatrix(m_, n_, std::move(entries), 0);
  }

 private:
  const IntensityOracle& probe_;
  std::size_t n_;
  std::size_t m_;
  std::size_t steps_;
};

}  // namespace

TransmissionMatrix calibrate_tm(const IntensityOracle& probe, std::size_t n_inputs, std::size_t n_outputs,
                                std::size_t phase_steps) {
  if (n_inputs == 0 || !std::has_single_bit(n_inputs)) {
    throw std::invalid_argument("calibrate_tm: n_inputs = " + std::to_string(n_inputs) + " is not a power of 2");
  }
  if (n_outputs == 0) {
    throw std::invalid_argument("calibrate_tm: n_outputs must be >= 1");
  }
  if (phase_steps < 3) {
    throw std::invalid_argument("calibrate_tm: phase stepping needs at least 3 steps");
  }
  return Calibrator(probe, n_inputs, n_outputs, phase_steps).run();
}

}  // namespace loft
