#pragma once

#include <bit>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace loft {

using cplx = std::complex<double>;

/// Complex M x N matrix coupling N input (SLM) modes to M output (camera) modes.
/// Row-major: entry (m, n) is at m * cols() + n.
class TransmissionMatrix {
 public:
  TransmissionMatrix() = default;
  TransmissionMatrix(std::size_t rows, std::size_t cols, std::vector<cplx> entries, std::uint64_t seed = 0);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::uint64_t seed() const noexcept { return seed_; }

  cplx operator()(std::size_t m, std::size_t n) const { return entries_[m * cols_ + n]; }
  std::span<const cplx> row(std::size_t m) const { return {entries_.data() + m * cols_, cols_}; }
  std::span<const cplx> entries() const noexcept { return entries_; }

  bool operator==(const TransmissionMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<cplx> entries_;
  std::uint64_t seed_ = 0;
};

/// Input phases stored as codes in [0, 1]; the optical phase is 2*pi*value.
class PhasePattern {
 public:
  PhasePattern() = default;
  explicit PhasePattern(std::vector<double> values);
  static PhasePattern zeros(std::size_t n) { return PhasePattern(std::vector<double>(n, 0.0)); }

  std::size_t size() const noexcept { return values_.size(); }
  /// Side length of the square grid; throws ShapeError if size() is not a perfect square.
  std::size_t side() const;
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Snaps every value to k/levels, k in [0, levels), rounding to nearest with wrap at 1.
  PhasePattern quantized(int levels) const;
  std::optional<int> levels() const noexcept { return levels_; }

  bool operator==(const PhasePattern& o) const { return values_ == o.values_; }

 private:
  std::vector<double> values_;
  std::optional<int> levels_;
};

/// Complex output field E_m, one entry per output mode.
struct ComplexField {
  std::vector<cplx> values;
};

/// Output intensities, one per output mode (row-major square grid when M is a square).
class SpecklePattern {
 public:
  SpecklePattern() = default;
  SpecklePattern(std::vector<double> values, bool normalized);
  /// Normalized pattern that remembers the maximum it was divided by.
  SpecklePattern(std::vector<double> normalized_values, double scale);

  std::size_t size() const noexcept { return values_.size(); }
  std::size_t side() const;
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  bool normalized() const noexcept { return normalized_; }
  /// Maximum before normalization (equals max() for unnormalized patterns).
  double scale() const noexcept { return scale_; }

  /// Divides by the maximum (no-op when every value is zero).
  SpecklePattern normalize() const;

  bool operator==(const SpecklePattern& o) const = default;

 private:
  std::vector<double> values_;
  bool normalized_ = false;
  double scale_ = 0.0;
};

/// i.i.d. circularly-symmetric complex normal entries, E|t|^2 = 1.
TransmissionMatrix gen_tm(std::size_t n_inputs, std::size_t n_outputs, std::uint64_t seed);

/// E_m = sum_n t_mn * (1/sqrt(N)) * exp(i 2 pi phase_n).
ComplexField propagate(const TransmissionMatrix& tm, const PhasePattern& phase);

/// I_m = |E_m|^2, optionally divided by the maximum.
SpecklePattern intensity(const ComplexField& field, bool normalize);

/// Shorthand for intensity(propagate(tm, phase), normalize).
SpecklePattern speckle(const TransmissionMatrix& tm, const PhasePattern& phase, bool normalize = false);

/// Sylvester-ordered Hadamard rows as binary phase patterns (+1 -> 0, -1 -> 0.5).
std::vector<PhasePattern> hadamard_basis(std::size_t n);

/// Entry (k, n) of the Sylvester Hadamard matrix, +1 or -1.
inline int hadamard_sign(std::size_t k, std::size_t n) {
  return (std::popcount(k & n) & 1U) ? -1 : 1;
}

/// Black-box measurement: displays a phase pattern and returns unnormalized intensities.
using IntensityOracle = std::function<SpecklePattern(const PhasePattern&)>;

/// Recovers a transmission matrix from intensity-only measurements.
///
/// The flat pattern (first Hadamard row) is the internal reference. For every
/// other Hadamard row k the pixels split into P (+1) and Q (-1); phase
/// stepping the P pixels against the rest gives the cross term A*conj(B)
/// between the fields of P and Q. Two more stepped series with Q split by an
/// auxiliary row fix the remaining sign ambiguity of |A|^2 - |B|^2. Every
/// pattern shown is phase-only, so the procedure runs on a real SLM.
///
/// Each recovered row equals the true row times an unknown unit-modulus
/// factor (the phase of the reference field in that row). For n_inputs == 2
/// no auxiliary split exists and the larger of the two |A|^2 roots is taken,
/// which is right only when |t_m0| >= |t_m1|.
TransmissionMatrix calibrate_tm(const IntensityOracle& probe, std::size_t n_inputs, std::size_t n_outputs,
                                std::size_t phase_steps = 4);

}  // namespace loft
