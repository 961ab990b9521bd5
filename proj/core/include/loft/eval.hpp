#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loft/classical.hpp"
#include "loft/sim.hpp"

namespace loft::eval {

struct Profiles {
  std::vector<double> row;  ///< the full row through the peak
  std::vector<double> col;  ///< the full column through the peak
  std::size_t peak_row = 0;
  std::size_t peak_col = 0;
};

/// Row and column through `peak`, or through the argmax (first in row-major order) when unset.
Profiles profiles(const SpecklePattern& speckle, std::optional<std::pair<std::size_t, std::size_t>> peak = {});

struct FocusReport {
  std::string method;
  std::uint64_t tm_seed = 0;
  std::size_t n_inputs = 0;
  std::size_t n_outputs = 0;
  std::vector<double> target_weights;
  std::vector<std::uint64_t> seeds;  ///< baseline seed first, then any producer seeds

  double target_mean = 0.0;      ///< sum_m w_m I_m
  double background_mean = 0.0;  ///< mean intensity off the target support (0 if the support is everything)
  double baseline_mean = 0.0;    ///< target_mean averaged over random phases
  double enhancement = 0.0;      ///< target_mean / baseline_mean
  double peak_to_background = 0.0;
  double pearson = 0.0;  ///< between intensities and target weights; 0 if either is constant
  /// I_m over the random-phase mean of I_m, one per support mode in ascending order.
  std::vector<double> site_enhancement;
  Profiles profile;
  std::vector<double> intensity;  ///< unnormalized
};

/// Intensities through `tm`, compared with the mean over `n_random_baseline` uniform random phases
/// drawn from substreams of `seed`. Throws std::invalid_argument if n_random_baseline < 10.
FocusReport evaluate(const TransmissionMatrix& tm, const PhasePattern& phase, const TargetSpec& target,
                     std::size_t n_random_baseline, std::uint64_t seed, std::string method = {});

double pearson(std::span<const double> a, std::span<const double> b);

/// Header of the comparison table, in column order.
inline constexpr const char* kCompareHeader =
    "method,tm_seed,n_inputs,n_outputs,seeds,target_mean,background_mean,baseline_mean,enhancement,"
    "peak_to_background,pearson,peak_row,peak_col,min_site_enhancement";

struct CompareOutputs {
  std::filesystem::path csv;
  std::filesystem::path row_plot;
  std::filesystem::path col_plot;
};

/// Writes comparison.csv (one row per report) and overlaid row/column profile plots into `out_dir`.
/// Throws std::invalid_argument naming each mismatching field when the reports disagree on
/// tm_seed, n_inputs, n_outputs or target_weights.
CompareOutputs compare(const std::vector<FocusReport>& reports, const std::filesystem::path& out_dir);

}  // namespace loft::eval
