#include "loft/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "loft/error.hpp"
#include "loft/io.hpp"
#include "loft/rng.hpp"

namespace loft::eval {

Profiles profiles(const SpecklePattern& speckle, std::optional<std::pair<std::size_t, std::size_t>> peak) {
  if (speckle.size() == 0) throw std::invalid_argument("profiles: empty speckle");
  const std::size_t side = speckle.side();
  Profiles p;
  if (peak) {
    if (peak->first >= side || peak->second >= side) throw RangeError("profiles: peak outside the grid");
    p.peak_row = peak->first;
    p.peak_col = peak->second;
  } else {
    const auto v = speckle.values();
    const auto idx = static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
    p.peak_row = idx / side;
    p.peak_col = idx % side;
  }
  p.row.resize(side);
  p.col.resize(side);
  for (std::size_t i = 0; i < side; ++i) {
    p.row[i] = speckle[p.peak_row * side + i];
    p.col[i] = speckle[i * side + p.peak_col];
  }
  return p;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("pearson: length mismatch");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

FocusReport evaluate(const TransmissionMatrix& tm, const PhasePattern& phase, const TargetSpec& target,
                     std::size_t n_random_baseline, std::uint64_t seed, std::string method) {
  if (n_random_baseline < 10) throw std::invalid_argument("evaluate: n_random_baseline must be >= 10");
  if (target.size() != tm.rows()) throw ShapeError("evaluate: target size does not match the matrix rows");
  FocusReport r;
  r.method = std::move(method);
  r.tm_seed = tm.seed();
  r.n_inputs = tm.cols();
  r.n_outputs = tm.rows();
  r.target_weights.assign(target.weights().begin(), target.weights().end());
  r.seeds = {seed};

  const SpecklePattern s = speckle(tm, phase, false);
  r.intensity.assign(s.values().begin(), s.values().end());
  const auto& support = target.support();
  const auto w = target.weights();

  for (std::size_t m : support) r.target_mean += w[m] * s[m];
  std::vector<bool> on(tm.rows(), false);
  for (std::size_t m : support) on[m] = true;
  double bg = 0.0, peak = 0.0;
  std::size_t n_bg = 0;
  for (std::size_t m = 0; m < tm.rows(); ++m) {
    if (on[m]) {
      peak = std::max(peak, s[m]);
    } else {
      bg += s[m];
      ++n_bg;
    }
  }
  r.background_mean = n_bg ? bg / static_cast<double>(n_bg) : 0.0;
  r.peak_to_background = r.background_mean > 0.0 ? peak / r.background_mean : std::numeric_limits<double>::infinity();

  const Rng root(seed);
  std::vector<double> site_base(support.size(), 0.0);
  std::vector<double> codes(tm.cols());
  for (std::size_t d = 0; d < n_random_baseline; ++d) {
    Rng rng = root.split(d);
    for (double& c : codes) c = rng.uniform();
    const SpecklePattern rs = speckle(tm, PhasePattern(codes), false);
    for (std::size_t k = 0; k < support.size(); ++k) {
      r.baseline_mean += w[support[k]] * rs[support[k]];
      site_base[k] += rs[support[k]];
    }
  }
  const double nd = static_cast<double>(n_random_baseline);
  r.baseline_mean /= nd;
  r.enhancement = r.target_mean / r.baseline_mean;
  for (std::size_t k = 0; k < support.size(); ++k) r.site_enhancement.push_back(s[support[k]] / (site_base[k] / nd));

  r.pearson = pearson(s.values(), w);
  if (const double root_m = std::sqrt(static_cast<double>(tm.rows())); root_m == std::floor(root_m)) {
    r.profile = profiles(s);
  }
  return r;
}

namespace {

std::vector<std::string> mismatches(const FocusReport& a, const FocusReport& b) {
  std::vector<std::string> out;
  if (a.tm_seed != b.tm_seed) out.push_back("tm_seed");
  if (a.n_inputs != b.n_inputs) out.push_back("n_inputs");
  if (a.n_outputs != b.n_outputs) out.push_back("n_outputs");
  if (a.target_weights != b.target_weights) out.push_back("target_weights");
  return out;
}

void plot_profiles(const std::vector<const std::vector<double>*>& curves, const std::filesystem::path& path) {
  constexpr std::size_t kHeight = 64, kScale = 8;
  std::size_t len = 0;
  double top = 0.0;
  for (const auto* c : curves) {
    len = std::max(len, c->size());
    for (double v : *c) top = std::max(top, v);
  }
  const std::size_t width = std::max<std::size_t>(1, len * kScale);
  std::vector<std::uint8_t> px(kHeight * width, 0);
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto& c = *curves[k];
    const auto grey = static_cast<std::uint8_t>(255 - (k * 160) / std::max<std::size_t>(1, curves.size()));
    for (std::size_t x = 0; x < width && !c.empty(); ++x) {
      const std::size_t i = std::min(c.size() - 1, x / kScale);
      const double v = top > 0.0 ? c[i] / top : 0.0;
      const auto y = static_cast<std::size_t>(std::llround(v * static_cast<double>(kHeight - 1)));
      px[(kHeight - 1 - y) * width + x] = grey;
    }
  }
  io::write_pgm(path, kHeight, width, px);
}

}  // namespace

CompareOutputs compare(const std::vector<FocusReport>& reports, const std::filesystem::path& out_dir) {
  if (reports.empty()) throw std::invalid_argument("compare: no reports");
  for (std::size_t i = 1; i < reports.size(); ++i) {
    const auto diff = mismatches(reports.front(), reports[i]);
    if (!diff.empty()) {
      std::string fields;
      for (const auto& f : diff) fields += (fields.empty() ? "" : ", ") + f;
      throw std::invalid_argument("compare: report '" + reports[i].method + "' differs from '" +
                                  reports.front().method + "' in " + fields);
    }
  }
  std::filesystem::create_directories(out_dir);
  CompareOutputs out{out_dir / "comparison.csv", out_dir / "profile_row.pgm", out_dir / "profile_col.pgm"};
  std::ofstream csv(out.csv, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot open " + out.csv.string() + " for writing");
  csv << kCompareHeader << '\n';
  for (const auto& r : reports) {
    std::string seeds;
    for (auto s : r.seeds) seeds += (seeds.empty() ? "" : ";") + std::to_string(s);
    const double min_site = r.site_enhancement.empty()
                                ? 0.0
                                : *std::min_element(r.site_enhancement.begin(), r.site_enhancement.end());
    csv << r.method << ',' << r.tm_seed << ',' << r.n_inputs << ',' << r.n_outputs << ',' << seeds << ','
        << io::format_double(r.target_mean) << ',' << io::format_double(r.background_mean) << ','
        << io::format_double(r.baseline_mean) << ',' << io::format_double(r.enhancement) << ','
        << io::format_double(r.peak_to_background) << ',' << io::format_double(r.pearson) << ','
        << r.profile.peak_row << ',' << r.profile.peak_col << ',' << io::format_double(min_site) << '\n';
  }
  std::vector<const std::vector<double>*> rows, cols;
  for (const auto& r : reports) {
    rows.push_back(&r.profile.row);
    cols.push_back(&r.profile.col);
  }
  plot_profiles(rows, out.row_plot);
  plot_profiles(cols, out.col_plot);
  return out;
}

}  // namespace loft::eval
