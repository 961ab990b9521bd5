#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loft/sim.hpp"

namespace loft::io {

enum class DType : std::uint32_t { f32 = 1, f64 = 2, c64 = 3, c128 = 4 };

std::size_t element_size(DType dtype);

inline constexpr std::uint32_t kFormatVersion = 1;

/// One typed n-dimensional block with a string metadata map.
///
/// On-disk layout, all integers little-endian:
///
///   offset  size        field
///   0       4           magic "LOFT"
///   4       4           u32 format version (1)
///   8       4           u32 dtype code (f32=1, f64=2, c64=3, c128=4)
///   12      4           u32 rank
///   16      8*rank      u64 dims
///   ...     4           u32 metadata entry count, then per entry
///                       u32 key length, key bytes, u32 value length, value bytes (UTF-8)
///   ...     8           u64 payload byte length (must equal element size * prod(dims))
///   ...     payload     little-endian elements, row-major; complex types interleave re, im
///
/// Several containers may follow each other in one file.
struct Container {
  DType dtype = DType::f64;
  std::vector<std::uint64_t> dims;
  std::map<std::string, std::string> metadata;
  std::vector<std::byte> payload;

  std::uint64_t element_count() const;

  static Container from_f64(std::vector<std::uint64_t> dims, std::span<const double> values);
  static Container from_f32(std::vector<std::uint64_t> dims, std::span<const double> values);
  static Container from_c128(std::vector<std::uint64_t> dims, std::span<const cplx> values);

  /// Converts f32/f64 payloads to doubles; throws FormatError for complex dtypes.
  std::vector<double> to_f64() const;
  /// Converts c64/c128 payloads to complex doubles.
  std::vector<cplx> to_c128() const;

  bool operator==(const Container&) const = default;
};

void write_container(std::ostream& out, const Container& c);
/// Reads one container; `offset` is the stream position used in error messages and is advanced.
Container read_container(std::istream& in, std::size_t& offset);

void write_file(const std::filesystem::path& path, const std::vector<Container>& containers);
std::vector<Container> read_file(const std::filesystem::path& path);

// Transmission matrices ------------------------------------------------------

void save_tm(const TransmissionMatrix& tm, const std::filesystem::path& path);
TransmissionMatrix load_tm(const std::filesystem::path& path);

/// Rank-2 f64 container: [side, side] for square patterns, otherwise [1, n].
void save_phase(const PhasePattern& p, const std::filesystem::path& path);
PhasePattern load_phase(const std::filesystem::path& path);

// Phase / speckle datasets -----------------------------------------------------

struct PairDataset {
  std::vector<PhasePattern> phases;
  std::vector<SpecklePattern> speckles;  ///< normalized per pattern
  std::uint64_t tm_seed = 0;
  std::optional<int> levels;
  std::vector<double> norm_max;  ///< per-speckle maximum before normalization

  std::size_t size() const noexcept { return phases.size(); }
  bool operator==(const PairDataset&) const = default;
};

/// Draws i.i.d. uniform phases (snapped to k/levels when `levels` is set),
/// propagates each through `tm` and stores the max-normalized speckle.
/// Substream i of `seed` produces pair i, so the result is independent of
/// generation order.
PairDataset gen_dataset(const TransmissionMatrix& tm, std::size_t n_pairs, std::uint64_t seed,
                        std::optional<int> levels = 32);

void save_dataset(const PairDataset& ds, const std::filesystem::path& path);
PairDataset load_dataset(const std::filesystem::path& path);

// Checkpoints ----------------------------------------------------------------

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;
  bool operator==(const NamedArray&) const = default;
};

/// Header container "__header__" carries `header` metadata; each array follows as its own container.
void save_checkpoint(const std::filesystem::path& path, const std::map<std::string, std::string>& header,
                     const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path,
                                        std::map<std::string, std::string>* header = nullptr);

// Images -----------------------------------------------------------------------

/// 8-bit binary PGM. Value v in [0, 1] maps to floor(255 v + 0.5).
void export_image(std::span<const double> values, std::size_t rows, std::size_t cols,
                  const std::filesystem::path& path);
void export_image(const SpecklePattern& s, const std::filesystem::path& path);
void export_image(const PhasePattern& p, const std::filesystem::path& path);

void write_pgm(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
               std::span<const std::uint8_t> pixels);
/// Reads back an 8-bit binary PGM; returns pixels and fills rows/cols.
std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, std::size_t& rows, std::size_t& cols);

/// Shortest round-trip decimal text for a double.
std::string format_double(double v);
double parse_double(const std::string& s);

}  // namespace loft::io
