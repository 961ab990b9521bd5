#include "loft/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "loft/error.hpp"
#include "loft/rng.hpp"

namespace loft::io {

namespace {

constexpr std::array<char, 4> kMagic{'L', 'O', 'F', 'T'};
// Guards against absurd allocations from corrupt headers.
constexpr std::uint32_t kMaxRank = 16;
constexpr std::uint32_t kMaxMetaEntries = 1U << 16;
constexpr std::uint32_t kMaxStringBytes = 1U << 28;

template <typename T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFFU);
  }
  out.write(bytes.data(), bytes.size());
}

void put_string(std::ostream& out, const std::string& s) {
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

class Reader {
 public:
  Reader(std::istream& in, std::size_t& offset) : in_(in), offset_(offset) {}

  bool at_eof() {
    return in_.peek() == std::char_traits<char>::eof();
  }

  void read_bytes(char* dst, std::size_t n, const char* what, bool truncation) {
    in_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) {
      const std::size_t at = offset_ + got;
      offset_ = at;
      if (truncation) {
        throw TruncationError(std::string("truncated ") + what + ": expected " + std::to_string(n) +
                              " bytes, got " + std::to_string(got) + " (at byte offset " + std::to_string(at) +
                              ")");
      }
      throw FormatError(std::string("unexpected end of file while reading ") + what, at);
    }
    offset_ += n;
  }

  template <typename T>
  T get_le(const char* what) {
    std::array<unsigned char, sizeof(T)> bytes{};
    read_bytes(reinterpret_cast<char*>(bytes.data()), bytes.size(), what, false);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return static_cast<T>(v);
  }

  std::string get_string(const char* what) {
    const std::size_t at = offset_;
    const auto len = get_le<std::uint32_t>(what);
    if (len > kMaxStringBytes) throw FormatError(std::string("implausible length for ") + what, at);
    std::string s(len, '\0');
    read_bytes(s.data(), len, what, false);
    return s;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::size_t& offset_;
};

void store_f64_le(std::byte* dst, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (std::size_t i = 0; i < 8; ++i) dst[i] = static_cast<std::byte>((bits >> (8 * i)) & 0xFFU);
}

double load_f64_le(const std::byte* src) {
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(src[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void store_f32_le(std::byte* dst, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (std::size_t i = 0; i < 4; ++i) dst[i] = static_cast<std::byte>((bits >> (8 * i)) & 0xFFU);
}

float load_f32_le(const std::byte* src) {
  std::uint32_t bits = 0;
  for (std::size_t i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(src[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

std::vector<std::uint64_t> grid_dims(std::size_t count, std::size_t length) {
  const auto side = static_cast<std::uint64_t>(std::llround(std::sqrt(static_cast<double>(length))));
  if (side * side == length) return {count, side, side};
  return {count, 1, length};
}

const std::string& require_meta(const Container& c, const std::string& key, const std::filesystem::path& path) {
  auto it = c.metadata.find(key);
  if (it == c.metadata.end()) {
    throw FormatError(path.string() + ": missing metadata key '" + key + "'", 0);
  }
  return it->second;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("not an integer: '" + s + "'");
  return v;
}

}  // namespace

std::size_t element_size(DType dtype) {
  switch (dtype) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::c64: return 8;
    case DType::c128: return 16;
  }
  throw std::invalid_argument("unknown dtype code");
}

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf.data(), ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("not a number: '" + s + "'");
  return v;
}

std::uint64_t Container::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

Container Container::from_f64(std::vector<std::uint64_t> dims, std::span<const double> values) {
  Container c;
  c.dtype = DType::f64;
  c.dims = std::move(dims);
  if (c.element_count() != values.size()) throw ShapeError("container dims do not match value count");
  c.payload.resize(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) store_f64_le(c.payload.data() + 8 * i, values[i]);
  return c;
}

Container Container::from_f32(std::vector<std::uint64_t> dims, std::span<const double> values) {
  Container c;
  c.dtype = DType::f32;
  c.dims = std::move(dims);
  if (c.element_count() != values.size()) throw ShapeError("container dims do not match value count");
  c.payload.resize(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    store_f32_le(c.payload.data() + 4 * i, static_cast<float>(values[i]));
  }
  return c;
}

Container Container::from_c128(std::vector<std::uint64_t> dims, std::span<const cplx> values) {
  Container c;
  c.dtype = DType::c128;
  c.dims = std::move(dims);
  if (c.element_count() != values.size()) throw ShapeError("container dims do not match value count");
  c.payload.resize(values.size() * 16);
  for (std::size_t i = 0; i < values.size(); ++i) {
    store_f64_le(c.payload.data() + 16 * i, values[i].real());
    store_f64_le(c.payload.data() + 16 * i + 8, values[i].imag());
  }
  return c;
}

std::vector<double> Container::to_f64() const {
  const auto n = static_cast<std::size_t>(element_count());
  std::vector<double> out(n);
  if (dtype == DType::f64) {
    for (std::size_t i = 0; i < n; ++i) out[i] = load_f64_le(payload.data() + 8 * i);
  } else if (dtype == DType::f32) {
    for (std::size_t i = 0; i < n; ++i) out[i] = load_f32_le(payload.data() + 4 * i);
  } else {
    throw FormatError("expected a real-valued container", 8);
  }
  return out;
}

std::vector<cplx> Container::to_c128() const {
  const auto n = static_cast<std::size_t>(element_count());
  std::vector<cplx> out(n);
  if (dtype == DType::c128) {
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = {load_f64_le(payload.data() + 16 * i), load_f64_le(payload.data() + 16 * i + 8)};
    }
  } else if (dtype == DType::c64) {
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = {load_f32_le(payload.data() + 8 * i), load_f32_le(payload.data() + 8 * i + 4)};
    }
  } else {
    throw FormatError("expected a complex-valued container", 8);
  }
  return out;
}

void write_container(std::ostream& out, const Container& c) {
  const std::uint64_t expected = c.element_count() * element_size(c.dtype);
  if (expected != c.payload.size()) {
    throw ShapeError("container payload length " + std::to_string(c.payload.size()) + " != " +
                     std::to_string(expected));
  }
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kFormatVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.dtype));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.dims.size()));
  for (auto d : c.dims) put_le<std::uint64_t>(out, d);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.metadata.size()));
  for (const auto& [k, v] : c.metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  put_le<std::uint64_t>(out, c.payload.size());
  out.write(reinterpret_cast<const char*>(c.payload.data()), static_cast<std::streamsize>(c.payload.size()));
  if (!out) throw std::runtime_error("write_container: stream error");
}

Container read_container(std::istream& in, std::size_t& offset) {
  Reader r(in, offset);
  Container c;

  const std::size_t magic_at = r.offset();
  std::array<char, 4> magic{};
  r.read_bytes(magic.data(), magic.size(), "magic", false);
  if (magic != kMagic) {
    throw FormatError("bad magic: expected \"LOFT\"", magic_at);
  }
  const std::size_t version_at = r.offset();
  const auto version = r.get_le<std::uint32_t>("version");
  if (version != kFormatVersion) {
    throw FormatError("unsupported format version " + std::to_string(version), version_at);
  }
  const std::size_t dtype_at = r.offset();
  const auto code = r.get_le<std::uint32_t>("dtype");
  if (code < 1 || code > 4) throw FormatError("unknown dtype code " + std::to_string(code), dtype_at);
  c.dtype = static_cast<DType>(code);
  const std::size_t rank_at = r.offset();
  const auto rank = r.get_le<std::uint32_t>("rank");
  if (rank > kMaxRank) throw FormatError("implausible rank " + std::to_string(rank), rank_at);
  c.dims.resize(rank);
  for (auto& d : c.dims) d = r.get_le<std::uint64_t>("dims");

  const std::size_t meta_at = r.offset();
  const auto n_meta = r.get_le<std::uint32_t>("metadata count");
  if (n_meta > kMaxMetaEntries) throw FormatError("implausible metadata count", meta_at);
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    std::string key = r.get_string("metadata key");
    std::string value = r.get_string("metadata value");
    c.metadata.emplace(std::move(key), std::move(value));
  }

  const std::size_t len_at = r.offset();
  const auto payload_len = r.get_le<std::uint64_t>("payload length");
  const std::uint64_t expected = c.element_count() * element_size(c.dtype);
  if (payload_len != expected) {
    throw TruncationError("payload length " + std::to_string(payload_len) + " disagrees with dims product (" +
                          std::to_string(expected) + " bytes expected) at byte offset " + std::to_string(len_at));
  }
  c.payload.resize(static_cast<std::size_t>(payload_len));
  r.read_bytes(reinterpret_cast<char*>(c.payload.data()), c.payload.size(), "payload", true);
  return c;
}

void write_file(const std::filesystem::path& path, const std::vector<Container>& containers) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& c : containers) write_container(out, c);
}

std::vector<Container> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<Container> out;
  std::size_t offset = 0;
  Reader probe(in, offset);
  do {
    out.push_back(read_container(in, offset));
  } while (!probe.at_eof());
  return out;
}

void save_tm(const TransmissionMatrix& tm, const std::filesystem::path& path) {
  Container c = Container::from_c128({tm.rows(), tm.cols()}, tm.entries());
  c.metadata["kind"] = "transmission_matrix";
  c.metadata["seed"] = std::to_string(tm.seed());
  write_file(path, {c});
}

TransmissionMatrix load_tm(const std::filesystem::path& path) {
  const auto containers = read_file(path);
  const Container& c = containers.front();
  if (c.dims.size() != 2) throw FormatError(path.string() + ": transmission matrix must be rank 2", 12);
  const std::uint64_t seed = parse_u64(require_meta(c, "seed", path));
  return TransmissionMatrix(c.dims[0], c.dims[1], c.to_c128(), seed);
}

void save_phase(const PhasePattern& p, const std::filesystem::path& path) {
  std::size_t side = 0;
  try {
    side = p.side();
  } catch (const ShapeError&) {
  }
  const std::vector<std::uint64_t> dims = side ? std::vector<std::uint64_t>{side, side}
                                               : std::vector<std::uint64_t>{1, p.size()};
  Container c = Container::from_f64(dims, p.values());
  c.metadata["kind"] = "phase_pattern";
  c.metadata["levels"] = p.levels() ? std::to_string(*p.levels()) : "none";
  write_file(path, {c});
}

PhasePattern load_phase(const std::filesystem::path& path) {
  const auto containers = read_file(path);
  const Container& c = containers.front();
  if (require_meta(c, "kind", path) != "phase_pattern") {
    throw FormatError(path.string() + ": not a phase pattern", 0);
  }
  if (c.dims.size() != 2) throw FormatError(path.string() + ": phase pattern must be rank 2", 12);
  PhasePattern p(c.to_f64());
  const std::string levels = require_meta(c, "levels", path);
  return levels == "none" ? p : p.quantized(std::stoi(levels));
}

PairDataset gen_dataset(const TransmissionMatrix& tm, std::size_t n_pairs, std::uint64_t seed,
                        std::optional<int> levels) {
  if (n_pairs == 0) throw std::invalid_argument("gen_dataset: n_pairs must be >= 1");
  if (levels && *levels < 2) throw std::invalid_argument("gen_dataset: quantize_levels must be >= 2");

  PairDataset ds;
  ds.tm_seed = tm.seed();
  ds.levels = levels;
  ds.phases.reserve(n_pairs);
  ds.speckles.reserve(n_pairs);
  ds.norm_max.reserve(n_pairs);
  const Rng root(seed);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    Rng rng = root.split(i);
    std::vector<double> v(tm.cols());
    for (double& x : v) {
      const double u = rng.uniform();
      x = levels ? std::floor(u * *levels) / *levels : u;
    }
    PhasePattern phase(std::move(v));
    SpecklePattern raw = speckle(tm, phase, false);
    ds.norm_max.push_back(raw.scale());
    ds.speckles.push_back(raw.normalize());
    ds.phases.push_back(std::move(phase));
  }
  return ds;
}

void save_dataset(const PairDataset& ds, const std::filesystem::path& path) {
  if (ds.phases.size() != ds.speckles.size() || ds.norm_max.size() != ds.speckles.size()) {
    throw ShapeError("save_dataset: phase, speckle and norm_max counts differ");
  }
  if (ds.phases.empty()) throw std::invalid_argument("save_dataset: empty dataset");
  const std::size_t n = ds.size();
  const std::size_t np = ds.phases.front().size();
  const std::size_t ns = ds.speckles.front().size();

  std::vector<double> phase_block;
  phase_block.reserve(n * np);
  std::vector<double> speckle_block;
  speckle_block.reserve(n * ns);
  for (std::size_t i = 0; i < n; ++i) {
    if (ds.phases[i].size() != np || ds.speckles[i].size() != ns) {
      throw ShapeError("save_dataset: patterns have inconsistent sizes");
    }
    phase_block.insert(phase_block.end(), ds.phases[i].values().begin(), ds.phases[i].values().end());
    speckle_block.insert(speckle_block.end(), ds.speckles[i].values().begin(), ds.speckles[i].values().end());
  }

  Container phases = Container::from_f64(grid_dims(n, np), phase_block);
  phases.metadata["kind"] = "dataset_phases";
  phases.metadata["tm_seed"] = std::to_string(ds.tm_seed);
  phases.metadata["levels"] = ds.levels ? std::to_string(*ds.levels) : "none";
  std::string norm;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) norm += ',';
    norm += format_double(ds.norm_max[i]);
  }
  phases.metadata["norm_max"] = norm;

  Container speckles = Container::from_f64(grid_dims(n, ns), speckle_block);
  speckles.metadata["kind"] = "dataset_speckles";
  write_file(path, {phases, speckles});
}

PairDataset load_dataset(const std::filesystem::path& path) {
  const auto containers = read_file(path);
  if (containers.size() != 2) {
    throw FormatError(path.string() + ": dataset needs a phase block and a speckle block", 0);
  }
  const Container& pc = containers[0];
  const Container& sc = containers[1];
  for (const Container* c : {&pc, &sc}) {
    if (c->dtype != DType::f64 && c->dtype != DType::f32) {
      throw FormatError(path.string() + ": dataset blocks must be real-valued", 8);
    }
    if (c->dims.size() != 3) throw FormatError(path.string() + ": dataset blocks must be rank 3", 12);
  }
  if (require_meta(pc, "kind", path) != "dataset_phases" || require_meta(sc, "kind", path) != "dataset_speckles") {
    throw FormatError(path.string() + ": unexpected block kinds", 0);
  }
  const std::size_t n = pc.dims[0];
  if (sc.dims[0] != n) {
    throw FormatError(path.string() + ": phase and speckle counts differ (" + std::to_string(n) + " vs " +
                          std::to_string(sc.dims[0]) + ")",
                      0);
  }

  PairDataset ds;
  ds.tm_seed = parse_u64(require_meta(pc, "tm_seed", path));
  const std::string& levels = require_meta(pc, "levels", path);
  if (levels != "none") ds.levels = static_cast<int>(parse_u64(levels));

  const std::string& norm = require_meta(pc, "norm_max", path);
  std::stringstream ss(norm);
  std::string item;
  while (std::getline(ss, item, ',')) ds.norm_max.push_back(parse_double(item));
  if (ds.norm_max.size() != n) throw FormatError(path.string() + ": norm_max list length != pair count", 0);

  const std::size_t np = pc.dims[1] * pc.dims[2];
  const std::size_t ns = sc.dims[1] * sc.dims[2];
  const auto pv = pc.to_f64();
  const auto sv = sc.to_f64();
  ds.phases.reserve(n);
  ds.speckles.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ds.phases.emplace_back(std::vector<double>(pv.begin() + i * np, pv.begin() + (i + 1) * np));
    ds.speckles.emplace_back(std::vector<double>(sv.begin() + i * ns, sv.begin() + (i + 1) * ns), ds.norm_max[i]);
  }
  return ds;
}

void save_checkpoint(const std::filesystem::path& path, const std::map<std::string, std::string>& header,
                     const std::vector<NamedArray>& arrays) {
  std::vector<Container> out;
  out.reserve(arrays.size() + 1);
  Container head = Container::from_f64({0}, {});
  head.metadata = header;
  head.metadata["name"] = "__header__";
  out.push_back(std::move(head));
  for (const auto& a : arrays) {
    Container c = Container::from_f64(a.dims, a.values);
    c.metadata["name"] = a.name;
    out.push_back(std::move(c));
  }
  write_file(path, out);
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path,
                                        std::map<std::string, std::string>* header) {
  const auto containers = read_file(path);
  if (containers.empty() || containers.front().metadata.count("name") == 0 ||
      containers.front().metadata.at("name") != "__header__") {
    throw FormatError(path.string() + ": checkpoint header missing", 0);
  }
  if (header) {
    *header = containers.front().metadata;
    header->erase("name");
  }
  std::vector<NamedArray> arrays;
  for (std::size_t i = 1; i < containers.size(); ++i) {
    const Container& c = containers[i];
    arrays.push_back({require_meta(c, "name", path), c.dims, c.to_f64()});
  }
  return arrays;
}

void write_pgm(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
               std::span<const std::uint8_t> pixels) {
  if (pixels.size() != rows * cols) throw ShapeError("write_pgm: pixel count != rows * cols");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P5\n" << cols << ' ' << rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, std::size_t& rows, std::size_t& cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string magic;
  int maxval = 0;
  in >> magic >> cols >> rows >> maxval;
  if (magic != "P5" || maxval != 255) throw FormatError(path.string() + ": not an 8-bit binary PGM", 0);
  in.get();
  std::vector<std::uint8_t> px(rows * cols);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (static_cast<std::size_t>(in.gcount()) != px.size()) throw TruncationError(path.string() + ": short PGM");
  return px;
}

void export_image(std::span<const double> values, std::size_t rows, std::size_t cols,
                  const std::filesystem::path& path) {
  if (values.size() != rows * cols) throw ShapeError("export_image: value count != rows * cols");
  std::vector<std::uint8_t> px(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = values[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw RangeError("export_image: value " + std::to_string(v) + " at index " + std::to_string(i) +
                       " outside [0, 1]");
    }
    px[i] = static_cast<std::uint8_t>(std::floor(255.0 * v + 0.5));
  }
  write_pgm(path, rows, cols, px);
}

void export_image(const SpecklePattern& s, const std::filesystem::path& path) {
  const std::size_t side = s.side();
  export_image(s.values(), side, side, path);
}

void export_image(const PhasePattern& p, const std::filesystem::path& path) {
  const std::size_t side = p.side();
  export_image(p.values(), side, side, path);
}

}  // namespace loft::io
