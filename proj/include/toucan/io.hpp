#pragma once

// File formats.
//
// TNS1 tensor file:
//   bytes 0-3   magic "TNS1"
//   byte  4     dtype: 0 = real float64, 1 = complex float64 (interleaved re, im)
//   bytes 5-7   reserved, zero
//   bytes 8-31  n1, n2, n3 as little-endian uint64
//   payload     little-endian float64 in the (i fastest, then j, then k) layout
//
// Mask CSV: the line "kind,n1,n3", a line with those values (e.g. "entries,50,12"),
// then one line per observed element, "t,i,k" for entry masks or "t,i" for tube
// masks, zero-based, ordered by t.
//
// FSM checkpoint: complex TNS1 of the stored half spectrum (n1 x r x (n3/2 + 1)) and
// a JSON sidecar {"n3", "r", "step_count", "seed"}.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "toucan/fsm.hpp"
#include "toucan/synth.hpp"
#include "toucan/tensor.hpp"

namespace toucan::io {

enum class DType : std::uint8_t { Real = 0, Complex = 1 };

struct TnsFile {
  DType dtype = DType::Real;
  Index n1 = 0, n2 = 0, n3 = 0;
  std::vector<double> payload;  // interleaved re, im for complex files
};

namespace detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
  std::array<char, 8> bytes{};
  for (int b = 0; b < 8; ++b) bytes[static_cast<std::size_t>(b)] = static_cast<char>((v >> (8 * b)) & 0xFF);
  os.write(bytes.data(), 8);
}

inline std::uint64_t get_u64(std::istream& is) {
  std::array<unsigned char, 8> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), 8)) throw FormatError("TNS1: truncated header");
  std::uint64_t v = 0;
  for (int b = 7; b >= 0; --b) v = (v << 8) | bytes[static_cast<std::size_t>(b)];
  return v;
}

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream os(path, mode | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return os;
}

inline std::ifstream open_in(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream is(path, mode);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return is;
}

}  // namespace detail

inline void write_tns(std::ostream& os, DType dtype, Index n1, Index n2, Index n3, std::span<const double> payload) {
  const std::size_t expected = static_cast<std::size_t>(n1 * n2 * n3) * (dtype == DType::Complex ? 2 : 1);
  if (payload.size() != expected) throw DimensionMismatch("write_tns: payload length does not match dims");
  const char header[8] = {'T', 'N', 'S', '1', static_cast<char>(dtype), 0, 0, 0};
  os.write(header, 8);
  detail::put_u64(os, static_cast<std::uint64_t>(n1));
  detail::put_u64(os, static_cast<std::uint64_t>(n2));
  detail::put_u64(os, static_cast<std::uint64_t>(n3));
  for (double x : payload) detail::put_u64(os, std::bit_cast<std::uint64_t>(x));
  if (!os) throw std::runtime_error("write_tns: write failed");
}

inline TnsFile read_tns(std::istream& is) {
  char header[8];
  if (!is.read(header, 8)) throw FormatError("TNS1: truncated header");
  if (std::memcmp(header, "TNS1", 4) != 0) throw FormatError("TNS1: bad magic");
  if (header[5] != 0 || header[6] != 0 || header[7] != 0) throw FormatError("TNS1: reserved bytes must be zero");
  TnsFile f;
  switch (static_cast<unsigned char>(header[4])) {
    case 0: f.dtype = DType::Real; break;
    case 1: f.dtype = DType::Complex; break;
    default: throw FormatError("TNS1: unknown dtype " + std::to_string(static_cast<unsigned char>(header[4])));
  }
  const std::uint64_t d1 = detail::get_u64(is), d2 = detail::get_u64(is), d3 = detail::get_u64(is);
  constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 31;
  if (d1 == 0 || d2 == 0 || d3 == 0 || d1 > kMaxDim || d2 > kMaxDim || d3 > kMaxDim) {
    throw FormatError("TNS1: invalid dimensions");
  }
  f.n1 = static_cast<Index>(d1);
  f.n2 = static_cast<Index>(d2);
  f.n3 = static_cast<Index>(d3);
  const std::size_t count = static_cast<std::size_t>(d1 * d2 * d3) * (f.dtype == DType::Complex ? 2 : 1);
  f.payload.resize(count);
  std::vector<unsigned char> raw(count * 8);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError("TNS1: truncated payload");
  }
  for (std::size_t n = 0; n < count; ++n) {
    std::uint64_t v = 0;
    for (int b = 7; b >= 0; --b) v = (v << 8) | raw[n * 8 + static_cast<std::size_t>(b)];
    f.payload[n] = std::bit_cast<double>(v);
  }
  return f;
}

inline void write_tensor(const std::filesystem::path& path, const Tensor3& t) {
  auto os = detail::open_out(path, std::ios::binary);
  write_tns(os, DType::Real, t.n1(), t.n2(), t.n3(), t.data());
}

inline Tensor3 read_tensor(const std::filesystem::path& path) {
  auto is = detail::open_in(path, std::ios::binary);
  TnsFile f = read_tns(is);
  if (f.dtype != DType::Real) throw FormatError(path.string() + ": expected a real TNS1 file");
  return Tensor3(f.n1, f.n2, f.n3, std::move(f.payload));
}

inline void write_complex(const std::filesystem::path& path, Index n1, Index n2, Index n3,
                          std::span<const Complex> values) {
  auto os = detail::open_out(path, std::ios::binary);
  std::span<const double> flat(reinterpret_cast<const double*>(values.data()), values.size() * 2);
  write_tns(os, DType::Complex, n1, n2, n3, flat);
}

// --- masks -----------------------------------------------------------------

inline void write_masks_csv(std::ostream& os, const std::vector<SampleMask>& masks) {
  if (masks.empty()) throw std::invalid_argument("write_masks_csv: no masks");
  const SampleMask& first = masks.front();
  os << "kind,n1,n3\n" << to_string(first.kind()) << ',' << first.n1() << ',' << first.n3() << '\n';
  for (std::size_t t = 0; t < masks.size(); ++t) {
    const SampleMask& m = masks[t];
    if (m.kind() != first.kind() || m.n1() != first.n1() || m.n3() != first.n3()) {
      throw DimensionMismatch("write_masks_csv: masks differ in kind or dimensions");
    }
    if (m.kind() == MaskKind::Tubes) {
      for (Index i : m.rows()) os << t << ',' << i << '\n';
    } else {
      for (const auto& [i, k] : m.entries()) os << t << ',' << i << ',' << k << '\n';
    }
  }
}

/// Reads masks for `count` lateral slices; slices without lines get empty masks.
inline std::vector<SampleMask> read_masks_csv(std::istream& is, Index count) {
  std::string line;
  if (!std::getline(is, line) || line != "kind,n1,n3") throw FormatError("mask CSV: missing 'kind,n1,n3' header");
  if (!std::getline(is, line)) throw FormatError("mask CSV: missing kind/dimension line");
  MaskKind kind;
  Index n1 = 0, n3 = 0;
  {
    std::stringstream ss(line);
    std::string kind_s, n1_s, n3_s;
    if (!std::getline(ss, kind_s, ',') || !std::getline(ss, n1_s, ',') || !std::getline(ss, n3_s)) {
      throw FormatError("mask CSV: malformed kind/dimension line");
    }
    kind = parse_mask_kind(kind_s);
    try {
      n1 = std::stoll(n1_s);
      n3 = std::stoll(n3_s);
    } catch (const std::exception&) {
      throw FormatError("mask CSV: malformed dimensions");
    }
    if (n1 < 1 || n3 < 1) throw FormatError("mask CSV: dimensions must be positive");
  }

  std::vector<std::vector<std::pair<Index, Index>>> entries(static_cast<std::size_t>(count));
  std::vector<std::vector<Index>> tubes(static_cast<std::size_t>(count));
  Index line_no = 2;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<Index> fields;
    std::stringstream ss(line);
    std::string field;
    try {
      while (std::getline(ss, field, ',')) fields.push_back(std::stoll(field));
    } catch (const std::exception&) {
      throw FormatError("mask CSV line " + std::to_string(line_no) + ": not an integer");
    }
    const std::size_t want = kind == MaskKind::Entries ? 3 : 2;
    if (fields.size() != want) throw FormatError("mask CSV line " + std::to_string(line_no) + ": wrong field count");
    const Index t = fields[0];
    if (t < 0 || t >= count) throw FormatError("mask CSV line " + std::to_string(line_no) + ": slice out of range");
    if (kind == MaskKind::Entries) {
      entries[static_cast<std::size_t>(t)].emplace_back(fields[1], fields[2]);
    } else {
      tubes[static_cast<std::size_t>(t)].push_back(fields[1]);
    }
  }

  std::vector<SampleMask> masks;
  masks.reserve(static_cast<std::size_t>(count));
  try {
    for (std::size_t t = 0; t < static_cast<std::size_t>(count); ++t) {
      masks.push_back(kind == MaskKind::Entries ? SampleMask::from_entries(n1, n3, std::move(entries[t]))
                                                : SampleMask::from_tubes(n1, n3, std::move(tubes[t])));
    }
  } catch (const std::logic_error& e) {
    throw FormatError(std::string("mask CSV: ") + e.what());
  }
  return masks;
}

inline void write_masks(const std::filesystem::path& path, const std::vector<SampleMask>& masks) {
  auto os = detail::open_out(path);
  write_masks_csv(os, masks);
}

inline std::vector<SampleMask> read_masks(const std::filesystem::path& path, Index count) {
  auto is = detail::open_in(path);
  return read_masks_csv(is, count);
}

// --- FSM checkpoints ---------------------------------------------------------

struct Checkpoint {
  FsmEstimate fsm;
  Index step_count = 0;
  std::uint64_t seed = 0;
};

inline void write_checkpoint(const std::filesystem::path& tns_path, const std::filesystem::path& json_path,
                             const FsmEstimate& fsm, Index step_count, std::uint64_t seed) {
  write_complex(tns_path, fsm.n1(), fsm.rank(), fsm.stored_slices(), fsm.spectral().data());
  nlohmann::ordered_json meta;
  meta["n3"] = fsm.n3();
  meta["r"] = fsm.rank();
  meta["step_count"] = step_count;
  meta["seed"] = seed;
  auto os = detail::open_out(json_path);
  os << meta.dump(2) << '\n';
}

inline Checkpoint read_checkpoint(const std::filesystem::path& tns_path, const std::filesystem::path& json_path) {
  nlohmann::json meta;
  try {
    auto js = detail::open_in(json_path);
    meta = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint sidecar: ") + e.what());
  }
  auto is = detail::open_in(tns_path, std::ios::binary);
  TnsFile f = read_tns(is);
  if (f.dtype != DType::Complex) throw FormatError("checkpoint: expected a complex TNS1 file");
  const Index n3 = meta.at("n3").get<Index>();
  const Index r = meta.at("r").get<Index>();
  if (r != f.n2 || half_spectrum_length(n3) != f.n3) throw FormatError("checkpoint: sidecar does not match tensor dims");

  SpectralTensor basis(f.n1, r, n3, true);
  auto dst = basis.data();
  for (std::size_t n = 0; n < dst.size(); ++n) dst[n] = Complex(f.payload[2 * n], f.payload[2 * n + 1]);
  return {FsmEstimate(std::move(basis)), meta.at("step_count").get<Index>(), meta.at("seed").get<std::uint64_t>()};
}

}  // namespace toucan::io
