#pragma once

// Binary basis cache. Layout (all integers and floats little-endian):
//   magic "BMSFBASE", u32 version, u32 formulation, u32 region count
//   per region: i32 id, u32 block count, i32 blocks[], u32 support count, i32 support[],
//               u32 n_perm, u32 n_cand, u32 n_test, u32 eigen count, f64 eigenvalues[],
//               f64 columns (permanent, candidates, test; column-major)

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "bmsfem/error.hpp"
#include "bmsfem/gmsfem.hpp"

namespace bmsfem {

inline constexpr std::array<char, 8> kCacheMagic{'B', 'M', 'S', 'F', 'B', 'A', 'S', 'E'};
inline constexpr std::uint32_t kCacheVersion = 1;

namespace detail {

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
  out.write(b, 8);
}
inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xffu);
  out.write(b, 4);
}
inline void put_i32(std::ostream& out, std::int32_t v) { put_u32(out, static_cast<std::uint32_t>(v)); }
inline void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw LoadError("basis cache is truncated");
  std::uint64_t v = 0;
  for (int k = 7; k >= 0; --k) v = (v << 8) | b[k];
  return v;
}
inline std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw LoadError("basis cache is truncated");
  std::uint32_t v = 0;
  for (int k = 3; k >= 0; --k) v = (v << 8) | b[k];
  return v;
}
inline std::int32_t get_i32(std::istream& in) { return static_cast<std::int32_t>(get_u32(in)); }
inline double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

inline void put_matrix(std::ostream& out, const Matrix& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) put_f64(out, m(i, j));
}
inline Matrix get_matrix(std::istream& in, std::uint32_t rows, std::uint32_t cols) {
  Matrix m(rows, cols);
  for (std::uint32_t j = 0; j < cols; ++j)
    for (std::uint32_t i = 0; i < rows; ++i) m(i, j) = get_f64(in);
  return m;
}

inline std::uint32_t checked_count(std::istream& in, std::uint32_t limit, const char* what) {
  std::uint32_t n = get_u32(in);
  if (n > limit) throw LoadError(std::string("basis cache: implausible ") + what + " count");
  return n;
}

}  // namespace detail

inline void write_basis_cache(std::ostream& out, const BasisCatalog& cat) {
  out.write(kCacheMagic.data(), kCacheMagic.size());
  detail::put_u32(out, kCacheVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(cat.formulation));
  detail::put_u32(out, static_cast<std::uint32_t>(cat.regions.size()));
  for (const auto& r : cat.regions) {
    detail::put_i32(out, r.id);
    detail::put_u32(out, static_cast<std::uint32_t>(r.region.blocks.size()));
    for (int b : r.region.blocks) detail::put_i32(out, b);
    detail::put_u32(out, static_cast<std::uint32_t>(r.support.size()));
    for (int s : r.support) detail::put_i32(out, s);
    detail::put_u32(out, static_cast<std::uint32_t>(r.num_permanent()));
    detail::put_u32(out, static_cast<std::uint32_t>(r.num_candidates()));
    detail::put_u32(out, static_cast<std::uint32_t>(r.num_test()));
    detail::put_u32(out, static_cast<std::uint32_t>(r.eigenvalues.size()));
    for (Eigen::Index k = 0; k < r.eigenvalues.size(); ++k) detail::put_f64(out, r.eigenvalues[k]);
    detail::put_matrix(out, r.permanent);
    detail::put_matrix(out, r.candidates);
    detail::put_matrix(out, r.test);
  }
  if (!out) throw LoadError("failed writing basis cache");
}

inline BasisCatalog read_basis_cache(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCacheMagic)
    throw LoadError("not a basis cache file");
  const std::uint32_t version = detail::get_u32(in);
  if (version != kCacheVersion) throw LoadError("unsupported basis cache version " + std::to_string(version));
  const std::uint32_t form = detail::get_u32(in);
  if (form > 2) throw LoadError("basis cache has an unknown formulation");
  BasisCatalog cat;
  cat.formulation = static_cast<Formulation>(form);
  constexpr std::uint32_t kMax = 1u << 26;
  const std::uint32_t n = detail::checked_count(in, kMax, "region");
  cat.regions.resize(n);
  for (auto& r : cat.regions) {
    r.id = detail::get_i32(in);
    const auto nb = detail::checked_count(in, kMax, "block");
    for (std::uint32_t k = 0; k < nb; ++k) r.region.blocks.push_back(detail::get_i32(in));
    const auto ns = detail::checked_count(in, kMax, "support");
    for (std::uint32_t k = 0; k < ns; ++k) r.support.push_back(detail::get_i32(in));
    const auto np = detail::checked_count(in, kMax, "column");
    const auto nc = detail::checked_count(in, kMax, "column");
    const auto nt = detail::checked_count(in, kMax, "column");
    const auto ne = detail::checked_count(in, kMax, "eigenvalue");
    r.eigenvalues.resize(ne);
    for (std::uint32_t k = 0; k < ne; ++k) r.eigenvalues[k] = detail::get_f64(in);
    r.permanent = detail::get_matrix(in, ns, np);
    r.candidates = detail::get_matrix(in, ns, nc);
    r.test = detail::get_matrix(in, ns, nt);
  }
  return cat;
}

inline void save_basis_cache(const std::string& path, const BasisCatalog& cat) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot open " + path + " for writing");
  write_basis_cache(out, cat);
}

inline BasisCatalog load_basis_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open basis cache " + path);
  return read_basis_cache(in);
}

}  // namespace bmsfem
