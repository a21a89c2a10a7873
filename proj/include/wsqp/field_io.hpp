#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wsqp/grid.hpp"
#include "wsqp/optimality.hpp"

namespace wsqp {

inline constexpr const char* kFieldCsvSchema = "wsqp.field/1";
inline constexpr const char* kMaskCsvSchema = "wsqp.active_sets/1";
inline constexpr std::uint32_t kFieldBinaryVersion = 1;

/// CSV layout: a "# schema:" line, a header, then one row per value.
/// Spatial fields use columns i,k,value; space-time fields n,i,k,value.
/// Values are printed with 17 significant digits and round-trip exactly.
inline void write_field_csv(std::ostream& os, const Grid& g, const Field& u) {
  require(u.fits(g), "field_io: field does not fit the grid");
  os << "# schema: " << kFieldCsvSchema << "\n";
  os << (u.is_spatial() ? "i,k,value\n" : "n,i,k,value\n");
  char buf[64];
  for (int n = 0; n < u.levels(); ++n) {
    for (int k = 0; k < g.ny(); ++k) {
      for (int i = 0; i < g.nx(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", u(n, g.index(i, k)));
        if (!u.is_spatial()) os << n << ',';
        os << i << ',' << k << ',' << buf << '\n';
      }
    }
  }
}

inline Field read_field_csv(std::istream& is, const Grid& g) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)) &&
              line == std::string("# schema: ") + kFieldCsvSchema,
          std::string("field_io: CSV must start with '# schema: ") + kFieldCsvSchema + "'");
  require(static_cast<bool>(std::getline(is, line)), "field_io: CSV header missing");
  const bool spatial = line == "i,k,value";
  require(spatial || line == "n,i,k,value", "field_io: unknown CSV header '" + line + "'");
  Field u = spatial ? Field::spatial(g) : Field::space_time(g);
  std::vector<std::uint8_t> seen(u.size(), 0);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    require(cells.size() == (spatial ? 3u : 4u), "field_io: malformed CSV row '" + line + "'");
    std::size_t c = 0;
    const int n = spatial ? 0 : std::stoi(cells[c++]);
    const int i = std::stoi(cells[c++]);
    const int k = std::stoi(cells[c++]);
    require(n >= 0 && n < u.levels() && i >= 0 && i < g.nx() && k >= 0 && k < g.ny(),
            "field_io: CSV index outside the grid in row '" + line + "'");
    const std::size_t at = static_cast<std::size_t>(n) * g.nodes() + g.index(i, k);
    u[at] = std::stod(cells[c]);
    seen[at] = 1;
  }
  for (auto s : seen) require(s, "field_io: CSV does not cover every node");
  return u;
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xFFu));
}
inline void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  for (int b = 0; b < 8; ++b) os.put(static_cast<char>((v >> (8 * b)) & 0xFFu));
}
inline std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) {
    const int c = is.get();
    require(c != EOF, "field_io: truncated binary header");
    v |= static_cast<std::uint32_t>(c & 0xFF) << (8 * b);
  }
  return v;
}
inline double get_f64(std::istream& is) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) {
    const int c = is.get();
    require(c != EOF, "field_io: truncated binary payload");
    v |= static_cast<std::uint64_t>(c & 0xFF) << (8 * b);
  }
  return std::bit_cast<double>(v);
}

}  // namespace detail

/// Binary layout, all little-endian:
///   "WSQF" | u32 version | u32 kind (0 spatial, 1 space-time) | u32 dim |
///   u32 nx | u32 ny | u32 levels | levels * nx * ny f64, level-major, x fastest.
inline void write_field_binary(std::ostream& os, const Grid& g, const Field& u) {
  require(u.fits(g), "field_io: field does not fit the grid");
  os.write("WSQF", 4);
  detail::put_u32(os, kFieldBinaryVersion);
  detail::put_u32(os, u.is_spatial() ? 0u : 1u);
  detail::put_u32(os, static_cast<std::uint32_t>(g.dim()));
  detail::put_u32(os, static_cast<std::uint32_t>(g.nx()));
  detail::put_u32(os, static_cast<std::uint32_t>(g.ny()));
  detail::put_u32(os, static_cast<std::uint32_t>(u.levels()));
  for (double v : u.values()) detail::put_f64(os, v);
}

inline Field read_field_binary(std::istream& is, const Grid& g) {
  std::array<char, 4> magic{};
  is.read(magic.data(), 4);
  require(is.gcount() == 4 && std::string(magic.data(), 4) == "WSQF",
          "field_io: missing WSQF magic bytes");
  require(detail::get_u32(is) == kFieldBinaryVersion, "field_io: unsupported binary version");
  const std::uint32_t kind = detail::get_u32(is);
  require(kind <= 1, "field_io: unknown field kind");
  const auto dim = detail::get_u32(is);
  const auto nx = detail::get_u32(is);
  const auto ny = detail::get_u32(is);
  const auto levels = detail::get_u32(is);
  require(dim == static_cast<std::uint32_t>(g.dim()) && nx == static_cast<std::uint32_t>(g.nx()) &&
              ny == static_cast<std::uint32_t>(g.ny()),
          "field_io: binary dimensions do not match the grid");
  Field u = kind == 0 ? Field::spatial(g) : Field::space_time(g);
  require(levels == static_cast<std::uint32_t>(u.levels()),
          "field_io: binary level count does not match the grid");
  for (double& v : u.values()) v = detail::get_f64(is);
  return u;
}

inline void write_active_sets_csv(std::ostream& os, const Grid& g, const ActiveSets& as) {
  require(as.active.size() == static_cast<std::size_t>(g.nodes()),
          "field_io: active-set masks do not fit the grid");
  os << "# schema: " << kMaskCsvSchema << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", as.tau);
  os << "# tau: " << buf << "\n";
  os << "i,k,active,plus,minus\n";
  for (int k = 0; k < g.ny(); ++k) {
    for (int i = 0; i < g.nx(); ++i) {
      const int j = g.index(i, k);
      os << i << ',' << k << ',' << int(as.active[j]) << ',' << int(as.plus[j]) << ','
         << int(as.minus[j]) << '\n';
    }
  }
}

inline void save_field(const std::string& path_stem, const Grid& g, const Field& u) {
  std::ofstream csv(path_stem + ".csv");
  require(static_cast<bool>(csv), "field_io: cannot open " + path_stem + ".csv for writing");
  write_field_csv(csv, g, u);
  std::ofstream bin(path_stem + ".wsqf", std::ios::binary);
  require(static_cast<bool>(bin), "field_io: cannot open " + path_stem + ".wsqf for writing");
  write_field_binary(bin, g, u);
}

/// Reads a field from a .wsqf or .csv file, chosen by extension.
inline Field load_field(const std::string& path, const Grid& g) {
  const bool binary = path.size() >= 5 && path.substr(path.size() - 5) == ".wsqf";
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  require(static_cast<bool>(in), "field_io: cannot open " + path);
  return binary ? read_field_binary(in, g) : read_field_csv(in, g);
}

}  // namespace wsqp
