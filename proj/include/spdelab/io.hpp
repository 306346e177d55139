#pragma once

// Artifact serialization: CSV tables, the MDPF binary column dump for fields
// and paths, the results table written by the command-line driver, and the
// JSON run manifest. Binary output is little-endian regardless of host order;
// text output prints doubles with 17 significant digits so rereading them
// round-trips bit-exactly.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "spdelab/checks.hpp"
#include "spdelab/grid.hpp"
#include "spdelab/noise.hpp"
#include "spdelab/variational.hpp"

namespace spdelab {

inline constexpr char kToolVersion[] = "1.0.0";
inline constexpr std::uint32_t kDumpFormatVersion = 1;

/// SHA-1 digest as 40 lowercase hex characters. Used to fingerprint the
/// configuration text in the run manifest.
inline std::string sha1_hex(const std::string& data) {
  std::uint32_t h[5] = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};
  std::vector<unsigned char> msg(data.begin(), data.end());
  const std::uint64_t bits = static_cast<std::uint64_t>(msg.size()) * 8;
  msg.push_back(0x80);
  while (msg.size() % 64 != 56) msg.push_back(0x00);
  for (int i = 7; i >= 0; --i) msg.push_back(static_cast<unsigned char>(bits >> (8 * i)));

  auto rol = [](std::uint32_t x, int s) { return (x << s) | (x >> (32 - s)); };
  for (std::size_t chunk = 0; chunk < msg.size(); chunk += 64) {
    std::uint32_t w[80];
    for (int i = 0; i < 16; ++i)
      w[i] = (static_cast<std::uint32_t>(msg[chunk + 4 * i]) << 24) |
             (static_cast<std::uint32_t>(msg[chunk + 4 * i + 1]) << 16) |
             (static_cast<std::uint32_t>(msg[chunk + 4 * i + 2]) << 8) |
             static_cast<std::uint32_t>(msg[chunk + 4 * i + 3]);
    for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
    for (int i = 0; i < 80; ++i) {
      std::uint32_t f, k;
      if (i < 20) {
        f = (b & c) | (~b & d);
        k = 0x5A827999u;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1u;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDCu;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6u;
      }
      std::uint32_t tmp = rol(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rol(b, 30);
      b = a;
      a = tmp;
    }
    h[0] += a;
    h[1] += b;
    h[2] += c;
    h[3] += d;
    h[4] += e;
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (std::uint32_t v : h)
    for (int i = 7; i >= 0; --i) out.push_back(hex[(v >> (4 * i)) & 0xF]);
  return out;
}

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

inline void put_f64(std::ostream& os, double x) {
  std::uint64_t v;
  std::memcpy(&v, &x, 8);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

inline std::uint32_t take_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double take_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  double x;
  std::memcpy(&x, &v, 8);
  return x;
}

inline std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::ofstream open_out(const std::string& path, std::ios::openmode mode) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

}  // namespace detail

/// One row per check: name, pass, observed, target, tol, se, runtime_s.
/// Everything except runtime_s is reproducible bit-identically from
/// (config, seed); the runtime column is wall-clock metadata.
inline void write_results_csv(const std::string& path, const std::vector<CheckResult>& rows,
                              const std::vector<std::string>& preamble = {}) {
  std::ofstream out = detail::open_out(path, std::ios::out);
  for (const std::string& line : preamble) out << "# " << line << "\n";
  out << "name,pass,observed,target,tol,se,runtime_s\n";
  for (const CheckResult& r : rows) {
    out << r.name << ',' << (r.pass ? 1 : 0) << ',' << detail::fmt(r.observed) << ','
        << detail::fmt(r.target) << ',' << detail::fmt(r.tolerance) << ','
        << detail::fmt(r.se) << ',' << detail::fmt(r.runtime_s) << "\n";
  }
}

/// CSV dump of one or more state frames, columns t, y, value, with a leading
/// role comment naming what the numbers are.
inline void write_path_csv(const std::string& path, const Grid& g, const FieldPath& p,
                           const std::string& role) {
  std::ofstream out = detail::open_out(path, std::ios::out);
  out << "# role: " << role << "\n";
  out << "t,y,value\n";
  for (std::size_t k = 0; k < p.frames.size(); ++k) {
    const Field& f = p.frames[k];
    for (std::size_t i = 0; i < f.size(); ++i)
      out << detail::fmt(g.time(static_cast<int>(k))) << ','
          << detail::fmt(g.node(static_cast<int>(i))) << ',' << detail::fmt(f[i]) << "\n";
  }
}

inline void write_field_csv(const std::string& path, const Grid& g, const Field& f, double t,
                            const std::string& role) {
  std::ofstream out = detail::open_out(path, std::ios::out);
  out << "# role: " << role << "\n";
  out << "t,y,value\n";
  for (std::size_t i = 0; i < f.size(); ++i)
    out << detail::fmt(t) << ',' << detail::fmt(g.node(static_cast<int>(i))) << ','
        << detail::fmt(f[i]) << "\n";
}

/// CSV dump of a control on the time x mark lattice, columns t, a, value.
inline void write_control_csv(const std::string& path, const Grid& g, const MarkGrid& marks,
                              const Control& h, const std::string& role) {
  std::ofstream out = detail::open_out(path, std::ios::out);
  out << "# role: " << role << "\n";
  out << "t,a,value\n";
  for (int k = 0; k < g.nt; ++k)
    for (int j = 0; j < marks.na; ++j)
      out << detail::fmt(g.time(k)) << ',' << detail::fmt(marks.midpoint(j)) << ','
          << detail::fmt(h.at(k, j)) << "\n";
}

/// Binary column dump: magic "MDPF", version u32, nx u32, nt u32, L f64,
/// T f64, then (nt+1) frames of (nx+1) little-endian doubles each.
inline void write_path_mdpf(const std::string& path, const Grid& g, const FieldPath& p) {
  if (static_cast<int>(p.frames.size()) != g.nt + 1)
    throw std::invalid_argument("write_path_mdpf: path must hold nt+1 frames");
  std::ofstream out = detail::open_out(path, std::ios::out | std::ios::binary);
  out.write("MDPF", 4);
  detail::put_u32(out, kDumpFormatVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(g.nx));
  detail::put_u32(out, static_cast<std::uint32_t>(g.nt));
  detail::put_f64(out, g.L);
  detail::put_f64(out, g.T);
  for (const Field& f : p.frames)
    for (double x : f) detail::put_f64(out, x);
}

struct MdpfDump {
  std::uint32_t version = 0;
  int nx = 0;
  int nt = 0;
  double L = 0.0;
  double T = 0.0;
  FieldPath path;
};

inline MdpfDump read_path_mdpf(const std::string& path) {
  std::ifstream in(path, std::ios::in | std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "MDPF", 4) != 0)
    throw std::runtime_error(path + ": not an MDPF dump");
  MdpfDump d;
  d.version = detail::take_u32(in);
  d.nx = static_cast<int>(detail::take_u32(in));
  d.nt = static_cast<int>(detail::take_u32(in));
  d.L = detail::take_f64(in);
  d.T = detail::take_f64(in);
  d.path.frames.assign(static_cast<std::size_t>(d.nt) + 1,
                       Field(static_cast<std::size_t>(d.nx) + 1, 0.0));
  for (Field& f : d.path.frames)
    for (double& x : f) x = detail::take_f64(in);
  if (!in) throw std::runtime_error(path + ": truncated MDPF dump");
  return d;
}

/// JSON run manifest: configuration fingerprint, seed, versions, wall time.
/// wall_time_s is metadata and exempt from the bit-reproducibility guarantee.
inline void write_manifest(const std::string& path, const std::string& command,
                           const std::string& config_text, std::uint64_t seed, int threads,
                           double wall_time_s,
                           const std::vector<std::pair<std::string, std::string>>& extra = {}) {
  nlohmann::json j;
  j["command"] = command;
  j["config_sha1"] = sha1_hex(config_text);
  j["seed"] = seed;
  j["threads"] = threads;
  j["versions"] = {{"tool", kToolVersion},
                   {"dump_format", kDumpFormatVersion},
                   {"results_columns", "name,pass,observed,target,tol,se,runtime_s"}};
  j["wall_time_s"] = wall_time_s;
  for (const auto& [k, v] : extra) j[k] = v;
  std::ofstream out = detail::open_out(path, std::ios::out);
  out << j.dump(2) << "\n";
}

}  // namespace spdelab
