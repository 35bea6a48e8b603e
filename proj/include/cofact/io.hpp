#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "cofact/solver.hpp"
#include "cofact/types.hpp"

namespace cofact {

/*
 * Binary matrix container, little-endian throughout:
 *   "COFA"  magic, 4 ASCII bytes
 *   u16     format version (1)
 *   u32     rows
 *   u32     cols
 *   rows*cols IEEE-754 binary64 payload, row-major
 * File length is exactly 14 + 8*rows*cols bytes; doubles round-trip
 * bit-exactly, signed zeros and subnormals included.
 */
namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}
inline std::uint64_t get_bits(const unsigned char* p, int n) {
  std::uint64_t v = 0;
  for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline std::string encode_matrix(const Matrix& m) {
  std::string out;
  out.reserve(14 + 8 * static_cast<std::size_t>(m.size()));
  out += "COFA";
  detail::put_u16(out, 1);
  detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) detail::put_f64(out, m(r, c));
  return out;
}

inline Matrix decode_matrix(const std::string& bytes) {
  if (bytes.size() < 14)
    throw Error(ErrorCode::TruncatedFile, "matrix file shorter than header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (std::memcmp(p, "COFA", 4) != 0)
    throw Error(ErrorCode::BadMagic, "bad magic bytes");
  const auto version = static_cast<std::uint16_t>(detail::get_bits(p + 4, 2));
  if (version != 1)
    throw Error(ErrorCode::VersionUnsupported,
                "unsupported format version " + std::to_string(version));
  const auto rows = static_cast<std::uint32_t>(detail::get_bits(p + 6, 4));
  const auto cols = static_cast<std::uint32_t>(detail::get_bits(p + 10, 4));
  const std::size_t want =
      14 + 8 * static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  if (bytes.size() != want)
    throw Error(ErrorCode::TruncatedFile,
                "payload length " + std::to_string(bytes.size()) +
                    ", expected " + std::to_string(want));
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  const unsigned char* q = p + 14;
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c, q += 8) {
      const std::uint64_t bits = detail::get_bits(q, 8);
      double v;
      std::memcpy(&v, &bits, sizeof(v));
      m(r, c) = v;
    }
  return m;
}

inline void write_matrix(const std::string& path, const Matrix& m) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open for write: " + path);
  const std::string bytes = encode_matrix(m);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::IoFailure, "write failed: " + path);
}

inline Matrix read_matrix(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_matrix(ss.str());
}

/*
 * Flat `key = value` run configuration. Unknown keys are rejected, missing
 * keys take the defaults below, `#` starts a comment. One file drives the
 * whole synth -> run -> eval pipeline.
 */
struct RunConfig {
  std::string variant = "q";  // "q" (quadratic) or "ce" (cross-entropy)
  double lambda0_tilde = 100.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda_h = 0.1;
  double lambda_q_tilde = 1.6e-4;
  double lambda_c_tilde = 1e-3;
  double epsilon_tv = 1e-3;
  double sigma_beta = 0.01;
  double alpha = 2.0;
  double stop_tol = 1e-4;
  int max_iters = 5000;
  int K = 10;
  int J = 4;
  double alpha_group = std::numeric_limits<double>::quiet_NaN();  // "auto"
  int group_lasso_iters = 1000;
  double group_lasso_tol = 1e-8;
  int kmeans_restarts = 5;
  int kmeans_iters = 100;
  double row_prune_tol = 1e-6;
  std::uint64_t seed = 0;
  std::string dict_mode = "provided";  // "provided" or "self"
  // scene generation
  int M = 50;
  int N = 50;
  int L = 64;
  int R_true = 6;
  int C = 4;
  double snr_db = 30.0;  // "inf" disables the noise
  double train_fraction = 0.1;
  int extra_endmembers = 9;
  double endmember_correlation = 0.99;
  // locations
  std::string data_dir = ".";  // scene files (synth writes, run/eval read)
  std::string out_dir = ".";   // run outputs (eval reads)
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& key, const std::string& v) {
  if (v == "inf") return std::numeric_limits<double>::infinity();
  if (v == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError,
                "bad numeric value for '" + key + "': " + v);
  }
}

inline long long parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ConfigError,
                "bad integer value for '" + key + "': " + v);
  }
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::ConfigError,
                  "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));

    if (key == "variant") {
      if (val != "q" && val != "ce")
        throw Error(ErrorCode::ConfigError, "variant must be 'q' or 'ce'");
      cfg.variant = val;
    } else if (key == "lambda0_tilde") {
      cfg.lambda0_tilde = detail::parse_double(key, val);
    } else if (key == "lambda1") {
      cfg.lambda1 = detail::parse_double(key, val);
    } else if (key == "lambda2") {
      cfg.lambda2 = detail::parse_double(key, val);
    } else if (key == "lambda_h") {
      cfg.lambda_h = detail::parse_double(key, val);
    } else if (key == "lambda_q_tilde") {
      cfg.lambda_q_tilde = detail::parse_double(key, val);
    } else if (key == "lambda_c_tilde") {
      cfg.lambda_c_tilde = detail::parse_double(key, val);
    } else if (key == "epsilon_tv") {
      cfg.epsilon_tv = detail::parse_double(key, val);
    } else if (key == "sigma_beta") {
      cfg.sigma_beta = detail::parse_double(key, val);
    } else if (key == "alpha") {
      cfg.alpha = detail::parse_double(key, val);
    } else if (key == "stop_tol") {
      cfg.stop_tol = detail::parse_double(key, val);
    } else if (key == "max_iters") {
      cfg.max_iters = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "K") {
      cfg.K = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "J") {
      cfg.J = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "alpha_group") {
      cfg.alpha_group = (val == "auto")
                            ? std::numeric_limits<double>::quiet_NaN()
                            : detail::parse_double(key, val);
    } else if (key == "group_lasso_iters") {
      cfg.group_lasso_iters = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "group_lasso_tol") {
      cfg.group_lasso_tol = detail::parse_double(key, val);
    } else if (key == "kmeans_restarts") {
      cfg.kmeans_restarts = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "kmeans_iters") {
      cfg.kmeans_iters = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "row_prune_tol") {
      cfg.row_prune_tol = detail::parse_double(key, val);
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(detail::parse_int(key, val));
    } else if (key == "dict_mode") {
      if (val != "provided" && val != "self")
        throw Error(ErrorCode::ConfigError,
                    "dict_mode must be 'provided' or 'self'");
      cfg.dict_mode = val;
    } else if (key == "M") {
      cfg.M = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "N") {
      cfg.N = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "L") {
      cfg.L = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "R_true") {
      cfg.R_true = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "C") {
      cfg.C = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "snr_db") {
      cfg.snr_db = detail::parse_double(key, val);
    } else if (key == "train_fraction") {
      cfg.train_fraction = detail::parse_double(key, val);
    } else if (key == "extra_endmembers") {
      cfg.extra_endmembers = static_cast<int>(detail::parse_int(key, val));
    } else if (key == "endmember_correlation") {
      cfg.endmember_correlation = detail::parse_double(key, val);
    } else if (key == "data_dir") {
      cfg.data_dir = val;
    } else if (key == "out_dir") {
      cfg.out_dir = val;
    } else {
      throw Error(ErrorCode::ConfigError, "unknown key '" + key + "'");
    }
  }
  return cfg;
}

/// Canonical text form; parsing it back reproduces the config exactly.
inline std::string serialize_config(const RunConfig& c) {
  std::ostringstream o;
  o << "variant = " << c.variant << "\n";
  o << "lambda0_tilde = " << detail::fmt_double(c.lambda0_tilde) << "\n";
  o << "lambda1 = " << detail::fmt_double(c.lambda1) << "\n";
  o << "lambda2 = " << detail::fmt_double(c.lambda2) << "\n";
  o << "lambda_h = " << detail::fmt_double(c.lambda_h) << "\n";
  o << "lambda_q_tilde = " << detail::fmt_double(c.lambda_q_tilde) << "\n";
  o << "lambda_c_tilde = " << detail::fmt_double(c.lambda_c_tilde) << "\n";
  o << "epsilon_tv = " << detail::fmt_double(c.epsilon_tv) << "\n";
  o << "sigma_beta = " << detail::fmt_double(c.sigma_beta) << "\n";
  o << "alpha = " << detail::fmt_double(c.alpha) << "\n";
  o << "stop_tol = " << detail::fmt_double(c.stop_tol) << "\n";
  o << "max_iters = " << c.max_iters << "\n";
  o << "K = " << c.K << "\n";
  o << "J = " << c.J << "\n";
  o << "alpha_group = "
    << (std::isnan(c.alpha_group) ? "auto" : detail::fmt_double(c.alpha_group))
    << "\n";
  o << "group_lasso_iters = " << c.group_lasso_iters << "\n";
  o << "group_lasso_tol = " << detail::fmt_double(c.group_lasso_tol) << "\n";
  o << "kmeans_restarts = " << c.kmeans_restarts << "\n";
  o << "kmeans_iters = " << c.kmeans_iters << "\n";
  o << "row_prune_tol = " << detail::fmt_double(c.row_prune_tol) << "\n";
  o << "seed = " << c.seed << "\n";
  o << "dict_mode = " << c.dict_mode << "\n";
  o << "M = " << c.M << "\n";
  o << "N = " << c.N << "\n";
  o << "L = " << c.L << "\n";
  o << "R_true = " << c.R_true << "\n";
  o << "C = " << c.C << "\n";
  o << "snr_db = " << detail::fmt_double(c.snr_db) << "\n";
  o << "train_fraction = " << detail::fmt_double(c.train_fraction) << "\n";
  o << "extra_endmembers = " << c.extra_endmembers << "\n";
  o << "endmember_correlation = " << detail::fmt_double(c.endmember_correlation)
    << "\n";
  o << "data_dir = " << c.data_dir << "\n";
  o << "out_dir = " << c.out_dir << "\n";
  return o.str();
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open config: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

/// Convergence trace, one row per monitored iteration (mirrors the term
/// decomposition of the objective).
inline std::string trace_csv(const SolveReport& report) {
  std::ostringstream o;
  o << "iteration,total,repr,l1,clust,classif,weight_decay,vtv,rel_change\n";
  for (const auto& rec : report.records) {
    const auto& b = rec.objective;
    o << rec.iteration << "," << detail::fmt_double(b.total) << ","
      << detail::fmt_double(b.term_repr) << "," << detail::fmt_double(b.term_l1)
      << "," << detail::fmt_double(b.term_clust) << ","
      << detail::fmt_double(b.term_classif) << ","
      << detail::fmt_double(b.term_weight_decay) << ","
      << detail::fmt_double(b.term_vtv) << ","
      << detail::fmt_double(rec.rel_change) << "\n";
  }
  return o.str();
}

/// Human-readable matrix copy (lossy formatting is fine here).
inline std::string matrix_csv(const Matrix& m) {
  std::ostringstream o;
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) {
      if (c) o << ",";
      o << detail::fmt_double(m(r, c));
    }
    o << "\n";
  }
  return o.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot open for write: " + path);
  f.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!f) throw Error(ErrorCode::IoFailure, "write failed: " + path);
}

}  // namespace cofact
