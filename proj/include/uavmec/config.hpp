#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "uavmec/scenario.hpp"

namespace uavmec {

/// Watts from dBm.
inline double dbm_to_watts(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }

/// Linear ratio from dB.
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

/// Parser state for one `key = value` line.
class LineParser {
 public:
  LineParser(std::string origin, int line, std::string key, std::string text)
      : origin_(std::move(origin)), line_(line), key_(std::move(key)), text_(std::move(text)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorKind::parse_error, origin_ + ":" + std::to_string(line_) + ": " + key_ + ": " + msg);
  }

  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= text_.size() || text_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  double number() {
    skip_ws();
    const char* first = text_.data() + pos_;
    const char* last = text_.data() + text_.size();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr == first) fail("expected a number");
    pos_ += static_cast<std::size_t>(ptr - first);
    if (!std::isfinite(v)) fail("number is not finite");
    return v;
  }

  /// Optional trailing word such as "dBm".
  std::string unit() {
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  void finish() {
    if (!at_end()) fail("unexpected trailing text '" + text_.substr(pos_) + "'");
  }

  Vec2 pair() {
    expect('[');
    const double x = number();
    expect(',');
    const double y = number();
    expect(']');
    return Vec2(x, y);
  }

  std::vector<double> list() {
    std::vector<double> out;
    expect('[');
    if (accept(']')) return out;
    do {
      out.push_back(number());
    } while (accept(','));
    expect(']');
    return out;
  }

  std::vector<Vec2> pair_list() {
    std::vector<Vec2> out;
    expect('[');
    if (accept(']')) return out;
    do {
      out.push_back(pair());
    } while (accept(','));
    expect(']');
    return out;
  }

  int line() const { return line_; }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  std::string origin_;
  int line_;
  std::string key_;
  std::string text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/**
 * Parses a scenario from `key = value` text. `#` starts a comment, arrays are
 * bracketed, positions are [x, y] pairs. Power values may carry a dBm suffix,
 * beta0 a dB suffix and R an Mbit suffix. Unlisted keys keep their defaults,
 * except user_pos and R which are required.
 *
 * @throws Error(parse_error) with the line number, Error(invalid_argument)
 *   naming the field when the scenario is inconsistent
 */
inline Scenario parse_scenario(const std::string& text, const std::string& origin = "<scenario>") {
  Scenario s;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  std::map<std::string, int> seen;
  std::optional<int> K;
  int K_line = 0;
  int R_line = 0;
  bool have_pos = false;
  bool have_R = false;

  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = detail::trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::parse_error, origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    std::string key = detail::trim(line.substr(0, eq));
    if (key == "W") key = "W_mass";
    detail::LineParser p(origin, line_no, key, line.substr(eq + 1));
    if (key.empty()) p.fail("missing key");
    if (seen.count(key)) p.fail("duplicate key (first set on line " + std::to_string(seen[key]) + ")");
    seen[key] = line_no;

    auto scalar = [&]() {
      const double v = p.number();
      p.finish();
      return v;
    };
    auto power = [&]() {
      double v = p.number();
      const std::string u = p.unit();
      if (u == "dBm") {
        v = dbm_to_watts(v);
      } else if (!u.empty() && u != "W") {
        p.fail("unknown unit '" + u + "' (use W or dBm)");
      }
      p.finish();
      return v;
    };

    if (key == "K") {
      const double v = scalar();
      if (v < 1 || v != std::floor(v)) p.fail("must be a positive integer");
      K = static_cast<int>(v);
      K_line = line_no;
    } else if (key == "user_pos") {
      s.user_pos = p.pair_list();
      p.finish();
      have_pos = true;
    } else if (key == "R") {
      std::vector<double> r = p.list();
      const std::string u = p.unit();
      if (u == "Mbit" || u == "Mbits") {
        for (double& v : r) v *= 1e6;
      } else if (!u.empty() && u != "bit" && u != "bits") {
        p.fail("unknown unit '" + u + "' (use bits or Mbit)");
      }
      p.finish();
      s.R = std::move(r);
      have_R = true;
      R_line = line_no;
    } else if (key == "H") {
      s.H = scalar();
    } else if (key == "T") {
      s.T = scalar();
    } else if (key == "N") {
      const double v = scalar();
      if (v != std::floor(v) || v > std::numeric_limits<int>::max()) p.fail("must be an integer");
      s.N = static_cast<int>(v);
    } else if (key == "P_u") {
      s.P_u = power();
    } else if (key == "sigma2") {
      s.sigma2 = power();
    } else if (key == "beta0") {
      double v = p.number();
      const std::string u = p.unit();
      if (u == "dB") {
        v = db_to_linear(v);
      } else if (!u.empty()) {
        p.fail("unknown unit '" + u + "' (use dB or a linear value)");
      }
      p.finish();
      s.beta0 = v;
    } else if (key == "eta") {
      s.eta = scalar();
    } else if (key == "B") {
      s.B = scalar();
    } else if (key == "Gamma") {
      s.Gamma = scalar();
    } else if (key == "M") {
      s.M = scalar();
    } else if (key == "gamma_c") {
      s.gamma_c = scalar();
    } else if (key == "W_mass") {
      s.W_mass = scalar();
    } else if (key == "V_max") {
      s.V_max = scalar();
    } else if (key == "q0") {
      s.q0 = p.pair();
      p.finish();
    } else if (key == "qF") {
      s.qF = p.pair();
      p.finish();
    } else if (key == "xi") {
      s.xi = scalar();
    } else if (key == "xi1") {
      s.xi1 = scalar();
    } else {
      p.fail("unknown key");
    }
  }

  auto fail_at = [&](int line, const std::string& msg) {
    throw Error(ErrorKind::parse_error, origin + ":" + std::to_string(line) + ": " + msg);
  };
  if (!have_pos) fail_at(line_no, "missing key 'user_pos'");
  if (K && static_cast<int>(s.user_pos.size()) != *K) {
    fail_at(K_line, "K = " + std::to_string(*K) + " but user_pos lists " + std::to_string(s.user_pos.size()) +
                        " users");
  }
  if (!have_R) fail_at(line_no, "missing key 'R'");
  if (s.R.size() < s.user_pos.size()) {
    fail_at(R_line, "R: missing entry for user " + std::to_string(s.R.size() + 1));
  }
  if (s.R.size() > s.user_pos.size()) {
    fail_at(R_line, "R: " + std::to_string(s.R.size()) + " entries for " + std::to_string(s.user_pos.size()) +
                        " users");
  }
  validate(s);
  return s;
}

/// @throws Error(io_error) when the file cannot be read
inline Scenario load_scenario(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::io_error, "cannot open scenario file '" + path + "'");
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_scenario(buf.str(), path);
}

/// Serialises every field in SI units with round-trip precision.
inline std::string write_scenario(const Scenario& s) {
  std::ostringstream o;
  o << std::setprecision(17);
  auto vec = [&](const Vec2& v) { o << '[' << v.x() << ", " << v.y() << ']'; };
  o << "K = " << s.K() << "\n";
  o << "user_pos = [";
  for (std::size_t k = 0; k < s.user_pos.size(); ++k) {
    if (k) o << ", ";
    vec(s.user_pos[k]);
  }
  o << "]\nR = [";
  for (std::size_t k = 0; k < s.R.size(); ++k) o << (k ? ", " : "") << s.R[k];
  o << "]\n";
  o << "H = " << s.H << "\nT = " << s.T << "\nN = " << s.N << "\nP_u = " << s.P_u << "\neta = " << s.eta
    << "\nB = " << s.B << "\nsigma2 = " << s.sigma2 << "\nGamma = " << s.Gamma << "\nbeta0 = " << s.beta0
    << "\nM = " << s.M << "\ngamma_c = " << s.gamma_c << "\nW = " << s.W_mass << "\nV_max = " << s.V_max;
  o << "\nq0 = ";
  vec(s.q0);
  o << "\nqF = ";
  vec(s.qF);
  o << "\nxi = " << s.xi << "\nxi1 = " << s.xi1 << "\n";
  return o.str();
}

}  // namespace uavmec
