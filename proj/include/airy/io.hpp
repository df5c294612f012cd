#pragma once
// JSON round trip for truncated series and fixed-column CSV writers.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "airy/analytic.hpp"
#include "airy/errors.hpp"
#include "json.hpp"

namespace airy {

using Json = nlohmann::ordered_json;

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline Json finite_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const AnalyticFunction& u) {
  const auto& b = *u.basis();
  Json j;
  j["M"] = b.M();
  j["K"] = b.lattice().K;
  j["eta"] = b.lattice().eta;
  j["jmax"] = b.jmax();
  j["real"] = u.is_real();
  Json modes = Json::array();
  for (int li = 0; li < b.n_ell(); ++li)
    for (int jj = -b.jmax(); jj <= b.jmax(); ++jj) {
      const cd c = u.at(li, jj);
      if (c == cd{}) continue;
      modes.push_back(Json{{"l", b.ell(li).dense(b.M())}, {"j", jj}, {"re", c.real()}, {"im", c.imag()}});
    }
  j["modes"] = std::move(modes);
  return j;
}

inline AnalyticFunction function_from_json(const Json& j, BasisPtr basis = nullptr) {
  try {
    if (!basis) {
      LatticeParams lat{j.at("eta").get<double>(), j.at("M").get<int>(), j.at("K").get<double>()};
      lat.validate();
      basis = Basis::make(lat, j.at("jmax").get<int>());
    }
    AnalyticFunction u(basis, j.at("real").get<bool>());
    for (const auto& m : j.at("modes")) u.set_coeff(MultiIndex(m.at("l").get<std::vector<int>>()), m.at("j").get<int>(),
                                                    cd(m.at("re").get<double>(), m.at("im").get<double>()));
    return u;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed function JSON: ") + e.what());
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

inline void write_json(const std::filesystem::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

// Rows of numbers under a frozen header.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}
  void row(const std::vector<double>& values) {
    if (values.size() != header_.size()) throw PreconditionError("CsvTable: row width mismatch");
    rows_.push_back(values);
  }
  std::string str() const {
    std::string s;
    for (std::size_t i = 0; i < header_.size(); ++i) s += (i ? "," : "") + header_[i];
    s += "\n";
    for (const auto& r : rows_) {
      for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + format_double(r[i]);
      s += "\n";
    }
    return s;
  }
  void write(const std::filesystem::path& path) const { write_text(path, str()); }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<double>> rows_;
};

}  // namespace airy
