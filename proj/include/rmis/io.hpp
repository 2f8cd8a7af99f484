#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rmis/butcher.hpp"
#include "rmis/convergence.hpp"
#include "rmis/errors.hpp"
#include "rmis/gark.hpp"
#include "rmis/stability.hpp"
#include "rmis/stepper.hpp"

namespace rmis {

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json_rows(const Eigen::MatrixXd& M) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    nlohmann::json r = nlohmann::json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline nlohmann::json to_json_vector(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw InvalidTable("matrix must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j.at(i).size()) != cols)
      throw InvalidTable("ragged matrix rows");
    for (Eigen::Index k = 0; k < cols; ++k) M(i, k) = j.at(i).at(k).get<double>();
  }
  return M;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json to_json(const ButcherTable& t) {
  return {{"name", t.name}, {"A", to_json_rows(t.A)}, {"b", to_json_vector(t.b)},
          {"c", to_json_vector(t.c)}};
}

inline ButcherTable table_from_json(const nlohmann::json& j) {
  try {
    return make_table(j.value("name", "table"), matrix_from_json(j.at("A")),
                      vector_from_json(j.at("b")), vector_from_json(j.at("c")));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidTable(std::string("malformed table JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const GarkTableau& g) {
  nlohmann::json j = {
      {"s_f", g.fast_stages()},
      {"s_s", g.slow_stages()},
      {"blocks",
       {{"A_ff", to_json_rows(g.A_ff)},
        {"A_fs", to_json_rows(g.A_fs)},
        {"A_sf", to_json_rows(g.A_sf)},
        {"A_ss", to_json_rows(g.A_ss)}}},
      {"b_f", to_json_vector(g.b_f)},
      {"b_s", to_json_vector(g.b_s)},
      {"c_f", to_json_vector(g.c_f)},
      {"c_s", to_json_vector(g.c_s)},
      {"provenance",
       {{"outer", g.provenance.outer}, {"inner", g.provenance.inner}, {"kind", g.provenance.kind}}}};
  if (g.b_f_embedded) j["b_f_embedded"] = to_json_vector(*g.b_f_embedded);
  return j;
}

inline GarkTableau tableau_from_json(const nlohmann::json& j) {
  try {
    GarkTableau g;
    const auto& b = j.at("blocks");
    g.A_ff = matrix_from_json(b.at("A_ff"));
    g.A_fs = matrix_from_json(b.at("A_fs"));
    g.A_sf = matrix_from_json(b.at("A_sf"));
    g.A_ss = matrix_from_json(b.at("A_ss"));
    g.b_f = vector_from_json(j.at("b_f"));
    g.b_s = vector_from_json(j.at("b_s"));
    g.c_f = vector_from_json(j.at("c_f"));
    g.c_s = vector_from_json(j.at("c_s"));
    if (j.contains("b_f_embedded")) g.b_f_embedded = vector_from_json(j.at("b_f_embedded"));
    if (j.contains("provenance")) {
      const auto& p = j.at("provenance");
      g.provenance = {p.value("outer", ""), p.value("inner", ""), p.value("kind", "")};
    }
    const auto sf = g.b_f.size(), ss = g.b_s.size();
    if (g.A_ff.rows() != sf || g.A_ff.cols() != sf || g.A_fs.rows() != sf ||
        g.A_fs.cols() != ss || g.A_sf.rows() != ss || g.A_sf.cols() != sf ||
        g.A_ss.rows() != ss || g.A_ss.cols() != ss || g.c_f.size() != sf || g.c_s.size() != ss ||
        (g.b_f_embedded && g.b_f_embedded->size() != sf))
      throw InvalidTable("tableau block sizes are inconsistent");
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidTable(std::string("malformed tableau JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const ConditionReport& r) {
  nlohmann::json res = nlohmann::json::object();
  for (const auto& e : r.entries) res[e.label] = e.residual;
  return {{"residuals", res}, {"satisfied_order", r.satisfied_order},
          {"v_outer", to_json_vector(r.v_outer)}};
}

/// Non-finite numbers become null in JSON.
inline nlohmann::json json_number(double x) {
  if (std::isfinite(x)) return x;
  return nullptr;
}

inline nlohmann::json to_json(const ConvergenceReport& r) {
  nlohmann::json errs = nlohmann::json::array(), calls = nlohmann::json::array();
  for (double e : r.rms_errors) errs.push_back(json_number(e));
  for (long c : r.total_calls) calls.push_back(c >= 0 ? nlohmann::json(c) : nlohmann::json());
  return {{"method", r.method},
          {"problem", r.problem},
          {"m", r.m},
          {"h_values", r.h_values},
          {"rms_errors", errs},
          {"total_calls", calls},
          {"fitted_order", json_number(r.fitted_order)},
          {"fit_window", {r.fit_low, r.fit_high}},
          {"reference", {{"h_ref", r.reference_h}, {"rms_change", r.reference_change}}}};
}

// ---------------------------------------------------------------------------
// CSV (RFC 4180: CRLF records, quoted fields when needed)

inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  void row(const std::vector<std::string>& fields) {
    for (std::size_t k = 0; k < fields.size(); ++k) {
      if (k) os_ << ',';
      os_ << csv_field(fields[k]);
    }
    os_ << "\r\n";
  }

 private:
  std::ostream& os_;
};

inline std::ofstream open_output(const std::filesystem::path& path,
                                 std::ios::openmode mode = std::ios::out) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, mode);
  if (!f) throw InvalidArgument("cannot write " + path.string());
  return f;
}

inline void write_scan_csv(const StabilityScan& s, std::ostream& os) {
  CsvWriter w(os);
  w.row({"xi", "eta", "spectral_radius", "stable"});
  for (Eigen::Index j = 0; j < s.eta_grid.size(); ++j)
    for (Eigen::Index i = 0; i < s.xi_grid.size(); ++i)
      w.row({format_number(s.xi_grid(i)), format_number(s.eta_grid(j)),
             format_number(s.spectral_radius(j, i)), s.stable(j, i) ? "1" : "0"});
}

inline void write_convergence_csv(const std::vector<ConvergenceReport>& reports, std::ostream& os) {
  CsvWriter w(os);
  w.row({"method", "problem", "m", "h", "rms_error", "total_calls"});
  for (const auto& r : reports)
    for (std::size_t k = 0; k < r.h_values.size(); ++k)
      w.row({r.method, r.problem, std::to_string(r.m), format_number(r.h_values[k]),
             format_number(r.rms_errors[k]),
             r.total_calls[k] >= 0 ? std::to_string(r.total_calls[k]) : ""});
}

template <class State>
void write_trajectory(const Trajectory<State>& tr, const std::filesystem::path& csv_path) {
  auto f = open_output(csv_path, std::ios::out | std::ios::binary);
  CsvWriter w(f);
  const auto dim = tr.y.empty() ? 0 : tr.y.front().size();
  std::vector<std::string> header{"t"};
  for (Eigen::Index k = 0; k < dim; ++k) header.push_back("y_" + std::to_string(k + 1));
  w.row(header);
  for (std::size_t n = 0; n < tr.t.size(); ++n) {
    std::vector<std::string> r{format_number(tr.t[n])};
    for (Eigen::Index k = 0; k < dim; ++k) r.push_back(format_number(tr.y[n](k)));
    w.row(r);
  }
  auto side = open_output(std::filesystem::path(csv_path.string() + ".json"));
  side << nlohmann::json{{"steps", tr.steps},
                         {"fast_calls", tr.fast_calls},
                         {"slow_calls", tr.slow_calls}}
              .dump(2)
       << "\n";
}

// ---------------------------------------------------------------------------
// SVG heat map

/// Stable cells yellow, unstable blue; xi along x, eta along y (up).
inline std::string scan_svg(const StabilityScan& s) {
  const int nx = static_cast<int>(s.xi_grid.size());
  const int ny = static_cast<int>(s.eta_grid.size());
  const int cw = 5, ch = 2;
  const int left = 70, top = 50, W = nx * cw, H = ny * ch;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + W + 30 << "\" height=\""
     << top + H + 60 << "\" font-family=\"sans-serif\" font-size=\"13\">\n";
  os << "<text x=\"" << left + W / 2 << "\" y=\"28\" text-anchor=\"middle\" font-size=\"15\">"
     << s.method << ", &#954; = " << format_number(s.kappa) << "</text>\n";
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << W << "\" height=\"" << H
     << "\" fill=\"#1f3a93\"/>\n";
  for (int j = 0; j < ny; ++j) {
    // merge runs of stable cells in a row
    int i = 0;
    while (i < nx) {
      if (!s.stable(j, i)) {
        ++i;
        continue;
      }
      int k = i;
      while (k < nx && s.stable(j, k)) ++k;
      os << "<rect x=\"" << left + i * cw << "\" y=\"" << top + (ny - 1 - j) * ch << "\" width=\""
         << (k - i) * cw << "\" height=\"" << ch << "\" fill=\"#f5d000\"/>\n";
      i = k;
    }
  }
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << W << "\" height=\"" << H
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (double xi : {-1.0, -0.75, -0.5, -0.25, 0.0}) {
    const double x = left + (xi + 1.0) * W;
    os << "<text x=\"" << x << "\" y=\"" << top + H + 18 << "\" text-anchor=\"middle\">" << xi
       << "</text>\n";
  }
  for (double eta : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
    const double y = top + (1.0 - eta) / 2.0 * H;
    os << "<text x=\"" << left - 8 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">" << eta
       << "</text>\n";
  }
  os << "<text x=\"" << left + W / 2 << "\" y=\"" << top + H + 42
     << "\" text-anchor=\"middle\" font-size=\"15\">&#958;</text>\n";
  os << "<text x=\"22\" y=\"" << top + H / 2
     << "\" text-anchor=\"middle\" font-size=\"15\">&#951;</text>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace rmis
