#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "rmis/io.hpp"
#include "rmis/problems.hpp"

using namespace rmis;

TEST(Csv, QuotesOnlyWhenNeeded) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
  EXPECT_EQ(csv_field("two\nlines"), "\"two\nlines\"");
}

TEST(Csv, RecordsEndWithCrlf) {
  std::ostringstream os;
  CsvWriter w(os);
  w.row({"x", "y,z"});
  w.row({"1", "2"});
  EXPECT_EQ(os.str(), "x,\"y,z\"\r\n1,2\r\n");
}

TEST(Csv, NumbersRoundTrip) {
  for (double x : {0.1, -1.0 / 3.0, 1e-300, 6.02214076e23}) EXPECT_EQ(std::stod(format_number(x)), x);
  EXPECT_EQ(format_number(INFINITY), "inf");
  EXPECT_EQ(format_number(NAN), "nan");
}

TEST(Json, TableRoundTrip) {
  const auto t = make_kw3();
  const auto back = table_from_json(to_json(t));
  EXPECT_EQ(back.A, t.A);
  EXPECT_EQ(back.b, t.b);
  EXPECT_EQ(back.c, t.c);
  EXPECT_THROW(table_from_json(nlohmann::json{{"A", 1}}), InvalidTable);
}

TEST(Json, TableauRoundTrip) {
  const auto t = make_three_eighths();
  const auto g = assemble_rmis(t, subcycle_inner(t, 2), true);
  const auto j = to_json(g);
  EXPECT_EQ(j["provenance"]["kind"], g.provenance.kind);
  EXPECT_EQ(j["blocks"]["A_ff"].size(), static_cast<std::size_t>(g.fast_stages()));
  const auto back = tableau_from_json(j);
  EXPECT_EQ(back.A_ff, g.A_ff);
  EXPECT_EQ(back.A_sf, g.A_sf);
  EXPECT_EQ(back.b_f, g.b_f);
  ASSERT_TRUE(back.b_f_embedded.has_value());
  EXPECT_EQ(*back.b_f_embedded, *g.b_f_embedded);
  auto bad = j;
  bad["b_s"] = {1.0};
  EXPECT_THROW(tableau_from_json(bad), InvalidTable);
}

TEST(Json, ReportMarksBlowUps) {
  ConvergenceReport r;
  r.method = "m";
  r.problem = "p";
  r.h_values = {0.1, 0.05};
  r.rms_errors = {INFINITY, 1e-3};
  r.total_calls = {-1, 20};
  const auto j = to_json(r);
  EXPECT_TRUE(j["rms_errors"][0].is_null());
  EXPECT_TRUE(j["total_calls"][0].is_null());
  EXPECT_TRUE(j["fitted_order"].is_null());
  EXPECT_EQ(j["fit_window"][1], 1.0);
}

TEST(Scan, CsvHasOneRowPerPoint) {
  const auto s = scan(make_method("mis-kw3", 10), 10.0);
  std::ostringstream os;
  write_scan_csv(s, os);
  const auto text = os.str();
  EXPECT_EQ(text.rfind("xi,eta,spectral_radius,stable\r\n", 0), 0u);
  std::size_t rows = 0;
  for (std::size_t p = text.find("\r\n"); p != std::string::npos; p = text.find("\r\n", p + 2))
    ++rows;
  EXPECT_EQ(rows, 1u + 100u * 200u);
  std::ostringstream again;
  write_scan_csv(scan(make_method("mis-kw3", 10), 10.0), again);
  EXPECT_EQ(again.str(), text);
}

TEST(Scan, SvgMarksBothStates) {
  const auto s = scan(make_method("rmis-38", 10), 10.0);
  const auto svg = scan_svg(s);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("#f5d000"), std::string::npos);
  EXPECT_NE(svg.find("#1f3a93"), std::string::npos);
  EXPECT_NE(svg.find("rmis-38"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
}

TEST(Trajectory, CsvAndSidecar) {
  const auto dir = std::filesystem::temp_directory_path() / ("rmis_io_" + std::to_string(::getpid()));
  const auto path = dir / "sub" / "traj.csv";
  const auto tr = integrate(linear_coupled(), make_method("rmis-kw3", 10), 0.25);
  write_trajectory(tr, path);
  std::ifstream f(path, std::ios::binary);
  std::string header;
  std::getline(f, header);
  EXPECT_EQ(header, "t,y_1,y_2\r");
  std::ifstream side(path.string() + ".json");
  const auto j = nlohmann::json::parse(side);
  EXPECT_EQ(j["steps"], 4);
  EXPECT_EQ(j["fast_calls"], tr.fast_calls);
  EXPECT_EQ(j["slow_calls"], 12);
  std::filesystem::remove_all(dir);
}
