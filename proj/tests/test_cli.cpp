#include <gtest/gtest.h>
#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <unistd.h>

#include "cli.hpp"

namespace fs = std::filesystem;
using namespace quditspam;

namespace {

const std::string kFixtures = QUDITSPAM_FIXTURES_DIR;

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "quditspam");
  std::ostringstream out, err;
  Result r;
  r.code = cli::run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

using Rows = std::vector<std::vector<std::string>>;

std::vector<std::string> split(const std::string &line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

// "# name" delimited CSV sections from stdout, header row included.
std::map<std::string, Rows> sections(const std::string &text) {
  std::map<std::string, Rows> out;
  std::stringstream ss(text);
  std::string line, current;
  while (std::getline(ss, line)) {
    if (line.rfind("# ", 0) == 0) current = line.substr(2);
    else out[current].push_back(split(line));
  }
  return out;
}

Rows table(const std::string &text, const std::string &name) { return sections(text).at(name); }

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

class TempDir {
public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("quditspam_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path &path() const { return path_; }
  std::string file(const std::string &name, const std::string &content) const {
    std::ofstream(path_ / name) << content;
    return (path_ / name).string();
  }

private:
  fs::path path_;
};

double raw_row_total(const std::string &out) {
  const auto raw = table(out, "spam_raw");
  double total = 0.0;
  for (std::size_t c = 1; c < raw[1].size(); ++c) total += std::stod(raw[1][c]);
  return total;
}

} // namespace

TEST(Cli, LevelsShape) {
  const auto r = run({"levels", "--level", "5D5/2", "--b", "0:10:0.05"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = table(r.out, "levels");
  EXPECT_EQ(t[0].size(), 25u);
  EXPECT_EQ(t.size(), 202u);

  const auto marked = table(run({"levels", "--b", "0:10:0.05", "--b-mark", "8.35"}).out, "levels");
  EXPECT_EQ(marked[0].back(), "mark");
  int marks = 0;
  for (std::size_t i = 1; i < marked.size(); ++i)
    if (marked[i].back() == "1") {
      ++marks;
      EXPECT_DOUBLE_EQ(std::stod(marked[i][0]), 8.35);
    }
  EXPECT_EQ(marks, 1);

  EXPECT_EQ(table(run({"levels", "--b", "3:3:0.1"}).out, "levels").size(), 2u);
}

TEST(Cli, StrengthsMatchFixture) {
  const auto r = run({"strengths"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pos = r.err.find("max |deviation| from table_e1.csv: ");
  ASSERT_NE(pos, std::string::npos) << r.err;
  EXPECT_LT(std::stod(r.err.substr(pos + 35)), 5e-5);
}

TEST(Cli, StrengthsAlongFieldHaveOnlyDeltaMOne) {
  const auto r = run({"strengths", "--phi", "0", "--gamma", "0"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = table(r.out, "strengths");
  auto m_of = [](const std::string &label) { return std::stod(label.substr(label.find("m=") + 2)); };
  int nonzero = 0;
  for (std::size_t i = 1; i < t.size(); ++i)
    for (std::size_t c = 1; c < t[i].size(); ++c) {
      const double v = std::stod(t[i][c]);
      if (std::abs(std::abs(m_of(t[i][0]) - m_of(t[0][c])) - 1.0) > 0.1) EXPECT_LT(std::abs(v), 1e-12) << t[i][0] << t[0][c];
      else if (std::abs(v) > 1e-6) ++nonzero;
    }
  EXPECT_GT(nonzero, 0);
}

TEST(Cli, ListEncodableGivesTwelve) {
  const auto r = run({"strengths", "--threshold", "0.03", "--list-encodable"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(table(r.out, "encodable").size(), 13u);
}

TEST(Cli, SpamZeroErrorsIsIdentity) {
  const auto r = run({"--seed", "1", "spam", "--errors", "zero", "--shots", "1000"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const std::string name : {"spam_raw", "spam_post"}) {
    const auto t = table(r.out, name);
    ASSERT_EQ(t.size(), 14u);
    for (std::size_t i = 1; i < t.size(); ++i)
      for (std::size_t c = 1; c < t[i].size(); ++c) {
        const double expected = (c == i) ? (name == "spam_raw" ? 1000.0 : 1.0) : 0.0;
        EXPECT_EQ(std::stod(t[i][c]), expected) << name << " " << i << "," << c;
      }
  }
}

TEST(Cli, SpamTableE5NearPublishedError) {
  const auto r = run({"--seed", "7", "spam", "--errors", "table-e5", "--shots", "100000"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto summary = table(r.out, "spam_summary");
  EXPECT_EQ(summary[3][0], "post_selected_error");
  EXPECT_NEAR(std::stod(summary[3][1]), 0.083, 0.03);
  EXPECT_NE(r.err.find("1.5 ± 2%"), std::string::npos);
}

TEST(Cli, AnalyzeTableE3) {
  const auto r = run({"spam", "--analyze", kFixtures + "/table_e3.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("raw error 0.131 ± 0.003"), std::string::npos) << r.err;
}

TEST(Cli, ReproducibleOutputFiles) {
  TempDir a, b, c;
  const std::vector<std::string> args{"spam", "--errors", "table-e5", "--shots", "2000", "--prep-error", "0.01"};
  auto with = [&](const TempDir &dir, const std::string &seed, const std::string &workers) {
    std::vector<std::string> v{"--seed", seed, "--out", dir.path().string()};
    v.insert(v.end(), args.begin(), args.end());
    v.insert(v.end(), {"--workers", workers});
    return run(v);
  };
  ASSERT_EQ(with(a, "5", "1").code, 0);
  ASSERT_EQ(with(b, "5", "4").code, 0);
  ASSERT_EQ(with(c, "6", "1").code, 0);
  for (const auto &name : {"spam_raw.csv", "spam_post.csv", "spam_summary.csv", "spam_scaling.csv"}) {
    ASSERT_TRUE(fs::exists(a.path() / name)) << name;
    EXPECT_EQ(slurp(a.path() / name), slurp(b.path() / name)) << name;
  }
  EXPECT_NE(slurp(a.path() / "spam_raw.csv"), slurp(c.path() / "spam_raw.csv"));
}

TEST(Cli, JsonAndCsvCarryEqualData) {
  for (const std::vector<std::string> &cmd : {std::vector<std::string>{"levels", "--b", "0:2:0.5", "--b-mark", "1.2"},
                                             std::vector<std::string>{"strengths"},
                                             std::vector<std::string>{"spam", "--shots", "300"}}) {
    auto csv_args = cmd, json_args = cmd;
    json_args.insert(json_args.begin(), {"--format", "json"});
    const auto csv = run(csv_args), js = run(json_args);
    ASSERT_EQ(csv.code, 0) << csv.err;
    ASSERT_EQ(js.code, 0) << js.err;
    const auto tables = sections(csv.out);
    const auto doc = nlohmann::json::parse(js.out);
    ASSERT_EQ(doc.size(), tables.size());
    for (const auto &[name, rows] : tables) {
      const auto &t = doc.at(name);
      ASSERT_EQ(t.at("columns").get<std::vector<std::string>>(), rows[0]) << name;
      ASSERT_EQ(t.at("rows").size() + 1, rows.size()) << name;
      for (std::size_t i = 1; i < rows.size(); ++i)
        for (std::size_t c = 0; c < rows[i].size(); ++c) {
          const auto &cell = t.at("rows")[i - 1][c];
          if (cell.is_number()) EXPECT_EQ(cell.get<double>(), std::stod(rows[i][c])) << name;
          else if (cell.is_null()) EXPECT_EQ(rows[i][c], "NA");
          else EXPECT_EQ(cell.get<std::string>(), rows[i][c]);
        }
    }
  }
}

TEST(Cli, PrecedenceFlagsOverConfigOverPresetOverDefaults) {
  TempDir dir;
  const auto config = dir.file("config.json", R"({"seed": 3, "spam": {"shots": 200}})");

  EXPECT_EQ(raw_row_total(run({"spam", "--errors", "zero"}).out), 1000.0);
  EXPECT_EQ(raw_row_total(run({"spam", "--preset", "ideal", "--shots", "40"}).out), 40.0);
  EXPECT_EQ(raw_row_total(run({"--config", config, "spam", "--preset", "experiment"}).out), 200.0);
  EXPECT_EQ(raw_row_total(run({"--config", config, "spam", "--preset", "experiment", "--shots", "50"}).out), 50.0);

  const auto args = cli::assemble_arguments({"quditspam", "--config", config, "--seed", "9", "spam", "--preset", "experiment"});
  const auto seed_config = std::find(args.begin(), args.end(), "3");
  const auto seed_flag = std::find(args.begin(), args.end(), "9");
  ASSERT_NE(seed_config, args.end());
  EXPECT_LT(seed_config, seed_flag);
  const auto preset_shots = std::find(args.begin(), args.end(), "1000");
  const auto config_shots = std::find(args.begin(), args.end(), "200");
  EXPECT_LT(preset_shots, config_shots);

  const auto seeded = run({"--config", config, "spam", "--shots", "100", "--prep-error", "0.2"});
  const auto explicit_seed = run({"--seed", "3", "spam", "--shots", "100", "--prep-error", "0.2"});
  EXPECT_EQ(seeded.out, explicit_seed.out);
}

TEST(Cli, ConfigRejectsUnknownKeys) {
  TempDir dir;
  for (const std::string body : {R"({"sed": 3})", R"({"spam": {"shot": 3}})", R"({"levels": {"field": 3}})", "[1]", "{"}) {
    const auto r = run({"--config", dir.file("c.json", body), "spam"});
    EXPECT_NE(r.code, 0) << body;
    EXPECT_NE(r.err.find("error:"), std::string::npos) << body;
  }
  EXPECT_NE(run({"spam", "--preset", "nonsense"}).code, 0);
}

TEST(Cli, InvalidInvocationsFail) {
  EXPECT_NE(run({}).code, 0);
  EXPECT_NE(run({"levels", "--level", "7P3/2"}).code, 0);
  EXPECT_NE(run({"levels", "--b", "5:1:0.1"}).code, 0);
  EXPECT_NE(run({"levels", "--b", "a:b:c"}).code, 0);
  EXPECT_NE(run({"spam", "--encoding", "bogus13"}).code, 0);
  EXPECT_NE(run({"spam", "--errors", "noise-model"}).code, 0);
  EXPECT_NE(run({"spam", "--mode", "sometimes"}).code, 0);
  EXPECT_NE(run({"--format", "xml", "levels"}).code, 0);
  EXPECT_NE(run({"fit", "gaussian", kFixtures + "/table_e5.csv"}).code, 0);
  EXPECT_NE(run({"--fixtures-dir", "/nonexistent", "budget"}).code, 0);
}

TEST(Cli, UnwritableOutputDirectoryFails) {
  TempDir dir;
  const auto blocker = dir.file("blocker", "x");
  EXPECT_NE(run({"--out", blocker + "/sub", "levels", "--b", "1"}).code, 0);
}

TEST(Cli, FitErrorScalingIntercept) {
  const auto r = run({"fit", "error-scaling", kFixtures + "/table_e5.csv"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto params = table(r.out, "fit_parameters");
  EXPECT_EQ(params[1][0], "intercept_b");
  const double b = std::stod(params[1][1]);
  EXPECT_GE(b, 0.02);
  EXPECT_LE(b, 0.06);
  EXPECT_EQ(table(r.out, "fit_covariance").size(), 3u);
  EXPECT_EQ(table(r.out, "fit_residuals").size(), 13u);
}

TEST(Cli, FitRabiNoiselessRecovery) {
  TempDir dir;
  std::string body = "t_us,p_transition,shots\n";
  for (int k = 0; k <= 160; ++k) {
    const double t = 0.625 * k;
    const double p = 0.9 * std::pow(std::cos(std::numbers::pi * (t - 25.0) / 50.0), 2) + 0.05;
    body += fmt::format("{},{},100\n", t, p);
  }
  const auto r = run({"fit", "rabi", dir.file("rabi.csv", body)});
  ASSERT_EQ(r.code, 0) << r.err;
  std::map<std::string, double> v;
  for (const auto &row : table(r.out, "fit_parameters")) if (row[0] != "parameter") v[row[0]] = std::stod(row[1]);
  EXPECT_NEAR(v["eps_pi"], 0.05, 1e-8);
  EXPECT_NEAR(v["t_peak_us"], 25.0, 1e-6);
  EXPECT_NEAR(v["A"], 0.9, 1e-6);
}

TEST(Cli, FitLorentzianAndCalibration) {
  TempDir dir;
  std::string scan = "freq_kHz,p_dark,shots\n";
  for (int k = -10; k <= 10; ++k) {
    const double x = k - 1.5;
    scan += fmt::format("{},{},100\n", k, 0.02 + 0.9 / (1.0 + 4.0 * x * x / 25.0));
  }
  const auto lor = run({"fit", "lorentzian", dir.file("scan.csv", scan)});
  ASSERT_EQ(lor.code, 0) << lor.err;
  EXPECT_NEAR(std::stod(table(lor.out, "fit_parameters")[1][1]), 1.5, 1e-6);

  std::string cal = "f_offset_MHz,f_low_MHz,f_up_MHz,f_1_MHz,f_2_MHz\n";
  for (int k = 0; k < 4; ++k) {
    const double o = 0.1 * k, lo = -3 + 0.7 * k * k, up = 5 + 0.3 * k;
    cal += fmt::format("{},{},{},{},{}\n", o, lo, up, 0.25 * (up - lo) + o + 2.0, -0.5 * (up - lo) + o);
  }
  const auto fit = run({"fit", "calibration", dir.file("cal.csv", cal)});
  ASSERT_EQ(fit.code, 0) << fit.err;
  const auto t = table(fit.out, "calibration_model");
  ASSERT_EQ(t.size(), 3u);
  EXPECT_NEAR(std::stod(t[1][1]), 0.25, 1e-9);
  EXPECT_NEAR(std::stod(t[1][2]), 2.0, 1e-9);
  EXPECT_NEAR(std::stod(t[2][1]), -0.5, 1e-9);
}

TEST(Cli, MalformedCsvReportsColumns) {
  TempDir dir;
  const auto missing = run({"fit", "rabi", dir.file("bad.csv", "time,p\n1,0.5\n")});
  EXPECT_NE(missing.code, 0);
  EXPECT_NE(missing.err.find("t_us"), std::string::npos) << missing.err;
  const auto garbage = run({"fit", "lorentzian", dir.file("bad2.csv", "freq_kHz,p_dark,shots\n1,abc,100\n")});
  EXPECT_NE(garbage.code, 0);
  EXPECT_NE(garbage.err.find("p_dark"), std::string::npos) << garbage.err;
  EXPECT_NE(run({"fit", "calibration", dir.file("bad3.csv", "a,b\n1,2\n")}).code, 0);
}

TEST(Cli, EstimateFieldRoundTrip) {
  const auto r = run({"estimate-b", "--simulate", "8.35"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto est = table(r.out, "field_estimate");
  EXPECT_NEAR(std::stod(est[1][1]), 8.35, 1e-4);
  EXPECT_EQ(table(r.out, "field_residuals").size(), 13u);

  TempDir dir;
  std::string body = "ground,excited,frequency_MHz\n";
  for (const auto &row : table(r.out, "field_residuals"))
    if (row[0] != "transition") {
      const auto arrow = row[0].find(" -> ");
      body += row[0].substr(0, arrow) + "," + row[0].substr(arrow + 4) + "," + row[1] + "\n";
    }
  const auto from_file = run({"estimate-b", dir.file("f.csv", body)});
  ASSERT_EQ(from_file.code, 0) << from_file.err;
  EXPECT_NEAR(std::stod(table(from_file.out, "field_estimate")[1][1]), 8.35, 1e-4);

  const auto one = run({"estimate-b", dir.file("one.csv", "ground,excited,frequency_MHz\nF=2 m=2,F=4 m=4,-3021\n")});
  EXPECT_NE(one.code, 0);
  EXPECT_NE(run({"estimate-b"}).code, 0);
}

TEST(Cli, EstimateFieldPerturbedInputsShowLargerResiduals) {
  auto worst = [](const Result &r) {
    double w = 0.0;
    for (const auto &row : table(r.out, "field_residuals"))
      if (row[0] != "transition") w = std::max(w, std::abs(std::stod(row[2])));
    return w;
  };
  const auto clean = run({"estimate-b", "--simulate", "8.35"});
  const auto noisy = run({"estimate-b", "--simulate", "8.35", "--perturb-khz", "2"});
  ASSERT_EQ(noisy.code, 0) << noisy.err;
  EXPECT_NEAR(std::stod(table(noisy.out, "field_estimate")[1][1]), 8.35, 0.01);
  EXPECT_GT(worst(noisy), 100.0 * worst(clean) + 0.1);
  EXPECT_LT(worst(noisy), 2.0);
}

TEST(Cli, CalibrateDemoWithinOneKilohertz) {
  const auto r = run({"calibrate-demo", "--preset", "experiment"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto check = table(r.out, "calibration_check");
  ASSERT_EQ(check.size(), 1u + 5u * 12u);
  for (std::size_t i = 1; i < check.size(); ++i) EXPECT_LT(std::abs(std::stod(check[i][5])), 1.0);
}

TEST(Cli, BudgetReportsPublishedNumbers) {
  const auto r = run({"budget"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::map<std::string, double> v;
  for (const auto &row : table(r.out, "budget")) if (row[0] != "item") v[row[0]] = std::stod(row[1]);
  EXPECT_NEAR(v["decay"], 0.00342, 1e-4);
  EXPECT_NEAR(v["off_resonant"], 0.000443, 1e-5);
  EXPECT_LE(v["discrimination"], 0.00025);
  EXPECT_NEAR(v["measurement_s"], 0.118, 0.002);
}

TEST(Cli, EigenstatesAndDecomposition) {
  const auto r = run({"eigenstates", "--field", "8.35"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto t = table(r.out, "eigenstates");
  ASSERT_EQ(t.size(), 25u);
  for (std::size_t i = 1; i < t.size(); ++i) {
    double norm = 0.0;
    for (std::size_t c = 2; c < t[i].size(); ++c) norm += std::pow(std::stod(t[i][c]), 2);
    EXPECT_NEAR(norm, 1.0, 1e-10) << t[i][0];
  }
  const auto d = run({"eigenstates", "--decompose", "F=4 m=4", "--b", "0:10:1"});
  ASSERT_EQ(d.code, 0) << d.err;
  const auto rows = table(d.out, "decomposition");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_NEAR(std::abs(std::stod(rows[i][1])), 1.0, 1e-10);
}
