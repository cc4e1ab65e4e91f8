#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "bpmf/harness.hpp"

using namespace bpmf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("bpmf_harness_" + std::to_string(std::rand()) + std::to_string(std::rand()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

nlohmann::json small_config(const std::string& out_dir) {
  return nlohmann::json{
      {"synthetic",
       {{"n_faces", 6}, {"n_traits", 3}, {"feat_dim_face", 3}, {"feat_dim_trait", 2},
        {"true_latent_dim", 2}, {"ratings_per_cell", 2}, {"noise_precision", 4.0}, {"seed", 1}}},
      {"hyper", {{"latent_dim", 2}}},
      {"arms",
       {{{"strategy", {{"kind", "uncertainty"}, {"batch_size", 2}, {"budget", 3}, {"init_pool_size", 4}}},
         {"chain", {{"warmup", 4}, {"samples", 6}}}},
        {{"strategy", {{"kind", "passive"}, {"batch_size", 2}, {"budget", 3}, {"init_pool_size", 4}}},
         {"chain", {{"warmup", 4}, {"samples", 6}}}}}},
      {"repetitions", 3},
      {"smoothing_window", 1},
      {"ci_level", 0.95},
      {"output_dir", out_dir},
      {"master_seed", 17}};
}

}  // namespace

TEST_CASE("evaluate_rmse") {
  std::map<std::pair<int, int>, double> preds{{{0, 0}, 50.0}, {{1, 0}, 30.0}};

  SUBCASE("perfect predictions") {
    std::vector<Observation> obs{{0, 0, 0, 0, 50.0}, {1, 0, 1, 0, 30.0}};
    CHECK(evaluate_rmse(preds, obs) == doctest::Approx(0.0));
  }
  SUBCASE("single residual of 10") {
    std::vector<Observation> obs{{0, 0, 0, 0, 40.0}};
    CHECK(evaluate_rmse(preds, obs) == doctest::Approx(10.0));
  }
  SUBCASE("residuals 1 and 2") {
    std::vector<Observation> obs{{0, 0, 0, 0, 51.0}, {1, 0, 1, 0, 32.0}};
    CHECK(evaluate_rmse(preds, obs) == doctest::Approx(std::sqrt(2.5)).epsilon(1e-12));
    CHECK(evaluate_rmse(preds, obs) == doctest::Approx(1.58114).epsilon(1e-5));
  }
  SUBCASE("empty test set") { CHECK_THROWS_AS(evaluate_rmse(preds, {}), std::domain_error); }
  SUBCASE("missing prediction") {
    std::vector<Observation> obs{{0, 0, 5, 5, 40.0}};
    CHECK_THROWS_AS(evaluate_rmse(preds, obs), std::runtime_error);
  }
}

TEST_CASE("smooth_curve") {
  const std::vector<std::pair<double, double>> ys{{0, 1}, {1, 2}, {2, 3}};

  SUBCASE("window 1 is the identity") { CHECK(smooth_curve(ys, 1) == ys); }
  SUBCASE("constant series is unchanged") {
    const std::vector<std::pair<double, double>> c{{0, 5}, {1, 5}, {2, 5}, {3, 5}};
    CHECK(smooth_curve(c, 3) == c);
  }
  SUBCASE("boundary-truncated means") {
    const auto out = smooth_curve(ys, 3);
    CHECK(out[0].second == doctest::Approx(1.5));
    CHECK(out[1].second == doctest::Approx(2.0));
    CHECK(out[2].second == doctest::Approx(2.5));
    CHECK(out[0].first == 0.0);  // x values preserved
  }
  SUBCASE("invalid window") { CHECK_THROWS_AS(smooth_curve(ys, 0), std::invalid_argument); }
}

TEST_CASE("confidence_interval") {
  SUBCASE("identical repetitions give a zero-width band") {
    const auto out = confidence_interval({{2.0, 3.0}, {2.0, 3.0}, {2.0, 3.0}}, 0.95);
    CHECK(out[0].mean == doctest::Approx(2.0));
    CHECK(out[0].lower == doctest::Approx(2.0));
    CHECK(out[1].upper == doctest::Approx(3.0));
  }
  SUBCASE("t-based half width at n=3") {
    const auto out = confidence_interval({{1.0}, {2.0}, {3.0}}, 0.95);
    CHECK(out[0].mean == doctest::Approx(2.0));
    // t(0.95, df=2) = 4.3027, sd = 1, half-width = 4.3027 / sqrt(3)
    CHECK(out[0].upper - out[0].mean == doctest::Approx(2.4841).epsilon(1e-4));
    CHECK(out[0].mean - out[0].lower == doctest::Approx(out[0].upper - out[0].mean).epsilon(1e-12));
  }
  SUBCASE("mismatched lengths throw") {
    CHECK_THROWS(confidence_interval({{1.0, 2.0}, {1.0}}, 0.95));
  }
}

TEST_CASE("child seeds are distinct across arms and repetitions") {
  std::set<std::uint64_t> seeds;
  for (int a = 0; a < 8; ++a)
    for (int r = 0; r < 8; ++r) seeds.insert(child_seed(12345, a, r));
  CHECK(seeds.size() == 64);
}

TEST_CASE("run_experiment writes the expected files and is reproducible") {
  TempDir dir;
  const std::string out1 = (dir.path / "run1").string();
  auto cfg = parse_experiment_config(small_config(out1));
  run_experiment(cfg);

  // 2 arms x 3 repetitions -> 6 raw traces, 2 aggregates
  std::size_t raw = 0, agg = 0;
  for (const auto& e : fs::directory_iterator(fs::path(out1) / "raw")) ++raw, (void)e;
  for (const auto& e : fs::directory_iterator(fs::path(out1) / "aggregate")) ++agg, (void)e;
  CHECK(raw == 6);
  CHECK(agg == 2);
  CHECK(fs::exists(fs::path(out1) / "manifest.json"));

  SUBCASE("rerun produces byte-identical raw traces") {
    const std::string out2 = (dir.path / "run2").string();
    auto cfg2 = parse_experiment_config(small_config(out2));
    run_experiment(cfg2);
    for (const auto& e : fs::directory_iterator(fs::path(out1) / "raw")) {
      const auto name = e.path().filename();
      CHECK(slurp(e.path().string()) == slurp((fs::path(out2) / "raw" / name).string()));
    }
  }
  SUBCASE("re-aggregating the raw traces reproduces the aggregate files") {
    for (const auto& e : fs::directory_iterator(fs::path(out1) / "aggregate")) {
      const std::string arm = e.path().stem().string();
      std::vector<std::string> traces;
      for (int r = 0; r < 3; ++r)
        traces.push_back((fs::path(out1) / "raw" / (arm + "_rep" + std::to_string(r) + ".csv")).string());
      const std::string redo = (dir.path / (arm + "_redo.csv")).string();
      aggregate_arm(traces, 1, 0.95, redo);
      CHECK(slurp(redo) == slurp(e.path().string()));
    }
  }
  SUBCASE("trace rows carry the loop contract") {
    const auto trace = read_trace_csv((fs::path(out1) / "raw").string() +
                                      "/arm0_uncertainty_p2_rep0.csv");
    REQUIRE(trace.iterations.size() == 4);  // budget 3 -> rows 0..3
    for (std::size_t i = 0; i < trace.iterations.size(); ++i)
      CHECK(trace.train_sizes[i] == 4 + 2 * static_cast<int>(i));
  }
}

TEST_CASE("run_experiment with one rep and zero budget") {
  TempDir dir;
  auto j = small_config((dir.path / "mini").string());
  j["repetitions"] = 1;
  j["arms"] = {j["arms"][0]};
  j["arms"][0]["strategy"]["budget"] = 0;
  auto cfg = parse_experiment_config(j);
  run_experiment(cfg);

  const auto trace = read_trace_csv(
      (dir.path / "mini" / "raw" / "arm0_uncertainty_p2_rep0.csv").string());
  CHECK(trace.iterations.size() == 1);

  // single repetition: aggregate equals the raw values with zero width
  const std::string agg = (dir.path / "mini" / "aggregate" / "arm0_uncertainty_p2.csv").string();
  std::ifstream in(agg);
  std::string header, row;
  REQUIRE(std::getline(in, header));
  REQUIRE(std::getline(in, row));
  std::stringstream ss(row);
  std::string field;
  std::vector<std::string> fields;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  CHECK(std::stod(fields[2]) == doctest::Approx(trace.test_rmse[0]));
  CHECK(std::stod(fields[3]) == doctest::Approx(trace.test_rmse[0]));
  CHECK(std::stod(fields[4]) == doctest::Approx(trace.test_rmse[0]));
}

TEST_CASE("config validation") {
  auto j = small_config("x");
  j.erase("synthetic");
  CHECK_THROWS(parse_experiment_config(j));

  auto j2 = small_config("x");
  j2["arms"] = nlohmann::json::array();
  CHECK_THROWS(parse_experiment_config(j2));

  auto j3 = small_config("x");
  j3["arms"][0]["schedule_option"] = 9;
  CHECK_THROWS(parse_experiment_config(j3));
}
