#ifndef BPMF_HARNESS_HPP
#define BPMF_HARNESS_HPP

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bpmf/active.hpp"
#include "bpmf/data.hpp"
#include "bpmf/types.hpp"

namespace bpmf {

// RMSE of observed ratings against the predicted mean_r_hat of their cells.
double evaluate_rmse(const std::map<std::pair<int, int>, double>& predictions,
                     const std::vector<Observation>& test_observations);

// Centered moving average, window truncated at the series boundaries.
std::vector<std::pair<double, double>> smooth_curve(
    const std::vector<std::pair<double, double>>& series, int window);

struct CiPoint {
  double mean;
  double lower;
  double upper;
};

// Student-t band: mean +/- t(level, n-1) * sd / sqrt(n) per x.
std::vector<CiPoint> confidence_interval(const std::vector<std::vector<double>>& curves,
                                         double level);

struct DatasetPaths {
  std::string ratings;
  std::string face_features;
  std::string trait_features;
};

struct ExperimentArm {
  std::string name;
  StrategyConfig strategy;
  ChainConfig chain;
  std::optional<int> schedule_option;
};

struct ExperimentConfig {
  std::optional<DatasetPaths> dataset;
  std::optional<SyntheticConfig> synthetic;
  Hyperparams hyper;
  std::vector<ExperimentArm> arms;
  int repetitions = 1;
  int smoothing_window = 1;
  double ci_level = 0.95;
  std::string output_dir = "out";
  std::uint64_t master_seed = 0;
  int workers = 1;
  bool verbose = false;

  void validate() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

// Deterministic per-(arm, repetition) seed derived from the master seed.
std::uint64_t child_seed(std::uint64_t master_seed, int arm_index, int repetition);

struct RawTrace {
  std::vector<int> iterations;
  std::vector<int> train_sizes;
  std::vector<double> test_rmse;
};

void write_trace_csv(const std::string& path, const ActiveTrace& trace);
RawTrace read_trace_csv(const std::string& path);

// Smoothed per-arm mean curve with confidence band, computed purely from the
// raw trace files. Writes <out>/<arm_tag>.csv.
void aggregate_arm(const std::vector<std::string>& trace_paths, int smoothing_window,
                   double ci_level, const std::string& out_path);

// Runs every arm x repetition (optionally in parallel), writes raw traces,
// per-run predictions, per-arm aggregates and a manifest into output_dir.
void run_experiment(const ExperimentConfig& config);

}  // namespace bpmf

#endif  // BPMF_HARNESS_HPP
