#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bpmf/data.hpp"
#include "bpmf/harness.hpp"

namespace fs = std::filesystem;

namespace {

int default_workers() {
  if (const char* env = std::getenv("ACTIVE_BPMF_WORKERS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return 1;
}

// predictions CSV written by `run`: face_id,trait_id,mean_r_hat
std::map<std::pair<int, int>, double> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open predictions file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty predictions file: " + path);
  std::map<std::pair<int, int>, double> preds;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw std::runtime_error("malformed predictions row: " + line);
    preds[{std::stoi(line.substr(0, c1)), std::stoi(line.substr(c1 + 1, c2 - c1 - 1))}] =
        std::stod(line.substr(c2 + 1));
  }
  return preds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian matrix factorization with batched active learning"};
  app.require_subcommand(1);

  bool verbose = false;
  app.add_flag("--verbose", verbose, "Print per-job progress");

  // gen-synthetic
  auto* gen = app.add_subcommand("gen-synthetic", "Generate a synthetic dataset with known truth");
  bpmf::SyntheticConfig syn;
  std::string gen_out = "data";
  gen->add_option("--n-faces", syn.n_faces);
  gen->add_option("--n-traits", syn.n_traits);
  gen->add_option("--feat-dim-face", syn.feat_dim_face);
  gen->add_option("--feat-dim-trait", syn.feat_dim_trait);
  gen->add_option("--true-latent-dim", syn.true_latent_dim);
  gen->add_option("--ratings-per-cell", syn.ratings_per_cell);
  gen->add_option("--noise-precision", syn.noise_precision);
  gen->add_option("--signal-scale", syn.signal_scale);
  gen->add_option("--seed", syn.seed);
  gen->add_option("--out", gen_out, "Output directory");

  // reduce
  auto* reduce = app.add_subcommand("reduce", "Reduce feature dimensionality");
  std::string red_in, red_out, red_method = "pca";
  int red_dim = 16;
  std::uint64_t red_seed = 0;
  reduce->add_option("--in", red_in, "Input feature CSV")->required();
  reduce->add_option("--target-dim", red_dim)->required();
  reduce->add_option("--method", red_method, "pca | random_projection");
  reduce->add_option("--seed", red_seed);
  reduce->add_option("--out", red_out, "Output feature CSV")->required();

  // subset
  auto* subset = app.add_subcommand("subset", "Extract a cross-section subset of a ratings table");
  std::string sub_in, sub_out;
  int sub_faces = 10, sub_traits = 10, sub_per_cell = 10;
  std::uint64_t sub_seed = 0;
  subset->add_option("--ratings", sub_in)->required();
  subset->add_option("--n-faces", sub_faces);
  subset->add_option("--n-traits", sub_traits);
  subset->add_option("--per-cell", sub_per_cell);
  subset->add_option("--seed", sub_seed);
  subset->add_option("--out", sub_out)->required();

  // run
  auto* run = app.add_subcommand("run", "Run an experiment from a JSON config");
  std::string run_config, run_out;
  std::uint64_t run_seed = 0;
  int workers = default_workers();
  run->add_option("--config", run_config)->required();
  run->add_option("--out", run_out, "Override output_dir");
  auto* seed_opt = run->add_option("--seed", run_seed, "Override master_seed");
  run->add_option("--workers", workers, "Parallel (arm, repetition) jobs");

  // eval
  auto* eval = app.add_subcommand("eval", "RMSE of a predictions file against a ratings file");
  std::string eval_preds, eval_ratings;
  eval->add_option("--predictions", eval_preds)->required();
  eval->add_option("--ratings", eval_ratings)->required();

  // aggregate
  auto* agg = app.add_subcommand("aggregate", "Aggregate raw traces into smoothed curves");
  std::vector<std::string> agg_traces;
  std::string agg_out = "aggregate.csv";
  int agg_window = 1;
  double agg_level = 0.95;
  agg->add_option("--trace", agg_traces, "Raw trace CSVs of one arm (repeatable)")->required();
  agg->add_option("--window", agg_window, "Smoothing window");
  agg->add_option("--level", agg_level, "Confidence level");
  agg->add_option("--out", agg_out, "Output CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const auto data = bpmf::generate_synthetic(syn);
      fs::create_directories(gen_out);
      bpmf::write_ratings((fs::path(gen_out) / "ratings.csv").string(), data.table);
      bpmf::write_features((fs::path(gen_out) / "face_features.csv").string(),
                           data.bank.face_features);
      bpmf::write_features((fs::path(gen_out) / "trait_features.csv").string(),
                           data.bank.trait_features);
      bpmf::write_features((fs::path(gen_out) / "true_face_weights.csv").string(),
                           data.true_weights_face);
      bpmf::write_features((fs::path(gen_out) / "true_trait_weights.csv").string(),
                           data.true_weights_trait);
      std::cout << "wrote " << data.table.size() << " observations to " << gen_out << "\n";
    } else if (*reduce) {
      const auto m = bpmf::load_features(red_in);
      const auto reduced =
          bpmf::reduce_features(m, red_dim, bpmf::reduce_method_from_string(red_method), red_seed);
      bpmf::write_features(red_out, reduced);
      std::cout << "wrote " << reduced.rows() << "x" << reduced.cols() << " matrix to " << red_out
                << "\n";
    } else if (*subset) {
      const auto loaded = bpmf::load_ratings(sub_in);
      const auto sub = bpmf::subset_sample(loaded.table, sub_faces, sub_traits, sub_per_cell, sub_seed);
      bpmf::write_ratings(sub_out, sub);
      std::cout << "wrote " << sub.size() << " observations to " << sub_out << "\n";
    } else if (*run) {
      auto cfg = bpmf::load_experiment_config(run_config);
      if (!run_out.empty()) cfg.output_dir = run_out;
      if (seed_opt->count() > 0) cfg.master_seed = run_seed;
      cfg.workers = workers;
      cfg.verbose = verbose;
      bpmf::run_experiment(cfg);
      std::cout << "results written to " << cfg.output_dir << "\n";
    } else if (*eval) {
      const auto preds = load_predictions(eval_preds);
      const auto loaded = bpmf::load_ratings(eval_ratings);
      std::cout << bpmf::evaluate_rmse(preds, loaded.table.observations) << "\n";
    } else if (*agg) {
      bpmf::aggregate_arm(agg_traces, agg_window, agg_level, agg_out);
      std::cout << "wrote " << agg_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
