#include "bpmf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <boost/math/distributions/students_t.hpp>
#include <nlohmann/json.hpp>

namespace bpmf {

namespace fs = std::filesystem;
using nlohmann::json;

double evaluate_rmse(const std::map<std::pair<int, int>, double>& predictions,
                     const std::vector<Observation>& test_observations) {
  if (test_observations.empty()) throw std::domain_error("empty test set");
  double sq = 0.0;
  for (const auto& obs : test_observations) {
    const auto it = predictions.find({obs.face_id, obs.trait_id});
    if (it == predictions.end())
      throw std::runtime_error("missing prediction for cell (" + std::to_string(obs.face_id) +
                               ", " + std::to_string(obs.trait_id) + ")");
    const double diff = obs.rating - it->second;
    sq += diff * diff;
  }
  return std::sqrt(sq / static_cast<double>(test_observations.size()));
}

std::vector<std::pair<double, double>> smooth_curve(
    const std::vector<std::pair<double, double>>& series, int window) {
  if (window < 1) throw std::invalid_argument("smoothing window must be >= 1");
  const int n = static_cast<int>(series.size());
  const int before = (window - 1) / 2;
  const int after = window / 2;
  std::vector<std::pair<double, double>> out(series.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - before);
    const int hi = std::min(n - 1, i + after);
    double sum = 0.0;
    for (int k = lo; k <= hi; ++k) sum += series[static_cast<std::size_t>(k)].second;
    out[static_cast<std::size_t>(i)] = {series[static_cast<std::size_t>(i)].first,
                                        sum / static_cast<double>(hi - lo + 1)};
  }
  return out;
}

std::vector<CiPoint> confidence_interval(const std::vector<std::vector<double>>& curves,
                                         double level) {
  if (curves.empty()) throw std::invalid_argument("no curves given");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("level must lie in (0, 1)");
  const std::size_t len = curves.front().size();
  for (const auto& c : curves)
    if (c.size() != len) throw std::runtime_error("repetition curves have mismatched lengths");

  const int n = static_cast<int>(curves.size());
  double tcrit = 0.0;
  if (n > 1) {
    const boost::math::students_t dist(n - 1);
    tcrit = boost::math::quantile(dist, 1.0 - (1.0 - level) / 2.0);
  }

  std::vector<CiPoint> out(len);
  for (std::size_t x = 0; x < len; ++x) {
    double mean = 0.0;
    for (const auto& c : curves) mean += c[x];
    mean /= n;
    double half = 0.0;
    if (n > 1) {
      double ss = 0.0;
      for (const auto& c : curves) ss += (c[x] - mean) * (c[x] - mean);
      const double sd = std::sqrt(ss / (n - 1));
      half = tcrit * sd / std::sqrt(static_cast<double>(n));
    }
    out[x] = {mean, mean - half, mean + half};
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (arms.empty()) throw std::invalid_argument("config needs at least one arm");
  if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  if (smoothing_window < 1) throw std::invalid_argument("smoothing_window must be >= 1");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw std::invalid_argument("ci_level must lie in (0, 1)");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
  if (!dataset && !synthetic)
    throw std::invalid_argument("config needs either 'dataset' paths or a 'synthetic' block");
  hyper.validate();
  for (const auto& arm : arms) {
    arm.strategy.validate();
    arm.chain.validate();
    if (arm.schedule_option && (*arm.schedule_option < 1 || *arm.schedule_option > 3))
      throw std::invalid_argument("schedule_option must be 1, 2 or 3");
  }
}

namespace {

StrategyConfig parse_strategy(const json& j) {
  StrategyConfig s;
  s.kind = strategy_kind_from_string(j.at("kind").get<std::string>());
  s.batch_size = j.value("batch_size", s.batch_size);
  s.budget = j.value("budget", s.budget);
  s.init_pool_size = j.value("init_pool_size", s.init_pool_size);
  s.distinct_cells = j.value("distinct_cells", s.distinct_cells);
  s.normalize_features = j.value("normalize_features", s.normalize_features);
  s.seed = j.value("seed", s.seed);
  return s;
}

ChainConfig parse_chain(const json& j) {
  ChainConfig c;
  c.warmup = j.value("warmup", c.warmup);
  c.samples = j.value("samples", c.samples);
  c.leapfrog_steps = j.value("leapfrog_steps", c.leapfrog_steps);
  c.initial_step_size = j.value("initial_step_size", c.initial_step_size);
  c.target_accept = j.value("target_accept", c.target_accept);
  c.aggregation_window = j.value("aggregation_window", c.aggregation_window);
  c.warm_start = j.value("warm_start", c.warm_start);
  c.seed = j.value("seed", c.seed);
  return c;
}

SyntheticConfig parse_synthetic(const json& j) {
  SyntheticConfig s;
  s.n_faces = j.value("n_faces", s.n_faces);
  s.n_traits = j.value("n_traits", s.n_traits);
  s.feat_dim_face = j.value("feat_dim_face", s.feat_dim_face);
  s.feat_dim_trait = j.value("feat_dim_trait", s.feat_dim_trait);
  s.true_latent_dim = j.value("true_latent_dim", s.true_latent_dim);
  s.ratings_per_cell = j.value("ratings_per_cell", s.ratings_per_cell);
  s.noise_precision = j.value("noise_precision", s.noise_precision);
  s.signal_scale = j.value("signal_scale", s.signal_scale);
  s.seed = j.value("seed", s.seed);
  return s;
}

Hyperparams parse_hyper(const json& j) {
  Hyperparams h;
  h.latent_dim = j.value("latent_dim", h.latent_dim);
  h.gamma_shape = j.value("gamma_shape", h.gamma_shape);
  h.gamma_rate = j.value("gamma_rate", h.gamma_rate);
  h.noise_precision = j.value("noise_precision", h.noise_precision);
  h.logit_clamp = j.value("logit_clamp", h.logit_clamp);
  return h;
}

json strategy_to_json(const StrategyConfig& s) {
  return json{{"kind", to_string(s.kind)},
              {"batch_size", s.batch_size},
              {"budget", s.budget},
              {"init_pool_size", s.init_pool_size},
              {"distinct_cells", s.distinct_cells},
              {"normalize_features", s.normalize_features},
              {"seed", s.seed}};
}

json chain_to_json(const ChainConfig& c) {
  return json{{"warmup", c.warmup},
              {"samples", c.samples},
              {"leapfrog_steps", c.leapfrog_steps},
              {"initial_step_size", c.initial_step_size},
              {"target_accept", c.target_accept},
              {"aggregation_window", c.aggregation_window},
              {"warm_start", c.warm_start},
              {"seed", c.seed}};
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  if (cfg.dataset)
    j["dataset"] = {{"ratings", cfg.dataset->ratings},
                    {"face_features", cfg.dataset->face_features},
                    {"trait_features", cfg.dataset->trait_features}};
  if (cfg.synthetic)
    j["synthetic"] = {{"n_faces", cfg.synthetic->n_faces},
                      {"n_traits", cfg.synthetic->n_traits},
                      {"feat_dim_face", cfg.synthetic->feat_dim_face},
                      {"feat_dim_trait", cfg.synthetic->feat_dim_trait},
                      {"true_latent_dim", cfg.synthetic->true_latent_dim},
                      {"ratings_per_cell", cfg.synthetic->ratings_per_cell},
                      {"noise_precision", cfg.synthetic->noise_precision},
                      {"signal_scale", cfg.synthetic->signal_scale},
                      {"seed", cfg.synthetic->seed}};
  j["hyper"] = {{"latent_dim", cfg.hyper.latent_dim},
                {"gamma_shape", cfg.hyper.gamma_shape},
                {"gamma_rate", cfg.hyper.gamma_rate},
                {"noise_precision", cfg.hyper.noise_precision},
                {"logit_clamp", cfg.hyper.logit_clamp}};
  j["arms"] = json::array();
  for (const auto& arm : cfg.arms) {
    json ja{{"name", arm.name},
            {"strategy", strategy_to_json(arm.strategy)},
            {"chain", chain_to_json(arm.chain)}};
    if (arm.schedule_option) ja["schedule_option"] = *arm.schedule_option;
    j["arms"].push_back(std::move(ja));
  }
  j["repetitions"] = cfg.repetitions;
  j["smoothing_window"] = cfg.smoothing_window;
  j["ci_level"] = cfg.ci_level;
  j["output_dir"] = cfg.output_dir;
  j["master_seed"] = cfg.master_seed;
  j["workers"] = cfg.workers;
  return j;
}

std::string sanitize(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-') ? c : '_';
  return out;
}

std::string arm_tag(const ExperimentArm& arm, int index) {
  return "arm" + std::to_string(index) + "_" + sanitize(arm.name);
}

void format_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

ExperimentConfig parse_experiment_config(const json& j) {
  ExperimentConfig cfg;
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    cfg.dataset = DatasetPaths{d.at("ratings").get<std::string>(),
                               d.at("face_features").get<std::string>(),
                               d.at("trait_features").get<std::string>()};
  }
  if (j.contains("synthetic")) cfg.synthetic = parse_synthetic(j.at("synthetic"));
  if (j.contains("hyper")) cfg.hyper = parse_hyper(j.at("hyper"));
  for (const auto& ja : j.at("arms")) {
    ExperimentArm arm;
    arm.strategy = parse_strategy(ja.at("strategy"));
    arm.chain = parse_chain(ja.at("chain"));
    if (ja.contains("schedule_option") && !ja.at("schedule_option").is_null())
      arm.schedule_option = ja.at("schedule_option").get<int>();
    arm.name = ja.value("name", to_string(arm.strategy.kind) + "_p" +
                                    std::to_string(arm.strategy.batch_size));
    cfg.arms.push_back(std::move(arm));
  }
  cfg.repetitions = j.value("repetitions", cfg.repetitions);
  cfg.smoothing_window = j.value("smoothing_window", cfg.smoothing_window);
  cfg.ci_level = j.value("ci_level", cfg.ci_level);
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  cfg.master_seed = j.value("master_seed", cfg.master_seed);
  cfg.workers = j.value("workers", cfg.workers);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  json j;
  in >> j;
  return parse_experiment_config(j);
}

std::uint64_t child_seed(std::uint64_t master_seed, int arm_index, int repetition) {
  return mix_seed(master_seed, static_cast<std::uint64_t>(arm_index),
                  static_cast<std::uint64_t>(repetition));
}

void write_trace_csv(const std::string& path, const ActiveTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  // wallclock stays out of the raw trace so reruns are byte-identical;
  // timings are recorded in the manifest instead.
  out << "iteration,train_size,test_rmse,chain_warmup,chain_samples,strategy_kind\n";
  std::string line;
  for (const auto& row : trace.rows) {
    line.clear();
    line += std::to_string(row.iteration);
    line += ',';
    line += std::to_string(row.train_size);
    line += ',';
    format_double(line, row.test_rmse);
    line += ',';
    line += std::to_string(row.chain_warmup);
    line += ',';
    line += std::to_string(row.chain_samples);
    line += ',';
    line += row.strategy_kind;
    line += '\n';
    out << line;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

RawTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trace file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty trace file: " + path);
  RawTrace trace;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 3) throw std::runtime_error("malformed trace row: " + line);
    trace.iterations.push_back(std::stoi(fields[0]));
    trace.train_sizes.push_back(std::stoi(fields[1]));
    trace.test_rmse.push_back(std::stod(fields[2]));
  }
  return trace;
}

void aggregate_arm(const std::vector<std::string>& trace_paths, int smoothing_window,
                   double ci_level, const std::string& out_path) {
  if (trace_paths.empty()) throw std::invalid_argument("no trace files for arm");

  std::vector<RawTrace> traces;
  for (const auto& p : trace_paths) traces.push_back(read_trace_csv(p));

  std::vector<std::vector<double>> smoothed;
  for (const auto& t : traces) {
    std::vector<std::pair<double, double>> series;
    for (std::size_t i = 0; i < t.test_rmse.size(); ++i)
      series.emplace_back(static_cast<double>(t.iterations[i]), t.test_rmse[i]);
    std::vector<double> ys;
    for (const auto& [x, y] : smooth_curve(series, smoothing_window)) ys.push_back(y);
    smoothed.push_back(std::move(ys));
  }

  const auto band = confidence_interval(smoothed, ci_level);

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + out_path);
  out << "iteration,train_size,mean_test_rmse,ci_lower,ci_upper\n";
  std::string line;
  for (std::size_t i = 0; i < band.size(); ++i) {
    line.clear();
    line += std::to_string(traces.front().iterations[i]);
    line += ',';
    line += std::to_string(traces.front().train_sizes[i]);
    line += ',';
    format_double(line, band[i].mean);
    line += ',';
    format_double(line, band[i].lower);
    line += ',';
    format_double(line, band[i].upper);
    line += '\n';
    out << line;
  }
}

namespace {

void write_predictions_csv(const std::string& path,
                           const std::map<std::pair<int, int>, double>& preds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "face_id,trait_id,mean_r_hat\n";
  std::string line;
  for (const auto& [cell, pred] : preds) {
    line.clear();
    line += std::to_string(cell.first);
    line += ',';
    line += std::to_string(cell.second);
    line += ',';
    format_double(line, pred);
    line += '\n';
    out << line;
  }
}

struct JobResult {
  ActiveResult result;
  double wallclock_seconds = 0.0;
  std::string error;  // empty on success
};

}  // namespace

void run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto t_start = std::chrono::steady_clock::now();

  RatingsTable table;
  FeatureBank bank;
  if (config.dataset) {
    table = load_ratings(config.dataset->ratings, config.hyper.logit_clamp).table;
    bank.face_features = load_features(config.dataset->face_features);
    bank.trait_features = load_features(config.dataset->trait_features);
  } else {
    auto data = generate_synthetic(*config.synthetic);
    table = std::move(data.table);
    bank = std::move(data.bank);
  }
  table.validate(static_cast<int>(bank.face_features.rows()),
                 static_cast<int>(bank.trait_features.rows()));

  const fs::path out_dir(config.output_dir);
  fs::create_directories(out_dir / "raw");
  fs::create_directories(out_dir / "aggregate");
  fs::create_directories(out_dir / "predictions");

  const int n_arms = static_cast<int>(config.arms.size());
  const int n_jobs = n_arms * config.repetitions;
  std::vector<JobResult> results(static_cast<std::size_t>(n_jobs));

  std::atomic<int> next_job{0};
  auto worker = [&]() {
    for (;;) {
      const int job = next_job.fetch_add(1);
      if (job >= n_jobs) return;
      const int arm_index = job / config.repetitions;
      const int rep = job % config.repetitions;
      const auto& arm = config.arms[static_cast<std::size_t>(arm_index)];

      JobResult& jr = results[static_cast<std::size_t>(job)];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const std::uint64_t seed = child_seed(config.master_seed, arm_index, rep);
        StrategyConfig strategy = arm.strategy;
        strategy.seed = seed;
        ChainConfig chain = arm.chain;
        chain.seed = mix_seed(seed, 0x5eedULL);
        jr.result = run_active_loop(table, bank, config.hyper, strategy, chain, arm.schedule_option);
      } catch (const std::exception& e) {
        jr.error = e.what();
      }
      jr.wallclock_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (config.verbose) {
        std::fprintf(stderr, "[%s rep %d] %s (%.1fs)\n", arm.name.c_str(), rep,
                     jr.error.empty() ? "done" : jr.error.c_str(), jr.wallclock_seconds);
      }
    }
  };

  {
    std::vector<std::thread> threads;
    const int n_workers = std::min(config.workers, n_jobs);
    threads.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  json manifest;
  manifest["tool"] = "active-bpmf";
  manifest["version"] = "0.1.0";
  manifest["config"] = config_to_json(config);
  manifest["master_seed"] = config.master_seed;
  manifest["repetitions"] = config.repetitions;
  manifest["smoothing_window"] = config.smoothing_window;
  manifest["ci_level"] = config.ci_level;
  json jarms = json::array();

  for (int a = 0; a < n_arms; ++a) {
    const auto& arm = config.arms[static_cast<std::size_t>(a)];
    const std::string tag = arm_tag(arm, a);
    json jarm;
    jarm["name"] = arm.name;
    jarm["strategy"] = to_string(arm.strategy.kind);
    jarm["batch_size"] = arm.strategy.batch_size;
    jarm["budget"] = arm.strategy.budget;
    jarm["init_pool_size"] = arm.strategy.init_pool_size;
    if (arm.schedule_option) jarm["schedule_option"] = *arm.schedule_option;

    std::vector<std::string> trace_paths;
    json jreps = json::array();
    bool arm_ok = true;
    for (int r = 0; r < config.repetitions; ++r) {
      const JobResult& jr = results[static_cast<std::size_t>(a * config.repetitions + r)];
      json jrep;
      jrep["repetition"] = r;
      jrep["child_seed"] = child_seed(config.master_seed, a, r);
      jrep["wallclock_seconds"] = jr.wallclock_seconds;
      if (jr.error.empty()) {
        const std::string trace_path = (out_dir / "raw" / (tag + "_rep" + std::to_string(r) + ".csv")).string();
        write_trace_csv(trace_path, jr.result.trace);
        write_predictions_csv(
            (out_dir / "predictions" / (tag + "_rep" + std::to_string(r) + ".csv")).string(),
            jr.result.final_predictions);
        trace_paths.push_back(trace_path);
        json jtimes = json::array();
        for (const auto& row : jr.result.trace.rows) jtimes.push_back(row.wallclock_seconds);
        jrep["iteration_seconds"] = jtimes;
        jrep["exhausted"] = jr.result.trace.exhausted;
      } else {
        jrep["error"] = jr.error;
        arm_ok = false;
      }
      jreps.push_back(std::move(jrep));
    }
    jarm["repetitions"] = std::move(jreps);
    jarm["status"] = arm_ok ? "ok" : "error";

    if (arm_ok) {
      aggregate_arm(trace_paths, config.smoothing_window, config.ci_level,
                    (out_dir / "aggregate" / (tag + ".csv")).string());
    }
    jarms.push_back(std::move(jarm));
  }
  manifest["arms"] = std::move(jarms);
  manifest["wallclock_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

  std::ofstream mf(out_dir / "manifest.json");
  mf << manifest.dump(2) << '\n';
}

}  // namespace bpmf
