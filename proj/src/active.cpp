#include "bpmf/active.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace bpmf {

std::string to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::uncertainty: return "uncertainty";
    case StrategyKind::kcenter: return "kcenter";
    case StrategyKind::passive: return "passive";
  }
  throw std::invalid_argument("unknown strategy kind");
}

StrategyKind strategy_kind_from_string(const std::string& s) {
  if (s == "uncertainty") return StrategyKind::uncertainty;
  if (s == "kcenter") return StrategyKind::kcenter;
  if (s == "passive") return StrategyKind::passive;
  throw std::invalid_argument("unknown strategy kind: " + s);
}

void StrategyConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (init_pool_size < 1) throw std::invalid_argument("init_pool_size must be >= 1");
  if (budget < 0) throw std::invalid_argument("budget must be >= 0");
}

namespace {

// obs_id -> index into table.observations
std::vector<int> obs_index(const RatingsTable& table) {
  std::vector<int> idx(table.size());
  for (std::size_t i = 0; i < table.size(); ++i)
    idx[static_cast<std::size_t>(table.observations[i].obs_id)] = static_cast<int>(i);
  return idx;
}

Vector cell_coordinates(const FeatureBank& bank, const Observation& obs) {
  Vector v(bank.face_features.cols() + bank.trait_features.cols());
  v << bank.face_features.row(obs.face_id).transpose(),
      bank.trait_features.row(obs.trait_id).transpose();
  return v;
}

}  // namespace

PoolPartition init_pool(const RatingsTable& table, int init_pool_size, std::uint64_t seed) {
  const int n = static_cast<int>(table.size());
  if (init_pool_size < 1 || init_pool_size > n)
    throw std::invalid_argument("init pool size must lie in [1, N]");

  std::vector<int> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;

  Rng rng(seed);
  for (int i = 0; i < init_pool_size; ++i) {
    const int j = i + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n - i)));
    std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
  }

  PoolPartition part;
  part.known.assign(ids.begin(), ids.begin() + init_pool_size);
  part.candidates.assign(ids.begin() + init_pool_size, ids.end());
  std::sort(part.known.begin(), part.known.end());
  std::sort(part.candidates.begin(), part.candidates.end());
  return part;
}

BatchSelection select_uncertainty_batch(const std::vector<double>& scores,
                                        const std::vector<int>& candidates, int p,
                                        const RatingsTable& table, bool distinct_cells) {
  BatchSelection sel;
  if (p >= static_cast<int>(candidates.size())) {
    sel.exhausted = p > static_cast<int>(candidates.size());
    p = static_cast<int>(candidates.size());
  }

  std::vector<int> order = candidates;
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double sa = scores[static_cast<std::size_t>(a)];
    const double sb = scores[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    return a < b;
  });

  if (!distinct_cells) {
    sel.ids.assign(order.begin(), order.begin() + p);
    return sel;
  }

  const auto idx = obs_index(table);
  std::vector<char> taken(order.size(), 0);
  std::set<std::pair<int, int>> used_cells;
  // first pass: one observation per cell
  for (std::size_t i = 0; i < order.size() && static_cast<int>(sel.ids.size()) < p; ++i) {
    const auto& obs = table.observations[static_cast<std::size_t>(idx[static_cast<std::size_t>(order[i])])];
    if (used_cells.insert({obs.face_id, obs.trait_id}).second) {
      sel.ids.push_back(order[i]);
      taken[i] = 1;
    }
  }
  // second pass: admit duplicates once distinct cells are exhausted
  for (std::size_t i = 0; i < order.size() && static_cast<int>(sel.ids.size()) < p; ++i) {
    if (!taken[i]) sel.ids.push_back(order[i]);
  }
  return sel;
}

double pair_distance(const Vector& face_a, const Vector& trait_a,
                     const Vector& face_b, const Vector& trait_b) {
  if (face_a.size() != face_b.size() || trait_a.size() != trait_b.size())
    throw std::invalid_argument("pair_distance dimension mismatch");
  return std::sqrt((face_a - face_b).squaredNorm() + (trait_a - trait_b).squaredNorm());
}

Matrix zscore_columns(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double mean = m.col(c).mean();
    out.col(c).array() -= mean;
    const double sd = (m.rows() > 1)
                          ? std::sqrt(out.col(c).squaredNorm() / static_cast<double>(m.rows() - 1))
                          : 0.0;
    if (sd > 0.0) out.col(c) /= sd;
  }
  return out;
}

BatchSelection select_kcenter_batch(const FeatureBank& bank, const RatingsTable& table,
                                    const std::vector<int>& known,
                                    const std::vector<int>& candidates, int p) {
  if (known.empty()) throw std::invalid_argument("known pool must be non-empty");
  BatchSelection sel;
  if (p >= static_cast<int>(candidates.size())) {
    sel.exhausted = p > static_cast<int>(candidates.size());
    p = static_cast<int>(candidates.size());
  }

  const auto idx = obs_index(table);
  auto coords = [&](int obs_id) {
    return cell_coordinates(bank, table.observations[static_cast<std::size_t>(idx[static_cast<std::size_t>(obs_id)])]);
  };

  // candidate coordinates and min distance to the existing centers
  std::vector<Vector> cand_coords;
  cand_coords.reserve(candidates.size());
  for (int id : candidates) cand_coords.push_back(coords(id));

  std::vector<double> min_dist(candidates.size(), std::numeric_limits<double>::infinity());
  for (int k : known) {
    const Vector kc = coords(k);
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const double d = (cand_coords[i] - kc).norm();
      if (d < min_dist[i]) min_dist[i] = d;
    }
  }

  std::vector<char> chosen(candidates.size(), 0);
  for (int round = 0; round < p; ++round) {
    int best = -1;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (chosen[i]) continue;
      if (best < 0 || min_dist[i] > min_dist[static_cast<std::size_t>(best)] ||
          (min_dist[i] == min_dist[static_cast<std::size_t>(best)] &&
           candidates[i] < candidates[static_cast<std::size_t>(best)]))
        best = static_cast<int>(i);
    }
    chosen[static_cast<std::size_t>(best)] = 1;
    sel.ids.push_back(candidates[static_cast<std::size_t>(best)]);
    const Vector& bc = cand_coords[static_cast<std::size_t>(best)];
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (chosen[i]) continue;
      const double d = (cand_coords[i] - bc).norm();
      if (d < min_dist[i]) min_dist[i] = d;
    }
  }
  return sel;
}

double coverage_radius(const std::vector<int>& centers, const std::vector<int>& all_points,
                       const FeatureBank& bank, const RatingsTable& table) {
  if (centers.empty()) throw std::domain_error("coverage_radius requires at least one center");
  const auto idx = obs_index(table);
  auto coords = [&](int obs_id) {
    return cell_coordinates(bank, table.observations[static_cast<std::size_t>(idx[static_cast<std::size_t>(obs_id)])]);
  };
  std::vector<Vector> center_coords;
  center_coords.reserve(centers.size());
  for (int c : centers) center_coords.push_back(coords(c));

  double radius = 0.0;
  for (int pt : all_points) {
    const Vector pc = coords(pt);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& cc : center_coords) best = std::min(best, (pc - cc).norm());
    radius = std::max(radius, best);
  }
  return radius;
}

BatchSelection select_passive_batch(const std::vector<int>& candidates, int p, Rng& rng) {
  BatchSelection sel;
  if (p >= static_cast<int>(candidates.size())) {
    sel.exhausted = p > static_cast<int>(candidates.size());
    p = static_cast<int>(candidates.size());
  }
  std::vector<int> pool = candidates;
  for (int i = 0; i < p; ++i) {
    const int j = i + static_cast<int>(rng.uniform_int(pool.size() - static_cast<std::size_t>(i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    sel.ids.push_back(pool[static_cast<std::size_t>(i)]);
  }
  return sel;
}

ActiveResult run_active_loop(const RatingsTable& table, const FeatureBank& bank,
                             const Hyperparams& hyper, const StrategyConfig& strategy,
                             const ChainConfig& chain, std::optional<int> schedule_option) {
  strategy.validate();
  chain.validate();
  hyper.validate();

  const auto idx = obs_index(table);

  // distinct cells, with obs -> cell index
  std::map<std::pair<int, int>, int> cell_index;
  std::vector<std::pair<int, int>> cells;
  std::vector<int> cell_of_obs(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& obs = table.observations[i];
    const std::pair<int, int> cell{obs.face_id, obs.trait_id};
    auto [it, inserted] = cell_index.try_emplace(cell, static_cast<int>(cells.size()));
    if (inserted) cells.push_back(cell);
    cell_of_obs[static_cast<std::size_t>(obs.obs_id)] = it->second;
  }

  // k-center distances use a (possibly z-scored) copy of the banks
  FeatureBank distance_bank;
  if (strategy.kind == StrategyKind::kcenter) {
    distance_bank.face_features =
        strategy.normalize_features ? zscore_columns(bank.face_features) : bank.face_features;
    distance_bank.trait_features =
        strategy.normalize_features ? zscore_columns(bank.trait_features) : bank.trait_features;
  }

  ActiveResult res;
  PoolPartition part = init_pool(table, strategy.init_pool_size, strategy.seed);

  std::optional<PosteriorBundle> bundle;
  std::vector<CellSummary> summaries;

  for (int q = 0;; ++q) {
    const auto t0 = std::chrono::steady_clock::now();

    int warmup = chain.warmup;
    int samples = chain.samples;
    if (schedule_option) std::tie(warmup, samples) = chain_schedule(*schedule_option, q + 1);

    ChainConfig cfg = chain;
    cfg.warmup = warmup;
    cfg.samples = samples;
    cfg.seed = mix_seed(chain.seed, static_cast<std::uint64_t>(q), 0);

    const ModelState init_state =
        (chain.warm_start && bundle)
            ? bundle->final_state
            : draw_from_priors(hyper, static_cast<int>(bank.face_features.cols()),
                               static_cast<int>(bank.trait_features.cols()),
                               mix_seed(chain.seed, static_cast<std::uint64_t>(q), 1));

    RatingsTable known_table;
    known_table.observations.reserve(part.known.size());
    for (int id : part.known)
      known_table.observations.push_back(table.observations[static_cast<std::size_t>(idx[static_cast<std::size_t>(id)])]);

    bundle = run_chain(init_state, known_table, bank, hyper, cfg);
    summaries = aggregate_predictions(*bundle, bank, cells, cfg.aggregation_window);

    // test RMSE over never-queried observations
    double rmse = std::numeric_limits<double>::quiet_NaN();
    if (!part.candidates.empty()) {
      double sq = 0.0;
      for (int id : part.candidates) {
        const auto& obs = table.observations[static_cast<std::size_t>(idx[static_cast<std::size_t>(id)])];
        const double diff = obs.rating - summaries[static_cast<std::size_t>(cell_of_obs[static_cast<std::size_t>(id)])].mean_r_hat;
        sq += diff * diff;
      }
      rmse = std::sqrt(sq / static_cast<double>(part.candidates.size()));
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.trace.rows.push_back({q, static_cast<int>(part.known.size()), rmse, warmup, samples,
                              elapsed, to_string(strategy.kind)});

    if (q == strategy.budget) break;
    if (part.candidates.empty()) {
      res.trace.exhausted = true;
      break;
    }

    BatchSelection sel;
    switch (strategy.kind) {
      case StrategyKind::uncertainty: {
        std::vector<double> scores(table.size(), 0.0);
        for (std::size_t i = 0; i < table.size(); ++i)
          scores[i] = summaries[static_cast<std::size_t>(cell_of_obs[i])].std_r_star;
        sel = select_uncertainty_batch(scores, part.candidates, strategy.batch_size, table,
                                       strategy.distinct_cells);
        break;
      }
      case StrategyKind::kcenter:
        sel = select_kcenter_batch(distance_bank, table, part.known, part.candidates,
                                   strategy.batch_size);
        break;
      case StrategyKind::passive: {
        Rng rng(mix_seed(strategy.seed, static_cast<std::uint64_t>(q), 2));
        sel = select_passive_batch(part.candidates, strategy.batch_size, rng);
        break;
      }
    }
    if (sel.exhausted) res.trace.exhausted = true;

    for (int id : sel.ids) {
      part.known.insert(std::lower_bound(part.known.begin(), part.known.end(), id), id);
      part.candidates.erase(std::lower_bound(part.candidates.begin(), part.candidates.end(), id));
    }
  }

  for (std::size_t c = 0; c < cells.size(); ++c)
    res.final_predictions[cells[c]] = summaries[c].mean_r_hat;
  res.final_partition = std::move(part);
  return res;
}

}  // namespace bpmf
