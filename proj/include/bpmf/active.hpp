#ifndef BPMF_ACTIVE_HPP
#define BPMF_ACTIVE_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bpmf/rng.hpp"
#include "bpmf/sampler.hpp"
#include "bpmf/types.hpp"

namespace bpmf {

// Training pool / candidate split over obs ids. Candidates double as the
// test set: RMSE is always computed on never-queried observations.
struct PoolPartition {
  std::vector<int> known;       // sorted obs ids
  std::vector<int> candidates;  // sorted obs ids
};

enum class StrategyKind { uncertainty, kcenter, passive };

std::string to_string(StrategyKind kind);
StrategyKind strategy_kind_from_string(const std::string& s);

struct StrategyConfig {
  StrategyKind kind = StrategyKind::uncertainty;
  int batch_size = 8;            // p
  int budget = 0;                // Q
  int init_pool_size = 8;        // L
  bool distinct_cells = false;
  bool normalize_features = true;  // z-score banks before k-center distances
  std::uint64_t seed = 0;

  void validate() const;
};

struct TraceRow {
  int iteration = 0;  // q
  int train_size = 0;
  double test_rmse = 0.0;
  int chain_warmup = 0;
  int chain_samples = 0;
  double wallclock_seconds = 0.0;
  std::string strategy_kind;
};

struct ActiveTrace {
  std::vector<TraceRow> rows;
  bool exhausted = false;  // candidate pool ran out before the budget
};

// Uniform random L-subset of the observations, deterministic given seed.
PoolPartition init_pool(const RatingsTable& table, int init_pool_size, std::uint64_t seed);

struct BatchSelection {
  std::vector<int> ids;   // in selection order
  bool exhausted = false; // p exceeded the candidate count
};

// Top-p candidates by score (std_r_star of their cell); ties broken by
// smallest obs_id. With distinct_cells, one observation per cell is taken
// before duplicates are admitted. scores is indexed by obs_id.
BatchSelection select_uncertainty_batch(const std::vector<double>& scores,
                                        const std::vector<int>& candidates, int p,
                                        const RatingsTable& table, bool distinct_cells);

// Euclidean distance of the concatenated (face, trait) feature pair.
double pair_distance(const Vector& face_a, const Vector& trait_a,
                     const Vector& face_b, const Vector& trait_b);

// Column-wise z-score; constant columns are left centered at zero.
Matrix zscore_columns(const Matrix& m);

// Greedy farthest-point selection with the known pool acting as pre-existing
// centers. Expects bank already normalized if desired.
BatchSelection select_kcenter_batch(const FeatureBank& bank, const RatingsTable& table,
                                    const std::vector<int>& known,
                                    const std::vector<int>& candidates, int p);

// k-center objective: max over all points of the min distance to any center.
double coverage_radius(const std::vector<int>& centers, const std::vector<int>& all_points,
                       const FeatureBank& bank, const RatingsTable& table);

BatchSelection select_passive_batch(const std::vector<int>& candidates, int p, Rng& rng);

struct ActiveResult {
  ActiveTrace trace;
  std::map<std::pair<int, int>, double> final_predictions;  // cell -> mean_r_hat
  PoolPartition final_partition;
};

// Budgeted loop: fit, predict, record test RMSE, query a batch, repeat.
// schedule_option, when set, derives (warmup, samples) per iteration from
// chain_schedule(option, q + 1) instead of the fixed chain config.
ActiveResult run_active_loop(const RatingsTable& table, const FeatureBank& bank,
                             const Hyperparams& hyper, const StrategyConfig& strategy,
                             const ChainConfig& chain, std::optional<int> schedule_option = {});

}  // namespace bpmf

#endif  // BPMF_ACTIVE_HPP
