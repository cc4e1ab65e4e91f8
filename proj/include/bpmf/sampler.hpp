#ifndef BPMF_SAMPLER_HPP
#define BPMF_SAMPLER_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "bpmf/model.hpp"
#include "bpmf/types.hpp"

namespace bpmf {

struct ChainConfig {
  int warmup = 0;                  // W, step-size adaptation happens here
  int samples = 1;                 // S, recorded draws
  int leapfrog_steps = 20;
  double initial_step_size = 0.01;
  double target_accept = 0.75;
  int aggregation_window = 10;     // M, trailing draws used for prediction
  bool warm_start = true;
  std::uint64_t seed = 0;
  // Blocks excluded from sampling stay at their init values. Used for
  // conditional-posterior calibration.
  bool sample_trait_weights = true;
  bool sample_precisions = true;

  void validate() const;  // throws std::invalid_argument
};

struct PosteriorBundle {
  std::vector<ModelState> draws;  // length S, warmup states excluded
  double accept_rate = 0.0;       // over the post-warmup iterations
  double final_step_size = 0.0;
  ModelState final_state;
};

// Fresh draw from the priors: sigma, theta ~ Gamma(a, b), weights ~ N(0, 1/prec).
ModelState draw_from_priors(const Hyperparams& hyper, int feat_dim_face, int feat_dim_trait,
                            std::uint64_t seed);

// Leapfrog-integrated Metropolis-corrected chain over {W_F, W_T, log sigma,
// log theta}. Fully deterministic given config.seed.
PosteriorBundle run_chain(const ModelState& init, const RatingsTable& table,
                          const FeatureBank& bank, const Hyperparams& hyper,
                          const ChainConfig& config);

struct CellSummary {
  double mean_r_hat;  // average predicted rating over the window
  double std_r_star;  // epistemic spread on the latent scale (n-1 divisor)
};

// Summaries over the last min(M, S) draws of the bundle.
std::vector<CellSummary> aggregate_predictions(const PosteriorBundle& bundle,
                                               const FeatureBank& bank,
                                               const std::vector<std::pair<int, int>>& cells,
                                               int window);

// Warmup/sample counts for the three chain-growth options:
// 1 -> (3k, 5k), 2 -> (0, 5k), 3 -> (5k, 5).
std::pair<int, int> chain_schedule(int option, int k);

}  // namespace bpmf

#endif  // BPMF_SAMPLER_HPP
