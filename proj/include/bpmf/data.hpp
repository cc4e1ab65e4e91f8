#ifndef BPMF_DATA_HPP
#define BPMF_DATA_HPP

#include <cstdint>
#include <string>

#include "bpmf/types.hpp"

namespace bpmf {

struct RatingsLoadResult {
  RatingsTable table;
  int clamp_count = 0;  // ratings at exactly 0 or 100 pulled inside (0, 100)
};

// Ratings CSV: header `obs_id,participant_id,face_id,trait_id,rating`.
// Endpoint ratings are clamped to 100*delta / 100*(1-delta).
RatingsLoadResult load_ratings(const std::string& path, double delta = 1e-3);
void write_ratings(const std::string& path, const RatingsTable& table);

// Feature CSV: no header, one entity per row, all rows equal length, finite.
Matrix load_features(const std::string& path);
void write_features(const std::string& path, const Matrix& m);

struct SyntheticConfig {
  int n_faces = 50;
  int n_traits = 10;
  int feat_dim_face = 8;
  int feat_dim_trait = 6;
  int true_latent_dim = 4;
  int ratings_per_cell = 4;
  double noise_precision = 4.0;  // tau_true
  double signal_scale = 1.0;     // sd of r_star across cells
  std::uint64_t seed = 0;
  double logit_clamp = 1e-3;

  void validate() const;
};

struct SyntheticData {
  RatingsTable table;
  FeatureBank bank;
  Matrix true_weights_face;
  Matrix true_weights_trait;
};

// Standard-normal features, unit-precision true weights, per-cell ratings
// generated as inverse_logit(r_star_true + noise). Deterministic given seed.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

// Uniformly selects n_faces x n_traits cells and per_cell observations in
// each; obs ids are re-indexed densely, entity ids are kept.
RatingsTable subset_sample(const RatingsTable& table, int n_faces, int n_traits, int per_cell,
                           std::uint64_t seed);

enum class ReduceMethod { pca, random_projection };

ReduceMethod reduce_method_from_string(const std::string& s);

// pca: projection onto the top principal components of the column-centered
// matrix, each component oriented so its largest-magnitude loading is
// positive. random_projection: seeded Gaussian matrix scaled by
// 1/sqrt(target_dim).
Matrix reduce_features(const Matrix& m, int target_dim, ReduceMethod method, std::uint64_t seed);

}  // namespace bpmf

#endif  // BPMF_DATA_HPP
