#ifndef BPMF_TYPES_HPP
#define BPMF_TYPES_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace bpmf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// One queryable rating. Multiple observations may share a (face, trait) cell.
struct Observation {
  std::int64_t obs_id = 0;
  std::int64_t participant_id = 0;  // pass-through metadata, unused by the model
  int face_id = 0;
  int trait_id = 0;
  double rating = 50.0;  // strictly inside (0, 100)
};

struct RatingsTable {
  std::vector<Observation> observations;

  std::size_t size() const { return observations.size(); }

  // Throws std::runtime_error on duplicate/non-dense obs ids, out-of-range
  // entity ids or ratings outside (0, 100).
  void validate(int n_faces, int n_traits) const;
};

// Dense side information: one feature row per face / per trait.
struct FeatureBank {
  Matrix face_features;   // N_f x D_f
  Matrix trait_features;  // N_t x D_t
};

struct Hyperparams {
  int latent_dim = 16;           // K
  double gamma_shape = 2.0;      // a, shared by the sigma and theta priors
  double gamma_rate = 2.0;       // b
  double noise_precision = 1.0;  // tau, fixed (not sampled)
  double logit_clamp = 1e-3;     // delta in (0, 0.5)

  void validate() const;  // throws std::invalid_argument
};

// One MCMC draw: the two projection matrices and the prior precisions.
struct ModelState {
  Matrix weights_face;   // K x D_f
  Matrix weights_trait;  // K x D_t
  double sigma = 1.0;    // face-weight precision, > 0
  double theta = 1.0;    // trait-weight precision, > 0
};

}  // namespace bpmf

#endif  // BPMF_TYPES_HPP
