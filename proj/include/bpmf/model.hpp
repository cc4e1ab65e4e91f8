#ifndef BPMF_MODEL_HPP
#define BPMF_MODEL_HPP

#include "bpmf/types.hpp"

namespace bpmf {

// weights applied to a single feature row; K x D times D -> K
Vector latent_embed(const Vector& feature_row, const Matrix& weights);

struct CellPrediction {
  double r_star;  // latent-scale score, unbounded
  double r_hat;   // 100 * sigmoid(r_star), in (0, 100)
};

// Deterministic prediction for one (face, trait) cell; excludes the noise term.
CellPrediction predict_cell(const ModelState& state, const FeatureBank& bank,
                            int face_id, int trait_id);

// Maps a rating in (0, 100) onto the latent scale: logit(clamp(r/100, d, 1-d)).
double logit_transform(double rating, double delta);
// 100 * sigmoid(y); inverse of logit_transform inside the unclamped band.
double inverse_logit(double y);

// Observation data pre-transformed for repeated posterior evaluation.
struct PreparedTable {
  std::vector<int> face_ids;
  std::vector<int> trait_ids;
  Vector targets;  // logit-transformed ratings

  static PreparedTable from(const RatingsTable& table, double delta);
  std::size_t size() const { return face_ids.size(); }
};

// Log posterior up to additive constants independent of state:
// Gaussian likelihood of the logit-scale targets around r_star (precision tau),
// isotropic Gaussian priors on the weight matrices (precisions sigma, theta)
// with their (K*D/2)*log(precision) terms, and Gamma(a, b) priors on sigma
// and theta.
double log_posterior(const ModelState& state, const PreparedTable& prepared,
                     const FeatureBank& bank, const Hyperparams& hyper);
double log_posterior(const ModelState& state, const RatingsTable& table,
                     const FeatureBank& bank, const Hyperparams& hyper);

// log_posterior plus the log-Jacobian of the (sigma, theta) -> (log sigma,
// log theta) reparameterization. This is the density the sampler targets in
// unconstrained coordinates, and what grad_log_posterior differentiates.
double log_posterior_unconstrained(const ModelState& state, const PreparedTable& prepared,
                                   const FeatureBank& bank, const Hyperparams& hyper);

struct PosteriorGradient {
  Matrix weights_face;   // d/dW_F
  Matrix weights_trait;  // d/dW_T
  double log_sigma;      // d/d(log sigma), Jacobian term included
  double log_theta;      // d/d(log theta)
};

PosteriorGradient grad_log_posterior(const ModelState& state, const PreparedTable& prepared,
                                     const FeatureBank& bank, const Hyperparams& hyper);
PosteriorGradient grad_log_posterior(const ModelState& state, const RatingsTable& table,
                                     const FeatureBank& bank, const Hyperparams& hyper);

}  // namespace bpmf

#endif  // BPMF_MODEL_HPP
