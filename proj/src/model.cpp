#include "bpmf/model.hpp"

#include <cmath>
#include <stdexcept>

namespace bpmf {

namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void check_state(const ModelState& state, const FeatureBank& bank) {
  if (state.weights_face.cols() != bank.face_features.cols())
    throw std::invalid_argument("weights_face columns do not match face feature dimension");
  if (state.weights_trait.cols() != bank.trait_features.cols())
    throw std::invalid_argument("weights_trait columns do not match trait feature dimension");
  if (state.weights_face.rows() != state.weights_trait.rows())
    throw std::invalid_argument("weights_face and weights_trait latent dimensions differ");
  if (!(state.sigma > 0.0) || !(state.theta > 0.0))
    throw std::domain_error("precisions must be strictly positive");
}

}  // namespace

Vector latent_embed(const Vector& feature_row, const Matrix& weights) {
  if (feature_row.size() != weights.cols())
    throw std::invalid_argument("feature row length does not match weight columns");
  return weights * feature_row;
}

CellPrediction predict_cell(const ModelState& state, const FeatureBank& bank,
                            int face_id, int trait_id) {
  if (face_id < 0 || face_id >= bank.face_features.rows())
    throw std::out_of_range("face_id out of range");
  if (trait_id < 0 || trait_id >= bank.trait_features.rows())
    throw std::out_of_range("trait_id out of range");
  const Vector fe = latent_embed(bank.face_features.row(face_id).transpose(), state.weights_face);
  const Vector te = latent_embed(bank.trait_features.row(trait_id).transpose(), state.weights_trait);
  const double r_star = fe.dot(te);
  return {r_star, 100.0 * sigmoid(r_star)};
}

double logit_transform(double rating, double delta) {
  if (!(rating > 0.0 && rating < 100.0))
    throw std::domain_error("rating must lie strictly inside (0, 100)");
  double p = rating / 100.0;
  if (p < delta) p = delta;
  if (p > 1.0 - delta) p = 1.0 - delta;
  return std::log(p / (1.0 - p));
}

double inverse_logit(double y) { return 100.0 * sigmoid(y); }

PreparedTable PreparedTable::from(const RatingsTable& table, double delta) {
  PreparedTable out;
  const auto n = table.observations.size();
  out.face_ids.reserve(n);
  out.trait_ids.reserve(n);
  out.targets.resize(static_cast<Eigen::Index>(n));
  Eigen::Index i = 0;
  for (const auto& obs : table.observations) {
    out.face_ids.push_back(obs.face_id);
    out.trait_ids.push_back(obs.trait_id);
    out.targets[i++] = logit_transform(obs.rating, delta);
  }
  return out;
}

double log_posterior(const ModelState& state, const PreparedTable& prepared,
                     const FeatureBank& bank, const Hyperparams& hyper) {
  check_state(state, bank);
  const double tau = hyper.noise_precision;

  // embeddings of every entity row: K x N_f, K x N_t
  const Matrix face_embed = state.weights_face * bank.face_features.transpose();
  const Matrix trait_embed = state.weights_trait * bank.trait_features.transpose();

  double lp = 0.0;
  for (std::size_t n = 0; n < prepared.size(); ++n) {
    const double r_star = face_embed.col(prepared.face_ids[n]).dot(trait_embed.col(prepared.trait_ids[n]));
    const double resid = prepared.targets[static_cast<Eigen::Index>(n)] - r_star;
    lp += 0.5 * std::log(tau) - 0.5 * tau * resid * resid;
  }

  const double nf = static_cast<double>(state.weights_face.size());
  const double nt = static_cast<double>(state.weights_trait.size());
  lp += 0.5 * nf * std::log(state.sigma) - 0.5 * state.sigma * state.weights_face.squaredNorm();
  lp += 0.5 * nt * std::log(state.theta) - 0.5 * state.theta * state.weights_trait.squaredNorm();
  lp += (hyper.gamma_shape - 1.0) * std::log(state.sigma) - hyper.gamma_rate * state.sigma;
  lp += (hyper.gamma_shape - 1.0) * std::log(state.theta) - hyper.gamma_rate * state.theta;
  return lp;
}

double log_posterior(const ModelState& state, const RatingsTable& table,
                     const FeatureBank& bank, const Hyperparams& hyper) {
  return log_posterior(state, PreparedTable::from(table, hyper.logit_clamp), bank, hyper);
}

double log_posterior_unconstrained(const ModelState& state, const PreparedTable& prepared,
                                   const FeatureBank& bank, const Hyperparams& hyper) {
  return log_posterior(state, prepared, bank, hyper) + std::log(state.sigma) + std::log(state.theta);
}

PosteriorGradient grad_log_posterior(const ModelState& state, const PreparedTable& prepared,
                                     const FeatureBank& bank, const Hyperparams& hyper) {
  check_state(state, bank);
  const double tau = hyper.noise_precision;

  const Matrix face_embed = state.weights_face * bank.face_features.transpose();
  const Matrix trait_embed = state.weights_trait * bank.trait_features.transpose();

  // Likelihood gradient accumulated per entity, then pushed through the
  // feature matrices: dL/dW_F = A * F with A.col(j) the summed tau*resid*T_h
  // over observations of face j.
  Matrix acc_face = Matrix::Zero(state.weights_face.rows(), bank.face_features.rows());
  Matrix acc_trait = Matrix::Zero(state.weights_trait.rows(), bank.trait_features.rows());
  for (std::size_t n = 0; n < prepared.size(); ++n) {
    const int j = prepared.face_ids[n];
    const int h = prepared.trait_ids[n];
    const double resid = prepared.targets[static_cast<Eigen::Index>(n)] -
                         face_embed.col(j).dot(trait_embed.col(h));
    acc_face.col(j) += tau * resid * trait_embed.col(h);
    acc_trait.col(h) += tau * resid * face_embed.col(j);
  }

  PosteriorGradient g;
  g.weights_face = acc_face * bank.face_features - state.sigma * state.weights_face;
  g.weights_trait = acc_trait * bank.trait_features - state.theta * state.weights_trait;

  const double nf = static_cast<double>(state.weights_face.size());
  const double nt = static_cast<double>(state.weights_trait.size());
  // Gamma(a,b) prior plus the +log(precision) Jacobian term folds (a-1)+1 into a.
  g.log_sigma = 0.5 * nf + hyper.gamma_shape -
                state.sigma * (0.5 * state.weights_face.squaredNorm() + hyper.gamma_rate);
  g.log_theta = 0.5 * nt + hyper.gamma_shape -
                state.theta * (0.5 * state.weights_trait.squaredNorm() + hyper.gamma_rate);
  return g;
}

PosteriorGradient grad_log_posterior(const ModelState& state, const RatingsTable& table,
                                     const FeatureBank& bank, const Hyperparams& hyper) {
  return grad_log_posterior(state, PreparedTable::from(table, hyper.logit_clamp), bank, hyper);
}

}  // namespace bpmf
