#include "bpmf/sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "bpmf/rng.hpp"

namespace bpmf {

void ChainConfig::validate() const {
  if (warmup < 0) throw std::invalid_argument("warmup must be >= 0");
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  if (leapfrog_steps < 1) throw std::invalid_argument("leapfrog_steps must be >= 1");
  if (initial_step_size <= 0.0) throw std::invalid_argument("initial_step_size must be > 0");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw std::invalid_argument("target_accept must lie in (0, 1)");
  if (aggregation_window < 1) throw std::invalid_argument("aggregation_window must be >= 1");
}

ModelState draw_from_priors(const Hyperparams& hyper, int feat_dim_face, int feat_dim_trait,
                            std::uint64_t seed) {
  Rng rng(seed);
  ModelState state;
  state.sigma = rng.gamma(hyper.gamma_shape, hyper.gamma_rate);
  state.theta = rng.gamma(hyper.gamma_shape, hyper.gamma_rate);
  const double sd_f = 1.0 / std::sqrt(state.sigma);
  const double sd_t = 1.0 / std::sqrt(state.theta);
  state.weights_face.resize(hyper.latent_dim, feat_dim_face);
  state.weights_trait.resize(hyper.latent_dim, feat_dim_trait);
  for (Eigen::Index i = 0; i < state.weights_face.size(); ++i)
    state.weights_face.data()[i] = sd_f * rng.normal();
  for (Eigen::Index i = 0; i < state.weights_trait.size(); ++i)
    state.weights_trait.data()[i] = sd_t * rng.normal();
  return state;
}

namespace {

// Maps the sampled blocks of a ModelState onto a flat coordinate vector.
// Precisions live in log space.
class Packing {
 public:
  Packing(const ModelState& init, const ChainConfig& cfg)
      : template_(init),
        with_trait_(cfg.sample_trait_weights),
        with_prec_(cfg.sample_precisions) {
    dim_ = init.weights_face.size();
    if (with_trait_) dim_ += init.weights_trait.size();
    if (with_prec_) dim_ += 2;
  }

  Eigen::Index dim() const { return dim_; }

  Vector pack(const ModelState& s) const {
    Vector q(dim_);
    Eigen::Index at = 0;
    q.segment(at, s.weights_face.size()) = Eigen::Map<const Vector>(s.weights_face.data(), s.weights_face.size());
    at += s.weights_face.size();
    if (with_trait_) {
      q.segment(at, s.weights_trait.size()) = Eigen::Map<const Vector>(s.weights_trait.data(), s.weights_trait.size());
      at += s.weights_trait.size();
    }
    if (with_prec_) {
      q[at++] = std::log(s.sigma);
      q[at++] = std::log(s.theta);
    }
    return q;
  }

  ModelState unpack(const Vector& q) const {
    ModelState s = template_;
    Eigen::Index at = 0;
    Eigen::Map<Vector>(s.weights_face.data(), s.weights_face.size()) = q.segment(at, s.weights_face.size());
    at += s.weights_face.size();
    if (with_trait_) {
      Eigen::Map<Vector>(s.weights_trait.data(), s.weights_trait.size()) = q.segment(at, s.weights_trait.size());
      at += s.weights_trait.size();
    }
    if (with_prec_) {
      s.sigma = std::exp(q[at++]);
      s.theta = std::exp(q[at++]);
    }
    return s;
  }

  Vector pack_grad(const PosteriorGradient& g) const {
    Vector v(dim_);
    Eigen::Index at = 0;
    v.segment(at, g.weights_face.size()) = Eigen::Map<const Vector>(g.weights_face.data(), g.weights_face.size());
    at += g.weights_face.size();
    if (with_trait_) {
      v.segment(at, g.weights_trait.size()) = Eigen::Map<const Vector>(g.weights_trait.data(), g.weights_trait.size());
      at += g.weights_trait.size();
    }
    if (with_prec_) {
      v[at++] = g.log_sigma;
      v[at++] = g.log_theta;
    }
    return v;
  }

 private:
  ModelState template_;
  bool with_trait_;
  bool with_prec_;
  Eigen::Index dim_ = 0;
};

}  // namespace

PosteriorBundle run_chain(const ModelState& init, const RatingsTable& table,
                          const FeatureBank& bank, const Hyperparams& hyper,
                          const ChainConfig& config) {
  config.validate();
  hyper.validate();
  const PreparedTable prepared = PreparedTable::from(table, hyper.logit_clamp);

  const Packing packing(init, config);
  // A trajectory that drives the precisions into underflow or the weights to
  // non-finite values is divergent: it is rejected rather than evaluated.
  auto unpack_valid = [&](const Vector& q, ModelState& s) {
    if (!q.allFinite()) return false;
    s = packing.unpack(q);
    return std::isfinite(s.sigma) && s.sigma > 0.0 && std::isfinite(s.theta) && s.theta > 0.0;
  };
  auto target = [&](const Vector& q) {
    return log_posterior_unconstrained(packing.unpack(q), prepared, bank, hyper);
  };
  auto gradient = [&](const ModelState& s) {
    return packing.pack_grad(grad_log_posterior(s, prepared, bank, hyper));
  };

  Vector q = packing.pack(init);
  double lp = target(q);
  if (!std::isfinite(lp))
    throw std::runtime_error("log posterior not finite at the initial state");

  Rng rng(config.seed);
  double eps = config.initial_step_size;
  const int total = config.warmup + config.samples;
  int accepted_sampling = 0;

  PosteriorBundle bundle;
  bundle.draws.reserve(static_cast<std::size_t>(config.samples));

  for (int iter = 0; iter < total; ++iter) {
    Vector p(packing.dim());
    for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = rng.normal();

    Vector q_new = q;
    Vector p_new = p;
    double lp_new = lp;

    // leapfrog
    bool diverged = false;
    ModelState s = packing.unpack(q_new);
    Vector g = gradient(s);
    p_new += 0.5 * eps * g;
    for (int step = 0; step < config.leapfrog_steps; ++step) {
      q_new += eps * p_new;
      if (!unpack_valid(q_new, s)) {
        diverged = true;
        break;
      }
      g = gradient(s);
      if (!g.allFinite()) {
        diverged = true;
        break;
      }
      if (step + 1 < config.leapfrog_steps) p_new += eps * g;
    }
    if (!diverged) {
      p_new += 0.5 * eps * g;
      lp_new = target(q_new);
    }

    double alpha = 0.0;
    if (!diverged && std::isfinite(lp_new)) {
      const double log_alpha = (lp_new - 0.5 * p_new.squaredNorm()) - (lp - 0.5 * p.squaredNorm());
      alpha = std::min(1.0, std::exp(log_alpha));
    }
    const bool accept = rng.uniform() < alpha;
    if (accept) {
      q = q_new;
      lp = lp_new;
    }

    if (iter < config.warmup) {
      eps *= (alpha > config.target_accept) ? 1.02 : 0.98;
    } else {
      if (accept) ++accepted_sampling;
      bundle.draws.push_back(packing.unpack(q));
    }
  }

  bundle.accept_rate = static_cast<double>(accepted_sampling) / config.samples;
  bundle.final_step_size = eps;
  bundle.final_state = bundle.draws.back();
  return bundle;
}

std::vector<CellSummary> aggregate_predictions(const PosteriorBundle& bundle,
                                               const FeatureBank& bank,
                                               const std::vector<std::pair<int, int>>& cells,
                                               int window) {
  if (bundle.draws.empty()) throw std::invalid_argument("bundle has no draws");
  if (window < 1) throw std::invalid_argument("aggregation window must be >= 1");

  const int s = static_cast<int>(bundle.draws.size());
  const int used = std::min(window, s);

  std::vector<double> sum_r_hat(cells.size(), 0.0);
  std::vector<double> sum_r_star(cells.size(), 0.0);
  std::vector<double> sum_r_star_sq(cells.size(), 0.0);

  for (int d = s - used; d < s; ++d) {
    const ModelState& state = bundle.draws[static_cast<std::size_t>(d)];
    const Matrix face_embed = state.weights_face * bank.face_features.transpose();
    const Matrix trait_embed = state.weights_trait * bank.trait_features.transpose();
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const double r_star = face_embed.col(cells[c].first).dot(trait_embed.col(cells[c].second));
      sum_r_hat[c] += inverse_logit(r_star);
      sum_r_star[c] += r_star;
      sum_r_star_sq[c] += r_star * r_star;
    }
  }

  std::vector<CellSummary> out(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    out[c].mean_r_hat = sum_r_hat[c] / used;
    if (used > 1) {
      const double mean = sum_r_star[c] / used;
      double var = (sum_r_star_sq[c] - used * mean * mean) / (used - 1);
      if (var < 0.0) var = 0.0;
      out[c].std_r_star = std::sqrt(var);
    } else {
      out[c].std_r_star = 0.0;
    }
  }
  return out;
}

std::pair<int, int> chain_schedule(int option, int k) {
  if (k < 1) throw std::invalid_argument("schedule index k must be >= 1");
  switch (option) {
    case 1:
      return {3 * k, 5 * k};
    case 2:
      return {0, 5 * k};
    case 3:
      return {5 * k, 5};
    default:
      throw std::invalid_argument("schedule option must be 1, 2 or 3");
  }
}

}  // namespace bpmf
