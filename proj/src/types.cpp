#include "bpmf/types.hpp"

#include <stdexcept>
#include <string>
#include <unordered_set>

namespace bpmf {

void RatingsTable::validate(int n_faces, int n_traits) const {
  const auto n = static_cast<std::int64_t>(observations.size());
  std::unordered_set<std::int64_t> seen;
  seen.reserve(observations.size());
  for (const auto& obs : observations) {
    if (obs.obs_id < 0 || obs.obs_id >= n)
      throw std::runtime_error("obs_id " + std::to_string(obs.obs_id) +
                               " not dense in [0, " + std::to_string(n) + ")");
    if (!seen.insert(obs.obs_id).second)
      throw std::runtime_error("duplicate obs_id " + std::to_string(obs.obs_id));
    if (obs.face_id < 0 || obs.face_id >= n_faces)
      throw std::runtime_error("face_id " + std::to_string(obs.face_id) + " out of range");
    if (obs.trait_id < 0 || obs.trait_id >= n_traits)
      throw std::runtime_error("trait_id " + std::to_string(obs.trait_id) + " out of range");
    if (!(obs.rating > 0.0 && obs.rating < 100.0))
      throw std::runtime_error("rating " + std::to_string(obs.rating) +
                               " outside (0, 100) at obs_id " + std::to_string(obs.obs_id));
  }
}

void Hyperparams::validate() const {
  if (latent_dim < 1) throw std::invalid_argument("latent_dim must be >= 1");
  if (gamma_shape <= 0.0) throw std::invalid_argument("gamma_shape must be > 0");
  if (gamma_rate <= 0.0) throw std::invalid_argument("gamma_rate must be > 0");
  if (noise_precision <= 0.0) throw std::invalid_argument("noise_precision must be > 0");
  if (!(logit_clamp > 0.0 && logit_clamp < 0.5))
    throw std::invalid_argument("logit_clamp must lie in (0, 0.5)");
}

}  // namespace bpmf
