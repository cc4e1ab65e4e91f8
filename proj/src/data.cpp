#include "bpmf/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "bpmf/model.hpp"
#include "bpmf/rng.hpp"

namespace bpmf {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("could not parse " + what + " from '" + s + "'");
  }
  if (pos != s.size()) throw std::runtime_error("trailing characters in " + what + ": '" + s + "'");
  return v;
}

std::int64_t parse_int(const std::string& s, const std::string& what) {
  std::size_t pos = 0;
  std::int64_t v;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("could not parse " + what + " from '" + s + "'");
  }
  if (pos != s.size()) throw std::runtime_error("trailing characters in " + what + ": '" + s + "'");
  return v;
}

void format_double(std::string& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  out += buf;
}

}  // namespace

RatingsLoadResult load_ratings(const std::string& path, double delta) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ratings file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty ratings file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "obs_id,participant_id,face_id,trait_id,rating")
    throw std::runtime_error("ratings header mismatch, expected "
                             "'obs_id,participant_id,face_id,trait_id,rating', got '" + line + "'");

  RatingsLoadResult res;
  std::unordered_set<std::int64_t> seen;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 5)
      throw std::runtime_error("ratings row has " + std::to_string(fields.size()) +
                               " columns, expected 5: '" + line + "'");
    Observation obs;
    obs.obs_id = parse_int(fields[0], "obs_id");
    obs.participant_id = parse_int(fields[1], "participant_id");
    obs.face_id = static_cast<int>(parse_int(fields[2], "face_id"));
    obs.trait_id = static_cast<int>(parse_int(fields[3], "trait_id"));
    obs.rating = parse_double(fields[4], "rating");

    if (!seen.insert(obs.obs_id).second)
      throw std::runtime_error("duplicate obs_id " + std::to_string(obs.obs_id));
    if (!std::isfinite(obs.rating) || obs.rating < 0.0 || obs.rating > 100.0)
      throw std::runtime_error("rating " + fields[4] + " outside [0, 100] at obs_id " +
                               std::to_string(obs.obs_id));
    if (obs.rating == 0.0) {
      obs.rating = 100.0 * delta;
      ++res.clamp_count;
    } else if (obs.rating == 100.0) {
      obs.rating = 100.0 * (1.0 - delta);
      ++res.clamp_count;
    }
    res.table.observations.push_back(obs);
  }

  const auto n = static_cast<std::int64_t>(res.table.size());
  for (const auto& obs : res.table.observations)
    if (obs.obs_id < 0 || obs.obs_id >= n)
      throw std::runtime_error("obs_id " + std::to_string(obs.obs_id) + " not dense in [0, " +
                               std::to_string(n) + ")");
  return res;
}

void write_ratings(const std::string& path, const RatingsTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "obs_id,participant_id,face_id,trait_id,rating\n";
  std::string line;
  for (const auto& obs : table.observations) {
    line.clear();
    line += std::to_string(obs.obs_id);
    line += ',';
    line += std::to_string(obs.participant_id);
    line += ',';
    line += std::to_string(obs.face_id);
    line += ',';
    line += std::to_string(obs.trait_id);
    line += ',';
    format_double(line, obs.rating);
    line += '\n';
    out << line;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Matrix load_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature file: " + path);

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) {
      const double v = parse_double(f, "feature value");
      if (!std::isfinite(v))
        throw std::runtime_error("non-finite feature value '" + f + "' in " + path);
      row.push_back(v);
    }
    if (rows.empty()) {
      width = row.size();
    } else if (row.size() != width) {
      throw std::runtime_error("ragged feature row (got " + std::to_string(row.size()) +
                               " values, expected " + std::to_string(width) + ") in " + path);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("empty feature file: " + path);

  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < width; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

void write_features(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  std::string line;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    line.clear();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) line += ',';
      format_double(line, m(i, j));
    }
    line += '\n';
    out << line;
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void SyntheticConfig::validate() const {
  if (n_faces < 1 || n_traits < 1 || feat_dim_face < 1 || feat_dim_trait < 1 ||
      true_latent_dim < 1 || ratings_per_cell < 1)
    throw std::invalid_argument("synthetic config counts must be >= 1");
  if (noise_precision <= 0.0) throw std::invalid_argument("noise_precision must be > 0");
  if (signal_scale <= 0.0) throw std::invalid_argument("signal_scale must be > 0");
}

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);

  SyntheticData data;
  auto fill_normal = [&](Matrix& m, int rows, int cols) {
    m.resize(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  };
  fill_normal(data.bank.face_features, cfg.n_faces, cfg.feat_dim_face);
  fill_normal(data.bank.trait_features, cfg.n_traits, cfg.feat_dim_trait);
  fill_normal(data.true_weights_face, cfg.true_latent_dim, cfg.feat_dim_face);
  fill_normal(data.true_weights_trait, cfg.true_latent_dim, cfg.feat_dim_trait);
  // scale so r_star has roughly unit variance and stays clear of logit saturation
  const double k_root = std::sqrt(std::sqrt(static_cast<double>(cfg.true_latent_dim)));
  const double scale_root = std::sqrt(cfg.signal_scale);
  data.true_weights_face *= scale_root / (std::sqrt(static_cast<double>(cfg.feat_dim_face)) * k_root);
  data.true_weights_trait *= scale_root / (std::sqrt(static_cast<double>(cfg.feat_dim_trait)) * k_root);

  const Matrix face_embed = data.true_weights_face * data.bank.face_features.transpose();
  const Matrix trait_embed = data.true_weights_trait * data.bank.trait_features.transpose();
  const double noise_sd = 1.0 / std::sqrt(cfg.noise_precision);

  std::int64_t next_id = 0;
  for (int j = 0; j < cfg.n_faces; ++j) {
    for (int h = 0; h < cfg.n_traits; ++h) {
      const double r_star = face_embed.col(j).dot(trait_embed.col(h));
      for (int rep = 0; rep < cfg.ratings_per_cell; ++rep) {
        double rating = inverse_logit(r_star + noise_sd * rng.normal());
        rating = std::min(std::max(rating, 1e-9), 100.0 - 1e-9);
        data.table.observations.push_back({next_id++, rep, j, h, rating});
      }
    }
  }
  return data;
}

RatingsTable subset_sample(const RatingsTable& table, int n_faces, int n_traits, int per_cell,
                           std::uint64_t seed) {
  std::set<int> faces_present, traits_present;
  for (const auto& obs : table.observations) {
    faces_present.insert(obs.face_id);
    traits_present.insert(obs.trait_id);
  }
  if (n_faces > static_cast<int>(faces_present.size()) ||
      n_traits > static_cast<int>(traits_present.size()))
    throw std::runtime_error("subset requests more entities than present in the table");

  Rng rng(seed);
  auto pick = [&](const std::set<int>& pool, int count) {
    std::vector<int> ids(pool.begin(), pool.end());
    for (int i = 0; i < count; ++i) {
      const int j = i + static_cast<int>(rng.uniform_int(ids.size() - static_cast<std::size_t>(i)));
      std::swap(ids[static_cast<std::size_t>(i)], ids[static_cast<std::size_t>(j)]);
    }
    ids.resize(static_cast<std::size_t>(count));
    std::sort(ids.begin(), ids.end());
    return ids;
  };
  const std::vector<int> faces = pick(faces_present, n_faces);
  const std::vector<int> traits = pick(traits_present, n_traits);

  std::map<std::pair<int, int>, std::vector<std::size_t>> by_cell;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& obs = table.observations[i];
    if (std::binary_search(faces.begin(), faces.end(), obs.face_id) &&
        std::binary_search(traits.begin(), traits.end(), obs.trait_id))
      by_cell[{obs.face_id, obs.trait_id}].push_back(i);
  }

  RatingsTable out;
  for (int f : faces) {
    for (int t : traits) {
      auto it = by_cell.find({f, t});
      const int avail = (it == by_cell.end()) ? 0 : static_cast<int>(it->second.size());
      if (avail < per_cell)
        throw std::runtime_error("cell (" + std::to_string(f) + ", " + std::to_string(t) +
                                 ") has only " + std::to_string(avail) + " observations, need " +
                                 std::to_string(per_cell));
      auto& pool = it->second;
      std::sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
        return table.observations[a].obs_id < table.observations[b].obs_id;
      });
      for (int i = 0; i < per_cell; ++i) {
        const int j = i + static_cast<int>(rng.uniform_int(pool.size() - static_cast<std::size_t>(i)));
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
      }
      std::vector<std::size_t> chosen(pool.begin(), pool.begin() + per_cell);
      std::sort(chosen.begin(), chosen.end(), [&](std::size_t a, std::size_t b) {
        return table.observations[a].obs_id < table.observations[b].obs_id;
      });
      for (std::size_t i : chosen) {
        Observation obs = table.observations[i];
        obs.obs_id = static_cast<std::int64_t>(out.size());
        out.observations.push_back(obs);
      }
    }
  }
  return out;
}

ReduceMethod reduce_method_from_string(const std::string& s) {
  if (s == "pca") return ReduceMethod::pca;
  if (s == "random_projection") return ReduceMethod::random_projection;
  throw std::invalid_argument("unknown reduce method: " + s);
}

Matrix reduce_features(const Matrix& m, int target_dim, ReduceMethod method, std::uint64_t seed) {
  if (target_dim < 1 || target_dim > m.cols())
    throw std::invalid_argument("target_dim must lie in [1, D]");

  if (method == ReduceMethod::random_projection) {
    Rng rng(seed);
    Matrix proj(m.cols(), target_dim);
    for (Eigen::Index i = 0; i < proj.size(); ++i) proj.data()[i] = rng.normal();
    return m * proj / std::sqrt(static_cast<double>(target_dim));
  }

  const Matrix centered = m.rowwise() - m.colwise().mean();
  const double denom = (m.rows() > 1) ? static_cast<double>(m.rows() - 1) : 1.0;
  const Matrix cov = centered.transpose() * centered / denom;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");

  // eigenvalues come out ascending; take the top components in descending order
  Matrix basis(m.cols(), target_dim);
  for (int c = 0; c < target_dim; ++c) {
    Vector v = eig.eigenvectors().col(m.cols() - 1 - c);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v[imax] < 0.0) v = -v;
    basis.col(c) = v;
  }
  return centered * basis;
}

}  // namespace bpmf
