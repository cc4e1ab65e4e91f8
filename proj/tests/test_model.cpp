#include <doctest.h>

#include <cmath>

#include "bpmf/model.hpp"
#include "test_support.hpp"

using namespace bpmf;
using namespace bpmf::testing;

TEST_CASE("latent_embed basics") {
  Matrix w(2, 3);
  w << 1, 2, 3, 4, 5, 6;

  SUBCASE("zero input gives zero output") {
    const Vector out = latent_embed(Vector::Zero(3), w);
    CHECK(out.norm() == 0.0);
  }
  SUBCASE("1x1 product") {
    Matrix w1(1, 1);
    w1 << 2.0;
    Vector f(1);
    f << 1.0;
    CHECK(latent_embed(f, w1)[0] == doctest::Approx(2.0));
  }
  SUBCASE("dimension mismatch throws") {
    CHECK_THROWS_AS(latent_embed(Vector::Zero(4), w), std::invalid_argument);
  }
}

TEST_CASE("latent_embed matches a naive loop product and scales linearly") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int latent = 1 + static_cast<int>(rng.uniform_int(4));
    const int dim = 1 + static_cast<int>(rng.uniform_int(5));
    Matrix w(latent, dim);
    Vector f(dim);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = rng.normal();
    const double c = 0.1 + 3.0 * rng.uniform();

    const Vector got = latent_embed(f, w);
    const Vector got_scaled = latent_embed((c * f).eval(), w);
    for (int k = 0; k < latent; ++k) {
      double want = 0.0;
      for (int d = 0; d < dim; ++d) want += w(k, d) * f[d];
      CHECK(got[k] == doctest::Approx(want).epsilon(1e-12));
      CHECK(got_scaled[k] == doctest::Approx(c * want).epsilon(1e-12));
    }
  }
}

TEST_CASE("predict_cell") {
  FeatureBank bank;
  bank.face_features = Matrix::Ones(1, 1);
  bank.trait_features = Matrix::Ones(1, 1);
  ModelState state;
  state.weights_face = Matrix::Ones(1, 1);
  state.weights_trait = Matrix::Constant(1, 1, 2.0);

  SUBCASE("zero weights predict the midpoint") {
    state.weights_face.setZero();
    const auto pred = predict_cell(state, bank, 0, 0);
    CHECK(pred.r_star == 0.0);
    CHECK(pred.r_hat == doctest::Approx(50.0));
  }
  SUBCASE("direct sigmoid evaluation") {
    const auto pred = predict_cell(state, bank, 0, 0);
    CHECK(pred.r_star == doctest::Approx(2.0));
    CHECK(pred.r_hat == doctest::Approx(100.0 / (1.0 + std::exp(-2.0))).epsilon(1e-10));
    CHECK(pred.r_hat == doctest::Approx(88.0797).epsilon(1e-5));
  }
  SUBCASE("negating the face weights mirrors the prediction") {
    const auto pred = predict_cell(state, bank, 0, 0);
    state.weights_face = -state.weights_face;
    const auto mirrored = predict_cell(state, bank, 0, 0);
    CHECK(mirrored.r_hat == doctest::Approx(100.0 - pred.r_hat).epsilon(1e-12));
  }
  SUBCASE("invalid id throws") {
    CHECK_THROWS_AS(predict_cell(state, bank, 1, 0), std::out_of_range);
    CHECK_THROWS_AS(predict_cell(state, bank, 0, -1), std::out_of_range);
  }
}

TEST_CASE("r_hat is increasing in r_star and bounded") {
  FeatureBank bank;
  bank.face_features = Matrix::Ones(1, 1);
  bank.trait_features = Matrix::Ones(1, 1);
  ModelState state;
  state.weights_trait = Matrix::Ones(1, 1);
  double prev = 0.0;
  for (int i = 0; i < 41; ++i) {
    state.weights_face = Matrix::Constant(1, 1, -20.0 + i);
    const auto pred = predict_cell(state, bank, 0, 0);
    CHECK(pred.r_hat > 0.0);
    CHECK(pred.r_hat < 100.0);
    if (i > 0) CHECK(pred.r_hat > prev);
    prev = pred.r_hat;
  }
}

TEST_CASE("logit transform") {
  CHECK(logit_transform(50.0, 1e-3) == doctest::Approx(0.0));
  CHECK(inverse_logit(logit_transform(73.2, 1e-3)) == doctest::Approx(73.2).epsilon(1e-9));
  // 99.99 clamps to 0.999 at delta 1e-3
  CHECK(logit_transform(99.99, 1e-3) == doctest::Approx(std::log(0.999 / 0.001)).epsilon(1e-12));
  CHECK(logit_transform(99.99, 1e-3) == doctest::Approx(6.906755).epsilon(1e-6));
  CHECK_THROWS_AS(logit_transform(0.0, 1e-3), std::domain_error);
  CHECK_THROWS_AS(logit_transform(100.0, 1e-3), std::domain_error);
  CHECK_THROWS_AS(logit_transform(-5.0, 1e-3), std::domain_error);
}

TEST_CASE("log_posterior prior-only case") {
  FeatureBank bank;
  bank.face_features = Matrix::Ones(2, 3);
  bank.trait_features = Matrix::Ones(2, 2);
  Hyperparams hyper;
  hyper.latent_dim = 2;
  ModelState state;
  state.weights_face = Matrix::Zero(2, 3);
  state.weights_trait = Matrix::Zero(2, 2);
  state.sigma = 1.3;
  state.theta = 0.7;

  const RatingsTable empty;
  const double got = log_posterior(state, empty, bank, hyper);
  // zero weights: the Gaussian quadratic penalties vanish, only the
  // normalization and gamma terms remain
  const double want = 0.5 * 6 * std::log(1.3) + 0.5 * 4 * std::log(0.7) +
                      (hyper.gamma_shape - 1.0) * std::log(1.3) - hyper.gamma_rate * 1.3 +
                      (hyper.gamma_shape - 1.0) * std::log(0.7) - hyper.gamma_rate * 0.7;
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("log_posterior matches the hand-expanded scalar formula") {
  FeatureBank bank;
  bank.face_features = Matrix::Constant(1, 1, 1.5);
  bank.trait_features = Matrix::Constant(1, 1, -0.5);
  Hyperparams hyper;
  hyper.latent_dim = 1;
  hyper.noise_precision = 2.0;
  ModelState state;
  state.weights_face = Matrix::Constant(1, 1, 0.8);
  state.weights_trait = Matrix::Constant(1, 1, 1.1);
  state.sigma = 1.4;
  state.theta = 0.9;

  RatingsTable table;
  table.observations.push_back({0, 0, 0, 0, 61.0});

  const double y = std::log((61.0 / 100.0) / (1.0 - 61.0 / 100.0));
  const double r_star = (0.8 * 1.5) * (1.1 * -0.5);
  const double want = 0.5 * std::log(2.0) - 0.5 * 2.0 * (y - r_star) * (y - r_star) +
                      0.5 * std::log(1.4) - 0.5 * 1.4 * 0.8 * 0.8 +
                      0.5 * std::log(0.9) - 0.5 * 0.9 * 1.1 * 1.1 +
                      (hyper.gamma_shape - 1.0) * std::log(1.4) - hyper.gamma_rate * 1.4 +
                      (hyper.gamma_shape - 1.0) * std::log(0.9) - hyper.gamma_rate * 0.9;
  CHECK(log_posterior(state, table, bank, hyper) == doctest::Approx(want).epsilon(1e-12));

  SUBCASE("duplicating an observation adds exactly its likelihood term") {
    const double base = log_posterior(state, table, bank, hyper);
    table.observations.push_back({1, 1, 0, 0, 61.0});
    const double doubled = log_posterior(state, table, bank, hyper);
    const double lik = 0.5 * std::log(2.0) - 0.5 * 2.0 * (y - r_star) * (y - r_star);
    CHECK(doubled - base == doctest::Approx(lik).epsilon(1e-12));
  }
}

TEST_CASE("log_posterior rejects non-positive precisions") {
  auto inst = make_random_instance(3, 2, 2, 2, 3, 3, 4);
  inst.state.sigma = -1.0;
  CHECK_THROWS_AS(log_posterior(inst.state, inst.table, inst.bank, inst.hyper), std::domain_error);
}

TEST_CASE("gradient vanishes at zero weights with an empty table") {
  FeatureBank bank;
  bank.face_features = Matrix::Ones(2, 3);
  bank.trait_features = Matrix::Ones(2, 2);
  Hyperparams hyper;
  hyper.latent_dim = 2;
  ModelState state;
  state.weights_face = Matrix::Zero(2, 3);
  state.weights_trait = Matrix::Zero(2, 2);

  const auto g = grad_log_posterior(state, RatingsTable{}, bank, hyper);
  CHECK(g.weights_face.norm() == 0.0);
  CHECK(g.weights_trait.norm() == 0.0);
}

TEST_CASE("gradient matches central finite differences") {
  auto inst = make_random_instance(7, 2, 3, 2, 4, 3, 5);
  const auto analytic = grad_log_posterior(inst.state, inst.table, inst.bank, inst.hyper);
  const auto fd = fd_gradient(inst.state, inst.table, inst.bank, inst.hyper, 1e-5);

  for (Eigen::Index i = 0; i < analytic.weights_face.size(); ++i)
    CHECK(rel_err(analytic.weights_face.data()[i], fd.weights_face.data()[i]) < 1e-5);
  for (Eigen::Index i = 0; i < analytic.weights_trait.size(); ++i)
    CHECK(rel_err(analytic.weights_trait.data()[i], fd.weights_trait.data()[i]) < 1e-5);
  CHECK(rel_err(analytic.log_sigma, fd.log_sigma) < 1e-5);
  CHECK(rel_err(analytic.log_theta, fd.log_theta) < 1e-5);
}

TEST_CASE("doubling tau doubles the likelihood part of the weight gradient") {
  auto inst = make_random_instance(9, 1, 1, 1, 1, 1, 1);
  inst.hyper.noise_precision = 1.0;

  const auto g1 = grad_log_posterior(inst.state, inst.table, inst.bank, inst.hyper);
  const auto prior_only = grad_log_posterior(inst.state, RatingsTable{}, inst.bank, inst.hyper);
  inst.hyper.noise_precision = 2.0;
  const auto g2 = grad_log_posterior(inst.state, inst.table, inst.bank, inst.hyper);

  const double lik1 = g1.weights_face(0, 0) - prior_only.weights_face(0, 0);
  const double lik2 = g2.weights_face(0, 0) - prior_only.weights_face(0, 0);
  CHECK(lik2 == doctest::Approx(2.0 * lik1).epsilon(1e-12));
}

TEST_CASE("rescaling features and weights leaves r_star unchanged") {
  auto inst = make_random_instance(13, 3, 4, 3, 5, 4, 0);
  const double c = 2.75;
  FeatureBank scaled_bank = inst.bank;
  scaled_bank.face_features *= c;
  ModelState scaled_state = inst.state;
  scaled_state.weights_face /= c;

  for (int j = 0; j < 5; ++j) {
    for (int h = 0; h < 4; ++h) {
      const auto a = predict_cell(inst.state, inst.bank, j, h);
      const auto b = predict_cell(scaled_state, scaled_bank, j, h);
      CHECK(a.r_star == doctest::Approx(b.r_star).epsilon(1e-12));
    }
  }
}

TEST_CASE("log posterior is locally concave in each weight block") {
  auto inst = make_random_instance(17, 2, 2, 2, 3, 3, 6);
  const double base = log_posterior(inst.state, inst.table, inst.bank, inst.hyper);
  const auto g = grad_log_posterior(inst.state, inst.table, inst.bank, inst.hyper);

  // moving against the gradient must decrease the log posterior
  ModelState moved = inst.state;
  moved.weights_face -= 1e-3 * g.weights_face / std::max(g.weights_face.norm(), 1e-12);
  CHECK(log_posterior(moved, inst.table, inst.bank, inst.hyper) < base);
}
