#include <doctest.h>

#include <cmath>
#include <limits>

#include "filtopt/pfso.hpp"
#include "filtopt/proximal.hpp"
#include "oracles.hpp"

using namespace filtopt;
using doctest::Approx;

namespace {

Matrix sample_covariance(const Matrix& p) {
  const Eigen::VectorXd m = p.rowwise().mean();
  const Matrix c = p.colwise() - m;
  return c * c.transpose() / static_cast<double>(p.cols());
}

// h = value_at_one when theta_0 is (numerically) 1, otherwise `elsewhere`.
ResidualModel step_model(double value_at_one, double elsewhere) {
  return ResidualModel::custom(
      "step", 1, 1,
      [=](ConstVecRef t, ConstVecRef) { return std::abs(t[0] - 1.0) < 1e-12 ? value_at_one : elsewhere; },
      [](ConstVecRef, ConstVecRef) -> ParameterVector { return Eigen::VectorXd::Zero(1); });
}

PfsoState single_particle_at_one() {
  return PfsoState{WeightedEnsemble::uniform(Matrix::Ones(1, 1)), Eigen::VectorXd::Ones(1),
                   Matrix::Identity(1, 1), 0};
}

struct LinearGaussian {
  Eigen::VectorXd truth;
  std::vector<Datum> data;
};

LinearGaussian linear_gaussian(RngStream& rng, int n, double noise_sd) {
  LinearGaussian lg{Eigen::Vector2d(0.7, -0.4), {}};
  for (int k = 0; k < n; ++k) {
    const Eigen::VectorXd x = rng.normal_vector(2);
    lg.data.push_back(Datum{x, x.dot(lg.truth) + noise_sd * rng.normal()});
  }
  return lg;
}

}  // namespace

TEST_CASE("init_state") {
  const Eigen::Vector2d theta0(1.0, -1.0);
  const auto flat = init_state(theta0, Matrix::Zero(2, 2), 10, RngStream(1));
  for (Eigen::Index i = 0; i < 10; ++i) CHECK(flat.ensemble.particle(i) == theta0);
  CHECK(flat.k == 0);
  CHECK(flat.mean == theta0);

  const auto big = init_state(Eigen::Vector2d::Zero(), Matrix::Identity(2, 2), 5000, RngStream(2));
  const Matrix& p = big.ensemble.particles();
  CHECK(p.rowwise().mean().cwiseAbs().maxCoeff() < 0.05);
  CHECK((sample_covariance(p) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() < 0.1);
  CHECK(big.ensemble.weights().isApproxToConstant(1.0 / 5000.0));

  CHECK(init_state(theta0, Matrix::Identity(2, 2), 50, RngStream(9)).ensemble.particles() ==
        init_state(theta0, Matrix::Identity(2, 2), 50, RngStream(9)).ensemble.particles());
  CHECK_THROWS_AS(init_state(theta0, Matrix::Identity(2, 2), 0, RngStream(9)), ConfigError);
}

TEST_CASE("liu_west_propagate") {
  RngStream rng(12);
  const auto state = init_state(Eigen::Vector2d(0.5, 0.5), Matrix::Identity(2, 2), 100, rng);
  CHECK(liu_west_propagate(state, 1.0, rng) == state.ensemble.particles());

  PfsoState same{WeightedEnsemble::uniform(Matrix::Constant(2, 20, 3.25)), Eigen::Vector2d::Constant(3.25),
                 Matrix::Zero(2, 2), 4};
  CHECK((liu_west_propagate(same, 0.9, rng).array() - 3.25).abs().maxCoeff() < 1e-14);

  SUBCASE("mean and covariance are preserved at N = 1e5") {
    const Matrix target = (Matrix(2, 2) << 1.0, 0.6, 0.6, 2.0).finished();
    auto s = init_state(Eigen::Vector2d(1.0, -2.0), target, 100000, RngStream(40));
    s.mean = s.ensemble.particles().rowwise().mean();
    s.cov = sample_covariance(s.ensemble.particles());
    const Matrix out = liu_west_propagate(s, 0.98, RngStream(41));
    CHECK((out.rowwise().mean() - s.mean).cwiseAbs().maxCoeff() < 0.02);
    const Matrix c = sample_covariance(out);
    for (Eigen::Index a = 0; a < 2; ++a)
      for (Eigen::Index b = 0; b < 2; ++b) CHECK(std::abs(c(a, b) - s.cov(a, b)) <= 0.05 * std::abs(s.cov(a, b)));
  }
  SUBCASE("parallel workers draw the same numbers") {
    CHECK(liu_west_propagate(state, 0.95, RngStream(3), 1) == liu_west_propagate(state, 0.95, RngStream(3), 4));
  }
}

TEST_CASE("residual resampling") {
  RngStream rng(77);
  SUBCASE("uniform weights copy every particle once") {
    const auto counts = residual_resample_counts(Eigen::VectorXd::Constant(8, 0.125), 8, rng);
    for (auto c : counts) CHECK(c == 1);
    Matrix p(1, 8);
    for (int i = 0; i < 8; ++i) p(0, i) = i;
    CHECK(residual_resample(WeightedEnsemble::uniform(p), rng).particles() == p);
  }
  SUBCASE("integer expected counts are exact") {
    const auto counts = residual_resample_counts(Eigen::Vector2d(0.75, 0.25), 4, rng);
    CHECK(counts[0] == 3);
    CHECK(counts[1] == 1);
  }
  SUBCASE("residual draw is unbiased") {
    double total = 0.0;
    for (int t = 0; t < 10000; ++t) total += residual_resample_counts(Eigen::Vector2d(0.605, 0.395), 100, rng)[0];
    CHECK(std::abs(total / 10000.0 - 60.5) <= 0.5);
  }
  SUBCASE("counts are at least the floors and sum to N") {
    for (int t = 0; t < 1000; ++t) {
      const std::size_t n = 1 + t % 37;
      Eigen::VectorXd w(static_cast<Eigen::Index>(n));
      for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = std::pow(rng.uniform(), 3.0);
      w /= w.sum();
      const auto counts = residual_resample_counts(w, n, rng);
      std::size_t sum = 0;
      for (std::size_t i = 0; i < n; ++i) {
        REQUIRE(counts[i] >= static_cast<std::size_t>(std::floor(static_cast<double>(n) * w[static_cast<Eigen::Index>(i)])));
        sum += counts[i];
      }
      REQUIRE(sum == n);
    }
  }
  SUBCASE("post-resampling mean is unbiased within 3 standard errors") {
    const Eigen::Index n = 25;
    Matrix p(1, n);
    Eigen::VectorXd w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p(0, i) = rng.normal() * 3.0;
      w[i] = rng.uniform();
    }
    w /= w.sum();
    const WeightedEnsemble ens(p, w);
    const double target = ensemble_mean(ens)[0];
    for (ResamplingKind kind : {ResamplingKind::residual, ResamplingKind::multinomial}) {
      const int trials = 10000;
      double s = 0.0, ss = 0.0;
      for (int t = 0; t < trials; ++t) {
        const auto r = resample(ens, kind, rng);
        REQUIRE(r.size() == n);
        const double m = ensemble_mean(r)[0];
        s += m;
        ss += m * m;
      }
      const double mean = s / trials;
      const double se = std::sqrt((ss / trials - mean * mean) / trials);
      CHECK(std::abs(mean - target) <= 3.0 * se);
    }
  }
  CHECK_THROWS_AS(multinomial_resample_counts(Eigen::Vector2d::Zero(), 2, rng), DegenerateWeightsError);
}

TEST_CASE("weight_update") {
  const auto loss = LossComponent::least_squares(ResidualModel::linear(1));
  const Datum d{Eigen::VectorXd::Ones(1), 0.0};
  const double lambda = 0.1;

  const Matrix symmetric = (Matrix(1, 2) << -0.5, 0.5).finished();
  const auto flat = weight_update(symmetric, d, loss, lambda);
  CHECK(flat[0] == Approx(0.5));
  CHECK(flat[1] == Approx(0.5));

  const Matrix pair = (Matrix(1, 2) << 0.0, std::sqrt(lambda * std::log(4.0))).finished();
  const auto w = weight_update(pair, d, loss, lambda);
  CHECK(w[0] == Approx(0.8).epsilon(1e-12));
  CHECK(w[1] == Approx(0.2).epsilon(1e-12));

  SUBCASE("50 random particles match the linear-domain oracle") {
    RngStream rng(50);
    const auto sig = LossComponent::least_squares(ResidualModel::sigmoid(2));
    const Datum sd{Eigen::VectorXd::Constant(1, 0.3), 0.6};
    Matrix p(2, 50);
    std::vector<double> losses;
    for (Eigen::Index i = 0; i < 50; ++i) {
      p.col(i) = rng.normal_vector(2);
      losses.push_back(loss_value(sig, p.col(i), sd));
    }
    const auto got = weight_update(p, sd, sig, 0.5);
    const auto want = oracle::linear_domain_weights(losses, 0.5);
    for (Eigen::Index i = 0; i < 50; ++i) CHECK(std::abs(got[i] - want[static_cast<std::size_t>(i)]) <= 1e-12);
  }
  SUBCASE("argmax weight is the argmin loss") {
    RngStream rng(51);
    for (int t = 0; t < 100; ++t) {
      Matrix p(1, 30);
      for (Eigen::Index i = 0; i < 30; ++i) p(0, i) = rng.normal() * 2.0;
      Eigen::Index imax, imin;
      weight_update(p, d, loss, lambda).maxCoeff(&imax);
      p.cwiseAbs().row(0).minCoeff(&imin);
      REQUIRE(imax == imin);
    }
  }
  SUBCASE("singular particles get zero weight, all-singular is degenerate") {
    const auto park = LossComponent::least_squares(ResidualModel::park());
    const Datum pd{Eigen::Vector4d::Ones(), 13.0};
    Matrix p(4, 2);
    p.col(0) = Eigen::Vector4d(0.0, 1, 1, 1);
    p.col(1) = Eigen::Vector4d::Ones();
    const auto pw = weight_update(p, pd, park, 0.1);
    CHECK(pw[0] == 0.0);
    CHECK(pw[1] == 1.0);
    p.col(1) = p.col(0);
    CHECK_THROWS_AS(weight_update(p, pd, park, 0.1), DegenerateWeightsError);
  }
}

TEST_CASE("perturb_particles") {
  const Datum d{Eigen::VectorXd::Zero(1), 0.0};
  const Matrix V = Matrix::Identity(1, 1);
  const auto ens = single_particle_at_one().ensemble;

  SUBCASE("better candidates are always accepted") {
    const auto loss = LossComponent::least_squares(step_model(1.0, 0.0));
    std::size_t accepted = 0;
    for (std::size_t k = 1; k <= 500; ++k)
      accepted += perturb_particles(ens, d, loss, 1.0, 1.0, V, RngStream(5), k).accepted;
    CHECK(accepted == 500);
  }
  SUBCASE("equally good candidates are always accepted") {
    const auto loss = LossComponent::least_squares(step_model(0.5, 0.5));
    std::size_t accepted = 0;
    for (std::size_t k = 1; k <= 500; ++k)
      accepted += perturb_particles(ens, d, loss, 1.0, 1.0, V, RngStream(6), k).accepted;
    CHECK(accepted == 500);
  }
  SUBCASE("likelihood ratio 0.3 is accepted 30% of the time") {
    const auto loss = LossComponent::least_squares(step_model(0.0, std::sqrt(-std::log(0.3))));
    const int trials = 10000;
    std::size_t accepted = 0;
    for (int k = 1; k <= trials; ++k) {
      const auto r = perturb_particles(ens, d, loss, 1.0, 1.0, V, RngStream(7), static_cast<std::size_t>(k));
      accepted += r.accepted;
      REQUIRE((r.ensemble.particle(0)[0] == 1.0) == (r.accepted == 0));
    }
    CHECK(std::abs(static_cast<double>(accepted) / trials - 0.3) <= 0.02);
  }
  SUBCASE("domain errors keep the particle") {
    const auto park = LossComponent::least_squares(ResidualModel::park());
    Matrix p = Matrix::Ones(4, 3);
    const WeightedEnsemble e = WeightedEnsemble::uniform(p);
    const Datum pd{Eigen::Vector4d::Ones(), 13.3};
    // x1 = 0 makes every candidate singular.
    const Datum bad{Eigen::Vector4d(0.0, 1, 1, 1), 1.0};
    const auto r = perturb_particles(e, bad, park, 0.1, 1.0, Matrix::Identity(4, 4), RngStream(8), 1);
    CHECK(r.accepted == 0);
    CHECK(r.ensemble.particles() == p);
    CHECK_NOTHROW(perturb_particles(e, pd, park, 0.1, 0.1, Matrix::Identity(4, 4), RngStream(8), 1));
  }
}

TEST_CASE("ks_pfso_step") {
  const auto loss = LossComponent::least_squares(ResidualModel::linear(2));
  PfsoConfig cfg;
  cfg.lambda = 0.1;

  SUBCASE("a single particle is its own estimate") {
    cfg.particles = 1;
    const auto s0 = init_state(Eigen::Vector2d(0.2, 0.1), Matrix::Identity(2, 2), 1, RngStream(1));
    const auto step = ks_pfso_step(s0, Datum{Eigen::Vector2d(1.0, 1.0), 0.5}, loss, cfg, RngStream(2));
    CHECK(step.estimate == ParameterVector(step.state.ensemble.particle(0)));
    CHECK(step.state.ensemble.weights()[0] == 1.0);
    CHECK(step.state.k == 1);
  }
  SUBCASE("flat likelihood gives the plain propagated mean") {
    cfg.lambda = 1e300;
    const auto s0 = init_state(Eigen::Vector2d::Zero(), Matrix::Identity(2, 2), 64, RngStream(3));
    const auto step = ks_pfso_step(s0, Datum{Eigen::Vector2d(1.0, -1.0), 4.0}, loss, cfg, RngStream(4));
    const Eigen::VectorXd plain = step.state.ensemble.particles().rowwise().mean();
    CHECK((step.estimate - plain).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("tracks KF-IPM on a linear-Gaussian stream") {
    RngStream rng(2718);
    const auto lg = linear_gaussian(rng, 200, std::sqrt(0.05));
    cfg.particles = 5000;
    const Eigen::Vector2d theta0(0.0, 0.0);
    const Matrix V0 = Matrix::Identity(2, 2);
    auto state = init_state(theta0, V0, cfg.particles, RngStream(10));
    GaussianBelief kf{theta0, V0};
    const RngStream stream(11);
    double worst = 0.0;
    for (std::size_t k = 0; k < lg.data.size(); ++k) {
      auto step = ks_pfso_step(state, lg.data[k], loss, cfg, stream);
      kf = kf_ipm_step(kf, lg.data[k], cfg.lambda);
      if (k >= 10) worst = std::max(worst, (step.estimate - kf.mean).cwiseAbs().maxCoeff());
      state = std::move(step.state);
    }
    CHECK(worst <= 0.05);
    CHECK((state.mean - lg.truth).cwiseAbs().maxCoeff() < 0.1);
  }
  SUBCASE("degenerate weights keep the moments and raise the flag") {
    const auto park = LossComponent::least_squares(ResidualModel::park());
    const auto s0 = init_state(Eigen::Vector4d::Constant(1.5), Matrix::Identity(4, 4) * 0.01, 20, RngStream(5));
    const Datum bad{Eigen::Vector4d(0.0, 1, 1, 1), 1.0};
    const auto step = ks_pfso_step(s0, bad, park, cfg, RngStream(6));
    CHECK(step.degenerate);
    CHECK(step.estimate == s0.mean);
    CHECK(step.state.cov == s0.cov);
    CHECK(step.state.ensemble.weights().isApproxToConstant(1.0 / 20.0));
  }
}

TEST_CASE("rp_pfso_step") {
  const auto loss = LossComponent::least_squares(ResidualModel::linear(2));
  PfsoConfig cfg;
  cfg.particles = 200;

  SUBCASE("zero perturbation scale matches KS after resampling") {
    cfg.perturbation_scale = 0.0;
    const auto s0 = init_state(Eigen::Vector2d(0.3, 0.3), Matrix::Identity(2, 2), cfg.particles, RngStream(1));
    const Datum d{Eigen::Vector2d(0.4, -1.2), 0.7};
    const RngStream stream(2);
    const auto rp = rp_pfso_step(s0, d, loss, cfg, stream);
    const auto ks = ks_pfso_step(s0, d, loss, cfg, stream);
    const Eigen::VectorXd ks_resampled_mean = ks.state.ensemble.particles().rowwise().mean();
    CHECK((rp.estimate - ks_resampled_mean).cwiseAbs().maxCoeff() < 1e-5);
  }
  SUBCASE("estimate is the unweighted mean of the final particles") {
    const auto s0 = init_state(Eigen::Vector2d::Zero(), Matrix::Identity(2, 2), cfg.particles, RngStream(3));
    const auto step = rp_pfso_step(s0, Datum{Eigen::Vector2d(1.0, 0.5), 0.2}, loss, cfg, RngStream(4));
    CHECK((step.estimate - step.state.ensemble.particles().rowwise().mean()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(step.accepted_moves <= cfg.particles);
    CHECK(step.accepted_moves > 0);
  }
}

TEST_CASE("PFSO runs are bit-identical for a fixed seed") {
  RngStream rng(1);
  const auto lg = linear_gaussian(rng, 100, 0.3);
  const auto loss = LossComponent::least_squares(ResidualModel::linear(2));
  auto run = [&](bool rp, unsigned workers) {
    PfsoConfig cfg;
    cfg.particles = 300;
    cfg.workers = workers;
    auto state = init_state(Eigen::Vector2d::Zero(), Matrix::Identity(2, 2), cfg.particles, RngStream(42));
    std::vector<ParameterVector> trace;
    for (const auto& d : lg.data) {
      auto step = rp ? rp_pfso_step(state, d, loss, cfg, RngStream(43)) : ks_pfso_step(state, d, loss, cfg, RngStream(43));
      trace.push_back(step.estimate);
      state = std::move(step.state);
    }
    return trace;
  };
  for (bool rp : {false, true}) {
    const auto a = run(rp, 1);
    CHECK(a == run(rp, 1));
    CHECK(a == run(rp, 3));
  }
}

TEST_CASE("KS-PFSO approaches the analytic posterior as N grows") {
  const auto loss = LossComponent::least_squares(ResidualModel::linear(2));
  const double lambda = 0.1;
  std::vector<double> small, large;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RngStream rng(1000 + seed);
    const auto lg = linear_gaussian(rng, 40, std::sqrt(lambda / 2));
    std::vector<Eigen::VectorXd> xs;
    std::vector<double> ys;
    for (const auto& d : lg.data) {
      xs.push_back(d.x);
      ys.push_back(d.y);
    }
    // exp(-f/lambda) is a Gaussian likelihood with variance lambda / 2.
    const Eigen::VectorXd posterior =
        oracle::batch_posterior_mean(xs, ys, Eigen::Vector2d::Zero(), Matrix::Identity(2, 2), lambda / 2);
    for (std::size_t n : {std::size_t{50}, std::size_t{5000}}) {
      PfsoConfig cfg;
      cfg.particles = n;
      cfg.lambda = lambda;
      auto state = init_state(Eigen::Vector2d::Zero(), Matrix::Identity(2, 2), n, RngStream(seed));
      for (const auto& d : lg.data) state = ks_pfso_step(state, d, loss, cfg, RngStream(seed + 77)).state;
      (n == 50 ? small : large).push_back((state.mean - posterior).norm());
    }
  }
  std::sort(small.begin(), small.end());
  std::sort(large.begin(), large.end());
  CHECK(large[10] < small[10]);
}

TEST_CASE("PfsoConfig validation") {
  PfsoConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.rho = 1.2;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.rho = 0.98;
  cfg.particles = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.particles = 10;
  CHECK(cfg.rho * cfg.rho + cfg.gamma() == 1.0);
}
