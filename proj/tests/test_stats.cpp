#include "support.hpp"

#include <boost/math/special_functions/bessel.hpp>
#include <catch2/catch_amalgamated.hpp>

using namespace heart;
using heart::testing::degrees;
using heart::testing::random_direction;
using Catch::Approx;

namespace
{

template <class F>
ErrorCode code_of(F&& f)
{
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no heart::Error thrown");
  return ErrorCode::PreconditionViolated;
}

/// A_D(kappa) = I_{D/2}(kappa) / I_{D/2-1}(kappa), straight from Boost.
double mean_cosine_oracle(int dim, double kappa)
{
  const double h = 0.5 * dim;
  return boost::math::cyl_bessel_i(h, kappa) / boost::math::cyl_bessel_i(h - 1.0, kappa);
}

/// Solves A_D(kappa) = r by bisection on the Boost ratio.
double exact_kappa_oracle(int dim, double r)
{
  double lo = 1e-6;
  double hi = 600.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mean_cosine_oracle(dim, mid) < r ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

Vector mean_of(const std::vector<Direction>& xs)
{
  Vector m = Vector::Zero(xs.front().dim());
  for (const auto& x : xs) {
    m += x.coords();
  }
  return m / static_cast<double>(xs.size());
}

KentModel axis_kent(int dim, double kappa, double ratio)
{
  return {Direction::axis(dim, 0), kappa, ratio * kappa, Direction::axis(dim, 1), Direction::axis(dim, 2)};
}

/**
 * log of the Kent normalizer on S^2 by quadrature. The azimuthal integral
 * of exp(b cos 2 phi) is 2 pi I_0(b), leaving a 1-D integral in theta.
 */
double kent3_log_normalizer_quadrature(double kappa, double beta)
{
  constexpr int n = 20000;
  const double h = std::numbers::pi / n;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = i * h;
    const double s = std::sin(t);
    const double f = std::exp(kappa * (std::cos(t) - 1.0)) * boost::math::cyl_bessel_i(0.0, beta * s * s) * s;
    sum += f * ((i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  return kappa + std::log(2.0 * std::numbers::pi * sum * h / 3.0);
}

}  // namespace

// vMF

TEST_CASE("fit_vmf on identical samples caps kappa", "[vmf]")
{
  const std::vector<Direction> same(10, Direction::axis(4, 0));
  const VmfModel m = fit_vmf(same);
  CHECK(m.mu.coords() == Direction::axis(4, 0).coords());
  CHECK(m.mean_resultant == 1.0);
  CHECK(m.kappa == kKappaMax);
}

TEST_CASE("fit_vmf rejects a balanced antipodal pair", "[vmf]")
{
  const std::vector<Direction> pair{Direction::axis(3, 0), -Direction::axis(3, 0)};
  CHECK(code_of([&] { fit_vmf(pair); }) == ErrorCode::DegenerateMean);
  CHECK(code_of([&] { fit_vmf(std::vector<Direction>{Direction::axis(3, 0)}); }) == ErrorCode::PreconditionViolated);
}

TEST_CASE("fit_vmf recovers mu and kappa from 5000 draws in D=16", "[vmf]")
{
  const VmfModel truth{Direction::axis(16, 0), 50.0, 1.0};
  const VmfModel m = fit_vmf(sample_vmf(truth, 5000, 1234));
  CHECK(degrees(geodesic_distance(m.mu, truth.mu)) < 2.0);
  CHECK(m.kappa >= 45.0);
  CHECK(m.kappa <= 55.0);
}

TEST_CASE("fit_vmf recovery grid", "[vmf]")
{
  std::mt19937_64 rng(7);
  for (double kappa : {10.0, 50.0, 200.0}) {
    for (int dim : {3, 16, 64}) {
      for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Direction mu = random_direction(dim, rng);
        const VmfModel m = fit_vmf(sample_vmf({mu, kappa, 1.0}, 5000, seed));
        INFO("D=" << dim << " kappa=" << kappa << " seed=" << seed);
        CHECK(m.kappa == Approx(kappa).epsilon(0.10));
        if (!(dim == 64 && kappa == 10.0)) {
          CHECK(degrees(geodesic_distance(m.mu, mu)) < 2.0);
        }
      }
    }
  }
}

TEST_CASE("fit_vmf mean direction at D=64, kappa=10", "[vmf][!mayfail]")
{
  // mean resultant ~0.155 leaves a typical mean-direction error near 5 degrees at N=5000
  std::mt19937_64 rng(7);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Direction mu = random_direction(64, rng);
    const VmfModel m = fit_vmf(sample_vmf({mu, 10.0, 1.0}, 5000, seed));
    CHECK(degrees(geodesic_distance(m.mu, mu)) < 2.0);
  }
}

TEST_CASE("approximate kappa stays near the exact likelihood solution", "[vmf]")
{
  for (int dim : {3, 16, 64}) {
    for (double kappa : {10.0, 50.0, 200.0}) {
      const double r = mean_cosine_oracle(dim, kappa);
      INFO("D=" << dim << " kappa=" << kappa);
      CHECK(exact_kappa_oracle(dim, r) == Approx(kappa).epsilon(1e-6));
      // the closed form is an approximation; its bias peaks at low D and low kappa
      CHECK(detail::approximate_kappa(r, dim) == Approx(kappa).epsilon(0.05));
    }
  }
}

TEST_CASE("uniform vMF draws have a small resultant", "[vmf][sampler]")
{
  for (int dim : {3, 16}) {
    const std::size_t n = 4000;
    const auto xs = sample_vmf({Direction::axis(dim, 0), 0.0, 1.0}, n, 99);
    CHECK(mean_of(xs).norm() < 3.0 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("vMF draws concentrate around mu with the right mean cosine", "[vmf][sampler]")
{
  std::mt19937_64 rng(17);
  const Direction mu = random_direction(16, rng);
  const auto xs = sample_vmf({mu, 50.0, 1.0}, 5000, 2);
  const Vector m = mean_of(xs);
  CHECK(degrees(heart::testing::acos_angle(m, mu.coords())) < 2.0);

  for (int dim : {3, 16, 64}) {
    for (double kappa : {1.0, 10.0, 200.0}) {
      const auto ys = sample_vmf({Direction::axis(dim, 0), kappa, 1.0}, 20000, 5);
      double sum = 0.0;
      double sq = 0.0;
      for (const auto& y : ys) {
        sum += y[0];
        sq += y[0] * y[0];
      }
      const double mean = sum / 20000.0;
      const double se = std::sqrt((sq / 20000.0 - mean * mean) / 20000.0);
      INFO("D=" << dim << " kappa=" << kappa);
      CHECK(std::abs(mean - mean_cosine_oracle(dim, kappa)) < 5.0 * se);
    }
  }
}

TEST_CASE("sample_vmf is deterministic per seed", "[vmf][sampler]")
{
  const VmfModel m{Direction::axis(8, 3), 12.0, 1.0};
  const auto a = sample_vmf(m, 50, 42);
  const auto b = sample_vmf(m, 50, 42);
  const auto c = sample_vmf(m, 50, 43);
  bool same = true;
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    same = same && (a[i].coords().array() == b[i].coords().array()).all();
    differs = differs || (a[i].coords().array() != c[i].coords().array()).any();
  }
  CHECK(same);
  CHECK(differs);
}

TEST_CASE("vMF at kappa 0 scores every sample at minus log area", "[vmf][likelihood]")
{
  std::mt19937_64 rng(4);
  const VmfModel m{Direction::axis(5, 0), 0.0, 1.0};
  std::vector<Direction> xs;
  for (int i = 0; i < 7; ++i) {
    xs.push_back(random_direction(5, rng));
  }
  const double area = 8.0 * std::numbers::pi * std::numbers::pi / 3.0;  // |S^4|
  CHECK(log_likelihood(m, xs) == Approx(-7.0 * std::log(area)).epsilon(1e-12));
}

// moVMF

TEST_CASE("moVMF with one component equals fit_vmf", "[movmf]")
{
  const auto xs = sample_vmf({Direction::axis(6, 1), 20.0, 1.0}, 500, 8);
  const VmfModel single = fit_vmf(xs);
  const MovmfFit fit = fit_movmf(xs, {1, 0, 200, 1e-6});
  REQUIRE(fit.model.size() == 1);
  const auto& c = fit.model.components.front();
  CHECK(c.weight == Approx(1.0).epsilon(1e-12));
  CHECK((c.model.mu.coords() - single.mu.coords()).norm() < 1e-9);
  CHECK(c.model.kappa == Approx(single.kappa).epsilon(1e-9));
}

TEST_CASE("moVMF separates two orthogonal clusters", "[movmf]")
{
  const Direction a = Direction::axis(8, 0);
  const Direction b = Direction::axis(8, 1);
  auto xs = sample_vmf({a, 100.0, 1.0}, 400, 1);
  const auto ys = sample_vmf({b, 100.0, 1.0}, 400, 2);
  xs.insert(xs.end(), ys.begin(), ys.end());
  const MovmfFit fit = fit_movmf(xs, {2, 3, 200, 1e-8});
  REQUIRE(fit.model.size() == 2);
  double to_a = 1e9;
  double to_b = 1e9;
  for (const auto& c : fit.model.components) {
    to_a = std::min(to_a, degrees(geodesic_distance(c.model.mu, a)));
    to_b = std::min(to_b, degrees(geodesic_distance(c.model.mu, b)));
    CHECK(c.weight == Approx(0.5).margin(0.02));
  }
  CHECK(to_a < 3.0);
  CHECK(to_b < 3.0);
}

TEST_CASE("moVMF EM never lowers the likelihood", "[movmf]")
{
  std::vector<Direction> xs;
  for (int k = 0; k < 3; ++k) {
    const auto part = sample_vmf({Direction::axis(5, k), 8.0, 1.0}, 300, 10 + k);
    xs.insert(xs.end(), part.begin(), part.end());
  }
  const MovmfFit fit = fit_movmf(xs, {3, 7, 500, 1e-10});
  for (std::size_t i = 1; i < fit.log_likelihood_trace.size(); ++i) {
    CHECK(fit.log_likelihood_trace[i] >= fit.log_likelihood_trace[i - 1] - 1e-9);
  }
  CHECK(log_likelihood(fit.model, xs) == Approx(fit.log_likelihood_trace.back()).epsilon(1e-9));
}

TEST_CASE("moVMF preconditions and determinism", "[movmf]")
{
  const auto xs = sample_vmf({Direction::axis(4, 0), 5.0, 1.0}, 9, 1);
  CHECK(code_of([&] { fit_movmf(xs, {5, 0, 10, 1e-6}); }) == ErrorCode::PreconditionViolated);
  CHECK(code_of([&] { fit_movmf(xs, {0, 0, 10, 1e-6}); }) == ErrorCode::PreconditionViolated);

  const auto ys = sample_vmf({Direction::axis(4, 0), 5.0, 1.0}, 300, 2);
  const MovmfFit f1 = fit_movmf(ys, {2, 11, 200, 1e-8});
  auto shuffled = ys;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(3));
  const MovmfFit f2 = fit_movmf(shuffled, {2, 11, 200, 1e-8});
  CHECK(f1.log_likelihood_trace.back() == f2.log_likelihood_trace.back());
}

// Kent

TEST_CASE("Kent S^2 normalizer matches quadrature", "[kent][normalizer]")
{
  for (double kappa : {0.5, 5.0, 30.0, 200.0}) {
    for (double ratio : {0.0, 0.1, 0.3, 0.45}) {
      const double beta = ratio * kappa;
      INFO("kappa=" << kappa << " beta=" << beta);
      CHECK(special::kent_log_normalizer(3, kappa, beta) ==
            Approx(kent3_log_normalizer_quadrature(kappa, beta)).epsilon(1e-8));
    }
  }
}

TEST_CASE("Kent with beta 0 scores like vMF", "[kent][likelihood]")
{
  for (int dim : {3, 16}) {
    for (double kappa : {10.0, 50.0}) {
      const auto xs = sample_vmf({Direction::axis(dim, 0), kappa, 1.0}, 2000, 6);
      const double kent = log_likelihood(axis_kent(dim, kappa, 0.0), xs);
      const double vmf = log_likelihood(VmfModel{Direction::axis(dim, 0), kappa, 1.0}, xs);
      INFO("D=" << dim << " kappa=" << kappa);
      CHECK(std::abs(kent - vmf) <= 0.01 * std::abs(vmf));
    }
  }
}

TEST_CASE("high-dimensional Kent normalizer matches importance sampling", "[kent][normalizer]")
{
  // c(kappa, beta) = c_vMF(kappa) * E_vMF[exp(beta ((g1.x)^2 - (g2.x)^2))]
  for (int dim : {16, 64}) {
    for (double kappa : {50.0, 200.0}) {
      const double beta = 0.2 * kappa;
      const auto xs = sample_vmf({Direction::axis(dim, 0), kappa, 1.0}, 200000, 77);
      double acc = 0.0;
      for (const auto& x : xs) {
        acc += std::exp(beta * (x[1] * x[1] - x[2] * x[2]));
      }
      const double oracle = -special::vmf_log_normalizer(dim, kappa) + std::log(acc / xs.size());
      INFO("D=" << dim << " kappa=" << kappa);
      CHECK(special::kent_log_normalizer(dim, kappa, beta) == Approx(oracle).margin(0.02));
    }
  }
}

TEST_CASE("Kent model validation", "[kent]")
{
  CHECK_NOTHROW(validate(axis_kent(4, 10.0, 0.3)));
  KentModel bad = axis_kent(4, 10.0, 0.0);
  bad.beta = 6.0;
  CHECK(code_of([&] { validate(bad); }) == ErrorCode::PreconditionViolated);
  KentModel skew = axis_kent(4, 10.0, 0.1);
  skew.gamma2 = Direction::axis(4, 1);
  CHECK(code_of([&] { validate(skew); }) == ErrorCode::PreconditionViolated);
}

TEST_CASE("fit_kent on a degenerate pool", "[kent]")
{
  const std::vector<Direction> same(8, Direction::axis(5, 2));
  const KentFit fit = fit_kent(same);
  CHECK(fit.model.mu.coords() == Direction::axis(5, 2).coords());
  CHECK(fit.model.kappa == kKappaMax);
  CHECK(fit.model.beta == 0.0);
  CHECK(fit.rank_deficient);

  const std::vector<Direction> pair{Direction::axis(3, 0), -Direction::axis(3, 0), Direction::axis(3, 1),
                                    -Direction::axis(3, 1)};
  CHECK(code_of([&] { fit_kent(pair); }) == ErrorCode::DegenerateMean);
  CHECK(code_of([&] { fit_kent(std::vector<Direction>(3, Direction::axis(3, 0))); }) ==
        ErrorCode::PreconditionViolated);
}

TEST_CASE("fit_kent frame is orthonormal and does not depend on sample order", "[kent]")
{
  const KentSamples ks = sample_kent(axis_kent(16, 50.0, 0.2), 3000, 9);
  const KentFit a = fit_kent(ks.directions);
  CHECK_NOTHROW(validate(a.model));
  auto shuffled = ks.directions;
  std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(1));
  const KentFit b = fit_kent(shuffled);
  CHECK(a.model.kappa == b.model.kappa);
  CHECK(a.model.beta == b.model.beta);
}

TEST_CASE("fit_kent recovers an anisotropic ratio of 0.2 in D=16", "[kent]")
{
  const KentModel truth = axis_kent(16, 50.0, 0.2);
  const KentFit fit = fit_kent(sample_kent(truth, 5000, 2024).directions);
  CHECK(fit.model.anisotropy() >= 0.15);
  CHECK(fit.model.anisotropy() <= 0.25);
  CHECK(degrees(geodesic_distance(fit.model.mu, truth.mu)) < 2.0);
  CHECK(std::abs(fit.model.gamma1.coords().dot(truth.gamma1.coords())) > 0.95);
  CHECK(std::abs(fit.model.gamma2.coords().dot(truth.gamma2.coords())) > 0.95);
}

TEST_CASE("fit_kent sees no anisotropy in isotropic data on S^2", "[kent]")
{
  for (std::uint64_t seed : {1, 2, 3}) {
    const KentFit fit = fit_kent(sample_vmf({Direction::axis(3, 0), 50.0, 1.0}, 5000, seed));
    CHECK(fit.model.anisotropy() < 0.05);
  }
}

TEST_CASE("fit_kent on isotropic data in D=16", "[kent][!mayfail]")
{
  // extreme tangent eigenvalues of isotropic data drift apart by sampling alone
  for (std::uint64_t seed : {1, 2, 3}) {
    const KentFit fit = fit_kent(sample_vmf({Direction::axis(16, 0), 50.0, 1.0}, 5000, seed));
    CHECK(fit.model.anisotropy() < 0.05);
  }
}

TEST_CASE("Kent sampling and fitting round trip, resolvable cells", "[kent][sampler]")
{
  const std::pair<int, double> cells[] = {{3, 10.0}, {3, 50.0}, {3, 200.0}, {16, 50.0}, {16, 200.0}, {64, 200.0}};
  for (const auto& [dim, kappa] : cells) {
    for (std::uint64_t seed : {1, 2}) {
      const KentFit fit = fit_kent(sample_kent(axis_kent(dim, kappa, 0.2), 5000, seed).directions);
      INFO("D=" << dim << " kappa=" << kappa << " seed=" << seed);
      CHECK(std::abs(fit.model.anisotropy() - 0.2) <= 0.05);
    }
  }
}

TEST_CASE("Kent sampling and fitting round trip, low-signal cells", "[kent][sampler][!mayfail]")
{
  const std::pair<int, double> cells[] = {{16, 10.0}, {64, 10.0}, {64, 50.0}};
  for (const auto& [dim, kappa] : cells) {
    for (std::uint64_t seed : {1, 2}) {
      const KentFit fit = fit_kent(sample_kent(axis_kent(dim, kappa, 0.2), 5000, seed).directions);
      INFO("D=" << dim << " kappa=" << kappa << " seed=" << seed);
      CHECK(std::abs(fit.model.anisotropy() - 0.2) <= 0.05);
    }
  }
}

TEST_CASE("Kent sampler at beta 0 matches the vMF sampler", "[kent][sampler]")
{
  const int dim = 16;
  const double kappa = 50.0;
  const auto kent = sample_kent(axis_kent(dim, kappa, 0.0), 4000, 31).directions;
  const auto vmf = sample_vmf({Direction::axis(dim, 0), kappa, 1.0}, 4000, 32);
  std::vector<double> a;
  std::vector<double> b;
  for (std::size_t i = 0; i < kent.size(); ++i) {
    a.push_back(kent[i][0]);
    b.push_back(vmf[i][0]);
  }
  CHECK(heart::testing::ks_two_sample(a, b).p_value > 0.01);
}

TEST_CASE("Kent sampler second moments match importance-weighted vMF", "[kent][sampler]")
{
  const int dim = 16;
  const double kappa = 50.0;
  const double beta = 10.0;
  const auto prop = sample_vmf({Direction::axis(dim, 0), kappa, 1.0}, 200000, 5);
  double wsum = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
  for (const auto& x : prop) {
    const double w = std::exp(beta * (x[1] * x[1] - x[2] * x[2]));
    wsum += w;
    m1 += w * x[1] * x[1];
    m2 += w * x[2] * x[2];
  }
  const KentSamples ks = sample_kent(axis_kent(dim, kappa, 0.2), 100000, 6);
  double s1 = 0.0;
  double s2 = 0.0;
  for (const auto& x : ks.directions) {
    s1 += x[1] * x[1];
    s2 += x[2] * x[2];
  }
  CHECK(s1 / ks.directions.size() == Approx(m1 / wsum).epsilon(0.03));
  CHECK(s2 / ks.directions.size() == Approx(m2 / wsum).epsilon(0.03));
  CHECK(ks.acceptance_rate > 0.01);
  CHECK_FALSE(ks.low_acceptance);
}

TEST_CASE("sample_kent is deterministic per seed", "[kent][sampler]")
{
  const auto a = sample_kent(axis_kent(5, 30.0, 0.3), 40, 8).directions;
  const auto b = sample_kent(axis_kent(5, 30.0, 0.3), 40, 8).directions;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a[i].coords().array() == b[i].coords().array()).all());
  }
}

// model selection

TEST_CASE("BIC arithmetic", "[bic]")
{
  CHECK(bic(0.0, 0, 10) == 0.0);
  CHECK(bic(-100.0, 3, 100) == Approx(200.0 + 3.0 * std::log(100.0)).epsilon(1e-15));
  CHECK(bic(-100.0, 3, 100) == Approx(213.8155).margin(1e-4));
  CHECK(vmf_param_count(16) == 16);
  CHECK(movmf_param_count(16, 2) == 33);
  CHECK(kent_param_count(16) == 44);
}

TEST_CASE("select_model picks Kent for anisotropic and vMF for isotropic pools", "[bic]")
{
  SelectOptions opts;
  const FitReport aniso = select_model(sample_kent(axis_kent(16, 50.0, 0.12), 20000, 3).directions, opts);
  CHECK(aniso.winner == "kent");
  CHECK(aniso.anisotropy_ratio == Approx(0.12).margin(0.03));
  REQUIRE(aniso.candidates.size() == 3);
  CHECK(aniso.candidates[0].tag == "vmf");
  CHECK(aniso.candidates[1].tag == "movmf");
  CHECK(aniso.candidates[2].tag == "kent");

  const FitReport iso = select_model(sample_vmf({Direction::axis(16, 0), 50.0, 1.0}, 20000, 4), opts);
  CHECK(iso.winner == "vmf");
  for (const auto& c : iso.candidates) {
    CHECK(c.ok);
    CHECK(c.bic == Approx(bic(c.log_likelihood, c.param_count, 20000)).epsilon(1e-12));
  }
}

TEST_CASE("select_model reports a failing candidate and keeps going", "[bic]")
{
  // D=2 has no Kent distribution
  const auto xs = sample_vmf({Direction::axis(2, 0), 5.0, 1.0}, 100, 1);
  const FitReport r = select_model(xs);
  CHECK_FALSE(r.candidate("kent").ok);
  CHECK_FALSE(r.candidate("kent").error.empty());
  CHECK(r.candidate("vmf").ok);
  CHECK((r.winner == "vmf" || r.winner == "movmf"));
}
