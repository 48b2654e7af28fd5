#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <tuple>

#include "damping.hpp"
#include "estimates.hpp"
#include "evolution.hpp"
#include "operators.hpp"
#include "oracles.hpp"
#include "spectra.hpp"

using namespace dwlab;

namespace {

Vec seeded_state(int dim, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Vec u(dim);
  for (int i = 0; i < dim; ++i) u(i) = cxd(g(rng), g(rng));
  return u / u.norm();
}

// Open-endpoint rule for the derivative integrals: the derivative jumps at the
// breaks, and its one-sided value there would poison a closed rule. Exact for
// the piecewise-constant derivatives exercised here.
double midpoint_integral(const std::function<double(double)>& f, double a, double b, int n) {
  const double h = (b - a) / n;
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += f(a + (k + 0.5) * h);
  return s * h;
}

// Quadrature oracle for the five weight norms, integrating each smooth piece
// separately.
WeightNorms quad_norms(const WeightFunction& w, const std::vector<double>& breaks, double theta) {
  WeightNorms n;
  double l2sq = 0.0, l1 = 0.0, dl2sq = 0.0, dl1 = 0.0, thsq = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = breaks[i], b = breaks[i + 1];
    l2sq += oracle::integrate([&](double t) { const double v = w.value(t); return v * v; }, a, b, 400);
    l1 += oracle::integrate([&](double t) { return w.value(t); }, a, b, 400);
    dl2sq += midpoint_integral([&](double t) { const double d = w.derivative(t); return d * d; }, a, b, 400);
    dl1 += midpoint_integral([&](double t) { return std::abs(w.derivative(t)); }, a, b, 400);
    if (theta > a) {
      const double cut = std::min(theta, b);
      thsq += oracle::integrate([&](double t) { const double v = w.value(t); return v * v; }, a, cut, 400);
    }
  }
  n.l2 = std::sqrt(l2sq);
  n.l1 = l1;
  n.dl2 = std::sqrt(dl2sq);
  n.dl1 = dl1;
  n.l2_theta = std::sqrt(thsq);
  return n;
}

}  // namespace

TEST_CASE("psi_min closed forms match quadrature and the honest constants") {
  for (double L : {1.5, 2.0, 4.0, 32.0}) {
    const auto w = WeightFunction::psi_min(L);
    for (double theta : {0.5, 1.0, 1.7, L, L + 1.0}) {
      const auto closed = psi_norms(w, theta);
      const auto quad = quad_norms(w, {0.0, 1.0, L}, theta);
      CHECK(closed.l2 == doctest::Approx(quad.l2).epsilon(1e-10));
      CHECK(closed.l1 == doctest::Approx(quad.l1).epsilon(1e-10));
      CHECK(closed.dl2 == doctest::Approx(quad.dl2).epsilon(1e-10));
      CHECK(closed.dl1 == doctest::Approx(quad.dl1).epsilon(1e-10));
      CHECK(closed.l2_theta == doctest::Approx(quad.l2_theta).epsilon(1e-10));
    }
  }
  const auto n2 = psi_norms(WeightFunction::psi_min(2.0));
  CHECK(n2.dl2 * n2.dl2 == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(n2.l1 == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(n2.dl1 == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-14));
  CHECK(n2.l2 == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-14));

  CHECK_THROWS_AS(WeightFunction::psi_min(1.0), config_error);
  const auto w = WeightFunction::psi_min(3.0);
  CHECK(w.value(-0.5) == 0.0);
  CHECK(w.value(3.1) == 0.0);
  CHECK(w.value(1.0) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("psi_min derivative energy decreases to the limit 2") {
  double prev = std::numeric_limits<double>::infinity();
  for (double L : {4.0, 8.0, 16.0, 32.0}) {
    const double e = std::pow(psi_norms(WeightFunction::psi_min(L)).dl2, 2);
    CHECK(e > 2.0);
    CHECK(e < prev);
    prev = e;
  }
  CHECK(prev == doctest::Approx(2.0 + 2.0 / 31.0).epsilon(1e-14));
}

TEST_CASE("ramp weight norms") {
  const auto w = WeightFunction::ramp();
  const auto n = psi_norms(w, 2.5);
  CHECK(n.dl2 == 1.0);
  CHECK(n.dl1 == 1.0);
  CHECK(std::isinf(n.l2));
  CHECK(std::isinf(n.l1));
  for (double theta : {0.6, 1.0, 2.5}) {
    const auto closed = psi_norms(w, theta);
    const auto quad = quad_norms(w, {0.0, 1.0, theta + 1.0}, theta);
    CHECK(closed.l2_theta == doctest::Approx(quad.l2_theta).epsilon(1e-10));
  }
}

TEST_CASE("bump weight is a unit-peak smooth profile") {
  const auto w = WeightFunction::bump(3.0);
  CHECK(w.value(1.5) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(w.value(0.0) == 0.0);
  CHECK(w.value(3.0) == 0.0);
  const auto n = psi_norms(w, 3.5);
  CHECK(n.dl1 == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(n.l2_theta == doctest::Approx(n.l2).epsilon(1e-14));
  const double l1_quad = oracle::integrate([&](double t) { return w.value(t); }, 0.0, 3.0, 4000);
  CHECK(n.l1 == doctest::Approx(l1_quad).epsilon(1e-8));
  CHECK(n.l1 < n.l2 * std::sqrt(3.0));
}

TEST_CASE("table weight closed forms and validation") {
  const auto w = WeightFunction::table({0.0, 1.0, 2.0}, {0.0, 1.0, 0.0});
  const auto n = psi_norms(w, 1.5);
  CHECK(n.l2 == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-14));
  CHECK(n.l1 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(n.dl2 == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(n.dl1 == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(n.l2_theta == doctest::Approx(std::sqrt(0.625)).epsilon(1e-12));
  CHECK(w.value(0.5) == doctest::Approx(0.5));
  CHECK(w.derivative(1.5) == doctest::Approx(-1.0));

  const auto quad = quad_norms(w, {0.0, 1.0, 2.0}, 1.5);
  CHECK(n.l2 == doctest::Approx(quad.l2).epsilon(1e-10));
  CHECK(n.dl1 == doctest::Approx(quad.dl1).epsilon(1e-10));

  CHECK_THROWS_AS(WeightFunction::table({0.0, 0.0, 1.0}, {0.0, 1.0, 0.0}), config_error);
  CHECK_THROWS_AS(WeightFunction::table({0.0, 1.0}, {0.0, 1.0}), config_error);
  CHECK_THROWS_AS(WeightFunction::table({0.0, 1.0, 2.0}, {0.0, -1.0, 0.0}), config_error);
}

TEST_CASE("shell projector plateau and component rules") {
  CHECK(window_profile(0.0) == 1.0);
  CHECK(window_profile(0.45) == 1.0);
  CHECK(window_profile(-0.45) == 1.0);
  CHECK(window_profile(0.91) == 0.0);
  CHECK(window_profile(-2.0) == 0.0);
  CHECK(window_profile(0.7) > 0.0);
  CHECK(window_profile(0.7) < 1.0);

  CHECK_THROWS_AS(shell_projector(0.0, 0.5, false), config_error);
  CHECK_THROWS_AS(shell_projector(0.5, 1.0, false), config_error);

  const auto model = ManifoldModel::circle(8);
  const auto b = DampingProfile::constant(model, 0.0);
  const auto bundle = OperatorBundle::assemble(model, b, 1.0, Formulation::P_m);
  const Vec u = Vec::Ones(bundle.dim());

  const Vec one_sided = apply_filter(bundle, shell_projector(0.5, 0.3, false), u);
  const Vec two_sided = apply_filter(bundle, shell_projector(0.5, 0.3, true), u);
  // h lambda_m = 0.5 sqrt(k^2+1): mode 2 sits on the plateau, modes 0,1 and
  // 4+ are outside the window support.
  for (int j = 0; j < bundle.block_count(); ++j) {
    const auto& rows = bundle.block_rows(j);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const int idx = bundle.block_offset(j) + int(i);
      const double lm = std::sqrt(std::pow(bundle.row_lambda(j, int(i)), 2) + 1.0);
      const double expect = window_profile((0.5 * lm - 1.0) / 0.3);
      if (rows[i].comp == 0) {
        CHECK(std::abs(one_sided(idx) - expect * u(idx)) < 1e-15);
      } else {
        CHECK(one_sided(idx) == cxd(0.0, 0.0));
      }
      CHECK(std::abs(two_sided(idx) - expect * u(idx)) < 1e-15);
    }
  }
  const int plateau = bundle.find_row(model.mode_index(2, 0), 0);
  REQUIRE(plateau >= 0);
  CHECK(std::abs(two_sided(plateau) - u(plateau)) == 0.0);
}

TEST_CASE("theorem31_check constant damping baseline") {
  const auto model = ManifoldModel::circle(24);
  const auto b = DampingProfile::constant(model, 1.0);
  const auto bundle = OperatorBundle::assemble(model, b, 1.0, Formulation::P_m);
  const Vec u0 = seeded_state(bundle.dim(), 41);
  const auto w = WeightFunction::psi_min(2.0);
  const double h = 1.0 / 16.0, eps = 0.25, T = 4.0;

  Theorem31Options avg;
  avg.variant = AverageVariant::Averaged;
  const auto ra = theorem31_check(bundle, u0, h, eps, T, w, avg);
  CHECK(ra.pass);
  CHECK(ra.params.at("captured_mass") > 0.0);
  CHECK(ra.params.at("fitted_C0") >= 0.0);
  CHECK(ra.params.at("fitted_C0") <= 10.0);
  CHECK(std::isfinite(ra.params.at("G")));
  CHECK(ra.rhs >= ra.lhs - ra.error_bar);
  CHECK(ra.params.at("q_norm") == doctest::Approx(1.0).epsilon(1e-10));

  Theorem31Options pt;
  pt.variant = AverageVariant::PointwiseTheta;
  pt.theta = 1.0;
  const auto rp = theorem31_check(bundle, u0, h, eps, T, w, pt);
  CHECK(rp.pass);
  const double l2t = rp.params.at("psi_l2_theta");
  CHECK(rp.params.at("first_term") == ra.params.at("first_term") / (l2t * l2t));
  CHECK(rp.params.at("remainder_coef") == ra.params.at("remainder_coef") / (l2t * l2t));

  Theorem31Options po;
  po.variant = AverageVariant::PointwiseOptimized;
  po.delta = 0.5;
  const auto ro = theorem31_check(bundle, u0, h, eps, T, w, po);
  CHECK(ro.pass);
  const double G = ro.params.at("G"), q = ro.params.at("q_norm");
  CHECK(ro.params.at("first_term") == doctest::Approx(2.5 * G * G / (T * T)).epsilon(1e-14));
  CHECK(ro.params.at("remainder_coef") ==
        doctest::Approx((1.0 + q * q) / 0.25 * h * T / (eps * eps)).epsilon(1e-14));

  Theorem31Options ts = avg;
  ts.two_sided = true;
  const auto rt = theorem31_check(bundle, u0, h, eps, T, w, ts);
  CHECK(rt.pass);
  CHECK(rt.params.at("captured_mass") >= ra.params.at("captured_mass") - 1e-12);
}

TEST_CASE("theorem31_check fitted constant is stable in h for constant damping") {
  const auto w = WeightFunction::psi_min(2.0);
  std::vector<double> fitted;
  for (double h : {1.0 / 8.0, 1.0 / 16.0}) {
    const int K = int(std::ceil(1.5 / h));
    const auto model = ManifoldModel::circle(K);
    const auto b = DampingProfile::constant(model, 1.0);
    const auto bundle = OperatorBundle::assemble(model, b, 1.0, Formulation::P_m);
    Theorem31Options opt;
    opt.variant = AverageVariant::PointwiseOptimized;
    const auto r = theorem31_check(bundle, seeded_state(bundle.dim(), 7), h, 0.25, 6.0, w, opt);
    CHECK(r.pass);
    fitted.push_back(r.params.at("fitted_C0"));
  }
  const double lo = std::max(1e-12, std::min(fitted[0], fitted[1]));
  CHECK(std::max(fitted[0], fitted[1]) / lo <= 4.0);
}

TEST_CASE("theorem31_check on an empty undamped window is trivially slack") {
  const auto model = ManifoldModel::circle(8);
  const auto b = DampingProfile::constant(model, 0.0);
  const auto bundle = OperatorBundle::assemble(model, b, 1.0, Formulation::P_m);
  const Vec u0 = seeded_state(bundle.dim(), 3);
  // The window [0.9, 1.1] / 0.55 = [1.636, 2.0] sits in the spectral gap
  // between lambda_m(1) and lambda_m(2), so it is resolvent-free and the
  // shell captures no modes.
  const auto r = theorem31_check(bundle, u0, 0.55, 0.1, 5.0, WeightFunction::psi_min(2.0));
  CHECK(r.pass);
  CHECK(r.lhs == 0.0);
  CHECK(r.params.at("captured_mass") == 0.0);
  CHECK(r.params.at("fitted_C0") == 0.0);
  CHECK(r.params.at("q_norm") == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.slack == r.rhs);
  CHECK(r.slack >= 0.0);
}

TEST_CASE("theorem31_check rejects windows touching the spectrum and bad input") {
  const auto model = ManifoldModel::circle(8);
  const auto b0 = DampingProfile::constant(model, 0.0);
  const auto p = OperatorBundle::assemble(model, b0, 1.0, Formulation::P_m);
  const Vec u0 = seeded_state(p.dim(), 5);
  const auto w = WeightFunction::psi_min(2.0);
  // [0.8, 1.2] / 0.45 contains lambda_m(2) = sqrt(5).
  CHECK_THROWS_AS(theorem31_check(p, u0, 0.45, 0.2, 4.0, w), config_error);

  const auto a = OperatorBundle::assemble(model, b0, 1.0, Formulation::A_m);
  CHECK_THROWS_AS(theorem31_check(a, seeded_state(a.dim(), 5), 0.5, 0.2, 4.0, w), config_error);

  Theorem31Options bad;
  bad.delta = 1.0;
  bad.variant = AverageVariant::PointwiseOptimized;
  CHECK_THROWS_AS(theorem31_check(p, u0, 0.5, 0.2, 4.0, w, bad), config_error);
  CHECK_THROWS_AS(theorem31_check(p, u0, 0.5, 0.2, 4.0, WeightFunction::ramp()), config_error);
}

TEST_CASE("modified_resolvent_check matches the undamped closed form") {
  const auto model = ManifoldModel::circle(6);
  const auto b = DampingProfile::constant(model, 0.0);
  const auto bundle = OperatorBundle::assemble(model, b, 1.0, Formulation::P_m);
  const auto M = envelope_from_table({0.0, 5.0}, {10.0, 50.0});
  const double eps = 0.2;
  const std::vector<double> alphas = {0.25, 1.0};
  const std::vector<double> taus = {-3.0, -0.7, 0.0, 0.7, 3.0};

  const auto res = modified_resolvent_check(bundle, M, eps, 0.5, alphas, taus);
  CHECK(res.report.pass);

  // Eigenvalues are +/- lambda_m; everything diagonalizes, so the filtered
  // resolvent norm is an explicit maximum over modes.
  std::vector<double> lms;
  for (double l : model.lambdas()) lms.push_back(std::sqrt(l * l + 1.0));
  for (const auto& s : res.samples) {
    const auto [tau, alpha, value] = std::tuple{s[0], s[1], s[2]};
    double expect = 0.0;
    for (double lm : lms)
      for (double mu : {lm, -lm})
        expect = std::max(expect, 1.0 / (std::abs(cxd(mu - tau, alpha)) * M(lm / (1.0 - eps))));
    CHECK(value == doctest::Approx(expect).epsilon(1e-9));
    if (s[1] == 1.0) CHECK(value <= 1.0 / M(0.0) + 1e-12);
  }
}

TEST_CASE("modified_resolvent_check rejects weak envelopes and spectral grid points") {
  const auto model = ManifoldModel::circle(6);
  const auto b = DampingProfile::constant(model, 0.0);
  const auto bundle = OperatorBundle::assemble(model, b, 1.0, Formulation::P_m);
  const std::vector<double> alphas = {0.5};

  const auto weak = envelope_from_table({0.0, 5.0}, {0.01, 0.011});
  CHECK_THROWS_AS(modified_resolvent_check(bundle, weak, 0.2, 0.5, alphas, {0.7}), config_error);

  const auto M = envelope_from_table({0.0, 5.0}, {10.0, 50.0});
  CHECK_THROWS_AS(
      modified_resolvent_check(bundle, M, 0.2, 0.5, alphas, {std::sqrt(2.0)}), config_error);

  CHECK_THROWS_AS(envelope_from_table({0.0, 1.0}, {2.0, 1.0}), config_error);
  CHECK_THROWS_AS(envelope_from_table({1.0, 0.5}, {1.0, 2.0}), config_error);
  CHECK_THROWS_AS(envelope_from_table({0.0, 1.0}, {0.0, 1.0}), config_error);
}

TEST_CASE("modified_resolvent_check is stable under tau grid doubling") {
  const auto model = ManifoldModel::circle(12);
  const auto b = DampingProfile::constant(model, 1.0);
  const auto bundle = OperatorBundle::assemble(model, b, 1.0, Formulation::P_m);

  double top = 0.0;
  for (double l : model.lambdas()) top = std::max(top, std::sqrt(l * l + 1.0));
  const auto scan = scan_imaginary_axis(bundle, linspace(0.0, 2.0 * top, 161), true);
  auto M = envelope_from_scan(scan);
  CHECK(M(-1.3) == M(1.3));
  CHECK(M(3.0) >= envelope_at(scan, 3.0));
  CHECK(M(2.0 * top) == envelope_at(scan, 2.0 * top));

  const std::vector<double> alphas = {0.0, 0.25, 0.5, 1.0};
  const auto coarse =
      modified_resolvent_check(bundle, M, 0.2, 0.5, alphas, default_tau_grid(bundle, 60, &scan));
  const auto fine =
      modified_resolvent_check(bundle, M, 0.2, 0.5, alphas, default_tau_grid(bundle, 120, &scan));
  CHECK(coarse.report.pass);
  CHECK(fine.report.pass);
  CHECK(fine.c0 / coarse.c0 <= 1.1);
  CHECK(fine.c0 / coarse.c0 >= 0.9);
}

TEST_CASE("default_tau_grid is symmetric and splices scan peaks") {
  const auto model = ManifoldModel::circle(6);
  const auto b = DampingProfile::constant(model, 0.5);
  const auto bundle = OperatorBundle::assemble(model, b, 1.0, Formulation::P_m);
  const auto grid = default_tau_grid(bundle, 50);
  double top = 0.0;
  for (double l : model.lambdas()) top = std::max(top, std::sqrt(l * l + 1.0));
  CHECK(grid.front() == doctest::Approx(-2.0 * top));
  CHECK(grid.back() == doctest::Approx(2.0 * top));
  CHECK(int(grid.size()) == 101);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);

  ResolventScan scan;
  scan.s = {1.0};
  scan.value = {1.0};
  scan.peak_s = {1.2345};
  const auto spliced = default_tau_grid(bundle, 50, &scan);
  CHECK(spliced.size() == 103);
  CHECK(std::count_if(spliced.begin(), spliced.end(),
                      [](double s) { return std::abs(std::abs(s) - 1.2345) < 1e-12; }) == 2);
}

TEST_CASE("filtered_average_check holds and decays for constant damping") {
  const auto model = ManifoldModel::circle(8);
  const auto b = DampingProfile::constant(model, 1.0);
  const auto bundle = OperatorBundle::assemble(model, b, 1.0, Formulation::P_m);
  const Vec u0 = seeded_state(bundle.dim(), 11);

  const auto M = envelope_from_table({0.0, 50.0}, {4.0, 4.0});
  const std::vector<double> alphas = {0.0, 0.25, 0.5, 1.0};
  const auto mr =
      modified_resolvent_check(bundle, M, 0.2, 0.5, alphas, default_tau_grid(bundle, 80));
  REQUIRE(mr.report.pass);

  const auto Psi = WeightFunction::psi_min(2.0);
  std::vector<double> lt, ll;
  for (double T : {4.0, 8.0, 16.0, 32.0, 64.0}) {
    const auto r = filtered_average_check(bundle, M, 0.2, Psi, T, u0, mr.c0);
    CHECK(r.pass);
    CHECK(r.lhs > 0.0);
    lt.push_back(std::log(T));
    ll.push_back(std::log(r.lhs));
  }
  CHECK(slope_fit(lt, ll) <= -0.9);
}

TEST_CASE("filtered_average_check zero state and ramp horizon") {
  const auto model = ManifoldModel::circle(6);
  const auto b = DampingProfile::constant(model, 0.7);
  const auto bundle = OperatorBundle::assemble(model, b, 1.0, Formulation::P_m);
  const auto M = envelope_from_table({0.0, 40.0}, {4.0, 4.0});

  const auto zero = filtered_average_check(bundle, M, 0.1, WeightFunction::psi_min(2.0), 8.0,
                                           Vec::Zero(bundle.dim()), 1.0);
  CHECK(zero.pass);
  CHECK(zero.lhs == 0.0);
  CHECK(zero.rhs == 0.0);

  FilteredAverageOptions opts;
  opts.horizon_factor = 6.0;
  const auto ramp = filtered_average_check(bundle, M, 0.1, WeightFunction::ramp(), 4.0,
                                           seeded_state(bundle.dim(), 13), 2.0, opts);
  CHECK(ramp.params.at("horizon") == doctest::Approx(24.0));
  CHECK(std::isfinite(ramp.lhs));
  CHECK(ramp.lhs > 0.0);
}

TEST_CASE("filtered_average_check works in the wave-side picture too") {
  const auto model = ManifoldModel::circle(6);
  const auto b = DampingProfile::constant(model, 1.0);
  const auto am = OperatorBundle::assemble(model, b, 1.0, Formulation::A_m);
  const auto pm = OperatorBundle::assemble(model, b, 1.0, Formulation::P_m);
  const auto M = envelope_from_table({0.0, 40.0}, {4.0, 4.0});
  const Vec ua = seeded_state(am.dim(), 17);
  const Vec up = conjugate_state(am, pm, ua);

  const auto ra = filtered_average_check(am, M, 0.1, WeightFunction::psi_min(2.0), 6.0, ua, 1.5);
  const auto rp = filtered_average_check(pm, M, 0.1, WeightFunction::psi_min(2.0), 6.0, up, 1.5);
  CHECK(ra.lhs == doctest::Approx(rp.lhs).epsilon(1e-8));
  CHECK(ra.rhs == doctest::Approx(rp.rhs).epsilon(1e-8));
}

TEST_CASE("frequency mixing scan vanishes to rounding for non-mixing profiles") {
  // The masked couplings are exactly zero in exact arithmetic; the Fourier
  // coefficients carry quadrature roundoff, so the measured norms sit at the
  // rounding floor rather than at literal zero.
  const auto model = ManifoldModel::circle(16);
  const auto pair = DyadicPair::standard();

  const auto bc = DampingProfile::constant(model, 0.8);
  const auto sc = frequency_mixing_scan(model, bc, 1.0, {0, 1, 2, 3}, pair);
  for (const auto& lev : sc.levels) CHECK(lev.norm <= 1e-13);
  CHECK(std::isnan(sc.decay_exponent));

  const auto band = DampingProfile::from_function(
      model, [](double x, double) { return 1.0 + std::cos(x); }, [](double r) { return r; },
      "band", true);
  const auto sb = frequency_mixing_scan(model, band, 1.0, {2, 3}, pair);
  for (const auto& lev : sb.levels) CHECK(lev.norm <= 1e-13);
  CHECK(std::isnan(sb.decay_exponent));

  const auto torus = ManifoldModel::torus2(8);
  const auto tc = DampingProfile::constant(torus, 0.3);
  const auto st = frequency_mixing_scan(torus, tc, 1.0, {0, 1, 2}, DyadicPair::standard());
  for (const auto& lev : st.levels) CHECK(lev.norm <= 1e-13);
  CHECK(std::isnan(st.decay_exponent));

  CHECK_THROWS_AS(frequency_mixing_scan(model, bc, 1.0, {4}, pair), infeasible_error);
}

TEST_CASE("frequency mixing scan decays for a smooth bump and reports conditions") {
  const auto model = ManifoldModel::circle(64);
  const auto b = DampingProfile::smooth_bump(model, 1.0, {pi_const, 0.0}, 2.0);
  const auto pair = DyadicPair::standard();
  const auto M = envelope_from_table({0.0, 64.0}, {2.0, 130.0});
  const std::function<double(double)> Mf = M;

  const auto scan = frequency_mixing_scan(model, b, 1.0, {2, 3, 4}, pair, &Mf);
  REQUIRE(scan.levels.size() == 3);
  for (const auto& lev : scan.levels) {
    CHECK(lev.norm > 0.0);
    CHECK(lev.shell_modes > 0);
  }
  CHECK(scan.levels[2].norm < scan.levels[0].norm);
  CHECK(scan.decay_exponent > 1.5);
  CHECK(scan.temperance.size() == 3);
  for (double t : scan.temperance) CHECK(t >= 1.0);
  CHECK(std::isfinite(scan.envelope_exponent));

  // Widening the outer cutoff can only shrink the masked rows.
  DyadicPair wide = pair;
  wide.phitilde = [](double s) {
    const double a = std::abs(s);
    return level_cutoff_chi(0.2 * a) - level_cutoff_chi(80.0 * a);
  };
  const auto ws = frequency_mixing_scan(model, b, 1.0, {2, 3, 4}, wide);
  for (std::size_t i = 0; i < ws.levels.size(); ++i)
    CHECK(ws.levels[i].norm <= scan.levels[i].norm * (1.0 + 1e-12));
}

TEST_CASE("reports serialize to json and csv") {
  InequalityReport a;
  a.name = "demo/one";
  a.lhs = 1.0;
  a.rhs = 2.0;
  a.slack = 1.0;
  a.pass = true;
  a.params["h"] = 0.5;
  InequalityReport b;
  b.name = "demo/two";
  b.lhs = 3.0;
  b.rhs = 3.5;
  b.slack = 0.5;
  b.pass = true;
  b.params["T"] = 4.0;

  const auto j = nlohmann::json::parse(report_to_json(a));
  CHECK(j["name"] == "demo/one");
  CHECK(j["pass"] == true);
  CHECK(j["params"]["h"] == 0.5);

  const std::string path = "estimates_reports_test.csv";
  reports_to_csv({a, b}, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line.rfind("# {", 0) == 0);
  CHECK(line.find("demo/two") != std::string::npos);
  std::getline(in, line);
  CHECK(line == "idx,lhs,rhs,slack,error_bar,pass,T,h");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
  in.close();
  std::remove(path.c_str());
}
