#pragma once

#include <functional>
#include <string>
#include <vector>

#include "estimates.hpp"

namespace dwlab {

// Periodized Gaussian wave packet at phase-space center (x0, xi0), |xi0| = 1,
// projected to the mode lattice and renormalized to a unit coefficient
// vector. The residual records how far the projection drifted from the
// continuum normalization before the rescale.
struct CoherentState {
  PhasePoint center;
  double h = 0.0;
  Vec coefficients;
  double normalization_residual = 0.0;
};

// Needs 1/h <= K/2 so the frequency center sits in the interior of the
// truncation with room for the packet's spectral width.
CoherentState build_coherent(const ManifoldModel& model, const PhasePoint& center, double h);

// <a(h sqrt(-Delta + m)) v, v> for a scalar coefficient vector v.
double symbol_expectation(const ManifoldModel& model, const Vec& coefficients, double m, double h,
                          const std::function<double(double)>& a);

// integral_0^t b(pi(phi^{-s}(zeta0))) ds along the straight-line geodesic
// flow, by composite Simpson with step at most 0.01.
double classical_damping_integral(const ManifoldModel& model, const DampingProfile& b,
                                  const PhasePoint& zeta0, double t);

struct EhrenfestOptions {
  double eps = 0.1;   // fixed window half-width (rho == 0)
  double rho = 0.0;   // optional power law eps(h) = h^rho, 0 <= rho <= 0.4
  double nu = 0.4;    // damping regularization width h^nu, nu in (0, 1/2)
  double delta = 0.5; // delta in the pointwise bound behind the implied G
  int window_grid = 33;
  ResolventOptions resolvent{};
  EvolveOptions evolve{};
};

struct EhrenfestRun {
  double h = 0.0;
  double T = 0.0;    // mu * log(1/h)
  double eps = 0.0;  // window half-width used at this h
  double ratio = 0.0;            // E(T)/E(0) of the filtered packet
  double classical = 0.0;        // exp(-2 integral of the regularized damping)
  double g_measured = 0.0;       // window resolvent sup on the declared grid
  double g_implied = 0.0;        // T sqrt(max(0, ratio - slack) / (2 + delta))
  double slack = 0.0;            // fitted remainder term at this h
  double fitted_c0 = 0.0;
  double q_norm = 0.0;
  double mollification_gap = 0.0;   // sup |b_{h^nu} - b|
  double perturbation_bound = 0.0;  // T * generator gap, the evolution distance bound
  double normalization_residual = 0.0;
  double captured_mass = 0.0;       // window-filtered fraction of the packet energy
};

struct EhrenfestReport {
  double mu = 0.0;
  double nu = 0.0;
  double rho = 0.0;
  double delta = 0.0;
  std::vector<EhrenfestRun> runs;  // ordered by decreasing h
};

// Energy conservation of a window-filtered wave packet up to T = mu log(1/h),
// against the classical damping picture, with the resolvent lower bound
// implied by near-conservation. Each h runs the regularized damping b_{h^nu};
// the regularization gap is checked against the declared modulus of
// continuity before the run proceeds.
EhrenfestReport ehrenfest_experiment(const ManifoldModel& model, const DampingProfile& b, double m,
                                     const PhasePoint& zeta0, double mu,
                                     const std::vector<double>& h_grid,
                                     const EhrenfestOptions& opts = {});

std::string ehrenfest_to_json(const EhrenfestReport& rep);
void ehrenfest_to_csv(const EhrenfestReport& rep, const std::string& path);

}  // namespace dwlab
