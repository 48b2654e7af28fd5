#pragma once

#include <array>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "common.hpp"
#include "evolution.hpp"
#include "operators.hpp"
#include "spectra.hpp"

namespace dwlab {

// Nonnegative temporal weight supported in [0, +infinity) with square
// integrable a.e. derivative. psi_min(L) is the piecewise linear profile
// sqrt(2) * (t on [0,1], (L-t)/(L-1) on (1,L]); bump(L) is a smooth bump on
// (0,L) normalized to peak value 1; ramp() is min(t,1), the choice without
// compact support; table interpolates user knots linearly.
class WeightFunction {
 public:
  enum class Kind { Ramp, Bump, PsiMin, Table };

  static WeightFunction ramp();
  static WeightFunction bump(double L);
  static WeightFunction psi_min(double L);  // needs L > 1
  static WeightFunction table(std::vector<double> knots, std::vector<double> values);

  Kind kind() const { return kind_; }
  double shape_parameter() const { return L_; }
  double support_end() const;  // +infinity for the ramp

  double value(double t) const;
  double derivative(double t) const;  // a.e.

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return vals_; }

 private:
  WeightFunction() = default;
  Kind kind_ = Kind::Ramp;
  double L_ = 0.0;
  std::vector<double> knots_;
  std::vector<double> vals_;
};

struct WeightNorms {
  double l2 = 0.0;        // ||psi||_{L2(0,inf)}, +infinity for the ramp
  double dl2 = 0.0;       // ||psi'||_{L2}
  double l1 = 0.0;        // ||psi||_{L1}, +infinity for the ramp
  double dl1 = 0.0;       // ||psi'||_{L1}
  double l2_theta = 0.0;  // ||psi||_{L2(0,theta)}
};

// Closed forms for the ramp, psi_min and table kinds, refined quadrature for
// the bump.
WeightNorms psi_norms(const WeightFunction& w, double theta = 1.0);

struct InequalityReport {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  double slack = 0.0;  // rhs - lhs
  double error_bar = 0.0;
  bool pass = false;  // slack >= -error_bar
  std::map<std::string, double> params;
};

std::string report_to_json(const InequalityReport& r);

// One row per report; the shared numeric columns plus the union of parameter
// keys. Report names go into the metadata line.
void reports_to_csv(const std::vector<InequalityReport>& reports, const std::string& path);

// Window cutoff at rescaled coordinate x: exactly 1 for |x| <= 5/11, exactly
// 0 for |x| >= 10/11, smooth, even and nonincreasing in |x| between.
double window_profile(double x);

// Projector onto the frequency shell |h lambda - 1| < eps: positive half-axis
// only (rule First) or both half-axes (rule Both).
SpectralFilter shell_projector(double h, double eps, bool two_sided);

enum class AverageVariant { Averaged, PointwiseTheta, PointwiseOptimized };

struct Theorem31Options {
  AverageVariant variant = AverageVariant::Averaged;
  bool two_sided = false;
  double theta = 1.0;  // evaluation time in units of T_h (PointwiseTheta)
  double delta = 0.5;  // margin in (0,1) (PointwiseOptimized)
  int window_grid = 33;
  ResolventOptions resolvent{};
  EvolveOptions evolve{};
};

// Long-time averaged (or pointwise) energy of the shell-filtered state
// against the resolvent-controlled bound. The state is filtered internally;
// the window resolvent bound G comes from a certified scan, and the report
// records the smallest leading constant for which the bound holds, to be
// regression-tested for stability rather than asserted a priori.
InequalityReport theorem31_check(const OperatorBundle& bundle, const Vec& u0, double h,
                                 double eps, double T_h, const WeightFunction& w,
                                 const Theorem31Options& opts = {});

// Even envelope factories for the modified-resolvent machinery. The scan
// variant takes the running maximum of a resolvent scan including the first
// sample beyond |tau|, so flanks rising between grid points stay dominated;
// the table variant interpolates (tau, value) pairs and rejects non-monotone
// data.
std::function<double(double)> envelope_from_scan(ResolventScan scan);
std::function<double(double)> envelope_from_table(std::vector<double> tau,
                                                  std::vector<double> value);

// Symmetric grid of spectral-axis sample points, 2 * count + 1 nodes covering
// [-2 max lambda_m, 2 max lambda_m], with scan peak locations spliced in.
std::vector<double> default_tau_grid(const OperatorBundle& bundle, int count = 100,
                                     const ResolventScan* scan = nullptr);

struct ModifiedResolventResult {
  double c0 = 0.0;
  double tau_at_max = 0.0;
  double alpha_at_max = 0.0;
  std::vector<std::array<double, 3>> samples;  // (tau, alpha, value)
  InequalityReport report;
};

// C0 = max over the grid of || M_eps(Lambda_m)^{-1} (P + i alpha - tau)^{-1} ||
// with M_eps(s) = M(s / (1 - eps)), after checking that M dominates the
// resolvent along the real axis.
ModifiedResolventResult modified_resolvent_check(const OperatorBundle& bundle,
                                                 const std::function<double(double)>& M,
                                                 double eps, double delta,
                                                 const std::vector<double>& alpha_grid,
                                                 const std::vector<double>& tau_grid);

struct FilteredAverageOptions {
  double horizon_factor = 8.0;  // horizon in units of T for weights without
                                // compact support
  int max_nodes = 4001;
  EvolveOptions evolve{};
};

// Time average of the envelope-filtered energy along the flow against
// (c0/T)^2 ||Psi'||^2 E(0). For weights without compact support the integral
// is truncated at the horizon; the integrand is nonnegative, so passing on
// the truncation is implied by the full bound.
InequalityReport filtered_average_check(const OperatorBundle& bundle,
                                        const std::function<double(double)>& M, double eps,
                                        const WeightFunction& Psi, double T, const Vec& u0,
                                        double c0, const FilteredAverageOptions& opts = {});

// Dyadic shell pair: phi supported in 1/2 <= |s| <= 2 with
// sum_k phi(s / 2^k) = 1 for s > 1/2 (telescoping), phitilde equal to exactly
// 1 on [1/20, 5/2], a wide neighborhood of supp phi, and supported in
// [1/40, 5]. The plateau reaches far below supp phi so that unmasked rows
// sit many modes away from the shell.
struct DyadicPair {
  std::function<double(double)> phi;
  std::function<double(double)> phitilde;
  static DyadicPair standard();
};

struct MixingLevel {
  int k = 0;
  double lambda = 0.0;  // 2^k
  double norm = 0.0;    // ||(1 - phitilde(Lambda_m / 2^k)) b phi(Lambda_m / 2^k)||
  int shell_modes = 0;  // modes inside supp phi at this level
  double envelope = 0.0;       // M(2^k), when an envelope is supplied
  double envelope_at4 = 0.0;   // M(2^{k+2})
};

struct MixingScan {
  std::vector<MixingLevel> levels;
  // Fitted exponent N in norm ~ lambda^{-N} over the levels with nonzero
  // norm; NaN when fewer than two such levels exist.
  double decay_exponent = 0.0;
  // Fitted growth exponent of the envelope over the level lambdas and the
  // per-level temperance ratios M(4 lambda) / M(lambda); NaN / empty without
  // an envelope.
  double envelope_exponent = 0.0;
  std::vector<double> temperance;
};

// Exact norms of the masked multiplication operator per dyadic level: how
// much the damping couples a frequency shell to the far complement. Levels
// need 2^{k+1} <= K.
MixingScan frequency_mixing_scan(const ManifoldModel& model, const DampingProfile& b, double m,
                                 const std::vector<int>& levels, const DyadicPair& pair,
                                 const std::function<double(double)>* envelope = nullptr);

void mixing_to_csv(const MixingScan& scan, const std::string& path);

}  // namespace dwlab
