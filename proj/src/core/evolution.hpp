#pragma once

#include <functional>
#include <string>
#include <vector>

#include "spectra.hpp"

namespace dwlab {

struct EnergyTrace {
  std::string tag;
  std::vector<double> t;
  std::vector<double> energy;                  // at every node, in the bundle weight
  std::vector<double> dissipation_rate;        // -d/dt energy along the flow
  std::vector<double> cumulative_dissipation;  // integral of the rate from t[0]
  std::vector<int> snapshot_index;             // nodes whose states are stored
  std::vector<Vec> snapshots;                  // thinned to at most 4096 states
  double initial_energy = 0.0;
};

struct EvolveOptions {
  // Propagate with stepwise matrix exponentials even where the eigenbasis is
  // well-conditioned. Cheaper than diagonalizing when the grid has only a
  // handful of nodes.
  bool force_exponential = false;
};

// Uniform grid on [0,T] with dt = min(0.1/(1+sup b), T/1000). The energy
// moves on the 1/sup(b) scale, so this resolves it regardless of how fast the
// state itself rotates.
std::vector<double> default_time_grid(const OperatorBundle& bundle, double T);

// Propagates u0 across the grid blockwise: through the eigenbasis where its
// condition stays below 1e8, by scaling-and-squaring exponentials otherwise.
EnergyTrace evolve(const OperatorBundle& bundle, const Vec& u0, const std::vector<double>& t_grid,
                   const EvolveOptions& opts = {});

// State at a single time, same propagation rules.
Vec evolve_state(const OperatorBundle& bundle, const Vec& u0, double t,
                 const EvolveOptions& opts = {});

struct SpectralFilter {
  enum class Component { Both, First };
  std::function<double(double)> profile;  // even; sampled at sqrt(lambda^2+m)
  Component rule = Component::Both;
};

// Diagonal action in mode space: each coefficient is scaled by
// profile(sqrt(lambda^2+m)). Rule Both touches every component; rule First
// scales the first component and zeroes the second (one-sided window).
Vec apply_filter(const OperatorBundle& bundle, const SpectralFilter& filter, const Vec& u);

// Dense matrix of the same action, for norm measurements.
Mat filter_matrix(const OperatorBundle& bundle, const SpectralFilter& filter);

struct PerturbationGap {
  double gap = 0.0;    // measured ||e^{itP_2} - e^{itP_1}||
  double bound = 0.0;  // t * ||B_2 - B_1||
};

// Requires two P_m bundles over the same model and mass. Throws if the
// measured gap ever exceeds the bound.
PerturbationGap semigroup_perturbation_gap(const OperatorBundle& b1, const OperatorBundle& b2,
                                           double t);

struct CommutatorGrowth {
  double growth = 0.0;           // ||e^{tG} A - A e^{tG}||
  double bound = 0.0;            // t * ||[G, A]||, contraction constants
  double commutator_norm = 0.0;  // ||[G, A]||
};

CommutatorGrowth commutator_growth(const OperatorBundle& bundle, const Mat& A, double t);

// (1/T) * integral of psi(t/T)^2 E(t) over the trace grid.
double averaged_energy(const EnergyTrace& trace, const std::function<double(double)>& psi,
                       double T);

void trace_to_csv(const EnergyTrace& trace, const std::string& path);

}  // namespace dwlab
