#pragma once

#include <array>
#include <functional>
#include <vector>

#include "common.hpp"

namespace dwlab {

enum class ManifoldKind { Circle, Torus2 };

// Integer lattice mode; k[1] is always 0 on the circle.
struct Mode {
  std::array<int, 2> k{0, 0};
};

struct PhasePoint {
  std::array<double, 2> x{0.0, 0.0};
  std::array<double, 2> xi{0.0, 0.0};
};

// Spectral model of S^1 = R/2piZ or T^2 = (R/2piZ)^2: retained Fourier modes
// |k|_inf <= K, frequencies lambda_k = |k|_2, and a uniform quadrature grid
// fine enough (N_q >= 4K+1 per dimension) to integrate products of retained
// modes exactly.
class ManifoldModel {
 public:
  static ManifoldModel circle(int K, int nq = 0);
  static ManifoldModel torus2(int K, int nq = 0);

  ManifoldKind kind() const { return kind_; }
  int K() const { return K_; }
  int dim() const { return kind_ == ManifoldKind::Circle ? 1 : 2; }
  int nq() const { return nq_; }
  double volume() const { return volume_; }

  int mode_count() const { return static_cast<int>(modes_.size()); }
  const std::vector<Mode>& modes() const { return modes_; }
  const std::vector<double>& lambdas() const { return lambdas_; }
  double lambda(int i) const { return lambdas_[i]; }

  // Index of mode (k1,k2) in the sorted layout; -1 if outside the truncation.
  int mode_index(int k1, int k2) const;

  // j-th quadrature abscissa, x_j = 2pi j / N_q.
  double grid_point(int j) const { return two_pi * j / nq_; }

 private:
  ManifoldModel() = default;
  void finalize();

  ManifoldKind kind_ = ManifoldKind::Circle;
  int K_ = 0;
  int nq_ = 0;
  double volume_ = 0.0;
  std::vector<Mode> modes_;
  std::vector<double> lambdas_;
  std::vector<int> lookup_;
};

struct EigenDatum {
  Mode k;
  double lambda;
};

std::vector<EigenDatum> eigendata(const ManifoldModel& model);

// Exact homogeneous geodesic flow: (x, xi) -> (x + t xi/|xi| mod 2pi, xi).
PhasePoint geodesic_flow(const ManifoldModel& model, const PhasePoint& p, double t);

struct GccResult {
  bool pass = false;
  PhasePoint witness;       // valid only when pass == false
  double horizon = 0.0;
  int n_x = 0, n_theta = 0;
  // This is a sampled falsifier over a finite grid and horizon, not a proof.
  std::string note;
};

// Samples the unit cotangent bundle and checks every sampled geodesic meets
// the support set within time T.
GccResult gcc_check(const ManifoldModel& model,
                    const std::function<bool(double, double)>& in_support, double T,
                    int n_x = 64, int n_theta = 256);

// Max over probes of (1/t_max) log ||d phi^{t_max}||, Jacobian by central
// differences with step 1e-6 per phase coordinate.
double expansion_rate(const ManifoldModel& model, double t_max,
                      const std::vector<PhasePoint>& probes);

}  // namespace dwlab
