#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "common.hpp"
#include "manifold.hpp"

namespace dwlab {

// Nonnegative damping coefficient b on the model, with a declared modulus of
// continuity and a sample cache on the quadrature grid. Profiles are immutable
// and keep a non-owning pointer to their model.
class DampingProfile {
 public:
  static DampingProfile constant(const ManifoldModel& model, double value);
  // A * normalized bump of radius `width` about `center` (torus distance).
  static DampingProfile smooth_bump(const ManifoldModel& model, double amplitude,
                                    std::array<double, 2> center, double width);
  // x-only plateau A on [lo+w, hi-w], smooth transitions, support [lo, hi].
  static DampingProfile strip(const ManifoldModel& model, double amplitude, double lo, double hi,
                              double transition);
  // A * (angular distance in x to x0)^{2 alpha}, smoothly tapered off near the
  // antipode so the profile is smooth away from its zero set.
  static DampingProfile distance_power(const ManifoldModel& model, double amplitude, double x0,
                                       double alpha);
  static DampingProfile from_table(const ManifoldModel& model, const std::vector<double>& samples,
                                   bool x_only = false);
  static DampingProfile from_function(const ManifoldModel& model,
                                      std::function<double(double, double)> eval,
                                      std::function<double(double)> omega, std::string family,
                                      bool x_only);

  const ManifoldModel& model() const { return *model_; }
  const std::string& family() const { return family_; }
  bool x_only() const { return x_only_; }
  double sup_norm() const { return sup_norm_; }
  double operator()(double x1, double x2 = 0.0) const { return eval_(x1, x2); }
  double omega(double r) const { return omega_(r); }
  const std::vector<double>& samples() const { return samples_; }

  // Sampled zero set {b <= 1e-12 * sup}; indices into the quadrature grid
  // (x1-major for the torus).
  std::vector<int> zero_set_indices() const;
  // Distance from a point to the sampled zero set (flat torus metric);
  // +inf when the sampled zero set is empty.
  double distance_to_zero_set(double x1, double x2 = 0.0) const;

 private:
  DampingProfile() = default;
  void cache_samples();

  const ManifoldModel* model_ = nullptr;
  std::function<double(double, double)> eval_;
  std::function<double(double)> omega_;
  std::string family_;
  bool x_only_ = false;
  std::vector<double> samples_;
  double sup_norm_ = 0.0;
};

// Smooth compactly supported kernel data for the zero-set-preserving
// regularization: N = normalized exp(-1/(1-|x|^2)) bump on B(0,1), and the
// level cutoff chi (1 on [-1,1], 0 off [-2,2]) built from the same bump by
// integration.
struct MollifierSpec {
  double eps = 0.1;            // regularization width, in (0,1)
  int kernel_nodes = 128;      // quadrature subintervals per dimension
};

double mollifier_kernel_1d(double u);         // normalized, supported in [-1,1]
double mollifier_kernel_1d_derivative(double u);
double level_cutoff_chi(double s);            // 1 on [-1,1], 0 off [-2,2]

// Regularized profile: convolution with the scaled kernel after removing the
// sublevel set {b <= omega(2 eps)} of the declared modulus, so the result
// vanishes exactly on the eps-dilation of the sampled zero set.
DampingProfile mollify(const DampingProfile& b, const MollifierSpec& spec);

// Derivative sup-norm of a mollified profile, scanned on a dense grid
// (d/dx1 only for x-only and 1-D profiles; gradient norm otherwise).
double mollified_gradient_sup(const DampingProfile& b, const MollifierSpec& spec,
                              int scan_points = 4096);

// Galerkin image of multiplication by b: B[i,j] = bhat(k_i - k_j) via the
// quadrature-grid transform. Hermitian by construction; PSD whenever the
// samples are nonnegative.
Mat multiplication_matrix(const ManifoldModel& model, const DampingProfile& b);

// One-dimensional factor for x-only torus profiles: the (2K+1)^2 matrix in
// the x-modes that every k_y block shares.
Mat multiplication_matrix_1d(const ManifoldModel& model, const DampingProfile& b);

// Transform coefficients of the profile along x at offsets -max_freq..max_freq
// (index kappa + max_freq). Requires a circle model or an x-only profile.
std::vector<cxd> line_coefficients(const ManifoldModel& model, const DampingProfile& b,
                                   int max_freq);

struct ModulusTable {
  std::vector<double> distance;  // bin upper edges
  std::vector<double> value;     // monotone envelope of per-bin max |b(x)-b(y)|
};

ModulusTable modulus_fit(const DampingProfile& b, int pair_count, unsigned long seed = 1234,
                         int bins = 64);

}  // namespace dwlab
