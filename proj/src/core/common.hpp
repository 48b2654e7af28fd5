#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dwlab {

using cxd = std::complex<double>;
using Mat = Eigen::MatrixXcd;
using Vec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double pi_const = 3.1415926535897932384626433832795;
inline constexpr double two_pi = 2.0 * pi_const;

// Thrown when a request is structurally valid but cannot be honored at the
// current truncation (e.g. h too small for K); carries a suggested fix.
class infeasible_error : public std::runtime_error {
 public:
  infeasible_error(const std::string& what, int required_K)
      : std::runtime_error(what), required_K_(required_K) {}
  int required_K() const { return required_K_; }

 private:
  int required_K_;
};

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double wrap_2pi(double x) {
  double r = std::fmod(x, two_pi);
  if (r < 0) r += two_pi;
  return r;
}

// Composite Simpson on [a,b] with n subintervals (n forced even).
template <class F>
double simpson(F&& f, double a, double b, int n) {
  if (n < 2) n = 2;
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

inline std::vector<double> linspace(double a, double b, int n) {
  if (n < 1) throw std::invalid_argument("linspace: need >= 1 point");
  std::vector<double> out(n);
  if (n == 1) {
    out[0] = a;
    return out;
  }
  for (int i = 0; i < n; ++i) out[i] = a + (b - a) * double(i) / double(n - 1);
  return out;
}

// Running integral of r over the grid: cumulative Simpson on uniform grids
// (quadratic through each node triple), trapezoid otherwise.
inline std::vector<double> cumulative_integral(const std::vector<double>& t,
                                               const std::vector<double>& r) {
  const std::size_t n = t.size();
  std::vector<double> cum(n, 0.0);
  if (n < 2) return cum;
  bool uniform = true;
  const double dt0 = t[1] - t[0];
  for (std::size_t i = 2; i < n; ++i)
    if (std::abs((t[i] - t[i - 1]) - dt0) > 1e-12 * std::max(1.0, std::abs(dt0))) {
      uniform = false;
      break;
    }
  if (n == 2 || !uniform) {
    for (std::size_t i = 1; i < n; ++i)
      cum[i] = cum[i - 1] + 0.5 * (t[i] - t[i - 1]) * (r[i] + r[i - 1]);
    return cum;
  }
  cum[1] = dt0 / 12.0 * (5.0 * r[0] + 8.0 * r[1] - r[2]);
  for (std::size_t i = 2; i < n; ++i)
    cum[i] = cum[i - 1] + dt0 / 12.0 * (-r[i - 2] + 8.0 * r[i - 1] + 5.0 * r[i]);
  return cum;
}

inline double grid_integral(const std::vector<double>& t, const std::vector<double>& v) {
  return cumulative_integral(t, v).back();
}

// Least-squares slope of y against x.
inline double slope_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  if (n < 2 || y.size() != n) throw std::invalid_argument("slope_fit: need >= 2 points");
  double mx = 0, my = 0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= double(n);
  my /= double(n);
  double num = 0, den = 0;
  for (size_t i = 0; i < n; ++i) {
    num += (x[i] - mx) * (y[i] - my);
    den += (x[i] - mx) * (x[i] - mx);
  }
  if (den == 0) throw std::invalid_argument("slope_fit: degenerate abscissae");
  return num / den;
}

}  // namespace dwlab
