#include "damping.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace dwlab {

namespace {

// exp(-1/(1-u^2)) on (-1,1), extended by zero.
double bump_raw(double u) {
  const double s2 = u * u;
  if (s2 >= 1.0) return 0.0;
  return std::exp(-1.0 / (1.0 - s2));
}

double bump_raw_derivative(double u) {
  const double s2 = u * u;
  if (s2 >= 1.0) return 0.0;
  const double d = 1.0 - s2;
  return bump_raw(u) * (-2.0 * u / (d * d));
}

// exp(-1/(w(1-w))) on (0,1), the integrand of the smoothed step.
double step_integrand(double w) {
  if (w <= 0.0 || w >= 1.0) return 0.0;
  return std::exp(-1.0 / (w * (1.0 - w)));
}

// Composite trapezoid; superexponentially accurate for integrands whose
// derivatives all vanish at the endpoints, which is the case for every
// kernel-weighted integral below.
template <class F>
double trapezoid(F&& f, double a, double b, int n) {
  if (n < 1) n = 1;
  const double h = (b - a) / n;
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < n; ++i) s += f(a + i * h);
  return s * h;
}

struct SmoothTables {
  double kernel_norm_1d = 0.0;   // integral of bump_raw over [-1,1]
  double kernel_norm_2d = 0.0;   // integral of bump_raw(|u|) over the unit disk
  double step_total = 0.0;       // integral of step_integrand over [0,1]
  double step_slope_max = 0.0;   // max of the normalized step derivative
  double bump_slope_max = 0.0;   // max |d/ds| of the peak-normalized bump
  std::vector<double> step_cdf;  // cumulative integral of step_integrand

  SmoothTables() {
    kernel_norm_1d = trapezoid([](double u) { return bump_raw(u); }, -1.0, 1.0, 16384);
    kernel_norm_2d =
        two_pi * simpson([](double r) { return r * bump_raw(r); }, 0.0, 1.0, 4096);
    const int n = 16384;
    step_cdf.resize(n + 1, 0.0);
    const double h = 1.0 / n;
    for (int i = 1; i <= n; ++i) {
      const double a = (i - 1) * h, b = i * h;
      step_cdf[i] = step_cdf[i - 1] + 0.5 * h * (step_integrand(a) + step_integrand(b));
    }
    step_total = step_cdf[n];
    double sm = 0.0;
    for (int i = 0; i <= n; ++i) sm = std::max(sm, step_integrand(i * h));
    step_slope_max = sm / step_total;
    double bm = 0.0;
    for (int i = 0; i <= 4096; ++i) {
      const double s = i / 4096.0;
      bm = std::max(bm, std::abs(bump_raw_derivative(s)) * std::exp(1.0));
    }
    bump_slope_max = bm;
  }
};

const SmoothTables& tables() {
  static const SmoothTables t;
  return t;
}

// Smoothed step: 0 for v <= 0, 1 for v >= 1, C-infinity in between.
double smooth_step(double v) {
  if (v <= 0.0) return 0.0;
  if (v >= 1.0) return 1.0;
  const auto& t = tables();
  const double pos = v * (t.step_cdf.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  const double c = t.step_cdf[lo] * (1.0 - frac) + t.step_cdf[std::min(lo + 1, t.step_cdf.size() - 1)] * frac;
  return c / t.step_total;
}

double angular_distance(double a, double b) {
  double d = std::fmod(a - b, two_pi);
  if (d < 0) d += two_pi;
  return std::min(d, two_pi - d);
}

double flat_distance(const ManifoldModel& m, double x1, double x2, double y1, double y2) {
  const double d1 = angular_distance(x1, y1);
  if (m.kind() == ManifoldKind::Circle) return d1;
  return std::hypot(d1, angular_distance(x2, y2));
}

}  // namespace

double mollifier_kernel_1d(double u) { return bump_raw(u) / tables().kernel_norm_1d; }

double mollifier_kernel_1d_derivative(double u) {
  return bump_raw_derivative(u) / tables().kernel_norm_1d;
}

double level_cutoff_chi(double s) { return 1.0 - smooth_step(std::abs(s) - 1.0); }

void DampingProfile::cache_samples() {
  const auto& m = *model_;
  const int nq = m.nq();
  const bool planar = (m.kind() == ManifoldKind::Torus2);
  samples_.assign(planar ? static_cast<std::size_t>(nq) * nq : nq, 0.0);
  sup_norm_ = 0.0;
  if (planar && x_only_) {
    std::vector<double> line(nq);
    for (int j = 0; j < nq; ++j) line[j] = eval_(m.grid_point(j), 0.0);
    for (int j = 0; j < nq; ++j)
      for (int l = 0; l < nq; ++l) samples_[static_cast<std::size_t>(j) * nq + l] = line[j];
  } else if (planar) {
    for (int j = 0; j < nq; ++j)
      for (int l = 0; l < nq; ++l)
        samples_[static_cast<std::size_t>(j) * nq + l] = eval_(m.grid_point(j), m.grid_point(l));
  } else {
    for (int j = 0; j < nq; ++j) samples_[j] = eval_(m.grid_point(j), 0.0);
  }
  for (double v : samples_) sup_norm_ = std::max(sup_norm_, std::abs(v));
  const double floor = -1e-12 * std::max(1.0, sup_norm_);
  for (double v : samples_) {
    if (v < floor) throw std::invalid_argument("damping profile is negative on the grid");
  }
}

DampingProfile DampingProfile::constant(const ManifoldModel& model, double value) {
  if (value < 0) throw std::invalid_argument("constant damping must be nonnegative");
  DampingProfile p;
  p.model_ = &model;
  p.family_ = "constant";
  p.x_only_ = true;
  p.eval_ = [value](double, double) { return value; };
  p.omega_ = [](double) { return 0.0; };
  p.cache_samples();
  return p;
}

DampingProfile DampingProfile::smooth_bump(const ManifoldModel& model, double amplitude,
                                           std::array<double, 2> center, double width) {
  if (amplitude < 0) throw std::invalid_argument("bump amplitude must be nonnegative");
  if (width <= 0 || width > pi_const) throw std::invalid_argument("bump width must lie in (0, pi]");
  DampingProfile p;
  p.model_ = &model;
  p.family_ = "smooth-bump";
  p.x_only_ = (model.kind() == ManifoldKind::Circle);
  p.eval_ = [&model, amplitude, center, width](double x1, double x2) {
    const double d = flat_distance(model, x1, x2, center[0], center[1]);
    return amplitude * std::exp(1.0) * bump_raw(d / width);
  };
  const double lip = amplitude * tables().bump_slope_max / width;
  p.omega_ = [lip, amplitude](double r) { return std::min(lip * r, 2.0 * amplitude); };
  p.cache_samples();
  return p;
}

DampingProfile DampingProfile::strip(const ManifoldModel& model, double amplitude, double lo,
                                     double hi, double transition) {
  if (amplitude < 0) throw std::invalid_argument("strip amplitude must be nonnegative");
  if (!(0.0 <= lo && lo < hi && hi <= two_pi))
    throw std::invalid_argument("strip interval must satisfy 0 <= lo < hi <= 2 pi");
  if (transition <= 0 || hi - lo < 2.5 * transition)
    throw std::invalid_argument("strip transition width too large for the interval");
  DampingProfile p;
  p.model_ = &model;
  p.family_ = "strip";
  p.x_only_ = true;
  p.eval_ = [amplitude, lo, hi, transition](double x1, double) {
    const double u = wrap_2pi(x1);
    return amplitude * smooth_step((u - lo) / transition) * smooth_step((hi - u) / transition);
  };
  const double lip = 2.0 * amplitude * tables().step_slope_max / transition;
  p.omega_ = [lip, amplitude](double r) { return std::min(lip * r, 2.0 * amplitude); };
  p.cache_samples();
  return p;
}

DampingProfile DampingProfile::distance_power(const ManifoldModel& model, double amplitude,
                                              double x0, double alpha) {
  if (amplitude < 0) throw std::invalid_argument("amplitude must be nonnegative");
  if (alpha <= 0) throw std::invalid_argument("exponent parameter must be positive");
  const double power = 2.0 * alpha;
  // Clamp at distance pi/2 so the antipodal corner of the periodic distance
  // never enters the profile; the exact modulus of min(d, c)^p is then
  // available in closed form.
  const double clamp_at = 0.5 * pi_const;
  DampingProfile p;
  p.model_ = &model;
  p.family_ = "hoelder-distance-power";
  p.x_only_ = true;
  p.eval_ = [amplitude, x0, power, clamp_at](double x1, double) {
    const double d = std::min(angular_distance(x1, x0), clamp_at);
    return amplitude * std::pow(d, power);
  };
  if (power <= 1.0) {
    p.omega_ = [amplitude, power](double r) {
      return amplitude * std::pow(std::min(std::abs(r), pi_const), power);
    };
  } else {
    const double lip = amplitude * power * std::pow(clamp_at, power - 1.0);
    const double cap = amplitude * std::pow(clamp_at, power);
    p.omega_ = [lip, cap](double r) { return std::min(lip * std::abs(r), cap); };
  }
  p.cache_samples();
  return p;
}

DampingProfile DampingProfile::from_table(const ManifoldModel& model,
                                          const std::vector<double>& samples, bool x_only) {
  const int nq = model.nq();
  const bool planar = (model.kind() == ManifoldKind::Torus2);
  const std::size_t want = planar ? static_cast<std::size_t>(nq) * nq : static_cast<std::size_t>(nq);
  if (samples.size() != want)
    throw std::invalid_argument("table size does not match the quadrature grid");
  auto values = std::make_shared<std::vector<double>>(samples);
  DampingProfile p;
  p.model_ = &model;
  p.family_ = "table";
  p.x_only_ = planar ? x_only : true;
  const double h = two_pi / nq;
  if (!planar) {
    p.eval_ = [values, nq, h](double x1, double) {
      const double t = wrap_2pi(x1) / h;
      const int j = static_cast<int>(t) % nq;
      const double f = t - std::floor(t);
      return (*values)[j] * (1.0 - f) + (*values)[(j + 1) % nq] * f;
    };
  } else {
    p.eval_ = [values, nq, h](double x1, double x2) {
      const double t1 = wrap_2pi(x1) / h, t2 = wrap_2pi(x2) / h;
      const int j = static_cast<int>(t1) % nq, l = static_cast<int>(t2) % nq;
      const double f1 = t1 - std::floor(t1), f2 = t2 - std::floor(t2);
      const int jp = (j + 1) % nq, lp = (l + 1) % nq;
      auto at = [&](int a, int b) { return (*values)[static_cast<std::size_t>(a) * nq + b]; };
      return at(j, l) * (1 - f1) * (1 - f2) + at(jp, l) * f1 * (1 - f2) +
             at(j, lp) * (1 - f1) * f2 + at(jp, lp) * f1 * f2;
    };
  }
  p.omega_ = [](double) { return 0.0; };
  p.cache_samples();
  ModulusTable fit = modulus_fit(p, 20000, 99);
  auto dist = std::make_shared<std::vector<double>>(fit.distance);
  auto val = std::make_shared<std::vector<double>>(fit.value);
  p.omega_ = [dist, val](double r) {
    if (r <= 0) return 0.0;
    auto it = std::lower_bound(dist->begin(), dist->end(), r);
    const std::size_t i = static_cast<std::size_t>(it - dist->begin());
    const double v = (i >= val->size()) ? val->back() : (*val)[i];
    return 1.25 * v;
  };
  return p;
}

DampingProfile DampingProfile::from_function(const ManifoldModel& model,
                                             std::function<double(double, double)> eval,
                                             std::function<double(double)> omega,
                                             std::string family, bool x_only) {
  DampingProfile p;
  p.model_ = &model;
  p.family_ = std::move(family);
  p.x_only_ = (model.kind() == ManifoldKind::Circle) ? true : x_only;
  p.eval_ = std::move(eval);
  p.omega_ = std::move(omega);
  p.cache_samples();
  return p;
}

std::vector<int> DampingProfile::zero_set_indices() const {
  std::vector<int> out;
  const double thr = 1e-12 * sup_norm_;
  for (std::size_t i = 0; i < samples_.size(); ++i)
    if (samples_[i] <= thr) out.push_back(static_cast<int>(i));
  return out;
}

double DampingProfile::distance_to_zero_set(double x1, double x2) const {
  const auto zeros = zero_set_indices();
  if (zeros.empty()) return std::numeric_limits<double>::infinity();
  const auto& m = *model_;
  const int nq = m.nq();
  double best = std::numeric_limits<double>::infinity();
  for (int idx : zeros) {
    double z1, z2 = 0.0;
    if (m.kind() == ManifoldKind::Torus2) {
      z1 = m.grid_point(idx / nq);
      z2 = m.grid_point(idx % nq);
    } else {
      z1 = m.grid_point(idx);
    }
    best = std::min(best, flat_distance(m, x1, x2, z1, z2));
  }
  return best;
}

namespace {

// Sublevel-set surgery: remove {b <= omega(2 eps)} smoothly, so convolution
// cannot smear positive mass onto the dilated zero set. Holds a copy of the
// source profile so the result outlives the argument.
std::function<double(double, double)> cut_profile(const DampingProfile& b, double eps) {
  const double cut = b.omega(2.0 * eps);
  auto src = std::make_shared<DampingProfile>(b);
  if (cut > 0.0) {
    return [src, cut](double x1, double x2) {
      const double v = (*src)(x1, x2);
      return v * (1.0 - level_cutoff_chi(v / cut));
    };
  }
  return [src](double x1, double x2) {
    const double v = (*src)(x1, x2);
    return v > 0.0 ? v : 0.0;
  };
}

}  // namespace

DampingProfile mollify(const DampingProfile& b, const MollifierSpec& spec) {
  if (!(spec.eps > 0.0 && spec.eps < 1.0))
    throw std::invalid_argument("mollifier width must lie in (0, 1)");
  const auto& model = b.model();
  if (b.sup_norm() == 0.0) {
    return DampingProfile::from_function(
        model, [](double, double) { return 0.0; }, [](double) { return 0.0; }, "mollified", true);
  }
  const double eps = spec.eps;
  const int nodes = spec.kernel_nodes;
  auto g = std::make_shared<std::function<double(double, double)>>(cut_profile(b, eps));
  const bool one_dim = (model.kind() == ManifoldKind::Circle) || b.x_only();
  std::function<double(double, double)> eval;
  if (one_dim) {
    // Normalize by the kernel's own discrete mass so constants survive exactly.
    const double mass = trapezoid([](double u) { return mollifier_kernel_1d(u); }, -1.0, 1.0, nodes);
    eval = [g, eps, nodes, mass](double x1, double x2) {
      auto f = [&](double u) { return mollifier_kernel_1d(u) * (*g)(x1 - eps * u, x2); };
      return trapezoid(f, -1.0, 1.0, nodes) / mass;
    };
  } else {
    const double c2 = tables().kernel_norm_2d;
    const int n2 = nodes / 2;
    auto kernel2 = [c2](double u1, double u2) { return bump_raw(std::hypot(u1, u2)) / c2; };
    const double mass = trapezoid(
        [&](double u1) {
          return trapezoid([&](double u2) { return kernel2(u1, u2); }, -1.0, 1.0, n2);
        },
        -1.0, 1.0, n2);
    eval = [g, eps, n2, kernel2, mass](double x1, double x2) {
      auto outer = [&](double u1) {
        auto inner = [&](double u2) {
          const double k = kernel2(u1, u2);
          return k == 0.0 ? 0.0 : k * (*g)(x1 - eps * u1, x2 - eps * u2);
        };
        return trapezoid(inner, -1.0, 1.0, n2);
      };
      return trapezoid(outer, -1.0, 1.0, n2) / mass;
    };
  }
  const double lip = 2.0 * std::exp(-1.0) / tables().kernel_norm_1d / eps * b.sup_norm();
  const double cap = 2.0 * b.sup_norm();
  auto omega = [lip, cap](double r) { return std::min(lip * r, cap); };
  return DampingProfile::from_function(model, std::move(eval), std::move(omega), "mollified",
                                       b.x_only());
}

double mollified_gradient_sup(const DampingProfile& b, const MollifierSpec& spec,
                              int scan_points) {
  if (!(spec.eps > 0.0 && spec.eps < 1.0))
    throw std::invalid_argument("mollifier width must lie in (0, 1)");
  const auto& model = b.model();
  if (b.sup_norm() == 0.0) return 0.0;
  const double eps = spec.eps;
  const int nodes = spec.kernel_nodes;
  auto g = cut_profile(b, eps);
  const bool one_dim = (model.kind() == ManifoldKind::Circle) || b.x_only();
  double sup = 0.0;
  if (one_dim) {
    for (int i = 0; i < scan_points; ++i) {
      const double x = two_pi * i / scan_points;
      auto f = [&](double u) { return mollifier_kernel_1d_derivative(u) * g(x - eps * u, 0.0); };
      sup = std::max(sup, std::abs(trapezoid(f, -1.0, 1.0, nodes) / eps));
    }
    return sup;
  }
  const double c2 = tables().kernel_norm_2d;
  const int side = std::max(16, static_cast<int>(std::lround(std::sqrt(double(scan_points)))));
  const int n2 = nodes / 2;
  for (int i = 0; i < side; ++i) {
    for (int j = 0; j < side; ++j) {
      const double x1 = two_pi * i / side, x2 = two_pi * j / side;
      double grad[2] = {0.0, 0.0};
      for (int comp = 0; comp < 2; ++comp) {
        auto outer = [&](double u1) {
          auto inner = [&](double u2) {
            const double r = std::hypot(u1, u2);
            if (r >= 1.0 || r == 0.0) return 0.0;
            const double kd = bump_raw_derivative(r) / c2 * ((comp == 0 ? u1 : u2) / r);
            return kd * g(x1 - eps * u1, x2 - eps * u2);
          };
          return trapezoid(inner, -1.0, 1.0, n2);
        };
        grad[comp] = trapezoid(outer, -1.0, 1.0, n2) / eps;
      }
      sup = std::max(sup, std::hypot(grad[0], grad[1]));
    }
  }
  return sup;
}

namespace {

// Transform of the sample vector at integer frequency offsets. Frequencies are
// exact on the grid because nq >= 4K+1 keeps every needed difference alias-free.
std::vector<cxd> circle_coefficients(const ManifoldModel& m, const std::vector<double>& line,
                                     int max_freq) {
  const int nq = m.nq();
  std::vector<cxd> roots(nq);
  for (int j = 0; j < nq; ++j) roots[j] = std::polar(1.0, -two_pi * j / nq);
  std::vector<cxd> hat(2 * max_freq + 1);
  for (int kappa = 0; kappa <= max_freq; ++kappa) {
    cxd acc(0.0, 0.0);
    for (int j = 0; j < nq; ++j) acc += line[j] * roots[(static_cast<long>(j) * kappa) % nq];
    acc /= static_cast<double>(nq);
    hat[max_freq + kappa] = acc;
    hat[max_freq - kappa] = std::conj(acc);
  }
  return hat;
}

}  // namespace

std::vector<cxd> line_coefficients(const ManifoldModel& model, const DampingProfile& b,
                                   int max_freq) {
  if (model.kind() == ManifoldKind::Torus2 && !b.x_only())
    throw std::invalid_argument("line coefficients require an x-only profile");
  std::vector<double> line(model.nq());
  for (int j = 0; j < model.nq(); ++j) line[j] = b(model.grid_point(j), 0.0);
  return circle_coefficients(model, line, max_freq);
}

Mat multiplication_matrix_1d(const ManifoldModel& model, const DampingProfile& b) {
  if (model.kind() == ManifoldKind::Torus2 && !b.x_only())
    throw std::invalid_argument("one-dimensional factor requires an x-only profile");
  const int nq = model.nq();
  const int K = model.K();
  std::vector<double> line(nq);
  for (int j = 0; j < nq; ++j) line[j] = b(model.grid_point(j), 0.0);
  const auto hat = circle_coefficients(model, line, 2 * K);
  const int n = 2 * K + 1;
  Mat B(n, n);
  for (int a = 0; a < n; ++a)
    for (int c = 0; c < n; ++c) B(a, c) = hat[2 * K + (a - c)];
  return B;
}

Mat multiplication_matrix(const ManifoldModel& model, const DampingProfile& b) {
  const int n = model.mode_count();
  if (n > 4096)
    throw infeasible_error(
        "dense multiplication matrix exceeds the 4096-mode budget; use the per-block path",
        (model.kind() == ManifoldKind::Torus2) ? 31 : 2047);
  const int nq = model.nq();
  const int K = model.K();
  const auto& modes = model.modes();
  Mat B(n, n);
  if (model.kind() == ManifoldKind::Circle) {
    std::vector<double> line(nq);
    for (int j = 0; j < nq; ++j) line[j] = b(model.grid_point(j), 0.0);
    const auto hat = circle_coefficients(model, line, 2 * K);
    for (int a = 0; a < n; ++a)
      for (int c = 0; c < n; ++c) B(a, c) = hat[2 * K + (modes[a].k[0] - modes[c].k[0])];
    return B;
  }
  // Two-stage separable transform on the torus grid.
  const int f = 2 * K;
  std::vector<cxd> roots(nq);
  for (int j = 0; j < nq; ++j) roots[j] = std::polar(1.0, -two_pi * j / nq);
  Mat partial(2 * f + 1, nq);
  for (int k1 = -f; k1 <= f; ++k1) {
    for (int l = 0; l < nq; ++l) {
      cxd acc(0.0, 0.0);
      for (int j = 0; j < nq; ++j) {
        const long e = ((static_cast<long>(j) * k1) % nq + nq) % nq;
        acc += b.samples()[static_cast<std::size_t>(j) * nq + l] * roots[e];
      }
      partial(f + k1, l) = acc / static_cast<double>(nq);
    }
  }
  Mat hat2(2 * f + 1, 2 * f + 1);
  for (int k1 = -f; k1 <= f; ++k1) {
    for (int k2 = 0; k2 <= f; ++k2) {
      cxd acc(0.0, 0.0);
      for (int l = 0; l < nq; ++l) {
        const long e = ((static_cast<long>(l) * k2) % nq + nq) % nq;
        acc += partial(f + k1, l) * roots[e];
      }
      acc /= static_cast<double>(nq);
      hat2(f + k1, f + k2) = acc;
      hat2(f - k1, f - k2) = std::conj(acc);
    }
  }
  for (int a = 0; a < n; ++a)
    for (int c = 0; c < n; ++c)
      B(a, c) = hat2(f + (modes[a].k[0] - modes[c].k[0]), f + (modes[a].k[1] - modes[c].k[1]));
  return B;
}

ModulusTable modulus_fit(const DampingProfile& b, int pair_count, unsigned long seed, int bins) {
  const auto& m = b.model();
  const bool planar = (m.kind() == ManifoldKind::Torus2);
  const double max_dist = planar ? pi_const * std::sqrt(2.0) : pi_const;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, two_pi);
  ModulusTable table;
  table.distance.resize(bins);
  table.value.assign(bins, 0.0);
  for (int i = 0; i < bins; ++i) table.distance[i] = max_dist * (i + 1) / bins;
  for (int p = 0; p < pair_count; ++p) {
    const double x1 = uni(rng), x2 = planar ? uni(rng) : 0.0;
    const double y1 = uni(rng), y2 = planar ? uni(rng) : 0.0;
    const double d = flat_distance(m, x1, x2, y1, y2);
    int bin = static_cast<int>(d / max_dist * bins);
    bin = std::clamp(bin, 0, bins - 1);
    table.value[bin] = std::max(table.value[bin], std::abs(b(x1, x2) - b(y1, y2)));
  }
  for (int i = 1; i < bins; ++i) table.value[i] = std::max(table.value[i], table.value[i - 1]);
  return table;
}

}  // namespace dwlab
