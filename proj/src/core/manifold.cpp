#include "manifold.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dwlab {

ManifoldModel ManifoldModel::circle(int K, int nq) {
  if (K < 1) throw std::invalid_argument("circle: K must be >= 1");
  ManifoldModel m;
  m.kind_ = ManifoldKind::Circle;
  m.K_ = K;
  m.nq_ = std::max(nq, 4 * K + 1);
  m.volume_ = two_pi;
  m.modes_.reserve(2 * K + 1);
  for (int k = -K; k <= K; ++k) m.modes_.push_back(Mode{{k, 0}});
  m.finalize();
  return m;
}

ManifoldModel ManifoldModel::torus2(int K, int nq) {
  if (K < 1) throw std::invalid_argument("torus2: K must be >= 1");
  ManifoldModel m;
  m.kind_ = ManifoldKind::Torus2;
  m.K_ = K;
  m.nq_ = std::max(nq, 4 * K + 1);
  m.volume_ = two_pi * two_pi;
  m.modes_.reserve((2 * K + 1) * (2 * K + 1));
  for (int k1 = -K; k1 <= K; ++k1)
    for (int k2 = -K; k2 <= K; ++k2) m.modes_.push_back(Mode{{k1, k2}});
  m.finalize();
  return m;
}

void ManifoldModel::finalize() {
  std::sort(modes_.begin(), modes_.end(), [](const Mode& a, const Mode& b) {
    const long ra = long(a.k[0]) * a.k[0] + long(a.k[1]) * a.k[1];
    const long rb = long(b.k[0]) * b.k[0] + long(b.k[1]) * b.k[1];
    if (ra != rb) return ra < rb;
    if (a.k[0] != b.k[0]) return a.k[0] < b.k[0];
    return a.k[1] < b.k[1];
  });
  lambdas_.resize(modes_.size());
  for (size_t i = 0; i < modes_.size(); ++i)
    lambdas_[i] = std::hypot(double(modes_[i].k[0]), double(modes_[i].k[1]));
  const int side = 2 * K_ + 1;
  lookup_.assign(size_t(side) * side, -1);
  for (size_t i = 0; i < modes_.size(); ++i) {
    const int a = modes_[i].k[0] + K_, b = modes_[i].k[1] + K_;
    lookup_[size_t(a) * side + b] = static_cast<int>(i);
  }
}

int ManifoldModel::mode_index(int k1, int k2) const {
  if (std::abs(k1) > K_ || std::abs(k2) > K_) return -1;
  const int side = 2 * K_ + 1;
  return lookup_[size_t(k1 + K_) * side + (k2 + K_)];
}

std::vector<EigenDatum> eigendata(const ManifoldModel& model) {
  std::vector<EigenDatum> out;
  out.reserve(model.mode_count());
  for (int i = 0; i < model.mode_count(); ++i)
    out.push_back(EigenDatum{model.modes()[i], model.lambda(i)});
  return out;
}

PhasePoint geodesic_flow(const ManifoldModel& model, const PhasePoint& p, double t) {
  const double speed = std::hypot(p.xi[0], p.xi[1]);
  if (speed <= 0.0) throw std::domain_error("geodesic_flow: zero covector");
  PhasePoint q = p;
  const int d = model.dim();
  for (int i = 0; i < d; ++i) q.x[i] = wrap_2pi(p.x[i] + t * p.xi[i] / speed);
  return q;
}

namespace {

bool orbit_meets(const ManifoldModel& model, const std::function<bool(double, double)>& in_support,
                 const PhasePoint& p, double T, double step) {
  const double speed = std::hypot(p.xi[0], p.xi[1]);
  const int n = std::max(2, int(std::ceil(T / step)));
  for (int i = 0; i <= n; ++i) {
    const double t = T * i / n;
    const double x1 = wrap_2pi(p.x[0] + t * p.xi[0] / speed);
    const double x2 = model.dim() == 2 ? wrap_2pi(p.x[1] + t * p.xi[1] / speed) : 0.0;
    if (in_support(x1, x2)) return true;
  }
  return false;
}

}  // namespace

GccResult gcc_check(const ManifoldModel& model,
                    const std::function<bool(double, double)>& in_support, double T, int n_x,
                    int n_theta) {
  if (T <= 0) throw std::invalid_argument("gcc_check: horizon must be positive");
  GccResult res;
  res.horizon = T;
  res.n_x = n_x;
  res.note = "sampled check on a finite grid and horizon, not a proof";

  std::vector<std::array<double, 2>> dirs;
  if (model.kind() == ManifoldKind::Circle) {
    dirs = {{1.0, 0.0}, {-1.0, 0.0}};
  } else {
    std::vector<double> thetas(n_theta);
    for (int j = 0; j < n_theta; ++j) thetas[j] = two_pi * j / n_theta;
    // Axis-aligned directions first: on product manifolds they are the
    // canonical candidates for trapped orbits, which makes witnesses tidy.
    std::stable_sort(thetas.begin(), thetas.end(), [](double a, double b) {
      auto axis_dist = [](double t) {
        const double q = two_pi / 4.0;
        double r = std::fmod(t, q);
        return std::min(r, q - r);
      };
      return axis_dist(a) < axis_dist(b);
    });
    dirs.reserve(n_theta);
    for (double t : thetas) dirs.push_back({std::cos(t), std::sin(t)});
  }
  res.n_theta = static_cast<int>(dirs.size());

  const double cell = two_pi / n_x;
  const double step = cell / 2.0;
  const int nx2 = model.dim() == 2 ? n_x : 1;
  for (int i = 0; i < n_x; ++i) {
    for (int j = 0; j < nx2; ++j) {
      PhasePoint p;
      p.x = {two_pi * i / n_x, two_pi * j / n_x};
      for (const auto& d : dirs) {
        p.xi = d;
        if (!orbit_meets(model, in_support, p, T, step)) {
          res.pass = false;
          res.witness = p;
          return res;
        }
      }
    }
  }
  res.pass = true;
  return res;
}

namespace {

double angle_diff(double a, double b) {
  double d = std::fmod(a - b, two_pi);
  if (d > two_pi / 2) d -= two_pi;
  if (d < -two_pi / 2) d += two_pi;
  return d;
}

}  // namespace

double expansion_rate(const ManifoldModel& model, double t_max,
                      const std::vector<PhasePoint>& probes) {
  if (t_max <= 0) throw std::invalid_argument("expansion_rate: t_max must be positive");
  const int d = model.dim();
  const int n = 2 * d;
  const double h = 1e-6;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& p0 : probes) {
    RMat J(n, n);
    for (int j = 0; j < n; ++j) {
      PhasePoint pp = p0, pm = p0;
      if (j < d) {
        pp.x[j] += h;
        pm.x[j] -= h;
      } else {
        pp.xi[j - d] += h;
        pm.xi[j - d] -= h;
      }
      const PhasePoint fp = geodesic_flow(model, pp, t_max);
      const PhasePoint fm = geodesic_flow(model, pm, t_max);
      for (int i = 0; i < d; ++i) J(i, j) = angle_diff(fp.x[i], fm.x[i]) / (2 * h);
      for (int i = 0; i < d; ++i) J(d + i, j) = (fp.xi[i] - fm.xi[i]) / (2 * h);
    }
    const double norm = J.jacobiSvd().singularValues()(0);
    best = std::max(best, std::log(norm) / t_max);
  }
  return best;
}

}  // namespace dwlab
