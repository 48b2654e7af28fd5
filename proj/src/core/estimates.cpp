#include "estimates.hpp"

#include <json.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "damping.hpp"
#include "io.hpp"

namespace dwlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double bump_kernel_peak() {
  static const double peak = mollifier_kernel_1d(0.0);
  return peak;
}

// Integral of f over [a,b], Simpson with doubling until the increment
// stabilizes.
template <class F>
double refine_integral(F&& f, double a, double b) {
  double prev = simpson(f, a, b, 64);
  for (int n = 128; n <= (1 << 16); n *= 2) {
    const double cur = simpson(f, a, b, n);
    if (std::abs(cur - prev) <= 1e-13 * std::max(1.0, std::abs(cur))) return cur;
    prev = cur;
  }
  return prev;
}

// Exact segment integrals for a linear piece running from v0 at t0 to v1 at
// t1, used by the table and psi_min closed forms.
double seg_sq(double dt, double v0, double v1) { return dt * (v0 * v0 + v0 * v1 + v1 * v1) / 3.0; }
double seg_abs(double dt, double v0, double v1) { return dt * (v0 + v1) / 2.0; }

double table_l2sq_upto(const std::vector<double>& knots, const std::vector<double>& vals,
                       double theta) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
    const double t0 = knots[i], t1 = knots[i + 1];
    if (theta <= t0) break;
    const double cut = std::min(theta, t1);
    const double w = (cut - t0) / (t1 - t0);
    const double vcut = vals[i] * (1.0 - w) + vals[i + 1] * w;
    acc += seg_sq(cut - t0, vals[i], vcut);
  }
  return acc;
}

}  // namespace

WeightFunction WeightFunction::ramp() {
  WeightFunction w;
  w.kind_ = Kind::Ramp;
  w.L_ = kInf;
  return w;
}

WeightFunction WeightFunction::bump(double L) {
  if (!(L > 0.0)) throw config_error("WeightFunction::bump: need L > 0");
  WeightFunction w;
  w.kind_ = Kind::Bump;
  w.L_ = L;
  return w;
}

WeightFunction WeightFunction::psi_min(double L) {
  if (!(L > 1.0)) throw config_error("WeightFunction::psi_min: need L > 1");
  WeightFunction w;
  w.kind_ = Kind::PsiMin;
  w.L_ = L;
  return w;
}

WeightFunction WeightFunction::table(std::vector<double> knots, std::vector<double> values) {
  if (knots.size() < 2 || knots.size() != values.size())
    throw config_error("WeightFunction::table: need matching knots/values, at least two");
  if (knots.front() < 0.0) throw config_error("WeightFunction::table: knots must start at t >= 0");
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (!(knots[i] > knots[i - 1]))
      throw config_error("WeightFunction::table: knots must increase strictly");
  for (double v : values)
    if (!(v >= 0.0)) throw config_error("WeightFunction::table: values must be nonnegative");
  if (values.front() != 0.0 || values.back() != 0.0)
    throw config_error("WeightFunction::table: profile must start and end at zero");
  WeightFunction w;
  w.kind_ = Kind::Table;
  w.L_ = knots.back();
  w.knots_ = std::move(knots);
  w.vals_ = std::move(values);
  return w;
}

double WeightFunction::support_end() const { return L_; }

double WeightFunction::value(double t) const {
  if (t < 0.0) return 0.0;
  switch (kind_) {
    case Kind::Ramp:
      return std::min(t, 1.0);
    case Kind::Bump: {
      if (t <= 0.0 || t >= L_) return 0.0;
      return mollifier_kernel_1d(2.0 * t / L_ - 1.0) / bump_kernel_peak();
    }
    case Kind::PsiMin: {
      const double s = std::sqrt(2.0);
      if (t <= 1.0) return s * t;
      if (t >= L_) return 0.0;
      return s * (L_ - t) / (L_ - 1.0);
    }
    case Kind::Table: {
      if (t <= knots_.front() || t >= knots_.back()) return 0.0;
      const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
      const std::size_t i = static_cast<std::size_t>(it - knots_.begin()) - 1;
      const double w = (t - knots_[i]) / (knots_[i + 1] - knots_[i]);
      return vals_[i] * (1.0 - w) + vals_[i + 1] * w;
    }
  }
  return 0.0;
}

double WeightFunction::derivative(double t) const {
  if (t < 0.0) return 0.0;
  switch (kind_) {
    case Kind::Ramp:
      return t < 1.0 ? 1.0 : 0.0;
    case Kind::Bump: {
      if (t <= 0.0 || t >= L_) return 0.0;
      return mollifier_kernel_1d_derivative(2.0 * t / L_ - 1.0) * (2.0 / L_) / bump_kernel_peak();
    }
    case Kind::PsiMin: {
      const double s = std::sqrt(2.0);
      if (t < 1.0) return s;
      if (t < L_) return -s / (L_ - 1.0);
      return 0.0;
    }
    case Kind::Table: {
      if (t <= knots_.front() || t >= knots_.back()) return 0.0;
      const auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
      const std::size_t i = static_cast<std::size_t>(it - knots_.begin()) - 1;
      return (vals_[i + 1] - vals_[i]) / (knots_[i + 1] - knots_[i]);
    }
  }
  return 0.0;
}

WeightNorms psi_norms(const WeightFunction& w, double theta) {
  if (!(theta > 0.0)) throw config_error("psi_norms: need theta > 0");
  WeightNorms n;
  switch (w.kind()) {
    case WeightFunction::Kind::Ramp: {
      n.l2 = kInf;
      n.l1 = kInf;
      n.dl2 = 1.0;
      n.dl1 = 1.0;
      n.l2_theta = theta <= 1.0 ? std::sqrt(theta * theta * theta / 3.0)
                                : std::sqrt(1.0 / 3.0 + (theta - 1.0));
      break;
    }
    case WeightFunction::Kind::PsiMin: {
      const double L = w.shape_parameter();
      n.l2 = std::sqrt(2.0 * L / 3.0);
      n.dl2 = std::sqrt(2.0 + 2.0 / (L - 1.0));
      n.l1 = L / std::sqrt(2.0);
      n.dl1 = 2.0 * std::sqrt(2.0);
      if (theta <= 1.0) {
        n.l2_theta = std::sqrt(2.0 * theta * theta * theta / 3.0);
      } else if (theta < L) {
        const double d = L - 1.0;
        const double tail = (d * d * d - (L - theta) * (L - theta) * (L - theta)) / (d * d);
        n.l2_theta = std::sqrt(2.0 / 3.0 + 2.0 * tail / 3.0);
      } else {
        n.l2_theta = n.l2;
      }
      break;
    }
    case WeightFunction::Kind::Bump: {
      const double L = w.shape_parameter();
      const auto f = [&w](double t) { return w.value(t); };
      const auto fsq = [&w](double t) { const double v = w.value(t); return v * v; };
      const auto dsq = [&w](double t) { const double v = w.derivative(t); return v * v; };
      n.l1 = refine_integral(f, 0.0, L);
      n.l2 = std::sqrt(refine_integral(fsq, 0.0, L));
      n.dl2 = std::sqrt(refine_integral(dsq, 0.0, L / 2.0) + refine_integral(dsq, L / 2.0, L));
      n.dl1 = 2.0 * w.value(L / 2.0);
      n.l2_theta = theta >= L ? n.l2 : std::sqrt(refine_integral(fsq, 0.0, std::min(theta, L)));
      break;
    }
    case WeightFunction::Kind::Table: {
      double l2sq = 0.0, l1 = 0.0, dl2sq = 0.0, dl1 = 0.0;
      const auto& kn = w.knots();
      const auto& vs = w.values();
      for (std::size_t i = 0; i + 1 < kn.size(); ++i) {
        const double dt = kn[i + 1] - kn[i];
        l2sq += seg_sq(dt, vs[i], vs[i + 1]);
        l1 += seg_abs(dt, vs[i], vs[i + 1]);
        dl2sq += (vs[i + 1] - vs[i]) * (vs[i + 1] - vs[i]) / dt;
        dl1 += std::abs(vs[i + 1] - vs[i]);
      }
      n.l2 = std::sqrt(l2sq);
      n.l1 = l1;
      n.dl2 = std::sqrt(dl2sq);
      n.dl1 = dl1;
      n.l2_theta = std::sqrt(table_l2sq_upto(kn, vs, theta));
      break;
    }
  }
  return n;
}

std::string report_to_json(const InequalityReport& r) {
  nlohmann::json j;
  j["name"] = r.name;
  j["lhs"] = r.lhs;
  j["rhs"] = r.rhs;
  j["slack"] = r.slack;
  j["error_bar"] = r.error_bar;
  j["pass"] = r.pass;
  j["params"] = r.params;
  return j.dump();
}

void reports_to_csv(const std::vector<InequalityReport>& reports, const std::string& path) {
  std::vector<std::string> keys;
  for (const auto& r : reports)
    for (const auto& [k, v] : r.params)
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
  std::sort(keys.begin(), keys.end());

  std::vector<std::string> columns = {"idx", "lhs", "rhs", "slack", "error_bar", "pass"};
  columns.insert(columns.end(), keys.begin(), keys.end());

  nlohmann::json meta;
  meta["kind"] = "inequality_reports";
  meta["names"] = nlohmann::json::array();
  for (const auto& r : reports) meta["names"].push_back(r.name);

  std::vector<std::vector<double>> rows;
  rows.reserve(reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    std::vector<double> row = {double(i), r.lhs, r.rhs, r.slack, r.error_bar, r.pass ? 1.0 : 0.0};
    for (const auto& k : keys) {
      const auto it = r.params.find(k);
      row.push_back(it == r.params.end() ? kNaN : it->second);
    }
    rows.push_back(std::move(row));
  }
  write_csv_atomic(path, meta.dump(), columns, rows);
}

double window_profile(double x) { return level_cutoff_chi(2.2 * x); }

SpectralFilter shell_projector(double h, double eps, bool two_sided) {
  if (!(h > 0.0)) throw config_error("shell_projector: need h > 0");
  if (!(eps > 0.0 && eps < 1.0)) throw config_error("shell_projector: need 0 < eps < 1");
  SpectralFilter f;
  f.profile = [h, eps](double s) { return window_profile((h * std::abs(s) - 1.0) / eps); };
  f.rule = two_sided ? SpectralFilter::Component::Both : SpectralFilter::Component::First;
  return f;
}

namespace {

std::vector<double> odd_time_grid(double horizon, double sup_b, int max_nodes) {
  const double dt = std::min(0.1 / (1.0 + sup_b), horizon / 1000.0);
  int n = static_cast<int>(std::ceil(horizon / dt)) + 1;
  n = std::clamp(n, 401, max_nodes);
  if (n % 2 == 0) --n;
  return linspace(0.0, horizon, n);
}

// Quadrature of g over t (normalized by T) on the full grid and on the
// half-resolution subgrid; the difference is the recorded error bar.
std::pair<double, double> integral_with_bar(const std::vector<double>& t,
                                            const std::vector<double>& g, double T) {
  const double full = grid_integral(t, g) / T;
  std::vector<double> th, gh;
  for (std::size_t i = 0; i < t.size(); i += 2) {
    th.push_back(t[i]);
    gh.push_back(g[i]);
  }
  const double half = grid_integral(th, gh) / T;
  return {full, std::abs(full - half)};
}

}  // namespace

InequalityReport theorem31_check(const OperatorBundle& bundle, const Vec& u0, double h,
                                 double eps, double T_h, const WeightFunction& w,
                                 const Theorem31Options& opts) {
  if (!bundle.schroedinger_convention())
    throw config_error("theorem31_check: needs a bundle in the Schroedinger convention");
  if (u0.size() != bundle.dim()) throw config_error("theorem31_check: state dimension mismatch");
  if (!(T_h > 0.0)) throw config_error("theorem31_check: need T_h > 0");
  if (!(opts.theta > 0.0)) throw config_error("theorem31_check: need theta > 0");
  if (!(opts.delta > 0.0 && opts.delta < 1.0))
    throw config_error("theorem31_check: need delta in (0,1)");

  const GResult gr = G_of_h(bundle, h, eps, opts.window_grid, opts.resolvent);
  for (int fl : gr.scan.flag)
    if (fl != 0) throw config_error("theorem31_check: window is not resolvent-free");
  if (!std::isfinite(gr.cap))
    throw config_error("theorem31_check: window cannot be certified resolvent-free");
  const double G = gr.cap > 0.0 ? gr.cap : gr.G;

  const double q = skew_part_norm(bundle);
  const WeightNorms nm = psi_norms(w, opts.theta);

  const SpectralFilter proj = shell_projector(h, eps, opts.two_sided);
  const Vec v0 = apply_filter(bundle, proj, u0);
  const double e0_full = bundle.energy(u0);
  const double e0 = bundle.energy(v0);
  const double captured = e0_full > 0.0 ? e0 / e0_full : 0.0;

  const double first_avg = G * G / (T_h * T_h) * nm.dl2 * nm.dl2;
  const double rem_avg =
      (1.0 + q * q) * std::max(nm.l1 * nm.l1, nm.dl1 * nm.dl1) * h * T_h / (eps * eps);

  InequalityReport rep;
  double first = 0.0, rem = 0.0, lhs = 0.0, bar = 0.0;
  switch (opts.variant) {
    case AverageVariant::Averaged: {
      rep.name = "theorem31/averaged";
      if (!std::isfinite(rem_avg) || !std::isfinite(w.support_end()))
        throw config_error("theorem31_check: averaged variant needs a compactly supported weight");
      first = first_avg;
      rem = rem_avg;
      const double horizon = w.support_end() * T_h;
      const auto grid = odd_time_grid(horizon, bundle.damping().sup_norm(), 4001);
      const EnergyTrace trace = evolve(bundle, v0, grid, opts.evolve);
      std::vector<double> g(grid.size());
      for (std::size_t i = 0; i < grid.size(); ++i) {
        const double psi = w.value(grid[i] / T_h);
        g[i] = psi * psi * trace.energy[i];
      }
      const auto [integral, ibar] = integral_with_bar(grid, g, T_h);
      lhs = e0 > 0.0 ? integral / e0 : 0.0;
      bar = e0 > 0.0 ? ibar / e0 : 0.0;
      rep.params["nodes"] = double(grid.size());
      break;
    }
    case AverageVariant::PointwiseTheta: {
      rep.name = "theorem31/pointwise-theta";
      if (!std::isfinite(rem_avg))
        throw config_error("theorem31_check: pointwise variant needs integrable weight norms");
      if (!(nm.l2_theta > 0.0))
        throw config_error("theorem31_check: weight vanishes on (0, theta)");
      first = first_avg / (nm.l2_theta * nm.l2_theta);
      rem = rem_avg / (nm.l2_theta * nm.l2_theta);
      const Vec vt = evolve_state(bundle, v0, opts.theta * T_h, opts.evolve);
      lhs = e0 > 0.0 ? bundle.energy(vt) / e0 : 0.0;
      rep.params["theta"] = opts.theta;
      break;
    }
    case AverageVariant::PointwiseOptimized: {
      rep.name = "theorem31/pointwise-opt";
      first = (2.0 + opts.delta) * G * G / (T_h * T_h);
      rem = (1.0 + q * q) / (opts.delta * opts.delta) * h * T_h / (eps * eps);
      const Vec vt = evolve_state(bundle, v0, T_h, opts.evolve);
      lhs = e0 > 0.0 ? bundle.energy(vt) / e0 : 0.0;
      rep.params["delta"] = opts.delta;
      break;
    }
  }

  const double fitted = rem > 0.0 ? std::max(0.0, (lhs - first) / rem) : 0.0;
  rep.lhs = lhs;
  rep.rhs = first + fitted * rem;
  rep.slack = rep.rhs - rep.lhs;
  rep.error_bar = bar;
  rep.pass = rep.slack >= -rep.error_bar;
  rep.params["h"] = h;
  rep.params["T_h"] = T_h;
  rep.params["eps"] = eps;
  rep.params["G"] = G;
  rep.params["q_norm"] = q;
  rep.params["fitted_C0"] = fitted;
  rep.params["first_term"] = first;
  rep.params["remainder_coef"] = rem;
  rep.params["captured_mass"] = captured;
  rep.params["psi_dl2"] = nm.dl2;
  rep.params["psi_l1"] = nm.l1;
  rep.params["psi_dl1"] = nm.dl1;
  rep.params["psi_l2_theta"] = nm.l2_theta;
  rep.params["two_sided"] = opts.two_sided ? 1.0 : 0.0;
  rep.params["window_evaluations"] = double(gr.evaluations);
  return rep;
}

std::function<double(double)> envelope_from_scan(ResolventScan scan) {
  if (scan.s.empty()) throw config_error("envelope_from_scan: empty scan");
  std::vector<std::pair<double, double>> pts;
  pts.reserve(scan.s.size());
  for (std::size_t i = 0; i < scan.s.size(); ++i)
    if (!scan.flag[i]) pts.emplace_back(std::abs(scan.s[i]), scan.value[i]);
  if (pts.empty()) throw config_error("envelope_from_scan: every scan point is flagged");
  std::sort(pts.begin(), pts.end());
  std::vector<double> axis(pts.size()), peak(pts.size());
  double run = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    axis[i] = pts[i].first;
    run = std::max(run, pts[i].second);
    peak[i] = run;
  }
  // Includes the first sample beyond |tau| so a flank rising between grid
  // points stays below the envelope.
  return [axis = std::move(axis), peak = std::move(peak)](double tau) {
    const double a = std::abs(tau);
    std::size_t i = std::upper_bound(axis.begin(), axis.end(), a) - axis.begin();
    if (i >= axis.size()) i = axis.size() - 1;
    return peak[i];
  };
}

std::function<double(double)> envelope_from_table(std::vector<double> tau,
                                                  std::vector<double> value) {
  if (tau.empty() || tau.size() != value.size())
    throw config_error("envelope_from_table: need matching nonempty tau/value");
  if (tau.front() < 0.0) throw config_error("envelope_from_table: tau axis must be nonnegative");
  for (std::size_t i = 1; i < tau.size(); ++i) {
    if (!(tau[i] > tau[i - 1]))
      throw config_error("envelope_from_table: tau must increase strictly");
    if (value[i] < value[i - 1])
      throw config_error("envelope_from_table: non-monotone envelope table");
  }
  for (double v : value)
    if (!(v > 0.0)) throw config_error("envelope_from_table: values must be positive");
  return [tau = std::move(tau), value = std::move(value)](double t) {
    const double a = std::abs(t);
    if (a <= tau.front()) return value.front();
    if (a >= tau.back()) return value.back();
    const auto it = std::upper_bound(tau.begin(), tau.end(), a);
    const std::size_t i = static_cast<std::size_t>(it - tau.begin()) - 1;
    const double w = (a - tau[i]) / (tau[i + 1] - tau[i]);
    return value[i] * (1.0 - w) + value[i + 1] * w;
  };
}

std::vector<double> default_tau_grid(const OperatorBundle& bundle, int count,
                                     const ResolventScan* scan) {
  if (count < 2) throw config_error("default_tau_grid: need count >= 2");
  double top = 0.0;
  for (double l : bundle.model().lambdas())
    top = std::max(top, std::sqrt(l * l + bundle.mass()));
  std::vector<double> grid = linspace(-2.0 * top, 2.0 * top, 2 * count + 1);
  if (scan) {
    for (double p : scan->peak_s) {
      for (double s : {p, -p}) {
        if (std::abs(s) <= 2.0 * top) grid.push_back(s);
      }
    }
  }
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end(),
                         [top](double a, double b) { return std::abs(a - b) <= 1e-12 * top; }),
             grid.end());
  return grid;
}

namespace {

void validate_envelope(const std::function<double(double)>& M, double top) {
  double prev = -kInf;
  for (double a : linspace(0.0, std::max(top, 1.0), 41)) {
    const double v = M(a);
    if (!(v > 0.0)) throw config_error("envelope must be positive");
    if (std::abs(M(-a) - v) > 1e-9 * std::max(1.0, v))
      throw config_error("envelope must be even");
    if (v < prev - 1e-12 * std::max(1.0, prev))
      throw config_error("envelope must be nondecreasing on the positive axis");
    prev = v;
  }
}

}  // namespace

ModifiedResolventResult modified_resolvent_check(const OperatorBundle& bundle,
                                                 const std::function<double(double)>& M,
                                                 double eps, double delta,
                                                 const std::vector<double>& alpha_grid,
                                                 const std::vector<double>& tau_grid) {
  if (!bundle.schroedinger_convention())
    throw config_error("modified_resolvent_check: needs a bundle in the Schroedinger convention");
  if (!(eps >= 0.0 && eps < 1.0))
    throw config_error("modified_resolvent_check: need eps in [0,1)");
  if (!(delta > 0.0 && delta <= 1.0))
    throw config_error("modified_resolvent_check: need delta in (0,1]");
  if (alpha_grid.empty() || tau_grid.empty())
    throw config_error("modified_resolvent_check: empty alpha or tau grid");
  for (double a : alpha_grid)
    if (!(a >= 0.0 && a <= 1.0))
      throw config_error("modified_resolvent_check: alpha grid must lie in [0,1]");

  double top = 0.0;
  for (double t : tau_grid) top = std::max(top, std::abs(t));
  validate_envelope(M, top / (1.0 - eps));

  int violations = 0;
  for (double tau : tau_grid) {
    const ResolventValue rv = resolvent_norm(bundle, cxd(tau, 0.0));
    if (rv.near_singular) {
      std::ostringstream os;
      os << "modified_resolvent_check: grid point tau = " << tau << " lies on the spectrum";
      throw config_error(os.str());
    }
    const double cap = M(tau);
    if (rv.value > cap * 1.05) {
      std::ostringstream os;
      os << "modified_resolvent_check: envelope fails to dominate the resolvent at tau = " << tau
         << " (" << rv.value << " > " << cap << ")";
      throw config_error(os.str());
    }
    if (rv.value > cap) ++violations;
  }

  struct BlockData {
    Mat base;       // weighted block matrix
    Vec scale_in;   // sqrt weight
    Vec scale_out;  // inverse sqrt weight
    RVec filter;    // M_eps at the row frequencies
  };
  std::vector<BlockData> data;
  for (int j = 0; j < bundle.block_count(); ++j) {
    if (bundle.block_twin(j) != j) continue;
    BlockData d;
    const Mat Bj = bundle.block_matrix(j);
    const RVec wj = bundle.block_weight(j);
    d.scale_in = wj.cwiseSqrt().cast<cxd>();
    d.scale_out = d.scale_in.cwiseInverse();
    d.base = d.scale_in.asDiagonal() * Bj * d.scale_out.asDiagonal();
    d.filter.resize(Bj.rows());
    for (int i = 0; i < Bj.rows(); ++i) {
      const double lam = bundle.row_lambda(j, i);
      d.filter(i) = M(std::sqrt(lam * lam + bundle.mass()) / (1.0 - eps));
    }
    data.push_back(std::move(d));
  }

  ModifiedResolventResult out;
  for (double alpha : alpha_grid) {
    for (double tau : tau_grid) {
      const cxd z(tau, -alpha);
      double value = 0.0;
      for (const auto& d : data) {
        Mat A = d.base;
        A.diagonal().array() -= z;
        A = A * d.filter.cast<cxd>().asDiagonal();
        const double sig = smallest_singular_value(A);
        if (sig > 0.0) value = std::max(value, 1.0 / sig);
      }
      out.samples.push_back({tau, alpha, value});
      if (value > out.c0) {
        out.c0 = value;
        out.tau_at_max = tau;
        out.alpha_at_max = alpha;
      }
    }
  }

  out.report.name = "modified_resolvent";
  out.report.lhs = out.c0;
  out.report.rhs = out.c0;
  out.report.slack = 0.0;
  out.report.error_bar = 0.0;
  out.report.pass = std::isfinite(out.c0) && out.c0 > 0.0;
  out.report.params["eps"] = eps;
  out.report.params["delta"] = delta;
  out.report.params["alpha_count"] = double(alpha_grid.size());
  out.report.params["tau_count"] = double(tau_grid.size());
  out.report.params["tau_at_max"] = out.tau_at_max;
  out.report.params["alpha_at_max"] = out.alpha_at_max;
  out.report.params["domination_violations"] = double(violations);
  out.report.params["envelope_at_zero"] = M(0.0);
  return out;
}

InequalityReport filtered_average_check(const OperatorBundle& bundle,
                                        const std::function<double(double)>& M, double eps,
                                        const WeightFunction& Psi, double T, const Vec& u0,
                                        double c0, const FilteredAverageOptions& opts) {
  if (u0.size() != bundle.dim())
    throw config_error("filtered_average_check: state dimension mismatch");
  if (!(T > 0.0)) throw config_error("filtered_average_check: need T > 0");
  if (!(eps >= 0.0 && eps < 1.0))
    throw config_error("filtered_average_check: need eps in [0,1)");
  if (!(c0 >= 0.0)) throw config_error("filtered_average_check: need c0 >= 0");
  if (opts.max_nodes < 401 || opts.max_nodes > 4096)
    throw config_error("filtered_average_check: max_nodes must lie in [401, 4096]");

  double top = 0.0;
  for (double l : bundle.model().lambdas())
    top = std::max(top, std::sqrt(l * l + bundle.mass()));
  validate_envelope(M, top / (1.0 - eps));

  SpectralFilter filt;
  filt.rule = SpectralFilter::Component::Both;
  filt.profile = [M, eps](double s) { return 1.0 / M(std::abs(s) / (1.0 - eps)); };

  const double sup_end = Psi.support_end();
  const double horizon = std::isfinite(sup_end) ? sup_end * T : opts.horizon_factor * T;
  const auto grid = odd_time_grid(horizon, bundle.damping().sup_norm(), opts.max_nodes);
  const EnergyTrace trace = evolve(bundle, u0, grid, opts.evolve);

  std::vector<double> g(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const Vec filtered = apply_filter(bundle, filt, trace.snapshots[i]);
    const double psi = Psi.value(grid[i] / T);
    g[i] = psi * psi * bundle.energy(filtered);
  }
  const auto [integral, bar] = integral_with_bar(grid, g, T);

  const double dl2 = psi_norms(Psi, 1.0).dl2;
  const double e0 = bundle.energy(u0);

  InequalityReport rep;
  rep.name = "filtered_average";
  rep.lhs = integral;
  rep.rhs = c0 * c0 / (T * T) * dl2 * dl2 * e0;
  rep.slack = rep.rhs - rep.lhs;
  rep.error_bar = bar;
  rep.pass = rep.slack >= -rep.error_bar;
  rep.params["T"] = T;
  rep.params["eps"] = eps;
  rep.params["c0"] = c0;
  rep.params["horizon"] = horizon;
  rep.params["nodes"] = double(grid.size());
  rep.params["psi_dl2"] = dl2;
  rep.params["initial_energy"] = e0;
  return rep;
}

DyadicPair DyadicPair::standard() {
  DyadicPair p;
  p.phi = [](double s) {
    const double a = std::abs(s);
    return level_cutoff_chi(a) - level_cutoff_chi(2.0 * a);
  };
  p.phitilde = [](double s) {
    const double a = std::abs(s);
    return level_cutoff_chi(0.4 * a) - level_cutoff_chi(40.0 * a);
  };
  return p;
}

MixingScan frequency_mixing_scan(const ManifoldModel& model, const DampingProfile& b, double m,
                                 const std::vector<int>& levels, const DyadicPair& pair,
                                 const std::function<double(double)>* envelope) {
  if (levels.empty()) throw config_error("frequency_mixing_scan: no levels requested");
  if (!(m >= 0.0)) throw config_error("frequency_mixing_scan: need m >= 0");
  for (int k : levels) {
    if (k < 0) throw config_error("frequency_mixing_scan: levels must be nonnegative");
    if ((1 << (k + 1)) > model.K())
      throw infeasible_error("frequency_mixing_scan: shell exceeds the truncation", 1 << (k + 1));
  }
  if (model.mode_count() > 4096)
    throw infeasible_error("frequency_mixing_scan: dense multiplication matrix too large",
                           model.K());

  const Mat B = multiplication_matrix(model, b);
  const double noise_floor = 1e-13 * std::max(1.0, B.cwiseAbs().maxCoeff());
  const int n = model.mode_count();
  RVec lm(n);
  for (int i = 0; i < n; ++i) lm(i) = std::sqrt(model.lambda(i) * model.lambda(i) + m);

  MixingScan scan;
  std::vector<double> lx, ly, ex, ey;
  for (int k : levels) {
    MixingLevel lev;
    lev.k = k;
    lev.lambda = double(1 << k);
    Mat masked = B;
    int shell = 0;
    for (int c = 0; c < n; ++c) {
      const double fc = pair.phi(lm(c) / lev.lambda);
      if (fc > 0.0) ++shell;
      masked.col(c) *= fc;
    }
    for (int r = 0; r < n; ++r) masked.row(r) *= (1.0 - pair.phitilde(lm(r) / lev.lambda));
    lev.shell_modes = shell;
    if (masked.cwiseAbs().maxCoeff() == 0.0) {
      lev.norm = 0.0;
    } else {
      Eigen::BDCSVD<Mat> svd(masked);
      lev.norm = svd.singularValues()(0);
      // Rounding residue in analytically vanishing couplings stays out of the
      // decay fit.
      if (lev.norm > noise_floor) {
        lx.push_back(std::log(lev.lambda));
        ly.push_back(std::log(lev.norm));
      }
    }
    if (envelope) {
      lev.envelope = (*envelope)(lev.lambda);
      lev.envelope_at4 = (*envelope)(4.0 * lev.lambda);
      scan.temperance.push_back(lev.envelope_at4 / lev.envelope);
      if (lev.envelope > 0.0) {
        ex.push_back(std::log(lev.lambda));
        ey.push_back(std::log(lev.envelope));
      }
    }
    scan.levels.push_back(lev);
  }
  scan.decay_exponent = lx.size() >= 2 ? -slope_fit(lx, ly) : kNaN;
  scan.envelope_exponent = ex.size() >= 2 ? slope_fit(ex, ey) : kNaN;
  return scan;
}

void mixing_to_csv(const MixingScan& scan, const std::string& path) {
  nlohmann::json meta;
  meta["kind"] = "mixing_scan";
  if (std::isfinite(scan.decay_exponent)) meta["decay_exponent"] = scan.decay_exponent;
  if (std::isfinite(scan.envelope_exponent)) meta["envelope_exponent"] = scan.envelope_exponent;
  std::vector<std::vector<double>> rows;
  rows.reserve(scan.levels.size());
  for (std::size_t i = 0; i < scan.levels.size(); ++i) {
    const auto& lev = scan.levels[i];
    const double temp = i < scan.temperance.size() ? scan.temperance[i] : kNaN;
    rows.push_back({double(lev.k), lev.lambda, lev.norm, double(lev.shell_modes), lev.envelope,
                    lev.envelope_at4, temp});
  }
  write_csv_atomic(path, meta.dump(),
                   {"k", "lambda", "norm", "shell_modes", "envelope", "envelope_at4", "temperance"},
                   rows);
}

}  // namespace dwlab
