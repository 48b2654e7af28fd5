#include "spectra.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <random>
#include <thread>

#include "io.hpp"

namespace dwlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<int> canonical_blocks(const OperatorBundle& b) {
  std::vector<int> out;
  for (int j = 0; j < b.block_count(); ++j)
    if (b.block_twin(j) == j) out.push_back(j);
  return out;
}

Mat scaled_shifted_block(const OperatorBundle& b, int j, cxd z) {
  Mat M = b.block_matrix(j);
  RVec w = b.block_weight(j);
  const int n = static_cast<int>(M.rows());
  RVec sq(n);
  for (int i = 0; i < n; ++i) sq(i) = std::sqrt(w(i));
  for (int c = 0; c < n; ++c)
    for (int r = 0; r < n; ++r) M(r, c) = -M(r, c) * (sq(r) / sq(c));
  for (int i = 0; i < n; ++i) M(i, i) += z;
  return M;
}

double scaled_inf_norm(const OperatorBundle& b, const std::vector<int>& canonical) {
  double s = 0.0;
  for (int j : canonical) {
    Mat M = scaled_shifted_block(b, j, cxd(0, 0));
    s = std::max(s, M.cwiseAbs().rowwise().sum().maxCoeff());
  }
  return s;
}

// Distance from z to the spectrum of the undamped part of a block. After the
// weight scaling that part is normal for every form except bold_A, so
// sigma_min(z - block) >= gap - sup(b) gives a cheap certificate to skip
// blocks during scans.
double normal_gap(const OperatorBundle& b, int j, cxd z) {
  if (b.tag() == Formulation::bold_A) return -kInf;
  const bool schro = b.schroedinger_convention();
  const bool cut = b.tag() == Formulation::P_cut || b.tag() == Formulation::P_diag;
  const auto& rows = b.block_rows(j);
  double gap = kInf;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    cxd nv(0, 0);
    if (rows[i].comp != 2) {
      const double lam = b.row_lambda(j, static_cast<int>(i));
      double d = std::sqrt(lam * lam + b.mass());
      if (cut) d *= b.cutoffs().chi0_wide(b.cut_h() * d);
      if (rows[i].comp == 1) d = -d;
      nv = schro ? cxd(d, 0) : cxd(0, d);
    }
    gap = std::min(gap, std::abs(z - nv));
  }
  return gap;
}

double sigma_min_direct(const Mat& M) {
  Eigen::BDCSVD<Mat> svd(M);
  const auto& sv = svd.singularValues();
  return sv(sv.size() - 1);
}

double sigma_min_power(const Mat& M, double tol, int max_iter, bool& converged) {
  const int n = static_cast<int>(M.rows());
  Eigen::PartialPivLU<Mat> lu(M);
  std::mt19937_64 rng(0x2545F4914F6CDD1DULL ^ static_cast<unsigned long long>(n));
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = cxd(g(rng), g(rng));
  v /= v.norm();
  double sigma_prev = -1.0;
  converged = false;
  for (int it = 0; it < max_iter; ++it) {
    Vec w = lu.adjoint().solve(v);
    Vec u = lu.solve(w);
    const double nu = u.norm();
    if (!std::isfinite(nu)) return 0.0;
    if (nu == 0.0) return 0.0;
    const double sigma = 1.0 / std::sqrt(nu);
    v = u / nu;
    if (sigma_prev >= 0.0 && std::abs(sigma - sigma_prev) <= tol * sigma) {
      converged = true;
      return sigma;
    }
    sigma_prev = sigma;
  }
  return sigma_prev;
}

struct EvalContext {
  const OperatorBundle* bundle = nullptr;
  std::vector<int> canonical;
  double sup_b = 0.0;
  double scale = 0.0;
  int svd_dim = 1500;
  const ResolventOptions* opts = nullptr;
};

double eval_sigma(const EvalContext& cx, cxd z) {
  std::vector<std::pair<double, int>> order;
  order.reserve(cx.canonical.size());
  for (int j : cx.canonical) order.emplace_back(normal_gap(*cx.bundle, j, z), j);
  std::sort(order.begin(), order.end());
  double best = kInf;
  for (const auto& [gap, j] : order) {
    if (gap - cx.sup_b > best) break;
    Mat M = scaled_shifted_block(*cx.bundle, j, z);
    double sig;
    if (M.rows() <= cx.svd_dim) {
      sig = sigma_min_direct(M);
    } else {
      bool ok = false;
      sig = sigma_min_power(M, cx.opts->power_tol, cx.opts->power_max_iter, ok);
      if (!ok) sig = sigma_min_direct(M);
    }
    best = std::min(best, sig);
  }
  return best;
}

cxd axis_point(const OperatorBundle& b, double s) {
  return b.schroedinger_convention() ? cxd(s, 0.0) : cxd(0.0, s);
}

void eval_batch(const EvalContext& cx, const std::vector<double>& ss, std::vector<double>& val,
                std::vector<int>& flg) {
  const int n = static_cast<int>(ss.size());
  val.assign(n, 0.0);
  flg.assign(n, 0);
  const int workers = std::max(1, std::min(cx.opts->workers, n));
  auto work = [&](int t) {
    for (int i = t; i < n; i += workers) {
      const double sig = eval_sigma(cx, axis_point(*cx.bundle, ss[i]));
      val[i] = sig > 0.0 ? 1.0 / sig : kInf;
      flg[i] = sig < cx.opts->near_singular_rel * cx.scale ? 1 : 0;
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
}

EvalContext make_context(const OperatorBundle& b, const ResolventOptions& opts, int svd_dim) {
  EvalContext cx;
  cx.bundle = &b;
  cx.canonical = canonical_blocks(b);
  cx.sup_b = b.damping().sup_norm();
  cx.scale = scaled_inf_norm(b, cx.canonical);
  cx.svd_dim = svd_dim;
  cx.opts = &opts;
  for (int j : cx.canonical) b.block_matrix(j);  // warm the coefficient cache
  return cx;
}

// Certified cap on the values over the half-interval of width d nearest a
// node with value v; infinite once d*v reaches 1.
double half_cap(double v, double d) {
  const double den = 1.0 - d * v;
  return den > 0.0 ? v / den : kInf;
}

void finalize_scan(ResolventScan& scan) {
  const int n = static_cast<int>(scan.s.size());
  scan.grid_max = 0.0;
  for (int i = 0; i < n; ++i)
    if (!scan.flag[i]) scan.grid_max = std::max(scan.grid_max, scan.value[i]);

  scan.peak_s.clear();
  for (int i = 0; i < n; ++i) {
    if (scan.flag[i]) continue;
    const bool up = i == 0 || scan.flag[i - 1] || scan.value[i] >= scan.value[i - 1];
    const bool down = i == n - 1 || scan.flag[i + 1] || scan.value[i] >= scan.value[i + 1];
    const bool strict = (i == 0 || scan.flag[i - 1] || scan.value[i] > scan.value[i - 1]) ||
                        (i == n - 1 || scan.flag[i + 1] || scan.value[i] > scan.value[i + 1]);
    if (up && down && strict) scan.peak_s.push_back(scan.s[i]);
  }

  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return std::abs(scan.s[a]) < std::abs(scan.s[b]);
  });
  scan.envelope.assign(n, 0.0);
  double run = 0.0;
  for (int r = 0; r < n; ++r) {
    const int i = idx[r];
    if (!scan.flag[i]) run = std::max(run, scan.value[i]);
    scan.envelope[i] = run;
  }

  scan.certified.assign(n, 0.0);
  scan.cap_max = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i == n - 1) {
      scan.certified[i] = scan.flag[i] ? 0.0 : scan.value[i];
      break;
    }
    const double d = (scan.s[i + 1] - scan.s[i]) / 2.0;
    double lo = 0.0, cap = 0.0;
    if (!scan.flag[i]) {
      lo = std::max(lo, scan.value[i] / (1.0 + d * scan.value[i]));
      cap = std::max(cap, half_cap(scan.value[i], d));
    } else {
      cap = kInf;
    }
    if (!scan.flag[i + 1]) {
      lo = std::max(lo, scan.value[i + 1] / (1.0 + d * scan.value[i + 1]));
      cap = std::max(cap, half_cap(scan.value[i + 1], d));
    } else {
      cap = kInf;
    }
    scan.certified[i] = lo;
    scan.cap_max = std::max(scan.cap_max, cap);
  }
  if (n == 1) scan.cap_max = scan.flag[0] ? kInf : scan.value[0];
}

}  // namespace

const BlockEig* SpectrumResult::block_eig(int block) const {
  for (const auto& be : blocks)
    if (be.block == block) return &be;
  return nullptr;
}

SpectrumResult spectrum(const OperatorBundle& bundle) {
  SpectrumResult out;
  const auto canonical = canonical_blocks(bundle);
  out.blocks.reserve(canonical.size());
  for (int j : canonical) {
    BlockEig be;
    be.block = j;
    Mat M = bundle.block_matrix(j);
    Eigen::ComplexEigenSolver<Mat> es(M, true);
    if (es.info() != Eigen::Success)
      throw std::runtime_error("eigendecomposition failed on block " + std::to_string(j));
    be.eigenvalues = es.eigenvalues();
    be.V = es.eigenvectors();
    Eigen::BDCSVD<Mat> svd(be.V);
    const auto& sv = svd.singularValues();
    const double smin = sv(sv.size() - 1);
    be.condition = smin > 0.0 ? sv(0) / smin : kInf;
    if (be.condition <= 1e8) be.Vinv = be.V.partialPivLu().inverse();
    out.max_condition = std::max(out.max_condition, be.condition);
    out.blocks.push_back(std::move(be));
  }
  out.ill_conditioned = !(out.max_condition <= 1e8);

  for (int j = 0; j < bundle.block_count(); ++j) {
    const BlockEig* be = out.block_eig(bundle.block_twin(j));
    for (int i = 0; i < be->eigenvalues.size(); ++i) out.eigenvalues.push_back(be->eigenvalues(i));
  }
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end(), [](cxd a, cxd b) {
    if (a.real() != b.real()) return a.real() < b.real();
    return a.imag() < b.imag();
  });
  out.spectral_abscissa = -kInf;
  for (const auto& z : out.eigenvalues) out.spectral_abscissa = std::max(out.spectral_abscissa, z.real());
  return out;
}

double smallest_singular_value(const Mat& M, double tol) {
  if (M.rows() != M.cols()) throw config_error("smallest_singular_value: matrix must be square");
  if (M.rows() == 0) return 0.0;
  if (M.rows() <= 320) return sigma_min_direct(M);
  bool ok = false;
  const double sig = sigma_min_power(M, tol, 500, ok);
  return ok ? sig : sigma_min_direct(M);
}

double skew_part_norm(const OperatorBundle& bundle) {
  double q = 0.0;
  for (int j = 0; j < bundle.block_count(); ++j) {
    if (bundle.block_twin(j) != j) continue;
    const Mat M = bundle.block_matrix(j);
    const RVec w = bundle.block_weight(j);
    const Vec sw = w.cwiseSqrt().cast<cxd>();
    const Vec isw = sw.cwiseInverse();
    const Mat S = sw.asDiagonal() * M * isw.asDiagonal();
    const Mat Q = (S - S.adjoint()) / cxd(0.0, 2.0);
    Eigen::SelfAdjointEigenSolver<Mat> es(Q, Eigen::EigenvaluesOnly);
    q = std::max(q, es.eigenvalues().cwiseAbs().maxCoeff());
  }
  return q;
}

ResolventValue resolvent_norm(const OperatorBundle& bundle, cxd z, const ResolventOptions& opts) {
  EvalContext cx = make_context(bundle, opts, opts.svd_max_dim);
  ResolventValue rv;
  rv.sigma_min = eval_sigma(cx, z);
  rv.value = rv.sigma_min > 0.0 ? 1.0 / rv.sigma_min : kInf;
  rv.near_singular = rv.sigma_min < opts.near_singular_rel * cx.scale;
  return rv;
}

ResolventScan scan_imaginary_axis(const OperatorBundle& bundle, std::vector<double> s_grid,
                                  bool refine, const ResolventOptions& opts) {
  if (s_grid.empty()) throw config_error("scan: empty grid");
  for (std::size_t i = 1; i < s_grid.size(); ++i)
    if (!(s_grid[i] > s_grid[i - 1])) throw config_error("scan: grid must be strictly increasing");

  EvalContext cx = make_context(bundle, opts, opts.scan_svd_max_dim);
  ResolventScan scan;
  scan.tag = formulation_name(bundle.tag());
  scan.s = std::move(s_grid);
  eval_batch(cx, scan.s, scan.value, scan.flag);
  scan.evaluations = static_cast<int>(scan.s.size());

  if (refine && scan.s.size() >= 2) {
    const double span = scan.s.back() - scan.s.front();
    const double min_ds = span * 1e-7;
    double prev_peak = -1.0;
    bool chase_peaks = true;
    for (int round = 0; round < opts.max_refine_rounds; ++round) {
      const int n = static_cast<int>(scan.s.size());
      double peak = 0.0;
      for (int i = 0; i < n; ++i)
        if (!scan.flag[i]) peak = std::max(peak, scan.value[i]);

      std::vector<std::pair<double, double>> cand;  // (priority value, midpoint)
      if (chase_peaks) {
        for (int i = 0; i < n; ++i) {
          if (scan.flag[i]) continue;
          const bool up = i == 0 || scan.flag[i - 1] || scan.value[i] >= scan.value[i - 1];
          const bool down = i == n - 1 || scan.flag[i + 1] || scan.value[i] >= scan.value[i + 1];
          if (!(up && down)) continue;
          if (i > 0 && scan.s[i] - scan.s[i - 1] > min_ds)
            cand.emplace_back(scan.value[i], (scan.s[i] + scan.s[i - 1]) / 2.0);
          if (i < n - 1 && scan.s[i + 1] - scan.s[i] > min_ds)
            cand.emplace_back(scan.value[i], (scan.s[i] + scan.s[i + 1]) / 2.0);
        }
      }
      for (int i = 0; i + 1 < n; ++i) {
        if (scan.flag[i] || scan.flag[i + 1]) continue;
        const double len = scan.s[i + 1] - scan.s[i];
        if (len <= 2.0 * min_ds) continue;
        const double d = len / 2.0;
        const double cap = std::max(half_cap(scan.value[i], d), half_cap(scan.value[i + 1], d));
        if (cap > (1.0 + 1e-3) * peak)
          cand.emplace_back(std::max(scan.value[i], scan.value[i + 1]),
                            (scan.s[i] + scan.s[i + 1]) / 2.0);
      }
      if (cand.empty()) break;

      std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
      });
      std::vector<double> pts;
      for (const auto& [pri, mid] : cand) {
        if (std::binary_search(scan.s.begin(), scan.s.end(), mid)) continue;
        if (std::find(pts.begin(), pts.end(), mid) == pts.end()) pts.push_back(mid);
        if (static_cast<int>(pts.size()) >= opts.max_inserts_per_round) break;
      }
      std::sort(pts.begin(), pts.end());

      std::vector<double> nv;
      std::vector<int> nf;
      eval_batch(cx, pts, nv, nf);
      scan.evaluations += static_cast<int>(pts.size());
      for (std::size_t p = 0; p < pts.size(); ++p) {
        const auto it = std::lower_bound(scan.s.begin(), scan.s.end(), pts[p]);
        const auto at = it - scan.s.begin();
        scan.s.insert(it, pts[p]);
        scan.value.insert(scan.value.begin() + at, nv[p]);
        scan.flag.insert(scan.flag.begin() + at, nf[p]);
      }

      double new_peak = 0.0;
      for (std::size_t i = 0; i < scan.s.size(); ++i)
        if (!scan.flag[i]) new_peak = std::max(new_peak, scan.value[i]);
      chase_peaks = !(prev_peak > 0.0 && std::abs(new_peak - prev_peak) <= 1e-3 * prev_peak);
      prev_peak = new_peak;
    }
  }

  finalize_scan(scan);
  return scan;
}

double envelope_at(const ResolventScan& scan, double tau) {
  double m = 0.0;
  for (std::size_t i = 0; i < scan.s.size(); ++i)
    if (!scan.flag[i] && std::abs(scan.s[i]) <= std::abs(tau)) m = std::max(m, scan.value[i]);
  return m;
}

void scan_to_csv(const ResolventScan& scan, const std::string& path) {
  nlohmann::json meta;
  meta["kind"] = "resolvent_scan";
  meta["tag"] = scan.tag;
  meta["points"] = scan.s.size();
  meta["grid_max"] = scan.grid_max;
  meta["cap_max"] = std::isfinite(scan.cap_max) ? nlohmann::json(scan.cap_max) : nlohmann::json();
  meta["evaluations"] = scan.evaluations;
  if (scan.h > 0.0) {
    meta["h"] = scan.h;
    meta["eps"] = scan.eps_window;
  }
  std::vector<std::vector<double>> rows;
  rows.reserve(scan.s.size());
  for (std::size_t i = 0; i < scan.s.size(); ++i)
    rows.push_back({scan.s[i], scan.value[i], double(scan.flag[i])});
  write_csv_atomic(path, meta.dump(), {"s", "value", "flag"}, rows);
}

GResult G_of_h(const OperatorBundle& bundle, double h, double eps, int grid_points,
               const ResolventOptions& opts) {
  if (!(h > 0.0) || !(eps > 0.0) || eps >= 1.0) throw config_error("G_of_h: need h > 0, 0 < eps < 1");
  if (grid_points < 2) throw config_error("G_of_h: need at least 2 grid points");
  const auto& lam = bundle.model().lambdas();
  const double max_lam = *std::max_element(lam.begin(), lam.end());
  if ((1.0 + eps) / h > max_lam) {
    const int need = static_cast<int>(std::ceil((1.0 + eps) / h));
    throw infeasible_error("G_of_h: frequency window [1-eps,1+eps]/h exceeds the truncation", need);
  }
  GResult res;
  res.h = h;
  res.eps = eps;
  res.scan = scan_imaginary_axis(bundle, linspace((1.0 - eps) / h, (1.0 + eps) / h, grid_points),
                                 true, opts);
  res.scan.h = h;
  res.scan.eps_window = eps;
  res.G = res.scan.grid_max;
  res.cap = res.scan.cap_max;
  res.evaluations = res.scan.evaluations;
  return res;
}

}  // namespace dwlab
