#include "evolution.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <map>
#include <unsupported/Eigen/MatrixFunctions>

#include "io.hpp"

namespace dwlab {

namespace {

cxd generator_factor(const OperatorBundle& b) {
  return b.schroedinger_convention() ? cxd(0, 1) : cxd(1, 0);
}

struct BlockRunner {
  int j = 0;
  int offset = 0;
  int dim = 0;
  int canonical = 0;
  bool eig = false;
  const BlockEig* be = nullptr;
  Vec w0;     // Vinv * u0 slice (eig path)
  Mat M;      // block generator including the convention factor (expm path)
  Vec state;  // current state (expm path)
  double state_t = 0.0;
};

}  // namespace

std::vector<double> default_time_grid(const OperatorBundle& bundle, double T) {
  if (!(T > 0.0)) throw config_error("default_time_grid: need T > 0");
  const double target = std::min(0.1 / (1.0 + bundle.damping().sup_norm()), T / 1000.0);
  const int n = std::max(1, static_cast<int>(std::ceil(T / target)));
  return linspace(0.0, T, n + 1);
}

EnergyTrace evolve(const OperatorBundle& bundle, const Vec& u0, const std::vector<double>& t_grid,
                   const EvolveOptions& opts) {
  if (u0.size() != bundle.dim()) throw config_error("evolve: state size mismatch");
  if (t_grid.empty()) throw config_error("evolve: empty time grid");
  for (std::size_t i = 1; i < t_grid.size(); ++i)
    if (!(t_grid[i] > t_grid[i - 1])) throw config_error("evolve: grid must be strictly increasing");

  const cxd c = generator_factor(bundle);
  SpectrumResult spec;
  bool have_spec = false;
  if (!opts.force_exponential) {
    spec = spectrum(bundle);
    have_spec = true;
  }

  std::vector<BlockRunner> runners(bundle.block_count());
  for (int j = 0; j < bundle.block_count(); ++j) {
    BlockRunner& br = runners[j];
    br.j = j;
    br.offset = bundle.block_offset(j);
    br.dim = bundle.block_dim(j);
    br.canonical = bundle.block_twin(j);
    if (have_spec) {
      const BlockEig* be = spec.block_eig(br.canonical);
      if (be && be->Vinv.rows() == be->V.rows() && be->V.rows() > 0) {
        br.eig = true;
        br.be = be;
        br.w0 = be->Vinv * u0.segment(br.offset, br.dim);
      }
    }
    if (!br.eig) {
      br.M = c * bundle.block_matrix(br.canonical);
      br.state = u0.segment(br.offset, br.dim);
      br.state_t = 0.0;
    }
  }
  std::map<std::pair<int, double>, Mat> step_cache;  // (canonical block, dt) -> exponential

  const int nodes = static_cast<int>(t_grid.size());
  EnergyTrace trace;
  trace.tag = formulation_name(bundle.tag());
  trace.t = t_grid;
  trace.energy.resize(nodes);
  trace.dissipation_rate.resize(nodes);
  const int stride = (nodes + 4095) / 4096;

  Vec u(bundle.dim()), gu(bundle.dim());
  const RVec w = bundle.weight();
  for (int i = 0; i < nodes; ++i) {
    const double t = t_grid[i];
    for (auto& br : runners) {
      if (br.eig) {
        Vec y(br.dim);
        for (int k = 0; k < br.dim; ++k) y(k) = std::exp(c * br.be->eigenvalues(k) * t) * br.w0(k);
        u.segment(br.offset, br.dim) = br.be->V * y;
        for (int k = 0; k < br.dim; ++k) y(k) *= c * br.be->eigenvalues(k);
        gu.segment(br.offset, br.dim) = br.be->V * y;
      } else {
        const double dt = t - br.state_t;
        if (dt != 0.0) {
          auto key = std::make_pair(br.canonical, dt);
          auto it = step_cache.find(key);
          if (it == step_cache.end()) it = step_cache.emplace(key, Mat((dt * br.M).exp())).first;
          br.state = it->second * br.state;
          br.state_t = t;
        }
        u.segment(br.offset, br.dim) = br.state;
        gu.segment(br.offset, br.dim) = br.M * br.state;
      }
    }
    trace.energy[i] = bundle.energy(u);
    double rate = 0.0;
    for (int k = 0; k < bundle.dim(); ++k) rate -= w(k) * (gu(k) * std::conj(u(k))).real();
    trace.dissipation_rate[i] = rate;
    if (i % stride == 0 || i == nodes - 1) {
      if (!trace.snapshot_index.empty() && trace.snapshot_index.back() == i) {
      } else {
        trace.snapshot_index.push_back(i);
        trace.snapshots.push_back(u);
      }
    }
  }
  trace.initial_energy = trace.energy.front();
  trace.cumulative_dissipation = cumulative_integral(trace.t, trace.dissipation_rate);
  return trace;
}

Vec evolve_state(const OperatorBundle& bundle, const Vec& u0, double t, const EvolveOptions& opts) {
  if (t == 0.0) return u0;
  auto trace = evolve(bundle, u0, {t}, opts);
  return trace.snapshots.front();
}

namespace {

void check_even(const std::function<double(double)>& f) {
  for (double x : {0.37, 1.234, 2.618}) {
    if (std::abs(f(x) - f(-x)) > 1e-12 * (1.0 + std::abs(f(x))))
      throw config_error("spectral filter profile must be even");
  }
}

}  // namespace

Vec apply_filter(const OperatorBundle& bundle, const SpectralFilter& filter, const Vec& u) {
  if (u.size() != bundle.dim()) throw config_error("apply_filter: state size mismatch");
  check_even(filter.profile);
  Vec out(u.size());
  for (int j = 0; j < bundle.block_count(); ++j) {
    const auto& rows = bundle.block_rows(j);
    const int off = bundle.block_offset(j);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double lam = rows[i].comp == 2 ? 0.0 : bundle.row_lambda(j, static_cast<int>(i));
      const double lm = std::sqrt(lam * lam + bundle.mass());
      double factor;
      if (filter.rule == SpectralFilter::Component::Both) {
        factor = filter.profile(lm);
      } else {
        factor = rows[i].comp == 0 ? filter.profile(lm) : 0.0;
      }
      out(off + static_cast<int>(i)) = factor * u(off + static_cast<int>(i));
    }
  }
  return out;
}

Mat filter_matrix(const OperatorBundle& bundle, const SpectralFilter& filter) {
  check_even(filter.profile);
  if (bundle.dim() > 4096)
    throw infeasible_error("filter_matrix: dense form too large at this truncation",
                           bundle.model().K());
  Vec diag = apply_filter(bundle, filter, Vec::Ones(bundle.dim()));
  Mat out = Mat::Zero(bundle.dim(), bundle.dim());
  out.diagonal() = diag;
  return out;
}

PerturbationGap semigroup_perturbation_gap(const OperatorBundle& b1, const OperatorBundle& b2,
                                           double t) {
  if (b1.tag() != Formulation::P_m || b2.tag() != Formulation::P_m)
    throw config_error("semigroup_perturbation_gap: needs two half-wave (P_m) bundles");
  if (&b1.model() != &b2.model() || b1.mass() != b2.mass())
    throw config_error("semigroup_perturbation_gap: bundles must share model and mass");

  PerturbationGap out;
  {
    Mat dB = multiplication_matrix(b1.model(), b2.damping()) -
             multiplication_matrix(b1.model(), b1.damping());
    Eigen::BDCSVD<Mat> svd(dB);
    out.bound = std::abs(t) * svd.singularValues()(0);
  }

  const cxd c(0, 1);
  auto exp_blocks = [&](const OperatorBundle& b, int j) { return Mat((c * t * b.block_matrix(j)).exp()); };
  const bool same_layout = [&] {
    if (b1.block_count() != b2.block_count()) return false;
    for (int j = 0; j < b1.block_count(); ++j)
      if (b1.block_dim(j) != b2.block_dim(j) || b1.block_offset(j) != b2.block_offset(j))
        return false;
    return true;
  }();
  if (same_layout) {
    for (int j = 0; j < b1.block_count(); ++j) {
      if (b1.block_twin(j) != j || b2.block_twin(j) != j) continue;
      Eigen::BDCSVD<Mat> svd(exp_blocks(b2, j) - exp_blocks(b1, j));
      out.gap = std::max(out.gap, svd.singularValues()(0));
    }
    // Twin blocks of either bundle repeat canonical matrices, but the two
    // bundles may pair canonicals differently; cover the remainder densely.
    bool twins_match = true;
    for (int j = 0; j < b1.block_count(); ++j)
      if (b1.block_twin(j) != b2.block_twin(j)) twins_match = false;
    if (!twins_match) {
      Eigen::BDCSVD<Mat> svd(Mat((c * t * b2.dense()).exp() - (c * t * b1.dense()).exp()));
      out.gap = svd.singularValues()(0);
    }
  } else {
    Eigen::BDCSVD<Mat> svd(Mat((c * t * b2.dense()).exp() - (c * t * b1.dense()).exp()));
    out.gap = svd.singularValues()(0);
  }

  if (out.gap > out.bound * (1.0 + 1e-9) + 1e-12)
    throw std::runtime_error("semigroup perturbation gap exceeds its bound");
  return out;
}

CommutatorGrowth commutator_growth(const OperatorBundle& bundle, const Mat& A, double t) {
  if (A.rows() != bundle.dim() || A.cols() != bundle.dim())
    throw config_error("commutator_growth: matrix size mismatch");
  const cxd c = generator_factor(bundle);
  Mat G = c * bundle.dense();
  CommutatorGrowth out;
  {
    Eigen::BDCSVD<Mat> svd(Mat(G * A - A * G));
    out.commutator_norm = svd.singularValues()(0);
  }
  Mat X = (t * G).exp();
  Mat D = X * A - A * X;
  if (D.norm() == 0.0) {
    out.growth = 0.0;
  } else {
    Eigen::BDCSVD<Mat> svd(D);
    out.growth = svd.singularValues()(0);
  }
  out.bound = std::abs(t) * out.commutator_norm;
  double a_norm = A.norm();
  if (out.growth > out.bound * (1.0 + 1e-9) + 1e-12 * (1.0 + a_norm) * std::max(1.0, std::abs(t)))
    throw std::runtime_error("commutator growth exceeds its bound");
  return out;
}

double averaged_energy(const EnergyTrace& trace, const std::function<double(double)>& psi,
                       double T) {
  if (!(T > 0.0)) throw config_error("averaged_energy: need T > 0");
  std::vector<double> g(trace.t.size());
  for (std::size_t i = 0; i < trace.t.size(); ++i) {
    const double p = psi(trace.t[i] / T);
    g[i] = p * p * trace.energy[i];
  }
  return grid_integral(trace.t, g) / T;
}

void trace_to_csv(const EnergyTrace& trace, const std::string& path) {
  nlohmann::json meta;
  meta["kind"] = "energy_trace";
  meta["tag"] = trace.tag;
  meta["points"] = trace.t.size();
  meta["initial_energy"] = trace.initial_energy;
  meta["final_energy"] = trace.energy.back();
  meta["dissipated"] = trace.cumulative_dissipation.back();
  std::vector<std::vector<double>> rows;
  rows.reserve(trace.t.size());
  for (std::size_t i = 0; i < trace.t.size(); ++i)
    rows.push_back({trace.t[i], trace.energy[i], trace.cumulative_dissipation[i]});
  write_csv_atomic(path, meta.dump(), {"t", "E", "cumulative_dissipation"}, rows);
}

}  // namespace dwlab
