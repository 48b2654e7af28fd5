#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "common.hpp"
#include "damping.hpp"
#include "manifold.hpp"

namespace dwlab {

// The first-order formulations of the damped wave system. Tags ending in _m
// carry a positive mass shift; the _plus and bold_A tags are the massless
// variants; P_cut / P_diag are the frequency-truncated forms.
enum class Formulation {
  A_m,
  Atilde_m,
  P_m,
  A_plus,
  Atilde_plus,
  P_plus,
  bold_A,
  P_cut,
  P_diag,
};

std::string formulation_name(Formulation f);
Formulation formulation_from_name(const std::string& name);

// Smooth frequency cutoffs: chi0 equals 1 on [0.875, 1.125] and vanishes off
// [0.75, 1.25]; chi0_wide equals 1 on the support of chi0 and vanishes off
// [0.5, 1.5], so chi0_wide * chi0 = chi0 pointwise.
struct CutoffPair {
  std::function<double(double)> chi0;
  std::function<double(double)> chi0_wide;
  static CutoffPair standard();
};

// Galerkin matrix of one formulation, organized in blocks that decouple under
// the damping (per-k_y blocks for x-only torus profiles, one block otherwise).
// Matrices are built on demand; bundles hold no dense storage of their own.
class OperatorBundle {
 public:
  struct RowInfo {
    int mode;  // index into model.modes(); -1 for the shared-mean row
    int comp;  // 0 / 1 (position / velocity, or + / -); 2 = shared-mean row
  };

  static OperatorBundle assemble(const ManifoldModel& model, const DampingProfile& b, double m,
                                 Formulation tag);
  static OperatorBundle assemble_cut(const ManifoldModel& model, const DampingProfile& b, double m,
                                     double h, const CutoffPair& cut, bool diagonal_part);

  Formulation tag() const { return tag_; }
  double mass() const { return m_; }
  double cut_h() const { return h_; }
  const CutoffPair& cutoffs() const { return cut_; }
  const ManifoldModel& model() const { return *model_; }
  const DampingProfile& damping() const { return *damping_; }

  int dim() const { return dim_; }
  int block_count() const { return static_cast<int>(blocks_.size()); }
  int block_dim(int j) const { return static_cast<int>(blocks_[j].rows.size()); }
  int block_offset(int j) const { return blocks_[j].offset; }
  // Index of the block whose matrix this one shares (mirrored k_y); j itself
  // when the block is its own representative.
  int block_twin(int j) const { return blocks_[j].twin; }
  const std::vector<RowInfo>& block_rows(int j) const { return blocks_[j].rows; }
  const std::vector<int>& block_mode_ids(int j) const { return blocks_[j].mode_ids; }
  // Raw eigenvalue of the row's mode (0 for the shared-mean row).
  double row_lambda(int j, int i) const { return blocks_[j].lambda[i]; }
  double row_weight(int j, int i) const { return blocks_[j].weight[i]; }

  Mat block_matrix(int j) const;
  RVec block_weight(int j) const;
  Mat dense() const;
  RVec weight() const;

  // Locate the flat index of (mode, comp); -1 if the row does not exist.
  int find_row(int mode_id, int comp) const;

  double weighted_norm(const Vec& state) const;
  double energy(const Vec& state) const {
    const double n = weighted_norm(state);
    return 0.5 * n * n;
  }

  // True when the semigroup of this formulation is exp(i t M) rather than
  // exp(t M) for the stored matrix M.
  bool schroedinger_convention() const;

 private:
  struct Block {
    std::vector<int> mode_ids;
    std::vector<RowInfo> rows;
    std::vector<double> lambda;
    std::vector<double> weight;
    int offset = 0;
    int twin = 0;
  };

  OperatorBundle() = default;
  void build_blocks();
  Mat local_b_matrix(int j) const;

  Formulation tag_ = Formulation::A_m;
  double m_ = 0.0;
  double h_ = 0.0;
  CutoffPair cut_;
  const ManifoldModel* model_ = nullptr;
  std::shared_ptr<const DampingProfile> damping_;
  std::vector<Block> blocks_;
  int dim_ = 0;
  bool split_ = false;
  mutable std::shared_ptr<Mat> b_cache_;  // shared multiplication matrix
};

// Norm-preserving change of representation between formulations sharing the
// same model, damping, and mass. Supported routes: A <-> Atilde <-> P within
// the massive and massless families, and bold_A <-> A_plus (the former
// requires a mean-free first component).
Vec conjugate_state(const OperatorBundle& from, const OperatorBundle& to, const Vec& state);

// Dense rank-one spectral projector onto the kernel of the massless bold_A
// formulation; commutes with the assembled matrix exactly.
Mat kernel_projector(const OperatorBundle& bold_a);

// Off-diagonal corrector for the truncated form; O(h) in norm. Row layout
// follows the given P_cut bundle.
Mat corrector_block(const OperatorBundle& cut_bundle, int j);
Mat corrector_matrix(const OperatorBundle& cut_bundle);

struct DiagSuiteResult {
  std::vector<double> h;
  std::vector<double> e1;              // |(e^{itP} - e^{itP_cut}) chi0(h Lam)|
  std::vector<double> e2;              // |e^{itP_cut} - e^{itP_diag}|
  std::vector<double> corrector_norm;  // |K_h|
  std::vector<double> tail_mass;       // relative coefficient mass above K/2
  double t = 1.0;
  double e2_slope = 0.0;               // log-log slope of e2 against h
};

// Runs the truncation comparison across an h-grid, choosing K = ceil(2/h) per
// point and regularizing the profile at width h^nu when nu > 0.
DiagSuiteResult diagonalization_suite(
    ManifoldKind kind, const std::function<DampingProfile(const ManifoldModel&)>& make_profile,
    double m, double nu, const std::vector<double>& hs, double t, const CutoffPair& cut);

// Relative l1 coefficient mass of the profile above frequency cut (1-D
// transform; requires a circle model or an x-only profile).
double coefficient_tail_mass(const ManifoldModel& model, const DampingProfile& b, int freq_cut);

}  // namespace dwlab
