#pragma once

#include <string>
#include <vector>

#include "operators.hpp"

namespace dwlab {

struct BlockEig {
  int block = -1;
  Vec eigenvalues;
  Mat V;
  Mat Vinv;  // left empty when the eigenbasis is too ill-conditioned to invert
  double condition = 0.0;
};

struct SpectrumResult {
  std::vector<BlockEig> blocks;  // one entry per canonical block
  std::vector<cxd> eigenvalues;  // every block, twins included, sorted by (Re, Im)
  double spectral_abscissa = 0.0;
  double max_condition = 0.0;
  bool ill_conditioned = false;  // eigenbasis condition above 1e8 somewhere

  const BlockEig* block_eig(int block) const;
};

SpectrumResult spectrum(const OperatorBundle& bundle);

struct ResolventOptions {
  // Direct SVD up to this block dimension; larger blocks use inverse power
  // iteration on the factored shifted matrix (falling back to SVD if the
  // iteration stalls).
  int svd_max_dim = 1500;
  // Scans evaluate many shifts, so they switch to the factored path earlier.
  int scan_svd_max_dim = 320;
  double power_tol = 1e-10;
  int power_max_iter = 500;
  double near_singular_rel = 1e-12;
  int workers = 1;
  // Refinement budget: bisection stops after this many rounds, inserting at
  // most this many midpoints per round (highest adjacent value first).
  int max_refine_rounds = 60;
  int max_inserts_per_round = 128;
};

struct ResolventValue {
  double value = 0.0;
  double sigma_min = 0.0;
  bool near_singular = false;
};

// Operator norm of (z - A)^{-1} in the bundle's weighted inner product,
// computed blockwise as 1/sigma_min of the similarity-scaled shifted matrix.
ResolventValue resolvent_norm(const OperatorBundle& bundle, cxd z,
                              const ResolventOptions& opts = {});

struct ResolventScan {
  std::string tag;
  std::vector<double> s;
  std::vector<double> value;
  std::vector<int> flag;  // 1 marks near-singular points; they are excluded
                          // from peaks, envelopes and caps
  std::vector<double> envelope;   // running sup of value over |r| <= |s|
  std::vector<double> certified;  // guaranteed value at the midpoint of the
                                  // interval to the right of each node
  std::vector<double> peak_s;     // local maxima locations
  double grid_max = 0.0;
  double cap_max = 0.0;  // certified upper cap on inter-grid peaks (inf when
                         // an interval touches a near-singular node)
  int evaluations = 0;
  double h = 0.0;  // semiclassical window metadata, 0 when not a window scan
  double eps_window = 0.0;
};

// Resolvent norm sampled along the spectral axis: at z = is for the wave-side
// forms, at z = s for bundles in the Schroedinger convention (the two agree
// through the conjugations). With refine=true, grid intervals are bisected
// around local maxima until the running peak settles to 1e-3 relative and the
// certified inter-grid caps are within the same slack of it.
ResolventScan scan_imaginary_axis(const OperatorBundle& bundle, std::vector<double> s_grid,
                                  bool refine, const ResolventOptions& opts = {});

// Largest scanned value over |s_j| <= |tau| (near-singular nodes excluded).
double envelope_at(const ResolventScan& scan, double tau);

void scan_to_csv(const ResolventScan& scan, const std::string& path);

struct GResult {
  double G = 0.0;    // grid sup over the window [1-eps,1+eps]/h
  double cap = 0.0;  // certified cap on the true sup over the window
  double h = 0.0;
  double eps = 0.0;
  int evaluations = 0;
  ResolventScan scan;
};

// Smallest singular value of a general square matrix: direct SVD at small
// dimensions, shifted-inverse power iteration (with SVD fallback) above.
double smallest_singular_value(const Mat& M, double tol = 1e-10);

// Operator norm of the skew part of the generator in the bundle weight, the
// maximum over canonical blocks.
double skew_part_norm(const OperatorBundle& bundle);

GResult G_of_h(const OperatorBundle& bundle, double h, double eps, int grid_points,
               const ResolventOptions& opts = {});

}  // namespace dwlab
