#include "operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>
#include <unsupported/Eigen/MatrixFunctions>

namespace dwlab {

namespace {

bool is_massive(Formulation f) {
  return f == Formulation::A_m || f == Formulation::Atilde_m || f == Formulation::P_m ||
         f == Formulation::P_cut || f == Formulation::P_diag;
}

bool is_plus(Formulation f) {
  return f == Formulation::A_plus || f == Formulation::Atilde_plus || f == Formulation::P_plus;
}

bool drops_mean(Formulation f) { return is_plus(f); }

double operator_norm(const Mat& M) {
  if (M.rows() == 0) return 0.0;
  Eigen::BDCSVD<Mat> svd(M);
  return svd.singularValues()(0);
}

}  // namespace

std::string formulation_name(Formulation f) {
  switch (f) {
    case Formulation::A_m: return "A_m";
    case Formulation::Atilde_m: return "Atilde_m";
    case Formulation::P_m: return "P_m";
    case Formulation::A_plus: return "A_plus";
    case Formulation::Atilde_plus: return "Atilde_plus";
    case Formulation::P_plus: return "P_plus";
    case Formulation::bold_A: return "bold_A";
    case Formulation::P_cut: return "P_cut";
    case Formulation::P_diag: return "P_diag";
  }
  return "?";
}

Formulation formulation_from_name(const std::string& name) {
  for (Formulation f : {Formulation::A_m, Formulation::Atilde_m, Formulation::P_m,
                        Formulation::A_plus, Formulation::Atilde_plus, Formulation::P_plus,
                        Formulation::bold_A, Formulation::P_cut, Formulation::P_diag}) {
    if (formulation_name(f) == name) return f;
  }
  throw config_error("unknown formulation: " + name);
}

CutoffPair CutoffPair::standard() {
  CutoffPair c;
  c.chi0 = [](double s) { return level_cutoff_chi((s - 1.0) * 8.0); };
  c.chi0_wide = [](double s) { return level_cutoff_chi((s - 1.0) * 4.0); };
  return c;
}

bool OperatorBundle::schroedinger_convention() const {
  return tag_ == Formulation::P_m || tag_ == Formulation::P_plus || tag_ == Formulation::P_cut ||
         tag_ == Formulation::P_diag;
}

OperatorBundle OperatorBundle::assemble(const ManifoldModel& model, const DampingProfile& b,
                                        double m, Formulation tag) {
  if (tag == Formulation::P_cut || tag == Formulation::P_diag)
    throw config_error("truncated forms are assembled via assemble_cut");
  if ((tag == Formulation::A_m || tag == Formulation::Atilde_m) && !(m > 0))
    throw config_error(formulation_name(tag) + " requires a positive mass shift");
  if (tag == Formulation::P_m && m < 0) throw config_error("mass shift must be nonnegative");
  if ((is_plus(tag) || tag == Formulation::bold_A) && m != 0.0)
    throw config_error(formulation_name(tag) + " is a massless formulation; set m = 0");
  if (&b.model() != &model) throw config_error("profile was sampled on a different model");
  OperatorBundle out;
  out.tag_ = tag;
  out.m_ = m;
  out.model_ = &model;
  out.damping_ = std::make_shared<DampingProfile>(b);
  out.build_blocks();
  return out;
}

OperatorBundle OperatorBundle::assemble_cut(const ManifoldModel& model, const DampingProfile& b,
                                            double m, double h, const CutoffPair& cut,
                                            bool diagonal_part) {
  if (m < 0) throw config_error("mass shift must be nonnegative");
  if (!(h > 0)) throw config_error("truncation scale h must be positive");
  if (&b.model() != &model) throw config_error("profile was sampled on a different model");
  OperatorBundle out;
  out.tag_ = diagonal_part ? Formulation::P_diag : Formulation::P_cut;
  out.m_ = m;
  out.h_ = h;
  out.cut_ = cut;
  out.model_ = &model;
  out.damping_ = std::make_shared<DampingProfile>(b);
  out.build_blocks();
  return out;
}

void OperatorBundle::build_blocks() {
  const auto& model = *model_;
  const int K = model.K();
  split_ = (model.kind() == ManifoldKind::Torus2) && damping_->x_only();
  if (!split_ && 2 * model.mode_count() > 4096) {
    const int limit = (model.kind() == ManifoldKind::Circle) ? 1023 : 22;
    throw infeasible_error("dense assembly exceeds the 4096-row budget at this truncation", limit);
  }
  std::vector<std::vector<int>> groups;
  std::vector<int> twin_of;
  if (split_) {
    for (int ky = -K; ky <= K; ++ky) {
      std::vector<int> ids;
      ids.reserve(2 * K + 1);
      for (int k1 = -K; k1 <= K; ++k1) ids.push_back(model.mode_index(k1, ky));
      groups.push_back(std::move(ids));
      twin_of.push_back(std::abs(ky) + K);
    }
  } else {
    std::vector<int> ids(model.mode_count());
    for (int i = 0; i < model.mode_count(); ++i) ids[i] = i;
    groups.push_back(std::move(ids));
    twin_of.push_back(0);
  }
  const auto& modes = model.modes();
  const auto& lambdas = model.lambdas();
  auto is_zero_mode = [&](int id) { return modes[id].k[0] == 0 && modes[id].k[1] == 0; };
  int offset = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    Block blk;
    blk.mode_ids = groups[g];
    blk.twin = twin_of[g];
    blk.offset = offset;
    auto push = [&](int mode, int comp, double lambda, double w) {
      blk.rows.push_back({mode, comp});
      blk.lambda.push_back(lambda);
      blk.weight.push_back(w);
    };
    const bool plus = drops_mean(tag_);
    for (int pass = 0; pass < 2; ++pass) {
      for (int id : blk.mode_ids) {
        const double lam = lambdas[id];
        if (pass == 0 && plus && is_zero_mode(id)) continue;
        if (pass == 1 && tag_ == Formulation::P_plus && is_zero_mode(id)) continue;
        double w = 1.0;
        if (pass == 0) {
          if (tag_ == Formulation::A_m) w = lam * lam + m_;
          else if (tag_ == Formulation::bold_A) w = lam * lam + 1.0;
          else if (tag_ == Formulation::A_plus) w = lam * lam;
        }
        push(id, pass, lam, w);
      }
    }
    if (tag_ == Formulation::P_plus) {
      for (int id : blk.mode_ids)
        if (is_zero_mode(id)) push(-1, 2, 0.0, 1.0);
    }
    offset += static_cast<int>(blk.rows.size());
    blocks_.push_back(std::move(blk));
  }
  dim_ = offset;
}

Mat OperatorBundle::local_b_matrix(int j) const {
  if (!b_cache_) {
    b_cache_ = std::make_shared<Mat>(split_ ? multiplication_matrix_1d(*model_, *damping_)
                                            : multiplication_matrix(*model_, *damping_));
  }
  if (split_) return *b_cache_;
  const auto& ids = blocks_[j].mode_ids;
  const int q = static_cast<int>(ids.size());
  Mat B(q, q);
  for (int a = 0; a < q; ++a)
    for (int c = 0; c < q; ++c) B(a, c) = (*b_cache_)(ids[a], ids[c]);
  return B;
}

Mat OperatorBundle::block_matrix(int j) const {
  const Block& blk = blocks_[j];
  const auto& ids = blk.mode_ids;
  const int q = static_cast<int>(ids.size());
  const auto& lambdas = model_->lambdas();
  const auto& modes = model_->modes();
  const Mat Bq = local_b_matrix(j);
  const int dim = static_cast<int>(blk.rows.size());
  Mat M = Mat::Zero(dim, dim);
  auto lam_m = [&](int a) {
    const double l = lambdas[ids[a]];
    return std::sqrt(l * l + m_);
  };
  const cxd ihalf(0.0, 0.5);
  switch (tag_) {
    case Formulation::A_m:
    case Formulation::bold_A: {
      for (int a = 0; a < q; ++a) {
        const double l = lambdas[ids[a]];
        M(a, q + a) = 1.0;
        M(q + a, a) = (tag_ == Formulation::A_m) ? -(l * l + m_) : -(l * l);
      }
      M.block(q, q, q, q) -= Bq;
      break;
    }
    case Formulation::Atilde_m: {
      for (int a = 0; a < q; ++a) {
        M(a, q + a) = lam_m(a);
        M(q + a, a) = -lam_m(a);
      }
      M.block(q, q, q, q) -= Bq;
      break;
    }
    case Formulation::P_m: {
      for (int a = 0; a < q; ++a) {
        M(a, a) = lam_m(a);
        M(q + a, q + a) = -lam_m(a);
      }
      const Mat Q = ihalf * Bq;
      M.block(0, 0, q, q) += Q;
      M.block(0, q, q, q) += Q;
      M.block(q, 0, q, q) += Q;
      M.block(q, q, q, q) += Q;
      break;
    }
    case Formulation::P_cut:
    case Formulation::P_diag: {
      RVec c(q);
      for (int a = 0; a < q; ++a) c(a) = cut_.chi0_wide(h_ * lam_m(a));
      Mat Q = ihalf * Bq;
      for (int a = 0; a < q; ++a)
        for (int b2 = 0; b2 < q; ++b2) Q(a, b2) *= c(a) * c(b2);
      for (int a = 0; a < q; ++a) {
        M(a, a) = lam_m(a) * c(a);
        M(q + a, q + a) = -lam_m(a) * c(a);
      }
      M.block(0, 0, q, q) += Q;
      M.block(q, q, q, q) += Q;
      if (tag_ == Formulation::P_cut) {
        M.block(0, q, q, q) += Q;
        M.block(q, 0, q, q) += Q;
      }
      break;
    }
    case Formulation::A_plus:
    case Formulation::Atilde_plus: {
      std::vector<int> r0(q, -1);
      int n0 = 0;
      for (int a = 0; a < q; ++a) {
        const auto& k = modes[ids[a]].k;
        if (k[0] != 0 || k[1] != 0) r0[a] = n0++;
      }
      for (int a = 0; a < q; ++a) {
        const double l = lambdas[ids[a]];
        const int r1 = n0 + a;
        if (r0[a] >= 0) {
          if (tag_ == Formulation::A_plus) {
            M(r0[a], r1) = 1.0;
            M(r1, r0[a]) = -(l * l);
          } else {
            M(r0[a], r1) = l;
            M(r1, r0[a]) = -l;
          }
        }
      }
      M.block(n0, n0, q, q) -= Bq;
      break;
    }
    case Formulation::P_plus: {
      std::vector<int> rp(q, -1);
      int n0 = 0, zpos = -1;
      for (int a = 0; a < q; ++a) {
        const auto& k = modes[ids[a]].k;
        if (k[0] != 0 || k[1] != 0) rp[a] = n0++;
        else zpos = a;
      }
      const int wrow = 2 * n0;  // valid only when zpos >= 0
      const cxd isq(0.0, 1.0 / std::sqrt(2.0));
      for (int a = 0; a < q; ++a) {
        if (rp[a] < 0) continue;
        const double l = lambdas[ids[a]];
        M(rp[a], rp[a]) += l;
        M(n0 + rp[a], n0 + rp[a]) += -l;
        for (int b2 = 0; b2 < q; ++b2) {
          if (rp[b2] >= 0) {
            const cxd v = ihalf * Bq(a, b2);
            M(rp[a], rp[b2]) += v;
            M(rp[a], n0 + rp[b2]) += v;
            M(n0 + rp[a], rp[b2]) += v;
            M(n0 + rp[a], n0 + rp[b2]) += v;
          }
        }
        if (zpos >= 0) {
          const cxd vw = isq * Bq(a, zpos);
          M(rp[a], wrow) += vw;
          M(n0 + rp[a], wrow) += vw;
          const cxd vr = isq * Bq(zpos, a);
          M(wrow, rp[a]) += vr;
          M(wrow, n0 + rp[a]) += vr;
        }
      }
      if (zpos >= 0) M(wrow, wrow) += cxd(0.0, 1.0) * Bq(zpos, zpos);
      break;
    }
    default:
      throw std::logic_error("unhandled formulation");
  }
  return M;
}

RVec OperatorBundle::block_weight(int j) const {
  const auto& w = blocks_[j].weight;
  return Eigen::Map<const RVec>(w.data(), static_cast<Eigen::Index>(w.size()));
}

Mat OperatorBundle::dense() const {
  if (dim_ > 4096) throw infeasible_error("dense matrix exceeds the 4096-row budget", model_->K());
  Mat M = Mat::Zero(dim_, dim_);
  for (int j = 0; j < block_count(); ++j) {
    const int d = block_dim(j);
    M.block(blocks_[j].offset, blocks_[j].offset, d, d) = block_matrix(j);
  }
  return M;
}

RVec OperatorBundle::weight() const {
  RVec w(dim_);
  for (int j = 0; j < block_count(); ++j)
    w.segment(blocks_[j].offset, block_dim(j)) = block_weight(j);
  return w;
}

int OperatorBundle::find_row(int mode_id, int comp) const {
  for (const auto& blk : blocks_) {
    for (std::size_t i = 0; i < blk.rows.size(); ++i) {
      if (blk.rows[i].mode == mode_id && blk.rows[i].comp == comp)
        return blk.offset + static_cast<int>(i);
    }
  }
  return -1;
}

double OperatorBundle::weighted_norm(const Vec& state) const {
  if (state.size() != dim_) throw std::invalid_argument("state size does not match the bundle");
  double s = 0.0;
  for (const auto& blk : blocks_) {
    for (std::size_t i = 0; i < blk.rows.size(); ++i)
      s += blk.weight[i] * std::norm(state(blk.offset + static_cast<Eigen::Index>(i)));
  }
  return std::sqrt(s);
}

namespace {

// Flat index lookup keyed by (mode, comp); the shared-mean row maps from
// mode -1.
std::unordered_map<long, int> row_map(const OperatorBundle& b) {
  std::unordered_map<long, int> map;
  map.reserve(static_cast<std::size_t>(b.dim()));
  for (int j = 0; j < b.block_count(); ++j) {
    const auto& rows = b.block_rows(j);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const long key = static_cast<long>(rows[i].mode) * 4 + rows[i].comp;
      map[key] = b.block_offset(j) + static_cast<int>(i);
    }
  }
  return map;
}

int ladder_level(Formulation f) {
  switch (f) {
    case Formulation::bold_A: return 0;
    case Formulation::A_m:
    case Formulation::A_plus: return 1;
    case Formulation::Atilde_m:
    case Formulation::Atilde_plus: return 2;
    case Formulation::P_m:
    case Formulation::P_plus: return 3;
    default: return -1;
  }
}

Formulation ladder_tag(bool massive, int level) {
  if (massive) {
    if (level == 1) return Formulation::A_m;
    if (level == 2) return Formulation::Atilde_m;
    return Formulation::P_m;
  }
  if (level == 0) return Formulation::bold_A;
  if (level == 1) return Formulation::A_plus;
  if (level == 2) return Formulation::Atilde_plus;
  return Formulation::P_plus;
}

Vec conjugate_step(const OperatorBundle& from, const OperatorBundle& to, const Vec& u) {
  const auto& model = from.model();
  const auto& modes = model.modes();
  const auto& lambdas = model.lambdas();
  const double m = from.mass();
  auto fmap = row_map(from);
  auto tmap = row_map(to);
  auto fidx = [&](int mode, int comp) {
    auto it = fmap.find(static_cast<long>(mode) * 4 + comp);
    return it == fmap.end() ? -1 : it->second;
  };
  auto tidx = [&](int mode, int comp) {
    auto it = tmap.find(static_cast<long>(mode) * 4 + comp);
    return it == tmap.end() ? -1 : it->second;
  };
  const int lf = ladder_level(from.tag());
  const int lt = ladder_level(to.tag());
  Vec v = Vec::Zero(to.dim());
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  const cxd mi(0.0, -1.0);
  for (int id = 0; id < model.mode_count(); ++id) {
    const double lam = lambdas[id];
    const double lm = std::sqrt(lam * lam + m);
    const bool zero_mode = (modes[id].k[0] == 0 && modes[id].k[1] == 0);
    if (lf == 0 && lt == 1) {  // bold_A -> A_plus: drop the mean position row
      const int s1 = fidx(id, 1);
      const int t1 = tidx(id, 1);
      v(t1) = u(s1);
      if (!zero_mode) v(tidx(id, 0)) = u(fidx(id, 0));
      continue;
    }
    if (lf == 1 && lt == 0) {  // A_plus -> bold_A: embed, zero mean row
      v(tidx(id, 1)) = u(fidx(id, 1));
      if (!zero_mode) v(tidx(id, 0)) = u(fidx(id, 0));
      continue;
    }
    if (lf == 1 && lt == 2) {  // A -> Atilde: scale the position component
      const int s0 = fidx(id, 0);
      if (s0 >= 0) v(tidx(id, 0)) = (m > 0 ? lm : lam) * u(s0);
      v(tidx(id, 1)) = u(fidx(id, 1));
      continue;
    }
    if (lf == 2 && lt == 1) {
      const int s0 = fidx(id, 0);
      if (s0 >= 0) v(tidx(id, 0)) = u(s0) / (m > 0 ? lm : lam);
      v(tidx(id, 1)) = u(fidx(id, 1));
      continue;
    }
    if (lf == 2 && lt == 3) {  // Atilde -> P
      const int s0 = fidx(id, 0);
      const cxd V1 = (s0 >= 0) ? u(s0) : cxd(0, 0);
      const cxd V2 = u(fidx(id, 1));
      const int p = tidx(id, 0);
      if (p >= 0) {
        v(p) = (V1 + mi * V2) * inv_sqrt2;
        v(tidx(id, 1)) = (-V1 + mi * V2) * inv_sqrt2;
      } else {
        v(tidx(-1, 2)) = mi * V2;  // shared-mean coefficient
      }
      continue;
    }
    if (lf == 3 && lt == 2) {  // P -> Atilde
      const int p = fidx(id, 0);
      cxd W1, W2;
      if (p >= 0) {
        W1 = u(p);
        W2 = u(fidx(id, 1));
        const int t0 = tidx(id, 0);
        if (t0 >= 0) v(t0) = (W1 - W2) * inv_sqrt2;
        v(tidx(id, 1)) = cxd(0, 1) * (W1 + W2) * inv_sqrt2;
      } else {
        const cxd c = u(fidx(-1, 2));
        v(tidx(id, 1)) = cxd(0, 1) * c;
      }
      continue;
    }
    throw std::logic_error("unsupported conjugation step");
  }
  if (lf == 0 && lt == 1) {
    const int zid = [&] {
      for (int id = 0; id < model.mode_count(); ++id)
        if (modes[id].k[0] == 0 && modes[id].k[1] == 0) return id;
      return -1;
    }();
    const double drop = std::abs(u(fidx(zid, 0)));
    if (drop > 1e-12 * std::max(1.0, u.norm()))
      throw std::invalid_argument(
          "state has a nonzero mean in the position component; it cannot enter the mean-free "
          "representation");
  }
  return v;
}

}  // namespace

Vec conjugate_state(const OperatorBundle& from, const OperatorBundle& to, const Vec& state) {
  if (&from.model() != &to.model())
    throw std::invalid_argument("conjugation requires a shared model");
  if (from.mass() != to.mass()) throw std::invalid_argument("conjugation requires equal mass");
  if (state.size() != from.dim()) throw std::invalid_argument("state does not match the bundle");
  const int lf = ladder_level(from.tag());
  const int lt = ladder_level(to.tag());
  if (lf < 0 || lt < 0)
    throw std::invalid_argument("conjugation is defined for the A / Atilde / P ladder only");
  const bool massive_from = is_massive(from.tag());
  const bool massive_to = is_massive(to.tag());
  if (massive_from != massive_to)
    throw std::invalid_argument("cannot conjugate between massive and massless families");
  if (lf == lt) return state;
  Vec u = state;
  int level = lf;
  const OperatorBundle* cur = &from;
  std::vector<OperatorBundle> scratch;
  scratch.reserve(static_cast<std::size_t>(std::abs(lt - lf)));
  while (level != lt) {
    const int next = level + (lt > lf ? 1 : -1);
    const OperatorBundle* dst;
    if (next == lt) {
      dst = &to;
    } else {
      scratch.push_back(OperatorBundle::assemble(from.model(), from.damping(), from.mass(),
                                                 ladder_tag(massive_from, next)));
      dst = &scratch.back();
    }
    u = conjugate_step(*cur, *dst, u);
    cur = dst;
    level = next;
  }
  return u;
}

Mat kernel_projector(const OperatorBundle& bold_a) {
  if (bold_a.tag() != Formulation::bold_A)
    throw std::invalid_argument("kernel projector is defined for the bold_A formulation");
  const auto& model = bold_a.model();
  const Mat B = multiplication_matrix(model, bold_a.damping());
  int zid = -1;
  for (int i = 0; i < model.mode_count(); ++i)
    if (model.modes()[i].k[0] == 0 && model.modes()[i].k[1] == 0) zid = i;
  const double b00 = B(zid, zid).real();
  if (!(b00 > 0)) throw std::invalid_argument("kernel projector requires nontrivial damping");
  const int n = bold_a.dim();
  Mat P = Mat::Zero(n, n);
  const int target = bold_a.find_row(zid, 0);
  for (int l = 0; l < model.mode_count(); ++l) {
    P(target, bold_a.find_row(l, 0)) = B(zid, l) / b00;
  }
  P(target, bold_a.find_row(zid, 1)) = 1.0 / b00;
  return P;
}

Mat corrector_block(const OperatorBundle& cut_bundle, int j) {
  if (cut_bundle.tag() != Formulation::P_cut && cut_bundle.tag() != Formulation::P_diag)
    throw std::invalid_argument("corrector is defined for truncated bundles");
  const auto& model = cut_bundle.model();
  const auto& ids = cut_bundle.block_mode_ids(j);
  const int q = static_cast<int>(ids.size());
  const double m = cut_bundle.mass();
  const double h = cut_bundle.cut_h();
  const bool split =
      (model.kind() == ManifoldKind::Torus2) && cut_bundle.damping().x_only();
  Mat Bq;
  if (split) {
    Bq = multiplication_matrix_1d(model, cut_bundle.damping());
  } else {
    const Mat full = multiplication_matrix(model, cut_bundle.damping());
    Bq.resize(q, q);
    for (int a = 0; a < q; ++a)
      for (int c = 0; c < q; ++c) Bq(a, c) = full(ids[a], ids[c]);
  }
  const auto& lambdas = model.lambdas();
  RVec r(q);
  for (int a = 0; a < q; ++a) {
    const double lm = std::sqrt(lambdas[ids[a]] * lambdas[ids[a]] + m);
    const double c = cut_bundle.cutoffs().chi0_wide(h * lm);
    r(a) = (c == 0.0 || lm == 0.0) ? 0.0 : c / lm;
  }
  const int dim = cut_bundle.block_dim(j);
  Mat Kb = Mat::Zero(dim, dim);
  const cxd iq(0.0, 0.25);
  for (int a = 0; a < q; ++a) {
    for (int c = 0; c < q; ++c) {
      const cxd v = iq * r(a) * Bq(a, c);
      Kb(a, q + c) = -v;
      Kb(q + a, c) = v;
    }
  }
  return Kb;
}

Mat corrector_matrix(const OperatorBundle& cut_bundle) {
  if (cut_bundle.dim() > 4096)
    throw infeasible_error("dense corrector exceeds the 4096-row budget", cut_bundle.model().K());
  Mat M = Mat::Zero(cut_bundle.dim(), cut_bundle.dim());
  for (int j = 0; j < cut_bundle.block_count(); ++j) {
    const int d = cut_bundle.block_dim(j);
    M.block(cut_bundle.block_offset(j), cut_bundle.block_offset(j), d, d) =
        corrector_block(cut_bundle, j);
  }
  return M;
}

double coefficient_tail_mass(const ManifoldModel& model, const DampingProfile& b, int freq_cut) {
  const int top = 2 * model.K();
  const auto hat = line_coefficients(model, b, top);
  double total = 0.0, tail = 0.0;
  for (int kappa = -top; kappa <= top; ++kappa) {
    const double a = std::abs(hat[top + kappa]);
    total += a;
    if (std::abs(kappa) > freq_cut) tail += a;
  }
  return total > 0 ? tail / total : 0.0;
}

DiagSuiteResult diagonalization_suite(
    ManifoldKind kind, const std::function<DampingProfile(const ManifoldModel&)>& make_profile,
    double m, double nu, const std::vector<double>& hs, double t, const CutoffPair& cut) {
  if (nu < 0 || nu >= 0.5) throw config_error("regularization exponent must lie in [0, 1/2)");
  DiagSuiteResult res;
  res.t = t;
  for (double h : hs) {
    if (!(h > 0 && h < 1)) throw config_error("truncation scale must lie in (0,1)");
    const int K = static_cast<int>(std::ceil(2.0 / h - 1e-9));
    auto model = (kind == ManifoldKind::Circle) ? ManifoldModel::circle(K)
                                                : ManifoldModel::torus2(K);
    DampingProfile b = make_profile(model);
    if (nu > 0) {
      MollifierSpec mspec;
      mspec.eps = std::pow(h, nu);
      b = mollify(b, mspec);
    }
    auto P = OperatorBundle::assemble(model, b, m, Formulation::P_m);
    auto Pc = OperatorBundle::assemble_cut(model, b, m, h, cut, false);
    auto Pd = OperatorBundle::assemble_cut(model, b, m, h, cut, true);
    double e1 = 0.0, e2 = 0.0, kn = 0.0;
    for (int j = 0; j < P.block_count(); ++j) {
      if (P.block_twin(j) != j) continue;
      const Mat Mp = P.block_matrix(j);
      const Mat Mc = Pc.block_matrix(j);
      const Mat Md = Pd.block_matrix(j);
      const cxd it(0.0, t);
      const Mat Ep = (it * Mp).exp();
      const Mat Ec = (it * Mc).exp();
      const Mat Ed = (it * Md).exp();
      Mat diff = Ep - Ec;
      const auto& ids = P.block_mode_ids(j);
      const int q = static_cast<int>(ids.size());
      for (int a = 0; a < q; ++a) {
        const double lm = std::sqrt(model.lambdas()[ids[a]] * model.lambdas()[ids[a]] + m);
        const double f = cut.chi0(h * lm);
        diff.col(a) *= f;
        diff.col(q + a) *= f;
      }
      e1 = std::max(e1, operator_norm(diff));
      e2 = std::max(e2, operator_norm(Ec - Ed));
      kn = std::max(kn, operator_norm(corrector_block(Pc, j)));
    }
    res.h.push_back(h);
    res.e1.push_back(e1);
    res.e2.push_back(e2);
    res.corrector_norm.push_back(kn);
    res.tail_mass.push_back(
        (kind == ManifoldKind::Circle || b.x_only()) ? coefficient_tail_mass(model, b, K / 2)
                                                     : std::numeric_limits<double>::quiet_NaN());
  }
  if (res.h.size() >= 2) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < res.h.size(); ++i) {
      if (res.e2[i] > 0) {
        lx.push_back(std::log(res.h[i]));
        ly.push_back(std::log(res.e2[i]));
      }
    }
    if (lx.size() >= 2) res.e2_slope = slope_fit(lx, ly);
  }
  return res;
}

}  // namespace dwlab
