#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bisac/conic_solver.hpp"
#include "bisac/model.hpp"
#include "bisac/types.hpp"

// Convex inner step of the rate maximization. For a fixed auxiliary scalar y
// and an anchor design W0, the step maximizes the concave surrogate
//
//     2 y Re{h_u w_u} - y^2 * (UE denominator terms quadratic in W)
//
// over the tag-SINR second-order cone, the power ball and the linearized
// (affine-minorant) echo-power constraint anchored at W0. The problem is
// posed over the canonical real lift x = [Re vec(W); Im vec(W)] and handed
// to the interior-point engine.

namespace bisac {

// ----- canonical real lift -----------------------------------------------

namespace lift {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd to_real(const MatrixXcd& w) {
  const auto sz = w.size();
  VectorXd x(2 * sz);
  Eigen::Map<const VectorXcd> v(w.data(), sz);
  x.head(sz) = v.real();
  x.tail(sz) = v.imag();
  return x;
}

inline MatrixXcd to_complex(const VectorXd& x, int rows, int cols) {
  MatrixXcd w(rows, cols);
  const auto sz = static_cast<Eigen::Index>(rows) * cols;
  Eigen::Map<VectorXcd> v(w.data(), sz);
  v.real() = x.head(sz);
  v.imag() = x.tail(sz);
  return w;
}

/// Row vector r with r' x == Re{v * w_col} for the lifted x of an
/// n_rows x n_cols matrix. v is 1 x n_rows, col selects the column.
inline VectorXd real_part_row(const RowVectorXcd& v, int col, int n_rows, int n_cols) {
  VectorXd r = VectorXd::Zero(2 * static_cast<Eigen::Index>(n_rows) * n_cols);
  r.segment(static_cast<Eigen::Index>(col) * n_rows, n_rows) = v.real().transpose();
  r.segment((static_cast<Eigen::Index>(n_cols) + col) * n_rows, n_rows) = -v.imag().transpose();
  return r;
}

/// Same for the imaginary part Im{v * w_col}.
inline VectorXd imag_part_row(const RowVectorXcd& v, int col, int n_rows, int n_cols) {
  VectorXd r = VectorXd::Zero(2 * static_cast<Eigen::Index>(n_rows) * n_cols);
  r.segment(static_cast<Eigen::Index>(col) * n_rows, n_rows) = v.imag().transpose();
  r.segment((static_cast<Eigen::Index>(n_cols) + col) * n_rows, n_rows) = v.real().transpose();
  return r;
}

/// Adds w_col^H A w_col (A Hermitian) to the lifted quadratic form.
inline void add_hermitian_block(MatrixXd& quad, const MatrixXcd& a, int col, int n_rows,
                                int n_cols) {
  const auto re0 = static_cast<Eigen::Index>(col) * n_rows;
  const auto im0 = (static_cast<Eigen::Index>(n_cols) + col) * n_rows;
  quad.block(re0, re0, n_rows, n_rows) += a.real();
  quad.block(im0, im0, n_rows, n_rows) += a.real();
  quad.block(re0, im0, n_rows, n_rows) -= a.imag();
  quad.block(im0, re0, n_rows, n_rows) += a.imag();
}

}  // namespace lift

// ----- subproblem container ----------------------------------------------

using conic::KktResiduals;
using conic::SolveState;

struct SolverStatus {
  SolveState state = SolveState::numerical_failure;
  KktResiduals kkt;
  int iterations = 0;
  std::string diagnostic;
  std::vector<double> gap_trace;
};

/// One convex inner problem, in both guises: complex primitives for exact
/// evaluation against model arithmetic, and the real-lifted objective and
/// constraint rows the solver consumes.
///
///   maximize  lin' x - x' quad x - obj_const
///   s.t.      soc_top' x >= || (soc_rows x, soc_const) ||
///             aff' x >= aff_rhs
///             ||x||^2 <= radius_sq
struct SubproblemData {
  // lifted form (the solver-facing contract)
  Eigen::VectorXd lin;       // linear objective coefficients
  Eigen::MatrixXd quad;      // PSD quadratic penalty
  double obj_const = 0.0;    // constant offset completing the surrogate value
  Eigen::VectorXd soc_top;   // cone gain row
  Eigen::MatrixXd soc_rows;  // cone norm rows
  double soc_const = 0.0;    // fixed norm entry (tag noise amplitude)
  Eigen::VectorXd aff;       // linearized echo constraint row
  double aff_rhs = 0.0;
  double radius_sq = 0.0;    // power budget

  // complex primitives; populated when built from a model anchor
  struct ModelSide {
    double y = 0.0;
    RowVectorXcd h_f, h_u;       // forward and downlink rows
    RowVectorXcd anchor_gain;    // h_f * W0, one entry per stream
    double leak = 0.0;           // alpha |h_tu|^2
    double echo_coeff = 0.0;     // (alpha / gamma_ap_min) |w_r h_b|^2
    double inv_sqrt_tag_min = 0.0;
    MatrixXcd span_basis;        // orthonormal columns spanning {h_f^H, h_u^H}
  };
  std::optional<ModelSide> model;

  int n_tx = 0;
  int n_streams = 0;

  int dim() const { return static_cast<int>(lin.size()); }

  void validate() const {
    const auto n = lin.size();
    if (quad.rows() != n || quad.cols() != n || soc_top.size() != n ||
        soc_rows.cols() != n || aff.size() != n)
      throw std::invalid_argument("subproblem: dimension mismatch");
    if (!(radius_sq > 0.0)) throw std::invalid_argument("subproblem: radius_sq must be positive");
    if (!lin.allFinite() || !quad.allFinite() || !aff.allFinite())
      throw std::invalid_argument("subproblem: non-finite data");
    double asym = (quad - quad.transpose()).cwiseAbs().maxCoeff();
    if (!(asym <= 1e-9 * (1.0 + quad.cwiseAbs().maxCoeff())))
      throw std::invalid_argument("subproblem: quadratic form must be symmetric");
  }

  // --- value equality: lifted arithmetic ---
  double objective_lifted(const Eigen::VectorXd& x) const {
    return lin.dot(x) - x.dot(quad * x) - obj_const;
  }
  double soc_margin_lifted(const Eigen::VectorXd& x) const {
    double norm = std::sqrt((soc_rows * x).squaredNorm() + soc_const * soc_const);
    return soc_top.dot(x) - norm;
  }
  double aff_margin_lifted(const Eigen::VectorXd& x) const { return aff.dot(x) - aff_rhs; }

  // --- value equality: direct complex arithmetic (model-built instances) ---
  double objective_complex(const BeamformingMatrix& beams) const {
    const auto& m = model.value();
    MatrixXcd w = beams.assembled();
    double pen = m.leak * std::norm(cd(m.h_f * beams.ue_beam));
    for (int c = 1; c < w.cols(); ++c)
      pen += std::norm(cd(m.h_u * w.col(c))) + m.leak * std::norm(cd(m.h_f * w.col(c)));
    const double y = m.y;
    return 2.0 * y * std::real(cd(m.h_u * beams.ue_beam)) - y * y * pen - obj_const;
  }
  double soc_margin_complex(const BeamformingMatrix& beams) const {
    const auto& m = model.value();
    MatrixXcd w = beams.assembled();
    double sq = soc_const * soc_const;
    sq += std::norm(cd(m.h_f * beams.ue_beam));
    for (int c = 2; c < w.cols(); ++c) sq += std::norm(cd(m.h_f * w.col(c)));
    return m.inv_sqrt_tag_min * std::real(cd(m.h_f * beams.tag_beam)) - std::sqrt(sq);
  }
  double aff_margin_complex(const BeamformingMatrix& beams) const {
    const auto& m = model.value();
    MatrixXcd w = beams.assembled();
    cd acc = 0.0;
    for (int c = 0; c < w.cols(); ++c)
      acc += std::conj(m.anchor_gain(c)) * cd(m.h_f * w.col(c));
    return 2.0 * m.echo_coeff * std::real(acc) - aff_rhs;
  }
};

/// Assembles the convex step data at anchor `anchor` and auxiliary scalar y.
/// The echo constraint is the affine first-order minorant of the convex
/// echo power at the anchor, so its feasible set sits inside the true one.
inline SubproblemData build_subproblem(const BeamformingMatrix& anchor, double y,
                                       const ChannelSet& ch, const SystemConfig& cfg) {
  cfg.validate();
  ch.validate(cfg);
  anchor.validate();
  MatrixXcd w0 = anchor.assembled();
  if (!w0.allFinite()) throw std::invalid_argument("build_subproblem: anchor must be finite");
  if (!(cfg.power_budget_mw > 0.0))
    throw std::invalid_argument("build_subproblem: power budget must be positive");

  const int nt = cfg.n_tx;
  const int ns = nt + 2;
  const auto n = static_cast<Eigen::Index>(2) * nt * ns;

  SubproblemData d;
  d.n_tx = nt;
  d.n_streams = ns;
  d.radius_sq = cfg.power_budget_mw;

  SubproblemData::ModelSide m;
  m.y = y;
  m.h_f = ch.ap_to_tag;
  m.h_u = ch.ap_to_ue;
  m.anchor_gain = ch.ap_to_tag * w0;
  m.leak = cfg.backscatter_alpha * std::norm(ch.tag_to_ue);
  m.inv_sqrt_tag_min = 1.0 / std::sqrt(cfg.tag_sinr_min);
  const double link_gain = ch.tag_to_ap.squaredNorm();  // |w_r h_b|^2 for the matched combiner
  m.echo_coeff = cfg.backscatter_alpha / cfg.ap_sinr_min * link_gain;

  // objective: 2 y Re{h_u w_u} - y^2 (per-column quadratic penalties) - const
  d.lin = 2.0 * y * lift::real_part_row(ch.ap_to_ue, 0, nt, ns);
  d.quad = Eigen::MatrixXd::Zero(n, n);
  const MatrixXcd pen_ue = (y * y * m.leak) * (ch.ap_to_tag.adjoint() * ch.ap_to_tag);
  const MatrixXcd pen_other =
      (y * y) * (ch.ap_to_ue.adjoint() * ch.ap_to_ue) + pen_ue;
  lift::add_hermitian_block(d.quad, pen_ue, 0, nt, ns);
  for (int c = 1; c < ns; ++c) lift::add_hermitian_block(d.quad, pen_other, c, nt, ns);
  d.obj_const = y * y * (m.leak * cfg.noise_tag_mw + cfg.noise_ue_mw);

  // tag-SINR cone
  d.soc_top = m.inv_sqrt_tag_min * lift::real_part_row(ch.ap_to_tag, 1, nt, ns);
  d.soc_rows.resize(2 * (nt + 1), n);
  d.soc_rows.row(0) = lift::real_part_row(ch.ap_to_tag, 0, nt, ns);
  d.soc_rows.row(1) = lift::imag_part_row(ch.ap_to_tag, 0, nt, ns);
  for (int i = 0; i < nt; ++i) {
    d.soc_rows.row(2 + 2 * i) = lift::real_part_row(ch.ap_to_tag, 2 + i, nt, ns);
    d.soc_rows.row(3 + 2 * i) = lift::imag_part_row(ch.ap_to_tag, 2 + i, nt, ns);
  }
  d.soc_const = std::sqrt(cfg.noise_tag_mw);

  // echo minorant: 2 c Re{sum_col conj(g0_col) h_f w_col} >= rhs + c ||g0||^2
  const double rhs_fixed =
      cfg.backscatter_alpha * link_gain * cfg.noise_tag_mw + cfg.noise_ap_mw;
  d.aff = Eigen::VectorXd::Zero(n);
  for (int c = 0; c < ns; ++c) {
    RowVectorXcd weighted = std::conj(m.anchor_gain(c)) * ch.ap_to_tag;
    d.aff += 2.0 * m.echo_coeff * lift::real_part_row(weighted, c, nt, ns);
  }
  d.aff_rhs = rhs_fixed + m.echo_coeff * m.anchor_gain.squaredNorm();

  // Every functional above touches the beam columns only through h_f and
  // h_u, so the optimum spends no power outside their span; the solver can
  // work in that span when it is a strict subspace.
  if (nt > 2) {
    MatrixXcd pair(nt, 2);
    pair.col(0) = ch.ap_to_tag.adjoint();
    pair.col(1) = ch.ap_to_ue.adjoint();
    Eigen::HouseholderQR<MatrixXcd> qr(pair);
    MatrixXcd qfull = qr.householderQ();
    m.span_basis = qfull.leftCols(2);
  }

  d.model = std::move(m);
  return d;
}

// ----- solving -------------------------------------------------------------

struct SubproblemSolution {
  BeamformingMatrix beams;
  SolverStatus status;
  double objective = std::numeric_limits<double>::quiet_NaN();  // surrogate value at the solution
};

namespace detail {

struct ConicForm {
  conic::ConicProblem prob;
  double obj_scale = 1.0;
  int n_x = 0;  // leading x coordinates (an extra margin variable may follow)
};

// Shared assembly of the cone block structure. When `margin_var` is set the
// problem gains a trailing variable m entering the orthant row and the SOC
// gain row, and the objective becomes "maximize m".
inline ConicForm assemble(const Eigen::VectorXd& lin, const Eigen::MatrixXd& quad,
                          const Eigen::VectorXd& soc_top, const Eigen::MatrixXd& soc_rows,
                          double soc_const, const Eigen::VectorXd& aff, double aff_rhs,
                          double radius_sq, bool margin_var) {
  const int nx = static_cast<int>(lin.size());
  const int nv = nx + (margin_var ? 1 : 0);
  const int soc_dim = static_cast<int>(soc_rows.rows()) + 2;
  const int ball_dim = nx + 1;
  const int mrows = 1 + soc_dim + ball_dim;

  ConicForm f;
  f.n_x = nx;
  f.prob.cones.lin = 1;
  f.prob.cones.soc = {soc_dim, ball_dim};
  f.prob.G = Eigen::MatrixXd::Zero(mrows, nv);
  f.prob.h = Eigen::VectorXd::Zero(mrows);

  // orthant row: aff' x (- m) - rhs >= 0
  const double rho_aff = 1.0 / (1.0 + aff.norm());
  f.prob.G.row(0).head(nx) = -rho_aff * aff.transpose();
  if (margin_var) f.prob.G(0, nx) = rho_aff;
  f.prob.h(0) = -rho_aff * aff_rhs;

  // tag cone: (top' x (- m), rows * x, soc_const) in SOC
  double soc_scale = std::max(soc_top.norm(), std::abs(soc_const));
  for (int r = 0; r < soc_rows.rows(); ++r)
    soc_scale = std::max(soc_scale, soc_rows.row(r).norm());
  const double rho_soc = 1.0 / (1.0 + soc_scale);
  int off = 1;
  f.prob.G.row(off).head(nx) = -rho_soc * soc_top.transpose();
  if (margin_var) f.prob.G(off, nx) = rho_soc;
  f.prob.G.block(off + 1, 0, soc_rows.rows(), nx) = -rho_soc * soc_rows;
  f.prob.h(off + soc_dim - 1) = rho_soc * soc_const;

  // power ball: (sqrt(radius), x) in SOC
  const double radius = std::sqrt(radius_sq);
  const double rho_ball = 1.0 / (1.0 + radius);
  off = 1 + soc_dim;
  f.prob.G.block(off + 1, 0, nx, nx) = -rho_ball * Eigen::MatrixXd::Identity(nx, nx);
  f.prob.h(off) = rho_ball * radius;

  if (margin_var) {
    f.prob.P = Eigen::MatrixXd::Zero(nv, nv);
    f.prob.q = Eigen::VectorXd::Zero(nv);
    f.prob.q(nx) = -1.0;  // maximize the margin
  } else {
    f.obj_scale = std::max({1.0, lin.lpNorm<Eigen::Infinity>(),
                            quad.lpNorm<Eigen::Infinity>()});
    f.prob.P = (2.0 / f.obj_scale) * quad;
    f.prob.q = -lin / f.obj_scale;
  }
  return f;
}

// Reduced-coordinate copies of the lifted data when a span basis is present.
struct ReducedData {
  Eigen::VectorXd lin;
  Eigen::MatrixXd quad;
  Eigen::VectorXd soc_top;
  Eigen::MatrixXd soc_rows;
  Eigen::VectorXd aff;
  int r = 0;
};

inline ReducedData reduce(const SubproblemData& d) {
  const auto& m = d.model.value();
  const int r = static_cast<int>(m.span_basis.cols());
  const int ns = d.n_streams;
  const auto n = static_cast<Eigen::Index>(2) * r * ns;
  const RowVectorXcd hf = m.h_f * m.span_basis;
  const RowVectorXcd hu = m.h_u * m.span_basis;

  ReducedData rd;
  rd.r = r;
  rd.lin = 2.0 * m.y * lift::real_part_row(hu, 0, r, ns);
  rd.quad = Eigen::MatrixXd::Zero(n, n);
  const MatrixXcd pen_ue = (m.y * m.y * m.leak) * (hf.adjoint() * hf);
  const MatrixXcd pen_other = (m.y * m.y) * (hu.adjoint() * hu) + pen_ue;
  lift::add_hermitian_block(rd.quad, pen_ue, 0, r, ns);
  for (int c = 1; c < ns; ++c) lift::add_hermitian_block(rd.quad, pen_other, c, r, ns);

  rd.soc_top = m.inv_sqrt_tag_min * lift::real_part_row(hf, 1, r, ns);
  rd.soc_rows.resize(2 * (d.n_tx + 1), n);
  rd.soc_rows.row(0) = lift::real_part_row(hf, 0, r, ns);
  rd.soc_rows.row(1) = lift::imag_part_row(hf, 0, r, ns);
  for (int i = 0; i < d.n_tx; ++i) {
    rd.soc_rows.row(2 + 2 * i) = lift::real_part_row(hf, 2 + i, r, ns);
    rd.soc_rows.row(3 + 2 * i) = lift::imag_part_row(hf, 2 + i, r, ns);
  }
  rd.aff = Eigen::VectorXd::Zero(n);
  for (int c = 0; c < ns; ++c) {
    RowVectorXcd weighted = std::conj(m.anchor_gain(c)) * hf;
    rd.aff += 2.0 * m.echo_coeff * lift::real_part_row(weighted, c, r, ns);
  }
  return rd;
}

}  // namespace detail

/// Deterministic strictly interior point: maximizes the minimum margin of
/// the orthant row and the tag cone inside the power ball. Doubles as the
/// infeasibility certificate: a negative optimal margin proves the
/// subproblem empty. Returns {beams, margin, status}.
struct MarginCenter {
  BeamformingMatrix beams;
  double margin = -std::numeric_limits<double>::infinity();
  SolverStatus status;
};

inline MarginCenter max_margin_center(const SubproblemData& d, double tol = 1e-8,
                                      int max_iter = 100) {
  d.validate();
  MarginCenter out;
  conic::ConicSolver engine;

  auto run = [&](const detail::ConicForm& f, int rows, int cols,
                 const MatrixXcd* basis) {
    conic::ConicResult res = engine.solve(f.prob, tol, max_iter);
    out.status.state = res.state;
    out.status.kkt = res.residuals;
    out.status.iterations = res.iterations;
    out.status.diagnostic = res.diagnostic;
    out.status.gap_trace = res.gap_trace;
    if (res.x.size() == static_cast<Eigen::Index>(f.n_x) + 1) {
      out.margin = res.x(f.n_x);
      MatrixXcd w = lift::to_complex(res.x.head(f.n_x), rows, cols);
      if (basis) w = *basis * w;
      out.beams = BeamformingMatrix::from_assembled(w);
    }
  };

  if (d.model && d.model->span_basis.size() > 0) {
    detail::ReducedData rd = detail::reduce(d);
    detail::ConicForm f = detail::assemble(rd.lin, rd.quad, rd.soc_top, rd.soc_rows,
                                           d.soc_const, rd.aff, d.aff_rhs, d.radius_sq, true);
    run(f, rd.r, d.n_streams, &d.model->span_basis);
  } else {
    detail::ConicForm f = detail::assemble(d.lin, d.quad, d.soc_top, d.soc_rows, d.soc_const,
                                           d.aff, d.aff_rhs, d.radius_sq, true);
    run(f, d.n_tx, d.n_streams, nullptr);
  }
  return out;
}

/// Solves the convex step. Returns the optimizing beams with solver status;
/// a zero objective (y == 0) falls back to the deterministic margin center,
/// and hopeless instances are certified infeasible instead of ground out.
inline SubproblemSolution solve_subproblem(const SubproblemData& d, double tol = 1e-8,
                                           int max_iter = 100) {
  d.validate();
  SubproblemSolution sol;
  const double radius = std::sqrt(d.radius_sq);

  // scaling bounds: neither cone can hold anywhere in the ball
  if (d.soc_top.norm() * radius < d.soc_const * (1.0 - 1e-12)) {
    sol.status.state = SolveState::infeasible;
    sol.status.diagnostic = "tag cone unreachable within the power budget";
    return sol;
  }
  if (d.aff.norm() * radius < d.aff_rhs * (1.0 - 1e-12)) {
    sol.status.state = SolveState::infeasible;
    sol.status.diagnostic = "echo minorant unreachable within the power budget";
    return sol;
  }

  const bool degenerate_objective =
      d.lin.lpNorm<Eigen::Infinity>() == 0.0 && d.quad.lpNorm<Eigen::Infinity>() == 0.0;
  if (degenerate_objective) {
    MarginCenter center = max_margin_center(d, tol, max_iter);
    sol.beams = center.beams;
    sol.status = center.status;
    if (center.status.state == SolveState::optimal && center.margin < -1e-9) {
      sol.status.state = SolveState::infeasible;
      sol.status.diagnostic = "maximum constraint margin is negative";
    }
    if (sol.status.state == SolveState::optimal)
      sol.objective = d.objective_lifted(lift::to_real(sol.beams.assembled()));
    return sol;
  }

  conic::ConicSolver engine;
  conic::ConicResult res;
  const MatrixXcd* basis = nullptr;
  int rows = d.n_tx;
  detail::ConicForm f;
  if (d.model && d.model->span_basis.size() > 0) {
    detail::ReducedData rd = detail::reduce(d);
    f = detail::assemble(rd.lin, rd.quad, rd.soc_top, rd.soc_rows, d.soc_const, rd.aff,
                         d.aff_rhs, d.radius_sq, false);
    basis = &d.model->span_basis;
    rows = rd.r;
  } else {
    f = detail::assemble(d.lin, d.quad, d.soc_top, d.soc_rows, d.soc_const, d.aff, d.aff_rhs,
                         d.radius_sq, false);
  }
  res = engine.solve(f.prob, tol, max_iter);

  sol.status.state = res.state;
  sol.status.kkt = res.residuals;
  sol.status.iterations = res.iterations;
  sol.status.diagnostic = res.diagnostic;
  sol.status.gap_trace = res.gap_trace;

  if (res.state == SolveState::optimal) {
    MatrixXcd w = lift::to_complex(res.x, rows, d.n_streams);
    if (basis) w = *basis * w;
    sol.beams = BeamformingMatrix::from_assembled(w);
    sol.objective = d.objective_lifted(lift::to_real(sol.beams.assembled()));
    return sol;
  }

  // The engine gave up; decide between genuine infeasibility and a numeric
  // breakdown by looking at the best reachable margin.
  MarginCenter center = max_margin_center(d, tol, max_iter);
  if (center.status.state == SolveState::optimal && center.margin < -1e-9) {
    sol.status.state = SolveState::infeasible;
    sol.status.diagnostic = "maximum constraint margin " + std::to_string(center.margin);
  }
  return sol;
}

}  // namespace bisac
