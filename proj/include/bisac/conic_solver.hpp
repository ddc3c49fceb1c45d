#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

// Dense primal-dual interior-point solver for convex quadratic programs
// over a product of a nonnegative orthant and second-order cones:
//
//     minimize    (1/2) x' P x + q' x
//     subject to  G x + s = h,   s in K = R+^lin x Q_d1 x ... x Q_dk
//
// Nesterov-Todd scaling, Mehrotra predictor-corrector steps, and a single
// dense Cholesky of the condensed system P + G' W^-2 G per iteration.
// Step lengths are additionally damped so the complementarity gap never
// increases from one iterate to the next.
//
// Sizes stay small here (a few hundred variables), so everything is dense
// and allocation-free refinements are not worth their complexity.

namespace bisac::conic {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ConeSpec {
  int lin = 0;            // leading nonnegative-orthant rows
  std::vector<int> soc;   // then one block per second-order cone

  int dim() const {
    int d = lin;
    for (int s : soc) d += s;
    return d;
  }
  // Barrier degree: each orthant coordinate and each cone contributes one.
  int degree() const { return lin + static_cast<int>(soc.size()); }
};

struct ConicProblem {
  MatrixXd P;      // n x n, symmetric PSD (may be zero)
  VectorXd q;      // n
  MatrixXd G;      // m x n
  VectorXd h;      // m
  ConeSpec cones;  // m == cones.dim()

  void validate() const {
    const auto n = q.size();
    const auto m = h.size();
    if (P.rows() != n || P.cols() != n)
      throw std::invalid_argument("conic: P must be n x n");
    if (G.rows() != m || G.cols() != n)
      throw std::invalid_argument("conic: G must be m x n");
    if (cones.lin < 0) throw std::invalid_argument("conic: negative orthant size");
    for (int s : cones.soc)
      if (s < 2) throw std::invalid_argument("conic: SOC blocks need dimension >= 2");
    if (cones.dim() != m)
      throw std::invalid_argument("conic: cone dimensions must sum to rows of G");
  }
};

enum class SolveState { optimal, infeasible, max_iterations, numerical_failure };

struct KktResiduals {
  double primal = std::numeric_limits<double>::infinity();  // ||Gx + s - h|| / (1 + ||h||)
  double dual = std::numeric_limits<double>::infinity();    // ||Px + q + G'z|| / (1 + ||q||)
  double gap = std::numeric_limits<double>::infinity();     // s'z / max(1, |objective|)
};

struct ConicResult {
  VectorXd x, s, z;
  SolveState state = SolveState::numerical_failure;
  KktResiduals residuals;
  double objective = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  std::vector<double> gap_trace;  // s'z after every iteration, non-increasing
  std::string diagnostic;
};

namespace detail {

// ----- cone vector helpers (layout: [orthant | soc_1 | soc_2 | ...]) -----

inline double cone_min_eig(const VectorXd& v, const ConeSpec& k) {
  double m = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k.lin; ++i) m = std::min(m, v(i));
  int off = k.lin;
  for (int d : k.soc) {
    m = std::min(m, v(off) - v.segment(off + 1, d - 1).norm());
    off += d;
  }
  return m;
}

inline void cone_identity_shift(VectorXd& v, const ConeSpec& k, double amount) {
  for (int i = 0; i < k.lin; ++i) v(i) += amount;
  int off = k.lin;
  for (int d : k.soc) {
    v(off) += amount;
    off += d;
  }
}

// Largest t with v + t dv still in the cone (inf if never leaves).
inline double cone_step_length(const VectorXd& v, const VectorXd& dv, const ConeSpec& k) {
  double t = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k.lin; ++i)
    if (dv(i) < 0.0) t = std::min(t, -v(i) / dv(i));
  int off = k.lin;
  for (int d : k.soc) {
    const auto v1 = v.segment(off + 1, d - 1);
    const auto dv1 = dv.segment(off + 1, d - 1);
    // roots of |v0 + t dv0|^2 - ||v1 + t dv1||^2, positive at t = 0
    const double a = dv(off) * dv(off) - dv1.squaredNorm();
    const double b = 2.0 * (v(off) * dv(off) - v1.dot(dv1));
    const double c = v(off) * v(off) - v1.squaredNorm();
    double hit = std::numeric_limits<double>::infinity();
    if (std::abs(a) < 1e-300) {
      if (b < 0.0) hit = -c / b;
    } else {
      const double disc = b * b - 4.0 * a * c;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        // stable quadratic roots
        const double r1 = (b >= 0.0) ? (-b - sq) / (2.0 * a) : (2.0 * c) / (-b + sq);
        const double r2 = (b >= 0.0) ? (2.0 * c) / (-b - sq) : (-b + sq) / (2.0 * a);
        for (double r : {r1, r2})
          if (r > 0.0) hit = std::min(hit, r);
      }
    }
    t = std::min(t, hit);
    off += d;
  }
  return t;
}

// Nesterov-Todd scaling point per cone: W z and W^-1 s both equal the
// scaled point lambda. For a second-order cone W = eta (2 v v' - J) where
// v is the unit-determinant Jordan square root of the rotation point w
// that maps z onto s; squaring W recovers eta^2 (2 w w' - J).
struct NtScaling {
  VectorXd w_lin;               // sqrt(s_i / z_i)
  std::vector<double> eta;      // per-SOC magnitude
  std::vector<VectorXd> vhalf;  // per-SOC half-angle scaling vector, v'Jv = 1
  std::vector<VectorXd> wfull;  // per-SOC full rotation point, w = v o v
  VectorXd lambda;              // full scaled point

  // false when an iterate has drifted out of the cone interior
  bool compute(const VectorXd& s, const VectorXd& z, const ConeSpec& k) {
    const int nsoc = static_cast<int>(k.soc.size());
    w_lin.resize(k.lin);
    eta.assign(nsoc, 0.0);
    vhalf.assign(nsoc, VectorXd());
    wfull.assign(nsoc, VectorXd());
    lambda.resize(k.dim());
    for (int i = 0; i < k.lin; ++i) {
      if (!(s(i) > 0.0) || !(z(i) > 0.0)) return false;
      w_lin(i) = std::sqrt(s(i) / z(i));
      lambda(i) = std::sqrt(s(i) * z(i));
    }
    int off = k.lin;
    for (int ci = 0; ci < nsoc; ++ci) {
      const int d = k.soc[ci];
      const auto sb = s.segment(off, d);
      const auto zb = z.segment(off, d);
      const double sdet = sb(0) * sb(0) - sb.tail(d - 1).squaredNorm();
      const double zdet = zb(0) * zb(0) - zb.tail(d - 1).squaredNorm();
      if (!(sdet > 0.0) || !(zdet > 0.0) || !(sb(0) > 0.0) || !(zb(0) > 0.0)) return false;
      const double ns = std::sqrt(sdet), nz = std::sqrt(zdet);
      VectorXd sbar = sb / ns, zbar = zb / nz;
      double inner = sbar.dot(zbar);
      // J-flip the z part: (z0, -z1)
      VectorXd jz = zbar;
      jz.tail(d - 1) = -jz.tail(d - 1);
      const double gamma = std::sqrt(0.5 * (1.0 + inner));
      VectorXd wb = (sbar + jz) / (2.0 * gamma);
      // half-angle vector: one application of W uses v, two recover wb
      VectorXd vh = wb;
      vh(0) += 1.0;
      vh /= std::sqrt(2.0 * (wb(0) + 1.0));
      eta[ci] = std::sqrt(ns / nz);
      // lambda_block = W z = eta (2 v (v' z) - J z)
      VectorXd jzfull = zb;
      jzfull.tail(d - 1) = -jzfull.tail(d - 1);
      lambda.segment(off, d) = eta[ci] * (2.0 * vh * vh.dot(zb) - jzfull);
      vhalf[ci] = std::move(vh);
      wfull[ci] = std::move(wb);
      off += d;
    }
    return true;
  }

  // y = W^p v for p in {-2, -1, 1, 2}
  VectorXd apply(const VectorXd& v, const ConeSpec& k, int p) const {
    VectorXd y(v.size());
    for (int i = 0; i < k.lin; ++i) {
      double w2 = w_lin(i) * w_lin(i);
      y(i) = (p == 1) ? v(i) * w_lin(i)
           : (p == -1) ? v(i) / w_lin(i)
           : (p == 2) ? v(i) * w2
                      : v(i) / w2;
    }
    int off = k.lin;
    for (size_t ci = 0; ci < k.soc.size(); ++ci) {
      const int d = k.soc[ci];
      VectorXd blk = v.segment(off, d);
      const int reps = (p == 2 || p == -2) ? 2 : 1;
      const bool inverse = p < 0;
      for (int r = 0; r < reps; ++r) {
        VectorXd jb = blk;
        jb.tail(d - 1) = -jb.tail(d - 1);
        if (!inverse) {
          blk = eta[ci] * (2.0 * vhalf[ci] * vhalf[ci].dot(blk) - jb);
        } else {
          VectorXd jv = vhalf[ci];
          jv.tail(d - 1) = -jv.tail(d - 1);
          blk = (2.0 * jv * jv.dot(blk) - jb) / eta[ci];
        }
      }
      y.segment(off, d) = blk;
      off += d;
    }
    return y;
  }
};

inline VectorXd jordan_product(const VectorXd& a, const VectorXd& b, const ConeSpec& k) {
  VectorXd y(a.size());
  for (int i = 0; i < k.lin; ++i) y(i) = a(i) * b(i);
  int off = k.lin;
  for (int d : k.soc) {
    const auto a1 = a.segment(off + 1, d - 1);
    const auto b1 = b.segment(off + 1, d - 1);
    y(off) = a.segment(off, d).dot(b.segment(off, d));
    y.segment(off + 1, d - 1) = a(off) * b1 + b(off) * a1;
    off += d;
  }
  return y;
}

// Solve lambda o a = d for a (arrow system per SOC, division in orthant).
inline VectorXd jordan_solve(const VectorXd& lambda, const VectorXd& d, const ConeSpec& k) {
  VectorXd a(d.size());
  for (int i = 0; i < k.lin; ++i) a(i) = d(i) / lambda(i);
  int off = k.lin;
  for (int dim : k.soc) {
    const auto l1 = lambda.segment(off + 1, dim - 1);
    const auto d1 = d.segment(off + 1, dim - 1);
    const double l0 = lambda(off);
    const double det = l0 * l0 - l1.squaredNorm();
    const double a0 = (l0 * d(off) - l1.dot(d1)) / det;
    a(off) = a0;
    a.segment(off + 1, dim - 1) = (d1 - a0 * l1) / l0;
    off += dim;
  }
  return a;
}

}  // namespace detail

/// Interior-point engine. Instances hold the factorization workspace, so one
/// instance must not run two solves concurrently; use one per thread.
class ConicSolver {
 public:
  ConicResult solve(const ConicProblem& prob, double tol = 1e-8, int max_iter = 100) {
    prob.validate();
    const int n = static_cast<int>(prob.q.size());
    const int m = static_cast<int>(prob.h.size());
    const ConeSpec& K = prob.cones;
    const int deg = std::max(1, K.degree());

    ConicResult res;
    if (m == 0) return solve_unconstrained(prob, res);

    // Best iterate seen, by worst KKT residual. The endgame can destroy an
    // already-converged point (the scaling matrix degenerates with the gap),
    // so breakdown exits hand back the best point instead of the last one.
    VectorXd best_x, best_s, best_z;
    KktResiduals best_res;
    double best_metric = std::numeric_limits<double>::infinity();
    double best_obj = std::numeric_limits<double>::quiet_NaN();

    auto finalize = [&](SolveState state, const char* why) -> ConicResult& {
      const double cur = std::max({res.residuals.primal, res.residuals.dual,
                                   res.residuals.gap});
      // NaN-safe: prefer best unless the current iterate is strictly better.
      if (std::isfinite(best_metric) && !(cur < best_metric)) {
        res.x = best_x;
        res.s = best_s;
        res.z = best_z;
        res.residuals = best_res;
        res.objective = best_obj;
      }
      const bool meets_tol = res.residuals.primal <= tol && res.residuals.dual <= tol &&
                             res.residuals.gap <= tol;
      res.state = meets_tol ? SolveState::optimal : state;
      res.diagnostic = meets_tol ? "" : why;
      return res;
    };

    // Per-SOC constant pieces of the condensed system: Mk = Gk' J Gk.
    const int nsoc = static_cast<int>(K.soc.size());
    soc_mjg_.assign(nsoc, MatrixXd());
    {
      int off = K.lin;
      for (int ci = 0; ci < nsoc; ++ci) {
        const int d = K.soc[ci];
        blk_ = prob.G.middleRows(off, d);
        soc_mjg_[ci].noalias() = blk_.row(0).transpose() * blk_.row(0);
        soc_mjg_[ci].noalias() -= blk_.bottomRows(d - 1).transpose() * blk_.bottomRows(d - 1);
        off += d;
      }
    }

    // Initial point: solve the tol-free KKT system with identity scaling,
    // then push s and z into the cone interior.
    VectorXd x, s, z;
    {
      h_.noalias() = prob.P + prob.G.transpose() * prob.G;
      Eigen::LLT<MatrixXd> llt(h_);
      if (llt.info() != Eigen::Success) {
        h_.diagonal().array() += 1e-10 * (1.0 + h_.diagonal().cwiseAbs().maxCoeff());
        llt.compute(h_);
        if (llt.info() != Eigen::Success)
          return fail(res, "initial KKT factorization failed");
      }
      x = llt.solve(-prob.q + prob.G.transpose() * prob.h);
      z = prob.G * x - prob.h;
      s = -z;
      double ms = detail::cone_min_eig(s, K);
      if (ms <= 0.0) detail::cone_identity_shift(s, K, 1.0 - ms);
      double mz = detail::cone_min_eig(z, K);
      if (mz <= 0.0) detail::cone_identity_shift(z, K, 1.0 - mz);
    }

    detail::NtScaling W;

    for (int iter = 0; iter <= max_iter; ++iter) {
      const VectorXd rx = prob.P * x + prob.q + prob.G.transpose() * z;
      const VectorXd rz = prob.G * x + s - prob.h;
      const double gap = s.dot(z);
      const double pobj = 0.5 * x.dot(prob.P * x) + prob.q.dot(x);

      res.residuals.dual = rx.norm() / (1.0 + prob.q.norm());
      res.residuals.primal = rz.norm() / (1.0 + prob.h.norm());
      res.residuals.gap = gap / std::max(1.0, std::abs(pobj));
      res.iterations = iter;
      res.x = x; res.s = s; res.z = z;
      res.objective = pobj;

      if (!std::isfinite(gap) || !std::isfinite(res.residuals.dual) ||
          !std::isfinite(res.residuals.primal))
        return finalize(SolveState::numerical_failure, "iterates lost finiteness");

      const double metric = std::max(
          {res.residuals.primal, res.residuals.dual, res.residuals.gap});
      if (metric < best_metric) {
        best_metric = metric;
        best_x = x; best_s = s; best_z = z;
        best_res = res.residuals;
        best_obj = pobj;
      }

      if (res.residuals.primal <= tol && res.residuals.dual <= tol &&
          res.residuals.gap <= tol) {
        res.state = SolveState::optimal;
        return res;
      }
      if (iter == max_iter)
        return finalize(SolveState::max_iterations, "iteration limit reached");

      if (!W.compute(s, z, K))
        return finalize(SolveState::numerical_failure, "iterate left the cone interior");
      const double mu = gap / deg;

      if (!factor_condensed(prob, W, K))
        return finalize(SolveState::numerical_failure, "condensed KKT factorization failed");

      // Predictor (affine scaling) direction. With d = lambda o lambda the
      // complementarity right-hand side collapses: W (lambda \ d) = W lambda = s.
      VectorXd dx_a, dz_a;
      kkt_solve(prob, W, K, -rx, -rz + s, dx_a, dz_a);
      VectorXd ds_a = -rz - prob.G * dx_a;

      const double alpha_aff = std::min(
          1.0, std::min(detail::cone_step_length(s, ds_a, K),
                        detail::cone_step_length(z, dz_a, K)));
      const double mu_aff = (s + alpha_aff * ds_a).dot(z + alpha_aff * dz_a) / deg;
      double sigma = std::pow(std::max(0.0, mu_aff / mu), 3.0);
      sigma = std::min(sigma, 0.99);

      // Corrector: second-order term in the scaled space plus centering.
      VectorXd dst = W.apply(ds_a, K, -1);
      VectorXd dzt = W.apply(dz_a, K, 1);
      VectorXd d = detail::jordan_product(W.lambda, W.lambda, K) +
                   detail::jordan_product(dst, dzt, K);
      detail::cone_identity_shift(d, K, -sigma * mu);
      VectorXd bz = -rz + W.apply(detail::jordan_solve(W.lambda, d, K), K, 1);

      VectorXd dx, dz;
      kkt_solve(prob, W, K, -rx, bz, dx, dz);
      VectorXd ds = -rz - prob.G * dx;

      // Largest cone-interior step that keeps the complementarity gap
      // non-increasing; the aggressive combined direction may reject every
      // usable length, so signal that instead of creeping.
      auto monotone_step = [&](const VectorXd& dsv, const VectorXd& dzv, int tries) {
        double a = 0.99 * std::min(detail::cone_step_length(s, dsv, K),
                                   detail::cone_step_length(z, dzv, K));
        a = std::min(a, 1.0);
        for (int guard = 0; guard < tries; ++guard) {
          if ((s + a * dsv).dot(z + a * dzv) <= gap * (1.0 + 1e-12)) return a;
          a *= 0.5;
        }
        return -1.0;
      };

      double alpha = monotone_step(ds, dz, 25);
      if (alpha < 0.0 || alpha < 1e-10) {
        // Centering fallback: with d = lambda o lambda - sigma_c mu e the
        // gap derivative along the step is -(1 - sigma_c) * gap < 0, so a
        // gap-non-increasing length always exists; residuals still shrink
        // by the same (1 - alpha) factor as on the combined step.
        const double sigma_c = std::max(sigma, 0.9);
        VectorXd dc = detail::jordan_product(W.lambda, W.lambda, K);
        detail::cone_identity_shift(dc, K, -sigma_c * mu);
        bz = -rz + W.apply(detail::jordan_solve(W.lambda, dc, K), K, 1);
        kkt_solve(prob, W, K, -rx, bz, dx, dz);
        ds = -rz - prob.G * dx;
        alpha = monotone_step(ds, dz, 60);
        if (alpha < 0.0 || alpha < 1e-13)
          return finalize(SolveState::max_iterations, "step length collapsed");
      }

      x += alpha * dx;
      s += alpha * ds;
      z += alpha * dz;
      res.gap_trace.push_back(s.dot(z));
    }
    res.state = SolveState::max_iterations;
    return res;
  }

 private:
  ConicResult& fail(ConicResult& res, const char* why) {
    res.state = SolveState::numerical_failure;
    res.diagnostic = why;
    return res;
  }

  ConicResult solve_unconstrained(const ConicProblem& prob, ConicResult& res) {
    Eigen::LDLT<MatrixXd> ldlt(prob.P);
    if (ldlt.info() != Eigen::Success) return fail(res, "unconstrained P factorization failed");
    res.x = ldlt.solve(-prob.q);
    res.s.resize(0);
    res.z.resize(0);
    res.objective = 0.5 * res.x.dot(prob.P * res.x) + prob.q.dot(res.x);
    res.residuals.primal = 0.0;
    res.residuals.gap = 0.0;
    res.residuals.dual = (prob.P * res.x + prob.q).norm() / (1.0 + prob.q.norm());
    res.state = SolveState::optimal;
    return res;
  }

  // H = P + G' W^-2 G assembled from the orthant rows, the per-SOC constant
  // part Mk and one rank-one correction per cone. Returns false if even a
  // ridged factorization fails.
  bool factor_condensed(const ConicProblem& prob, const detail::NtScaling& W,
                        const ConeSpec& K) {
    h_ = prob.P;
    for (int i = 0; i < K.lin; ++i) {
      const double w2 = W.w_lin(i) * W.w_lin(i);
      h_.noalias() += (1.0 / w2) * prob.G.row(i).transpose() * prob.G.row(i);
    }
    int off = K.lin;
    for (size_t ci = 0; ci < K.soc.size(); ++ci) {
      const int d = K.soc[ci];
      const double e2 = 1.0 / (W.eta[ci] * W.eta[ci]);
      // W^-2 = (1/eta^2) (2 (J w)(J w)' - J) with w the full rotation point
      VectorXd jw = W.wfull[ci];
      jw.tail(d - 1) = -jw.tail(d - 1);
      const VectorXd v = prob.G.middleRows(off, d).transpose() * jw;
      h_.noalias() += (2.0 * e2) * v * v.transpose();
      h_.noalias() -= e2 * soc_mjg_[ci];
      off += d;
    }
    llt_.compute(h_);
    if (llt_.info() == Eigen::Success) return true;
    // Ridge a copy; refinement in kkt_solve needs the exact h_ for residuals.
    hfac_ = h_;
    hfac_.diagonal().array() += 1e-12 * (1.0 + h_.diagonal().cwiseAbs().maxCoeff());
    llt_.compute(hfac_);
    return llt_.info() == Eigen::Success;
  }

  // Solve [P G'; G -W^2] [dx; dz] = [bx; bz] through the condensed system.
  // Near convergence the scaled back-substitution for dz amplifies rounding
  // by the inverse scaling (condition ~1/mu), which silently corrupts the
  // dual equation. Refine both blocks against the full system until the
  // residuals stall or reach noise level.
  void kkt_solve(const ConicProblem& prob, const detail::NtScaling& W, const ConeSpec& K,
                 const VectorXd& bx, const VectorXd& bz, VectorXd& dx, VectorXd& dz) {
    dx = llt_.solve(bx + prob.G.transpose() * W.apply(bz, K, -2));
    dz = W.apply(prob.G * dx - bz, K, -2);
    const double noise = 1e-14 * (1.0 + std::max(bx.norm(), bz.norm()));
    double prev = std::numeric_limits<double>::infinity();
    for (int pass = 0; pass < 4; ++pass) {
      const VectorXd r1 = bx - prob.P * dx - prob.G.transpose() * dz;
      const VectorXd r2 = bz - prob.G * dx + W.apply(dz, K, 2);
      const double rn = std::max(r1.norm(), r2.norm());
      if (!(rn > noise) || !(rn < 0.5 * prev)) break;
      const VectorXd cdx = llt_.solve(r1 + prob.G.transpose() * W.apply(r2, K, -2));
      dx += cdx;
      dz += W.apply(prob.G * cdx - r2, K, -2);
      prev = rn;
    }
  }

  MatrixXd h_, hfac_, blk_;
  std::vector<MatrixXd> soc_mjg_;
  Eigen::LLT<MatrixXd> llt_;
};

}  // namespace bisac::conic
