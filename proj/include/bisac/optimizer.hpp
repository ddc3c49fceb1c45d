#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bisac/model.hpp"
#include "bisac/subproblem.hpp"
#include "bisac/types.hpp"

// Rate maximization under the tag and echo SINR floors and the transmit
// power budget. The fractional UE SINR objective is handled through an
// auxiliary scalar y (quadratic transform); for fixed y the design reduces
// to the convex step in subproblem.hpp, re-anchored until its linearization
// stops moving; y and the beams then alternate until y settles.

namespace bisac {

struct StoppingRule {
  double inner_tol = 1e-4;  // linearization-movement threshold, relative to 1 + |objective|
  int max_inner = 50;
  double outer_tol = 1e-5;  // minimum y increment to keep alternating
  int max_outer = 30;

  void validate() const {
    if (!(inner_tol > 0.0) || !(outer_tol > 0.0))
      throw std::invalid_argument("stopping rule: thresholds must be positive");
    if (max_inner < 1 || max_outer < 1)
      throw std::invalid_argument("stopping rule: iteration caps must be at least 1");
  }
};

struct IterationRecord {
  int round = 0;          // index within its loop, starting at 1
  double y = 0.0;
  double objective = 0.0; // surrogate value F at this iterate
  double rate = 0.0;
  double tag_sinr = 0.0;
  double ap_sinr = 0.0;
  double power_mw = 0.0;
  int inner_count = 0;    // convex steps consumed by this record
  double delta = std::numeric_limits<double>::quiet_NaN();    // linearization movement
  double epsilon = std::numeric_limits<double>::quiet_NaN();  // y increment
};
using IterationTrace = std::vector<IterationRecord>;

// ----- objective and auxiliary scalar --------------------------------------

/// Quadratic-transform surrogate of the UE SINR. Shares the exact
/// denominator arithmetic with sinr_ue, so F(W, optimal_y(W)) reproduces
/// the SINR value bit-for-bit up to the final few ulps.
inline double objective_F(const BeamformingMatrix& beams, double y, const ChannelSet& ch,
                          const SystemConfig& cfg) {
  const double den = detail::ue_denominator_terms(beams, ch, cfg).denominator();
  const double re_gain = std::real(cd(ch.ap_to_ue * beams.ue_beam));
  return 2.0 * y * re_gain - y * y * den;
}

/// Maximizer of F(W, .): the stationary point of a concave parabola in y.
inline double optimal_y(const BeamformingMatrix& beams, const ChannelSet& ch,
                        const SystemConfig& cfg) {
  const double den = detail::ue_denominator_terms(beams, ch, cfg).denominator();
  return std::real(cd(ch.ap_to_ue * beams.ue_beam)) / den;
}

/// Rotates the tag and UE beams by unit-modulus factors so the gains
/// h_f w_t and h_u w_u come out real non-negative. All SINRs depend on
/// those gains only through their magnitude, so they are unchanged.
inline BeamformingMatrix rotate_phases(const BeamformingMatrix& beams, const ChannelSet& ch) {
  BeamformingMatrix out = beams;
  const cd gt = ch.ap_to_tag * beams.tag_beam;
  if (std::abs(gt) > 0.0) out.tag_beam *= std::polar(1.0, -std::arg(gt));
  const cd gu = ch.ap_to_ue * beams.ue_beam;
  if (std::abs(gu) > 0.0) out.ue_beam *= std::polar(1.0, -std::arg(gu));
  return out;
}

// ----- feasibility ----------------------------------------------------------

struct FeasibilityReport {
  double tag_sinr_residual = 0.0;  // gamma_t minus its floor
  double ap_sinr_residual = 0.0;   // gamma_ap minus its floor
  double power_residual = 0.0;     // budget minus spent power
  bool feasible = false;
};

inline FeasibilityReport check_feasibility(const BeamformingMatrix& beams, const ChannelSet& ch,
                                           const SystemConfig& cfg, double tol = 1e-9) {
  FeasibilityReport r;
  r.tag_sinr_residual = sinr_tag(beams, ch, cfg).value - cfg.tag_sinr_min;
  r.ap_sinr_residual = sinr_ap(beams, ch, cfg).value - cfg.ap_sinr_min;
  r.power_residual = cfg.power_budget_mw - beams.total_power();
  r.feasible = r.tag_sinr_residual >= -tol && r.ap_sinr_residual >= -tol &&
               r.power_residual >= -tol;
  return r;
}

// ----- feasible start -------------------------------------------------------

/// Deterministic feasible design: a matched beam at the tag sized to clear
/// both SINR floors with 3 dB to spare, a UE beam in the orthogonal
/// complement of the tag direction (so it leaves both floors untouched),
/// and probing spread over the remaining orthogonal directions. The UE
/// fraction is halved on any residual violation before giving up.
inline BeamformingMatrix initialize_W(const ChannelSet& ch, const SystemConfig& cfg) {
  cfg.validate();
  ch.validate(cfg);
  const int nt = cfg.n_tx;
  const double forward_gain = ch.ap_to_tag.squaredNorm();
  const double link_gain = ch.tag_to_ap.squaredNorm();

  if (forward_gain <= 0.0)
    throw infeasible_scenario_error("tag_sinr",
                                    "initialization: forward channel is zero, tag SINR floor unreachable");
  const double echo_gain = cfg.backscatter_alpha * link_gain;
  if (echo_gain <= 0.0)
    throw infeasible_scenario_error("ap_sinr",
                                    "initialization: echo path is zero, echo SINR floor unreachable");

  // |h_f w_t|^2 needed when only the tag beam transmits
  const double tag_need = cfg.tag_sinr_min * cfg.noise_tag_mw;
  const double ap_need =
      cfg.ap_sinr_min * (echo_gain * cfg.noise_tag_mw + cfg.noise_ap_mw) / echo_gain;
  const double need = std::max(tag_need, ap_need);
  const char* binding = tag_need >= ap_need ? "tag_sinr" : "ap_sinr";

  const double margin = std::pow(10.0, 0.3);
  double tag_power = margin * need / forward_gain;
  if (need / forward_gain > cfg.power_budget_mw)
    throw infeasible_scenario_error(
        binding, "initialization: power budget cannot clear the SINR floors");
  tag_power = std::min(tag_power, cfg.power_budget_mw);

  VectorXcd tag_dir = ch.ap_to_tag.adjoint() / std::sqrt(forward_gain);
  VectorXcd ue_raw = ch.ap_to_ue.adjoint();
  ue_raw -= tag_dir * (tag_dir.adjoint() * ue_raw);
  const double ue_raw_norm = ue_raw.norm();
  const bool ue_usable = ue_raw_norm > 1e-12 * (1.0 + ch.ap_to_ue.norm());

  const double remaining = cfg.power_budget_mw - tag_power;
  double ue_fraction = 0.9;

  // directions orthogonal to the tag and UE beams for the probing streams
  MatrixXcd seed(nt, ue_usable ? 2 : 1);
  seed.col(0) = tag_dir;
  if (ue_usable) seed.col(1) = ue_raw / ue_raw_norm;
  Eigen::HouseholderQR<MatrixXcd> qr(seed);
  MatrixXcd qfull = qr.householderQ();

  for (int attempt = 0; attempt <= 30; ++attempt) {
    BeamformingMatrix beams = BeamformingMatrix::zero(nt);
    beams.tag_beam = std::sqrt(tag_power) * tag_dir;
    if (ue_usable && remaining > 0.0)
      beams.ue_beam = std::sqrt(ue_fraction * remaining) * (ue_raw / ue_raw_norm);
    const double probe_budget = remaining * (ue_usable ? 1.0 - ue_fraction : 1.0);
    const int n_probe = std::max(0, nt - static_cast<int>(seed.cols()));
    if (probe_budget > 0.0) {
      const double col_amp = std::sqrt(probe_budget / nt);
      for (int j = 0; j < n_probe; ++j)
        beams.probing.col(j) = col_amp * qfull.col(seed.cols() + j);
    }
    FeasibilityReport rep = check_feasibility(beams, ch, cfg, 1e-8);
    if (rep.feasible) return beams;
    ue_fraction *= 0.5;
  }
  throw infeasible_scenario_error(
      binding, "initialization: no feasible design found after shrinking the UE beam");
}

// ----- inner loop: re-anchored convex steps ---------------------------------

struct ScaResult {
  BeamformingMatrix beams;
  IterationTrace trace;
  bool converged = false;
  SolverStatus last_status;
};

namespace detail {

inline IterationRecord describe_iterate(const BeamformingMatrix& beams, double y,
                                        const ChannelSet& ch, const SystemConfig& cfg) {
  IterationRecord rec;
  rec.y = y;
  rec.objective = objective_F(beams, y, ch, cfg);
  rec.rate = rate(sinr_ue(beams, ch, cfg).value);
  rec.tag_sinr = sinr_tag(beams, ch, cfg).value;
  rec.ap_sinr = sinr_ap(beams, ch, cfg).value;
  rec.power_mw = beams.total_power();
  return rec;
}

}  // namespace detail

/// Re-anchored convex steps at fixed y. Stops when the movement of the
/// echo-power linearization,
///   delta = |2 Re sum_col conj(g_new_col) (g_new_col - g_anchor_col)|
/// with g = h_f W, falls below inner_tol * (1 + |F|). Every iterate is
/// feasible for the true constraints, and F never decreases.
inline ScaResult sca_solve(double y, const BeamformingMatrix& w_init, const StoppingRule& rule,
                           const ChannelSet& ch, const SystemConfig& cfg, double solver_tol = 1e-8) {
  rule.validate();
  ScaResult out;
  BeamformingMatrix anchor = rotate_phases(w_init, ch);

  for (int i = 1; i <= rule.max_inner; ++i) {
    SubproblemData data = build_subproblem(anchor, y, ch, cfg);
    SubproblemSolution sol = solve_subproblem(data, solver_tol);
    out.last_status = sol.status;

    if (sol.status.state == SolveState::infeasible)
      throw infeasible_scenario_error(
          "subproblem", "inner iteration " + std::to_string(i) +
                            ": convex step infeasible (" + sol.status.diagnostic + ")");
    const bool usable =
        sol.status.state == SolveState::optimal ||
        (sol.status.state == SolveState::max_iterations && sol.status.kkt.primal <= 1e-6 &&
         sol.status.kkt.dual <= 1e-6 && sol.status.kkt.gap <= 1e-6);
    if (!usable)
      throw std::runtime_error("inner iteration " + std::to_string(i) +
                               ": convex step failed (" + sol.status.diagnostic + ")");

    const RowVectorXcd g_new = ch.ap_to_tag * sol.beams.assembled();
    const RowVectorXcd g_old = ch.ap_to_tag * anchor.assembled();
    const double delta = std::abs(2.0 * std::real((g_new - g_old).dot(g_new)));

    anchor = sol.beams;
    IterationRecord rec = detail::describe_iterate(anchor, y, ch, cfg);
    rec.round = i;
    rec.inner_count = i;
    rec.delta = delta;
    out.trace.push_back(rec);

    if (delta < rule.inner_tol * (1.0 + std::abs(rec.objective))) {
      out.converged = true;
      break;
    }
  }
  out.beams = anchor;
  return out;
}

// ----- outer loop: alternate y and the beams --------------------------------

struct SolveReport {
  BeamformingMatrix beams;  // phase-rotated final design
  IterationTrace trace;     // one record per outer round
  double y = 0.0;
  double rate = 0.0;
  double ue_sinr = 0.0;
  double tag_sinr = 0.0;
  double ap_sinr = 0.0;
  double detection_prob = 0.0;
  int outer_iterations = 0;
  int inner_iterations_total = 0;
  bool converged = false;
};

/// Full design loop: feasible start, then per round the closed-form y
/// update from the current beams followed by the convex beam step at that
/// y. y starts at 0 only as the baseline for the first y increment; the
/// loop ends when the increment drops below outer_tol.
inline SolveReport alternating_solve(const StoppingRule& rule, const ChannelSet& ch,
                                     const SystemConfig& cfg, double solver_tol = 1e-8) {
  rule.validate();
  SolveReport rep;
  BeamformingMatrix w = initialize_W(ch, cfg);
  double y_prev = 0.0;

  for (int k = 1; k <= rule.max_outer; ++k) {
    w = rotate_phases(w, ch);
    const double y_k = optimal_y(w, ch, cfg);
    ScaResult inner;
    try {
      inner = sca_solve(y_k, w, rule, ch, cfg, solver_tol);
    } catch (const infeasible_scenario_error& e) {
      throw infeasible_scenario_error(e.binding_constraint(),
                                      "outer round " + std::to_string(k) + ": " + e.what());
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("outer round " + std::to_string(k) + ": " + e.what());
    }
    w = rotate_phases(inner.beams, ch);
    const double eps = y_k - y_prev;

    IterationRecord rec = detail::describe_iterate(w, y_k, ch, cfg);
    rec.round = k;
    rec.inner_count = static_cast<int>(inner.trace.size());
    rec.delta = inner.trace.empty() ? std::numeric_limits<double>::quiet_NaN()
                                    : inner.trace.back().delta;
    rec.epsilon = eps;
    rep.trace.push_back(rec);

    rep.inner_iterations_total += rec.inner_count;
    rep.outer_iterations = k;
    y_prev = y_k;
    if (eps < rule.outer_tol) {
      rep.converged = true;
      break;
    }
  }

  rep.beams = w;
  rep.y = y_prev;
  rep.ue_sinr = sinr_ue(w, ch, cfg).value;
  rep.rate = rate(rep.ue_sinr);
  rep.tag_sinr = sinr_tag(w, ch, cfg).value;
  rep.ap_sinr = sinr_ap(w, ch, cfg).value;
  rep.detection_prob = detection_probability(rep.ap_sinr, cfg.false_alarm);
  return rep;
}

}  // namespace bisac
