#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <random>

#include "bisac/optimizer.hpp"
#include "bisac/scenario.hpp"
#include "bisac/subproblem.hpp"
#include "oracles.hpp"

using bisac::BeamformingMatrix;
using bisac::ChannelSet;
using bisac::SubproblemData;
using bisac::SystemConfig;
using cd = std::complex<double>;

namespace {

SystemConfig small_config(int nt) {
  SystemConfig cfg;
  cfg.n_tx = nt;
  cfg.n_rx = nt;
  cfg.noise_tag_mw = 0.01;
  cfg.noise_ap_mw = 0.01;
  cfg.noise_ue_mw = 0.01;
  cfg.backscatter_alpha = 0.5;
  cfg.tag_sinr_min = 2.0;
  cfg.ap_sinr_min = 0.5;
  cfg.power_budget_mw = 1.0;
  cfg.waveform_length = 64;
  cfg.false_alarm = 0.1;
  return cfg;
}

ChannelSet random_channels(int nt, int nr, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.6);
  ChannelSet ch;
  ch.ap_to_tag.resize(nt);
  ch.ap_to_ue.resize(nt);
  ch.tag_to_ap.resize(nr);
  for (int i = 0; i < nt; ++i) {
    ch.ap_to_tag(i) = cd(g(rng), g(rng));
    ch.ap_to_ue(i) = cd(g(rng), g(rng));
  }
  for (int i = 0; i < nr; ++i) ch.tag_to_ap(i) = cd(g(rng), g(rng));
  ch.tag_to_ue = cd(g(rng), g(rng));
  return ch;
}

BeamformingMatrix random_beams(int nt, double power, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  BeamformingMatrix b = BeamformingMatrix::zero(nt);
  for (int i = 0; i < nt; ++i) {
    b.ue_beam(i) = cd(g(rng), g(rng));
    b.tag_beam(i) = cd(g(rng), g(rng));
    for (int j = 0; j < nt; ++j) b.probing(i, j) = cd(g(rng), g(rng));
  }
  const double scale = std::sqrt(power / b.assembled().squaredNorm());
  b.ue_beam *= scale;
  b.tag_beam *= scale;
  b.probing *= scale;
  return b;
}

// default setup: the stock scenario converted to config + channels
struct DefaultSetup {
  SystemConfig cfg;
  ChannelSet ch;
  DefaultSetup() {
    bisac::Scenario scn;
    cfg = bisac::to_config(scn);
    ch = bisac::to_channels(scn, cfg);
  }
};

}  // namespace

TEST_CASE("lifted and complex evaluations of the step data coincide") {
  const int nt = 6;
  SystemConfig cfg = small_config(nt);
  ChannelSet ch = random_channels(nt, nt, 51);
  BeamformingMatrix anchor = random_beams(nt, 0.8, 52);
  const SubproblemData d = bisac::build_subproblem(anchor, 2.5, ch, cfg);

  for (std::uint64_t s = 0; s < 25; ++s) {
    BeamformingMatrix b = random_beams(nt, 0.2 + 0.03 * static_cast<double>(s), 100 + s);
    const Eigen::VectorXd x = bisac::lift::to_real(b.assembled());
    const double scale = 1.0 + std::abs(d.objective_complex(b));
    CHECK(std::abs(d.objective_lifted(x) - d.objective_complex(b)) <= 1e-10 * scale);
    CHECK(std::abs(d.soc_margin_lifted(x) - d.soc_margin_complex(b)) <=
          1e-10 * (1.0 + std::abs(d.soc_margin_complex(b))));
    CHECK(std::abs(d.aff_margin_lifted(x) - d.aff_margin_complex(b)) <=
          1e-10 * (1.0 + std::abs(d.aff_margin_complex(b))));
  }
}

TEST_CASE("zero auxiliary scalar wipes out the objective data") {
  DefaultSetup s;
  BeamformingMatrix anchor = bisac::initialize_W(s.ch, s.cfg);
  const SubproblemData d = bisac::build_subproblem(anchor, 0.0, s.ch, s.cfg);
  CHECK(d.lin.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(d.quad.lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(d.obj_const == 0.0);
}

TEST_CASE("echo surrogate under-estimates the true echo power everywhere") {
  DefaultSetup s;
  BeamformingMatrix anchor = bisac::initialize_W(s.ch, s.cfg);
  const SubproblemData d = bisac::build_subproblem(anchor, 10.0, s.ch, s.cfg);
  REQUIRE(d.model.has_value());
  const auto& m = *d.model;
  const double rhs_fixed = d.aff_rhs - m.echo_coeff * m.anchor_gain.squaredNorm();

  // equality holds at the anchor itself
  const double anchor_true =
      m.echo_coeff * (m.h_f * anchor.assembled()).squaredNorm() - rhs_fixed;
  CHECK(std::abs(d.aff_margin_complex(anchor) - anchor_true) <=
        1e-9 * (1.0 + std::abs(anchor_true)));

  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    BeamformingMatrix b =
        random_beams(s.cfg.n_tx, 0.05 + 0.009 * static_cast<double>(seed), 300 + seed);
    const double surrogate = d.aff_margin_complex(b);
    const double truth = m.echo_coeff * (m.h_f * b.assembled()).squaredNorm() - rhs_fixed;
    CAPTURE(seed, surrogate, truth);
    CHECK(surrogate <= truth + 1e-10 * (1.0 + std::abs(truth)));
  }
}

TEST_CASE("echo constraint row equals the finite-difference gradient") {
  const int nt = 4;
  SystemConfig cfg = small_config(nt);
  ChannelSet ch = random_channels(nt, nt, 61);
  BeamformingMatrix anchor = random_beams(nt, 0.7, 62);
  const SubproblemData d = bisac::build_subproblem(anchor, 1.3, ch, cfg);
  REQUIRE(d.model.has_value());
  const auto& m = *d.model;

  const Eigen::VectorXd x0 = bisac::lift::to_real(anchor.assembled());
  auto true_lhs = [&](const Eigen::VectorXd& x) {
    const Eigen::MatrixXcd w =
        bisac::lift::to_complex(x, d.n_tx, d.n_streams);
    return m.echo_coeff * (m.h_f * w).squaredNorm();
  };

  const double eps = 1e-6;
  for (int i = 0; i < d.dim(); ++i) {
    Eigen::VectorXd xp = x0, xm = x0;
    xp(i) += eps;
    xm(i) -= eps;
    const double fd = (true_lhs(xp) - true_lhs(xm)) / (2.0 * eps);
    CAPTURE(i, fd, d.aff(i));
    CHECK(std::abs(fd - d.aff(i)) <= 1e-5 * (1.0 + std::abs(d.aff(i))));
  }
}

TEST_CASE("span reduction returns the full-space optimum") {
  DefaultSetup s;
  BeamformingMatrix anchor = bisac::initialize_W(s.ch, s.cfg);
  anchor = bisac::rotate_phases(anchor, s.ch);
  const double y = bisac::optimal_y(anchor, s.ch, s.cfg);
  SubproblemData d = bisac::build_subproblem(anchor, y, s.ch, s.cfg);
  REQUIRE(d.model.has_value());
  REQUIRE(d.model->span_basis.cols() == 2);

  const auto reduced = bisac::solve_subproblem(d, 1e-9, 100);
  REQUIRE(reduced.status.state == bisac::SolveState::optimal);

  SubproblemData full = d;
  full.model->span_basis.resize(0, 0);  // forces the full-dimensional path
  const auto wide = bisac::solve_subproblem(full, 1e-9, 100);
  REQUIRE(wide.status.state == bisac::SolveState::optimal);

  CAPTURE(reduced.objective, wide.objective);
  CHECK(std::abs(reduced.objective - wide.objective) <=
        1e-6 * (1.0 + std::abs(wide.objective)));

  // the reduced solution spends no power outside the channel span
  const Eigen::MatrixXcd basis = d.model->span_basis;
  const Eigen::MatrixXcd w = reduced.beams.assembled();
  const Eigen::MatrixXcd outside = w - basis * (basis.adjoint() * w);
  CHECK(outside.norm() <= 1e-7 * (1.0 + w.norm()));
}

TEST_CASE("degenerate objective falls back to the deterministic center") {
  DefaultSetup s;
  BeamformingMatrix anchor = bisac::initialize_W(s.ch, s.cfg);
  const SubproblemData d = bisac::build_subproblem(anchor, 0.0, s.ch, s.cfg);

  const auto a = bisac::solve_subproblem(d, 1e-9, 100);
  const auto b = bisac::solve_subproblem(d, 1e-9, 100);
  REQUIRE(a.status.state == bisac::SolveState::optimal);
  REQUIRE(b.status.state == bisac::SolveState::optimal);
  CHECK((a.beams.assembled() - b.beams.assembled()).norm() == 0.0);

  // the center clears every constraint strictly on a feasible scenario
  const Eigen::VectorXd x = bisac::lift::to_real(a.beams.assembled());
  CHECK(d.soc_margin_lifted(x) > 0.0);
  CHECK(d.aff_margin_lifted(x) > 0.0);
  CHECK(x.squaredNorm() < d.radius_sq);
}

TEST_CASE("anchor blind to the tag certifies the surrogate infeasible") {
  DefaultSetup s;
  BeamformingMatrix anchor = random_beams(s.cfg.n_tx, 0.8, 71);
  const Eigen::VectorXcd dir = s.ch.ap_to_tag.adjoint() / s.ch.ap_to_tag.norm();
  auto strip = [&](Eigen::VectorXcd v) {
    return Eigen::VectorXcd(v - dir * (dir.adjoint() * v));
  };
  anchor.ue_beam = strip(anchor.ue_beam);
  anchor.tag_beam = strip(anchor.tag_beam);
  for (int c = 0; c < anchor.probing.cols(); ++c)
    anchor.probing.col(c) = strip(anchor.probing.col(c));

  const SubproblemData d = bisac::build_subproblem(anchor, 5.0, s.ch, s.cfg);
  const auto sol = bisac::solve_subproblem(d, 1e-8, 100);
  CHECK(sol.status.state == bisac::SolveState::infeasible);
}

TEST_CASE("unreachable tag floor is reported infeasible with context") {
  DefaultSetup s;
  SystemConfig cfg = s.cfg;
  cfg.tag_sinr_min = 1e12;
  BeamformingMatrix anchor = random_beams(cfg.n_tx, 0.5, 81);
  const SubproblemData d = bisac::build_subproblem(anchor, 1.0, s.ch, cfg);
  const auto sol = bisac::solve_subproblem(d, 1e-8, 100);
  REQUIRE(sol.status.state == bisac::SolveState::infeasible);
  CHECK(sol.status.diagnostic.find("tag cone") != std::string::npos);
}

TEST_CASE("interior-point optimum matches a mesh search on small instances") {
  for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
    const int nt = 2;
    SystemConfig cfg = small_config(nt);
    ChannelSet ch = random_channels(nt, nt, seed);
    BeamformingMatrix anchor;
    try {
      anchor = bisac::initialize_W(ch, cfg);
    } catch (const bisac::infeasible_scenario_error&) {
      continue;  // rare draw without a feasible design; skip it
    }
    anchor = bisac::rotate_phases(anchor, ch);
    const double y = 0.5 + 0.3 * static_cast<double>(seed % 3);
    const SubproblemData d = bisac::build_subproblem(anchor, y, ch, cfg);

    const auto sol = bisac::solve_subproblem(d, 1e-9, 100);
    REQUIRE(sol.status.state == bisac::SolveState::optimal);

    const Eigen::VectorXd start = bisac::lift::to_real(anchor.assembled());
    const Eigen::VectorXd probe = oracle::blend_until_feasible(
        d, bisac::lift::to_real(sol.beams.assembled()), start);
    const auto mesh = oracle::mesh_search_max_multi(d, {start, probe}, 0.64, 3e-4);
    CAPTURE(seed, sol.objective, mesh.objective);
    CHECK(std::abs(sol.objective - mesh.objective) <= 1e-3);
  }
}

TEST_CASE("solution satisfies every lifted constraint at tolerance") {
  DefaultSetup s;
  BeamformingMatrix anchor = bisac::initialize_W(s.ch, s.cfg);
  anchor = bisac::rotate_phases(anchor, s.ch);
  const double y = bisac::optimal_y(anchor, s.ch, s.cfg);
  const SubproblemData d = bisac::build_subproblem(anchor, y, s.ch, s.cfg);
  const auto sol = bisac::solve_subproblem(d, 1e-9, 100);
  REQUIRE(sol.status.state == bisac::SolveState::optimal);

  const Eigen::VectorXd x = bisac::lift::to_real(sol.beams.assembled());
  const double scale = std::sqrt(d.radius_sq);
  CHECK(d.soc_margin_lifted(x) >= -1e-7 * scale);
  CHECK(d.aff_margin_lifted(x) >= -1e-7 * (1.0 + std::abs(d.aff_rhs)));
  CHECK(x.squaredNorm() <= d.radius_sq * (1.0 + 1e-8));

  // optimality sanity: no worse than the feasible anchor it started from
  CHECK(sol.objective >= d.objective_lifted(bisac::lift::to_real(anchor.assembled())) -
                             1e-8 * (1.0 + std::abs(sol.objective)));
}
