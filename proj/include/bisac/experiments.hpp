#pragma once

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "bisac/detection_sim.hpp"
#include "bisac/model.hpp"
#include "bisac/optimizer.hpp"
#include "bisac/scenario.hpp"
#include "bisac/units.hpp"

// Experiment runners behind the command-line tool. Each experiment loads a
// scenario, produces its artifact files in an output directory, and records
// a manifest naming every file it wrote. All writes go through a temp file
// and a rename so a crash never leaves a half-written artifact.

namespace bisac {

inline constexpr const char* kVersion = "0.1.0";

// ----- artifact plumbing -----------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

inline void atomic_write(const std::filesystem::path& dir, const std::string& name,
                         const std::string& content) {
  const std::filesystem::path tmp = dir / (name + ".tmp");
  const std::filesystem::path dst = dir / name;
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, dst);
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string hash_hex(const Scenario& scn) {
  std::uint64_t h = scenario_hash(scn);
  char buf[25] = "fnv1a64:";
  static const char digits[] = "0123456789abcdef";
  for (int i = 0; i < 16; ++i) buf[8 + i] = digits[(h >> (60 - 4 * i)) & 0xf];
  return std::string(buf, 24);
}

// dB relative to 1 mW, floored so exact zeros stay finite in the files.
inline double to_dbm_floored(double mw) { return 10.0 * std::log10(std::max(mw, 1e-300)); }

inline nlohmann::json beams_to_json(const BeamformingMatrix& beams) {
  auto vec_json = [](const VectorXcd& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
      arr.push_back({v(i).real(), v(i).imag()});
    return arr;
  };
  nlohmann::json probing = nlohmann::json::array();
  for (Eigen::Index c = 0; c < beams.probing.cols(); ++c)
    probing.push_back(vec_json(beams.probing.col(c)));
  return {{"ue", vec_json(beams.ue_beam)}, {"tag", vec_json(beams.tag_beam)},
          {"probing", probing}};
}

}  // namespace detail

// ----- sweep definition -------------------------------------------------------

struct SweepSpec {
  std::string key;
  double start = 0.0;
  double stop = 0.0;
  double step = 0.0;

  std::vector<double> values() const {
    std::vector<double> out;
    for (double v = start; v <= stop + 1e-9 * std::abs(step); v += step) out.push_back(v);
    return out;
  }
};

/// Parses "key=a:b:step" with a strictly positive step and b >= a.
inline SweepSpec parse_sweep(std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos)
    throw std::invalid_argument("sweep: expected key=start:stop:step, got '" +
                                std::string(text) + "'");
  SweepSpec spec;
  spec.key = std::string(detail::trim(text.substr(0, eq)));
  std::string_view rest = text.substr(eq + 1);
  const auto c1 = rest.find(':');
  const auto c2 = c1 == std::string_view::npos ? std::string_view::npos : rest.find(':', c1 + 1);
  if (c1 == std::string_view::npos || c2 == std::string_view::npos)
    throw std::invalid_argument("sweep: expected key=start:stop:step, got '" +
                                std::string(text) + "'");
  auto num = [&](std::string_view s) {
    return detail::parse_number<double>(detail::trim(s), spec.key);
  };
  spec.start = num(rest.substr(0, c1));
  spec.stop = num(rest.substr(c1 + 1, c2 - c1 - 1));
  spec.step = num(rest.substr(c2 + 1));
  if (!(spec.step > 0.0)) throw std::invalid_argument("sweep: step must be positive");
  if (spec.stop < spec.start) throw std::invalid_argument("sweep: stop must be >= start");
  return spec;
}

/// Assigns a numeric value to a scenario field by key. Integer-typed keys
/// reject non-integral values instead of silently rounding.
inline void set_scenario_value(Scenario& scn, const std::string& key, double value) {
  for (const auto& entry : detail::scenario_fields()) {
    if (entry.key != key) continue;
    std::visit(
        [&](auto member) {
          using T = std::remove_reference_t<decltype(scn.*member)>;
          if constexpr (std::is_same_v<T, double>) {
            scn.*member = value;
          } else {
            T integral = static_cast<T>(std::llround(value));
            if (std::abs(static_cast<double>(integral) - value) > 1e-9)
              throw std::invalid_argument("sweep: key '" + key + "' takes integer values");
            scn.*member = integral;
          }
        },
        entry.field);
    return;
  }
  throw std::invalid_argument("sweep: unknown scenario key '" + key + "'");
}

// ----- experiment runners ----------------------------------------------------

namespace detail {

struct SolvedScenario {
  SystemConfig cfg;
  ChannelSet ch;
  SolveReport report;
};

inline SolvedScenario solve_scenario(const Scenario& scn) {
  SolvedScenario s;
  s.cfg = to_config(scn);
  s.ch = to_channels(scn, s.cfg);
  s.report = alternating_solve(to_stopping_rule(scn), s.ch, s.cfg);
  return s;
}

}  // namespace detail

/// solve: one full design, written as solution.json.
inline std::vector<std::string> run_solve(const Scenario& scn, const std::filesystem::path& out) {
  const auto s = detail::solve_scenario(scn);
  const auto& r = s.report;
  nlohmann::json doc{
      {"converged", r.converged},
      {"outer_iterations", r.outer_iterations},
      {"inner_iterations", r.inner_iterations_total},
      {"y", r.y},
      {"rate_bits_per_channel_use", r.rate},
      {"ue_sinr", r.ue_sinr},
      {"tag_sinr", r.tag_sinr},
      {"tag_sinr_db", linear_to_db(r.tag_sinr)},
      {"tag_sinr_floor_db", scn.gamma_tth_db},
      {"ap_sinr", r.ap_sinr},
      {"ap_sinr_db", linear_to_db(r.ap_sinr)},
      {"ap_sinr_floor_db", scn.gamma_apth_db},
      {"power_mw", r.beams.total_power()},
      {"power_budget_mw", s.cfg.power_budget_mw},
      {"false_alarm", scn.false_alarm},
      {"detection_probability", r.detection_prob},
      {"beams", detail::beams_to_json(r.beams)},
  };
  detail::atomic_write(out, "solution.json", doc.dump(2) + "\n");
  return {"solution.json"};
}

/// convergence-trace: one design, outer-round records as trace.csv.
inline std::vector<std::string> run_convergence_trace(const Scenario& scn,
                                                      const std::filesystem::path& out) {
  const auto s = detail::solve_scenario(scn);
  std::string csv = "iteration,y,F,rate,gamma_t,gamma_ap,power\n";
  for (const auto& rec : s.report.trace) {
    csv += std::to_string(rec.round) + ',' + detail::fmt_double(rec.y) + ',' +
           detail::fmt_double(rec.objective) + ',' + detail::fmt_double(rec.rate) + ',' +
           detail::fmt_double(rec.tag_sinr) + ',' + detail::fmt_double(rec.ap_sinr) + ',' +
           detail::fmt_double(rec.power_mw) + '\n';
  }
  detail::atomic_write(out, "trace.csv", csv);
  return {"trace.csv"};
}

/// beampattern: one design, then radiated power versus angle on a 1 degree
/// grid. Columns are dB relative to 1 mW; the four components add up in
/// linear units (overall = comm + tag + probe).
inline std::vector<std::string> run_beampattern(const Scenario& scn,
                                                const std::filesystem::path& out) {
  const auto s = detail::solve_scenario(scn);
  const BeamformingMatrix& beams = s.report.beams;
  const MatrixXcd cov = sample_covariance(beams);
  std::string csv = "theta_deg,overall_dbm,comm_dbm,tag_dbm,probe_dbm\n";
  for (int deg = -90; deg <= 90; ++deg) {
    const double theta = deg_to_rad(static_cast<double>(deg));
    const VectorXcd a = steering_vector(theta, s.cfg.n_tx);
    const double overall = beampattern(cov, theta);
    const double comm = std::norm(cd(a.adjoint() * beams.ue_beam));
    const double tag = std::norm(cd(a.adjoint() * beams.tag_beam));
    const double probe = (a.adjoint() * beams.probing).squaredNorm();
    csv += std::to_string(deg) + ',' + detail::fmt_double(detail::to_dbm_floored(overall)) + ',' +
           detail::fmt_double(detail::to_dbm_floored(comm)) + ',' +
           detail::fmt_double(detail::to_dbm_floored(tag)) + ',' +
           detail::fmt_double(detail::to_dbm_floored(probe)) + '\n';
  }
  detail::atomic_write(out, "beampattern.csv", csv);
  return {"beampattern.csv"};
}

/// power-sweep: independent designs across a swept scenario key (default
/// p_t_dbm over 0..30 dBm in 5 dB steps), one row per point in sweep order.
/// Points run on a worker pool; rows are written in sweep order regardless
/// of completion order.
inline std::vector<std::string> run_power_sweep(const Scenario& scn,
                                                const std::filesystem::path& out,
                                                const std::optional<SweepSpec>& sweep) {
  const SweepSpec spec = sweep.value_or(SweepSpec{"p_t_dbm", 0.0, 30.0, 5.0});
  const std::vector<double> points = spec.values();
  if (points.empty()) throw std::invalid_argument("sweep: empty point list");

  struct Row {
    double value = 0.0;
    SolveReport report;
  };
  std::vector<Row> rows(points.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mx;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= points.size() || failed.load()) return;
      try {
        Scenario point = scn;
        set_scenario_value(point, spec.key, points[i]);
        rows[i].value = points[i];
        rows[i].report = detail::solve_scenario(point).report;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mx);
        if (!error) error = std::current_exception();
        failed.store(true);
        return;
      }
    }
  };

  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t n_threads = std::min<std::size_t>(hw, points.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::string csv = spec.key +
                    ",rate,tag_sinr_db,ap_sinr_db,power_mw,detection_probability,"
                    "outer_iterations,inner_iterations\n";
  for (const auto& row : rows) {
    csv += detail::fmt_double(row.value) + ',' + detail::fmt_double(row.report.rate) + ',' +
           detail::fmt_double(linear_to_db(row.report.tag_sinr)) + ',' +
           detail::fmt_double(linear_to_db(row.report.ap_sinr)) + ',' +
           detail::fmt_double(row.report.beams.total_power()) + ',' +
           detail::fmt_double(row.report.detection_prob) + ',' +
           std::to_string(row.report.outer_iterations) + ',' +
           std::to_string(row.report.inner_iterations_total) + '\n';
  }
  detail::atomic_write(out, "sweep.csv", csv);
  return {"sweep.csv"};
}

/// detection-roc: one design, then threshold calibration and empirical
/// detection rates across a false-alarm grid from shared Monte-Carlo
/// batches. The empirical false alarm comes from a held-out noise batch.
inline std::vector<std::string> run_detection_roc(const Scenario& scn,
                                                  const std::filesystem::path& out) {
  const auto s = detail::solve_scenario(scn);
  const BeamformingMatrix& beams = s.report.beams;
  const int n = scn.trials;
  if (n < 1000) throw std::invalid_argument("detection-roc: trials must be at least 1000");

  const auto h0_cal = simulate_statistics(beams, s.ch, s.cfg, n, Hypothesis::h0, scn.seed);
  const auto h0_held = simulate_statistics(beams, s.ch, s.cfg, n, Hypothesis::h0, scn.seed + 1);
  const auto h1 = simulate_statistics(beams, s.ch, s.cfg, n, Hypothesis::h1, scn.seed);

  auto exceed_fraction = [](const std::vector<DetectorSample>& v, double eta) {
    std::size_t c = 0;
    for (const auto& sample : v) c += (sample.statistic > eta) ? 1 : 0;
    return static_cast<double>(c) / static_cast<double>(v.size());
  };

  static constexpr double grid[] = {0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5};
  std::string csv = "p_f,eta,empirical_p_f,empirical_p_d,half_width_3sigma,analytic_p_d\n";
  for (double p_f : grid) {
    if (static_cast<double>(n) * p_f < 100.0) continue;  // calibration precondition
    const double eta = calibrate_eta(h0_cal, p_f);
    const double emp_pf = exceed_fraction(h0_held, eta);
    const double emp_pd = exceed_fraction(h1, eta);
    const double half_width =
        3.0 * std::sqrt(std::max(emp_pd * (1.0 - emp_pd), 1.0 / n) / static_cast<double>(n));
    const double analytic = detection_probability(s.report.ap_sinr, p_f);
    csv += detail::fmt_double(p_f) + ',' + detail::fmt_double(eta) + ',' +
           detail::fmt_double(emp_pf) + ',' + detail::fmt_double(emp_pd) + ',' +
           detail::fmt_double(half_width) + ',' + detail::fmt_double(analytic) + '\n';
  }
  detail::atomic_write(out, "roc.csv", csv);
  return {"roc.csv"};
}

// ----- entry point -----------------------------------------------------------

/// Runs one named experiment and writes its artifacts plus manifest.json
/// into `out`. Returns the list of files written (manifest included).
inline std::vector<std::string> run_experiment(const std::string& experiment, const Scenario& scn,
                                               const std::filesystem::path& out,
                                               const std::optional<SweepSpec>& sweep = {}) {
  std::filesystem::create_directories(out);
  if (sweep && experiment != "power-sweep")
    throw std::invalid_argument("--sweep only applies to the power-sweep experiment");

  std::vector<std::string> files;
  if (experiment == "solve") {
    files = run_solve(scn, out);
  } else if (experiment == "convergence-trace") {
    files = run_convergence_trace(scn, out);
  } else if (experiment == "beampattern") {
    files = run_beampattern(scn, out);
  } else if (experiment == "power-sweep") {
    files = run_power_sweep(scn, out, sweep);
  } else if (experiment == "detection-roc") {
    files = run_detection_roc(scn, out);
  } else {
    throw std::invalid_argument("unknown experiment '" + experiment + "'");
  }

  files.push_back("manifest.json");
  nlohmann::json manifest{
      {"scenario_hash", detail::hash_hex(scn)},
      {"version", kVersion},
      {"generated_utc", detail::utc_timestamp()},
      {"experiment", experiment},
      {"files", files},
      {"assumptions",
       {{"backscatter_alpha", scn.backscatter_alpha},
        {"waveform_length", scn.waveform_length},
        {"note", "backscatter efficiency alpha and frame length are scenario assumptions "
                 "with no externally fixed values; results depend on them"}}},
  };
  detail::atomic_write(out, "manifest.json", manifest.dump(2) + "\n");
  return files;
}

}  // namespace bisac
