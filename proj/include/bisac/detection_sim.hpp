#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "bisac/model.hpp"
#include "bisac/types.hpp"

// Monte-Carlo side of the tag-presence test. Finite-length frames are
// synthesized, pushed through the backscatter link with fresh noise per
// trial, and correlated against the known echo template; the threshold is
// calibrated empirically to the target false-alarm rate.

namespace bisac {

enum class Hypothesis { h0, h1 };

struct DetectorSample {
  double statistic = 0.0;
  Hypothesis hypothesis = Hypothesis::h0;
};

namespace detail {

// Stateless seed derivation: every (seed, tag, index) triple owns an
// independent engine, so trial i's draws do not depend on how many trials
// ran before it and parallel schedules reproduce serial results.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::mt19937_64 trial_engine(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed ^ 0xd1b54a32d192ed03ull * tag) + index));
}

constexpr std::uint64_t stream_tag = 1;
constexpr std::uint64_t h0_tag = 2;
constexpr std::uint64_t h1_tag = 3;

}  // namespace detail

/// Augmented stream frame: two unit-modulus random data rows on top,
/// followed by n_t probing rows taken from distinct complex-exponential
/// sequences, which are exactly orthogonal over the frame and unit power.
inline MatrixXcd synthesize_streams(int n_t, int length, std::uint64_t seed) {
  if (n_t < 1) throw std::invalid_argument("synthesize_streams: need at least one antenna");
  if (length <= n_t + 2)
    throw std::invalid_argument("synthesize_streams: frame shorter than the stream count");
  MatrixXcd s(n_t + 2, length);
  std::mt19937_64 rng = detail::trial_engine(seed, detail::stream_tag, 0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  for (int r = 0; r < 2; ++r)
    for (int l = 0; l < length; ++l) s(r, l) = std::polar(1.0, phase(rng));
  const double step = 2.0 * std::numbers::pi / length;
  for (int k = 0; k < n_t; ++k)
    for (int l = 0; l < length; ++l)
      s(2 + k, l) = std::polar(1.0, -step * static_cast<double>((k + 1)) * l);
  return s;
}

struct WaveformRealization {
  MatrixXcd streams;   // (n_t + 2) x L
  MatrixXcd transmit;  // n_t x L, equals beams * streams
  std::uint64_t seed = 0;
};

inline WaveformRealization make_waveform(const BeamformingMatrix& beams, int length,
                                         std::uint64_t seed) {
  WaveformRealization w;
  w.streams = synthesize_streams(beams.n_tx(), length, seed);
  w.transmit = beams.assembled() * w.streams;
  w.seed = seed;
  return w;
}

/// Per-trial detector statistics under the requested hypothesis. The tag
/// symbol c is a known unit-modulus pilot drawn fresh per trial; it scales
/// the template along with the physics, so the test is coherent. Under H1
/// the tag scatters its received frame (probing included) plus its own
/// noise; the AP applies the matched combiner and correlates with the
/// known echo template.
inline std::vector<DetectorSample> simulate_statistics(const BeamformingMatrix& beams,
                                                       const ChannelSet& ch,
                                                       const SystemConfig& cfg, int n_trials,
                                                       Hypothesis hyp, std::uint64_t seed) {
  cfg.validate();
  ch.validate(cfg);
  if (n_trials < 1) throw std::invalid_argument("simulate_statistics: need at least one trial");
  const int length = cfg.waveform_length;

  const MatrixXcd s = synthesize_streams(cfg.n_tx, length, seed);
  const RowVectorXcd incident = (ch.ap_to_tag * beams.assembled()) * s;  // tag's noise-free input
  const RowVectorXcd w_r = equal_gain_combiner(ch.tag_to_ap);
  const cd combined_gain = cd(w_r * ch.tag_to_ap);  // equals ||h_b||, real positive
  const double root_alpha = std::sqrt(cfg.backscatter_alpha);
  // template: root_alpha * combined_gain * incident, scaled per trial by the pilot
  const RowVectorXcd echo_template = (root_alpha * combined_gain) * incident;

  const double ap_sigma = std::sqrt(cfg.noise_ap_mw / 2.0);  // per real component
  const double tag_sigma = std::sqrt(cfg.noise_tag_mw / 2.0);
  const std::uint64_t tag = hyp == Hypothesis::h0 ? detail::h0_tag : detail::h1_tag;

  std::vector<DetectorSample> out(static_cast<std::size_t>(n_trials));
  for (int t = 0; t < n_trials; ++t) {
    std::mt19937_64 rng = detail::trial_engine(seed, tag, static_cast<std::uint64_t>(t) + 1);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> ap_noise(0.0, ap_sigma);
    std::normal_distribution<double> tag_noise(0.0, tag_sigma);
    const cd pilot = std::polar(1.0, phase(rng));

    cd acc = 0.0;  // correlation of the combined row with the echo template
    if (hyp == Hypothesis::h0) {
      for (int l = 0; l < length; ++l) {
        const cd combined(ap_noise(rng), ap_noise(rng));  // w_r applied to i.i.d. AP noise
        acc += combined * std::conj(echo_template(l));
      }
    } else {
      const cd scatter = root_alpha * pilot * combined_gain;
      for (int l = 0; l < length; ++l) {
        const cd tag_rx = incident(l) + cd(tag_noise(rng), tag_noise(rng));
        const cd combined = scatter * tag_rx + cd(ap_noise(rng), ap_noise(rng));
        acc += combined * std::conj(echo_template(l));
      }
    }
    out[t].statistic = std::real(acc * std::conj(pilot));
    out[t].hypothesis = hyp;
  }
  return out;
}

/// Empirical detection threshold: the (1 - p_f) quantile of tag-absent
/// statistics, so the exceedance rate hits the false-alarm target by
/// construction.
inline double calibrate_eta(const std::vector<DetectorSample>& h0_samples, double p_f) {
  if (!(p_f > 0.0) || !(p_f < 1.0))
    throw std::invalid_argument("calibrate_eta: p_f must lie in (0, 1)");
  const auto n = h0_samples.size();
  if (static_cast<double>(n) * p_f < 100.0)
    throw std::invalid_argument("calibrate_eta: too few samples for the requested p_f");
  std::vector<double> stats(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (h0_samples[i].hypothesis != Hypothesis::h0)
      throw std::invalid_argument("calibrate_eta: samples must be tag-absent");
    stats[i] = h0_samples[i].statistic;
  }
  const auto keep_above = static_cast<std::size_t>(std::llround(p_f * static_cast<double>(n)));
  const std::size_t idx = n - 1 - std::min(keep_above, n - 1);
  std::nth_element(stats.begin(), stats.begin() + static_cast<std::ptrdiff_t>(idx), stats.end());
  return stats[idx];
}

struct PdEstimate {
  double value = 0.0;
  double half_width = 0.0;  // three-sigma binomial band
  double eta = 0.0;
};

/// Monte-Carlo detection probability at an empirically calibrated
/// threshold. H0 and H1 batches use hypothesis-tagged sub-seeds, so one
/// seed reproduces the whole experiment.
inline PdEstimate empirical_pd(const BeamformingMatrix& beams, const ChannelSet& ch,
                               const SystemConfig& cfg, double p_f, int n_trials,
                               std::uint64_t seed) {
  if (n_trials < 10000)
    throw std::invalid_argument("empirical_pd: need at least 10^4 trials");
  const auto h0 = simulate_statistics(beams, ch, cfg, n_trials, Hypothesis::h0, seed);
  PdEstimate est;
  est.eta = calibrate_eta(h0, p_f);
  const auto h1 = simulate_statistics(beams, ch, cfg, n_trials, Hypothesis::h1, seed);
  int hits = 0;
  for (const auto& s : h1) hits += s.statistic > est.eta ? 1 : 0;
  est.value = static_cast<double>(hits) / static_cast<double>(n_trials);
  est.half_width = 3.0 * std::sqrt(est.value * (1.0 - est.value) / static_cast<double>(n_trials));
  return est;
}

}  // namespace bisac
