#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

#include "bisac/special_functions.hpp"
#include "bisac/types.hpp"

// Closed-form layer: steering vectors, LOS channels, transmit covariance,
// beampatterns, the three SINRs and the detector ROC. Everything here is
// deterministic arithmetic on a given design; no randomness, no iteration.

namespace bisac {

/// Half-wavelength ULA response: element k carries phase pi * k * sin(theta).
/// theta is measured from broadside, in radians.
inline VectorXcd steering_vector(double theta, int n) {
  if (n < 1) throw std::invalid_argument("steering_vector: n must be positive");
  VectorXcd a(n);
  const double s = std::sin(theta);
  for (int k = 0; k < n; ++k) a(k) = std::polar(1.0, std::numbers::pi * k * s);
  return a;
}

/// Single-path channel toward direction theta: fading * steering response.
inline VectorXcd los_channel(cd fading, double theta, int n) {
  return fading * steering_vector(theta, n);
}

/// LOS channel set for one tag and one UE. Transmit-side rows take the
/// adjoint of the steering response so that a matched beam w = a(theta)
/// maximizes |h w|; the receive-side return link keeps the plain response.
inline ChannelSet los_channel_set(const SystemConfig& cfg, double tag_angle, double ue_angle,
                                  cd tag_forward_fading, cd tag_backward_fading,
                                  cd ue_fading, cd tag_to_ue) {
  ChannelSet ch;
  ch.ap_to_tag = tag_forward_fading * steering_vector(tag_angle, cfg.n_tx).adjoint();
  ch.tag_to_ap = tag_backward_fading * steering_vector(tag_angle, cfg.n_rx);
  ch.ap_to_ue = ue_fading * steering_vector(ue_angle, cfg.n_tx).adjoint();
  ch.tag_to_ue = tag_to_ue;
  return ch;
}

/// Long-run transmit covariance W W^H of the assembled design (the frame
/// average (1/L) X X^H converges to this as L grows).
inline MatrixXcd sample_covariance(const BeamformingMatrix& beams) {
  beams.validate();
  MatrixXcd w = beams.assembled();
  return w * w.adjoint();
}

/// Radiated power a^H(theta) R a(theta) of a covariance in direction theta.
/// R must be Hermitian; tolerance 1e-10 on the worst entry mismatch.
inline double beampattern(const MatrixXcd& covariance, double theta) {
  if (covariance.rows() != covariance.cols())
    throw std::invalid_argument("beampattern: covariance must be square");
  double herm_gap = (covariance - covariance.adjoint()).cwiseAbs().maxCoeff();
  if (!(herm_gap <= 1e-10))
    throw std::invalid_argument("beampattern: covariance is not Hermitian");
  VectorXcd a = steering_vector(theta, static_cast<int>(covariance.rows()));
  return std::real(cd(a.adjoint() * covariance * a));
}

/// Receive combiner matched to the return link: w_r = h_b^H / ||h_b||.
inline RowVectorXcd equal_gain_combiner(const VectorXcd& tag_to_ap) {
  double norm = tag_to_ap.norm();
  if (!(norm > 0.0))
    throw std::invalid_argument("equal_gain_combiner: return channel is zero");
  return tag_to_ap.adjoint() / norm;
}

/// SINR of the tag's energy detector input: the tag beam against the UE
/// beam, the probing beams and its own noise floor.
inline SinrBreakdown sinr_tag(const BeamformingMatrix& beams, const ChannelSet& ch,
                              const SystemConfig& cfg) {
  SinrBreakdown b;
  b.signal = std::norm(cd(ch.ap_to_tag * beams.tag_beam));
  b.interference.emplace_back("ue_beam", std::norm(cd(ch.ap_to_tag * beams.ue_beam)));
  b.interference.emplace_back("probing", (ch.ap_to_tag * beams.probing).squaredNorm());
  b.noise = cfg.noise_tag_mw;
  b.value = b.signal / b.denominator();
  return b;
}

/// SINR of the backscattered frame after receive combining at the AP. The
/// whole transmit frame is useful signal here; the only impairments are the
/// tag's own noise re-radiated through the return link and AP receiver noise.
inline SinrBreakdown sinr_ap(const BeamformingMatrix& beams, const ChannelSet& ch,
                             const SystemConfig& cfg, const RowVectorXcd& combiner) {
  const double alpha = cfg.backscatter_alpha;
  const double link_gain = std::norm(cd(combiner * ch.tag_to_ap));  // |w_r h_b|^2
  SinrBreakdown b;
  b.signal = alpha * link_gain * (ch.ap_to_tag * beams.assembled()).squaredNorm();
  b.interference.emplace_back("tag_noise_echo", alpha * link_gain * cfg.noise_tag_mw);
  b.noise = combiner.squaredNorm() * cfg.noise_ap_mw;
  b.value = b.signal / b.denominator();
  return b;
}

inline SinrBreakdown sinr_ap(const BeamformingMatrix& beams, const ChannelSet& ch,
                             const SystemConfig& cfg) {
  return sinr_ap(beams, ch, cfg, equal_gain_combiner(ch.tag_to_ap));
}

namespace detail {

/// Everything below the UE's signal term: direct interference from the tag
/// and probing beams plus the tag's backscatter of the whole frame. Shared
/// verbatim by sinr_ue and the rate objective so both see the identical
/// floating-point denominator.
inline SinrBreakdown ue_denominator_terms(const BeamformingMatrix& beams, const ChannelSet& ch,
                                          const SystemConfig& cfg) {
  const double leak = cfg.backscatter_alpha * std::norm(ch.tag_to_ue);  // alpha |h_tu|^2
  SinrBreakdown b;
  b.interference.emplace_back("tag_beam", std::norm(cd(ch.ap_to_ue * beams.tag_beam)));
  b.interference.emplace_back("probing", (ch.ap_to_ue * beams.probing).squaredNorm());
  b.interference.emplace_back("tag_backscatter",
                              leak * (ch.ap_to_tag * beams.assembled()).squaredNorm());
  b.interference.emplace_back("tag_noise_backscatter", leak * cfg.noise_tag_mw);
  b.noise = cfg.noise_ue_mw;
  return b;
}

}  // namespace detail

/// Downlink SINR at the UE.
inline SinrBreakdown sinr_ue(const BeamformingMatrix& beams, const ChannelSet& ch,
                             const SystemConfig& cfg) {
  SinrBreakdown b = detail::ue_denominator_terms(beams, ch, cfg);
  b.signal = std::norm(cd(ch.ap_to_ue * beams.ue_beam));
  b.value = b.signal / b.denominator();
  return b;
}

/// Spectral efficiency of a Gaussian link at the given SINR, bits/s/Hz.
inline double rate(double sinr) {
  if (!(sinr >= 0.0)) throw std::invalid_argument("rate: SINR must be non-negative");
  return std::log1p(sinr) / std::numbers::ln2;
}

/// Detection probability of the AP's echo test at false-alarm target p_f
/// when the combined echo SINR is sinr_ap.
inline double detection_probability(double sinr_ap, double p_f) {
  if (!(sinr_ap >= 0.0))
    throw std::invalid_argument("detection_probability: SINR must be non-negative");
  if (!(p_f > 0.0) || !(p_f < 1.0))
    throw std::invalid_argument("detection_probability: p_f must lie in (0, 1)");
  return 0.5 * erfc(erfc_inv(2.0 * p_f) - std::sqrt(sinr_ap));
}

}  // namespace bisac
