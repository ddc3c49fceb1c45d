#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace bisac {

using cd = std::complex<double>;
using Eigen::MatrixXcd;
using Eigen::RowVectorXcd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

/// Thrown when a scenario admits no transmit design at all (e.g. zero power
/// budget or a tag SINR floor no beam can reach). Carries the name of the
/// constraint that ruled the scenario out.
class infeasible_scenario_error : public std::runtime_error {
 public:
  infeasible_scenario_error(const std::string& constraint, const std::string& what)
      : std::runtime_error(what), binding_constraint_(constraint) {}
  const std::string& binding_constraint() const { return binding_constraint_; }

 private:
  std::string binding_constraint_;
};

/// Static system description. Angles live at the channel level; everything
/// here is unit-fixed: powers in mW, ratios linear, lengths in samples.
struct SystemConfig {
  int n_tx = 0;                    // AP transmit antennas N_t
  int n_rx = 0;                    // AP receive antennas N_r, >= n_tx
  double noise_tag_mw = 0.0;       // sigma_t^2 at the tag
  double noise_ap_mw = 0.0;        // sigma_ap^2 per AP receive antenna
  double noise_ue_mw = 0.0;        // sigma_u^2 at the UE
  double backscatter_alpha = 0.0;  // tag power-transfer efficiency, in [0, 1]
  double tag_sinr_min = 0.0;       // linear activation threshold at the tag
  double ap_sinr_min = 0.0;        // linear echo threshold at the AP
  double power_budget_mw = 0.0;    // transmit power cap Tr(W W^H)
  int waveform_length = 0;         // frame length L, must exceed n_tx
  double false_alarm = 0.0;        // detector false-alarm target, in (0, 1)

  void validate() const {
    if (n_tx < 1) throw std::invalid_argument("config: n_tx must be at least 1");
    if (n_rx < n_tx) throw std::invalid_argument("config: n_rx must be at least n_tx");
    if (!(noise_tag_mw > 0.0) || !(noise_ap_mw > 0.0) || !(noise_ue_mw > 0.0))
      throw std::invalid_argument("config: noise powers must be positive");
    if (!(backscatter_alpha >= 0.0) || !(backscatter_alpha <= 1.0))
      throw std::invalid_argument("config: backscatter_alpha must lie in [0, 1]");
    if (!(tag_sinr_min > 0.0) || !(ap_sinr_min > 0.0))
      throw std::invalid_argument("config: SINR thresholds must be positive");
    if (!(power_budget_mw >= 0.0))
      throw std::invalid_argument("config: power budget must be non-negative");
    if (waveform_length <= n_tx)
      throw std::invalid_argument("config: waveform_length must exceed n_tx");
    if (!(false_alarm > 0.0) || !(false_alarm < 1.0))
      throw std::invalid_argument("config: false_alarm must lie in (0, 1)");
  }
};

/// The four links of the system. Rows act on transmit beams (y = h * w);
/// the tag->AP link is a receive-side column.
struct ChannelSet {
  RowVectorXcd ap_to_tag;  // h_f, 1 x n_tx forward link
  VectorXcd tag_to_ap;     // h_b, n_rx x 1 backscatter return
  RowVectorXcd ap_to_ue;   // h_u, 1 x n_tx downlink
  cd tag_to_ue{0.0, 0.0};  // h_tu, scalar tag->UE leakage

  void validate(const SystemConfig& cfg) const {
    if (ap_to_tag.size() != cfg.n_tx)
      throw std::invalid_argument("channels: ap_to_tag length must equal n_tx");
    if (ap_to_ue.size() != cfg.n_tx)
      throw std::invalid_argument("channels: ap_to_ue length must equal n_tx");
    if (tag_to_ap.size() != cfg.n_rx)
      throw std::invalid_argument("channels: tag_to_ap length must equal n_rx");
  }
};

/// Transmit design: one UE beam, one tag beam, n_tx probing beams.
/// The assembled matrix fixes the column order [ue, tag, probing...] that
/// every SINR expression and the waveform synthesizer rely on.
struct BeamformingMatrix {
  VectorXcd ue_beam;   // w_u
  VectorXcd tag_beam;  // w_t
  MatrixXcd probing;   // W_s, n_tx x n_tx

  int n_tx() const { return static_cast<int>(ue_beam.size()); }
  int n_streams() const { return n_tx() + 2; }

  MatrixXcd assembled() const {
    MatrixXcd w(n_tx(), n_streams());
    w.col(0) = ue_beam;
    w.col(1) = tag_beam;
    w.rightCols(n_tx()) = probing;
    return w;
  }

  static BeamformingMatrix from_assembled(const MatrixXcd& w) {
    if (w.cols() != w.rows() + 2)
      throw std::invalid_argument("beams: assembled matrix must be n_tx x (n_tx + 2)");
    BeamformingMatrix b;
    b.ue_beam = w.col(0);
    b.tag_beam = w.col(1);
    b.probing = w.rightCols(w.rows());
    return b;
  }

  static BeamformingMatrix zero(int n_tx) {
    BeamformingMatrix b;
    b.ue_beam = VectorXcd::Zero(n_tx);
    b.tag_beam = VectorXcd::Zero(n_tx);
    b.probing = MatrixXcd::Zero(n_tx, n_tx);
    return b;
  }

  double total_power() const {
    return ue_beam.squaredNorm() + tag_beam.squaredNorm() + probing.squaredNorm();
  }

  void validate() const {
    if (tag_beam.size() != ue_beam.size() || probing.rows() != ue_beam.size() ||
        probing.cols() != ue_beam.size())
      throw std::invalid_argument("beams: ue/tag/probing dimensions disagree");
  }
};

/// One SINR evaluation with its constituents kept apart, so tests and traces
/// can point at the term that moved. denominator() reproduces the exact
/// floating-point sum used to form value.
struct SinrBreakdown {
  double value = 0.0;
  double signal = 0.0;
  std::vector<std::pair<std::string, double>> interference;
  double noise = 0.0;

  double denominator() const {
    double d = 0.0;
    for (const auto& [label, power] : interference) d += power;
    return d + noise;
  }
};

}  // namespace bisac
