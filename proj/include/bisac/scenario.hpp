#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "bisac/model.hpp"
#include "bisac/optimizer.hpp"
#include "bisac/types.hpp"
#include "bisac/units.hpp"

// Experiment inputs as a flat key = value text format. Units live in the
// key names (dBm, dB, degrees), values are plain numbers, '#' starts a
// comment. Parsing is strict: unknown or repeated keys are rejected, and
// serialization is canonical so identical scenarios hash identically.

namespace bisac {

class scenario_parse_error : public std::runtime_error {
 public:
  explicit scenario_parse_error(const std::string& what) : std::runtime_error(what) {}
};

struct Scenario {
  int n_tx = 16;
  int n_rx = 16;
  double noise_ap_dbm = -40.0;
  double noise_tag_dbm = -40.0;
  double noise_ue_dbm = -40.0;
  double theta_tag_deg = 45.0;
  double theta_ue_deg = 126.0;
  double fading_forward = 0.8;
  double fading_backward = 0.8;
  double fading_ue = 0.8;
  double tag_ue_gain = 0.5;
  double backscatter_alpha = 0.5;
  double p_t_dbm = 0.0;
  double gamma_tth_db = 15.0;
  double gamma_apth_db = 12.0;
  double false_alarm = 0.1;
  int waveform_length = 1024;
  int trials = 100000;
  std::uint64_t seed = 1;
  double inner_tol = 1e-4;
  int max_inner = 50;
  double outer_tol = 1e-5;
  int max_outer = 30;
};

namespace detail {

using ScenarioField =
    std::variant<double Scenario::*, int Scenario::*, std::uint64_t Scenario::*>;

struct ScenarioEntry {
  std::string_view key;
  ScenarioField field;
};

/// Canonical key order; serialization emits exactly these lines.
inline const std::vector<ScenarioEntry>& scenario_fields() {
  static const std::vector<ScenarioEntry> table = {
      {"n_tx", &Scenario::n_tx},
      {"n_rx", &Scenario::n_rx},
      {"noise_ap_dbm", &Scenario::noise_ap_dbm},
      {"noise_tag_dbm", &Scenario::noise_tag_dbm},
      {"noise_ue_dbm", &Scenario::noise_ue_dbm},
      {"theta_tag_deg", &Scenario::theta_tag_deg},
      {"theta_ue_deg", &Scenario::theta_ue_deg},
      {"fading_forward", &Scenario::fading_forward},
      {"fading_backward", &Scenario::fading_backward},
      {"fading_ue", &Scenario::fading_ue},
      {"tag_ue_gain", &Scenario::tag_ue_gain},
      {"backscatter_alpha", &Scenario::backscatter_alpha},
      {"p_t_dbm", &Scenario::p_t_dbm},
      {"gamma_tth_db", &Scenario::gamma_tth_db},
      {"gamma_apth_db", &Scenario::gamma_apth_db},
      {"false_alarm", &Scenario::false_alarm},
      {"waveform_length", &Scenario::waveform_length},
      {"trials", &Scenario::trials},
      {"seed", &Scenario::seed},
      {"inner_tol", &Scenario::inner_tol},
      {"max_inner", &Scenario::max_inner},
      {"outer_tol", &Scenario::outer_tol},
      {"max_outer", &Scenario::max_outer},
  };
  return table;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

template <typename T>
T parse_number(std::string_view text, std::string_view key) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw scenario_parse_error("scenario: bad value for '" + std::string(key) + "': '" +
                               std::string(text) + "'");
  return value;
}

inline std::string format_number(double v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

template <typename T>
std::string format_number(T v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace detail

/// Parses scenario text; keys may appear in any order, each at most once,
/// and every key must be known. Missing keys keep their defaults.
inline Scenario parse_scenario(std::string_view text) {
  Scenario sc;
  std::vector<bool> seen(detail::scenario_fields().size(), false);
  std::size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    const std::size_t eol = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos)
      line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw scenario_parse_error("scenario: line " + std::to_string(line_no) +
                                 " is not 'key = value'");
    const std::string_view key = detail::trim(line.substr(0, eq));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw scenario_parse_error("scenario: line " + std::to_string(line_no) +
                                 " has an empty key or value");

    const auto& table = detail::scenario_fields();
    std::size_t idx = table.size();
    for (std::size_t i = 0; i < table.size(); ++i)
      if (table[i].key == key) {
        idx = i;
        break;
      }
    if (idx == table.size())
      throw std::invalid_argument("scenario: unknown key '" + std::string(key) + "'");
    if (seen[idx])
      throw std::invalid_argument("scenario: key '" + std::string(key) + "' given twice");
    seen[idx] = true;

    std::visit(
        [&](auto member) {
          using T = std::remove_reference_t<decltype(sc.*member)>;
          sc.*member = detail::parse_number<T>(value, key);
        },
        table[idx].field);
  }
  return sc;
}

/// Canonical text form: every key once, fixed order, shortest round-trip
/// number formatting, LF line ends.
inline std::string serialize_scenario(const Scenario& sc) {
  std::string out;
  for (const auto& entry : detail::scenario_fields()) {
    out += entry.key;
    out += " = ";
    std::visit([&](auto member) { out += detail::format_number(sc.*member); }, entry.field);
    out += '\n';
  }
  return out;
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Stable content hash of the canonical serialization.
inline std::uint64_t scenario_hash(const Scenario& sc) {
  return fnv1a64(serialize_scenario(sc));
}

inline SystemConfig to_config(const Scenario& sc) {
  SystemConfig cfg;
  cfg.n_tx = sc.n_tx;
  cfg.n_rx = sc.n_rx;
  cfg.noise_ap_mw = dbm_to_mw(sc.noise_ap_dbm);
  cfg.noise_tag_mw = dbm_to_mw(sc.noise_tag_dbm);
  cfg.noise_ue_mw = dbm_to_mw(sc.noise_ue_dbm);
  cfg.backscatter_alpha = sc.backscatter_alpha;
  cfg.tag_sinr_min = db_to_linear(sc.gamma_tth_db);
  cfg.ap_sinr_min = db_to_linear(sc.gamma_apth_db);
  cfg.power_budget_mw = dbm_to_mw(sc.p_t_dbm);
  cfg.waveform_length = sc.waveform_length;
  cfg.false_alarm = sc.false_alarm;
  cfg.validate();
  return cfg;
}

inline ChannelSet to_channels(const Scenario& sc, const SystemConfig& cfg) {
  if (!(sc.fading_forward >= 0.0) || !(sc.fading_backward >= 0.0) || !(sc.fading_ue >= 0.0))
    throw std::invalid_argument("scenario: fading coefficients must be non-negative");
  return los_channel_set(cfg, deg_to_rad(sc.theta_tag_deg), deg_to_rad(sc.theta_ue_deg),
                         sc.fading_forward, sc.fading_backward, sc.fading_ue,
                         cd(sc.tag_ue_gain, 0.0));
}

inline StoppingRule to_stopping_rule(const Scenario& sc) {
  StoppingRule rule;
  rule.inner_tol = sc.inner_tol;
  rule.max_inner = sc.max_inner;
  rule.outer_tol = sc.outer_tol;
  rule.max_outer = sc.max_outer;
  rule.validate();
  return rule;
}

}  // namespace bisac
