#pragma once

// Archived PMU measurements in the documented CSV layout:
//
//   t_s,pmu1_freq_hz,pmu1_rocof_hzps,pmu1_vmag_v,pmu1_vang_rad[,pmu2_...]
//
// plus a generator for synthetic archives with an injected frequency event.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "synchro/frame_codec.hpp"

namespace synchro {

struct PmuSample {
  double frequency_hz = 60.0;
  double rocof_hzps = 0.0;
  double vmag_v = 0.0;
  double vang_rad = 0.0;

  bool operator==(const PmuSample&) const = default;
};

struct ArchiveRow {
  double t = 0.0;  // seconds from archive start
  std::vector<PmuSample> pmus;

  bool operator==(const ArchiveRow&) const = default;
};

class ArchiveError : public std::runtime_error {
 public:
  enum class Kind { Io, Parse, NonMonotonicTime, NonUniformSpacing };

  ArchiveError(Kind kind, std::size_t line, const std::string& what);
  Kind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

 private:
  Kind kind_;
  std::size_t line_;
};

struct StreamLayout {
  std::uint16_t id_code_base = 1;  // PMU k (0-based) gets id_code_base + k
  std::string station_prefix = "PMU";
};

/// Configuration for `num_pmus` PMUs at `fps`: one block per PMU with three
/// float32 polar voltage phasors (A/B/C), float32 FREQ/DFREQ, no analogs and
/// one digital status word. A single-PMU data frame is 52 bytes.
ConfigFrame make_config(std::size_t num_pmus, int fps, bool nominal_50hz = false,
                        const StreamLayout& layout = {});

/// time_base used by make_config: an exact multiple of the frame rate so
/// consecutive frames differ by an integral number of counts.
std::uint32_t time_base_for(int fps);

/// Single-PMU configuration for stream k of a multi-PMU configuration; the
/// header id_code is the PMU's own id_code.
ConfigFrame stream_config(const ConfigFrame& cfg, std::size_t k);

struct Archive {
  std::vector<ArchiveRow> rows;
  int fps = 0;
  ConfigFrame cfg;

  std::size_t num_pmus() const { return cfg.pmus.size(); }
  double span_s() const { return fps > 0 ? static_cast<double>(rows.size()) / fps : 0.0; }
};

/// Parses and validates an archive. `fps` overrides the rate inferred from
/// the timestamp spacing (required for single-row archives).
Archive load_archive(const std::string& path, std::optional<int> fps = std::nullopt,
                     const StreamLayout& layout = {});
Archive parse_archive(std::istream& in, std::optional<int> fps = std::nullopt,
                      const StreamLayout& layout = {});

void write_archive(std::ostream& out, const std::vector<ArchiveRow>& rows);
void write_archive(const std::string& path, const std::vector<ArchiveRow>& rows);

struct FrequencyEvent {
  double onset_s = 148.0;
  double step_hz = -0.05;
  // Exponential recovery time constant; 0 keeps the step permanent.
  double recovery_tau_s = 0.0;
};

struct SynthParams {
  double duration_s = 3600.0;
  int fps = 60;
  double base_freq_hz = 60.0;
  double noise_std_hz = 0.001;
  std::optional<FrequencyEvent> event;
  std::uint64_t seed = 7;
  std::size_t num_pmus = 1;
  double vmag_v = 79'674.3;  // 138 kV line-to-neutral
  double nominal_hz = 60.0;
};

/// Noise-free frequency trajectory at time t (step + optional recovery).
double clean_frequency(const SynthParams& params, double t);

/// Deterministic for a given seed.
std::vector<ArchiveRow> synthesize(const SynthParams& params);

/// Engineering record for PMU k of an archive row: phasor A carries the
/// archived magnitude/angle, B and C are rotated by -/+120 degrees.
MeasurementRecord record_from_row(const ArchiveRow& row, std::size_t k);

}  // namespace synchro
