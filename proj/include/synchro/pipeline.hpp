#pragma once

// Loopback orchestration of emulator -> concentrator -> detector in one
// process. Shutdown order: sender finishes, the receiver drains, then the
// detector is flushed.

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "synchro/archive.hpp"
#include "synchro/concentrator.hpp"
#include "synchro/detector.hpp"
#include "synchro/emulator.hpp"
#include "synchro/trace_analyzer.hpp"

namespace synchro {

struct E2eOptions {
  Archive archive;
  std::string output_dir;  // empty = write nothing
  PacingMode pacing;
  std::uint32_t start_soc = 1'000'000'000;
  Endpoint bind{"127.0.0.1", 0};
  double clock_offset_s = 0.0;
  double clock_jitter_s = 0.0;
  NetworkImpairment impairment;
  DetectorConfig detector;
  std::size_t detect_pmu = 0;  // archive PMU index reduced to 1 Hz
  std::chrono::milliseconds align_wait{50};
  std::chrono::milliseconds drain{300};
  bool write_aligned = false;
  std::optional<Endpoint> event_udp;
  LatencyOptions latency;
};

struct E2eResult {
  PlaybackReport playback;
  StreamStats stats;
  DetectionReport detection;
  std::vector<SecondSample> series;  // detector input, in arrival order
  std::optional<TraceAnalysis> trace;
  std::uint32_t start_soc = 0;
  std::vector<std::string> files;
};

/// Files written to output_dir: send.csv, recv.csv, events.jsonl, plot.csv,
/// series.csv, stats.json and optionally aligned.csv.
E2eResult run_e2e(const E2eOptions& options);

/// 1 Hz series of PMU k taken straight from an archive (rows whose offset is
/// a whole second), as the concentrator would produce it without loss.
std::vector<SecondSample> archive_series(const Archive& archive, std::size_t k,
                                         std::uint32_t start_soc);

void write_series_csv(const std::string& path, const std::vector<SecondSample>& series,
                      double origin);
std::vector<SecondSample> read_series_csv(const std::string& path);

}  // namespace synchro
