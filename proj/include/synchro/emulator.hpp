#pragma once

// PMU-side playback: turns archive rows into paced C37.118 data frames on a
// UDP socket and records a send timestamp per frame.

#include <chrono>
#include <cstdint>
#include <set>
#include <stop_token>
#include <vector>

#include "synchro/archive.hpp"
#include "synchro/frame_codec.hpp"
#include "synchro/trace_log.hpp"
#include "synchro/udp_socket.hpp"

namespace synchro {

enum class Pacing {
  Realtime,  // one row every 1/fps seconds (divided by `speed`)
  MaxRate,   // as fast as the socket accepts
};

struct PacingMode {
  Pacing kind = Pacing::Realtime;
  double speed = 1.0;  // > 1 compresses the realtime schedule
};

// Losses and duplicates injected between the send log and the wire, so the
// send log still lists every frame the PMU produced.
struct NetworkImpairment {
  std::set<std::uint64_t> drop_seqs;
  std::set<std::uint64_t> duplicate_seqs;
  double loss_probability = 0.0;
  double duplicate_probability = 0.0;
  std::uint64_t seed = 1;
};

struct PlaybackPlan {
  ConfigFrame cfg;  // one PMU block per stream; each PMU is sent as its own stream
  std::vector<ArchiveRow> rows;
  int fps = 60;
  Endpoint destination;
  std::uint32_t start_soc = 1'000'000'000;
  double clock_offset_s = 0.0;  // simulated sender clock skew
  double clock_jitter_s = 0.0;  // Gaussian std of per-frame timestamp noise
  std::uint64_t jitter_seed = 11;
  bool broadcast = false;
  Endpoint local{"0.0.0.0", 0};
  NetworkImpairment impairment;

  // Command handling on the sending socket: config/header requests are
  // answered, turn-off stops playback.
  bool serve_commands = false;
  bool wait_for_turn_on = false;
  std::chrono::milliseconds turn_on_timeout{5000};

  std::string header_text = "synchro PMU emulator";
};

struct PlaybackReport {
  std::size_t rows_played = 0;
  std::size_t frames_sent = 0;  // logged frames, before impairment
  std::size_t datagrams_transmitted = 0;
  std::vector<SendLogEntry> send_log;
  double wall_duration_s = 0.0;
  std::size_t pacing_overruns = 0;  // rows sent > 2 ms after their deadline
  double max_lateness_s = 0.0;
  bool stopped_by_command = false;
};

struct FrameStamp {
  std::uint32_t soc = 0;
  std::uint32_t frac_sec = 0;
};

/// Timestamp of row `index`: start_soc plus the row offset, in time_base
/// counts. Requires time_base to be a multiple of fps.
FrameStamp stamp_for_row(std::uint32_t start_soc, std::size_t index, int fps,
                         std::uint32_t time_base);

/// Data frame for PMU k of `row` under that PMU's stream configuration.
DataFrame make_data_frame(const ConfigFrame& stream_cfg, const ArchiveRow& row, std::size_t k,
                          FrameStamp stamp);

/// Runs one playback. Blocks until every row is sent, the stop token fires,
/// or a turn-off command arrives. Throws SocketError on socket failures and
/// std::invalid_argument for an inconsistent plan.
PlaybackReport play(const PlaybackPlan& plan, PacingMode pacing, std::stop_token stop = {});

/// Bound socket for a plan, exposed so callers can learn the command port
/// before playback starts. play() creates its own socket when not given one.
UdpSocket open_playback_socket(const PlaybackPlan& plan);
PlaybackReport play(UdpSocket& socket, const PlaybackPlan& plan, PacingMode pacing,
                    std::stop_token stop = {});

}  // namespace synchro
