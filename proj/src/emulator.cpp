#include "synchro/emulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <random>
#include <stdexcept>
#include <thread>

namespace synchro {
namespace {

using Clock = std::chrono::steady_clock;

constexpr auto kOverrunThreshold = std::chrono::milliseconds(2);

void validate(const PlaybackPlan& plan, PacingMode pacing) {
  if (plan.fps <= 0) throw std::invalid_argument("playback fps must be positive");
  if (plan.cfg.data_rate != plan.fps) {
    throw std::invalid_argument("playback fps " + std::to_string(plan.fps) +
                                " differs from config data_rate " +
                                std::to_string(plan.cfg.data_rate));
  }
  if (plan.cfg.time_base % static_cast<std::uint32_t>(plan.fps) != 0) {
    throw std::invalid_argument("time_base must be a multiple of fps");
  }
  if (plan.cfg.pmus.empty()) throw std::invalid_argument("config has no PMU blocks");
  for (const auto& row : plan.rows) {
    if (row.pmus.size() != plan.cfg.pmus.size()) {
      throw std::invalid_argument("archive row PMU count differs from config");
    }
  }
  if (pacing.kind == Pacing::Realtime && !(pacing.speed > 0.0)) {
    throw std::invalid_argument("pacing speed must be positive");
  }
}

class CommandServer {
 public:
  CommandServer(UdpSocket& socket, const PlaybackPlan& plan, const std::vector<ConfigFrame>& streams)
      : socket_(socket), plan_(plan), streams_(streams) {}

  // Services datagrams until `deadline`; returns early once a turn-on or
  // turn-off arrives when `until_state_change` is set.
  void serve_until(Clock::time_point deadline, bool until_state_change) {
    std::array<std::uint8_t, 2048> buf{};
    while (true) {
      // poll() has millisecond granularity; the sub-millisecond remainder is
      // slept so deadlines are not overshot.
      const auto left = std::chrono::floor<std::chrono::milliseconds>(deadline - Clock::now());
      auto dg = socket_.receive(buf, std::max(left, std::chrono::milliseconds(0)));
      if (dg) {
        const bool changed = handle(std::span(buf.data(), dg->size), dg->from);
        if (changed && until_state_change) return;
        continue;
      }
      if (left.count() <= 0) {
        std::this_thread::sleep_until(deadline);
        return;
      }
    }
  }

  bool transmitting() const { return transmitting_; }
  bool stopped() const { return stopped_; }

 private:
  bool handle(std::span<const std::uint8_t> bytes, const Endpoint& from) {
    CommandFrame cmd;
    try {
      auto frame = decode(bytes);
      const auto* c = std::get_if<CommandFrame>(&frame);
      if (c == nullptr) return false;
      cmd = *c;
    } catch (const CodecError& e) {
      std::cerr << "emulator: ignoring bad command datagram: " << e.what() << '\n';
      return false;
    }
    switch (cmd.command) {
      case CommandCode::TurnOnTransmission:
        transmitting_ = true;
        return true;
      case CommandCode::TurnOffTransmission:
        stopped_ = true;
        return true;
      case CommandCode::SendConfig1:
      case CommandCode::SendConfig2:
        for (const auto& s : streams_) {
          if (s.header.id_code == cmd.header.id_code) {
            ConfigFrame reply = s;
            reply.revision = cmd.command == CommandCode::SendConfig1 ? ConfigRevision::Cfg1
                                                                     : ConfigRevision::Cfg2;
            reply.header.soc = plan_.start_soc;
            socket_.send_to(encode(reply), from);
          }
        }
        return false;
      case CommandCode::SendHeader: {
        HeaderFrame hdr;
        hdr.header.id_code = cmd.header.id_code;
        hdr.header.soc = plan_.start_soc;
        hdr.text = plan_.header_text;
        socket_.send_to(encode(hdr), from);
        return false;
      }
    }
    return false;
  }

  UdpSocket& socket_;
  const PlaybackPlan& plan_;
  const std::vector<ConfigFrame>& streams_;
  bool transmitting_ = false;
  bool stopped_ = false;
};

}  // namespace

FrameStamp stamp_for_row(std::uint32_t start_soc, std::size_t index, int fps,
                         std::uint32_t time_base) {
  const auto per_frame = time_base / static_cast<std::uint32_t>(fps);
  const auto fps_u = static_cast<std::size_t>(fps);
  return FrameStamp{static_cast<std::uint32_t>(start_soc + index / fps_u),
                    static_cast<std::uint32_t>((index % fps_u) * per_frame)};
}

DataFrame make_data_frame(const ConfigFrame& stream_cfg, const ArchiveRow& row, std::size_t k,
                          FrameStamp stamp) {
  DataFrame df;
  df.header.id_code = stream_cfg.header.id_code;
  df.header.soc = stamp.soc;
  df.header.frac_sec = stamp.frac_sec;
  df.pmus.push_back(to_pmu_data(record_from_row(row, k), stream_cfg.pmus.front()));
  return df;
}

UdpSocket open_playback_socket(const PlaybackPlan& plan) {
  UdpSocket sock;
  sock.bind(plan.local);
  if (plan.broadcast) sock.set_broadcast(true);
  return sock;
}

PlaybackReport play(const PlaybackPlan& plan, PacingMode pacing, std::stop_token stop) {
  UdpSocket sock = open_playback_socket(plan);
  return play(sock, plan, pacing, std::move(stop));
}

PlaybackReport play(UdpSocket& sock, const PlaybackPlan& plan, PacingMode pacing,
                    std::stop_token stop) {
  validate(plan, pacing);
  std::vector<ConfigFrame> streams;
  for (std::size_t k = 0; k < plan.cfg.pmus.size(); ++k) {
    streams.push_back(stream_config(plan.cfg, k));
  }
  CommandServer commands(sock, plan, streams);

  PlaybackReport report;
  report.send_log.reserve(plan.rows.size() * streams.size());

  if (plan.wait_for_turn_on) {
    const auto deadline = Clock::now() + plan.turn_on_timeout;
    while (!commands.transmitting() && !commands.stopped() && !stop.stop_requested() &&
           Clock::now() < deadline) {
      commands.serve_until(std::min(deadline, Clock::now() + std::chrono::milliseconds(50)), true);
    }
    if (!commands.transmitting()) {
      throw SocketError("no turn-on command received within " +
                        std::to_string(plan.turn_on_timeout.count()) + " ms");
    }
  }

  const auto offset_ns = static_cast<std::int64_t>(std::llround(plan.clock_offset_s * 1e9));
  std::mt19937_64 jitter_rng(plan.jitter_seed);
  std::normal_distribution<double> jitter(0.0, plan.clock_jitter_s > 0 ? plan.clock_jitter_s : 1.0);
  std::mt19937_64 net_rng(plan.impairment.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  const auto period = std::chrono::duration<double>(1.0 / (plan.fps * pacing.speed));
  const auto t0 = Clock::now();
  std::uint64_t seq = 0;

  for (std::size_t i = 0; i < plan.rows.size(); ++i) {
    if (stop.stop_requested() || commands.stopped()) break;
    if (pacing.kind == Pacing::Realtime) {
      const auto deadline =
          t0 + std::chrono::duration_cast<Clock::duration>(period * static_cast<double>(i));
      if (plan.serve_commands) {
        commands.serve_until(deadline, false);
        if (commands.stopped()) break;
      } else {
        std::this_thread::sleep_until(deadline);
      }
      const auto late = Clock::now() - deadline;
      if (late > kOverrunThreshold) ++report.pacing_overruns;
      report.max_lateness_s =
          std::max(report.max_lateness_s, std::chrono::duration<double>(late).count());
    } else if (plan.serve_commands) {
      commands.serve_until(Clock::now(), false);
    }

    const FrameStamp stamp = stamp_for_row(plan.start_soc, i, plan.fps, plan.cfg.time_base);
    for (std::size_t k = 0; k < streams.size(); ++k) {
      const auto bytes = encode(make_data_frame(streams[k], plan.rows[i], k, stamp), streams[k]);
      std::int64_t ts = wall_clock_ns() + offset_ns;
      if (plan.clock_jitter_s > 0) ts += static_cast<std::int64_t>(std::llround(jitter(jitter_rng) * 1e9));
      report.send_log.push_back(
          SendLogEntry{seq, FrameIdentity{streams[k].header.id_code, stamp.soc, stamp.frac_sec}, ts});

      const auto& imp = plan.impairment;
      const bool drop = imp.drop_seqs.contains(seq) ||
                        (imp.loss_probability > 0 && coin(net_rng) < imp.loss_probability);
      const bool dup = imp.duplicate_seqs.contains(seq) ||
                       (imp.duplicate_probability > 0 && coin(net_rng) < imp.duplicate_probability);
      if (!drop) {
        sock.send_to(bytes, plan.destination);
        ++report.datagrams_transmitted;
        if (dup) {
          sock.send_to(bytes, plan.destination);
          ++report.datagrams_transmitted;
        }
      }
      ++report.frames_sent;
      ++seq;
    }
    ++report.rows_played;
  }

  report.wall_duration_s = std::chrono::duration<double>(Clock::now() - t0).count();
  report.stopped_by_command = commands.stopped();
  if (report.pacing_overruns > 0) {
    std::cerr << "emulator: " << report.pacing_overruns << " rows sent more than 2 ms late (max "
              << report.max_lateness_s * 1e3 << " ms)\n";
  }
  return report;
}

}  // namespace synchro
