#pragma once

// PDC-side receiver: timestamps datagrams at socket read, decodes them,
// drops duplicates, time-aligns PMU streams and reduces one stream to the
// 1 Hz series the detector consumes.

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "synchro/frame_codec.hpp"
#include "synchro/series.hpp"
#include "synchro/trace_log.hpp"
#include "synchro/udp_socket.hpp"

namespace synchro {

// ---------------------------------------------------------------------------
// Deduplication

/// Bounded set of recently seen identities. An identity that reappears after
/// it was evicted is admitted again.
class Deduplicator {
 public:
  explicit Deduplicator(std::size_t capacity);

  /// true = keep (first sighting within the window), false = duplicate.
  bool admit(const FrameIdentity& id);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::size_t capacity_;
  std::deque<FrameIdentity> order_;
  std::unordered_set<FrameIdentity, FrameIdentityHash> seen_;
};

/// Window capacity covering `seconds` of frames for `streams` streams.
std::size_t dedup_capacity(int fps, std::size_t streams, double seconds = 2.0);

// ---------------------------------------------------------------------------
// Alignment

struct AlignedRecord {
  std::uint32_t soc = 0;
  std::uint32_t frac_sec = 0;
  double timestamp = 0.0;
  std::vector<std::optional<MeasurementRecord>> pmus;  // ordered like the aligner's id list

  std::size_t missing() const;
};

/// Merges per-PMU records sharing a timestamp. A timestamp is released once
/// every PMU reported or `wait` has elapsed since its first record arrived,
/// and releases happen strictly in timestamp order.
class Aligner {
 public:
  Aligner(std::vector<std::uint16_t> id_codes, std::chrono::nanoseconds wait);

  void push(const MeasurementRecord& rec, std::int64_t now_ns);
  std::vector<AlignedRecord> poll(std::int64_t now_ns);
  std::vector<AlignedRecord> flush();

  std::size_t late_drops() const { return late_drops_; }
  std::size_t pending() const { return buckets_.size(); }

 private:
  using Key = std::pair<std::uint32_t, std::uint32_t>;
  struct Bucket {
    AlignedRecord rec;
    std::size_t present = 0;
    std::int64_t first_arrival_ns = 0;
  };

  AlignedRecord take_front();

  std::vector<std::uint16_t> ids_;
  std::int64_t wait_ns_;
  std::map<Key, Bucket> buckets_;
  std::optional<Key> last_emitted_;
  std::size_t late_drops_ = 0;
};

// ---------------------------------------------------------------------------
// 1 Hz reduction

/// Picks the frac_sec == 0 frequency for each whole second, falling back to
/// the mean of that second's frames, and emits gap markers for seconds with
/// no frames at all. Expects records of one PMU in arrival order.
class Downsampler {
 public:
  std::vector<SecondSample> push(const MeasurementRecord& rec);
  std::vector<SecondSample> flush();

  std::size_t late_records() const { return late_; }

 private:
  void close_current(std::vector<SecondSample>& out);

  std::optional<std::int64_t> current_;
  bool emitted_ = false;
  double sum_ = 0.0;
  std::size_t count_ = 0;
  std::size_t late_ = 0;
};

// ---------------------------------------------------------------------------
// Listener

struct StreamStats {
  std::size_t frames_received = 0;  // datagrams read from the socket
  std::size_t forwarded = 0;        // unique data frames passed on
  std::size_t duplicates_dropped = 0;
  std::size_t decode_failures = 0;
  std::size_t control_frames = 0;  // checksum-valid non-data frames
  std::size_t expected = 0;
  std::size_t frames_missing = 0;
  std::size_t late_drops = 0;
  std::vector<RecvLogEntry> receive_log;  // every decodable data frame, duplicates included
};

struct ListenOptions {
  Endpoint bind{"0.0.0.0", 4712};
  std::vector<ConfigFrame> configs;  // one per incoming stream, keyed by header id_code
  std::optional<std::uint16_t> detect_id_code;  // stream reduced to 1 Hz; default first config
  std::chrono::milliseconds align_wait{50};
  std::chrono::milliseconds idle_timeout{0};  // 0 = run until stopped
  std::optional<std::size_t> expected_frames;  // otherwise inferred from timestamp span
  int receive_buffer_bytes = 8 << 20;
  double dedup_window_s = 2.0;
};

struct ListenSinks {
  std::function<void(const MeasurementRecord&, std::int64_t recv_ts_ns)> on_record;
  std::function<void(const AlignedRecord&)> on_aligned;
  std::function<void(const SecondSample&)> on_second;
};

/// One reader thread stamps and queues raw datagrams; the thread calling
/// run() decodes, deduplicates, aligns and downsamples them in receive order.
class Concentrator {
 public:
  Concentrator(ListenOptions options, ListenSinks sinks);

  Endpoint local_endpoint() const { return socket_.local_endpoint(); }
  UdpSocket& socket() { return socket_; }

  /// Blocks until `stop` fires or the idle timeout elapses after the first
  /// datagram; then drains the queue and flushes alignment and downsampling.
  StreamStats run(std::stop_token stop);

  StreamStats snapshot() const;

  /// Processing step, public for in-process feeding and tests.
  void process(std::span<const std::uint8_t> bytes, std::int64_t recv_ts_ns);
  void tick(std::int64_t now_ns);
  StreamStats finish();

 private:
  const ConfigFrame* config_for(std::uint16_t id_code) const;
  void emit_seconds(std::vector<SecondSample>&& samples);
  void emit_aligned(std::vector<AlignedRecord>&& recs);

  ListenOptions options_;
  ListenSinks sinks_;
  UdpSocket socket_;
  std::unordered_map<std::uint16_t, ConfigFrame> configs_;
  std::uint16_t detect_id_ = 0;
  Deduplicator dedup_;
  Aligner aligner_;
  Downsampler downsampler_;
  mutable std::mutex stats_mutex_;
  StreamStats stats_;
  struct Span {
    std::int64_t first = 0;
    std::int64_t last = 0;
    std::int64_t per_frame = 1;
  };
  std::unordered_map<std::uint16_t, Span> spans_;
  bool finished_ = false;
};

/// Aligned output in the archive column layout; absent PMUs leave their
/// columns empty. t_s is the record timestamp minus `origin`.
void write_aligned_header(std::ostream& out, std::size_t num_pmus);
void write_aligned_row(std::ostream& out, const AlignedRecord& rec, double origin);

/// Configuration files are CFG-2 frames stored back to back.
std::vector<ConfigFrame> load_config_frames(const std::string& path);
void save_config_frames(const std::string& path, const std::vector<ConfigFrame>& configs);

/// Asks the PMU at `pmu` for its CFG-2 via a send-config command on `socket`
/// and waits for the reply.
ConfigFrame request_config(UdpSocket& socket, const Endpoint& pmu, std::uint16_t id_code,
                           std::chrono::milliseconds timeout);
void send_command(UdpSocket& socket, const Endpoint& pmu, std::uint16_t id_code,
                  CommandCode command);

}  // namespace synchro
