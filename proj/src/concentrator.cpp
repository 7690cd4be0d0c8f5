#include "synchro/concentrator.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <fstream>
#include <iterator>
#include <ostream>
#include <thread>

#include "synchro/csv.hpp"

namespace synchro {

// ---------------------------------------------------------------------------
// Deduplicator

Deduplicator::Deduplicator(std::size_t capacity) : capacity_(std::max<std::size_t>(capacity, 1)) {
  seen_.reserve(capacity_ * 2);
}

bool Deduplicator::admit(const FrameIdentity& id) {
  if (seen_.contains(id)) return false;
  if (order_.size() == capacity_) {
    seen_.erase(order_.front());
    order_.pop_front();
  }
  order_.push_back(id);
  seen_.insert(id);
  return true;
}

std::size_t dedup_capacity(int fps, std::size_t streams, double seconds) {
  const double frames = std::max(fps, 1) * std::max<std::size_t>(streams, 1) * seconds;
  return std::max<std::size_t>(16, static_cast<std::size_t>(std::ceil(frames)));
}

// ---------------------------------------------------------------------------
// Aligner

std::size_t AlignedRecord::missing() const {
  return static_cast<std::size_t>(
      std::count_if(pmus.begin(), pmus.end(), [](const auto& p) { return !p.has_value(); }));
}

Aligner::Aligner(std::vector<std::uint16_t> id_codes, std::chrono::nanoseconds wait)
    : ids_(std::move(id_codes)), wait_ns_(wait.count()) {}

void Aligner::push(const MeasurementRecord& rec, std::int64_t now_ns) {
  const Key key{rec.soc, rec.frac_sec};
  if (last_emitted_ && key <= *last_emitted_) {
    ++late_drops_;
    return;
  }
  const auto slot = std::find(ids_.begin(), ids_.end(), rec.id_code);
  if (slot == ids_.end()) return;
  auto [it, inserted] = buckets_.try_emplace(key);
  Bucket& b = it->second;
  if (inserted) {
    b.rec.soc = rec.soc;
    b.rec.frac_sec = rec.frac_sec;
    b.rec.timestamp = rec.timestamp;
    b.rec.pmus.resize(ids_.size());
    b.first_arrival_ns = now_ns;
  }
  auto& entry = b.rec.pmus[static_cast<std::size_t>(slot - ids_.begin())];
  if (!entry) {
    entry = rec;
    ++b.present;
  }
}

AlignedRecord Aligner::take_front() {
  auto node = buckets_.extract(buckets_.begin());
  last_emitted_ = node.key();
  return std::move(node.mapped().rec);
}

std::vector<AlignedRecord> Aligner::poll(std::int64_t now_ns) {
  std::vector<AlignedRecord> out;
  while (!buckets_.empty()) {
    const Bucket& front = buckets_.begin()->second;
    if (front.present < ids_.size() && now_ns - front.first_arrival_ns < wait_ns_) break;
    out.push_back(take_front());
  }
  return out;
}

std::vector<AlignedRecord> Aligner::flush() {
  std::vector<AlignedRecord> out;
  while (!buckets_.empty()) out.push_back(take_front());
  return out;
}

// ---------------------------------------------------------------------------
// Downsampler

void Downsampler::close_current(std::vector<SecondSample>& out) {
  if (current_ && !emitted_ && count_ > 0) {
    out.push_back(SecondSample{*current_, sum_ / static_cast<double>(count_), false});
  }
  emitted_ = false;
  sum_ = 0.0;
  count_ = 0;
}

std::vector<SecondSample> Downsampler::push(const MeasurementRecord& rec) {
  std::vector<SecondSample> out;
  const auto second = static_cast<std::int64_t>(rec.soc);
  if (!current_) {
    current_ = second;
  } else if (second < *current_) {
    ++late_;
    return out;
  } else if (second > *current_) {
    close_current(out);
    for (std::int64_t gap = *current_ + 1; gap < second; ++gap) {
      out.push_back(SecondSample{gap, std::nullopt, false});
    }
    current_ = second;
  }
  if (rec.frac_sec == 0 && !emitted_) {
    out.push_back(SecondSample{second, rec.frequency_hz, true});
    emitted_ = true;
  }
  sum_ += rec.frequency_hz;
  ++count_;
  return out;
}

std::vector<SecondSample> Downsampler::flush() {
  std::vector<SecondSample> out;
  close_current(out);
  current_.reset();
  return out;
}

// ---------------------------------------------------------------------------
// Concentrator

namespace {

std::vector<std::uint16_t> pmu_ids(const std::vector<ConfigFrame>& configs) {
  std::vector<std::uint16_t> ids;
  for (const auto& c : configs) {
    for (const auto& p : c.pmus) ids.push_back(p.id_code);
  }
  return ids;
}

std::size_t capacity_for(const ListenOptions& o) {
  int fps = 1;
  std::size_t streams = 0;
  for (const auto& c : o.configs) {
    fps = std::max<int>(fps, c.data_rate);
    ++streams;
  }
  return dedup_capacity(fps, streams, o.dedup_window_s);
}

}  // namespace

Concentrator::Concentrator(ListenOptions options, ListenSinks sinks)
    : options_(std::move(options)),
      sinks_(std::move(sinks)),
      dedup_(capacity_for(options_)),
      aligner_(pmu_ids(options_.configs), options_.align_wait) {
  if (options_.configs.empty()) {
    throw std::invalid_argument("concentrator needs at least one stream configuration");
  }
  for (const auto& c : options_.configs) configs_[c.header.id_code] = c;
  detect_id_ = options_.detect_id_code.value_or(options_.configs.front().pmus.at(0).id_code);
  socket_.set_receive_buffer(options_.receive_buffer_bytes);
  socket_.bind(options_.bind);
}

const ConfigFrame* Concentrator::config_for(std::uint16_t id_code) const {
  const auto it = configs_.find(id_code);
  return it == configs_.end() ? nullptr : &it->second;
}

void Concentrator::emit_seconds(std::vector<SecondSample>&& samples) {
  if (!sinks_.on_second) return;
  for (const auto& s : samples) sinks_.on_second(s);
}

void Concentrator::emit_aligned(std::vector<AlignedRecord>&& recs) {
  if (!sinks_.on_aligned) return;
  for (const auto& r : recs) sinks_.on_aligned(r);
}

void Concentrator::process(std::span<const std::uint8_t> bytes, std::int64_t recv_ts_ns) {
  std::unique_lock lock(stats_mutex_);
  ++stats_.frames_received;
  Frame frame;
  try {
    const ConfigFrame* cfg =
        bytes.size() >= kCommonHeaderSize ? config_for(peek_header(bytes).id_code) : nullptr;
    frame = decode(bytes, cfg);
  } catch (const CodecError&) {
    ++stats_.decode_failures;
    return;
  }
  const auto* df = std::get_if<DataFrame>(&frame);
  if (df == nullptr) {
    ++stats_.control_frames;
    return;
  }
  const ConfigFrame& cfg = *config_for(df->header.id_code);
  const FrameIdentity id{df->header.id_code, df->header.soc, df->header.frac_sec};
  stats_.receive_log.push_back(
      RecvLogEntry{id, recv_ts_ns, static_cast<std::uint32_t>(bytes.size())});
  if (!dedup_.admit(id)) {
    ++stats_.duplicates_dropped;
    return;
  }
  ++stats_.forwarded;
  if (cfg.data_rate > 0) {
    const std::int64_t idx = std::int64_t{id.soc} * cfg.data_rate +
                             std::int64_t{id.frac_sec} * cfg.data_rate / cfg.time_base;
    auto [it, inserted] = spans_.try_emplace(id.id_code, Span{idx, idx, 1});
    if (!inserted) {
      it->second.first = std::min(it->second.first, idx);
      it->second.last = std::max(it->second.last, idx);
    }
  }
  lock.unlock();

  for (const auto& rec : to_records(*df, cfg)) {
    if (sinks_.on_record) sinks_.on_record(rec, recv_ts_ns);
    aligner_.push(rec, recv_ts_ns);
    if (rec.id_code == detect_id_) emit_seconds(downsampler_.push(rec));
  }
  emit_aligned(aligner_.poll(recv_ts_ns));
}

void Concentrator::tick(std::int64_t now_ns) { emit_aligned(aligner_.poll(now_ns)); }

StreamStats Concentrator::finish() {
  if (!finished_) {
    emit_aligned(aligner_.flush());
    emit_seconds(downsampler_.flush());
    finished_ = true;
  }
  std::lock_guard lock(stats_mutex_);
  if (options_.expected_frames) {
    stats_.expected = *options_.expected_frames;
  } else {
    stats_.expected = 0;
    for (const auto& [id, span] : spans_) {
      stats_.expected += static_cast<std::size_t>(span.last - span.first + 1);
    }
  }
  stats_.frames_missing = stats_.expected > stats_.forwarded ? stats_.expected - stats_.forwarded : 0;
  stats_.late_drops = aligner_.late_drops();
  return stats_;
}

StreamStats Concentrator::snapshot() const {
  std::lock_guard lock(stats_mutex_);
  return stats_;
}

StreamStats Concentrator::run(std::stop_token stop) {
  struct Raw {
    std::vector<std::uint8_t> bytes;
    std::int64_t recv_ts_ns;
  };
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Raw> queue;
  std::atomic<std::int64_t> last_arrival{0};

  std::jthread reader([&](std::stop_token rs) {
    std::array<std::uint8_t, 65536> buf{};
    while (!rs.stop_requested()) {
      auto dg = socket_.receive(buf, std::chrono::milliseconds(20));
      if (!dg) continue;
      const std::int64_t ts = wall_clock_ns();
      last_arrival.store(ts);
      {
        std::lock_guard lock(mu);
        queue.push_back(Raw{std::vector<std::uint8_t>(buf.begin(), buf.begin() + dg->size), ts});
      }
      cv.notify_one();
    }
  });

  const std::int64_t idle_ns = std::chrono::nanoseconds(options_.idle_timeout).count();
  std::deque<Raw> batch;
  while (true) {
    {
      std::unique_lock lock(mu);
      cv.wait_for(lock, std::chrono::milliseconds(10), [&] { return !queue.empty(); });
      batch.swap(queue);
    }
    for (const auto& raw : batch) process(raw.bytes, raw.recv_ts_ns);
    batch.clear();
    const std::int64_t now = wall_clock_ns();
    tick(now);
    if (stop.stop_requested()) break;
    const std::int64_t last = last_arrival.load();
    if (idle_ns > 0 && last > 0 && now - last > idle_ns) break;
  }

  reader.request_stop();
  reader.join();
  for (const auto& raw : queue) process(raw.bytes, raw.recv_ts_ns);
  queue.clear();
  return finish();
}

// ---------------------------------------------------------------------------

void write_aligned_header(std::ostream& out, std::size_t num_pmus) {
  out << "t_s";
  for (std::size_t k = 1; k <= num_pmus; ++k) {
    out << ",pmu" << k << "_freq_hz,pmu" << k << "_rocof_hzps,pmu" << k << "_vmag_v,pmu" << k
        << "_vang_rad";
  }
  out << '\n';
}

void write_aligned_row(std::ostream& out, const AlignedRecord& rec, double origin) {
  std::string line = csv::format(rec.timestamp - origin);
  for (const auto& p : rec.pmus) {
    if (!p) {
      line += ",,,,";
      continue;
    }
    const PhasorValue ph = p->phasors.empty() ? PhasorValue{} : p->phasors.front();
    for (const double v : {p->frequency_hz, p->rocof_hzps, ph.magnitude, ph.angle}) {
      line += ',';
      line += csv::format(v);
    }
  }
  line += '\n';
  out << line;
}

std::vector<ConfigFrame> load_config_frames(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open configuration file '" + path + "'");
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  std::vector<ConfigFrame> out;
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < kMinFrameSize) {
      throw CodecError(CodecErrc::SizeMismatch, pos, "trailing bytes in configuration file");
    }
    const std::size_t size = (std::size_t{bytes[pos + 2]} << 8) | bytes[pos + 3];
    if (size < kMinFrameSize || pos + size > bytes.size()) {
      throw CodecError(CodecErrc::SizeMismatch, pos, "frame overruns configuration file");
    }
    auto frame = decode(std::span(bytes).subspan(pos, size));
    auto* cfg = std::get_if<ConfigFrame>(&frame);
    if (cfg == nullptr) {
      throw CodecError(CodecErrc::UnknownFrameType, pos, "configuration file holds a non-config frame");
    }
    out.push_back(std::move(*cfg));
    pos += size;
  }
  if (out.empty()) throw std::runtime_error("configuration file '" + path + "' is empty");
  return out;
}

void save_config_frames(const std::string& path, const std::vector<ConfigFrame>& configs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  for (const auto& c : configs) {
    const auto bytes = encode(c);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

void send_command(UdpSocket& socket, const Endpoint& pmu, std::uint16_t id_code,
                  CommandCode command) {
  CommandFrame cmd;
  cmd.header.id_code = id_code;
  cmd.header.soc = static_cast<std::uint32_t>(wall_clock_ns() / 1'000'000'000);
  cmd.command = command;
  socket.send_to(encode(cmd), pmu);
}

ConfigFrame request_config(UdpSocket& socket, const Endpoint& pmu, std::uint16_t id_code,
                           std::chrono::milliseconds timeout) {
  using Clock = std::chrono::steady_clock;
  const auto deadline = Clock::now() + timeout;
  std::array<std::uint8_t, 65536> buf{};
  auto next_send = Clock::now();
  while (Clock::now() < deadline) {
    if (Clock::now() >= next_send) {
      send_command(socket, pmu, id_code, CommandCode::SendConfig2);
      next_send = Clock::now() + std::chrono::milliseconds(500);
    }
    auto dg = socket.receive(buf, std::chrono::milliseconds(50));
    if (!dg) continue;
    try {
      auto frame = decode(std::span(buf.data(), dg->size));
      if (auto* cfg = std::get_if<ConfigFrame>(&frame); cfg && cfg->header.id_code == id_code) {
        return *cfg;
      }
    } catch (const CodecError&) {
      // data frames (no config yet) and junk are ignored while waiting
    }
  }
  throw SocketError("no configuration frame from " + pmu.to_string() + " for id_code " +
                    std::to_string(id_code));
}

}  // namespace synchro
