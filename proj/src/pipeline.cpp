#include "synchro/pipeline.hpp"

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "synchro/csv.hpp"

namespace synchro {
namespace {

namespace fs = std::filesystem;

// Unbounded single-producer/single-consumer hand-off between the
// concentrator's processing thread and the detector thread.
template <typename T>
class Channel {
 public:
  void send(T v) {
    {
      std::lock_guard lock(mu_);
      items_.push_back(std::move(v));
    }
    cv_.notify_one();
  }
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }
  std::optional<T> receive() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool closed_ = false;
};

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  return out;
}

}  // namespace

std::vector<SecondSample> archive_series(const Archive& archive, std::size_t k,
                                         std::uint32_t start_soc) {
  std::vector<SecondSample> out;
  const auto fps = static_cast<std::size_t>(archive.fps);
  for (std::size_t i = 0; i < archive.rows.size(); i += fps) {
    // Frequencies travel as float32 on the wire.
    const auto f = static_cast<float>(archive.rows[i].pmus.at(k).frequency_hz);
    out.push_back(SecondSample{static_cast<std::int64_t>(start_soc + i / fps),
                               static_cast<double>(f), true});
  }
  return out;
}

void write_series_csv(const std::string& path, const std::vector<SecondSample>& series,
                      double origin) {
  auto out = open_out(path);
  out << "t_s,soc,freq_hz,exact\n";
  for (const auto& s : series) {
    out << csv::format(static_cast<double>(s.second) - origin) << ',' << s.second << ','
        << (s.value ? csv::format(*s.value) : std::string()) << ',' << (s.exact ? 1 : 0) << '\n';
  }
}

std::vector<SecondSample> read_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open series '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || csv::chomp(line) != "t_s,soc,freq_hz,exact") {
    throw csv::ParseError(1, "expected header t_s,soc,freq_hz,exact");
  }
  std::vector<SecondSample> out;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    const auto text = csv::chomp(line);
    if (text.empty()) continue;
    const auto f = csv::split(text);
    if (f.size() != 4) throw csv::ParseError(n, "expected 4 columns");
    SecondSample s;
    s.second = csv::to_int(f[1], n);
    if (!f[2].empty()) s.value = csv::to_double(f[2], n);
    s.exact = f[3] == "1";
    out.push_back(s);
  }
  return out;
}

E2eResult run_e2e(const E2eOptions& options) {
  const Archive& ar = options.archive;
  if (ar.rows.empty()) throw std::invalid_argument("archive has no rows");
  if (options.detect_pmu >= ar.num_pmus()) throw std::invalid_argument("detect PMU out of range");
  options.detector.validate();

  const bool write = !options.output_dir.empty();
  const fs::path dir(options.output_dir);
  if (write) fs::create_directories(dir);
  const double origin = options.start_soc;

  E2eResult result;
  result.start_soc = options.start_soc;

  ListenOptions lo;
  lo.bind = options.bind;
  lo.align_wait = options.align_wait;
  for (std::size_t k = 0; k < ar.num_pmus(); ++k) lo.configs.push_back(stream_config(ar.cfg, k));
  lo.detect_id_code = ar.cfg.pmus[options.detect_pmu].id_code;
  lo.expected_frames = ar.rows.size() * ar.num_pmus();

  std::ofstream aligned;
  if (write && options.write_aligned) {
    aligned = open_out(dir / "aligned.csv");
    write_aligned_header(aligned, ar.num_pmus());
  }

  Channel<SecondSample> seconds;
  ListenSinks sinks;
  sinks.on_second = [&](const SecondSample& s) { seconds.send(s); };
  if (aligned.is_open()) {
    sinks.on_aligned = [&](const AlignedRecord& r) { write_aligned_row(aligned, r, origin); };
  }
  Concentrator conc(lo, sinks);

  // Detector context.
  std::ofstream events_out, plot_out;
  if (write) {
    events_out = open_out(dir / "events.jsonl");
    plot_out = open_out(dir / "plot.csv");
    write_plot_header(plot_out);
  }
  std::vector<EventSink> event_sinks;
  if (write) event_sinks.push_back(json_line_sink(events_out, origin));
  if (options.event_udp) {
    auto sock = std::make_shared<UdpSocket>();
    sock->bind(Endpoint{"0.0.0.0", 0});
    event_sinks.push_back(udp_event_sink(sock, *options.event_udp, origin));
  }
  Detector detector(
      options.detector,
      [&](const AnomalyEvent& e) {
        for (auto& s : event_sinks) s(e);
      },
      write ? PlotSink([&](const PlotRow& r) { write_plot_row(plot_out, r, origin); }) : PlotSink{});
  std::jthread detect_thread([&] {
    while (auto s = seconds.receive()) {
      result.series.push_back(*s);
      detector.push(*s);
    }
  });

  std::stop_source conc_stop;
  StreamStats stats;
  std::jthread listen_thread([&] { stats = conc.run(conc_stop.get_token()); });

  PlaybackPlan plan;
  plan.cfg = ar.cfg;
  plan.rows = ar.rows;
  plan.fps = ar.fps;
  plan.destination = conc.local_endpoint();
  if (plan.destination.host == "0.0.0.0") plan.destination.host = "127.0.0.1";
  plan.start_soc = options.start_soc;
  plan.clock_offset_s = options.clock_offset_s;
  plan.clock_jitter_s = options.clock_jitter_s;
  plan.impairment = options.impairment;

  try {
    result.playback = play(plan, options.pacing);
  } catch (...) {
    conc_stop.request_stop();
    listen_thread.join();
    seconds.close();
    detect_thread.join();
    throw;
  }

  std::this_thread::sleep_for(options.drain);
  conc_stop.request_stop();
  listen_thread.join();
  result.stats = std::move(stats);
  seconds.close();
  detect_thread.join();
  result.detection = detector.report();

  if (!result.stats.receive_log.empty()) {
    const auto joined = join_traces(result.playback.send_log, result.stats.receive_log);
    result.trace = analyze_trials({joined}, options.latency);
  }

  if (write) {
    auto path = [&](const char* name) {
      result.files.push_back((dir / name).string());
      return result.files.back();
    };
    write_send_log(path("send.csv"), result.playback.send_log);
    write_recv_log(path("recv.csv"), result.stats.receive_log);
    path("events.jsonl");
    path("plot.csv");
    write_series_csv(path("series.csv"), result.series, origin);
    if (result.trace) {
      auto js = open_out(path("stats.json"));
      js << to_json(*result.trace) << '\n';
    }
    if (aligned.is_open()) path("aligned.csv");
  }
  return result;
}

}  // namespace synchro
