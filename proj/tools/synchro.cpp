// synchro: command-line front end for the synchrophasor toolkit.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <memory>
#include <sstream>
#include <thread>

#include "synchro/archive.hpp"
#include "synchro/concentrator.hpp"
#include "synchro/csv.hpp"
#include "synchro/detector.hpp"
#include "synchro/emulator.hpp"
#include "synchro/frame_codec.hpp"
#include "synchro/pipeline.hpp"
#include "synchro/trace_analyzer.hpp"

using namespace synchro;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::atomic<bool> g_interrupted{false};
extern "C" void on_signal(int) { g_interrupted = true; }

Endpoint parse_endpoint(const std::string& text, const char* what) {
  try {
    return Endpoint::parse(text);
  } catch (const std::exception& e) {
    throw UsageError(std::string(what) + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Shared option groups

struct DetectorFlags {
  DetectorConfig cfg;
  double fixed_obs_var = 0.0;  // > 0 selects fixed mode

  void add(CLI::App* app) {
    app->add_option("--window", cfg.window_s, "Sliding window length in seconds")
        ->capture_default_str();
    app->add_option("--horizon", cfg.horizon_h, "Forecast horizon in steps")->capture_default_str();
    app->add_option("--threshold", cfg.threshold_sigma, "Event threshold in standard deviations")
        ->capture_default_str();
    app->add_option("--delta", cfg.delta, "Discount factor in (0, 1]")->capture_default_str();
    app->add_option("--refresh", cfg.refresh_s, "Refit every N seconds")->capture_default_str();
    app->add_option("--warmup", cfg.warmup_s, "Samples before events may fire")
        ->capture_default_str();
    app->add_option("--gap-reset", cfg.gap_reset, "Consecutive gaps that restart the window")
        ->capture_default_str();
    app->add_flag("--mask-anomalies", cfg.mask_anomalies,
                  "Store the forecast in place of flagged samples");
    app->add_option("--fixed-obs-var", fixed_obs_var,
                    "Use a fixed observation variance (Hz^2) instead of learning it");
  }

  DetectorConfig resolve() const {
    DetectorConfig c = cfg;
    if (fixed_obs_var > 0.0) {
      c.obs_var_mode = ObsVarMode::Fixed;
      c.fixed_obs_var = fixed_obs_var;
    }
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

struct ImpairmentFlags {
  double loss = 0.0;
  double dup = 0.0;
  std::vector<std::uint64_t> drop_seqs;
  std::vector<std::uint64_t> dup_seqs;
  std::uint64_t seed = 1;

  void add(CLI::App* app) {
    app->add_option("--loss-prob", loss, "Probability of dropping each frame")
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--dup-prob", dup, "Probability of duplicating each frame")
        ->check(CLI::Range(0.0, 1.0));
    app->add_option("--drop-seqs", drop_seqs, "Send sequence numbers to drop")->delimiter(',');
    app->add_option("--dup-seqs", dup_seqs, "Send sequence numbers to duplicate")->delimiter(',');
    app->add_option("--impair-seed", seed, "Seed for probabilistic impairment");
  }

  NetworkImpairment resolve() const {
    NetworkImpairment n;
    n.loss_probability = loss;
    n.duplicate_probability = dup;
    n.drop_seqs.insert(drop_seqs.begin(), drop_seqs.end());
    n.duplicate_seqs.insert(dup_seqs.begin(), dup_seqs.end());
    n.seed = seed;
    return n;
  }
};

PacingMode parse_pacing(const std::string& kind, double speed) {
  if (!(speed > 0.0)) throw UsageError("--speed must be positive");
  if (kind == "realtime") return PacingMode{Pacing::Realtime, speed};
  if (kind == "max") return PacingMode{Pacing::MaxRate, 1.0};
  throw UsageError("--pacing must be 'realtime' or 'max'");
}

Archive load_archive_checked(const std::string& path, int fps) {
  return load_archive(path, fps > 0 ? std::optional<int>(fps) : std::nullopt);
}

// Event sink list built from --events and --events-udp.
struct EventOutputs {
  std::string events_path;
  std::string udp;
  std::ofstream file;
  std::vector<EventSink> sinks;

  void add(CLI::App* app) {
    app->add_option("--events", events_path, "Event JSON lines file ('-' = stdout)");
    app->add_option("--events-udp", udp, "Also send each event as a datagram to host:port");
  }

  void open(std::optional<double> origin) {
    if (!udp.empty()) {
      const Endpoint to = parse_endpoint(udp, "--events-udp");
      auto sock = std::make_shared<UdpSocket>();
      sock->bind(Endpoint{"0.0.0.0", 0});
      sinks.push_back(udp_event_sink(sock, to, origin));
    }
    if (events_path == "-") {
      sinks.push_back(json_line_sink(std::cout, origin));
    } else if (!events_path.empty()) {
      file.open(events_path);
      if (!file) throw std::runtime_error("cannot write '" + events_path + "'");
      sinks.push_back(json_line_sink(file, origin));
    }
  }

  EventSink sink() {
    return [this](const AnomalyEvent& e) {
      for (auto& s : sinks) s(e);
    };
  }
};

std::string summary_json(const DetectionReport& r) {
  std::ostringstream os;
  os << "{\"samples\":" << r.samples_processed << ",\"gaps_filled\":" << r.gaps_filled
     << ",\"resets\":" << r.resets << ",\"refits\":" << r.refits
     << ",\"events\":" << r.events.size() << ",\"mean_refit_latency_ms\":"
     << r.mean_refit_latency_ms << ",\"max_refit_latency_ms\":" << r.max_refit_latency_ms << "}";
  return os.str();
}

// ---------------------------------------------------------------------------
// codec

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::uint8_t> parse_hex(std::string text) {
  if (text.rfind("0x", 0) == 0 || text.rfind("0X", 0) == 0) text.erase(0, 2);
  std::string digits;
  for (const char c : text) {
    if (std::isxdigit(static_cast<unsigned char>(c))) {
      digits += c;
    } else if (!std::isspace(static_cast<unsigned char>(c)) && c != ':' && c != '-') {
      throw UsageError(std::string("--hex: unexpected character '") + c + "'");
    }
  }
  if (digits.size() % 2 != 0) throw UsageError("--hex: odd number of hex digits");
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i < digits.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>(std::stoul(digits.substr(i, 2), nullptr, 16)));
  }
  return out;
}

std::string hex16(unsigned v) {
  std::ostringstream os;
  os << "0x" << std::hex << std::uppercase << std::setw(4) << std::setfill('0') << v;
  return os.str();
}

void dump_record(std::ostream& out, const MeasurementRecord& r) {
  out << "  record id_code=" << r.id_code << " timestamp=" << std::setprecision(17) << r.timestamp
      << std::setprecision(9) << "\n    frequency_hz=" << r.frequency_hz
      << " rocof_hzps=" << r.rocof_hzps << " stat=" << hex16(r.stat) << '\n';
  for (std::size_t i = 0; i < r.phasors.size(); ++i) {
    out << "    phasor[" << i << "] magnitude=" << r.phasors[i].magnitude
        << " angle_rad=" << r.phasors[i].angle << '\n';
  }
  for (std::size_t i = 0; i < r.analogs.size(); ++i) {
    out << "    analog[" << i << "]=" << r.analogs[i] << '\n';
  }
  for (std::size_t i = 0; i < r.digitals.size(); ++i) {
    out << "    digital[" << i << "]=" << hex16(r.digitals[i]) << '\n';
  }
}

void dump_frame(std::ostream& out, const Frame& frame, const ConfigFrame* cfg, bool as_record) {
  std::visit(
      [&](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, DataFrame>) {
          if (as_record) {
            for (const auto& r : to_records(f, *cfg)) dump_record(out, r);
            return;
          }
          for (std::size_t k = 0; k < f.pmus.size(); ++k) {
            const auto& p = f.pmus[k];
            out << "  pmu[" << k << "] stat=" << hex16(p.stat) << " freq=" << p.freq
                << " dfreq=" << p.dfreq << '\n';
            for (std::size_t i = 0; i < p.phasors.size(); ++i) {
              out << "    phasor[" << i << "] " << p.phasors[i].first << ' ' << p.phasors[i].second
                  << '\n';
            }
            for (std::size_t i = 0; i < p.analogs.size(); ++i) {
              out << "    analog[" << i << "] " << p.analogs[i] << '\n';
            }
            for (std::size_t i = 0; i < p.digitals.size(); ++i) {
              out << "    digital[" << i << "] " << hex16(p.digitals[i]) << '\n';
            }
          }
        } else if constexpr (std::is_same_v<T, ConfigFrame>) {
          out << "  revision     CFG-" << static_cast<int>(f.revision) << "\n  time_base    "
              << f.time_base << "\n  data_rate    " << f.data_rate << "\n  num_pmu      "
              << f.pmus.size() << '\n';
          for (const auto& p : f.pmus) {
            out << "  pmu '" << p.station_name << "' id_code=" << p.id_code
                << " format=" << hex16(p.format.to_word()) << " phasors=" << p.phasors.size()
                << " analogs=" << p.analogs.size() << " digitals=" << p.digitals.size()
                << " fnom=" << p.nominal_hz() << " cfgcnt=" << p.cfg_count << '\n';
            for (const auto& ph : p.phasors) {
              out << "    phasor '" << ph.name << "' "
                  << (ph.kind == PhasorKind::Voltage ? "voltage" : "current")
                  << " scale=" << ph.scale << '\n';
            }
            for (const auto& an : p.analogs) {
              out << "    analog '" << an.name << "' scale=" << an.scale << '\n';
            }
          }
        } else if constexpr (std::is_same_v<T, HeaderFrame>) {
          out << "  text         \"" << f.text << "\"\n";
        } else {
          out << "  command      " << to_string(f.command) << " ("
              << static_cast<unsigned>(f.command) << ")\n";
        }
      },
      frame);
}

int codec_inspect(const std::string& path, const std::string& hex, const std::string& cfg_path,
                  const std::string& archive_path, bool as_record) {
  if (path.empty() == hex.empty()) throw UsageError("give exactly one of FILE or --hex");
  const auto bytes = path.empty() ? parse_hex(hex) : read_bytes(path);

  std::vector<ConfigFrame> cfgs;
  if (!cfg_path.empty()) cfgs = load_config_frames(cfg_path);
  if (!archive_path.empty()) {
    const auto ar = load_archive(archive_path);
    for (std::size_t k = 0; k < ar.num_pmus(); ++k) cfgs.push_back(stream_config(ar.cfg, k));
  }

  std::cout << "bytes        " << bytes.size() << '\n';
  try {
    if (bytes.size() < 4) {
      throw CodecError(CodecErrc::SizeMismatch, bytes.size(), "too short for a common header");
    }
    const std::size_t declared = (std::size_t{bytes[2]} << 8) | bytes[3];
    std::cout << "sync         0x" << hex16(bytes[0]).substr(4) << " 0x" << hex16(bytes[1]).substr(4)
              << '\n';
    std::cout << "frame_size   " << declared << '\n';
    if (declared != bytes.size()) {
      throw CodecError(CodecErrc::SizeMismatch, std::min(declared, bytes.size()),
                       "declared frame size " + std::to_string(declared) + " but " +
                           std::to_string(bytes.size()) + " bytes present");
    }
    const FrameHeader h = peek_header(bytes);
    std::cout << "type         " << to_string(peek_type(bytes)) << "\nversion      " << unsigned{h.version}
              << "\nid_code      " << h.id_code << "\nsoc          " << h.soc
              << "\nfrac_sec     " << h.frac_sec << "\ntime_quality " << hex16(h.time_quality) << '\n';
    const std::uint16_t stored =
        static_cast<std::uint16_t>((bytes[bytes.size() - 2] << 8) | bytes[bytes.size() - 1]);
    const std::uint16_t computed = checksum(std::span(bytes).first(bytes.size() - 2));
    std::cout << "chk          stored " << hex16(stored) << " computed " << hex16(computed) << ' '
              << (stored == computed ? "OK" : "MISMATCH") << '\n';

    const ConfigFrame* use = nullptr;
    for (const auto& c : cfgs) {
      if (c.header.id_code == h.id_code) use = &c;
    }
    if (use == nullptr && cfgs.size() == 1) use = &cfgs.front();
    const Frame frame = decode(bytes, use);
    dump_frame(std::cout, frame, use, as_record);
  } catch (const CodecError& e) {
    std::cout << "error        " << e.what() << '\n';
    std::cerr << "synchro codec: " << to_string(e.code()) << " at offset " << e.offset() << '\n';
    return 1;
  }
  return 0;
}

// Writes the demo frame set: a 52-byte data frame, its config and the
// archive row it was encoded from.
int codec_demo(const std::string& dir, std::uint32_t soc) {
  std::filesystem::create_directories(dir);
  SynthParams p;
  p.duration_s = 1.0;
  p.fps = 60;
  p.noise_std_hz = 0.0;
  p.vmag_v = 79'674.3;
  auto rows = synthesize(p);
  rows.resize(1);
  const ConfigFrame cfg = stream_config(make_config(1, 60), 0);
  ConfigFrame cfg_out = cfg;
  cfg_out.header.soc = soc;
  const DataFrame df = make_data_frame(cfg, rows[0], 0, FrameStamp{soc, 0});
  const auto bytes = encode(df, cfg);
  const auto write = [](const std::string& path, const std::vector<std::uint8_t>& b) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  };
  write(dir + "/golden_data_frame.bin", bytes);
  save_config_frames(dir + "/golden_config.bin", {cfg_out});
  write_archive(dir + "/golden_source.csv", rows);
  std::cout << "wrote " << bytes.size() << "-byte data frame to " << dir << '\n';
  return 0;
}

// ---------------------------------------------------------------------------
// listen

struct ListenArgs {
  std::string bind = "0.0.0.0:4712";
  std::string cfg_path;
  std::string archive_path;
  std::string request_from;
  std::vector<std::uint16_t> request_ids;
  std::size_t pmus = 0;
  int fps = 60;
  std::string recv_log;
  std::string aligned_out;
  std::string series_out;
  int idle_timeout_ms = 0;
  double duration_s = 0.0;
  int align_wait_ms = 50;
  std::size_t expected = 0;
  std::size_t detect_pmu = 0;
  bool detect = false;
  std::string plot_out;
  std::string stats_json;
  double origin = 0.0;
  DetectorFlags det;
  EventOutputs events;
};

int run_listen(ListenArgs& a) {
  const int sources = !a.cfg_path.empty() + !a.archive_path.empty() + !a.request_from.empty() +
                      (a.pmus > 0);
  if (sources != 1) {
    throw UsageError("give exactly one configuration source: --cfg, --archive, --request-config or --pmus");
  }
  const Endpoint bind = parse_endpoint(a.bind, "--bind");
  const DetectorConfig dcfg = a.det.resolve();

  ListenOptions lo;
  lo.bind = bind;
  lo.align_wait = std::chrono::milliseconds(a.align_wait_ms);
  lo.idle_timeout = std::chrono::milliseconds(a.idle_timeout_ms);
  if (a.expected > 0) lo.expected_frames = a.expected;

  std::optional<Endpoint> pmu_endpoint;
  if (!a.cfg_path.empty()) {
    lo.configs = load_config_frames(a.cfg_path);
  } else if (!a.archive_path.empty()) {
    const auto ar = load_archive(a.archive_path);
    for (std::size_t k = 0; k < ar.num_pmus(); ++k) lo.configs.push_back(stream_config(ar.cfg, k));
  } else if (a.pmus > 0) {
    const auto cfg = make_config(a.pmus, a.fps);
    for (std::size_t k = 0; k < a.pmus; ++k) lo.configs.push_back(stream_config(cfg, k));
  } else {
    pmu_endpoint = parse_endpoint(a.request_from, "--request-config");
    if (a.request_ids.empty()) a.request_ids = {1};
    UdpSocket probe;
    probe.bind(bind);
    for (const auto id : a.request_ids) {
      lo.configs.push_back(request_config(probe, *pmu_endpoint, id, std::chrono::seconds(5)));
      std::cerr << "listen: received configuration for id_code " << id << '\n';
    }
  }
  std::vector<std::uint16_t> pmu_ids;
  for (const auto& c : lo.configs) {
    for (const auto& p : c.pmus) pmu_ids.push_back(p.id_code);
  }
  if (a.detect_pmu >= pmu_ids.size()) throw UsageError("--detect-pmu out of range");
  lo.detect_id_code = pmu_ids[a.detect_pmu];

  std::ofstream aligned, series, plot;
  if (!a.aligned_out.empty()) {
    aligned.open(a.aligned_out);
    if (!aligned) throw std::runtime_error("cannot write '" + a.aligned_out + "'");
    write_aligned_header(aligned, pmu_ids.size());
  }
  if (!a.series_out.empty()) {
    series.open(a.series_out);
    if (!series) throw std::runtime_error("cannot write '" + a.series_out + "'");
    series << "t_s,soc,freq_hz,exact\n";
  }
  if (!a.plot_out.empty()) {
    plot.open(a.plot_out);
    if (!plot) throw std::runtime_error("cannot write '" + a.plot_out + "'");
    write_plot_header(plot);
  }
  a.events.open(a.origin != 0.0 ? std::optional<double>(a.origin) : std::nullopt);
  std::optional<Detector> detector;
  if (a.detect) {
    detector.emplace(dcfg, a.events.sink(),
                     plot.is_open() ? PlotSink([&](const PlotRow& r) { write_plot_row(plot, r, a.origin); })
                                    : PlotSink{});
  }

  ListenSinks sinks;
  sinks.on_second = [&](const SecondSample& s) {
    if (series.is_open()) {
      series << csv::format(static_cast<double>(s.second) - a.origin) << ',' << s.second << ','
             << (s.value ? csv::format(*s.value) : std::string()) << ',' << (s.exact ? 1 : 0)
             << '\n';
    }
    if (detector) detector->push(s);
  };
  if (aligned.is_open()) {
    sinks.on_aligned = [&](const AlignedRecord& r) { write_aligned_row(aligned, r, a.origin); };
  }

  Concentrator conc(lo, sinks);
  std::cerr << "listen: bound to " << conc.local_endpoint().to_string() << '\n';
  if (pmu_endpoint) {
    for (const auto id : a.request_ids) {
      send_command(conc.socket(), *pmu_endpoint, id, CommandCode::TurnOnTransmission);
    }
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::stop_source stop;
  std::jthread watchdog([&](std::stop_token st) {
    const auto t0 = std::chrono::steady_clock::now();
    while (!st.stop_requested()) {
      if (g_interrupted ||
          (a.duration_s > 0 && std::chrono::steady_clock::now() - t0 >
                                   std::chrono::duration<double>(a.duration_s))) {
        stop.request_stop();
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
  });
  StreamStats stats = conc.run(stop.get_token());
  watchdog.request_stop();

  if (!a.recv_log.empty()) write_recv_log(a.recv_log, stats.receive_log);
  std::ostringstream js;
  js << "{\"frames_received\":" << stats.frames_received << ",\"forwarded\":" << stats.forwarded
     << ",\"duplicates_dropped\":" << stats.duplicates_dropped
     << ",\"decode_failures\":" << stats.decode_failures
     << ",\"control_frames\":" << stats.control_frames << ",\"expected\":" << stats.expected
     << ",\"frames_missing\":" << stats.frames_missing << ",\"late_drops\":" << stats.late_drops;
  if (detector) js << ",\"detector\":" << summary_json(detector->report());
  js << "}";
  if (!a.stats_json.empty()) {
    std::ofstream out(a.stats_json);
    out << js.str() << '\n';
  }
  std::cerr << js.str() << '\n';
  return 0;
}

}  // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"Synchrophasor streaming toolkit: C37.118 codec, PMU emulator, PDC, trace "
               "analysis and GDLM anomaly detection"};
  app.set_config("--config", "", "Read options from a TOML/INI file ([subcommand] sections)");
  app.require_subcommand(1);

  // synth -------------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Generate a synthetic archive CSV");
  SynthParams sp;
  double ev_onset = -1.0, ev_step = -0.05, ev_tau = 0.0;
  std::string synth_out;
  synth->add_option("--duration", sp.duration_s, "Seconds of data")->capture_default_str();
  synth->add_option("--fps", sp.fps, "Frames per second")->capture_default_str();
  synth->add_option("--base", sp.base_freq_hz, "Base frequency, Hz")->capture_default_str();
  synth->add_option("--noise", sp.noise_std_hz, "Gaussian noise std, Hz")->capture_default_str();
  synth->add_option("--event-onset", ev_onset, "Step onset in seconds (omit for no event)");
  synth->add_option("--event-step", ev_step, "Step size, Hz")->capture_default_str();
  synth->add_option("--event-tau", ev_tau, "Exponential recovery time constant, s (0 = permanent)");
  synth->add_option("--seed", sp.seed, "RNG seed")->capture_default_str();
  synth->add_option("--pmus", sp.num_pmus, "Number of PMUs")->capture_default_str();
  synth->add_option("--nominal", sp.nominal_hz, "Nominal frequency for the angle drift")
      ->capture_default_str();
  synth->add_option("-o,--output", synth_out, "Output archive CSV")->required();

  // play --------------------------------------------------------------------
  auto* playc = app.add_subcommand("play", "Stream an archive as C37.118 data frames over UDP");
  std::string play_archive, play_dest = "127.0.0.1:4712", play_local = "0.0.0.0:0", play_log,
                            play_cfg_out, play_pacing = "realtime";
  int play_fps = 0;
  double play_speed = 1.0;
  PlaybackPlan plan;
  ImpairmentFlags play_imp;
  playc->add_option("--archive", play_archive, "Archive CSV")->required();
  playc->add_option("--dest", play_dest, "Destination host:port")->capture_default_str();
  playc->add_option("--local", play_local, "Local bind host:port (commands arrive here)")
      ->capture_default_str();
  playc->add_option("--fps", play_fps, "Override the archive frame rate");
  playc->add_option("--start-soc", plan.start_soc, "SOC of the first row")->capture_default_str();
  playc->add_option("--pacing", play_pacing, "realtime | max")->capture_default_str();
  playc->add_option("--speed", play_speed, "Realtime acceleration factor")->capture_default_str();
  playc->add_option("--clock-offset", plan.clock_offset_s, "Sender clock offset, s");
  playc->add_option("--clock-jitter", plan.clock_jitter_s, "Sender timestamp jitter std, s");
  playc->add_flag("--broadcast", plan.broadcast, "Enable SO_BROADCAST for broadcast destinations");
  playc->add_flag("--serve-commands", plan.serve_commands,
                  "Answer config/header requests and honour turn-off");
  playc->add_flag("--wait-turn-on", plan.wait_for_turn_on,
                  "Hold data until a turn-on command arrives (implies --serve-commands)");
  playc->add_option("--send-log", play_log, "Send timestamp log CSV");
  playc->add_option("--write-cfg", play_cfg_out, "Write the stream configurations to a file");
  play_imp.add(playc);

  // listen ------------------------------------------------------------------
  auto* listen = app.add_subcommand("listen", "Receive, deduplicate, align and downsample frames");
  ListenArgs la;
  listen->add_option("--bind", la.bind, "Bind host:port")->capture_default_str();
  listen->add_option("--cfg", la.cfg_path, "Configuration frames file");
  listen->add_option("--archive", la.archive_path, "Derive configurations from an archive CSV");
  listen->add_option("--pmus", la.pmus, "Use the default layout with N PMUs");
  listen->add_option("--fps", la.fps, "Frame rate for --pmus")->capture_default_str();
  listen->add_option("--request-config", la.request_from,
                     "Request CFG-2 from the PMU command port host:port, then turn it on");
  listen->add_option("--id-codes", la.request_ids, "Stream id codes to request")->delimiter(',');
  listen->add_option("--recv-log", la.recv_log, "Receive timestamp log CSV");
  listen->add_option("--aligned-out", la.aligned_out, "Aligned records CSV (archive layout)");
  listen->add_option("--series-out", la.series_out, "1 Hz series CSV");
  listen->add_option("--idle-timeout", la.idle_timeout_ms, "Stop after N ms without datagrams");
  listen->add_option("--duration", la.duration_s, "Stop after N seconds");
  listen->add_option("--align-wait", la.align_wait_ms, "Alignment wait, ms")->capture_default_str();
  listen->add_option("--expected", la.expected, "Expected frame count for the loss figure");
  listen->add_option("--detect-pmu", la.detect_pmu, "PMU (0-based) reduced to 1 Hz");
  listen->add_option("--origin", la.origin, "Subtract this SOC from output times");
  listen->add_flag("--detect", la.detect, "Run the anomaly detector on the 1 Hz series");
  listen->add_option("--plot", la.plot_out, "Detector plot CSV");
  listen->add_option("--stats-json", la.stats_json, "Write stream statistics JSON");
  la.det.add(listen);
  la.events.add(listen);

  // detect ------------------------------------------------------------------
  auto* detect = app.add_subcommand("detect", "Run the anomaly detector offline on a 1 Hz series");
  std::string det_series, det_archive, det_plot;
  std::size_t det_pmu = 0;
  DetectorFlags det_flags;
  EventOutputs det_events;
  det_events.events_path = "-";
  detect->add_option("--series", det_series, "Series CSV (t_s,soc,freq_hz,exact)");
  detect->add_option("--archive", det_archive, "Archive CSV (whole-second rows are used)");
  detect->add_option("--pmu", det_pmu, "Archive PMU index (0-based)");
  detect->add_option("--plot", det_plot, "Plot CSV output");
  det_flags.add(detect);
  det_events.add(detect);

  // analyze -----------------------------------------------------------------
  auto* analyze = app.add_subcommand("analyze", "Join send/receive logs and report latency");
  std::vector<std::string> an_send, an_recv;
  std::string an_gaps, an_json;
  LatencyOptions lat;
  ComplianceEnvelope env;
  analyze->add_option("--send", an_send, "Send log CSV (repeat per trial)")->required();
  analyze->add_option("--recv", an_recv, "Receive log CSV (repeat per trial)")->required();
  analyze->add_option("--skew", lat.skew_correction_s, "Clock skew correction, s");
  analyze->add_flag("--auto-skew", lat.auto_skew, "Use each trial's minimum latency as its skew");
  analyze->add_option("--gaps", an_gaps, "Per-packet gap CSV (packet_no,gap_s)");
  analyze->add_option("-o,--output", an_json, "Write the JSON report here instead of stdout");
  analyze->add_option("--typical-low", env.typical_low_ms, "Typical envelope floor, ms")
      ->capture_default_str();
  analyze->add_option("--typical-high", env.typical_high_ms, "Typical envelope ceiling, ms")
      ->capture_default_str();
  analyze->add_option("--hard-cap", env.hard_cap_ms, "Hard latency cap, ms")->capture_default_str();

  // codec -------------------------------------------------------------------
  auto* codec = app.add_subcommand("codec", "Frame inspection utilities");
  codec->require_subcommand(1);
  auto* inspect = codec->add_subcommand("inspect", "Dump a frame field by field");
  std::string in_path, in_hex, in_cfg, in_archive;
  bool in_record = false;
  inspect->add_option("file", in_path, "Binary frame file");
  inspect->add_option("--hex", in_hex, "Frame as a hex string");
  inspect->add_option("--cfg", in_cfg, "Configuration frames file (needed for data frames)");
  inspect->add_option("--archive", in_archive, "Derive the configuration from an archive CSV");
  inspect->add_flag("--as-record", in_record, "Print engineering-unit records for data frames");
  auto* demo = codec->add_subcommand("demo", "Write the demo data frame, config and source row");
  std::string demo_dir = "testdata";
  std::uint32_t demo_soc = 1'000'000'000;
  demo->add_option("-o,--out-dir", demo_dir, "Output directory")->capture_default_str();
  demo->add_option("--soc", demo_soc, "Frame SOC")->capture_default_str();

  // e2e ---------------------------------------------------------------------
  auto* e2e = app.add_subcommand("e2e", "Play, listen and detect on loopback in one process");
  std::string e2e_archive, e2e_dir = "e2e_out", e2e_pacing = "realtime", e2e_bind = "127.0.0.1:0";
  double e2e_speed = 1.0;
  int e2e_fps = 0;
  E2eOptions eo;
  ImpairmentFlags e2e_imp;
  DetectorFlags e2e_det;
  std::string e2e_udp;
  e2e->add_option("--archive", e2e_archive, "Archive CSV")->required();
  e2e->add_option("--out-dir", e2e_dir, "Directory for logs, events and plot data")
      ->capture_default_str();
  e2e->add_option("--fps", e2e_fps, "Override the archive frame rate");
  e2e->add_option("--pacing", e2e_pacing, "realtime | max")->capture_default_str();
  e2e->add_option("--speed", e2e_speed, "Realtime acceleration factor")->capture_default_str();
  e2e->add_option("--bind", e2e_bind, "Receiver bind host:port")->capture_default_str();
  e2e->add_option("--start-soc", eo.start_soc, "SOC of the first row")->capture_default_str();
  e2e->add_option("--clock-offset", eo.clock_offset_s, "Sender clock offset, s");
  e2e->add_option("--clock-jitter", eo.clock_jitter_s, "Sender timestamp jitter std, s");
  e2e->add_option("--skew", eo.latency.skew_correction_s, "Skew correction for the trace stats, s");
  e2e->add_flag("--auto-skew", eo.latency.auto_skew, "Estimate skew from the minimum latency");
  e2e->add_option("--detect-pmu", eo.detect_pmu, "PMU (0-based) reduced to 1 Hz");
  e2e->add_option("--events-udp", e2e_udp, "Also send events as datagrams to host:port");
  e2e->add_flag("--aligned", eo.write_aligned, "Also write aligned.csv");
  e2e_imp.add(e2e);
  e2e_det.add(e2e);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "synchro: " << e.what() << '\n';
    return 2;
  }

  try {
    if (synth->parsed()) {
      if (ev_onset >= 0.0) sp.event = FrequencyEvent{ev_onset, ev_step, ev_tau};
      std::vector<ArchiveRow> rows;
      try {
        rows = synthesize(sp);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      write_archive(synth_out, rows);
      std::cerr << "synth: wrote " << rows.size() << " rows to " << synth_out << '\n';
      return 0;
    }

    if (playc->parsed()) {
      const PacingMode pacing = parse_pacing(play_pacing, play_speed);
      plan.destination = parse_endpoint(play_dest, "--dest");
      plan.local = parse_endpoint(play_local, "--local");
      if (plan.wait_for_turn_on) plan.serve_commands = true;
      plan.impairment = play_imp.resolve();
      const Archive ar = load_archive_checked(play_archive, play_fps);
      plan.cfg = ar.cfg;
      plan.rows = ar.rows;
      plan.fps = ar.fps;
      if (!play_cfg_out.empty()) {
        std::vector<ConfigFrame> streams;
        for (std::size_t k = 0; k < ar.num_pmus(); ++k) streams.push_back(stream_config(ar.cfg, k));
        save_config_frames(play_cfg_out, streams);
      }
      std::signal(SIGINT, on_signal);
      std::stop_source stop;
      std::jthread watchdog([&](std::stop_token st) {
        while (!st.stop_requested()) {
          if (g_interrupted) {
            stop.request_stop();
            return;
          }
          std::this_thread::sleep_for(std::chrono::milliseconds(20));
        }
      });
      const PlaybackReport rep = play(plan, pacing, stop.get_token());
      watchdog.request_stop();
      if (!play_log.empty()) write_send_log(play_log, rep.send_log);
      std::cerr << "{\"rows_played\":" << rep.rows_played << ",\"frames_sent\":" << rep.frames_sent
                << ",\"datagrams_transmitted\":" << rep.datagrams_transmitted
                << ",\"wall_duration_s\":" << rep.wall_duration_s
                << ",\"pacing_overruns\":" << rep.pacing_overruns
                << ",\"stopped_by_command\":" << (rep.stopped_by_command ? "true" : "false") << "}\n";
      return 0;
    }

    if (listen->parsed()) return run_listen(la);

    if (detect->parsed()) {
      if (det_series.empty() == det_archive.empty()) {
        throw UsageError("give exactly one of --series or --archive");
      }
      const DetectorConfig dcfg = det_flags.resolve();
      std::vector<SecondSample> series;
      double origin = 0.0;
      if (!det_series.empty()) {
        series = read_series_csv(det_series);
        if (!series.empty()) origin = static_cast<double>(series.front().second);
      } else {
        const Archive ar = load_archive(det_archive);
        if (det_pmu >= ar.num_pmus()) throw UsageError("--pmu out of range");
        series = archive_series(ar, det_pmu, 0);
      }
      det_events.open(origin);
      std::ofstream plot;
      if (!det_plot.empty()) {
        plot.open(det_plot);
        if (!plot) throw std::runtime_error("cannot write '" + det_plot + "'");
        write_plot_header(plot);
      }
      const DetectionReport rep = run_detector(
          series, dcfg, det_events.sink(),
          plot.is_open() ? PlotSink([&](const PlotRow& r) { write_plot_row(plot, r, origin); })
                         : PlotSink{});
      std::cerr << summary_json(rep) << '\n';
      return 0;
    }

    if (analyze->parsed()) {
      if (an_send.size() != an_recv.size()) {
        throw UsageError("--send and --recv must be given the same number of times");
      }
      std::vector<JoinedTrace> trials;
      for (std::size_t i = 0; i < an_send.size(); ++i) {
        trials.push_back(join_traces(read_send_log(an_send[i]), read_recv_log(an_recv[i])));
      }
      const TraceAnalysis a = analyze_trials(trials, lat, env);
      if (a.pooled.negative_latency_warning) {
        std::cerr << "analyze: warning: " << a.pooled.negative_fraction * 100.0
                  << "% of latencies are negative; the clocks are probably skewed\n";
      }
      if (!an_gaps.empty()) {
        if (trials.size() == 1) {
          write_gap_csv(an_gaps, a.pooled.gaps);
        } else {
          const std::filesystem::path base(an_gaps);
          for (std::size_t i = 0; i < a.trials.size(); ++i) {
            auto p = base;
            p.replace_filename(base.stem().string() + "_trial" + std::to_string(i + 1) +
                               base.extension().string());
            write_gap_csv(p.string(), a.trials[i].gaps);
          }
          write_gap_csv(an_gaps, a.pooled.gaps);
        }
      }
      if (an_json.empty()) {
        std::cout << to_json(a) << '\n';
      } else {
        std::ofstream out(an_json);
        if (!out) throw std::runtime_error("cannot write '" + an_json + "'");
        out << to_json(a) << '\n';
      }
      return 0;
    }

    if (inspect->parsed()) return codec_inspect(in_path, in_hex, in_cfg, in_archive, in_record);
    if (demo->parsed()) return codec_demo(demo_dir, demo_soc);

    if (e2e->parsed()) {
      eo.pacing = parse_pacing(e2e_pacing, e2e_speed);
      eo.bind = parse_endpoint(e2e_bind, "--bind");
      eo.impairment = e2e_imp.resolve();
      eo.detector = e2e_det.resolve();
      if (!e2e_udp.empty()) eo.event_udp = parse_endpoint(e2e_udp, "--events-udp");
      eo.output_dir = e2e_dir;
      eo.archive = load_archive_checked(e2e_archive, e2e_fps);
      const E2eResult r = run_e2e(eo);
      for (const auto& ev : r.detection.events) {
        std::cout << event_json(ev, static_cast<double>(r.start_soc)) << '\n';
      }
      std::cerr << "e2e: sent " << r.playback.frames_sent << " frames in "
                << r.playback.wall_duration_s << " s; received " << r.stats.frames_received
                << ", forwarded " << r.stats.forwarded << ", duplicates "
                << r.stats.duplicates_dropped << ", missing " << r.stats.frames_missing << '\n';
      if (r.trace) {
        std::cerr << "e2e: latency mean " << r.trace->pooled.mean_ms << " ms, p99 "
                  << r.trace->pooled.p99_ms << " ms\n";
      }
      std::cerr << "e2e: detector " << summary_json(r.detection) << '\n';
      std::cerr << "e2e: files in " << e2e_dir << '\n';
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "synchro: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "synchro: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
