#include "synchro/archive.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "synchro/csv.hpp"

namespace synchro {
namespace {

constexpr double kSpacingTolerance = 1e-6;

std::string column(std::size_t k, const char* suffix) {
  return "pmu" + std::to_string(k + 1) + "_" + suffix;
}

constexpr const char* kColumnSuffixes[] = {"freq_hz", "rocof_hzps", "vmag_v", "vang_rad"};

std::string header_line(std::size_t num_pmus) {
  std::string h = "t_s";
  for (std::size_t k = 0; k < num_pmus; ++k) {
    for (const char* s : kColumnSuffixes) h += "," + column(k, s);
  }
  return h;
}

}  // namespace

ArchiveError::ArchiveError(Kind kind, std::size_t line, const std::string& what)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
      kind_(kind),
      line_(line) {}

std::uint32_t time_base_for(int fps) {
  if (fps <= 0) throw std::invalid_argument("fps must be positive");
  if (1'000'000 % fps == 0) return 1'000'000;
  const std::uint32_t tb = static_cast<std::uint32_t>(fps) * 10'000u;
  return tb <= kMaxFracSec ? tb : static_cast<std::uint32_t>(fps);
}

ConfigFrame make_config(std::size_t num_pmus, int fps, bool nominal_50hz,
                        const StreamLayout& layout) {
  if (fps <= 0 || fps > 0x7FFF) throw std::invalid_argument("fps out of range");
  ConfigFrame cfg;
  cfg.header.id_code = layout.id_code_base;
  cfg.time_base = time_base_for(fps);
  cfg.data_rate = static_cast<std::int16_t>(fps);
  for (std::size_t k = 0; k < num_pmus; ++k) {
    PmuConfig p;
    p.station_name = layout.station_prefix + std::to_string(k + 1);
    p.id_code = static_cast<std::uint16_t>(layout.id_code_base + k);
    p.format = FormatFlags{true, true, true, true};
    for (const char* name : {"VA", "VB", "VC"}) {
      p.phasors.push_back(PhasorChannel{name, PhasorKind::Voltage, 1});
    }
    DigitalWord status;
    for (std::size_t i = 0; i < status.names.size(); ++i) status.names[i] = "D" + std::to_string(i);
    p.digitals.push_back(status);
    p.nominal_50hz = nominal_50hz;
    cfg.pmus.push_back(std::move(p));
  }
  return cfg;
}

ConfigFrame stream_config(const ConfigFrame& cfg, std::size_t k) {
  ConfigFrame out = cfg;
  out.pmus = {cfg.pmus.at(k)};
  out.header.id_code = cfg.pmus[k].id_code;
  return out;
}

Archive parse_archive(std::istream& in, std::optional<int> fps, const StreamLayout& layout) {
  std::string line;
  if (!std::getline(in, line)) throw ArchiveError(ArchiveError::Kind::Parse, 1, "empty archive");
  const auto header = csv::split(csv::chomp(line));
  if (header.empty() || header[0] != "t_s" || (header.size() - 1) % 4 != 0 ||
      header.size() < 5) {
    throw ArchiveError(ArchiveError::Kind::Parse, 1,
                       "header must be t_s followed by 4 columns per PMU");
  }
  const std::size_t num_pmus = (header.size() - 1) / 4;
  for (std::size_t k = 0; k < num_pmus; ++k) {
    for (std::size_t c = 0; c < 4; ++c) {
      if (header[1 + 4 * k + c] != column(k, kColumnSuffixes[c])) {
        throw ArchiveError(ArchiveError::Kind::Parse, 1,
                           "expected column " + column(k, kColumnSuffixes[c]));
      }
    }
  }

  Archive ar;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const auto text = csv::chomp(line);
    if (text.empty()) continue;
    const auto f = csv::split(text);
    if (f.size() != header.size()) {
      throw ArchiveError(ArchiveError::Kind::Parse, line_no,
                         "expected " + std::to_string(header.size()) + " columns, got " +
                             std::to_string(f.size()));
    }
    ArchiveRow row;
    try {
      row.t = csv::to_double(f[0], line_no);
      row.pmus.resize(num_pmus);
      for (std::size_t k = 0; k < num_pmus; ++k) {
        row.pmus[k].frequency_hz = csv::to_double(f[1 + 4 * k], line_no);
        row.pmus[k].rocof_hzps = csv::to_double(f[2 + 4 * k], line_no);
        row.pmus[k].vmag_v = csv::to_double(f[3 + 4 * k], line_no);
        row.pmus[k].vang_rad = csv::to_double(f[4 + 4 * k], line_no);
      }
    } catch (const csv::ParseError& e) {
      throw ArchiveError(ArchiveError::Kind::Parse, line_no, e.what());
    }
    if (!ar.rows.empty() && !(row.t > ar.rows.back().t)) {
      throw ArchiveError(ArchiveError::Kind::NonMonotonicTime, line_no,
                         "timestamp " + csv::format(row.t) + " does not increase");
    }
    ar.rows.push_back(std::move(row));
  }
  if (ar.rows.empty()) throw ArchiveError(ArchiveError::Kind::Parse, line_no, "no data rows");

  if (fps) {
    ar.fps = *fps;
  } else if (ar.rows.size() >= 2) {
    ar.fps = static_cast<int>(std::lround(1.0 / (ar.rows[1].t - ar.rows[0].t)));
  } else {
    throw ArchiveError(ArchiveError::Kind::Parse, 2, "single-row archive needs an explicit fps");
  }
  if (ar.fps <= 0 || ar.fps > 0x7FFF) {
    throw ArchiveError(ArchiveError::Kind::NonUniformSpacing, 2, "implausible frame rate");
  }
  const double spacing = 1.0 / ar.fps;
  for (std::size_t i = 1; i < ar.rows.size(); ++i) {
    const double dt = ar.rows[i].t - ar.rows[i - 1].t;
    if (std::abs(dt - spacing) > kSpacingTolerance) {
      throw ArchiveError(ArchiveError::Kind::NonUniformSpacing, i + 2,
                         "spacing " + csv::format(dt) + " s, expected 1/" +
                             std::to_string(ar.fps));
    }
  }

  const double f0 = ar.rows.front().pmus.front().frequency_hz;
  const bool nominal_50 = std::abs(f0 - 50.0) < std::abs(f0 - 60.0);
  ar.cfg = make_config(num_pmus, ar.fps, nominal_50, layout);
  return ar;
}

Archive load_archive(const std::string& path, std::optional<int> fps, const StreamLayout& layout) {
  std::ifstream in(path);
  if (!in) throw ArchiveError(ArchiveError::Kind::Io, 0, "cannot open archive '" + path + "'");
  return parse_archive(in, fps, layout);
}

void write_archive(std::ostream& out, const std::vector<ArchiveRow>& rows) {
  const std::size_t num_pmus = rows.empty() ? 1 : rows.front().pmus.size();
  out << header_line(num_pmus) << '\n';
  std::string buf;
  for (const auto& row : rows) {
    buf = csv::format(row.t);
    for (const auto& s : row.pmus) {
      buf += ',';
      buf += csv::format(s.frequency_hz);
      buf += ',';
      buf += csv::format(s.rocof_hzps);
      buf += ',';
      buf += csv::format(s.vmag_v);
      buf += ',';
      buf += csv::format(s.vang_rad);
    }
    buf += '\n';
    out << buf;
  }
}

void write_archive(const std::string& path, const std::vector<ArchiveRow>& rows) {
  std::ofstream out(path);
  if (!out) throw ArchiveError(ArchiveError::Kind::Io, 0, "cannot write '" + path + "'");
  write_archive(out, rows);
}

double clean_frequency(const SynthParams& params, double t) {
  double f = params.base_freq_hz;
  if (params.event && t >= params.event->onset_s) {
    const auto& ev = *params.event;
    const double shape =
        ev.recovery_tau_s > 0.0 ? std::exp(-(t - ev.onset_s) / ev.recovery_tau_s) : 1.0;
    f += ev.step_hz * shape;
  }
  return f;
}

std::vector<ArchiveRow> synthesize(const SynthParams& params) {
  if (!(params.duration_s > 0.0) || params.fps <= 0 || params.num_pmus == 0) {
    throw std::invalid_argument("synthesize: duration, fps and PMU count must be positive");
  }
  if (params.event && !(params.event->onset_s < params.duration_s)) {
    throw std::invalid_argument("synthesize: event onset must precede the end of the series");
  }
  const auto n = static_cast<std::size_t>(std::llround(params.duration_s * params.fps));
  const double dt = 1.0 / params.fps;
  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> unit(0.0, 1.0);

  std::vector<double> phase(params.num_pmus);
  for (std::size_t k = 0; k < params.num_pmus; ++k) phase[k] = 0.0 - 0.1 * static_cast<double>(k);

  std::vector<ArchiveRow> rows;
  rows.reserve(n);
  double prev_clean = clean_frequency(params, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / params.fps;
    const double clean = clean_frequency(params, t);
    const double rocof = i == 0 ? 0.0 : (clean - prev_clean) * params.fps;
    ArchiveRow row;
    row.t = t;
    row.pmus.resize(params.num_pmus);
    for (std::size_t k = 0; k < params.num_pmus; ++k) {
      if (i > 0) phase[k] = normalize_angle(phase[k] + 2.0 * std::numbers::pi * (clean - params.nominal_hz) * dt);
      PmuSample& s = row.pmus[k];
      s.frequency_hz = clean + params.noise_std_hz * unit(rng);
      s.rocof_hzps = rocof;
      s.vmag_v = params.vmag_v * (1.0 + 2e-4 * unit(rng));
      s.vang_rad = phase[k];
    }
    rows.push_back(std::move(row));
    prev_clean = clean;
  }
  return rows;
}

MeasurementRecord record_from_row(const ArchiveRow& row, std::size_t k) {
  const PmuSample& s = row.pmus.at(k);
  constexpr double kThird = 2.0 * std::numbers::pi / 3.0;
  MeasurementRecord rec;
  rec.frequency_hz = s.frequency_hz;
  rec.rocof_hzps = s.rocof_hzps;
  rec.phasors = {PhasorValue{s.vmag_v, normalize_angle(s.vang_rad)},
                 PhasorValue{s.vmag_v, normalize_angle(s.vang_rad - kThird)},
                 PhasorValue{s.vmag_v, normalize_angle(s.vang_rad + kThird)}};
  rec.digitals = {0};
  return rec;
}

}  // namespace synchro
