#include "synchro/frame_codec.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "byte_io.hpp"

namespace synchro {

using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr std::size_t kNameWidth = 16;

[[noreturn]] void fail(CodecErrc code, std::size_t offset, const std::string& what) {
  throw CodecError(code, offset, what);
}

std::uint8_t sync_second_byte(FrameType type, std::uint8_t version) {
  return static_cast<std::uint8_t>((static_cast<unsigned>(type) << 4) | (version & 0x0F));
}

void check_header(const FrameHeader& h) {
  if (h.version == 0 || h.version > 0x0F) {
    fail(CodecErrc::InvalidField, 1, "version must be 1..15");
  }
  if (h.frac_sec > kMaxFracSec) {
    fail(CodecErrc::InvalidField, 10, "frac_sec exceeds 24 bits");
  }
}

// Writes SYNC..FRACSEC with a placeholder size; finish() patches it.
ByteWriter begin_frame(FrameType type, const FrameHeader& h) {
  check_header(h);
  ByteWriter w;
  w.u8(kSyncByte);
  w.u8(sync_second_byte(type, h.version));
  w.u16(0);
  w.u16(h.id_code);
  w.u32(h.soc);
  w.u32((std::uint32_t{h.time_quality} << 24) | h.frac_sec);
  return w;
}

std::vector<std::uint8_t> finish_frame(ByteWriter& w) {
  const std::size_t total = w.size() + kChecksumSize;
  if (total > 0xFFFF) {
    fail(CodecErrc::InvalidField, 2, "frame exceeds 65535 bytes");
  }
  w.patch_u16(2, static_cast<std::uint16_t>(total));
  const std::uint16_t chk = checksum(w.bytes());
  w.u16(chk);
  return std::move(w.bytes());
}

void check_name(const std::string& name, std::size_t offset) {
  if (name.size() > kNameWidth) {
    fail(CodecErrc::InvalidField, offset, "name longer than 16 bytes: " + name);
  }
}

bool is_integral_in(double v, double lo, double hi) {
  return std::isfinite(v) && std::floor(v) == v && v >= lo && v <= hi;
}

std::int16_t checked_i16(double v, std::size_t offset, const char* field) {
  if (!is_integral_in(v, -32768.0, 32767.0)) {
    fail(CodecErrc::InvalidField, offset, std::string(field) + " is not an int16 count");
  }
  return static_cast<std::int16_t>(v);
}

std::uint16_t checked_u16(double v, std::size_t offset, const char* field) {
  if (!is_integral_in(v, 0.0, 65535.0)) {
    fail(CodecErrc::InvalidField, offset, std::string(field) + " is not a uint16 count");
  }
  return static_cast<std::uint16_t>(v);
}

void check_cfg(const ConfigFrame& cfg) {
  if (cfg.time_base == 0 || cfg.time_base > kMaxFracSec) {
    fail(CodecErrc::InvalidField, 14, "time_base must be in 1..2^24-1");
  }
  if (cfg.data_rate == 0) {
    fail(CodecErrc::InvalidField, 0, "data_rate must be nonzero");
  }
  if (cfg.pmus.size() > 0xFFFF) {
    fail(CodecErrc::InvalidField, 18, "too many PMU blocks");
  }
}

FrameHeader read_header(ByteReader& r) {
  FrameHeader h;
  r.u8();
  h.version = r.u8() & 0x0F;
  h.frame_size = r.u16();
  h.id_code = r.u16();
  h.soc = r.u32();
  const std::uint32_t fracsec = r.u32();
  h.time_quality = static_cast<std::uint8_t>(fracsec >> 24);
  h.frac_sec = fracsec & kMaxFracSec;
  return h;
}

ConfigFrame decode_config(ByteReader& r, const FrameHeader& h, ConfigRevision rev,
                          std::size_t body_end) {
  ConfigFrame cfg;
  cfg.header = h;
  cfg.revision = rev;
  const std::size_t tb_at = r.pos();
  cfg.time_base = r.u32() & kMaxFracSec;
  if (cfg.time_base == 0) fail(CodecErrc::InvalidField, tb_at, "time_base is zero");
  const std::uint16_t num_pmu = r.u16();
  cfg.pmus.reserve(num_pmu);
  for (std::uint16_t k = 0; k < num_pmu; ++k) {
    PmuConfig p;
    p.station_name = r.text(kNameWidth);
    p.id_code = r.u16();
    p.format = FormatFlags::from_word(r.u16());
    const std::uint16_t phnmr = r.u16();
    const std::uint16_t annmr = r.u16();
    const std::uint16_t dgnmr = r.u16();
    // Bound the channel counts before allocating.
    const std::size_t names = std::size_t{phnmr} + annmr + 16u * dgnmr;
    const std::size_t need = names * kNameWidth + 4u * (std::size_t{phnmr} + annmr + dgnmr) + 4;
    if (r.pos() + need > body_end) {
      fail(CodecErrc::SizeMismatch, r.pos(), "channel counts exceed frame length");
    }
    p.phasors.resize(phnmr);
    p.analogs.resize(annmr);
    p.digitals.resize(dgnmr);
    for (auto& ph : p.phasors) ph.name = r.text(kNameWidth);
    for (auto& an : p.analogs) an.name = r.text(kNameWidth);
    for (auto& dg : p.digitals) {
      for (auto& n : dg.names) n = r.text(kNameWidth);
    }
    for (auto& ph : p.phasors) {
      const std::size_t at = r.pos();
      const std::uint8_t kind = r.u8();
      if (kind > 1) fail(CodecErrc::InvalidField, at, "unknown phasor unit type");
      ph.kind = static_cast<PhasorKind>(kind);
      ph.scale = r.u24();
    }
    for (auto& an : p.analogs) {
      const std::size_t at = r.pos();
      const std::uint8_t kind = r.u8();
      if (kind > 2) fail(CodecErrc::InvalidField, at, "unknown analog unit type");
      an.kind = static_cast<AnalogKind>(kind);
      std::uint32_t raw = r.u24();
      if (raw & 0x800000) raw |= 0xFF000000u;
      an.scale = static_cast<std::int32_t>(raw);
    }
    for (auto& dg : p.digitals) {
      dg.normal_mask = r.u16();
      dg.valid_mask = r.u16();
    }
    p.nominal_50hz = (r.u16() & 0x0001) != 0;
    p.cfg_count = r.u16();
    cfg.pmus.push_back(std::move(p));
  }
  const std::size_t rate_at = r.pos();
  cfg.data_rate = r.i16();
  if (cfg.data_rate == 0) fail(CodecErrc::InvalidField, rate_at, "data_rate is zero");
  if (r.pos() != body_end) {
    fail(CodecErrc::SizeMismatch, r.pos(), "trailing bytes after DATA_RATE");
  }
  return cfg;
}

DataFrame decode_data(ByteReader& r, const FrameHeader& h, const ConfigFrame& cfg,
                      std::size_t body_end) {
  if (h.id_code != cfg.header.id_code) {
    fail(CodecErrc::IdCodeMismatch, 4,
         "data frame id_code " + std::to_string(h.id_code) + " but config is for " +
             std::to_string(cfg.header.id_code));
  }
  const std::size_t expected = cfg.data_frame_size();
  if (std::size_t{h.frame_size} != expected) {
    fail(CodecErrc::ChannelCountMismatch, kCommonHeaderSize,
         "data frame is " + std::to_string(h.frame_size) + " bytes, config implies " +
             std::to_string(expected));
  }
  if (h.frac_sec >= cfg.time_base) {
    fail(CodecErrc::InvalidField, 10, "frac_sec not below time_base");
  }
  DataFrame df;
  df.header = h;
  df.pmus.reserve(cfg.pmus.size());
  for (const auto& p : cfg.pmus) {
    PmuData d;
    d.stat = r.u16();
    d.phasors.resize(p.phasors.size());
    for (auto& ph : d.phasors) {
      if (p.format.phasor_float) {
        ph.first = r.f32();
        ph.second = r.f32();
      } else if (p.format.polar) {
        ph.first = r.u16();
        ph.second = r.i16();
      } else {
        ph.first = r.i16();
        ph.second = r.i16();
      }
    }
    if (p.format.freq_float) {
      d.freq = r.f32();
      d.dfreq = r.f32();
    } else {
      d.freq = r.i16();
      d.dfreq = r.i16();
    }
    d.analogs.resize(p.analogs.size());
    for (auto& a : d.analogs) {
      a = p.format.analog_float ? static_cast<double>(r.f32()) : static_cast<double>(r.i16());
    }
    d.digitals.resize(p.digitals.size());
    for (auto& dg : d.digitals) dg = r.u16();
    df.pmus.push_back(std::move(d));
  }
  if (r.pos() != body_end) {
    fail(CodecErrc::ChannelCountMismatch, r.pos(), "data body length disagrees with config");
  }
  return df;
}

}  // namespace

// ---------------------------------------------------------------------------

CodecError::CodecError(CodecErrc code, std::size_t offset, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + " at offset " + std::to_string(offset) +
                         ": " + what),
      code_(code),
      offset_(offset) {}

const char* to_string(CodecErrc code) {
  switch (code) {
    case CodecErrc::BadSync: return "BadSync";
    case CodecErrc::BadChecksum: return "BadChecksum";
    case CodecErrc::SizeMismatch: return "SizeMismatch";
    case CodecErrc::MissingConfig: return "MissingConfig";
    case CodecErrc::ChannelCountMismatch: return "ChannelCountMismatch";
    case CodecErrc::IdCodeMismatch: return "IdCodeMismatch";
    case CodecErrc::UnknownFrameType: return "UnknownFrameType";
    case CodecErrc::UnknownCommand: return "UnknownCommand";
    case CodecErrc::InvalidField: return "InvalidField";
  }
  return "?";
}

const char* to_string(FrameType type) {
  switch (type) {
    case FrameType::Data: return "data";
    case FrameType::Header: return "header";
    case FrameType::Config1: return "cfg-1";
    case FrameType::Config2: return "cfg-2";
    case FrameType::Command: return "command";
  }
  return "?";
}

const char* to_string(CommandCode code) {
  switch (code) {
    case CommandCode::TurnOffTransmission: return "turn-off-transmission";
    case CommandCode::TurnOnTransmission: return "turn-on-transmission";
    case CommandCode::SendHeader: return "send-header";
    case CommandCode::SendConfig1: return "send-cfg-1";
    case CommandCode::SendConfig2: return "send-cfg-2";
  }
  return "?";
}

bool is_known_command(std::uint16_t code) { return code >= 1 && code <= 5; }

std::uint16_t FormatFlags::to_word() const {
  return static_cast<std::uint16_t>((freq_float ? 0x8 : 0) | (analog_float ? 0x4 : 0) |
                                    (phasor_float ? 0x2 : 0) | (polar ? 0x1 : 0));
}

FormatFlags FormatFlags::from_word(std::uint16_t word) {
  return FormatFlags{(word & 0x8) != 0, (word & 0x4) != 0, (word & 0x2) != 0,
                     (word & 0x1) != 0};
}

std::size_t PmuConfig::data_block_size() const {
  return 2 + phasors.size() * (format.phasor_float ? 8 : 4) + (format.freq_float ? 8 : 4) +
         analogs.size() * (format.analog_float ? 4 : 2) + digitals.size() * 2;
}

std::size_t ConfigFrame::data_frame_size() const {
  std::size_t n = kCommonHeaderSize + kChecksumSize;
  for (const auto& p : pmus) n += p.data_block_size();
  return n;
}

FrameType frame_type(const Frame& frame) {
  struct Visitor {
    FrameType operator()(const DataFrame&) const { return FrameType::Data; }
    FrameType operator()(const ConfigFrame& c) const {
      return c.revision == ConfigRevision::Cfg1 ? FrameType::Config1 : FrameType::Config2;
    }
    FrameType operator()(const HeaderFrame&) const { return FrameType::Header; }
    FrameType operator()(const CommandFrame&) const { return FrameType::Command; }
  };
  return std::visit(Visitor{}, frame);
}

const FrameHeader& header_of(const Frame& frame) {
  return std::visit([](const auto& f) -> const FrameHeader& { return f.header; }, frame);
}

// ---------------------------------------------------------------------------
// encode

std::vector<std::uint8_t> encode(const DataFrame& frame, const ConfigFrame& cfg) {
  check_cfg(cfg);
  if (frame.header.id_code != cfg.header.id_code) {
    fail(CodecErrc::IdCodeMismatch, 4, "data frame id_code differs from config");
  }
  if (frame.pmus.size() != cfg.pmus.size()) {
    fail(CodecErrc::ChannelCountMismatch, kCommonHeaderSize,
         "frame has " + std::to_string(frame.pmus.size()) + " PMU blocks, config has " +
             std::to_string(cfg.pmus.size()));
  }
  if (frame.header.frac_sec >= cfg.time_base) {
    fail(CodecErrc::InvalidField, 10, "frac_sec not below time_base");
  }
  ByteWriter w = begin_frame(FrameType::Data, frame.header);
  for (std::size_t k = 0; k < cfg.pmus.size(); ++k) {
    const PmuConfig& p = cfg.pmus[k];
    const PmuData& d = frame.pmus[k];
    if (d.phasors.size() != p.phasors.size() || d.analogs.size() != p.analogs.size() ||
        d.digitals.size() != p.digitals.size()) {
      fail(CodecErrc::ChannelCountMismatch, w.size(),
           "PMU block " + std::to_string(k) + " channel counts differ from config");
    }
    w.u16(d.stat);
    for (const auto& ph : d.phasors) {
      if (p.format.phasor_float) {
        w.f32(static_cast<float>(ph.first));
        w.f32(static_cast<float>(ph.second));
      } else if (p.format.polar) {
        w.u16(checked_u16(ph.first, w.size(), "phasor magnitude"));
        w.i16(checked_i16(ph.second, w.size(), "phasor angle"));
      } else {
        w.i16(checked_i16(ph.first, w.size(), "phasor real"));
        w.i16(checked_i16(ph.second, w.size(), "phasor imaginary"));
      }
    }
    if (p.format.freq_float) {
      w.f32(static_cast<float>(d.freq));
      w.f32(static_cast<float>(d.dfreq));
    } else {
      w.i16(checked_i16(d.freq, w.size(), "freq"));
      w.i16(checked_i16(d.dfreq, w.size(), "dfreq"));
    }
    for (double a : d.analogs) {
      if (p.format.analog_float) {
        w.f32(static_cast<float>(a));
      } else {
        w.i16(checked_i16(a, w.size(), "analog"));
      }
    }
    for (std::uint16_t dg : d.digitals) w.u16(dg);
  }
  return finish_frame(w);
}

std::vector<std::uint8_t> encode(const ConfigFrame& cfg) {
  check_cfg(cfg);
  const FrameType type =
      cfg.revision == ConfigRevision::Cfg1 ? FrameType::Config1 : FrameType::Config2;
  ByteWriter w = begin_frame(type, cfg.header);
  w.u32(cfg.time_base);
  w.u16(static_cast<std::uint16_t>(cfg.pmus.size()));
  for (const auto& p : cfg.pmus) {
    if (p.phasors.size() > 0xFFFF || p.analogs.size() > 0xFFFF || p.digitals.size() > 0xFFFF) {
      fail(CodecErrc::InvalidField, w.size(), "channel count exceeds 16 bits");
    }
    check_name(p.station_name, w.size());
    w.text(p.station_name, kNameWidth);
    w.u16(p.id_code);
    w.u16(p.format.to_word());
    w.u16(static_cast<std::uint16_t>(p.phasors.size()));
    w.u16(static_cast<std::uint16_t>(p.analogs.size()));
    w.u16(static_cast<std::uint16_t>(p.digitals.size()));
    for (const auto& ph : p.phasors) {
      check_name(ph.name, w.size());
      w.text(ph.name, kNameWidth);
    }
    for (const auto& an : p.analogs) {
      check_name(an.name, w.size());
      w.text(an.name, kNameWidth);
    }
    for (const auto& dg : p.digitals) {
      for (const auto& n : dg.names) {
        check_name(n, w.size());
        w.text(n, kNameWidth);
      }
    }
    for (const auto& ph : p.phasors) {
      if (ph.scale > kMaxFracSec) fail(CodecErrc::InvalidField, w.size(), "PHUNIT > 24 bits");
      w.u8(static_cast<std::uint8_t>(ph.kind));
      w.u24(ph.scale);
    }
    for (const auto& an : p.analogs) {
      if (an.scale < -(1 << 23) || an.scale >= (1 << 23)) {
        fail(CodecErrc::InvalidField, w.size(), "ANUNIT outside signed 24 bits");
      }
      w.u8(static_cast<std::uint8_t>(an.kind));
      w.u24(static_cast<std::uint32_t>(an.scale) & kMaxFracSec);
    }
    for (const auto& dg : p.digitals) {
      w.u16(dg.normal_mask);
      w.u16(dg.valid_mask);
    }
    w.u16(p.nominal_50hz ? 1 : 0);
    w.u16(p.cfg_count);
  }
  w.i16(cfg.data_rate);
  return finish_frame(w);
}

std::vector<std::uint8_t> encode(const HeaderFrame& frame) {
  ByteWriter w = begin_frame(FrameType::Header, frame.header);
  w.raw(frame.text);
  return finish_frame(w);
}

std::vector<std::uint8_t> encode(const CommandFrame& frame) {
  ByteWriter w = begin_frame(FrameType::Command, frame.header);
  w.u16(static_cast<std::uint16_t>(frame.command));
  return finish_frame(w);
}

std::vector<std::uint8_t> encode(const Frame& frame, const ConfigFrame* cfg) {
  if (const auto* df = std::get_if<DataFrame>(&frame)) {
    if (cfg == nullptr) fail(CodecErrc::MissingConfig, 0, "data frame needs a config");
    return encode(*df, *cfg);
  }
  return std::visit(
      [](const auto& f) -> std::vector<std::uint8_t> {
        if constexpr (std::is_same_v<std::decay_t<decltype(f)>, DataFrame>) {
          return {};
        } else {
          return encode(f);
        }
      },
      frame);
}

// ---------------------------------------------------------------------------
// decode

FrameType peek_type(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2) fail(CodecErrc::SizeMismatch, bytes.size(), "shorter than SYNC");
  if (bytes[0] != kSyncByte) fail(CodecErrc::BadSync, 0, "first byte is not 0xAA");
  const std::uint8_t b = bytes[1];
  const unsigned type = (b >> 4) & 0x07;
  if ((b & 0x80) != 0 || type > static_cast<unsigned>(FrameType::Command)) {
    fail(CodecErrc::UnknownFrameType, 1, "unsupported frame type bits " + std::to_string(type));
  }
  return static_cast<FrameType>(type);
}

FrameHeader peek_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kCommonHeaderSize) {
    fail(CodecErrc::SizeMismatch, bytes.size(), "shorter than the 14-byte common header");
  }
  ByteReader r(bytes);
  return read_header(r);
}

Frame decode(std::span<const std::uint8_t> bytes, const ConfigFrame* cfg) {
  if (bytes.size() < kMinFrameSize) {
    fail(CodecErrc::SizeMismatch, bytes.size(),
         "datagram of " + std::to_string(bytes.size()) + " bytes is shorter than 16");
  }
  const std::size_t body_end = bytes.size() - kChecksumSize;
  const std::uint16_t stored =
      static_cast<std::uint16_t>((bytes[body_end] << 8) | bytes[body_end + 1]);
  const std::uint16_t computed = checksum(bytes.first(body_end));
  if (stored != computed) {
    fail(CodecErrc::BadChecksum, body_end, "stored CHK does not match CRC-CCITT");
  }
  const FrameType type = peek_type(bytes);
  ByteReader r(bytes);
  const FrameHeader h = read_header(r);
  if (h.version == 0) fail(CodecErrc::UnknownFrameType, 1, "version 0");
  if (std::size_t{h.frame_size} != bytes.size()) {
    fail(CodecErrc::SizeMismatch, 2,
         "FRAMESIZE " + std::to_string(h.frame_size) + " but datagram has " +
             std::to_string(bytes.size()) + " bytes");
  }

  switch (type) {
    case FrameType::Data: {
      if (cfg == nullptr) fail(CodecErrc::MissingConfig, 0, "data frame needs a config");
      return decode_data(r, h, *cfg, body_end);
    }
    case FrameType::Config1:
      return decode_config(r, h, ConfigRevision::Cfg1, body_end);
    case FrameType::Config2:
      return decode_config(r, h, ConfigRevision::Cfg2, body_end);
    case FrameType::Header:
      return HeaderFrame{h, r.rest_text(body_end)};
    case FrameType::Command: {
      const std::size_t at = r.pos();
      const std::uint16_t code = r.u16();
      if (!is_known_command(code)) {
        fail(CodecErrc::UnknownCommand, at, "command code " + std::to_string(code));
      }
      if (r.pos() != body_end) {
        fail(CodecErrc::SizeMismatch, r.pos(), "extended command data is not supported");
      }
      return CommandFrame{h, static_cast<CommandCode>(code)};
    }
  }
  fail(CodecErrc::UnknownFrameType, 1, "unreachable");
}

// ---------------------------------------------------------------------------
// Engineering units

double normalize_angle(double radians) {
  constexpr double kPi = std::numbers::pi;
  double r = std::remainder(radians, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  if (r > kPi) r -= 2.0 * kPi;
  return r;
}

namespace {

PhasorValue phasor_from_wire(const RawPhasor& raw, const PmuConfig& p, const PhasorChannel& ch) {
  const double scale = p.format.phasor_float ? 1.0 : ch.scale * 1e-5;
  if (p.format.polar) {
    const double angle = p.format.phasor_float ? raw.second : raw.second * 1e-4;
    return {raw.first * scale, normalize_angle(angle)};
  }
  const double re = raw.first * scale;
  const double im = raw.second * scale;
  return {std::hypot(re, im), normalize_angle(std::atan2(im, re))};
}

double round_clamp(double v, double lo, double hi) {
  if (!std::isfinite(v)) return 0.0;
  return std::clamp(std::nearbyint(v), lo, hi);
}

double as_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

MeasurementRecord to_record(const DataFrame& frame, const ConfigFrame& cfg,
                            std::size_t pmu_index) {
  const PmuConfig& p = cfg.pmus.at(pmu_index);
  const PmuData& d = frame.pmus.at(pmu_index);
  MeasurementRecord rec;
  rec.stream_id = frame.header.id_code;
  rec.id_code = p.id_code;
  rec.soc = frame.header.soc;
  rec.frac_sec = frame.header.frac_sec;
  rec.time_base = cfg.time_base;
  rec.timestamp = static_cast<double>(frame.header.soc) +
                  static_cast<double>(frame.header.frac_sec) / cfg.time_base;
  rec.stat = d.stat;
  rec.frequency_hz = p.format.freq_float ? d.freq : p.nominal_hz() + d.freq / 1000.0;
  rec.rocof_hzps = p.format.freq_float ? d.dfreq : d.dfreq / 100.0;
  rec.phasors.reserve(d.phasors.size());
  for (std::size_t i = 0; i < d.phasors.size(); ++i) {
    rec.phasors.push_back(phasor_from_wire(d.phasors[i], p, p.phasors.at(i)));
  }
  rec.analogs.reserve(d.analogs.size());
  for (std::size_t i = 0; i < d.analogs.size(); ++i) {
    rec.analogs.push_back(p.format.analog_float ? d.analogs[i]
                                                : d.analogs[i] * p.analogs.at(i).scale * 1e-5);
  }
  rec.digitals = d.digitals;
  return rec;
}

std::vector<MeasurementRecord> to_records(const DataFrame& frame, const ConfigFrame& cfg) {
  std::vector<MeasurementRecord> out;
  out.reserve(cfg.pmus.size());
  for (std::size_t k = 0; k < cfg.pmus.size(); ++k) out.push_back(to_record(frame, cfg, k));
  return out;
}

PmuData to_pmu_data(const MeasurementRecord& rec, const PmuConfig& p) {
  if (rec.phasors.size() != p.phasors.size() || rec.analogs.size() > p.analogs.size() ||
      rec.digitals.size() > p.digitals.size()) {
    fail(CodecErrc::ChannelCountMismatch, 0, "record shape differs from PMU config");
  }
  PmuData d;
  d.stat = rec.stat;
  d.phasors.reserve(p.phasors.size());
  for (std::size_t i = 0; i < p.phasors.size(); ++i) {
    const PhasorValue& v = rec.phasors[i];
    RawPhasor raw;
    if (p.format.phasor_float) {
      if (p.format.polar) {
        raw = {as_f32(v.magnitude), as_f32(v.angle)};
      } else {
        raw = {as_f32(v.magnitude * std::cos(v.angle)), as_f32(v.magnitude * std::sin(v.angle))};
      }
    } else {
      const double counts_per_unit = 1.0 / (p.phasors[i].scale * 1e-5);
      if (p.format.polar) {
        raw = {round_clamp(v.magnitude * counts_per_unit, 0.0, 65535.0),
               round_clamp(normalize_angle(v.angle) * 1e4, -32768.0, 32767.0)};
      } else {
        raw = {round_clamp(v.magnitude * std::cos(v.angle) * counts_per_unit, -32768.0, 32767.0),
               round_clamp(v.magnitude * std::sin(v.angle) * counts_per_unit, -32768.0, 32767.0)};
      }
    }
    d.phasors.push_back(raw);
  }
  if (p.format.freq_float) {
    d.freq = as_f32(rec.frequency_hz);
    d.dfreq = as_f32(rec.rocof_hzps);
  } else {
    d.freq = round_clamp((rec.frequency_hz - p.nominal_hz()) * 1000.0, -32768.0, 32767.0);
    d.dfreq = round_clamp(rec.rocof_hzps * 100.0, -32768.0, 32767.0);
  }
  d.analogs.assign(p.analogs.size(), 0.0);
  for (std::size_t i = 0; i < rec.analogs.size(); ++i) {
    d.analogs[i] = p.format.analog_float
                       ? as_f32(rec.analogs[i])
                       : round_clamp(rec.analogs[i] / (p.analogs[i].scale * 1e-5), -32768.0,
                                     32767.0);
  }
  d.digitals.assign(p.digitals.size(), 0);
  std::copy(rec.digitals.begin(), rec.digitals.end(), d.digitals.begin());
  return d;
}

}  // namespace synchro
