#pragma once

// Encoder/decoder for the C37.118.2-2011 frame subset used by this toolkit:
// data frames, CFG-1/CFG-2 configuration frames, header frames and command
// frames. All integers are big-endian, floats are IEEE-754 single precision.
// docs/wire_format.md is the normative description of the byte layout.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace synchro {

inline constexpr std::uint8_t kSyncByte = 0xAA;
inline constexpr std::size_t kCommonHeaderSize = 14;
inline constexpr std::size_t kChecksumSize = 2;
inline constexpr std::size_t kMinFrameSize = kCommonHeaderSize + kChecksumSize;
inline constexpr std::uint32_t kMaxFracSec = 0xFFFFFF;

/// CRC-CCITT (poly 0x1021, init 0xFFFF, no reflection, no final xor).
std::uint16_t checksum(std::span<const std::uint8_t> bytes);

enum class CodecErrc {
  BadSync,
  BadChecksum,
  SizeMismatch,
  MissingConfig,
  ChannelCountMismatch,
  IdCodeMismatch,
  UnknownFrameType,
  UnknownCommand,
  InvalidField,
};

const char* to_string(CodecErrc code);

class CodecError : public std::runtime_error {
 public:
  CodecError(CodecErrc code, std::size_t offset, const std::string& what);

  CodecErrc code() const noexcept { return code_; }
  /// Byte offset into the frame where the problem was detected.
  std::size_t offset() const noexcept { return offset_; }

 private:
  CodecErrc code_;
  std::size_t offset_;
};

/// Frame type as carried in bits 6..4 of the second sync byte.
enum class FrameType : std::uint8_t {
  Data = 0,
  Header = 1,
  Config1 = 2,
  Config2 = 3,
  Command = 4,
};

const char* to_string(FrameType type);

struct FrameHeader {
  std::uint8_t version = 2;  // low nibble of SYNC byte 2 (1 = 2005, 2 = 2011)
  std::uint16_t frame_size = 0;  // filled by encode()
  std::uint16_t id_code = 0;
  std::uint32_t soc = 0;
  std::uint32_t frac_sec = 0;  // 24-bit fraction-of-second count
  std::uint8_t time_quality = 0;

  bool operator==(const FrameHeader&) const = default;
};

// ---------------------------------------------------------------------------
// Configuration

struct FormatFlags {
  bool freq_float = true;
  bool analog_float = true;
  bool phasor_float = true;
  bool polar = true;

  std::uint16_t to_word() const;
  static FormatFlags from_word(std::uint16_t word);

  bool operator==(const FormatFlags&) const = default;
};

enum class PhasorKind : std::uint8_t { Voltage = 0, Current = 1 };
enum class AnalogKind : std::uint8_t { SinglePoint = 0, Rms = 1, Peak = 2 };

struct PhasorChannel {
  std::string name;
  PhasorKind kind = PhasorKind::Voltage;
  // Unsigned 24-bit, 1e-5 V (or A) per count. Ignored for float formats.
  std::uint32_t scale = 1;

  bool operator==(const PhasorChannel&) const = default;
};

struct AnalogChannel {
  std::string name;
  AnalogKind kind = AnalogKind::SinglePoint;
  // Signed 24-bit, 1e-5 units per count. Ignored for float formats.
  std::int32_t scale = 1;

  bool operator==(const AnalogChannel&) const = default;
};

struct DigitalWord {
  std::array<std::string, 16> names;
  std::uint16_t normal_mask = 0;
  std::uint16_t valid_mask = 0xFFFF;

  bool operator==(const DigitalWord&) const = default;
};

struct PmuConfig {
  std::string station_name;
  std::uint16_t id_code = 0;
  FormatFlags format;
  std::vector<PhasorChannel> phasors;
  std::vector<AnalogChannel> analogs;
  std::vector<DigitalWord> digitals;
  bool nominal_50hz = false;  // FNOM bit 0
  std::uint16_t cfg_count = 0;

  double nominal_hz() const { return nominal_50hz ? 50.0 : 60.0; }
  /// Bytes this PMU occupies in a data frame body.
  std::size_t data_block_size() const;

  bool operator==(const PmuConfig&) const = default;
};

enum class ConfigRevision : std::uint8_t { Cfg1 = 1, Cfg2 = 2 };

struct ConfigFrame {
  FrameHeader header;
  ConfigRevision revision = ConfigRevision::Cfg2;
  std::uint32_t time_base = 1'000'000;  // 24-bit
  std::vector<PmuConfig> pmus;
  // > 0: frames per second, < 0: seconds per frame. Never zero.
  std::int16_t data_rate = 60;

  /// Total byte length of a data frame governed by this configuration.
  std::size_t data_frame_size() const;

  bool operator==(const ConfigFrame&) const = default;
};

// ---------------------------------------------------------------------------
// Data

// Wire-level phasor: (magnitude, angle) for polar formats, (real, imaginary)
// for rectangular ones. Integer formats carry raw counts.
struct RawPhasor {
  double first = 0.0;
  double second = 0.0;

  bool operator==(const RawPhasor&) const = default;
};

// One PMU block of a data frame, holding raw wire values: integer counts for
// the integer formats and float32-representable values for the float ones.
struct PmuData {
  std::uint16_t stat = 0;
  std::vector<RawPhasor> phasors;
  double freq = 0.0;   // int: mHz deviation from nominal; float: absolute Hz
  double dfreq = 0.0;  // int: ROCOF * 100; float: Hz/s
  std::vector<double> analogs;
  std::vector<std::uint16_t> digitals;

  bool operator==(const PmuData&) const = default;
};

struct DataFrame {
  FrameHeader header;
  std::vector<PmuData> pmus;

  bool operator==(const DataFrame&) const = default;
};

struct HeaderFrame {
  FrameHeader header;
  std::string text;

  bool operator==(const HeaderFrame&) const = default;
};

enum class CommandCode : std::uint16_t {
  TurnOffTransmission = 1,
  TurnOnTransmission = 2,
  SendHeader = 3,
  SendConfig1 = 4,
  SendConfig2 = 5,
};

bool is_known_command(std::uint16_t code);
const char* to_string(CommandCode code);

struct CommandFrame {
  FrameHeader header;
  CommandCode command = CommandCode::SendConfig2;

  bool operator==(const CommandFrame&) const = default;
};

using Frame = std::variant<DataFrame, ConfigFrame, HeaderFrame, CommandFrame>;

FrameType frame_type(const Frame& frame);
const FrameHeader& header_of(const Frame& frame);

// ---------------------------------------------------------------------------
// Codec

std::vector<std::uint8_t> encode(const DataFrame& frame, const ConfigFrame& cfg);
std::vector<std::uint8_t> encode(const ConfigFrame& frame);
std::vector<std::uint8_t> encode(const HeaderFrame& frame);
std::vector<std::uint8_t> encode(const CommandFrame& frame);
/// `cfg` is required for data frames and ignored otherwise.
std::vector<std::uint8_t> encode(const Frame& frame, const ConfigFrame* cfg = nullptr);

/// Checksum is verified before any other field, so any corruption of a
/// datagram that CRC-CCITT catches is reported as BadChecksum.
Frame decode(std::span<const std::uint8_t> bytes, const ConfigFrame* cfg = nullptr);

// Reads the common header fields without validating the checksum. Used by
// inspection tools and for routing datagrams to the right configuration.
FrameType peek_type(std::span<const std::uint8_t> bytes);
FrameHeader peek_header(std::span<const std::uint8_t> bytes);

// ---------------------------------------------------------------------------
// Engineering units

struct PhasorValue {
  double magnitude = 0.0;  // volts or amps
  double angle = 0.0;      // radians, (-pi, pi]

  bool operator==(const PhasorValue&) const = default;
};

struct MeasurementRecord {
  std::uint16_t stream_id = 0;  // id_code of the carrying frame
  std::uint16_t id_code = 0;    // id_code of the PMU block
  std::uint32_t soc = 0;
  std::uint32_t frac_sec = 0;
  std::uint32_t time_base = 1;
  double timestamp = 0.0;  // UTC seconds
  std::uint16_t stat = 0;
  double frequency_hz = 0.0;
  double rocof_hzps = 0.0;
  std::vector<PhasorValue> phasors;
  std::vector<double> analogs;
  std::vector<std::uint16_t> digitals;
};

/// Maps an angle onto (-pi, pi].
double normalize_angle(double radians);

std::vector<MeasurementRecord> to_records(const DataFrame& frame, const ConfigFrame& cfg);
MeasurementRecord to_record(const DataFrame& frame, const ConfigFrame& cfg,
                            std::size_t pmu_index = 0);

/// Inverse of to_record for one PMU block: quantizes engineering values into
/// the wire representation selected by the PMU's format flags. Integer values
/// are rounded and saturated to the field range.
PmuData to_pmu_data(const MeasurementRecord& record, const PmuConfig& pmu);

}  // namespace synchro
