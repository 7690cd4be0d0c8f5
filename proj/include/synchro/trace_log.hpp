#pragma once

// Packet timestamp logs written by the sender and receiver sides and joined
// by the trace analyzer.
//
//   send log:    seq,idcode,soc,fracsec,send_ts_ns
//   receive log: idcode,soc,fracsec,recv_ts_ns,size_bytes

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace synchro {

/// Dedup key: UDP carries no sequence numbers, so identity comes from the
/// payload timestamp and stream id.
struct FrameIdentity {
  std::uint16_t id_code = 0;
  std::uint32_t soc = 0;
  std::uint32_t frac_sec = 0;

  bool operator==(const FrameIdentity&) const = default;
  auto operator<=>(const FrameIdentity&) const = default;
};

struct FrameIdentityHash {
  std::size_t operator()(const FrameIdentity& id) const noexcept {
    const std::uint64_t key = (std::uint64_t{id.soc} << 32) ^
                              (std::uint64_t{id.frac_sec} << 8) ^ id.id_code;
    return std::hash<std::uint64_t>{}(key);
  }
};

struct SendLogEntry {
  std::uint64_t seq = 0;
  FrameIdentity identity;
  std::int64_t send_ts_ns = 0;

  bool operator==(const SendLogEntry&) const = default;
};

struct RecvLogEntry {
  FrameIdentity identity;
  std::int64_t recv_ts_ns = 0;
  std::uint32_t size_bytes = 0;

  bool operator==(const RecvLogEntry&) const = default;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kSendLogHeader = "seq,idcode,soc,fracsec,send_ts_ns";
inline constexpr const char* kRecvLogHeader = "idcode,soc,fracsec,recv_ts_ns,size_bytes";

void write_send_log(std::ostream& out, const std::vector<SendLogEntry>& entries);
void write_recv_log(std::ostream& out, const std::vector<RecvLogEntry>& entries);
void write_send_log(const std::string& path, const std::vector<SendLogEntry>& entries);
void write_recv_log(const std::string& path, const std::vector<RecvLogEntry>& entries);

std::vector<SendLogEntry> read_send_log(std::istream& in);
std::vector<RecvLogEntry> read_recv_log(std::istream& in);
std::vector<SendLogEntry> read_send_log(const std::string& path);
std::vector<RecvLogEntry> read_recv_log(const std::string& path);

}  // namespace synchro
