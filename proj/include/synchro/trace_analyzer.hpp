#pragma once

// Offline latency analysis: joins send and receive logs on frame identity,
// separates duplicates and losses, and summarizes one-way latency.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "synchro/trace_log.hpp"

namespace synchro {

struct TraceRecord {
  std::uint64_t seq = 0;
  FrameIdentity identity;
  std::int64_t send_ts_ns = 0;
  std::optional<std::int64_t> recv_ts_ns;  // first receipt; empty = lost
  std::uint32_t size_bytes = 0;
  std::size_t receipts = 0;  // > 1 means duplicated in transit

  bool lost() const { return !recv_ts_ns.has_value(); }
  bool operator==(const TraceRecord&) const = default;
};

struct JoinedTrace {
  std::vector<TraceRecord> records;  // ordered by send_ts, then seq
  std::size_t duplicates = 0;        // receipts beyond the first
  std::size_t losses = 0;
  std::size_t unmatched_receives = 0;  // receipts with no send entry
  std::size_t duplicate_sends = 0;     // identities logged twice by the sender
};

/// Duplicate receipts resolve to the earliest receive timestamp.
JoinedTrace join_traces(const std::vector<SendLogEntry>& sends,
                        const std::vector<RecvLogEntry>& receives);

/// Logs reproducing a joined trace (one receipt per delivered record).
std::pair<std::vector<SendLogEntry>, std::vector<RecvLogEntry>> to_logs(
    const std::vector<TraceRecord>& records);

class EmptyTrace : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GapPoint {
  std::size_t packet_no = 0;  // 1-based position in send order
  double gap_s = 0.0;         // corrected receive minus send time

  bool operator==(const GapPoint&) const = default;
};

struct LatencyOptions {
  double skew_correction_s = 0.0;
  // Opt-in: subtract the minimum observed latency instead of a known skew.
  bool auto_skew = false;
  double negative_warning_fraction = 0.01;
};

struct LatencyStats {
  std::size_t sent = 0;
  std::size_t n = 0;  // delivered records
  std::size_t duplicates = 0;
  std::size_t losses = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p99_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  double stddev_ms = 0.0;
  double skew_correction_s = 0.0;  // value actually applied
  double negative_fraction = 0.0;
  bool negative_latency_warning = false;
  std::vector<GapPoint> gaps;
};

/// Statistics over delivered records, independent of input order. Throws
/// EmptyTrace when no record was delivered.
LatencyStats latency_stats(const std::vector<TraceRecord>& records, const LatencyOptions& opts = {},
                           std::size_t duplicates = 0);
LatencyStats latency_stats(const JoinedTrace& trace, const LatencyOptions& opts = {});

struct ComplianceEnvelope {
  double typical_low_ms = 20.0;
  double typical_high_ms = 50.0;
  double hard_cap_ms = 10'000.0;
};

enum class LatencyClass {
  BetterThanTypical,  // below the typical floor
  Typical,
  AboveTypical,  // over the typical ceiling but under the hard cap
  HardCapViolation,
};

const char* to_string(LatencyClass c);

struct ComplianceReport {
  LatencyClass mean_class = LatencyClass::Typical;
  LatencyClass p99_class = LatencyClass::Typical;
  bool mean_within_envelope = false;  // at or below the typical ceiling
  bool p99_within_envelope = false;
  bool within_hard_cap = false;  // both mean and p99
  ComplianceEnvelope envelope;
};

LatencyClass classify_latency(double ms, const ComplianceEnvelope& env);
ComplianceReport compliance_check(const LatencyStats& stats, const ComplianceEnvelope& env = {});

/// Per-trial and pooled results for one or more send/receive log pairs.
struct TraceAnalysis {
  std::vector<LatencyStats> trials;
  LatencyStats pooled;
  ComplianceReport compliance;  // of the pooled stats
};

TraceAnalysis analyze_trials(const std::vector<JoinedTrace>& trials, const LatencyOptions& opts = {},
                             const ComplianceEnvelope& env = {});

void write_gap_csv(std::ostream& out, const std::vector<GapPoint>& gaps);
void write_gap_csv(const std::string& path, const std::vector<GapPoint>& gaps);

/// JSON document: pooled fields at the top level, plus "trials" and
/// "compliance". Gap series are not included.
std::string to_json(const TraceAnalysis& analysis, int indent = 2);

}  // namespace synchro
