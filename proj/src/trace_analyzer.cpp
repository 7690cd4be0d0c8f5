#include "synchro/trace_analyzer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include "json.hpp"

#include "synchro/csv.hpp"

namespace synchro {
namespace {

bool send_order(const TraceRecord& a, const TraceRecord& b) {
  if (a.send_ts_ns != b.send_ts_ns) return a.send_ts_ns < b.send_ts_ns;
  if (a.seq != b.seq) return a.seq < b.seq;
  return a.identity < b.identity;
}

struct Corrected {
  std::vector<std::int64_t> latencies_ns;  // send order
  std::vector<GapPoint> gaps;
  std::int64_t skew_ns = 0;
  std::size_t sent = 0;
  std::size_t losses = 0;
};

Corrected correct(std::vector<TraceRecord> records, const LatencyOptions& opts) {
  std::sort(records.begin(), records.end(), send_order);
  Corrected c;
  c.sent = records.size();
  std::vector<std::int64_t> raw;
  std::vector<std::size_t> packet_no;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].lost()) {
      ++c.losses;
      continue;
    }
    raw.push_back(*records[i].recv_ts_ns - records[i].send_ts_ns);
    packet_no.push_back(i + 1);
  }
  if (opts.auto_skew && !raw.empty()) {
    c.skew_ns = *std::min_element(raw.begin(), raw.end());
  } else {
    c.skew_ns = std::llround(opts.skew_correction_s * 1e9);
  }
  c.latencies_ns.reserve(raw.size());
  c.gaps.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const std::int64_t lat = raw[i] - c.skew_ns;
    c.latencies_ns.push_back(lat);
    c.gaps.push_back(GapPoint{packet_no[i], static_cast<double>(lat) * 1e-9});
  }
  return c;
}

double quantile_ns(const std::vector<std::int64_t>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return static_cast<double>(sorted[lo]) +
         frac * static_cast<double>(sorted[hi] - sorted[lo]);
}

LatencyStats summarize(std::vector<std::int64_t> lat, const LatencyOptions& opts) {
  if (lat.empty()) throw EmptyTrace("trace has no delivered packets");
  std::sort(lat.begin(), lat.end());
  LatencyStats s;
  s.n = lat.size();
  std::int64_t sum = 0;
  std::size_t negative = 0;
  for (const auto v : lat) {
    sum += v;
    if (v < 0) ++negative;
  }
  const double n = static_cast<double>(s.n);
  const double mean_ns = static_cast<double>(sum) / n;
  s.mean_ms = mean_ns / 1e6;
  const std::size_t mid = s.n / 2;
  const double median_ns = s.n % 2 == 1 ? static_cast<double>(lat[mid])
                                        : (static_cast<double>(lat[mid - 1]) +
                                           static_cast<double>(lat[mid])) / 2.0;
  s.median_ms = median_ns / 1e6;
  s.p99_ms = quantile_ns(lat, 0.99) / 1e6;
  s.min_ms = static_cast<double>(lat.front()) / 1e6;
  s.max_ms = static_cast<double>(lat.back()) / 1e6;
  if (s.n > 1) {
    double ss = 0.0;
    for (const auto v : lat) {
      const double d = static_cast<double>(v) - mean_ns;
      ss += d * d;
    }
    s.stddev_ms = std::sqrt(ss / (n - 1.0)) / 1e6;
  }
  s.negative_fraction = static_cast<double>(negative) / n;
  s.negative_latency_warning = s.negative_fraction > opts.negative_warning_fraction;
  return s;
}

nlohmann::json stats_json(const LatencyStats& s) {
  return nlohmann::json{{"sent", s.sent},
                        {"n", s.n},
                        {"duplicates", s.duplicates},
                        {"losses", s.losses},
                        {"mean_ms", s.mean_ms},
                        {"median_ms", s.median_ms},
                        {"p99_ms", s.p99_ms},
                        {"min_ms", s.min_ms},
                        {"max_ms", s.max_ms},
                        {"stddev_ms", s.stddev_ms},
                        {"skew_correction_s", s.skew_correction_s},
                        {"negative_fraction", s.negative_fraction},
                        {"negative_latency_warning", s.negative_latency_warning}};
}

}  // namespace

JoinedTrace join_traces(const std::vector<SendLogEntry>& sends,
                        const std::vector<RecvLogEntry>& receives) {
  JoinedTrace out;
  std::unordered_map<FrameIdentity, std::size_t, FrameIdentityHash> index;
  index.reserve(sends.size());
  out.records.reserve(sends.size());
  for (const auto& s : sends) {
    if (!index.try_emplace(s.identity, out.records.size()).second) {
      ++out.duplicate_sends;
      continue;
    }
    TraceRecord r;
    r.seq = s.seq;
    r.identity = s.identity;
    r.send_ts_ns = s.send_ts_ns;
    out.records.push_back(r);
  }
  for (const auto& rv : receives) {
    const auto it = index.find(rv.identity);
    if (it == index.end()) {
      ++out.unmatched_receives;
      continue;
    }
    TraceRecord& r = out.records[it->second];
    if (r.receipts == 0 || rv.recv_ts_ns < *r.recv_ts_ns) {
      r.recv_ts_ns = rv.recv_ts_ns;
      r.size_bytes = rv.size_bytes;
    }
    ++r.receipts;
  }
  std::sort(out.records.begin(), out.records.end(), send_order);
  for (const auto& r : out.records) {
    if (r.lost()) {
      ++out.losses;
    } else {
      out.duplicates += r.receipts - 1;
    }
  }
  return out;
}

std::pair<std::vector<SendLogEntry>, std::vector<RecvLogEntry>> to_logs(
    const std::vector<TraceRecord>& records) {
  std::pair<std::vector<SendLogEntry>, std::vector<RecvLogEntry>> logs;
  for (const auto& r : records) {
    logs.first.push_back(SendLogEntry{r.seq, r.identity, r.send_ts_ns});
    if (!r.lost()) logs.second.push_back(RecvLogEntry{r.identity, *r.recv_ts_ns, r.size_bytes});
  }
  return logs;
}

LatencyStats latency_stats(const std::vector<TraceRecord>& records, const LatencyOptions& opts,
                           std::size_t duplicates) {
  if (records.empty()) throw EmptyTrace("trace is empty");
  Corrected c = correct(records, opts);
  LatencyStats s = summarize(c.latencies_ns, opts);
  s.sent = c.sent;
  s.losses = c.losses;
  s.duplicates = duplicates;
  s.skew_correction_s = static_cast<double>(c.skew_ns) * 1e-9;
  s.gaps = std::move(c.gaps);
  return s;
}

LatencyStats latency_stats(const JoinedTrace& trace, const LatencyOptions& opts) {
  return latency_stats(trace.records, opts, trace.duplicates);
}

const char* to_string(LatencyClass c) {
  switch (c) {
    case LatencyClass::BetterThanTypical: return "better_than_typical";
    case LatencyClass::Typical: return "typical";
    case LatencyClass::AboveTypical: return "above_typical";
    case LatencyClass::HardCapViolation: return "hard_cap_violation";
  }
  return "unknown";
}

LatencyClass classify_latency(double ms, const ComplianceEnvelope& env) {
  if (ms > env.hard_cap_ms) return LatencyClass::HardCapViolation;
  if (ms > env.typical_high_ms) return LatencyClass::AboveTypical;
  if (ms < env.typical_low_ms) return LatencyClass::BetterThanTypical;
  return LatencyClass::Typical;
}

ComplianceReport compliance_check(const LatencyStats& stats, const ComplianceEnvelope& env) {
  ComplianceReport r;
  r.envelope = env;
  r.mean_class = classify_latency(stats.mean_ms, env);
  r.p99_class = classify_latency(stats.p99_ms, env);
  r.mean_within_envelope = stats.mean_ms <= env.typical_high_ms;
  r.p99_within_envelope = stats.p99_ms <= env.typical_high_ms;
  r.within_hard_cap = stats.mean_ms <= env.hard_cap_ms && stats.p99_ms <= env.hard_cap_ms;
  return r;
}

TraceAnalysis analyze_trials(const std::vector<JoinedTrace>& trials, const LatencyOptions& opts,
                             const ComplianceEnvelope& env) {
  if (trials.empty()) throw EmptyTrace("no trials given");
  TraceAnalysis a;
  // Each trial gets its own skew (auto mode estimates it per trial); the
  // pooled figures use the corrected latencies of all trials together.
  std::vector<std::int64_t> pooled_lat;
  std::size_t sent = 0, losses = 0, dups = 0, packet_base = 0;
  std::vector<GapPoint> pooled_gaps;
  std::int64_t skew_sum = 0;
  for (const auto& t : trials) {
    a.trials.push_back(latency_stats(t, opts));
    Corrected c = correct(t.records, opts);
    pooled_lat.insert(pooled_lat.end(), c.latencies_ns.begin(), c.latencies_ns.end());
    for (auto g : c.gaps) {
      g.packet_no += packet_base;
      pooled_gaps.push_back(g);
    }
    packet_base += c.sent;
    sent += c.sent;
    losses += c.losses;
    dups += t.duplicates;
    skew_sum += c.skew_ns;
  }
  a.pooled = summarize(std::move(pooled_lat), opts);
  a.pooled.sent = sent;
  a.pooled.losses = losses;
  a.pooled.duplicates = dups;
  a.pooled.skew_correction_s =
      static_cast<double>(skew_sum) / static_cast<double>(trials.size()) * 1e-9;
  a.pooled.gaps = std::move(pooled_gaps);
  a.compliance = compliance_check(a.pooled, env);
  return a;
}

void write_gap_csv(std::ostream& out, const std::vector<GapPoint>& gaps) {
  out << "packet_no,gap_s\n";
  for (const auto& g : gaps) out << g.packet_no << ',' << csv::format(g.gap_s) << '\n';
}

void write_gap_csv(const std::string& path, const std::vector<GapPoint>& gaps) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_gap_csv(out, gaps);
}

std::string to_json(const TraceAnalysis& analysis, int indent) {
  nlohmann::json doc = stats_json(analysis.pooled);
  doc["trials"] = nlohmann::json::array();
  for (const auto& t : analysis.trials) doc["trials"].push_back(stats_json(t));
  const auto& c = analysis.compliance;
  doc["compliance"] = {{"mean_class", to_string(c.mean_class)},
                       {"p99_class", to_string(c.p99_class)},
                       {"mean_within_envelope", c.mean_within_envelope},
                       {"p99_within_envelope", c.p99_within_envelope},
                       {"within_hard_cap", c.within_hard_cap},
                       {"typical_low_ms", c.envelope.typical_low_ms},
                       {"typical_high_ms", c.envelope.typical_high_ms},
                       {"hard_cap_ms", c.envelope.hard_cap_ms}};
  return doc.dump(indent);
}

}  // namespace synchro
