#pragma once

// Online frequency anomaly detector: a sliding window of 1 Hz samples is
// refit every refresh, an h-step forecast is issued, and each new sample is
// scored against the most recent forecast covering it.

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "synchro/gdlm.hpp"
#include "synchro/series.hpp"
#include "synchro/udp_socket.hpp"

namespace synchro {

struct DetectorConfig {
  std::size_t window_s = 300;
  std::size_t horizon_h = 5;
  double threshold_sigma = 3.5;
  double delta = 0.95;
  std::size_t refresh_s = 1;
  // Samples after a (re)start before events may fire. The window keeps
  // growing until it reaches window_s and slides from then on.
  std::size_t warmup_s = 120;
  std::size_t min_fit_samples = 10;
  double std_floor_hz = 1e-9;
  std::size_t gap_reset = 30;  // consecutive gaps that force a cold restart
  bool mask_anomalies = false;  // store the forecast instead of a flagged sample
  ObsVarMode obs_var_mode = ObsVarMode::Estimated;
  double fixed_obs_var = 1e-6;

  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;
};

struct AnomalyEvent {
  double timestamp = 0.0;
  double observed_hz = 0.0;
  double predicted_hz = 0.0;
  double residual_hz = 0.0;
  double sigma_multiple = 0.0;
  double window_start_ts = 0.0;
  double std_training = 0.0;
  std::size_t lead = 0;  // steps between forecast issue and this sample

  bool operator==(const AnomalyEvent&) const = default;
};

/// One row of the plot output for a pushed second.
struct PlotRow {
  double t = 0.0;
  std::optional<double> observed;  // empty for a gap
  std::optional<double> fitted;    // smoothed level of the latest fit at t
  std::optional<double> forecast;  // prediction the sample was scored against
  std::optional<double> band_low;
  std::optional<double> band_high;
  bool filled = false;
  bool anomaly = false;
};

class NonMonotonicTimestamp : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fixed-capacity ring of (t, y, filled) samples.
class WindowBuffer {
 public:
  struct Entry {
    double t = 0.0;
    double y = 0.0;
    bool filled = false;
  };

  explicit WindowBuffer(std::size_t capacity);

  void push(const Entry& e);
  void clear();
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return data_.size(); }
  bool full() const { return size_ == data_.size(); }
  const Entry& operator[](std::size_t i) const;  // 0 = oldest
  const Entry& back() const { return (*this)[size_ - 1]; }

 private:
  std::vector<Entry> data_;
  std::size_t head_ = 0;  // index of the oldest entry
  std::size_t size_ = 0;
};

struct DetectionReport {
  std::vector<AnomalyEvent> events;
  std::size_t samples_processed = 0;  // real samples (gaps excluded)
  std::size_t gaps_filled = 0;
  std::size_t resets = 0;
  std::size_t refits = 0;
  double mean_refit_latency_ms = 0.0;
  double max_refit_latency_ms = 0.0;
  std::size_t sink_failures = 0;
};

using EventSink = std::function<void(const AnomalyEvent&)>;
using PlotSink = std::function<void(const PlotRow&)>;

class Detector {
 public:
  explicit Detector(DetectorConfig cfg, EventSink on_event = {}, PlotSink on_plot = {});

  /// Scores y against the outstanding forecast, appends it and refits.
  /// Seconds skipped since the previous push are treated as gaps. A
  /// non-finite y is recorded as a gap.
  std::optional<AnomalyEvent> push_sample(double t, double y);
  void push_gap(double t);
  std::optional<AnomalyEvent> push(const SecondSample& s);

  const DetectionReport& report() const { return report_; }
  const DetectorConfig& config() const { return cfg_; }
  const WindowBuffer& window() const { return window_; }
  bool warmed_up() const { return since_start_ >= cfg_.warmup_s; }
  std::optional<double> last_std_training() const { return std_training_; }

 private:
  struct Outstanding {
    double issued_t = 0.0;
    std::vector<double> means;
    double std_training = 0.0;
    double window_start_ts = 0.0;
  };

  void check_time(double t);
  void fill_missing_until(double t);
  void handle_gap(double t);
  void reset();
  void refit();
  void emit(const AnomalyEvent& e);

  DetectorConfig cfg_;
  ModelSpec spec_;
  EventSink on_event_;
  PlotSink on_plot_;
  WindowBuffer window_;
  std::optional<double> last_t_;
  std::optional<Outstanding> outstanding_;
  std::optional<double> std_training_;
  std::optional<double> last_fitted_;
  std::size_t since_start_ = 0;  // real samples since the last (re)start
  std::size_t since_refit_ = 0;
  std::size_t consecutive_gaps_ = 0;
  double refit_ms_total_ = 0.0;
  DetectionReport report_;
};

/// Drives a detector over a whole series.
DetectionReport run_detector(const std::vector<SecondSample>& source, const DetectorConfig& cfg,
                             EventSink on_event = {}, PlotSink on_plot = {});

/// Event as one JSON object on a single line. `time_origin` adds a
/// "t_rel_s" field relative to that instant.
std::string event_json(const AnomalyEvent& e, std::optional<double> time_origin = std::nullopt);

/// Sink writing JSON lines to a stream.
EventSink json_line_sink(std::ostream& out, std::optional<double> time_origin = std::nullopt);

/// Sink sending each event as a JSON datagram to `to`.
EventSink udp_event_sink(std::shared_ptr<UdpSocket> socket, Endpoint to,
                         std::optional<double> time_origin = std::nullopt);

void write_plot_header(std::ostream& out);
/// `origin` is subtracted from t so plots can start at zero.
void write_plot_row(std::ostream& out, const PlotRow& row, double origin = 0.0);

}  // namespace synchro
