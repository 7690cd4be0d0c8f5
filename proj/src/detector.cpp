#include "synchro/detector.hpp"

#include <cmath>
#include <iostream>
#include <ostream>

#include "json.hpp"

#include "synchro/csv.hpp"

namespace synchro {

void DetectorConfig::validate() const {
  if (horizon_h == 0) throw std::invalid_argument("horizon must be at least 1 step");
  if (window_s < 10 * horizon_h) {
    throw std::invalid_argument("window must hold at least 10 forecast horizons");
  }
  if (!(threshold_sigma > 0.0)) throw std::invalid_argument("threshold_sigma must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("delta must lie in (0, 1]");
  if (refresh_s == 0) throw std::invalid_argument("refresh must be at least 1 s");
  if (min_fit_samples < 2 || min_fit_samples > window_s) {
    throw std::invalid_argument("min_fit_samples must lie in [2, window_s]");
  }
  if (warmup_s > window_s) throw std::invalid_argument("warm-up cannot exceed the window");
  if (!(std_floor_hz > 0.0)) throw std::invalid_argument("std floor must be positive");
  if (gap_reset == 0) throw std::invalid_argument("gap_reset must be at least 1");
}

// ---------------------------------------------------------------------------

WindowBuffer::WindowBuffer(std::size_t capacity) : data_(capacity) {
  if (capacity == 0) throw std::invalid_argument("window capacity must be positive");
}

void WindowBuffer::push(const Entry& e) {
  if (size_ < data_.size()) {
    data_[(head_ + size_) % data_.size()] = e;
    ++size_;
  } else {
    data_[head_] = e;
    head_ = (head_ + 1) % data_.size();
  }
}

void WindowBuffer::clear() {
  head_ = 0;
  size_ = 0;
}

const WindowBuffer::Entry& WindowBuffer::operator[](std::size_t i) const {
  return data_[(head_ + i) % data_.size()];
}

// ---------------------------------------------------------------------------

Detector::Detector(DetectorConfig cfg, EventSink on_event, PlotSink on_plot)
    : cfg_(std::move(cfg)),
      on_event_(std::move(on_event)),
      on_plot_(std::move(on_plot)),
      window_((cfg_.validate(), cfg_.window_s)) {
  spec_.delta = cfg_.delta;
  spec_.obs_var_mode = cfg_.obs_var_mode;
  spec_.obs_var = cfg_.fixed_obs_var;
}

void Detector::check_time(double t) {
  if (!std::isfinite(t)) throw NonMonotonicTimestamp("timestamp is not finite");
  if (last_t_ && !(t > *last_t_)) {
    throw NonMonotonicTimestamp("timestamp " + csv::format(t) + " does not follow " +
                                csv::format(*last_t_));
  }
}

void Detector::fill_missing_until(double t) {
  if (!last_t_) return;
  for (double g = *last_t_ + 1.0; g < t - 0.5; g += 1.0) handle_gap(g);
}

void Detector::reset() {
  window_.clear();
  outstanding_.reset();
  std_training_.reset();
  last_fitted_.reset();
  since_start_ = 0;
  since_refit_ = 0;
  ++report_.resets;
}

void Detector::handle_gap(double t) {
  ++consecutive_gaps_;
  ++report_.gaps_filled;
  last_t_ = t;
  PlotRow row;
  row.t = t;
  row.filled = true;
  if (consecutive_gaps_ == cfg_.gap_reset) {
    reset();
  } else if (window_.size() > 0) {
    window_.push({t, window_.back().y, true});
  }
  if (on_plot_) on_plot_(row);
}

void Detector::push_gap(double t) {
  check_time(t);
  fill_missing_until(t);
  handle_gap(t);
}

void Detector::emit(const AnomalyEvent& e) {
  if (!on_event_) return;
  try {
    on_event_(e);
  } catch (const std::exception& ex) {
    ++report_.sink_failures;
    std::cerr << "detector: event sink failed: " << ex.what() << '\n';
  }
}

void Detector::refit() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<std::optional<double>> ys;
  std::vector<double> real;
  ys.reserve(window_.size());
  real.reserve(window_.size());
  for (std::size_t i = 0; i < window_.size(); ++i) {
    const auto& e = window_[i];
    if (e.filled) {
      ys.emplace_back();
    } else {
      ys.emplace_back(e.y);
      real.push_back(e.y);
    }
  }
  if (real.size() < 2) return;

  const GdlmState prior = init_prior(real, spec_);
  const FilterRun run = filter(prior, spec_, std::span<const std::optional<double>>(ys));
  std::vector<GdlmState> states;
  states.reserve(run.steps.size());
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& s : run.steps) {
    states.push_back(s.state);
    if (s.observed) {
      sum += s.residual;
      ++n;
    }
  }
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (const auto& s : run.steps) {
    if (s.observed) ss += (s.residual - mean) * (s.residual - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  std_training_ = std::max(sd, cfg_.std_floor_hz);

  const std::vector<GdlmState> smoothed = smooth(states, spec_);
  last_fitted_ = smoothed.back().level();
  const ForecastResult fc = forecast(states.back(), spec_, cfg_.horizon_h);
  outstanding_ = Outstanding{window_.back().t, fc.means, *std_training_, window_[0].t};

  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  ++report_.refits;
  refit_ms_total_ += ms;
  report_.mean_refit_latency_ms = refit_ms_total_ / static_cast<double>(report_.refits);
  report_.max_refit_latency_ms = std::max(report_.max_refit_latency_ms, ms);
}

std::optional<AnomalyEvent> Detector::push_sample(double t, double y) {
  if (!std::isfinite(y)) {
    push_gap(t);
    return std::nullopt;
  }
  check_time(t);
  fill_missing_until(t);
  consecutive_gaps_ = 0;

  PlotRow row;
  row.t = t;
  row.observed = y;
  std::optional<AnomalyEvent> event;
  double stored = y;
  if (outstanding_) {
    const auto lead = static_cast<std::size_t>(std::llround(t - outstanding_->issued_t));
    if (lead >= 1 && lead <= outstanding_->means.size()) {
      const double pred = outstanding_->means[lead - 1];
      const double sd = outstanding_->std_training;
      row.forecast = pred;
      row.band_low = pred - cfg_.threshold_sigma * sd;
      row.band_high = pred + cfg_.threshold_sigma * sd;
      const double sigma = (y - pred) / sd;
      if (warmed_up() && std::abs(sigma) >= cfg_.threshold_sigma) {
        event = AnomalyEvent{t, y, pred, y - pred, sigma, outstanding_->window_start_ts, sd, lead};
        row.anomaly = true;
        if (cfg_.mask_anomalies) stored = pred;
      }
    }
  }

  window_.push({t, stored, false});
  last_t_ = t;
  ++since_start_;
  ++report_.samples_processed;
  if (++since_refit_ >= cfg_.refresh_s && window_.size() >= cfg_.min_fit_samples) {
    refit();
    since_refit_ = 0;
    row.fitted = last_fitted_;
  }
  if (on_plot_) on_plot_(row);
  if (event) {
    report_.events.push_back(*event);
    emit(*event);
  }
  return event;
}

std::optional<AnomalyEvent> Detector::push(const SecondSample& s) {
  const auto t = static_cast<double>(s.second);
  if (s.is_gap()) {
    push_gap(t);
    return std::nullopt;
  }
  return push_sample(t, *s.value);
}

DetectionReport run_detector(const std::vector<SecondSample>& source, const DetectorConfig& cfg,
                             EventSink on_event, PlotSink on_plot) {
  Detector d(cfg, std::move(on_event), std::move(on_plot));
  for (const auto& s : source) d.push(s);
  return d.report();
}

// ---------------------------------------------------------------------------

std::string event_json(const AnomalyEvent& e, std::optional<double> time_origin) {
  nlohmann::json j{{"ts", e.timestamp},
                   {"observed_hz", e.observed_hz},
                   {"predicted_hz", e.predicted_hz},
                   {"sigma", e.sigma_multiple},
                   {"residual_hz", e.residual_hz},
                   {"std_training_hz", e.std_training},
                   {"window_start_ts", e.window_start_ts},
                   {"lead_s", e.lead}};
  if (time_origin) j["t_rel_s"] = e.timestamp - *time_origin;
  return j.dump();
}

EventSink json_line_sink(std::ostream& out, std::optional<double> time_origin) {
  return [&out, time_origin](const AnomalyEvent& e) {
    out << event_json(e, time_origin) << '\n';
    out.flush();
    if (!out) throw std::runtime_error("event stream write failed");
  };
}

EventSink udp_event_sink(std::shared_ptr<UdpSocket> socket, Endpoint to,
                         std::optional<double> time_origin) {
  return [socket = std::move(socket), to = std::move(to), time_origin](const AnomalyEvent& e) {
    const std::string text = event_json(e, time_origin);
    socket->send_to(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), to);
  };
}

void write_plot_header(std::ostream& out) {
  out << "t,observed,fitted,forecast,band_low,band_high\n";
}

void write_plot_row(std::ostream& out, const PlotRow& row, double origin) {
  auto opt = [](const std::optional<double>& v) { return v ? csv::format(*v) : std::string(); };
  out << csv::format(row.t - origin) << ',' << opt(row.observed) << ',' << opt(row.fitted) << ','
      << opt(row.forecast) << ',' << opt(row.band_low) << ',' << opt(row.band_high) << '\n';
}

}  // namespace synchro
