#include <random>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "synchro/detector.hpp"

using namespace synchro;

namespace {

std::vector<SecondSample> noise_series(std::size_t n, std::uint64_t seed, double step_at = -1,
                                       double step = -0.05) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1e-3);
  std::vector<SecondSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    double f = 60.0 + z(rng);
    if (step_at >= 0 && static_cast<double>(i) >= step_at) f += step;
    out.push_back(SecondSample{static_cast<std::int64_t>(i), f, true});
  }
  return out;
}

}  // namespace

TEST_CASE("configuration validation") {
  DetectorConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = [](auto mutate) {
    DetectorConfig d;
    mutate(d);
    CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  };
  bad([](DetectorConfig& d) { d.horizon_h = 0; });
  bad([](DetectorConfig& d) { d.window_s = 40; });
  bad([](DetectorConfig& d) { d.threshold_sigma = 0; });
  bad([](DetectorConfig& d) { d.delta = 0; });
  bad([](DetectorConfig& d) { d.refresh_s = 0; });
  bad([](DetectorConfig& d) { d.warmup_s = 400; });
  bad([](DetectorConfig& d) { d.min_fit_samples = 1; });
}

TEST_CASE("ring buffer keeps the newest samples") {
  WindowBuffer w(3);
  for (int i = 0; i < 5; ++i) w.push({double(i), double(i) * 10, false});
  CHECK(w.full());
  CHECK(w[0].t == 2);
  CHECK(w.back().y == 40);
  w.clear();
  CHECK(w.size() == 0);
}

TEST_CASE("step change is detected promptly with no earlier alarm") {
  const auto s = noise_series(600, 7, 148);
  const auto rep = run_detector(s, DetectorConfig{});
  REQUIRE_FALSE(rep.events.empty());
  CHECK(rep.events[0].timestamp >= 148);
  CHECK(rep.events[0].timestamp <= 153);
  CHECK(rep.events[0].residual_hz < 0);
  CHECK(rep.events[0].sigma_multiple <= -3.5);
  CHECK(rep.events[0].lead >= 1);
  CHECK(rep.events[0].lead <= 5);
  CHECK(rep.events[0].window_start_ts == 0);
  CHECK(rep.samples_processed == 600);
}

TEST_CASE("constant input is handled by the variance floor") {
  std::vector<SecondSample> s;
  for (int i = 0; i < 400; ++i) s.push_back({i, 60.0, true});
  const auto rep = run_detector(s, DetectorConfig{});
  CHECK(rep.events.empty());
  Detector d(DetectorConfig{});
  for (const auto& x : s) d.push(x);
  REQUIRE(d.last_std_training());
  CHECK(*d.last_std_training() == DetectorConfig{}.std_floor_hz);
  CHECK(d.window().size() == 300);
}

TEST_CASE("gaps are filled until the reset threshold") {
  for (const std::size_t gap : {29u, 30u}) {
    Detector d(DetectorConfig{});
    const auto s = noise_series(500, 3);
    std::size_t i = 0;
    for (; i < 250; ++i) d.push(s[i]);
    for (std::size_t g = 0; g < gap; ++g, ++i) d.push(SecondSample{static_cast<std::int64_t>(i), {}, false});
    for (; i < 500; ++i) d.push(s[i]);
    CHECK(d.report().gaps_filled == gap);
    CHECK(d.report().resets == (gap == 30 ? 1u : 0u));
    if (gap == 29) {
      CHECK(d.warmed_up());
    }
  }
  // Skipped seconds count as gaps too.
  Detector d(DetectorConfig{});
  d.push_sample(0, 60.0);
  d.push_sample(5, 60.0);
  CHECK(d.report().gaps_filled == 4);
  CHECK(d.window().size() == 6);
  CHECK(d.window()[1].filled);
}

TEST_CASE("warm-up restarts after a reset") {
  DetectorConfig c;
  Detector d(c);
  auto s = noise_series(300, 4);
  for (std::size_t i = 0; i < 200; ++i) d.push(s[i]);
  CHECK(d.warmed_up());
  for (std::int64_t t = 200; t < 230; ++t) d.push_gap(static_cast<double>(t));
  CHECK_FALSE(d.warmed_up());
  CHECK(d.window().size() == 0);
}

TEST_CASE("timestamps must increase") {
  Detector d(DetectorConfig{});
  d.push_sample(10, 60.0);
  CHECK_THROWS_AS(d.push_sample(10, 60.0), NonMonotonicTimestamp);
  CHECK_THROWS_AS(d.push_sample(9, 60.0), NonMonotonicTimestamp);
  CHECK_THROWS_AS(d.push_gap(NAN), NonMonotonicTimestamp);
  d.push_sample(11, NAN);
  CHECK(d.report().gaps_filled == 1);
}

TEST_CASE("deterministic and causal") {
  const auto s = noise_series(900, 12, 600);
  const auto a = run_detector(s, DetectorConfig{});
  const auto b = run_detector(s, DetectorConfig{});
  CHECK(a.events == b.events);

  // Changing the future never changes past events.
  auto t = s;
  for (std::size_t i = 700; i < t.size(); ++i) *t[i].value += 0.3;
  const auto c = run_detector(t, DetectorConfig{});
  std::vector<AnomalyEvent> before_a, before_c;
  for (const auto& e : a.events) if (e.timestamp < 700) before_a.push_back(e);
  for (const auto& e : c.events) if (e.timestamp < 700) before_c.push_back(e);
  CHECK(before_a == before_c);
}

TEST_CASE("sinks, masking and plot output") {
  const auto s = noise_series(400, 7, 148);
  std::ostringstream events, plot;
  write_plot_header(plot);
  std::size_t throws = 0;
  DetectorConfig c;
  c.mask_anomalies = true;
  const auto rep = run_detector(
      s, c,
      [&](const AnomalyEvent& e) {
        events << event_json(e, 0.0) << '\n';
        if (++throws == 1) throw std::runtime_error("sink down");
      },
      [&](const PlotRow& r) { write_plot_row(plot, r); });
  CHECK(rep.sink_failures == 1);
  REQUIRE_FALSE(rep.events.empty());
  std::istringstream lines(events.str());
  std::string first;
  std::getline(lines, first);
  const auto j = nlohmann::json::parse(first);
  for (const char* k : {"ts", "observed_hz", "predicted_hz", "sigma", "residual_hz", "std_training_hz",
                        "window_start_ts", "lead_s", "t_rel_s"}) {
    CHECK(j.contains(k));
  }
  std::istringstream pl(plot.str());
  std::string line;
  std::size_t rows = 0;
  std::getline(pl, line);
  CHECK(line == "t,observed,fitted,forecast,band_low,band_high");
  while (std::getline(pl, line)) ++rows;
  CHECK(rows == 400);
  CHECK(rep.refits > 300);
  CHECK(rep.mean_refit_latency_ms < 100.0);
}

TEST_CASE("false alarm rate on pure noise") {
  std::size_t total = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto rep = run_detector(noise_series(3600, seed), DetectorConfig{});
    total += rep.events.size();
    CHECK(rep.events.size() <= 10);
  }
  MESSAGE("events over 5 h of noise: " << total);
}
