#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "synchro/pipeline.hpp"

using namespace synchro;

TEST_CASE("loopback pipeline conserves the 1 Hz series") {
  SynthParams p;
  p.duration_s = 200;
  p.fps = 30;
  p.num_pmus = 2;
  p.event = FrequencyEvent{148.0, -0.05, 0.0};
  E2eOptions o;
  o.archive.rows = synthesize(p);
  o.archive.fps = 30;
  o.archive.cfg = make_config(2, 30);
  o.pacing = PacingMode{Pacing::Realtime, 40.0};
  o.output_dir = "pipeline_test_out";
  o.write_aligned = true;
  const auto r = run_e2e(o);

  CHECK(r.playback.frames_sent == 12000);
  CHECK(r.stats.forwarded == 12000);
  CHECK(r.stats.frames_missing == 0);
  CHECK(r.series == archive_series(o.archive, 0, o.start_soc));
  REQUIRE_FALSE(r.detection.events.empty());
  const double t_rel = r.detection.events[0].timestamp - o.start_soc;
  CHECK(t_rel >= 148);
  CHECK(t_rel <= 153);
  REQUIRE(r.trace);
  CHECK(r.trace->pooled.n == 12000);
  for (const char* f : {"send.csv", "recv.csv", "events.jsonl", "plot.csv", "series.csv", "stats.json",
                        "aligned.csv"}) {
    CHECK(std::filesystem::exists(std::filesystem::path(o.output_dir) / f));
  }
  CHECK(read_series_csv(o.output_dir + "/series.csv") == r.series);
  std::filesystem::remove_all(o.output_dir);
}

TEST_CASE("injected loss shows up as gaps and losses") {
  SynthParams p;
  p.duration_s = 20;
  p.fps = 10;
  E2eOptions o;
  o.archive.rows = synthesize(p);
  o.archive.fps = 10;
  o.archive.cfg = make_config(1, 10);
  o.pacing = PacingMode{Pacing::MaxRate, 1.0};
  for (std::uint64_t s = 50; s < 70; ++s) o.impairment.drop_seqs.insert(s);
  o.impairment.duplicate_seqs = {5, 6};
  const auto r = run_e2e(o);
  CHECK(r.stats.forwarded == 180);
  CHECK(r.stats.duplicates_dropped == 2);
  CHECK(r.stats.frames_missing == 20);
  REQUIRE(r.trace);
  CHECK(r.trace->pooled.losses == 20);
  CHECK(r.trace->pooled.duplicates == 2);
  CHECK(r.trace->pooled.n + r.trace->pooled.losses == 200);
  std::size_t gaps = 0;
  for (const auto& s : r.series) gaps += s.is_gap();
  CHECK(gaps == 2);
  CHECK(r.series.size() == 20);
}
