#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "doctest.h"
#include "support/oracles.hpp"
#include "synchro/archive.hpp"
#include "synchro/emulator.hpp"
#include "synchro/frame_codec.hpp"

using namespace synchro;

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), {}};
}

CodecErrc decode_error(std::span<const std::uint8_t> bytes, const ConfigFrame* cfg) {
  try {
    decode(bytes, cfg);
  } catch (const CodecError& e) {
    return e.code();
  }
  FAIL("decode unexpectedly succeeded");
  return CodecErrc::InvalidField;
}

// Rewrites the trailing checksum so decode reaches the field checks.
std::vector<std::uint8_t> reseal(std::vector<std::uint8_t> b) {
  const auto crc = checksum(std::span(b).first(b.size() - 2));
  b[b.size() - 2] = static_cast<std::uint8_t>(crc >> 8);
  b[b.size() - 1] = static_cast<std::uint8_t>(crc & 0xFF);
  return b;
}

const std::string kTestData = SYNCHRO_TESTDATA_DIR;

}  // namespace

TEST_CASE("checksum matches bit-serial reference") {
  const std::string check = "123456789";
  const std::vector<std::uint8_t> v(check.begin(), check.end());
  CHECK(checksum(v) == 0x29B1);
  CHECK(oracle::crc_bitwise(v) == 0x29B1);
  CHECK(checksum({}) == 0xFFFF);

  std::mt19937_64 rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::uint8_t> b(rng() % 300);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng());
    CHECK(checksum(b) == oracle::crc_bitwise(b));
  }
}

TEST_CASE("data frames roundtrip across random configurations") {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 300; ++i) {
    const ConfigFrame cfg = oracle::random_config(rng);
    DataFrame df = oracle::random_data(rng, cfg);
    const auto bytes = encode(df, cfg);
    CHECK(bytes.size() == cfg.data_frame_size());
    CHECK(((bytes[2] << 8) | bytes[3]) == static_cast<int>(bytes.size()));
    const Frame back = decode(bytes, &cfg);
    REQUIRE(std::holds_alternative<DataFrame>(back));
    df.header.frame_size = static_cast<std::uint16_t>(bytes.size());
    CHECK(std::get<DataFrame>(back) == df);
  }
}

TEST_CASE("configuration, header and command frames roundtrip") {
  std::mt19937_64 rng(43);
  for (int i = 0; i < 100; ++i) {
    ConfigFrame cfg = oracle::random_config(rng, 4);
    const auto bytes = encode(cfg);
    cfg.header.frame_size = static_cast<std::uint16_t>(bytes.size());
    const Frame back = decode(bytes);
    REQUIRE(std::holds_alternative<ConfigFrame>(back));
    CHECK(std::get<ConfigFrame>(back) == cfg);
    CHECK(frame_type(back) == (cfg.revision == ConfigRevision::Cfg1 ? FrameType::Config1
                                                                     : FrameType::Config2));
  }
  for (int i = 0; i < 50; ++i) {
    HeaderFrame h;
    h.header = oracle::random_header(rng, 1'000'000);
    h.text = oracle::random_name(rng, 200);
    const auto bytes = encode(h);
    h.header.frame_size = static_cast<std::uint16_t>(bytes.size());
    CHECK(std::get<HeaderFrame>(decode(bytes)) == h);
  }
  for (int code = 1; code <= 5; ++code) {
    CommandFrame c;
    c.header = oracle::random_header(rng, 1'000'000);
    c.command = static_cast<CommandCode>(code);
    const auto bytes = encode(c);
    CHECK(bytes.size() == 18);
    c.header.frame_size = 18;
    CHECK(std::get<CommandFrame>(decode(bytes)) == c);
  }
}

TEST_CASE("golden frame equals the hand layout and survives no bit flip") {
  const auto golden = read_file(kTestData + "/golden_data_frame.bin");
  REQUIRE(golden.size() == 52);

  const ConfigFrame cfg = make_config(1, 60);
  const Archive src = load_archive(kTestData + "/golden_source.csv", 60);
  const MeasurementRecord rec0 = record_from_row(src.rows.at(0), 0);
  oracle::DemoValues v;
  v.id_code = cfg.header.id_code;
  v.soc = 1'000'000'000;
  v.frac = 0;
  for (int i = 0; i < 3; ++i) {
    v.mag[i] = static_cast<float>(rec0.phasors[i].magnitude);
    v.ang[i] = static_cast<float>(rec0.phasors[i].angle);
  }
  v.freq = static_cast<float>(rec0.frequency_hz);
  v.dfreq = static_cast<float>(rec0.rocof_hzps);
  CHECK(oracle::demo_frame_bytes(v) == golden);

  const auto df = make_data_frame(cfg, src.rows[0], 0, FrameStamp{1'000'000'000, 0});
  CHECK(encode(df, cfg) == golden);

  for (std::size_t bit = 0; bit < golden.size() * 8; ++bit) {
    auto corrupt = golden;
    corrupt[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    CHECK(decode_error(corrupt, &cfg) == CodecErrc::BadChecksum);
  }
}

TEST_CASE("golden frame decodes to the source row") {
  const auto golden = read_file(kTestData + "/golden_data_frame.bin");
  const auto cfg_bytes = read_file(kTestData + "/golden_config.bin");
  const ConfigFrame cfg = std::get<ConfigFrame>(decode(cfg_bytes));
  CHECK(cfg.pmus.size() == 1);
  CHECK(cfg.data_frame_size() == 52);
  const Archive src = load_archive(kTestData + "/golden_source.csv", 60);
  const auto rec = to_record(std::get<DataFrame>(decode(golden, &cfg)), cfg);
  CHECK(rec.timestamp == doctest::Approx(1e9));
  CHECK(rec.frequency_hz == static_cast<double>(static_cast<float>(src.rows[0].pmus[0].frequency_hz)));
  CHECK(rec.phasors.size() == 3);
  CHECK(rec.phasors[0].magnitude == doctest::Approx(src.rows[0].pmus[0].vmag_v).epsilon(1e-6));
  CHECK(std::abs(rec.phasors[1].angle + 2.0 * std::numbers::pi / 3.0) < 1e-6);
}

TEST_CASE("to_record field semantics") {
  ConfigFrame cfg;
  cfg.time_base = 1'000'000;
  PmuConfig p;
  p.id_code = 9;
  p.format = FormatFlags{false, false, false, true};
  p.phasors = {PhasorChannel{"VA", PhasorKind::Voltage, 915'527}};
  cfg.pmus = {p};
  cfg.header.id_code = 9;

  DataFrame df;
  df.header.id_code = 9;
  df.header.soc = 1'000'000'000;
  df.header.frac_sec = 500'000;
  PmuData d;
  d.phasors = {RawPhasor{1000, 31416}};
  d.freq = -20;
  d.dfreq = 150;
  df.pmus = {d};
  const auto rec = to_record(df, cfg);
  CHECK(rec.timestamp == 1'000'000'000.5);
  CHECK(rec.frequency_hz == doctest::Approx(59.98));
  CHECK(rec.rocof_hzps == doctest::Approx(1.5));
  CHECK(rec.phasors[0].magnitude == doctest::Approx(1000 * 915'527 * 1e-5));
  CHECK(rec.phasors[0].angle <= std::numbers::pi);
  CHECK(rec.phasors[0].angle > -std::numbers::pi);

  // Every int16 polar angle lands in (-pi, pi].
  for (int a = -32768; a <= 32767; a += 7) {
    df.pmus[0].phasors[0].second = a;
    const double ang = to_record(df, cfg).phasors[0].angle;
    CHECK_MESSAGE((ang > -std::numbers::pi && ang <= std::numbers::pi), a);
  }
}

TEST_CASE("normalize_angle") {
  CHECK(normalize_angle(std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(normalize_angle(-std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(normalize_angle(3 * std::numbers::pi) == doctest::Approx(std::numbers::pi));
  CHECK(normalize_angle(0.25) == doctest::Approx(0.25));
  CHECK(normalize_angle(-7.0) == doctest::Approx(-7.0 + 2 * std::numbers::pi));
}

TEST_CASE("frame size envelope") {
  CHECK(make_config(1, 60).data_frame_size() == 52);
  for (int n = 2; n <= 6; ++n) {
    for (int dg = 0; dg <= 2; ++dg) {
      PmuConfig p;
      p.format = FormatFlags{true, true, false, true};
      p.phasors.resize(static_cast<std::size_t>(n));
      p.analogs.resize(2);
      p.digitals.resize(static_cast<std::size_t>(dg));
      ConfigFrame c;
      c.pmus = {p};
      const auto size = c.data_frame_size();
      CHECK(size >= 40);
      CHECK(size <= 70);
      if (n <= 5) {
        p.format = FormatFlags{};
        p.analogs.clear();
        c.pmus = {p};
        CHECK(c.data_frame_size() >= 40);
        CHECK(c.data_frame_size() <= 70);
      }
    }
  }
}

TEST_CASE("decode error classification") {
  const ConfigFrame cfg = make_config(1, 60);
  const auto golden = read_file(kTestData + "/golden_data_frame.bin");

  auto bad_sync = golden;
  bad_sync[0] = 0xAB;
  CHECK(decode_error(bad_sync, &cfg) == CodecErrc::BadChecksum);
  CHECK(decode_error(reseal(bad_sync), &cfg) == CodecErrc::BadSync);

  std::vector<std::uint8_t> tiny(golden.begin(), golden.begin() + 10);
  CHECK(decode_error(tiny, &cfg) == CodecErrc::SizeMismatch);
  std::vector<std::uint8_t> shortv(golden.begin(), golden.begin() + 30);
  CHECK(decode_error(reseal(shortv), &cfg) == CodecErrc::SizeMismatch);

  CHECK(decode_error(golden, nullptr) == CodecErrc::MissingConfig);

  ConfigFrame other = make_config(1, 60);
  other.pmus[0].phasors.pop_back();
  CHECK(decode_error(golden, &other) == CodecErrc::ChannelCountMismatch);

  ConfigFrame wrong_id = cfg;
  wrong_id.header.id_code = 77;
  CHECK(decode_error(golden, &wrong_id) == CodecErrc::IdCodeMismatch);

  // Type bits 0b111 with a valid checksum.
  auto bad_type = golden;
  bad_type[1] = 0x72;
  CHECK(decode_error(reseal(bad_type), &cfg) == CodecErrc::UnknownFrameType);

  CommandFrame c;
  auto cmd = encode(c);
  cmd[15] = 9;
  CHECK(decode_error(reseal(cmd), nullptr) == CodecErrc::UnknownCommand);

  DataFrame df;
  df.header.id_code = cfg.header.id_code;
  df.header.frac_sec = cfg.time_base;
  df.pmus.resize(1);
  df.pmus[0].phasors.resize(3);
  df.pmus[0].digitals.resize(1);
  CHECK_THROWS_AS(encode(df, cfg), CodecError);
  df.header.frac_sec = 0;
  df.pmus[0].digitals.clear();
  CHECK_THROWS_AS(encode(df, cfg), CodecError);
}

TEST_CASE("to_pmu_data inverts to_record within quantization") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    ConfigFrame cfg = oracle::random_config(rng, 1);
    auto& p = cfg.pmus[0];
    for (auto& ph : p.phasors) ph.scale = 1000;
    for (auto& an : p.analogs) an.scale = 1000;
    DataFrame df;
    df.header.id_code = cfg.header.id_code;
    df.pmus = {oracle::random_data(rng, cfg).pmus[0]};
    const auto rec = to_record(df, cfg);
    const PmuData again = to_pmu_data(rec, p);
    for (std::size_t k = 0; k < again.phasors.size(); ++k) {
      const auto& a = again.phasors[k];
      const auto& b = df.pmus[0].phasors[k];
      if (p.format.phasor_float) {
        const double tol = 1e-4 * (std::abs(b.first) + std::abs(b.second) + 1.0);
        CHECK(std::abs(a.first - b.first) <= tol);
      } else {
        CHECK(std::abs(a.first - b.first) <= 1.0);
        CHECK(std::abs(a.second - b.second) <= 1.0);
      }
    }
    CHECK(again.freq == doctest::Approx(df.pmus[0].freq).epsilon(1e-6));
  }
}
