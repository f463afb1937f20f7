#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "peot/error.hpp"
#include "peot/signal_features.hpp"

using namespace peot;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = g(rng);
  return v;
}

Window win(const std::vector<double>& v, double fs = 256.0) { return Window{v, fs}; }

}  // namespace

TEST_CASE("line length on small windows") {
  CHECK(line_length(win({1, 1, 1, 1})) == 0.0);
  CHECK(line_length(win({0, 1, 2, 3})) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(line_length(win({1.0})), Error);
}

TEST_CASE("line length matches direct summation") {
  const auto v = noise(256, 7);
  long double s = 0;
  for (std::size_t i = 1; i < v.size(); ++i) s += std::fabs(static_cast<long double>(v[i]) - v[i - 1]);
  CHECK(std::abs(line_length(win(v)) - static_cast<double>(s / 256)) < 1e-12);
}

TEST_CASE("variance is the population variance") {
  CHECK(variance(win({5, 5, 5})) == 0.0);
  CHECK(variance(win({0, 2})) == doctest::Approx(1.0));
  CHECK_THROWS_AS(variance(win({3.0})), Error);
  const auto v = noise(300, 11);
  long double mean = 0;
  for (double x : v) mean += x;
  mean /= v.size();
  long double ss = 0;
  for (double x : v) ss += (x - mean) * (x - mean);
  CHECK(std::abs(variance(win(v)) - static_cast<double>(ss / v.size())) < 1e-12);
}

TEST_CASE("band power") {
  const std::vector<double> zeros(256, 0.0);
  CHECK(band_power(win(zeros), 8, 12) == 0.0);

  std::vector<double> sine(256);
  for (std::size_t i = 0; i < sine.size(); ++i) sine[i] = std::sin(2 * std::numbers::pi * 10.0 * i / 256.0);
  CHECK(band_power(win(sine), 8, 12) > 10.0 * band_power(win(sine), 30, 40));

  const auto v = noise(1024, 5);
  double ms = 0;
  for (std::size_t i = 64; i < v.size(); ++i) ms += v[i] * v[i];
  ms /= static_cast<double>(v.size() - 64);
  CHECK(band_power(win(v), 1, 127.9) == doctest::Approx(ms).epsilon(0.2));

  CHECK_THROWS_AS(band_power(win(sine), 0, 12), Error);
  CHECK_THROWS_AS(band_power(win(sine), 12, 8), Error);
  CHECK_THROWS_AS(band_power(win(sine), 8, 128), Error);
  CHECK_THROWS_AS(band_power(win(std::vector<double>(64, 1.0)), 8, 12), Error);
}

TEST_CASE("band-pass taps are symmetric with unit centre gain") {
  const auto taps = design_bandpass(8, 12, 256);
  REQUIRE(taps.size() == static_cast<std::size_t>(kBandPassOrder + 1));
  for (std::size_t i = 0; i < taps.size(); ++i) CHECK(taps[i] == taps[taps.size() - 1 - i]);
  const double w = 2 * std::numbers::pi * 10.0 / 256.0;
  double re = 0, im = 0;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    re += taps[i] * std::cos(w * i);
    im -= taps[i] * std::sin(w * i);
  }
  CHECK(std::hypot(re, im) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("feature extraction layout") {
  Recording rec;
  rec.fs = 256;
  rec.channels = {noise(768, 1), noise(768, 2)};
  WindowingConfig wc;
  FeatureSpec one{{{0, FeatureKind::LineLength, 0, 0}}};
  const Matrix m = extract_features(rec, one, wc);
  CHECK(m.rows() == 3);
  CHECK(m.cols() == 1);

  FeatureSpec dup{{{1, FeatureKind::Variance, 0, 0}, {1, FeatureKind::Variance, 0, 0}}};
  const Matrix d = extract_features(rec, dup, wc);
  CHECK(d.col(0) == d.col(1));

  FeatureSpec abc{{{0, FeatureKind::LineLength, 0, 0}, {1, FeatureKind::BandPower, 8, 12}, {1, FeatureKind::Variance, 0, 0}}};
  FeatureSpec cab{{abc.entries[2], abc.entries[0], abc.entries[1]}};
  const Matrix x = extract_features(rec, abc, wc), y = extract_features(rec, cab, wc);
  CHECK(y.col(0) == x.col(2));
  CHECK(y.col(1) == x.col(0));
  CHECK(y.col(2) == x.col(1));

  FeatureSpec bad{{{2, FeatureKind::LineLength, 0, 0}}};
  CHECK_THROWS_AS(extract_features(rec, bad, wc), Error);
}

TEST_CASE("overlapping windows") {
  WindowingConfig wc{256, 0.5};
  CHECK(window_hop(wc) == 128);
  CHECK(window_count(768, wc) == 5);
  CHECK(window_count(255, wc) == 0);
}

TEST_CASE("cost vectors") {
  const CostTable t = CostTable::defaults();
  CHECK(feature_cost_vector(FeatureSpec{{{0, FeatureKind::LineLength, 0, 0}}}, t) == std::vector<double>{1.0});
  FeatureSpec s{{{0, FeatureKind::LineLength, 0, 0}, {0, FeatureKind::BandPower, 8, 12}, {0, FeatureKind::Variance, 0, 0}}};
  CHECK(feature_cost_vector(s, t) == std::vector<double>{1.0, 25.0, 3.0});
  CHECK(feature_cost_vector(FeatureSpec{}, t).empty());
  CostTable partial;
  partial.costs[FeatureKind::LineLength] = 1.0;
  try {
    feature_cost_vector(s, partial);
    FAIL("expected a config error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("feature config JSON round trip") {
  const auto j = nlohmann::json::parse(R"({"window_samples": 128, "overlap": 0.25,
    "features": [{"channel": 0, "kind": "LineLength"}, {"channel": 1, "kind": "BandPower", "lo_hz": 8, "hi_hz": 12}],
    "costs": {"LineLength": 2, "Variance": 3, "BandPower": 40}})");
  const FeatureConfig cfg = feature_config_from_json(j);
  CHECK(cfg.windowing.window_samples == 128);
  CHECK(cfg.spec.entries.size() == 2);
  CHECK(feature_cost_vector(cfg.spec, cfg.table) == std::vector<double>{2.0, 40.0});
  CHECK(feature_config_to_json(feature_config_from_json(feature_config_to_json(cfg))) == feature_config_to_json(cfg));
  CHECK_THROWS_AS(feature_config_from_json(nlohmann::json::parse(R"({"bogus": 1})")), Error);
}
