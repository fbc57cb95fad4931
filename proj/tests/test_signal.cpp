#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "fixtures.hpp"
#include "wavelatent/error.hpp"
#include "wavelatent/signal.hpp"
#include "wavelatent/synthgen.hpp"

using namespace wavelatent;

TEST(RssSss, IdenticalIsZero) {
  const std::vector<double> y{1, 2, 3};
  EXPECT_NEAR(rss_sss(y, y), 0.0, 1e-12);
}

TEST(RssSss, ZeroReconstructionIsHundred) {
  const std::vector<double> y{1, 2, 3}, z{0, 0, 0};
  EXPECT_NEAR(rss_sss(y, z), 100.0, 1e-12);
}

TEST(RssSss, HandCaseFifty) {
  const std::vector<double> y{2, 0}, z{1, 1};
  EXPECT_NEAR(rss_sss(y, z), 50.0, 1e-12);
}

TEST(RssSss, LengthMismatchThrows) {
  const std::vector<double> y{1, 2}, z{1, 2, 3};
  EXPECT_THROW(rss_sss(y, z), DimensionError);
}

TEST(RssSss, ZeroEnergyThrows) {
  const std::vector<double> y{0, 0}, z{1, 1};
  EXPECT_THROW(rss_sss(y, z), DegenerateInputError);
}

TEST(RssSss, ScaleInvariantAndNonNegative) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> y(17), z(17);
    for (auto& v : y) v = rng.uniform(-2, 2);
    for (auto& v : z) v = rng.uniform(-2, 2);
    const double base = rss_sss(y, z);
    EXPECT_GE(base, 0.0);
    const double c = rng.uniform(0.1, 10.0) * (trial % 2 ? -1 : 1);
    for (auto& v : y) v *= c;
    for (auto& v : z) v *= c;
    EXPECT_NEAR(rss_sss(y, z), base, 1e-9 * std::max(1.0, base));
    EXPECT_NEAR(rss_sss(y, y), 0.0, 1e-15);
  }
}

TEST(DatasetGrid, RejectsOffGridRecord) {
  SignalRecord r{{0.5, 0.0}, 1, 0, {1.0, 2.0}, 1e-6};
  EXPECT_THROW(DatasetGrid::create({0, 1}, {0}, CountGrid(2, 1, 0), {1}, 2, 1e-6, {r}), ConfigError);
}

TEST(DatasetGrid, RejectsCountMismatch) {
  SignalRecord r{{0.0, 0.0}, 1, 0, {1.0, 2.0}, 1e-6};
  EXPECT_THROW(DatasetGrid::create({0, 1}, {0}, CountGrid(2, 1, 1), {1}, 2, 1e-6, {r}), ConfigError);
}

TEST(DatasetGrid, RejectsLengthMismatch) {
  SignalRecord r{{0.0, 0.0}, 1, 0, {1.0, 2.0, 3.0}, 1e-6};
  EXPECT_THROW(DatasetGrid::create({0}, {0}, CountGrid(1, 1, 1), {1}, 2, 1e-6, {r}), DimensionError);
}

TEST(DatasetGrid, RejectsUnsortedGrid) {
  EXPECT_THROW(DatasetGrid::create({1, 0}, {0}, CountGrid(2, 1, 0), {1}, 2, 1e-6, {}), ConfigError);
}

TEST(DatasetGrid, StateIndexLookup) {
  const auto d = fixtures::small_dataset(3, 2, 1, {1}, 8);
  EXPECT_EQ(d.state_index({2.0, 10.0}), (std::pair<std::size_t, std::size_t>{2, 1}));
  EXPECT_FALSE(d.state_index({2.5, 10.0}).has_value());
  EXPECT_EQ(d.state_count(), 6u);
}

TEST(Split, EightOfTwenty) {
  const auto d = fixtures::small_dataset(2, 2, 20, {1, 2}, 4);
  const auto [train, test] = split_by_trial(d, CountGrid(2, 2, 8));
  EXPECT_EQ(train.size(), 2u * 4u * 8u);
  EXPECT_EQ(test.size(), 2u * 4u * 12u);
  for (const auto& r : train.records()) EXPECT_LT(r.trial_id, 8);
  for (const auto& r : test.records()) EXPECT_GE(r.trial_id, 8);
}

TEST(Split, OneOfTwo) {
  const auto d = fixtures::small_dataset(2, 1, 2, {1}, 4);
  const auto [train, test] = split_by_trial(d, CountGrid(2, 1, 1));
  EXPECT_EQ(train.size(), 2u);
  EXPECT_EQ(test.size(), 2u);
}

TEST(Split, ZeroGivesEmptyTrain) {
  const auto d = fixtures::small_dataset(2, 2, 3, {1}, 4);
  const auto [train, test] = split_by_trial(d, CountGrid(2, 2, 0));
  EXPECT_TRUE(train.empty());
  EXPECT_EQ(test, d);
}

TEST(Split, OverRequestThrows) {
  const auto d = fixtures::small_dataset(2, 2, 3, {1}, 4);
  EXPECT_THROW(split_by_trial(d, CountGrid(2, 2, 4)), ConfigError);
}

TEST(Split, PartitionConservesRecords) {
  const auto d = fixtures::small_dataset(3, 3, 5, {1, 4}, 4);
  CountGrid counts(3, 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) counts(i, j) = static_cast<std::uint32_t>((i + j) % 6);
  const auto [train, test] = split_by_trial(d, counts);
  EXPECT_EQ(train.size() + test.size(), d.size());
  std::set<std::tuple<double, double, int, int>> seen;
  for (const auto* part : {&train, &test})
    for (const auto& r : part->records())
      EXPECT_TRUE(seen.insert({r.state.k1, r.state.k2, r.path_id, r.trial_id}).second);
  EXPECT_EQ(seen.size(), d.size());
}

TEST(Split, FractionKeepsOneEachSide) {
  const auto d = fixtures::small_dataset(2, 1, 2, {1}, 4);
  const auto c = train_counts_by_fraction(d, 0.4);
  EXPECT_EQ(c(0, 0), 1u);
  EXPECT_EQ(c(1, 0), 1u);
}

TEST(Scaling, MinMaxUnitRange) {
  const auto d = fixtures::small_dataset(3, 3, 2, {1}, 32);
  const auto [scaled, rec] = standardize(d, ScaleMode::minmax);
  double lo = 1e300, hi = -1e300;
  for (const auto& r : scaled.records())
    for (double x : r.samples) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
  EXPECT_NEAR(lo, -1.0, 1e-12);
  EXPECT_NEAR(hi, 1.0, 1e-12);
}

TEST(Scaling, ZScoreMoments) {
  const auto d = fixtures::small_dataset(3, 3, 2, {1}, 32, 0.1);
  const auto [scaled, rec] = standardize(d, ScaleMode::zscore);
  double sum = 0, sq = 0, n = 0;
  for (const auto& r : scaled.records())
    for (double x : r.samples) {
      sum += x;
      sq += x * x;
      n += 1;
    }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.0, 1e-10);
  EXPECT_NEAR(sq / n - mean * mean, 1.0, 1e-8);
}

TEST(Scaling, RoundTripInverts) {
  for (auto mode : {ScaleMode::minmax, ScaleMode::zscore, ScaleMode::peak}) {
    const auto d = fixtures::small_dataset(2, 3, 2, {1, 2}, 16, 0.05);
    const auto [scaled, rec] = standardize(d, mode);
    const auto back = invert_scaling(scaled, rec);
    for (std::size_t k = 0; k < d.size(); ++k)
      for (std::size_t t = 0; t < d.m(); ++t) {
        const double a = d.records()[k].samples[t], b = back.records()[k].samples[t];
        EXPECT_NEAR(a, b, 1e-12 * std::max(1.0, std::abs(a)));
      }
  }
}

TEST(Scaling, ConstantDatasetThrows) {
  SignalRecord r{{0.0, 0.0}, 1, 0, {2.0, 2.0}, 1e-6};
  const auto d = DatasetGrid::create({0}, {0}, CountGrid(1, 1, 1), {1}, 2, 1e-6, {r});
  EXPECT_THROW(standardize(d, ScaleMode::minmax), DegenerateInputError);
  EXPECT_THROW(standardize(d, ScaleMode::zscore), DegenerateInputError);
}

TEST(Scaling, GlobalMapKeepsAmplitudeRatios) {
  const auto d = fixtures::small_dataset(3, 1, 1, {1}, 64);
  const auto [scaled, rec] = standardize(d, ScaleMode::peak);
  auto peak = [](const SignalRecord& r) {
    double p = 0;
    for (double x : r.samples) p = std::max(p, std::abs(x));
    return p;
  };
  const double before = peak(d.records()[0]) / peak(d.records()[2]);
  const double after = peak(scaled.records()[0]) / peak(scaled.records()[2]);
  EXPECT_NEAR(before, after, 1e-12);
}

TEST(Persistence, WlatRoundTripBitExact) {
  fixtures::TempDir dir("wlat");
  const auto d = fixtures::small_dataset(2, 2, 3, {1, 7}, 5, 0.3);
  save_dataset(d, dir.path / "d.wlat");
  EXPECT_EQ(load_dataset(dir.path / "d.wlat"), d);
  EXPECT_EQ(d.fingerprint(), load_dataset(dir.path / "d.wlat").fingerprint());
}

TEST(Persistence, ThreeRecordCsvRoundTrip) {
  fixtures::TempDir dir("csv");
  const auto d = fixtures::small_dataset(3, 1, 1, {2}, 6, 0.3);
  ASSERT_EQ(d.size(), 3u);
  save_dataset(d, dir.path / "d.csv");
  EXPECT_EQ(load_dataset(dir.path / "d.csv"), d);
}

TEST(Persistence, CsvHeaderLayout) {
  const auto d = fixtures::small_dataset(1, 1, 1, {2}, 3);
  const std::string text = encode_csv(d);
  EXPECT_NE(text.find("\nk1,k2,path,trial,s0,s1,s2\n"), std::string::npos);
}

TEST(Persistence, WrongMagicThrows) {
  auto bytes = encode_wlat(fixtures::small_dataset(1, 1, 1, {1}, 3));
  bytes[0] = 'X';
  try {
    decode_wlat(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 0u);
  }
}

TEST(Persistence, TruncatedThrows) {
  auto bytes = encode_wlat(fixtures::small_dataset(2, 2, 1, {1}, 3));
  bytes.resize(bytes.size() - 5);
  EXPECT_THROW(decode_wlat(bytes), FormatError);
}

TEST(Persistence, VersionMismatchThrows) {
  auto bytes = encode_wlat(fixtures::small_dataset(1, 1, 1, {1}, 3));
  bytes[4] = 99;
  try {
    decode_wlat(bytes);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 4u);
  }
}

TEST(Persistence, MalformedCsvHeaderThrows) {
  EXPECT_THROW(decode_csv("a,b,c\n1,2,3\n"), FormatError);
}

TEST(Persistence, FullCaseOneRoundTripUnderTwoSeconds) {
  fixtures::TempDir dir("full");
  const auto d = generate_dataset(preset("case1-full").config);
  ASSERT_EQ(d.size(), 3690u);
  const auto t0 = std::chrono::steady_clock::now();
  save_dataset(d, dir.path / "full.wlat");
  const auto back = load_dataset(dir.path / "full.wlat");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_EQ(back, d);
  EXPECT_LT(secs, 2.0);
}
