#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <thread>

#include "fixtures.hpp"
#include "medsafe/util.hpp"

using namespace medsafe;

TEST(Util, FormatNumberIsShortestRoundTrip) {
  EXPECT_EQ(format_number(41.0), "41");
  EXPECT_EQ(format_number(7.25), "7.25");
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_fixed(2.0 / 3.0, 3), "0.667");
}

TEST(Util, CsvFieldQuotesOnlyWhenNeeded) {
  EXPECT_EQ(csv_field("plain"), "plain");
  EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
  EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
}

TEST(Util, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Util, StringHelpers) {
  EXPECT_EQ(trim("  x y \n"), "x y");
  EXPECT_EQ(to_lower("KG/M2"), "kg/m2");
  EXPECT_EQ(split_lines("a\nb\r\n\nc"), (std::vector<std::string>{"a", "b", "", "c"}));
}

TEST(Util, AtomicWriteReplacesContent) {
  medsafe::fixture::TempDir dir;
  const auto path = dir.file("doc.json");
  write_file_atomic(path, "first");
  write_file_atomic(path, "second");
  EXPECT_EQ(read_file(path), "second");
  for (const auto& e : std::filesystem::directory_iterator(dir.path())) {
    EXPECT_EQ(e.path().filename(), "doc.json") << "temp file left behind";
  }
}

TEST(Util, ConcurrentAtomicWritersNeverTear) {
  medsafe::fixture::TempDir dir;
  const auto path = dir.file("doc.txt");
  const std::string a(50000, 'a');
  const std::string b(70000, 'b');
  write_file_atomic(path, a);
  std::thread w1([&] { for (int i = 0; i < 20; ++i) write_file_atomic(path, a); });
  std::thread w2([&] { for (int i = 0; i < 20; ++i) write_file_atomic(path, b); });
  for (int i = 0; i < 50; ++i) {
    const auto s = read_file(path);
    EXPECT_TRUE(s == a || s == b);
  }
  w1.join();
  w2.join();
}

TEST(Rng, DeterministicForSeed) {
  Rng r1(7), r2(7);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(r1.uniform_int(0, 1000), r2.uniform_int(0, 1000));
}

TEST(Rng, UniformIntStaysInRangeAndShuffleIsPermutation) {
  Rng r(11);
  for (int i = 0; i < 1000; ++i) {
    const auto v = r.uniform_int(-3, 3);
    EXPECT_GE(v, -3);
    EXPECT_LE(v, 3);
  }
  std::vector<int> v(50);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(v);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
}

TEST(Rng, WeightedIndexNeverPicksZeroWeight) {
  Rng r(3);
  for (int i = 0; i < 500; ++i) EXPECT_NE(r.weighted_index({1.0, 0.0, 2.0}), 1u);
}
