#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "drlpm/market_data.hpp"
#include "drlpm/synthetic.hpp"

namespace drlpm {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("drlpm_md_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path write(const std::string& name, const std::string& body) const {
    std::ofstream(path_ / name) << body;
    return path_ / name;
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

PriceSeries series(const std::string& id, std::vector<std::string> dates, std::vector<double> closes) {
  PriceSeries s;
  s.asset_id = id;
  s.dates = std::move(dates);
  s.open = s.high = s.low = s.close = std::move(closes);
  return s;
}

TEST(LoadCsv, WellFormed) {
  TempDir dir;
  const auto p = dir.write("AAA.csv",
                           "date,open,high,low,close\n"
                           "2020-01-03,10,11,9,10.5\n"
                           "2020-01-02,9,10,8,9.5\n"
                           "2020-01-06,10.5,12,10,11\n");
  const auto s = load_csv(p);
  EXPECT_EQ(s.asset_id, "AAA");
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.dates.front(), "2020-01-02");
  EXPECT_EQ(s.close[1], 10.5);
  EXPECT_EQ(s.high[2], 12.0);
}

TEST(LoadCsv, BlankCellIsMissing) {
  TempDir dir;
  const auto p = dir.write("B.csv",
                           "date,open,high,low,close\n"
                           "2020-01-02,9,10,8,\n"
                           "2020-01-03,10,11,9,abc\n"
                           "2020-01-06,10,11,9,10\n");
  const auto s = load_csv(p);
  EXPECT_EQ(s.close[0], 0.0);
  EXPECT_EQ(s.close[1], 0.0);
  EXPECT_EQ(s.close[2], 10.0);
}

TEST(LoadCsv, Errors) {
  TempDir dir;
  const auto dup = dir.write("D.csv",
                             "date,open,high,low,close\n"
                             "2020-01-02,9,10,8,9\n"
                             "2020-01-02,9,10,8,9\n");
  try {
    load_csv(dup);
    FAIL() << "expected a format error";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("2020-01-02"), std::string::npos);
  }
  EXPECT_THROW(load_csv(dir.path() / "missing.csv"), DataError);
  EXPECT_THROW(load_csv(dir.write("H.csv", "day,o,h,l,c\n")), DataError);
  EXPECT_THROW(load_csv(dir.write("I.csv", "date,open,high,low,close\n2020-01-02,9,10,11,9\n")), DataError);
}

TEST(Align, IdenticalDates) {
  const auto m = align({series("A", {"1", "2", "3"}, {1, 2, 3}), series("B", {"1", "2", "3"}, {4, 5, 6})}, "A");
  EXPECT_EQ(m.num_days(), 3u);
  EXPECT_EQ(m.asset(m.benchmark_index()).asset_id, "A");
  EXPECT_EQ(m.benchmark_index(), 1u);
}

TEST(Align, Intersection) {
  const auto m = align({series("A", {"1", "2", "3"}, {1, 2, 3}), series("B", {"2", "3", "4"}, {5, 6, 7})}, "B");
  ASSERT_EQ(m.num_days(), 2u);
  EXPECT_EQ(m.dates(), (std::vector<std::string>{"2", "3"}));
  EXPECT_EQ(m.close(0, 0), 2.0);
  EXPECT_EQ(m.close(1, 1), 6.0);
}

TEST(Align, Errors) {
  EXPECT_THROW(align({series("A", {"1", "2"}, {1, 2}), series("B", {"3", "4"}, {1, 2})}, "A"), DataError);
  EXPECT_THROW(align({series("A", {"1"}, {1}), series("B", {"1"}, {1})}, "Z"), DataError);
  EXPECT_THROW(align({series("A", {"1"}, {1})}, "A"), DataError);
}

TEST(PriceTensor, ConstantPricesAreOnes) {
  const auto m = synthetic::drift_market({0, 0, 0}, {}, 80);
  const auto x = price_tensor(m, 60, 50);
  for (double v : x.data()) EXPECT_EQ(v, 1.0);
}

TEST(PriceTensor, LastCloseColumnIsOne) {
  const auto m = synthetic::drift_market({0.01, -0.02, 0.003, 0.0}, {0.02, 0.03, 0.01, 0.01}, 120, 4);
  for (std::size_t t : {49u, 70u, 119u}) {
    const auto x = price_tensor(m, t, 50);
    for (std::size_t i = 0; i < m.num_assets(); ++i) EXPECT_EQ(x.at(0, i, 49), 1.0);
  }
}

TEST(PriceTensor, MatchesRawCsvRatios) {
  TempDir dir;
  // close rises linearly from 1 to 2 over 10 days
  std::string body = "date,open,high,low,close\n";
  std::vector<double> closes;
  for (int d = 0; d < 10; ++d) {
    const double c = 1.0 + d / 9.0;
    closes.push_back(c);
    char row[128];
    std::snprintf(row, sizeof row, "2021-01-%02d,%.17g,%.17g,%.17g,%.17g\n", d + 1, c, c * 1.01, c * 0.99, c);
    body += row;
  }
  const auto a = load_csv(dir.write("LIN.csv", body));
  const auto b = load_csv(dir.write("FLAT.csv", body));
  const auto m = align({a, b}, "FLAT");
  const auto x = price_tensor(m, 9, 5);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_NEAR(x.at(0, 0, k), closes[5 + k] / closes[9], 1e-15);
    EXPECT_NEAR(x.at(1, 0, k), closes[5 + k] * 1.01 / closes[9], 1e-15);
    EXPECT_NEAR(x.at(2, 0, k), closes[5 + k] * 0.99 / closes[9], 1e-15);
  }
  EXPECT_THROW(price_tensor(m, 3, 5), DomainError);
}

TEST(PriceTensor, MissingValuesGiveRatioOne) {
  auto a = series("A", {"1", "2", "3", "4"}, {10, 11, 0, 12});
  auto b = series("B", {"1", "2", "3", "4"}, {5, 5, 5, 5});
  const auto m = align({a, b}, "B");
  const auto x = price_tensor(m, 3, 4);
  EXPECT_EQ(x.at(0, 0, 2), 1.0);
  EXPECT_NEAR(x.at(0, 0, 0), 10.0 / 12.0, 1e-15);
  const auto x2 = price_tensor(m, 2, 3);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(x2.at(0, 0, k), 1.0);
}

TEST(PriceTensor, InvariantUnderRescaling) {
  const auto m = synthetic::drift_market({0.004, -0.001, 0.0}, {0.02, 0.015, 0.01}, 90, 21);
  std::vector<PriceSeries> scaled = m.assets();
  for (auto* col : {&scaled[1].open, &scaled[1].high, &scaled[1].low, &scaled[1].close}) {
    for (double& v : *col) v *= 7.3;
  }
  const AlignedMarket m2(scaled, m.benchmark_index());
  const auto x1 = price_tensor(m, 80, 50);
  const auto x2 = price_tensor(m2, 80, 50);
  for (std::size_t i = 0; i < x1.data().size(); ++i) EXPECT_NEAR(x1.data()[i], x2.data()[i], 1e-12);
}

TEST(RelativePrices, Examples) {
  const auto m = align({series("A", {"1", "2", "3"}, {10, 11, 0}), series("B", {"1", "2", "3"}, {5, 5, 5})}, "B");
  const auto y1 = relative_prices(m, 1);
  EXPECT_EQ(y1[0], 1.0);
  EXPECT_NEAR(y1[1], 1.1, 1e-15);
  EXPECT_EQ(y1[2], 1.0);
  const auto y2 = relative_prices(m, 2);
  EXPECT_EQ(y2[1], 1.0);
  EXPECT_THROW(relative_prices(m, 0), DomainError);
}

TEST(RelativePrices, ConsistentWithTensorCloseRatios) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m = synthetic::drift_market({0.001, -0.002, 0.0005}, {0.02, 0.03, 0.01}, 70, rng());
    const std::size_t t = 20 + rng() % 49;
    const std::size_t n = 10;
    const auto x = price_tensor(m, t, n);
    const auto y = relative_prices(m, t);
    EXPECT_EQ(y[0], 1.0);
    for (std::size_t i = 0; i < m.num_assets(); ++i) {
      // close(t) / close(t - 1) = 1 / X[close, i, n - 2]
      EXPECT_NEAR(y[i + 1], 1.0 / x.at(0, i, n - 2), 1e-12);
    }
  }
}

TEST(LoadDirectory, LoadsSortedCsvs) {
  TempDir dir;
  const auto m = synthetic::drift_market({0.001, 0.0}, {0.01, 0.01}, 20, 2);
  write_csv(m.asset(1), dir.path() / "BENCH.csv");
  write_csv(m.asset(0), dir.path() / "A0.csv");
  dir.write("notes.txt", "ignored");
  const auto all = load_directory(dir.path());
  ASSERT_EQ(all.size(), 2u);
  EXPECT_EQ(all[0].asset_id, "A0");
  EXPECT_EQ(all[0].close, m.asset(0).close);
}

}  // namespace
}  // namespace drlpm
