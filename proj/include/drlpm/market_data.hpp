#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "drlpm/error.hpp"

namespace drlpm {

// Daily OHLC history of one asset. A zero price marks a missing value.
struct PriceSeries {
  std::string asset_id;
  std::vector<std::string> dates;  // ISO-8601, strictly increasing
  std::vector<double> open;
  std::vector<double> high;
  std::vector<double> low;
  std::vector<double> close;

  std::size_t size() const { return dates.size(); }

  // Throws DataError naming the offending date.
  void validate() const {
    const std::size_t n = dates.size();
    if (open.size() != n || high.size() != n || low.size() != n || close.size() != n) {
      throw DataError(asset_id + ": price columns differ in length from the date axis");
    }
    for (std::size_t d = 0; d < n; ++d) {
      if (d > 0 && !(dates[d - 1] < dates[d])) {
        throw DataError(asset_id + ": dates not strictly increasing at " + dates[d]);
      }
      const double o = open[d], h = high[d], l = low[d], c = close[d];
      if (o < 0 || h < 0 || l < 0 || c < 0) {
        throw DataError(asset_id + ": negative price on " + dates[d]);
      }
      if (o > 0 && h > 0 && l > 0 && c > 0) {
        if (!(l <= o && o <= h && l <= c && c <= h)) {
          throw DataError(asset_id + ": inconsistent OHLC on " + dates[d]);
        }
      }
    }
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      break;
    }
    cells.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return cells;
}

// Malformed or blank cells parse as zero (missing).
inline double parse_price(std::string_view cell) {
  double v = 0.0;
  const auto* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || !(v >= 0.0) || v != v) return 0.0;
  return v;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  return out;
}

}  // namespace detail

// Parses `date,open,high,low,close` rows. The asset id defaults to the file stem.
inline PriceSeries load_csv(const std::filesystem::path& path, std::string asset_id = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  if (asset_id.empty()) asset_id = path.stem().string();

  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  {
    const auto header = detail::split_csv_line(line);
    static const char* expected[] = {"date", "open", "high", "low", "close"};
    if (header.size() < 5) throw DataError(path.string() + ": header must be date,open,high,low,close");
    for (std::size_t i = 0; i < 5; ++i) {
      if (detail::lower(header[i]) != expected[i]) {
        throw DataError(path.string() + ": header must be date,open,high,low,close");
      }
    }
  }

  struct Row {
    double o, h, l, c;
  };
  std::map<std::string, Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.empty() || cells[0].empty()) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": missing date");
    }
    auto cell = [&](std::size_t i) { return i < cells.size() ? detail::parse_price(cells[i]) : 0.0; };
    std::string date(cells[0]);
    if (!rows.emplace(date, Row{cell(1), cell(2), cell(3), cell(4)}).second) {
      throw DataError(path.string() + ": duplicate date " + date);
    }
  }

  PriceSeries s;
  s.asset_id = std::move(asset_id);
  for (const auto& [date, r] : rows) {
    s.dates.push_back(date);
    s.open.push_back(r.o);
    s.high.push_back(r.h);
    s.low.push_back(r.l);
    s.close.push_back(r.c);
  }
  s.validate();
  return s;
}

inline void write_csv(const PriceSeries& s, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(17);
  out << "date,open,high,low,close\n";
  for (std::size_t d = 0; d < s.size(); ++d) {
    out << s.dates[d] << ',' << s.open[d] << ',' << s.high[d] << ',' << s.low[d] << ',' << s.close[d]
        << '\n';
  }
}

// m assets on one shared date axis; the benchmark sits in the last position.
class AlignedMarket {
 public:
  AlignedMarket(std::vector<PriceSeries> assets, std::size_t benchmark_index)
      : assets_(std::move(assets)), benchmark_index_(benchmark_index) {
    if (assets_.empty()) throw DataError("market has no assets");
    if (benchmark_index_ >= assets_.size()) throw DataError("benchmark index out of range");
    for (const auto& a : assets_) {
      a.validate();
      if (a.dates != assets_.front().dates) {
        throw DataError("asset " + a.asset_id + " does not share the market date axis");
      }
    }
  }

  std::size_t num_assets() const { return assets_.size(); }
  std::size_t num_days() const { return assets_.front().size(); }
  std::size_t benchmark_index() const { return benchmark_index_; }
  const std::vector<PriceSeries>& assets() const { return assets_; }
  const PriceSeries& asset(std::size_t i) const { return assets_.at(i); }
  const std::vector<std::string>& dates() const { return assets_.front().dates; }

  double close(std::size_t i, std::size_t t) const { return assets_[i].close[t]; }

  // Feature order matches the tensor layout: close, high, low, open.
  double feature(std::size_t f, std::size_t i, std::size_t t) const {
    const auto& a = assets_[i];
    switch (f) {
      case 0: return a.close[t];
      case 1: return a.high[t];
      case 2: return a.low[t];
      default: return a.open[t];
    }
  }

  // Index of the first date >= `date` (num_days() if none).
  std::size_t lower_index(const std::string& date) const {
    const auto& d = dates();
    return static_cast<std::size_t>(std::lower_bound(d.begin(), d.end(), date) - d.begin());
  }

 private:
  std::vector<PriceSeries> assets_;
  std::size_t benchmark_index_;
};

// Restricts all series to their common dates and moves the benchmark to the end.
inline AlignedMarket align(std::vector<PriceSeries> series, const std::string& benchmark) {
  if (series.size() < 2) throw DataError("alignment needs at least two series");
  const auto bench = std::find_if(series.begin(), series.end(),
                                  [&](const PriceSeries& s) { return s.asset_id == benchmark; });
  if (bench == series.end()) throw DataError("benchmark " + benchmark + " not among the series");
  std::rotate(bench, bench + 1, series.end());

  std::set<std::string> common(series.front().dates.begin(), series.front().dates.end());
  for (std::size_t k = 1; k < series.size(); ++k) {
    std::set<std::string> next;
    for (const auto& d : series[k].dates) {
      if (common.count(d)) next.insert(d);
    }
    common.swap(next);
  }
  if (common.empty()) {
    std::string names;
    for (const auto& s : series) names += (names.empty() ? "" : ", ") + s.asset_id;
    throw DataError("empty date intersection across assets: " + names);
  }

  for (auto& s : series) {
    PriceSeries r;
    r.asset_id = s.asset_id;
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (!common.count(s.dates[d])) continue;
      r.dates.push_back(s.dates[d]);
      r.open.push_back(s.open[d]);
      r.high.push_back(s.high[d]);
      r.low.push_back(s.low[d]);
      r.close.push_back(s.close[d]);
    }
    s = std::move(r);
  }
  const std::size_t m = series.size();
  return AlignedMarket(std::move(series), m - 1);
}

// Days [first, last] of every series, benchmark position unchanged.
inline AlignedMarket slice_days(const AlignedMarket& market, std::size_t first, std::size_t last) {
  if (first > last || last >= market.num_days()) throw DomainError("day slice out of range");
  std::vector<PriceSeries> out;
  for (const auto& a : market.assets()) {
    const auto b = static_cast<std::ptrdiff_t>(first), e = static_cast<std::ptrdiff_t>(last + 1);
    PriceSeries s;
    s.asset_id = a.asset_id;
    s.dates.assign(a.dates.begin() + b, a.dates.begin() + e);
    s.open.assign(a.open.begin() + b, a.open.begin() + e);
    s.high.assign(a.high.begin() + b, a.high.begin() + e);
    s.low.assign(a.low.begin() + b, a.low.begin() + e);
    s.close.assign(a.close.begin() + b, a.close.begin() + e);
    out.push_back(std::move(s));
  }
  return AlignedMarket(std::move(out), market.benchmark_index());
}

// Loads every *.csv in `dir`, sorted by file name.
inline std::vector<PriceSeries> load_directory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<PriceSeries> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(load_csv(f));
  return out;
}

// Normalized observation X_t, shape (4 features, m assets, n window steps).
class PriceTensor {
 public:
  static constexpr std::size_t kFeatures = 4;

  PriceTensor() = default;
  PriceTensor(std::size_t assets, std::size_t window, std::size_t t)
      : assets_(assets), window_(window), t_(t), data_(kFeatures * assets * window, 1.0) {}

  std::size_t assets() const { return assets_; }
  std::size_t window() const { return window_; }
  std::size_t day() const { return t_; }

  double& at(std::size_t f, std::size_t i, std::size_t k) { return data_[(f * assets_ + i) * window_ + k]; }
  double at(std::size_t f, std::size_t i, std::size_t k) const {
    return data_[(f * assets_ + i) * window_ + k];
  }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const PriceTensor&, const PriceTensor&) = default;

 private:
  std::size_t assets_ = 0;
  std::size_t window_ = 0;
  std::size_t t_ = 0;
  std::vector<double> data_;
};

namespace detail {
// Missing values (zero on either side) are treated as a flat, untradeable day.
inline double safe_ratio(double num, double den) {
  return (num > 0.0 && den > 0.0) ? num / den : 1.0;
}
}  // namespace detail

// Entry (f, i, k) = feature f of asset i at day t-n+1+k over close of asset i at day t.
inline PriceTensor price_tensor(const AlignedMarket& market, std::size_t t, std::size_t n) {
  if (n < 1 || t + 1 < n || t >= market.num_days()) {
    throw DomainError("price window of length " + std::to_string(n) + " unavailable at day " +
                      std::to_string(t));
  }
  const std::size_t m = market.num_assets();
  PriceTensor x(m, n, t);
  for (std::size_t i = 0; i < m; ++i) {
    const double ref = market.close(i, t);
    for (std::size_t f = 0; f < PriceTensor::kFeatures; ++f) {
      for (std::size_t k = 0; k < n; ++k) {
        x.at(f, i, k) = detail::safe_ratio(market.feature(f, i, t + 1 - n + k), ref);
      }
    }
    x.at(0, i, n - 1) = 1.0;
  }
  return x;
}

// Y_t: cash relative 1 followed by close_i(t)/close_i(t-1) for each asset.
inline std::vector<double> relative_prices(const AlignedMarket& market, std::size_t t) {
  if (t < 1 || t >= market.num_days()) {
    throw DomainError("relative prices undefined at day " + std::to_string(t));
  }
  const std::size_t m = market.num_assets();
  std::vector<double> y(m + 1, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    y[i + 1] = detail::safe_ratio(market.close(i, t), market.close(i, t - 1));
  }
  return y;
}

}  // namespace drlpm
