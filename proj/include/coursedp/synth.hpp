#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "coursedp/bandit.hpp"
#include "coursedp/curriculum_io.hpp"
#include "coursedp/error.hpp"
#include "coursedp/random.hpp"

namespace coursedp {

/// Axis-aligned box of raw contexts. Each axis is (low, high], except that
/// the lowest edge of the whole table is closed.
struct GpaBin {
  std::vector<double> low;
  std::vector<double> high;
};

struct GpaCell {
  double mean = 0.0;
  std::uint64_t count = 0;
  std::optional<double> stddev;
  bool available() const noexcept { return count > 0; }
};

struct GpaTable {
  int dims = 1;
  int arms = 0;
  std::vector<GpaBin> bins;
  std::vector<std::vector<GpaCell>> cells;  // [bin][arm], arms 0-based
  std::vector<double> range_low;
  std::vector<double> range_high;

  std::uint64_t bin_count(std::size_t b) const {
    std::uint64_t n = 0;
    for (const auto& c : cells.at(b)) n += c.count;
    return n;
  }

  const GpaCell& cell(std::size_t b, int arm) const { return cells.at(b).at(static_cast<std::size_t>(arm)); }

  std::optional<std::size_t> bin_of(std::span<const double> raw) const {
    if (raw.size() != static_cast<std::size_t>(dims)) return std::nullopt;
    for (std::size_t b = 0; b < bins.size(); ++b) {
      bool inside = true;
      for (std::size_t j = 0; j < raw.size() && inside; ++j) {
        const double lo = bins[b].low[j];
        const double hi = bins[b].high[j];
        inside = (raw[j] > lo || (lo == range_low[j] && raw[j] == lo)) && raw[j] <= hi;
      }
      if (inside) return b;
    }
    return std::nullopt;
  }
};

namespace detail {

inline double box_volume(const std::vector<double>& lo, const std::vector<double>& hi) {
  double v = 1.0;
  for (std::size_t j = 0; j < lo.size(); ++j) v *= hi[j] - lo[j];
  return v;
}

inline void validate_gpa_table(GpaTable& t) {
  if (t.bins.empty()) throw Error(Errc::ParseError, "GPA table has no rows");
  t.range_low = t.bins.front().low;
  t.range_high = t.bins.front().high;
  for (const auto& b : t.bins)
    for (std::size_t j = 0; j < b.low.size(); ++j) {
      if (!(b.low[j] < b.high[j])) throw Error(Errc::RangeError, "bin has empty interval");
      t.range_low[j] = std::min(t.range_low[j], b.low[j]);
      t.range_high[j] = std::max(t.range_high[j], b.high[j]);
    }
  for (std::size_t a = 0; a < t.bins.size(); ++a)
    for (std::size_t b = a + 1; b < t.bins.size(); ++b) {
      bool overlap = true;
      for (std::size_t j = 0; j < t.bins[a].low.size() && overlap; ++j)
        overlap = t.bins[a].low[j] < t.bins[b].high[j] && t.bins[b].low[j] < t.bins[a].high[j];
      if (overlap) throw Error(Errc::OverlappingBins, "context bins " + std::to_string(a) + " and " + std::to_string(b) + " overlap");
    }
  // Disjoint boxes cover the bounding box iff their volumes add up to it.
  double covered = 0.0;
  for (const auto& b : t.bins) covered += box_volume(b.low, b.high);
  const double whole = box_volume(t.range_low, t.range_high);
  if (std::abs(covered - whole) > 1e-9 * whole) throw Error(Errc::RangeError, "context bins leave a gap in the range");
  for (const auto& row : t.cells)
    for (const auto& c : row) {
      if (c.available() && !(c.mean >= kGpaMin && c.mean <= kGpaMax))
        throw Error(Errc::RangeError, "cell mean outside [0,4]");
      if (c.stddev && !(*c.stddev >= 0.0)) throw Error(Errc::RangeError, "negative cell std");
    }
}

}  // namespace detail

/// CSV with header bin_low,bin_high,arm,mean,count[,std]; for W > 1 the bin
/// columns are bin_low_0,bin_high_0,...,bin_low_{W-1},bin_high_{W-1}. Arms
/// are labelled 1..Z in the file and stored 0-based. Zero-count cells may
/// carry "NA" as mean. Blank lines and lines starting with '#' are skipped.
inline GpaTable parse_gpa_table(std::istream& in) {
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    header = detail::split_csv(line);
    break;
  }
  if (header.empty()) throw Error(Errc::ParseError, "GPA table is empty");

  auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };
  std::vector<std::size_t> low_col, high_col;
  if (col("bin_low") && col("bin_high")) {
    low_col = {*col("bin_low")};
    high_col = {*col("bin_high")};
  } else {
    for (int j = 0;; ++j) {
      auto lo = col("bin_low_" + std::to_string(j));
      auto hi = col("bin_high_" + std::to_string(j));
      if (!lo || !hi) break;
      low_col.push_back(*lo);
      high_col.push_back(*hi);
    }
  }
  const auto arm_col = col("arm"), mean_col = col("mean"), count_col = col("count"), std_col = col("std");
  if (low_col.empty() || !arm_col || !mean_col || !count_col)
    throw Error(Errc::ParseError, "GPA table header must name bin_low, bin_high, arm, mean, count");

  GpaTable t;
  t.dims = static_cast<int>(low_col.size());
  struct Row {
    GpaBin bin;
    int arm;
    GpaCell cell;
  };
  std::vector<Row> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != header.size())
      throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                        " fields");
    Row r;
    for (std::size_t j = 0; j < low_col.size(); ++j) {
      r.bin.low.push_back(detail::to_double(f[low_col[j]]));
      r.bin.high.push_back(detail::to_double(f[high_col[j]]));
    }
    const double arm = detail::to_double(f[*arm_col]);
    if (arm < 1 || arm != std::floor(arm)) throw Error(Errc::RangeError, "arm labels must be integers >= 1");
    r.arm = static_cast<int>(arm) - 1;
    const double count = detail::to_double(f[*count_col]);
    if (count < 0 || count != std::floor(count)) throw Error(Errc::RangeError, "counts must be non-negative integers");
    r.cell.count = static_cast<std::uint64_t>(count);
    const std::string& m = f[*mean_col];
    if (m == "NA" || m == "na" || m.empty()) {
      if (r.cell.count > 0) throw Error(Errc::ParseError, "line " + std::to_string(line_no) + ": NA mean with nonzero count");
      r.cell.mean = 0.0;
    } else {
      r.cell.mean = detail::to_double(m);
    }
    if (std_col && !f[*std_col].empty() && f[*std_col] != "NA") r.cell.stddev = detail::to_double(f[*std_col]);
    t.arms = std::max(t.arms, r.arm + 1);
    rows.push_back(std::move(r));
  }

  for (auto& r : rows) {
    std::size_t b = 0;
    while (b < t.bins.size() && (t.bins[b].low != r.bin.low || t.bins[b].high != r.bin.high)) ++b;
    if (b == t.bins.size()) {
      t.bins.push_back(r.bin);
      t.cells.emplace_back(static_cast<std::size_t>(t.arms));
      t.cells.back().assign(static_cast<std::size_t>(t.arms), GpaCell{-1.0, 0, std::nullopt});
    }
    auto& slot = t.cells[b][static_cast<std::size_t>(r.arm)];
    if (slot.mean != -1.0) throw Error(Errc::ParseError, "duplicate (bin, arm) row");
    slot = r.cell;
  }
  for (const auto& row : t.cells)
    for (const auto& c : row)
      if (c.mean == -1.0) throw Error(Errc::ParseError, "some (bin, arm) cell is missing");
  detail::validate_gpa_table(t);
  return t;
}

inline GpaTable load_gpa_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open '" + path.string() + "'");
  return parse_gpa_table(in);
}

inline std::string gpa_table_to_csv(const GpaTable& t) {
  bool any_std = false;
  for (const auto& row : t.cells)
    for (const auto& c : row) any_std = any_std || c.stddev.has_value();
  std::string out;
  if (t.dims == 1) {
    out = "bin_low,bin_high";
  } else {
    for (int j = 0; j < t.dims; ++j)
      out += (j ? "," : "") + std::string("bin_low_") + std::to_string(j) + ",bin_high_" + std::to_string(j);
  }
  out += any_std ? ",arm,mean,count,std\n" : ",arm,mean,count\n";
  for (std::size_t b = 0; b < t.bins.size(); ++b)
    for (int z = 0; z < t.arms; ++z) {
      const auto& c = t.cell(b, z);
      for (int j = 0; j < t.dims; ++j)
        out += (j ? "," : "") + detail::fmt(t.bins[b].low[static_cast<std::size_t>(j)]) + "," +
               detail::fmt(t.bins[b].high[static_cast<std::size_t>(j)]);
      out += "," + std::to_string(z + 1) + "," + (c.available() ? detail::fmt(c.mean) : std::string("NA")) + "," +
             std::to_string(c.count);
      if (any_std) out += "," + (c.stddev ? detail::fmt(*c.stddev) : std::string());
      out += "\n";
    }
  return out;
}

enum class ContextDist { Counts, Uniform, Point };
enum class UnavailablePolicy { Error, Marginal };

struct EnvConfig {
  double sigma = 0.3;
  ContextDist context_dist = ContextDist::Counts;
  std::vector<double> point;  // raw context for ContextDist::Point
  UnavailablePolicy unavailable_policy = UnavailablePolicy::Error;
};

/// {"sigma": 0.3, "context_dist": "counts" | "uniform" | {"point": [...]},
///  "unavailable_policy": "error" | "marginal"}
inline EnvConfig env_config_from_json(const json& doc) {
  try {
    EnvConfig cfg;
    cfg.sigma = doc.value("sigma", 0.3);
    if (!(cfg.sigma >= 0.0)) throw Error(Errc::RangeError, "sigma must be >= 0");
    if (doc.contains("context_dist")) {
      const auto& d = doc.at("context_dist");
      if (d.is_object()) {
        cfg.context_dist = ContextDist::Point;
        cfg.point = d.at("point").get<std::vector<double>>();
      } else if (d.get<std::string>() == "counts") {
        cfg.context_dist = ContextDist::Counts;
      } else if (d.get<std::string>() == "uniform") {
        cfg.context_dist = ContextDist::Uniform;
      } else {
        throw Error(Errc::ParseError, "context_dist must be \"counts\", \"uniform\" or {\"point\": [...]}");
      }
    }
    const auto policy = doc.value("unavailable_policy", std::string("error"));
    if (policy == "error") cfg.unavailable_policy = UnavailablePolicy::Error;
    else if (policy == "marginal") cfg.unavailable_policy = UnavailablePolicy::Marginal;
    else throw Error(Errc::ParseError, "unavailable_policy must be \"error\" or \"marginal\"");
    return cfg;
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("environment config: ") + e.what());
  }
}

inline json env_config_to_json(const EnvConfig& cfg) {
  json doc;
  doc["sigma"] = cfg.sigma;
  switch (cfg.context_dist) {
    case ContextDist::Counts: doc["context_dist"] = "counts"; break;
    case ContextDist::Uniform: doc["context_dist"] = "uniform"; break;
    case ContextDist::Point: doc["context_dist"] = {{"point", cfg.point}}; break;
  }
  doc["unavailable_policy"] = cfg.unavailable_policy == UnavailablePolicy::Error ? "error" : "marginal";
  return doc;
}

/// Draws from N(mean, sigma^2) restricted to [mean - d, mean + d] with
/// d = min(mean, 4 - mean). The window is symmetric, so the draw keeps the
/// cell mean as its expectation and never leaves [0,4].
inline double truncated_gpa(double mean, double sigma, Rng& rng) {
  const double d = std::min(mean - kGpaMin, kGpaMax - mean);
  if (sigma <= 0.0 || d <= 0.0) return mean;
  for (int tries = 0; tries < 100'000; ++tries) {
    const double x = mean + sigma * standard_normal(rng);
    if (std::abs(x - mean) <= d) return x;
  }
  return uniform(rng, mean - d, mean + d);
}

/// Synthetic student population built from a binned GPA table.
class EnvModel {
 public:
  EnvModel(GpaTable table, EnvConfig cfg) : table_(std::move(table)), cfg_(std::move(cfg)) {
    if (cfg_.context_dist == ContextDist::Point) {
      if (cfg_.point.size() != static_cast<std::size_t>(table_.dims))
        throw Error(Errc::RangeError, "point context has wrong dimension");
      if (!table_.bin_of(cfg_.point)) throw Error(Errc::RangeError, "point context lies outside the table");
    }
    std::uint64_t total = 0;
    for (std::size_t b = 0; b < table_.bins.size(); ++b) {
      total += table_.bin_count(b);
      cumulative_.push_back(total);
    }
    if (cfg_.context_dist == ContextDist::Counts && total == 0)
      throw Error(Errc::RangeError, "count-weighted contexts need a nonzero count");
  }

  int arms() const noexcept { return table_.arms; }
  int dims() const noexcept { return table_.dims; }
  const GpaTable& table() const noexcept { return table_; }
  const EnvConfig& config() const noexcept { return cfg_; }

  Context normalize(std::span<const double> raw) const {
    Context theta(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j) {
      const double lo = table_.range_low[j], hi = table_.range_high[j];
      theta[j] = std::clamp((raw[j] - lo) / (hi - lo), 0.0, 1.0);
    }
    return theta;
  }

  std::vector<double> denormalize(std::span<const double> theta) const {
    std::vector<double> raw(theta.size());
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double lo = table_.range_low[j], hi = table_.range_high[j];
      raw[j] = lo + theta[j] * (hi - lo);
    }
    return raw;
  }

  std::size_t bin_of_context(std::span<const double> theta) const {
    if (theta.size() != static_cast<std::size_t>(dims())) throw Error(Errc::ContextOutOfRange, "context has wrong dimension");
    for (double x : theta)
      if (!(x >= 0.0 && x <= 1.0)) throw Error(Errc::ContextOutOfRange, "context coordinate outside [0,1]");
    const auto raw = denormalize(theta);
    if (auto b = table_.bin_of(raw)) return *b;
    throw Error(Errc::ContextOutOfRange, "context falls in no bin");
  }

  /// Expected GPA of an arm in a bin under the configured unavailable-cell
  /// policy.
  double cell_mean(std::size_t bin, int arm) const {
    if (arm < 0 || arm >= arms()) throw Error(Errc::RangeError, "arm id out of range");
    const GpaCell& c = table_.cell(bin, arm);
    if (c.available()) return c.mean;
    if (cfg_.unavailable_policy == UnavailablePolicy::Error)
      throw Error(Errc::UnavailableCell, "arm " + std::to_string(arm + 1) + " has no data in bin " + std::to_string(bin));
    return marginal_mean(bin);
  }

  /// Count-weighted mean of the bin's available cells.
  double marginal_mean(std::size_t bin) const {
    double sum = 0.0;
    std::uint64_t n = 0;
    for (const auto& c : table_.cells.at(bin))
      if (c.available()) sum += c.mean * static_cast<double>(c.count), n += c.count;
    if (n == 0) throw Error(Errc::UnavailableCell, "bin " + std::to_string(bin) + " has no data at all");
    return sum / static_cast<double>(n);
  }

  double mean(std::span<const double> theta, int arm) const { return cell_mean(bin_of_context(theta), arm); }

  std::pair<std::vector<double>, Context> sample_student(Rng& rng) const {
    std::vector<double> raw(static_cast<std::size_t>(dims()));
    switch (cfg_.context_dist) {
      case ContextDist::Point:
        raw = cfg_.point;
        break;
      case ContextDist::Uniform:
        for (std::size_t j = 0; j < raw.size(); ++j) raw[j] = uniform(rng, table_.range_low[j], table_.range_high[j]);
        break;
      case ContextDist::Counts: {
        const auto u = uniform_index(rng, cumulative_.back());
        const auto b = static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) -
                                                cumulative_.begin());
        const auto& bin = table_.bins[b];
        for (std::size_t j = 0; j < raw.size(); ++j) {
          raw[j] = uniform(rng, bin.low[j], bin.high[j]);
          // The open low edge is hit only with probability zero, but keep it out.
          if (raw[j] == bin.low[j] && bin.low[j] != table_.range_low[j]) raw[j] = bin.high[j];
        }
        break;
      }
    }
    Context theta = normalize(raw);
    return {std::move(raw), std::move(theta)};
  }

  Context sample_context(Rng& rng) const { return sample_student(rng).second; }

  double sample_gpa(std::span<const double> theta, int arm, Rng& rng) const {
    const std::size_t b = bin_of_context(theta);
    const double mu = cell_mean(b, arm);
    const GpaCell& c = table_.cell(b, arm);
    const double sigma = c.available() && c.stddev ? *c.stddev : cfg_.sigma;
    return truncated_gpa(mu, sigma, rng);
  }

  /// Best available arm of the bin (ties to the lowest id) and its mean.
  std::pair<int, double> best_in_bin(std::size_t bin) const {
    int best = -1;
    double value = 0.0;
    for (int z = 0; z < arms(); ++z) {
      const GpaCell& c = table_.cell(bin, z);
      if (c.available() && (best < 0 || c.mean > value)) best = z, value = c.mean;
    }
    if (best < 0) throw Error(Errc::UnavailableCell, "bin " + std::to_string(bin) + " has no available arm");
    return {best, value};
  }

  std::pair<int, double> oracle(std::span<const double> theta) const { return best_in_bin(bin_of_context(theta)); }

 private:
  GpaTable table_;
  EnvConfig cfg_;
  std::vector<std::uint64_t> cumulative_;
};

/// Per-bin argmax over available cells, usable as context -> (arm, mean).
struct OracleMeans {
  const EnvModel* env;
  std::vector<std::pair<int, double>> per_bin;

  std::pair<int, double> operator()(std::span<const double> theta) const { return per_bin.at(env->bin_of_context(theta)); }
  double best_mean(std::span<const double> theta) const { return (*this)(theta).second; }
};

inline OracleMeans oracle_means(const EnvModel& env) {
  OracleMeans o{&env, {}};
  for (std::size_t b = 0; b < env.table().bins.size(); ++b) o.per_bin.push_back(env.best_in_bin(b));
  return o;
}

/// Expected GPA of the best arm when contexts follow the bin counts.
inline double count_weighted_oracle_mean(const EnvModel& env) {
  double sum = 0.0;
  std::uint64_t n = 0;
  for (std::size_t b = 0; b < env.table().bins.size(); ++b) {
    sum += env.best_in_bin(b).second * static_cast<double>(env.table().bin_count(b));
    n += env.table().bin_count(b);
  }
  return sum / static_cast<double>(n);
}

inline EnvModel load_env(const std::filesystem::path& table_path, const std::optional<std::filesystem::path>& config_path) {
  EnvConfig cfg = config_path ? env_config_from_json(read_json_file(*config_path)) : EnvConfig{};
  return EnvModel(load_gpa_table(table_path), std::move(cfg));
}

}  // namespace coursedp
