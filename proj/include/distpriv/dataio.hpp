// Copyright 2026 The distpriv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// UCI Adult ingestion, deterministic splits, stratified subset sampling and
// the five-statistic release query.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "distpriv/error.hpp"
#include "distpriv/mechanisms.hpp"
#include "distpriv/model.hpp"
#include "distpriv/random.hpp"

namespace distpriv {

struct Record {
  int age = 0;
  int education_num = 0;
  bool never_married = false;
  bool female = false;
  int hours_per_week = 0;
  bool income_gt_50k = false;
  bool private_workclass = false;

  bool operator==(const Record&) const = default;
};

using Table = std::vector<Record>;

inline constexpr int kMinAge = 17, kMaxAge = 90;
inline constexpr int kMinEducation = 1, kMaxEducation = 16;
inline constexpr int kMinHours = 1, kMaxHours = 99;
inline constexpr std::size_t kCanonicalAdultRows = 45222;

inline bool in_range(const Record& r) {
  return r.age >= kMinAge && r.age <= kMaxAge &&
         r.education_num >= kMinEducation && r.education_num <= kMaxEducation &&
         r.hours_per_week >= kMinHours && r.hours_per_week <= kMaxHours;
}

enum class Property { kIncome, kWorkclass };

inline const char* to_string(Property p) {
  return p == Property::kIncome ? "income" : "workclass";
}

inline Property property_from_string(std::string_view name) {
  if (name == "income") return Property::kIncome;
  if (name == "workclass") return Property::kWorkclass;
  detail::fail(ErrorCode::kConfig,
               "unknown property '" + std::string(name) +
                   "' (expected income or workclass)");
}

inline bool has_property(const Record& r, Property p) {
  return p == Property::kIncome ? r.income_gt_50k : r.private_workclass;
}

struct PropertySpec {
  Property which = Property::kIncome;
  double p = 0.5;

  PropertySpec() = default;
  PropertySpec(Property w, double proportion) : which(w), p(proportion) {
    detail::require(p >= 0.0 && p <= 1.0, ErrorCode::kInput,
                    "property proportion must lie in [0,1]");
  }
};

struct LoadReport {
  Table records;
  std::size_t dropped_missing = 0;
  std::size_t rejected_out_of_range = 0;
};

struct LoadOptions {
  // Require exactly 45222 clean rows (the canonical train + test files).
  bool require_canonical_count = false;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' ||
                        s.back() == '\n')) {
    s.remove_suffix(1);
  }
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline int parse_int(std::string_view field, std::size_t line, const char* what) {
  int value = 0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || field.empty()) {
    throw ParseError(std::string("cannot parse ") + what + " from '" +
                         std::string(field) + "'",
                     line);
  }
  return value;
}

inline bool parse_bool(std::string_view field, std::size_t line) {
  if (field == "1" || field == "true" || field == "True") return true;
  if (field == "0" || field == "false" || field == "False") return false;
  throw ParseError("cannot parse boolean from '" + std::string(field) + "'", line);
}

inline void load_adult_file(const std::string& path, LoadReport& report) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kInput, "cannot open dataset file " + path);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::string_view text = trim(raw);
    // The test file starts with a "|1x3 Cross validator" banner.
    if (text.empty() || text.front() == '|') continue;
    const auto f = split_fields(text);
    if (f.size() != 15) {
      throw Error(ErrorCode::kFormat,
                  path + ": expected 15 columns, found " +
                      std::to_string(f.size()) + " (line " +
                      std::to_string(line) + ")");
    }
    if (std::any_of(f.begin(), f.end(),
                    [](std::string_view v) { return v == "?"; })) {
      ++report.dropped_missing;
      continue;
    }
    for (int col : {2, 10, 11}) parse_int(f[static_cast<std::size_t>(col)], line, "count");
    Record r;
    r.age = parse_int(f[0], line, "age");
    r.private_workclass = f[1] == "Private";
    r.education_num = parse_int(f[4], line, "education-num");
    r.never_married = f[5] == "Never-married";
    r.female = f[9] == "Female";
    r.hours_per_week = parse_int(f[12], line, "hours-per-week");
    const std::string_view label = f[14];
    if (label == ">50K" || label == ">50K.") {
      r.income_gt_50k = true;
    } else if (label == "<=50K" || label == "<=50K.") {
      r.income_gt_50k = false;
    } else {
      throw ParseError("unknown income label '" + std::string(label) + "'", line);
    }
    if (!in_range(r)) {
      ++report.rejected_out_of_range;
      continue;
    }
    report.records.push_back(r);
  }
}

}  // namespace detail

// Loads and concatenates UCI Adult files (adult.data, adult.test). Rows with
// a "?" field are dropped; rows outside the attribute bounds are rejected
// and counted.
inline LoadReport load_adult(std::span<const std::string> paths,
                             const LoadOptions& options = {}) {
  detail::require(!paths.empty(), ErrorCode::kInput, "no dataset files given");
  LoadReport report;
  for (const auto& path : paths) detail::load_adult_file(path, report);
  if (options.require_canonical_count &&
      report.records.size() != kCanonicalAdultRows) {
    detail::fail(ErrorCode::kFormat,
                 "expected " + std::to_string(kCanonicalAdultRows) +
                     " clean Adult records, found " +
                     std::to_string(report.records.size()) +
                     " (pass the variant-dataset flag to bypass)");
  }
  return report;
}

// Generic loader for synthetic tables: a header naming the Record fields
// (any order) followed by integer / 0-1 boolean columns.
inline Table load_records_csv(const std::string& path) {
  std::ifstream in(path);
  detail::require(in.good(), ErrorCode::kInput, "cannot open " + path);
  std::string raw;
  detail::require(static_cast<bool>(std::getline(in, raw)), ErrorCode::kFormat,
                  path + ": missing header");
  const auto header = detail::split_fields(detail::trim(raw));
  const std::array<std::string_view, 7> names = {
      "age", "education_num", "never_married", "female",
      "hours_per_week", "income_gt_50k", "private_workclass"};
  std::array<std::size_t, 7> column{};
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto it = std::find(header.begin(), header.end(), names[k]);
    detail::require(it != header.end(), ErrorCode::kFormat,
                    path + ": header lacks column " + std::string(names[k]));
    column[k] = static_cast<std::size_t>(it - header.begin());
  }
  Table table;
  std::size_t line = 1;
  while (std::getline(in, raw)) {
    ++line;
    const auto text = detail::trim(raw);
    if (text.empty()) continue;
    const auto f = detail::split_fields(text);
    detail::require(f.size() == header.size(), ErrorCode::kFormat,
                    path + ": wrong column count on line " + std::to_string(line));
    Record r;
    r.age = detail::parse_int(f[column[0]], line, "age");
    r.education_num = detail::parse_int(f[column[1]], line, "education_num");
    r.never_married = detail::parse_bool(f[column[2]], line);
    r.female = detail::parse_bool(f[column[3]], line);
    r.hours_per_week = detail::parse_int(f[column[4]], line, "hours_per_week");
    r.income_gt_50k = detail::parse_bool(f[column[5]], line);
    r.private_workclass = detail::parse_bool(f[column[6]], line);
    table.push_back(r);
  }
  return table;
}

struct SplitSizes {
  std::size_t aux = 10000;
  std::size_t test = 10000;
};

struct SplitTables {
  Table aux;
  Table test;
  Table modeling;
};

// Seeded uniform permutation; the first block is aux, the next test, the
// remainder modeling.
inline SplitTables split_dataset(const Table& table, std::uint64_t seed,
                                 const SplitSizes& sizes = {}) {
  detail::require(table.size() >= sizes.aux + sizes.test, ErrorCode::kInput,
                  "table has too few rows to split");
  std::vector<std::size_t> order(table.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[uniform_index(rng, i)]);
  }
  SplitTables out;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Record& r = table[order[k]];
    if (k < sizes.aux) {
      out.aux.push_back(r);
    } else if (k < sizes.aux + sizes.test) {
      out.test.push_back(r);
    } else {
      out.modeling.push_back(r);
    }
  }
  return out;
}

// Number of positives in a subset of n at proportion p (ties to even).
inline std::size_t positives_for(double p, std::size_t n) {
  return static_cast<std::size_t>(std::nearbyint(static_cast<double>(n) * p));
}

namespace detail {

// Floyd's algorithm: k distinct draws from [0, population).
inline std::vector<std::size_t> choose_distinct(std::size_t population,
                                                std::size_t k, Rng& rng) {
  std::vector<std::size_t> chosen;
  chosen.reserve(k);
  for (std::size_t j = population - k; j < population; ++j) {
    const std::size_t t = uniform_index(rng, j + 1);
    if (std::find(chosen.begin(), chosen.end(), t) == chosen.end()) {
      chosen.push_back(t);
    } else {
      chosen.push_back(j);
    }
  }
  return chosen;
}

}  // namespace detail

// Pre-indexed positive / negative records of one table for repeated
// stratified sampling.
class StratifiedSampler {
 public:
  StratifiedSampler(const Table& table, Property which)
      : table_(&table), which_(which) {
    for (std::size_t i = 0; i < table.size(); ++i) {
      (has_property(table[i], which) ? positive_ : negative_).push_back(i);
    }
  }

  // Row indices of a subset with exactly positives_for(p, n) positives.
  std::vector<std::size_t> sample_indices(double p, std::size_t n, Rng& rng) const {
    const PropertySpec spec(which_, p);
    const std::size_t pos = positives_for(spec.p, n);
    const std::size_t neg = n - pos;
    if (pos > positive_.size()) {
      detail::fail(ErrorCode::kSampling,
                   std::string("not enough records with ") + to_string(which_) +
                       " property: need " + std::to_string(pos) + ", have " +
                       std::to_string(positive_.size()));
    }
    if (neg > negative_.size()) {
      detail::fail(ErrorCode::kSampling,
                   std::string("not enough records without ") + to_string(which_) +
                       " property: need " + std::to_string(neg) + ", have " +
                       std::to_string(negative_.size()));
    }
    std::vector<std::size_t> rows;
    rows.reserve(n);
    for (std::size_t k : detail::choose_distinct(positive_.size(), pos, rng)) {
      rows.push_back(positive_[k]);
    }
    for (std::size_t k : detail::choose_distinct(negative_.size(), neg, rng)) {
      rows.push_back(negative_[k]);
    }
    return rows;
  }

  std::vector<Record> sample(double p, std::size_t n, Rng& rng) const {
    std::vector<Record> out;
    out.reserve(n);
    for (std::size_t i : sample_indices(p, n, rng)) out.push_back((*table_)[i]);
    return out;
  }

  Property which() const { return which_; }

 private:
  const Table* table_;
  Property which_;
  std::vector<std::size_t> positive_;
  std::vector<std::size_t> negative_;
};

inline std::vector<Record> sample_subset_with_property(const Table& table,
                                                       const PropertySpec& prop,
                                                       std::size_t n, Rng& rng) {
  return StratifiedSampler(table, prop.which).sample(prop.p, n, rng);
}

inline constexpr Eigen::Index kQueryDimension = 5;

// [avg_age, avg_education_num, count_never_married, count_female,
//  avg_hours_per_week]
inline Vector compute_query(std::span<const Record> subset) {
  detail::require(!subset.empty(), ErrorCode::kInput, "empty subset");
  std::int64_t age = 0, edu = 0, never = 0, female = 0, hours = 0;
  for (const Record& r : subset) {
    age += r.age;
    edu += r.education_num;
    never += r.never_married ? 1 : 0;
    female += r.female ? 1 : 0;
    hours += r.hours_per_week;
  }
  const auto n = static_cast<double>(subset.size());
  Vector q(kQueryDimension);
  q << static_cast<double>(age) / n, static_cast<double>(edu) / n,
      static_cast<double>(never), static_cast<double>(female),
      static_cast<double>(hours) / n;
  return q;
}

// Attribute bounds of the query components for one-record sensitivity.
inline std::vector<ComponentBound> adult_query_bounds() {
  return {{kMinAge, kMaxAge, Aggregate::kAverage},
          {kMinEducation, kMaxEducation, Aggregate::kAverage},
          {0, 1, Aggregate::kCount},
          {0, 1, Aggregate::kCount},
          {kMinHours, kMaxHours, Aggregate::kAverage}};
}

inline json to_json(const Record& r) {
  return json{{"age", r.age},
              {"education_num", r.education_num},
              {"never_married", r.never_married},
              {"female", r.female},
              {"hours_per_week", r.hours_per_week},
              {"income_gt_50k", r.income_gt_50k},
              {"private_workclass", r.private_workclass}};
}

inline json table_to_json(std::span<const Record> table) {
  json out = json::array();
  for (const auto& r : table) out.push_back(to_json(r));
  return out;
}

}  // namespace distpriv
