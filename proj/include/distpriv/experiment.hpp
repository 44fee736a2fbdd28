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

// Config-driven experiment runner: model catalogs, utility and attack
// sweeps, and the transport report.

#pragma once

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/version.hpp>
#include <Eigen/Core>

#include "distpriv/attack.hpp"
#include "distpriv/dataio.hpp"
#include "distpriv/error.hpp"
#include "distpriv/mechanisms.hpp"
#include "distpriv/model.hpp"
#include "distpriv/random.hpp"
#include "distpriv/transport.hpp"

namespace distpriv {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kCsvSchemaVersion = 1;
inline constexpr const char* kUtilityHeader =
    "mechanism,epsilon,delta,property,delta_p,repetition,l2_error";
inline constexpr const char* kAttackHeader =
    "mechanism,epsilon,delta,property,delta_p,repetition,accuracy";

namespace fs = std::filesystem;

// Shortest text that parses back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline std::string hex64(std::uint64_t x) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << x;
  return os.str();
}

inline const std::vector<std::string>& known_mechanisms() {
  static const std::vector<std::string> names{
      "none", "wass", "awass", "expm-l", "expm-g", "dir-l", "dir-g",
      "eig",  "dau",  "gdp-l", "gdp-g",  "dp-l",   "dp-g"};
  return names;
}

struct AttackSettings {
  ShadowConfig shadow;
  // Empty lists fall back to the top-level sweep.
  std::vector<double> epsilon;
  std::vector<double> delta;
  std::vector<std::string> mechanisms;
};

struct ExperimentConfig {
  std::vector<std::string> dataset;
  bool require_canonical_count = true;
  std::uint64_t seed = 0;
  Property property = Property::kIncome;
  double p_center = 0.5;
  std::vector<double> delta_p{0.1};
  std::vector<double> epsilon{0.2, 1.0, 5.0};
  std::vector<double> delta{0.001};
  std::vector<std::string> mechanisms{"expm-g", "eig", "dau", "gdp-g"};
  std::size_t n = 100;
  std::size_t modeling_samples = 1000;
  std::size_t repetitions = 50;
  AttackSettings attack;
  double eigenbasis_tolerance = kEigenbasisTolerance;
  unsigned threads = 1;
  std::string output = "out";

  const std::vector<double>& attack_epsilon() const {
    return attack.epsilon.empty() ? epsilon : attack.epsilon;
  }
  const std::vector<double>& attack_delta() const {
    return attack.delta.empty() ? delta : attack.delta;
  }
  const std::vector<std::string>& attack_mechanisms() const {
    return attack.mechanisms.empty() ? mechanisms : attack.mechanisms;
  }

  void validate() const {
    auto need = [](bool ok, const std::string& msg) {
      detail::require(ok, ErrorCode::kConfig, msg);
    };
    need(!delta_p.empty(), "delta_p list is empty");
    need(!epsilon.empty(), "epsilon list is empty");
    need(!delta.empty(), "delta list is empty");
    need(!mechanisms.empty(), "mechanisms list is empty");
    need(p_center > 0.0 && p_center < 1.0, "p_center must lie in (0,1)");
    for (double dp : delta_p) {
      need(dp > 0.0 && p_center - dp / 2 >= 0.0 && p_center + dp / 2 <= 1.0,
           "delta_p " + format_double(dp) + " leaves [0,1] around p_center");
    }
    for (double e : epsilon) need(e > 0.0 && std::isfinite(e), "epsilon must be positive");
    for (double e : attack.epsilon) {
      need(e > 0.0 && std::isfinite(e), "attack epsilon must be positive");
    }
    for (double d : delta) need(d >= 0.0 && d < 1.0, "delta must lie in [0,1)");
    for (double d : attack.delta) need(d >= 0.0 && d < 1.0, "attack delta must lie in [0,1)");
    auto check_names = [&](const std::vector<std::string>& names) {
      for (const auto& name : names) {
        need(std::find(known_mechanisms().begin(), known_mechanisms().end(),
                       name) != known_mechanisms().end(),
             "unknown mechanism '" + name + "'");
      }
    };
    check_names(mechanisms);
    check_names(attack.mechanisms);
    need(n > 0, "n must be positive");
    need(modeling_samples >= 2, "modeling_samples must be at least 2");
    need(repetitions > 0, "repetitions must be positive");
    need(eigenbasis_tolerance >= 0.0, "eigenbasis_tolerance must be nonnegative");
    need(!output.empty(), "output directory is empty");
    attack.shadow.validate();
  }
};

// ---------------------------------------------------------------------------
// Config JSON

namespace detail {

template <class T>
std::vector<T> list_field(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array()) return {v.get<T>()};
  return v.get<std::vector<T>>();
}

inline void reject_unknown(const json& j, const std::set<std::string>& allowed,
                           const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    require(allowed.count(key) > 0, ErrorCode::kConfig,
            "unknown key '" + key + "' in " + where);
  }
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  try {
    detail::require(j.is_object(), ErrorCode::kConfig, "config must be a JSON object");
    detail::reject_unknown(
        j,
        {"dataset", "require_canonical_count", "seed", "property", "p_center",
         "delta_p", "epsilon", "delta", "mechanisms", "n", "modeling_samples",
         "repetitions", "attack", "eigenbasis_tolerance", "threads", "output"},
        "config");
    if (j.contains("dataset")) cfg.dataset = detail::list_field<std::string>(j, "dataset");
    cfg.require_canonical_count =
        j.value("require_canonical_count", cfg.require_canonical_count);
    cfg.seed = j.value("seed", cfg.seed);
    if (j.contains("property")) {
      cfg.property = property_from_string(j.at("property").get<std::string>());
    }
    cfg.p_center = j.value("p_center", cfg.p_center);
    if (j.contains("delta_p")) cfg.delta_p = detail::list_field<double>(j, "delta_p");
    detail::require(!cfg.delta_p.empty(), ErrorCode::kConfig, "delta_p list is empty");
    if (j.contains("epsilon")) cfg.epsilon = detail::list_field<double>(j, "epsilon");
    if (j.contains("delta")) cfg.delta = detail::list_field<double>(j, "delta");
    if (j.contains("mechanisms")) {
      cfg.mechanisms = detail::list_field<std::string>(j, "mechanisms");
    }
    cfg.n = j.value("n", cfg.n);
    cfg.modeling_samples = j.value("modeling_samples", cfg.modeling_samples);
    cfg.repetitions = j.value("repetitions", cfg.repetitions);
    cfg.eigenbasis_tolerance = j.value("eigenbasis_tolerance", cfg.eigenbasis_tolerance);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.output = j.value("output", cfg.output);

    auto& s = cfg.attack.shadow;
    s.n = cfg.n;
    s.repetitions = cfg.repetitions;
    s.p_low = cfg.p_center - cfg.delta_p.front() / 2;
    s.p_high = cfg.p_center + cfg.delta_p.front() / 2;
    if (j.contains("attack")) {
      const auto& a = j.at("attack");
      detail::reject_unknown(a,
                             {"n", "shadow_count", "test_count", "repetitions",
                              "p_low", "p_high", "noise_shadow", "standardize",
                              "epsilon", "delta", "mechanisms"},
                             "attack block");
      s.n = a.value("n", s.n);
      s.shadow_count = a.value("shadow_count", s.shadow_count);
      s.test_count = a.value("test_count", s.test_count);
      s.repetitions = a.value("repetitions", s.repetitions);
      s.p_low = a.value("p_low", s.p_low);
      s.p_high = a.value("p_high", s.p_high);
      s.noise_shadow = a.value("noise_shadow", s.noise_shadow);
      s.standardize = a.value("standardize", s.standardize);
      if (a.contains("epsilon")) cfg.attack.epsilon = detail::list_field<double>(a, "epsilon");
      if (a.contains("delta")) cfg.attack.delta = detail::list_field<double>(a, "delta");
      if (a.contains("mechanisms")) {
        cfg.attack.mechanisms = detail::list_field<std::string>(a, "mechanisms");
      }
    }
    s.p_low = canonical_proportion(s.p_low);
    s.p_high = canonical_proportion(s.p_high);
    s.seed = cfg.seed;
  } catch (const json::exception& e) {
    detail::fail(ErrorCode::kConfig, std::string("bad config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

inline json to_json(const ExperimentConfig& cfg) {
  const auto& s = cfg.attack.shadow;
  return json{
      {"dataset", cfg.dataset},
      {"require_canonical_count", cfg.require_canonical_count},
      {"seed", cfg.seed},
      {"property", to_string(cfg.property)},
      {"p_center", cfg.p_center},
      {"delta_p", cfg.delta_p},
      {"epsilon", cfg.epsilon},
      {"delta", cfg.delta},
      {"mechanisms", cfg.mechanisms},
      {"n", cfg.n},
      {"modeling_samples", cfg.modeling_samples},
      {"repetitions", cfg.repetitions},
      {"attack",
       {{"n", s.n},
        {"shadow_count", s.shadow_count},
        {"test_count", s.test_count},
        {"repetitions", s.repetitions},
        {"p_low", s.p_low},
        {"p_high", s.p_high},
        {"noise_shadow", s.noise_shadow},
        {"standardize", s.standardize},
        {"epsilon", cfg.attack.epsilon},
        {"delta", cfg.attack.delta},
        {"mechanisms", cfg.attack.mechanisms}}},
      {"eigenbasis_tolerance", cfg.eigenbasis_tolerance},
      {"threads", cfg.threads},
      {"output", cfg.output}};
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  detail::require(static_cast<bool>(in), ErrorCode::kInput, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    detail::fail(ErrorCode::kParse, path + ": " + e.what());
  }
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    detail::require(static_cast<bool>(out), ErrorCode::kInput,
                    "cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

// Relative dataset paths resolve against the config file's directory.
inline ExperimentConfig load_config_file(const std::string& path) {
  auto cfg = config_from_json(read_json_file(path));
  const fs::path base = fs::path(path).parent_path();
  for (auto& d : cfg.dataset) {
    if (fs::path(d).is_relative()) d = (base / d).lexically_normal().string();
  }
  return cfg;
}

// Hash of everything that changes results, so output location and thread
// count are left out.
inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  j.erase("output");
  j.erase("threads");
  return detail::fnv1a(j.dump());
}

// Per-cell hash: the sweep lists are excluded because the cell key already
// names its parameters.
inline std::uint64_t cell_hash(const ExperimentConfig& cfg) {
  json j = to_json(cfg);
  for (const char* k : {"output", "threads", "mechanisms", "epsilon", "delta", "delta_p"}) {
    j.erase(k);
  }
  for (const char* k : {"epsilon", "delta", "mechanisms"}) j["attack"].erase(k);
  return detail::fnv1a(j.dump());
}

inline std::uint64_t model_hash(const ExperimentConfig& cfg) {
  json j{{"dataset", cfg.dataset},
         {"require_canonical_count", cfg.require_canonical_count},
         {"seed", cfg.seed},
         {"property", to_string(cfg.property)},
         {"p_center", cfg.p_center},
         {"delta_p", cfg.delta_p},
         {"n", cfg.n},
         {"modeling_samples", cfg.modeling_samples},
         {"p_low", cfg.attack.shadow.p_low},
         {"p_high", cfg.attack.shadow.p_high}};
  return detail::fnv1a(j.dump());
}

// ---------------------------------------------------------------------------
// Data

struct ExperimentData {
  std::size_t loaded_rows = 0;
  std::size_t dropped_missing = 0;
  std::size_t rejected_out_of_range = 0;
  SplitTables split;
};

inline std::vector<std::string> resolve_dataset_files(const ExperimentConfig& cfg) {
  std::vector<std::string> entries = cfg.dataset;
#ifdef DISTPRIV_ADULT_DIR
  if (entries.empty()) entries.push_back(DISTPRIV_ADULT_DIR);
#endif
  detail::require(!entries.empty(), ErrorCode::kConfig, "no dataset configured");
  std::vector<std::string> files;
  for (const auto& e : entries) {
    if (fs::is_directory(e)) {
      files.push_back((fs::path(e) / "adult.data").string());
      files.push_back((fs::path(e) / "adult.test").string());
    } else {
      files.push_back(e);
    }
  }
  return files;
}

inline std::uint64_t split_seed(std::uint64_t root) { return derive_seed(root, "split", {}); }

inline ExperimentData prepare_data(const ExperimentConfig& cfg) {
  const auto files = resolve_dataset_files(cfg);
  LoadOptions options;
  options.require_canonical_count = cfg.require_canonical_count;
  auto report = load_adult(files, options);
  ExperimentData data;
  data.loaded_rows = report.records.size();
  data.dropped_missing = report.dropped_missing;
  data.rejected_out_of_range = report.rejected_out_of_range;
  data.split = split_dataset(report.records, split_seed(cfg.seed));
  return data;
}

// ---------------------------------------------------------------------------
// Model catalog

inline std::vector<double> required_proportions(const ExperimentConfig& cfg) {
  std::set<double> ps;
  for (double dp : cfg.delta_p) {
    ps.insert(canonical_proportion(cfg.p_center - dp / 2));
    ps.insert(canonical_proportion(cfg.p_center + dp / 2));
  }
  ps.insert(cfg.attack.shadow.p_low);
  ps.insert(cfg.attack.shadow.p_high);
  return {ps.begin(), ps.end()};
}

inline GaussianModel estimate_query_model(const StratifiedSampler& sampler, double p,
                                          std::size_t n, std::size_t samples,
                                          Rng& rng) {
  std::vector<Vector> queries;
  queries.reserve(samples);
  for (std::size_t s = 0; s < samples; ++s) {
    queries.push_back(compute_query(sampler.sample(p, n, rng)));
  }
  return estimate_gaussian(queries);
}

inline std::vector<CatalogEntry> build_catalog(const ExperimentConfig& cfg,
                                               const Table& modeling) {
  const StratifiedSampler sampler(modeling, cfg.property);
  std::vector<CatalogEntry> catalog;
  for (double p : required_proportions(cfg)) {
    Rng rng(derive_seed(cfg.seed, "model", {std::bit_cast<std::uint64_t>(p)}));
    try {
      catalog.push_back({SecretLabel(to_string(cfg.property), p),
                         estimate_query_model(sampler, p, cfg.n,
                                              cfg.modeling_samples, rng)});
    } catch (const Error& e) {
      throw Error(e.code(), e.message() + " (at p = " + format_double(p) + ")");
    }
  }
  return catalog;
}

// Family over the two models at lo and hi, protected in both orders.
inline PairFamily family_for(const std::vector<CatalogEntry>& catalog,
                             const std::string& property, double lo, double hi) {
  std::vector<CatalogEntry> sub;
  for (double p : {lo, hi}) {
    const SecretLabel label(property, p);
    const auto it = std::find_if(catalog.begin(), catalog.end(),
                                 [&](const CatalogEntry& e) { return e.label == label; });
    detail::require(it != catalog.end(), ErrorCode::kConfig,
                    "catalog has no model for " + to_string(label));
    sub.push_back(*it);
  }
  return PairFamily(std::move(sub), {{0, 1}, {1, 0}});
}

inline json catalog_document(const ExperimentConfig& cfg,
                             const std::vector<CatalogEntry>& catalog) {
  json pairs = json::array();
  const auto prop = to_string(cfg.property);
  auto index = [&](double p) {
    const SecretLabel label(prop, p);
    for (std::size_t i = 0; i < catalog.size(); ++i) {
      if (catalog[i].label == label) return i;
    }
    detail::fail(ErrorCode::kConfig, "missing model " + to_string(label));
  };
  for (double dp : cfg.delta_p) {
    const auto lo = index(cfg.p_center - dp / 2);
    const auto hi = index(cfg.p_center + dp / 2);
    pairs.push_back(json{{"delta_p", dp}, {"pairs", {{lo, hi}, {hi, lo}}}});
  }
  return json{{"schema_version", 1},
              {"model_hash", hex64(model_hash(cfg))},
              {"property", prop},
              {"models", catalog_to_json(catalog)},
              {"pairs", pairs}};
}

// Accepts a bare model array or a catalog document.
inline std::vector<CatalogEntry> load_catalog_file(const std::string& path) {
  const json j = read_json_file(path);
  try {
    return catalog_from_json(j.is_object() ? j.at("models") : j);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.message());
  } catch (const json::exception& e) {
    detail::fail(ErrorCode::kFormat, path + ": " + e.what());
  }
}

// "0:1,1:0" style index pairs.
inline std::vector<PairFamily::IndexPair> parse_pair_list(const std::string& text) {
  std::vector<PairFamily::IndexPair> pairs;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto colon = item.find(':');
    detail::require(colon != std::string::npos, ErrorCode::kConfig,
                    "pair '" + item + "' is not of the form i:j");
    std::size_t a = 0, b = 0;
    const auto lhs = detail::trim(std::string_view(item).substr(0, colon));
    const auto rhs = detail::trim(std::string_view(item).substr(colon + 1));
    const auto r1 = std::from_chars(lhs.data(), lhs.data() + lhs.size(), a);
    const auto r2 = std::from_chars(rhs.data(), rhs.data() + rhs.size(), b);
    detail::require(r1.ec == std::errc{} && r1.ptr == lhs.data() + lhs.size() &&
                        r2.ec == std::errc{} && r2.ptr == rhs.data() + rhs.size(),
                    ErrorCode::kConfig, "pair '" + item + "' is not of the form i:j");
    pairs.emplace_back(a, b);
  }
  detail::require(!pairs.empty(), ErrorCode::kConfig, "empty pair list");
  return pairs;
}

// ---------------------------------------------------------------------------
// Mechanism registry

struct PlanOptions {
  std::size_t n = 100;
  double eigenbasis_tolerance = kEigenbasisTolerance;
};

// Directional mechanisms use the direction fitted to the family's gaps.
inline NoisePlan build_plan(const std::string& name, const PairFamily& family,
                            const PrivacyParams& params, const PlanOptions& options = {}) {
  auto direction = [&] {
    const auto v = fit_common_direction(family);
    detail::require(v.has_value(), ErrorCode::kAssumption,
                    "all mean gaps vanish; no direction to fit");
    return *v;
  };
  auto group = [&](long k, NoiseKind kind, Norm norm) {
    const auto bounds = adult_query_bounds();
    detail::require(static_cast<Eigen::Index>(bounds.size()) == family.dimension(),
                    ErrorCode::kConfig, "group DP bounds need the five-statistic query");
    const double sens =
        per_record_sensitivity(bounds, static_cast<long>(options.n), norm);
    return group_dp_calibrate(sens, k, params, kind);
  };
  if (name == "none") return NoisePlan::none();
  if (name == "wass") {
    // Translated models: the infinity-Wasserstein distance is the L1 mean gap.
    auto plan = calibrate_wasserstein(delta_e(family, Norm::kL1), params);
    auto prov = plan.provenance();
    prov.warnings.push_back("delta_w taken as delta_E1 (models assumed translated)");
    return NoisePlan::laplace_iid(std::get<LaplaceIid>(plan.shape()).scale, prov);
  }
  if (name == "awass") {
    double radius = 0.0;
    for (const auto& e : family.catalog()) {
      radius = std::max(radius, l1_concentration_radius(e.model, params.delta));
    }
    auto plan = calibrate_approx_wasserstein(
        closeness_from_bounds(delta_e(family, Norm::kL1), radius), params);
    auto prov = plan.provenance();
    prov.parameters["concentration_radius"] = radius;
    return NoisePlan::laplace_iid(std::get<LaplaceIid>(plan.shape()).scale, prov);
  }
  if (name == "expm-l") return calibrate_expm(family, params, NoiseKind::kLaplace);
  if (name == "expm-g") return calibrate_expm(family, params, NoiseKind::kGaussian);
  if (name == "dir-l") {
    return calibrate_directional(family, direction(), params, NoiseKind::kLaplace);
  }
  if (name == "dir-g") {
    return calibrate_directional(family, direction(), params, NoiseKind::kGaussian);
  }
  if (name == "eig") {
    return eig_plan(family, params, {0, options.eigenbasis_tolerance});
  }
  if (name == "dau") return dau_plan(family, direction(), params);
  const long k = static_cast<long>(options.n);
  if (name == "gdp-l") return group(k, NoiseKind::kLaplace, Norm::kL1);
  if (name == "gdp-g") return group(k, NoiseKind::kGaussian, Norm::kL2);
  if (name == "dp-l") return group(1, NoiseKind::kLaplace, Norm::kL1);
  if (name == "dp-g") return group(1, NoiseKind::kGaussian, Norm::kL2);
  detail::fail(ErrorCode::kConfig, "unknown mechanism '" + name + "'");
}

// ---------------------------------------------------------------------------
// Work pool

// Runs body(i) for i in [0, count) on up to `threads` workers. The first
// exception is rethrown after every worker has stopped.
template <class F>
void parallel_for(std::size_t count, unsigned threads, F&& body) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  const auto workers_n = static_cast<std::size_t>(threads) < count
                             ? static_cast<std::size_t>(threads)
                             : count;
  if (workers_n <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first;
  std::mutex mu;
  {
    std::vector<std::jthread> workers;
    for (std::size_t w = 0; w < workers_n; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < count && !stop; i = next++) {
          try {
            body(i);
          } catch (...) {
            std::lock_guard lock(mu);
            if (!first) first = std::current_exception();
            stop = true;
          }
        }
      });
    }
  }
  if (first) std::rethrow_exception(first);
}

// ---------------------------------------------------------------------------
// Cell cache

struct Cell {
  std::string mechanism;
  double epsilon = 0.0;
  double delta = 0.0;
  double delta_p = 0.0;

  std::string key() const {
    return mechanism + "_e" + format_double(epsilon) + "_d" + format_double(delta) +
           "_p" + format_double(delta_p);
  }
  std::string row_prefix(Property property) const {
    return mechanism + "," + format_double(epsilon) + "," + format_double(delta) +
           "," + to_string(property) + "," + format_double(delta_p) + ",";
  }
};

namespace detail {

inline fs::path cell_path(const fs::path& out, const std::string& stage, const Cell& c) {
  return out / "cells" / stage / (c.key() + ".csv");
}

// Rows of a finished cell, or empty when missing or stale.
inline std::vector<std::string> read_cell(const fs::path& path, std::uint64_t hash,
                                          const std::string& header) {
  std::ifstream in(path);
  if (!in) return {};
  std::string line;
  if (!std::getline(in, line) || line != "# cell_hash=" + hex64(hash)) return {};
  if (!std::getline(in, line) || line != header) return {};
  std::vector<std::string> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(line);
  }
  return rows;
}

inline void write_cell(const fs::path& path, std::uint64_t hash, const std::string& header,
                       const std::vector<std::string>& rows) {
  std::string text = "# cell_hash=" + hex64(hash) + "\n" + header + "\n";
  for (const auto& r : rows) text += r + "\n";
  write_text_file(path, text);
}

inline std::vector<std::string> cell_rows(const Cell& cell, Property property,
                                          const std::vector<double>& values) {
  std::vector<std::string> rows;
  double sum = 0.0;
  for (std::size_t r = 0; r < values.size(); ++r) {
    rows.push_back(cell.row_prefix(property) + std::to_string(r) + "," +
                   format_double(values[r]));
    sum += values[r];
  }
  rows.push_back(cell.row_prefix(property) + "mean," +
                 format_double(sum / static_cast<double>(values.size())));
  return rows;
}

}  // namespace detail

struct SweepResult {
  std::string csv;
  std::size_t cells_run = 0;
  std::size_t cells_reused = 0;
  // Mean of each cell keyed by Cell::key().
  std::map<std::string, double> means;
};

namespace detail {

// Shared driver: cached cells are reused, the rest run repetition by
// repetition in the pool, and rows are collected in cell order.
template <class PlanFor, class Trial>
SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& stage,
                      const std::string& header, const std::vector<Cell>& cells,
                      std::size_t repetitions, PlanFor&& plan_for, Trial&& trial) {
  const fs::path out(cfg.output);
  const auto hash = cell_hash(cfg);
  std::vector<std::vector<std::string>> rows(cells.size());
  std::vector<std::size_t> pending;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    rows[c] = read_cell(cell_path(out, stage, cells[c]), hash, header);
    if (rows[c].empty()) pending.push_back(c);
  }
  std::vector<NoisePlan> plans;
  plans.reserve(pending.size());
  for (auto c : pending) plans.push_back(plan_for(cells[c]));

  std::vector<std::vector<double>> values(pending.size(),
                                          std::vector<double>(repetitions));
  parallel_for(pending.size() * repetitions, cfg.threads, [&](std::size_t task) {
    const auto k = task / repetitions;
    const auto r = task % repetitions;
    values[k][r] = trial(cells[pending[k]], plans[k], r);
  });
  for (std::size_t k = 0; k < pending.size(); ++k) {
    const auto c = pending[k];
    rows[c] = cell_rows(cells[c], cfg.property, values[k]);
    write_cell(cell_path(out, stage, cells[c]), hash, header, rows[c]);
  }

  SweepResult result;
  result.cells_run = pending.size();
  result.cells_reused = cells.size() - pending.size();
  result.csv = header + "\n";
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (const auto& r : rows[c]) result.csv += r + "\n";
    const auto& last = rows[c].back();
    result.means[cells[c].key()] = std::stod(last.substr(last.rfind(',') + 1));
  }
  return result;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Manifest

inline json versions_json() {
  return json{{"distpriv", kVersion},
              {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                            std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
              {"boost", BOOST_LIB_VERSION},
              {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

// Merges one command's entry into run_manifest.json; entries from a run
// with a different config hash are discarded.
inline void update_manifest(const ExperimentConfig& cfg, const std::string& command,
                            json details) {
  const fs::path path = fs::path(cfg.output) / "run_manifest.json";
  const auto hash = hex64(config_hash(cfg));
  json manifest;
  if (fs::exists(path)) {
    try {
      manifest = read_json_file(path.string());
    } catch (const Error&) {
      manifest = json();
    }
    if (!manifest.is_object() || manifest.value("config_hash", "") != hash) {
      manifest = json();
    }
  }
  if (manifest.is_null()) {
    manifest = json{{"config_hash", hash},
                    {"csv_schema_version", kCsvSchemaVersion},
                    {"config", to_json(cfg)},
                    {"versions", versions_json()},
                    {"seeds",
                     {{"root", cfg.seed},
                      {"split", split_seed(cfg.seed)},
                      {"model", derive_seed(cfg.seed, "model", {})},
                      {"utility", derive_seed(cfg.seed, "utility", {})},
                      {"attack", derive_seed(cfg.seed, "attack", {})}}},
                    {"commands", json::object()}};
  }
  manifest["commands"][command] = std::move(details);
  write_text_file(path, manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Commands

struct ModelResult {
  std::vector<CatalogEntry> catalog;
  bool reused = false;
};

inline ModelResult cmd_model(const ExperimentConfig& cfg, const ExperimentData& data) {
  cfg.validate();
  const fs::path path = fs::path(cfg.output) / "catalog.json";
  ModelResult result;
  result.catalog = build_catalog(cfg, data.split.modeling);
  write_text_file(path, catalog_document(cfg, result.catalog).dump(2) + "\n");
  update_manifest(cfg, "model",
                  json{{"catalog", path.string()},
                       {"models", result.catalog.size()},
                       {"dataset_rows", data.loaded_rows},
                       {"dropped_missing", data.dropped_missing},
                       {"rejected_out_of_range", data.rejected_out_of_range}});
  return result;
}

// Reuses catalog.json when its model hash matches the config.
inline ModelResult load_or_build_catalog(const ExperimentConfig& cfg,
                                         const ExperimentData& data) {
  const fs::path path = fs::path(cfg.output) / "catalog.json";
  if (fs::exists(path)) {
    try {
      const json doc = read_json_file(path.string());
      if (doc.is_object() && doc.value("model_hash", "") == hex64(model_hash(cfg))) {
        return {catalog_from_json(doc.at("models")), true};
      }
    } catch (const std::exception&) {
    }
  }
  return cmd_model(cfg, data);
}

inline std::vector<Cell> utility_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (const auto& m : cfg.mechanisms) {
    for (double dp : cfg.delta_p) {
      for (double e : cfg.epsilon) {
        for (double d : cfg.delta) cells.push_back({m, e, d, dp});
      }
    }
  }
  return cells;
}

// Repetition seeds leave the mechanism out, so every mechanism in a
// (delta_p, epsilon, delta) cell sees the same subsets and base draws.
inline std::uint64_t utility_seed(const ExperimentConfig& cfg, const Cell& cell,
                                  std::size_t rep) {
  return derive_seed(cfg.seed, "utility",
                     {std::bit_cast<std::uint64_t>(cell.delta_p),
                      std::bit_cast<std::uint64_t>(cell.epsilon),
                      std::bit_cast<std::uint64_t>(cell.delta), rep});
}

inline SweepResult cmd_utility(const ExperimentConfig& cfg, const ExperimentData& data) {
  cfg.validate();
  const auto catalog = load_or_build_catalog(cfg, data).catalog;
  const auto prop = to_string(cfg.property);
  const StratifiedSampler sampler(data.split.modeling, cfg.property);
  const PlanOptions options{cfg.n, cfg.eigenbasis_tolerance};
  auto result = detail::run_sweep(
      cfg, "utility", kUtilityHeader, utility_cells(cfg), cfg.repetitions,
      [&](const Cell& c) {
        const auto family = family_for(catalog, prop, cfg.p_center - c.delta_p / 2,
                                       cfg.p_center + c.delta_p / 2);
        return build_plan(c.mechanism, family, PrivacyParams(c.epsilon, c.delta), options);
      },
      [&](const Cell& c, const NoisePlan& plan, std::size_t rep) {
        Rng rng(utility_seed(cfg, c, rep));
        const Vector q = compute_query(sampler.sample(cfg.p_center, cfg.n, rng));
        return (apply(plan, q, rng) - q).norm();
      });
  const auto path = fs::path(cfg.output) / "results_utility.csv";
  write_text_file(path, result.csv);
  update_manifest(cfg, "utility",
                  json{{"csv", path.string()},
                       {"header", kUtilityHeader},
                       {"cells_run", result.cells_run},
                       {"cells_reused", result.cells_reused}});
  return result;
}

inline std::vector<Cell> attack_cells(const ExperimentConfig& cfg) {
  const auto& s = cfg.attack.shadow;
  const double dp = canonical_proportion(s.p_high - s.p_low);
  std::vector<Cell> cells;
  for (const auto& m : cfg.attack_mechanisms()) {
    for (double e : cfg.attack_epsilon()) {
      for (double d : cfg.attack_delta()) cells.push_back({m, e, d, dp});
    }
  }
  return cells;
}

inline std::uint64_t attack_seed(const ExperimentConfig& cfg, const Cell& cell,
                                 std::size_t rep) {
  return derive_seed(cfg.seed, "attack",
                     {std::bit_cast<std::uint64_t>(cell.epsilon),
                      std::bit_cast<std::uint64_t>(cell.delta), rep});
}

inline SweepResult cmd_attack(const ExperimentConfig& cfg, const ExperimentData& data) {
  cfg.validate();
  const auto catalog = load_or_build_catalog(cfg, data).catalog;
  const auto& s = cfg.attack.shadow;
  const auto prop = to_string(cfg.property);
  const auto family = family_for(catalog, prop, s.p_low, s.p_high);
  const StratifiedSampler aux(data.split.aux, cfg.property);
  const StratifiedSampler test(data.split.test, cfg.property);
  const PlanOptions options{s.n, cfg.eigenbasis_tolerance};
  auto result = detail::run_sweep(
      cfg, "attack", kAttackHeader, attack_cells(cfg), s.repetitions,
      [&](const Cell& c) {
        return build_plan(c.mechanism, family, PrivacyParams(c.epsilon, c.delta), options);
      },
      [&](const Cell& c, const NoisePlan& plan, std::size_t rep) {
        Rng rng(attack_seed(cfg, c, rep));
        return run_attack_trial(aux, test, s, plan, rng);
      });
  const auto path = fs::path(cfg.output) / "results_attack.csv";
  write_text_file(path, result.csv);
  update_manifest(cfg, "attack",
                  json{{"csv", path.string()},
                       {"header", kAttackHeader},
                       {"cells_run", result.cells_run},
                       {"cells_reused", result.cells_reused}});
  return result;
}

inline DiscreteDistribution load_distribution_file(const std::string& path) {
  const json j = read_json_file(path);
  try {
    return distribution_from_json(j);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.message());
  }
}

// W-infinity distance, smallest W for the given delta, and a certificate
// of (W, delta)-closeness at that W.
inline json cmd_transport(const std::string& mu_path, const std::string& nu_path,
                          double delta) {
  const auto mu = load_distribution_file(mu_path);
  const auto nu = load_distribution_file(nu_path);
  const double winf = winf_distance(mu, nu);
  const double w = min_w_for_delta(mu, nu, delta);
  const auto closeness = is_w_delta_close(mu, nu, w, delta);
  json out{{"winf", winf}, {"delta", delta}, {"min_w", w}, {"close", closeness.close}};
  out["certificate"] =
      closeness.certificate ? to_json(*closeness.certificate) : json(nullptr);
  return out;
}

inline ModelResult cmd_model(const ExperimentConfig& cfg) {
  return cmd_model(cfg, prepare_data(cfg));
}
inline SweepResult cmd_utility(const ExperimentConfig& cfg) {
  return cmd_utility(cfg, prepare_data(cfg));
}
inline SweepResult cmd_attack(const ExperimentConfig& cfg) {
  return cmd_attack(cfg, prepare_data(cfg));
}

}  // namespace distpriv
