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


// Command line front end: model, utility, attack, transport, release, audit.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "distpriv/distpriv.hpp"

namespace {

using namespace distpriv;

struct RunFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool allow_variant = false;
  std::optional<unsigned> threads;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
  cmd->add_option("--config", f.config, "experiment config JSON")->required();
  cmd->add_option("--seed", f.seed, "override the root seed");
  cmd->add_option("--out", f.out, "output directory (overrides config)");
  cmd->add_flag("--allow-variant-dataset", f.allow_variant,
                "accept a dataset whose clean row count is not 45222");
  cmd->add_option("--threads", f.threads, "worker threads (0 = all cores)");
}

ExperimentConfig resolve(const RunFlags& f) {
  auto cfg = load_config_file(f.config);
  if (f.seed) {
    cfg.seed = *f.seed;
    cfg.attack.shadow.seed = *f.seed;
  }
  if (!f.out.empty()) cfg.output = f.out;
  if (f.allow_variant) cfg.require_canonical_count = false;
  if (f.threads) cfg.threads = *f.threads;
  cfg.validate();
  return cfg;
}

struct PlanFlags {
  std::string mechanism;
  double epsilon = 1.0;
  double delta = 0.0;
  std::string models;
  std::string pairs;
  std::uint64_t seed = 0;
  std::size_t n = 100;
  double eigenbasis_tolerance = kEigenbasisTolerance;
};

void add_plan_flags(CLI::App* cmd, PlanFlags& f) {
  cmd->add_option("--mechanism", f.mechanism, "mechanism name")
      ->required()
      ->check(CLI::IsMember(known_mechanisms()));
  cmd->add_option("--epsilon", f.epsilon, "privacy epsilon")->required();
  cmd->add_option("--delta", f.delta, "privacy delta");
  cmd->add_option("--models", f.models, "model catalog JSON")->required();
  cmd->add_option("--pairs", f.pairs, "protected index pairs, e.g. 0:1,1:0")
      ->required();
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--n", f.n, "records per subset (group DP)");
  cmd->add_option("--eigenbasis-tolerance", f.eigenbasis_tolerance,
                  "largest accepted common-eigenbasis residual");
}

NoisePlan plan_from(const PlanFlags& f, std::optional<PairFamily>& family) {
  family.emplace(load_catalog_file(f.models), parse_pair_list(f.pairs));
  return build_plan(f.mechanism, *family, PrivacyParams(f.epsilon, f.delta),
                    {f.n, f.eigenbasis_tolerance});
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distpriv: distribution privacy mechanisms and experiments"};
  app.require_subcommand(1);

  RunFlags model_flags, utility_flags, attack_flags;
  auto* model = app.add_subcommand("model", "estimate the Gaussian model catalog");
  add_run_flags(model, model_flags);
  auto* utility = app.add_subcommand("utility", "privacy/utility sweep");
  add_run_flags(utility, utility_flags);
  auto* attack = app.add_subcommand("attack", "property inference attack sweep");
  add_run_flags(attack, attack_flags);

  std::string mu, nu;
  double transport_delta = 0.1;
  auto* transport = app.add_subcommand("transport", "W-infinity report for two distributions");
  transport->add_option("--mu", mu, "first distribution JSON")->required();
  transport->add_option("--nu", nu, "second distribution JSON")->required();
  transport->add_option("--delta", transport_delta, "mass allowed to move far");

  PlanFlags release_flags;
  std::string query;
  auto* release = app.add_subcommand("release", "noise one query vector");
  add_plan_flags(release, release_flags);
  release->add_option("--query", query, "query vector JSON")->required();

  PlanFlags audit_flags;
  std::size_t trials = 100000;
  auto* audit_cmd = app.add_subcommand("audit", "Monte Carlo privacy audit of a plan");
  add_plan_flags(audit_cmd, audit_flags);
  audit_cmd->add_option("--trials", trials, "samples per model");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*model) {
      const auto cfg = resolve(model_flags);
      const auto result = cmd_model(cfg);
      std::cout << "wrote " << result.catalog.size() << " models to "
                << (fs::path(cfg.output) / "catalog.json").string() << "\n";
    } else if (*utility) {
      const auto cfg = resolve(utility_flags);
      const auto result = cmd_utility(cfg);
      std::cout << "utility: " << result.cells_run << " cells run, "
                << result.cells_reused << " reused\n";
    } else if (*attack) {
      const auto cfg = resolve(attack_flags);
      const auto result = cmd_attack(cfg);
      std::cout << "attack: " << result.cells_run << " cells run, "
                << result.cells_reused << " reused\n";
    } else if (*transport) {
      std::cout << cmd_transport(mu, nu, transport_delta).dump(2) << "\n";
    } else if (*release) {
      std::optional<PairFamily> family;
      const auto plan = plan_from(release_flags, family);
      const Vector q = vector_from_json(read_json_file(query));
      Rng rng(release_flags.seed);
      const json out{{"release", vector_to_json(apply(plan, q, rng))},
                     {"plan", to_json(plan)}};
      std::cout << out.dump(2) << "\n";
    } else if (*audit_cmd) {
      std::optional<PairFamily> family;
      const auto plan = plan_from(audit_flags, family);
      const PrivacyParams params(audit_flags.epsilon, audit_flags.delta);
      json reports = json::array();
      double worst = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < family->pairs().size(); ++k) {
        const auto [i, j] = family->pairs()[k];
        Rng rng(derive_seed(audit_flags.seed, "audit", {k}));
        const auto r = audit(plan, family->model(i), family->model(j), params, trials, rng);
        worst = std::max(worst, r.estimated_violation);
        reports.push_back(json{{"pair", {i, j}}, {"report", to_json(r)}});
      }
      const json out{{"plan", to_json(plan)},
                     {"audits", reports},
                     {"max_violation", worst}};
      std::cout << out.dump(2) << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
