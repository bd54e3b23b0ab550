/*
 * Copyright 2026 The cfshap Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// cfshap: command-line front end.
//
//   cfshap world    create a synthetic world file
//   cfshap train    train a shift predictor on a world
//   cfshap eval     measure a trained shift predictor
//   cfshap explain  contrastive Shapley explanation of one latent
//   cfshap axioms   randomized axiom suite
//   cfshap audit-published   efficiency audit of published attributions
//   cfshap bench    exact vs sampled cost and accuracy
//   cfshap serve    answer the oracle line protocol on stdin/stdout
//
// Results go to stdout, diagnostics to stderr. Exit status: 0 success,
// 1 a check failed, 2 usage error, 3 runtime error.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cfshap/cfshap.hpp"

namespace {

using namespace cfshap;

constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

// ---------------------------------------------------------------------------

struct WorldArgs {
  int latent_dim = 16;
  int image_dim = 32;
  int num_attrs = 5;
  std::uint64_t seed = 7;
  std::string out = "world.json";
};

int cmd_world(const WorldArgs& a) {
  if (a.latent_dim < a.num_attrs) throw UsageError("--latent-dim must be >= --num-attrs");
  if (a.image_dim < a.num_attrs) throw UsageError("--image-dim must be >= --num-attrs");
  const WorldBundle b = world_create(a.latent_dim, a.image_dim, a.num_attrs, a.seed);
  save_world(b.world, a.out);
  std::cout << "world d=" << a.latent_dim << " n=" << a.image_dim << " m=" << a.num_attrs
            << " seed=" << a.seed << " -> " << a.out << "\n";
  for (int i = 0; i < a.num_attrs; ++i) {
    std::cout << "  attr " << i << ": |u| = " << fmt("%.6f", norm2(b.truth.directions[i]))
              << "  target coefficient = "
              << fmt("%+.6f", b.truth.target_coefficients[i]) << "\n";
  }
  std::cout << "  target-relevant attributes:";
  for (int i : b.truth.relevant_attrs) std::cout << " " << i;
  std::cout << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string world;
  std::string out = "shift.json";
  std::string log_path;
  TrainingConfig config;
};

int cmd_train(const TrainArgs& a) {
  const SyntheticWorld world = load_world(a.world);
  TrainResult r;
  try {
    r = shift_train(world, a.config);
  } catch (const TrainingError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
  std::string log = "epoch,attr_loss,faith_loss\n";
  for (const EpochLog& e : r.log) {
    log += std::to_string(e.epoch) + "," + format_roundtrip(e.mean_attr_loss) + "," +
           format_roundtrip(e.mean_faith_loss) + "\n";
    std::cerr << "epoch " << e.epoch << "  L_a " << fmt("%.6f", e.mean_attr_loss) << "  L_f "
              << fmt("%.6f", e.mean_faith_loss) << "\n";
  }
  if (!a.log_path.empty()) write_text_file(a.log_path, log);
  save_shift(r.params, a.out);
  std::cout << "shift predictor gamma=" << a.config.gamma << " epochs=" << a.config.epochs
            << " seed=" << a.config.seed << " -> " << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string world;
  std::string shift;
  int samples = 500;
  std::uint64_t seed = 99;
};

int cmd_eval(const EvalArgs& a) {
  const SyntheticWorld world = load_world(a.world);
  const ShiftPredictorParams p = load_shift(a.shift);
  const ShiftMetrics m = eval_shift_predictor(world, p, a.samples, a.seed);
  std::cout << "flip agreement     " << fmt("%.4f", m.flip_agreement) << "\n"
            << "mean shift norm    " << fmt("%.4f", m.mean_shift_norm) << "\n"
            << "mean empty drift   " << fmt("%.4f", m.mean_empty_drift) << "\n"
            << "max empty drift    " << fmt("%.4f", m.max_empty_drift) << "\n";
  for (std::size_t i = 0; i < m.per_attribute.size(); ++i)
    std::cout << "  attr " << i << ": " << m.per_attribute[i].agreements << "/"
              << m.per_attribute[i].samples << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct ExplainArgs {
  std::string world;
  std::string oracle_cmd;
  std::string shift;
  std::optional<std::uint64_t> z_seed;
  std::string z_file;
  std::string direction;
  std::string method = "exact";
  std::uint64_t permutations = 1000;
  std::uint64_t seed = 0;
  std::vector<std::string> names;
  std::string out = "explanation.json";
  std::string table_out;
  std::string csv_out;
  bool no_cache = false;
};

int cmd_explain(const ExplainArgs& a) {
  if (a.world.empty() == a.oracle_cmd.empty())
    throw UsageError("exactly one of --world or --oracle-cmd is required");
  if (a.z_seed.has_value() == !a.z_file.empty())
    throw UsageError("exactly one of --z-seed or --z-file is required");

  std::unique_ptr<Oracle> oracle;
  std::optional<ShiftPredictorParams> local_shift;
  if (!a.world.empty()) {
    if (a.shift.empty()) throw UsageError("--shift is required with --world");
    oracle = std::make_unique<InProcessOracle>(load_world(a.world), load_shift(a.shift));
  } else {
    oracle = std::make_unique<SubprocessOracle>(a.oracle_cmd);
    if (!a.shift.empty()) local_shift = load_shift(a.shift);
  }
  const OracleDescriptor meta = oracle->meta();

  ExplanationRequest req;
  req.grand = parse_grand_direction(a.direction);
  if (static_cast<int>(req.grand.size()) != meta.num_attrs)
    throw UsageError("--direction has " + std::to_string(req.grand.size()) +
                     " entries, oracle has " + std::to_string(meta.num_attrs) + " attributes");
  req.names = a.names.empty() ? default_attribute_names(meta.num_attrs) : a.names;
  if (a.z_seed) {
    std::mt19937_64 rng(*a.z_seed);
    req.z = sample_latent(rng, meta.latent_dim);
  } else {
    req.z = parse_json_text(read_text_file(a.z_file), a.z_file).get<Vector>();
  }
  if (a.method == "exact") {
    req.method = ShapleyMethod::kExact;
  } else if (a.method == "sampled") {
    req.method = ShapleyMethod::kSampled;
    req.permutations = a.permutations;
    req.seed = a.seed;
  } else {
    throw UsageError("--method must be exact or sampled");
  }
  req.use_cache = !a.no_cache;

  const Explanation e = explain(req, *oracle, local_shift ? &*local_shift : nullptr);
  const std::string table = render_explanation(e, RenderFormat::kTable);
  std::cout << table;
  std::cout << "oracle calls " << e.oracle_calls << " | empty-coalition drift "
            << fmt("%.3g", e.empty_coalition_drift) << "\n";
  write_text_file(a.out, render_explanation(e, RenderFormat::kStructured));
  if (!a.table_out.empty()) write_text_file(a.table_out, table);
  if (!a.csv_out.empty()) write_text_file(a.csv_out, render_explanation(e, RenderFormat::kCsv));
  return 0;
}

// ---------------------------------------------------------------------------

int cmd_axioms(const AxiomSuiteConfig& c) {
  const AxiomSuiteResult r = run_axiom_suite(c);
  auto line = [](const char* name, double value, double tol, bool ok) {
    std::cout << (ok ? "pass " : "FAIL ") << name << " max residual " << fmt("%.3e", value)
              << " (< " << fmt("%.0e", tol) << ")\n";
  };
  std::cout << "games " << r.games << ", players " << c.min_players << ".." << c.max_players
            << ", seed " << c.seed << (c.broken_weights ? ", BROKEN WEIGHTS" : "") << "\n";
  line("efficiency", r.max_efficiency, AxiomSuiteResult::kEfficiencyTolerance, r.efficiency_ok());
  line("null      ", r.max_null, AxiomSuiteResult::kNullTolerance, r.null_ok());
  line("symmetry  ", r.max_symmetry, AxiomSuiteResult::kSymmetryTolerance, r.symmetry_ok());
  line("linearity ", r.max_linearity, AxiomSuiteResult::kLinearityTolerance, r.linearity_ok());
  std::cout << "null players detected " << r.detected_nulls << "/" << r.planted_nulls
            << ", symmetric pairs detected " << r.detected_pairs << "/" << r.planted_pairs
            << "\n";
  return r.ok() ? 0 : kExitCheckFailed;
}

// ---------------------------------------------------------------------------

struct AuditArgs {
  double tolerance = kPublishedAuditTolerance;
  std::vector<std::string> predictions;  // "image:original,counterfactual"
};

int cmd_audit_published(const AuditArgs& a) {
  std::map<int, std::pair<double, double>> preds;
  for (const std::string& p : a.predictions) {
    double o = 0.0;
    double c = 0.0;
    int image = 0;
    if (std::sscanf(p.c_str(), "%d:%lf,%lf", &image, &o, &c) != 3)
      throw UsageError("--predictions expects image:original,counterfactual, got '" + p + "'");
    preds[image] = {o, c};
  }
  const auto audits = audit_published(a.tolerance, preds);
  bool all_pass = true;
  std::cout << "tolerance " << a.tolerance << "\n";
  for (const PublishedAudit& r : audits) {
    std::cout << "image " << r.image << ": sum " << fmt("%+.2f", r.sum);
    if (r.report) {
      std::cout << "  difference " << fmt("%+.2f", r.report->difference) << "  residual "
                << fmt("%.3f", r.report->residual);
    } else {
      std::cout << "  (no original/counterfactual predictions available)";
    }
    std::cout << "  " << audit_status_name(r.status) << "\n";
    all_pass = all_pass && r.status == AuditStatus::kPass;
  }
  return all_pass ? 0 : kExitCheckFailed;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  int min_players = 2;
  int max_players = 16;
  std::vector<std::uint64_t> permutations{10, 100, 1000, 10000};
  int accuracy_players = 10;
  int seeds = 10;
  std::uint64_t seed = 11;
};

int cmd_bench(const BenchArgs& a) {
  if (a.min_players < 1 || a.max_players > kMaxAxiomPlayers || a.min_players > a.max_players)
    throw UsageError("player range must lie within [1, 20]");
  std::mt19937_64 rng(a.seed);
  std::cout << "exact enumeration\n   m        calls      seconds\n";
  for (int m = a.min_players; m <= a.max_players; ++m) {
    const TableGame g = random_game(m, rng);
    const auto t0 = std::chrono::steady_clock::now();
    const Attribution at = shapley_exact(m, g);
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char buf[96];
    std::snprintf(buf, sizeof buf, "%4d %12llu %12.6f\n", m,
                  static_cast<unsigned long long>(at.evaluations), dt);
    std::cout << buf;
  }

  const int m = a.accuracy_players;
  const TableGame g = random_game(m, rng);
  const Attribution exact = shapley_exact(m, g);
  std::cout << "sampled estimator, m=" << m << ", mean over " << a.seeds << " seeds\n"
            << "  permutations    max|err|     mean|err|        calls\n";
  for (std::uint64_t perms : a.permutations) {
    double max_err = 0.0;
    double mean_err = 0.0;
    std::uint64_t calls = 0;
    for (int s = 0; s < a.seeds; ++s) {
      const Attribution est = shapley_sampled(m, g, perms, a.seed + 1000 + s);
      double worst = 0.0;
      for (int i = 0; i < m; ++i) {
        const double e = std::abs(est.phi[i] - exact.phi[i]);
        worst = std::max(worst, e);
        mean_err += e;
      }
      max_err += worst;
      calls = est.evaluations;
    }
    max_err /= a.seeds;
    mean_err /= static_cast<double>(a.seeds) * m;
    char buf[128];
    std::snprintf(buf, sizeof buf, "  %12llu %12.6f %12.6f %12llu\n",
                  static_cast<unsigned long long>(perms), max_err, mean_err,
                  static_cast<unsigned long long>(calls));
    std::cout << buf;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct ServeArgs {
  std::string world;
  std::string shift;
};

int cmd_serve(const ServeArgs& a) {
  std::optional<ShiftPredictorParams> shift;
  if (!a.shift.empty()) shift = load_shift(a.shift);
  InProcessOracle backend(load_world(a.world), shift);
  OracleServer server(backend);
  const std::size_t n = server.serve(std::cin, std::cout);
  std::cerr << "served " << n << " requests\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive Shapley explanations over counterfactual latent shifts"};
  app.require_subcommand(1);

  WorldArgs world_args;
  auto* world = app.add_subcommand("world", "Create a synthetic world");
  world->add_option("--latent-dim", world_args.latent_dim, "Latent dimension d")->capture_default_str();
  world->add_option("--image-dim", world_args.image_dim, "Image dimension n")->capture_default_str();
  world->add_option("--num-attrs", world_args.num_attrs, "Attribute count m")->capture_default_str();
  world->add_option("--seed", world_args.seed, "World seed")->capture_default_str();
  world->add_option("--out", world_args.out, "Output world file")->capture_default_str();

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a shift predictor");
  train->add_option("--world", train_args.world, "World file")->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_args.out, "Output shift-predictor file")->capture_default_str();
  train->add_option("--log", train_args.log_path, "Per-epoch loss log (csv)");
  train->add_option("--gamma", train_args.config.gamma, "Faithfulness factor")->capture_default_str();
  train->add_option("--epochs", train_args.config.epochs, "Epochs")->capture_default_str();
  train->add_option("--steps-per-epoch", train_args.config.steps_per_epoch, "Optimizer steps per epoch")->capture_default_str();
  train->add_option("--batch-size", train_args.config.batch_size, "Samples per step")->capture_default_str();
  train->add_option("--learning-rate", train_args.config.learning_rate, "Initial learning rate")->capture_default_str();
  train->add_option("--final-learning-rate", train_args.config.final_learning_rate, "Learning rate at the end of the cosine schedule")->capture_default_str();
  train->add_option("--p-cond", train_args.config.p_cond, "Per-attribute conditioning probability")->capture_default_str();
  train->add_option("--hidden-width", train_args.config.hidden_width, "Hidden layer width")->capture_default_str();
  train->add_option("--hidden-layers", train_args.config.hidden_layers, "Hidden layer count")->capture_default_str();
  train->add_option("--seed", train_args.config.seed, "Training seed")->capture_default_str();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a shift predictor");
  eval->add_option("--world", eval_args.world, "World file")->required()->check(CLI::ExistingFile);
  eval->add_option("--shift", eval_args.shift, "Shift-predictor file")->required()->check(CLI::ExistingFile);
  eval->add_option("--samples", eval_args.samples, "Held-out samples")->capture_default_str();
  eval->add_option("--seed", eval_args.seed, "Evaluation seed")->capture_default_str();

  ExplainArgs explain_args;
  auto* expl = app.add_subcommand("explain", "Explain one latent against its counterfactual");
  expl->add_option("--world", explain_args.world, "World file (in-process oracle)")->check(CLI::ExistingFile);
  expl->add_option("--oracle-cmd", explain_args.oracle_cmd, "External oracle command (line protocol on stdio)");
  expl->add_option("--shift", explain_args.shift, "Shift-predictor file")->check(CLI::ExistingFile);
  expl->add_option("--z-seed", explain_args.z_seed, "Draw z ~ N(0, I) from this seed");
  expl->add_option("--z-file", explain_args.z_file, "JSON array holding z")->check(CLI::ExistingFile);
  expl->add_option("--direction", explain_args.direction, "Grand direction, e.g. +1,-1,+1,-1,+1")->required();
  expl->add_option("--method", explain_args.method, "exact | sampled")->capture_default_str();
  expl->add_option("--permutations", explain_args.permutations, "Permutations (sampled)")->capture_default_str();
  expl->add_option("--seed", explain_args.seed, "Sampling seed")->capture_default_str();
  expl->add_option("--names", explain_args.names, "Attribute names")->delimiter(',');
  expl->add_option("--out", explain_args.out, "Structured explanation file")->capture_default_str();
  expl->add_option("--table-out", explain_args.table_out, "Rendered table file");
  expl->add_option("--csv-out", explain_args.csv_out, "CSV attribution file");
  expl->add_flag("--no-cache", explain_args.no_cache, "Disable coalition memoization");

  AxiomSuiteConfig axiom_args;
  auto* axioms = app.add_subcommand("axioms", "Randomized Shapley axiom suite");
  axioms->add_option("--seed", axiom_args.seed, "Suite seed")->capture_default_str();
  axioms->add_option("--min-players", axiom_args.min_players, "Smallest game")->capture_default_str();
  axioms->add_option("--max-players", axiom_args.max_players, "Largest game")->capture_default_str();
  axioms->add_option("--games", axiom_args.games, "Number of random games")->capture_default_str();
  axioms->add_flag("--inject-broken-weight", axiom_args.broken_weights)->group("");

  AuditArgs audit_args;
  auto* audit = app.add_subcommand("audit-published", "Efficiency audit of the published face-attribute attributions");
  audit->add_option("--tolerance", audit_args.tolerance, "Allowed |sum - difference|")->capture_default_str();
  audit->add_option("--predictions", audit_args.predictions, "Supply predictions as image:original,counterfactual");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Exact enumeration cost and sampled-estimator accuracy");
  bench->add_option("--min-players", bench_args.min_players, "Smallest exact game")->capture_default_str();
  bench->add_option("--max-players", bench_args.max_players, "Largest exact game (<= 20)")->capture_default_str();
  bench->add_option("--permutations", bench_args.permutations, "Permutation ladder")->delimiter(',');
  bench->add_option("--accuracy-players", bench_args.accuracy_players, "Game size for the accuracy table")->capture_default_str();
  bench->add_option("--seeds", bench_args.seeds, "Seeds averaged per ladder rung")->capture_default_str();
  bench->add_option("--seed", bench_args.seed, "Base seed")->capture_default_str();

  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Serve the oracle line protocol on stdin/stdout");
  serve->add_option("--world", serve_args.world, "World file")->required()->check(CLI::ExistingFile);
  serve->add_option("--shift", serve_args.shift, "Shift-predictor file")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*world) return cmd_world(world_args);
    if (*train) return cmd_train(train_args);
    if (*eval) return cmd_eval(eval_args);
    if (*expl) return cmd_explain(explain_args);
    if (*axioms) return cmd_axioms(axiom_args);
    if (*audit) return cmd_audit_published(audit_args);
    if (*bench) return cmd_bench(bench_args);
    if (*serve) return cmd_serve(serve_args);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DomainError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
