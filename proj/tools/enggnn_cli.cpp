// Command-line front end: simulate, run, rank-features, report.

#include "enggnn/experiment.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kUsageError = 2;

struct Flags {
  std::string config;
  std::string out;
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
};

int cmd_simulate(const Flags& f) {
  auto cfg = enggnn::load_config(f.config);
  if (cfg.mode != enggnn::ExperimentMode::simulate) throw enggnn::Error("simulate: config mode must be 'simulate'");
  if (f.seed) cfg.scenario.seed = *f.seed;
  const std::string out = f.out.empty() ? cfg.output_dir : f.out;
  const auto m = enggnn::write_simulated_dataset(cfg.scenario, out);
  // Validate by reading the files back.
  const auto dir = std::filesystem::path(out);
  const auto data = enggnn::load_dataset((dir / "matrix.csv").string());
  const auto edges = enggnn::load_edge_list((dir / "edges.tsv").string(), data.names);
  std::cout << "wrote " << out << ": n=" << data.y.size() << " p=" << data.names.size()
            << " edges=" << edges.graph.edge_count() << " positive_fraction=" << m["positive_fraction"].get<double>()
            << "\n";
  return 0;
}

int cmd_run(const Flags& f) {
  auto cfg = enggnn::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.output_dir = f.out;
  const auto res = enggnn::run_experiment(cfg, [](const std::string& s) { std::cerr << s << "\n"; });
  std::cout << enggnn::aggregate_table(res.aggregates).to_text();
  std::size_t failed = 0;
  for (const auto& r : res.records) failed += r.ok() ? 0 : 1;
  if (failed > 0) std::cerr << failed << " run(s) failed; see metrics_runs.csv\n";
  return 0;
}

int cmd_rank_features(const Flags& f) {
  if (f.checkpoint.empty()) throw enggnn::Error("rank-features: --checkpoint is required");
  const auto ck = enggnn::load_checkpoint(f.checkpoint);
  const auto ranking = enggnn::model_importance(ck.model);
  const auto text = enggnn::importance_to_text(ranking, ck.feature_names);
  if (f.out.empty()) {
    std::cout << text;
  } else {
    enggnn::write_text_file(f.out, text);
  }
  return 0;
}

int cmd_report(const Flags& f) {
  std::string dir = f.out;
  if (dir.empty() && !f.config.empty()) dir = enggnn::load_config(f.config).output_dir;
  if (dir.empty()) throw enggnn::Error("report: pass --out <run directory> or --config");
  const auto records = enggnn::reaggregate(dir);
  std::cout << enggnn::aggregate_table(enggnn::aggregate(records)).to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-embedded neural network experiments"};
  app.require_subcommand(1, 1);
  Flags flags;
  std::uint64_t seed = 0;

  auto* sim = app.add_subcommand("simulate", "Generate a simulated dataset (matrix, edge list, truth)");
  sim->add_option("--config", flags.config, "Config file with a scenario block")->required();
  sim->add_option("--out", flags.out, "Output directory");
  sim->add_option("--seed", seed, "Override the scenario seed");

  auto* run = app.add_subcommand("run", "Run an experiment described by a config file");
  run->add_option("--config", flags.config, "Experiment config (JSON)")->required();
  run->add_option("--out", flags.out, "Override the output directory");
  run->add_option("--seed", seed, "Override the master seed");

  auto* rank = app.add_subcommand("rank-features", "Emit the importance ranking stored in a checkpoint");
  rank->add_option("--checkpoint", flags.checkpoint, "Checkpoint file")->required();
  rank->add_option("--out", flags.out, "Output CSV (default stdout)");

  auto* report = app.add_subcommand("report", "Re-aggregate run tables in an output directory");
  report->add_option("--out", flags.out, "Run output directory");
  report->add_option("--config", flags.config, "Config whose output_dir is used");

  if (argc <= 1) {
    std::cerr << app.help();
    return kUsageError;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kUsageError;
  }
  for (auto* sub : {sim, run})
    if (sub->parsed() && sub->count("--seed") > 0) flags.seed = seed;

  enggnn::Warnings::set_handler([](const std::string& w) { std::cerr << "warning: " << w << "\n"; });
  try {
    if (sim->parsed()) return cmd_simulate(flags);
    if (run->parsed()) return cmd_run(flags);
    if (rank->parsed()) return cmd_rank_features(flags);
    return cmd_report(flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
