// ttvi: generate | train | adapt-eval | report
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data/format error,
// 3 numerical failure (non-finite loss).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "ttvi/errors.hpp"
#include "ttvi/experiment.hpp"

namespace fs = std::filesystem;
using namespace ttvi;

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;
constexpr int kNumerical = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool force = false;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Experiment config (JSON); defaults apply when omitted");
    app->add_option("--seed", seed, "Override the global seed");
    app->add_option("--out", out, "Experiment root directory (overrides the config's \"out\")");
    app->add_flag("--force", force, "Replace existing non-empty output directories");
  }

  ExperimentConfig resolve() const {
    nlohmann::json j = nlohmann::json::object();
    ExperimentConfig cfg = config.empty() ? config_from_json(j) : load_config(config);
    if (seed) {
      cfg.seed = *seed;
      cfg.train.seed = *seed;
      cfg.ttt.seed = *seed;
    }
    if (!out.empty()) cfg.out = out;
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Test-time training for volumetric frame interpolation"};
  app.require_subcommand(1);

  Common gen_opts, train_opts, eval_opts;
  std::optional<std::size_t> n_test;
  auto* gen = app.add_subcommand("generate", "Write a synthetic train/test dataset with label sidecars");
  gen_opts.attach(gen);
  gen->add_option("--n-test", n_test, "Number of test sequences")->check(CLI::PositiveNumber);

  std::string train_data;
  auto* tr = app.add_subcommand("train", "Train the interpolation model jointly with both pretext tasks");
  train_opts.attach(tr);
  tr->add_option("--data", train_data, "Dataset directory (default <out>/data)");

  std::string eval_data, checkpoint, scheme, task;
  bool no_ttt = false;
  auto* ev = app.add_subcommand("adapt-eval", "Adapt at test time and score every scheme x task cell");
  eval_opts.attach(ev);
  ev->add_option("--data", eval_data, "Dataset directory (default <out>/data)");
  ev->add_option("--checkpoint", checkpoint, "Checkpoint (default <out>/model/checkpoint.bin)");
  ev->add_option("--scheme", scheme, "Only this scheme")->check(CLI::IsMember({"naive", "online", "minibatch"}));
  ev->add_option("--task", task, "Only this task")->check(CLI::IsMember({"rotation", "mae"}));
  ev->add_flag("--no-ttt", no_ttt, "Only the unadapted baseline row");

  std::vector<std::string> report_dirs;
  std::string report_csv;
  auto* rep = app.add_subcommand("report", "Aggregate one or more results directories (mean ± std over runs)");
  rep->add_option("dirs", report_dirs, "Results directories or experiment roots")->required();
  rep->add_option("--csv", report_csv, "Also write a plot-ready CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  if (gen->parsed()) {
    auto cfg = gen_opts.resolve();
    if (n_test) cfg.data.n_test = *n_test;
    const auto paths = ExperimentPaths::under(cfg.out);
    cmd_generate(cfg, paths.data, gen_opts.force);
    std::printf("wrote %zu train / %zu test sequences to %s\n", cfg.data.n_train, cfg.data.n_test,
                paths.data.string().c_str());
  } else if (tr->parsed()) {
    const auto cfg = train_opts.resolve();
    const auto paths = ExperimentPaths::under(cfg.out);
    cmd_train(cfg, train_data.empty() ? paths.data : fs::path(train_data), paths.model, train_opts.force);
    std::printf("wrote %s\n", (paths.model / "checkpoint.bin").string().c_str());
  } else if (ev->parsed()) {
    auto cfg = eval_opts.resolve();
    if (!scheme.empty()) cfg.eval.schemes = {parse_scheme(scheme)};
    if (!task.empty()) cfg.eval.tasks = {parse_task(task)};
    if (no_ttt) {
      cfg.eval.schemes.clear();
      cfg.eval.include_no_ttt = true;
    }
    const auto paths = ExperimentPaths::under(cfg.out);
    const bool fell_back =
        cmd_adapt_eval(cfg, eval_data.empty() ? paths.data : fs::path(eval_data),
                       checkpoint.empty() ? paths.model / "checkpoint.bin" : fs::path(checkpoint), paths.results,
                       eval_opts.force);
    std::printf("wrote %s\n", (paths.results / "metrics.csv").string().c_str());
    if (fell_back) {
      std::fprintf(stderr, "error: adaptation hit a non-finite loss; theta_0 was used (see adaptation.json)\n");
      return kNumerical;
    }
  } else if (rep->parsed()) {
    std::vector<fs::path> dirs;
    for (const auto& d : report_dirs) {
      const fs::path p(d);
      dirs.push_back(fs::exists(p / "results" / "metrics.csv") ? p / "results" : p);
    }
    cmd_report(dirs, std::cout, report_csv);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return kNumerical;
  } catch (const FormatError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kData;
  } catch (const std::invalid_argument& e) {  // ShapeError, DomainError
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::logic_error& e) {  // ContractError
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kData;
  }
}
