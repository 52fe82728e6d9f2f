#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "salsa/driver.hpp"

namespace fs = std::filesystem;
using namespace salsa;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

constexpr const char* kExitFooter =
    "Exit codes:\n"
    "  0  success\n"
    "  2  configuration or usage error\n"
    "  3  runtime failure (budget abort, scorer error, I/O error, or any\n"
    "     failed sweep cell)\n";

// Config assembly shared by every subcommand: file (optional) -> --set
// overrides in order -> flag shortcuts appended last so they win. The
// resolved document is what run directories persist.
struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;

  json resolve() const {
    json doc = json::object();
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw IoError("cannot open config '" + config_path + "'");
      try {
        in >> doc;
      } catch (const json::exception& e) {
        throw ConfigError("config '" + config_path +
                          "' is not valid JSON: " + e.what());
      }
    }
    for (const auto& o : overrides) apply_override(doc, o);
    return doc;
  }

  RunConfig load() const { return parse_run_config(resolve()); }
};

void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.config_path,
                  "JSON run configuration (defaults apply when omitted)");
  cmd->add_option("--set", args.overrides,
                  "dotted-key override, e.g. --set space.feature_dim=8")
      ->type_name("KEY=VALUE");
}

std::string default_output_root() {
  const char* env = std::getenv("SALSA_OUT");
  return env && *env ? env : "runs";
}

std::string config_stem(const std::string& path) {
  if (path.empty()) return "default";
  return fs::path(path).stem().string();
}

struct TrialOutcome {
  std::string label;
  std::string dir;
  std::string method;
  std::string strategy;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  double recall = -1;
  double best = 0;
  std::uint64_t calls = 0;
  double overall_s = 0;
};

TrialOutcome execute_run(const RunConfig& cfg, const std::string& label,
                         const std::string& resume) {
  TrialOutcome out;
  out.label = label;
  out.dir = cfg.output_dir;
  out.method = cfg.method;
  out.strategy = cfg.strategy.kind;
  out.seed = cfg.seed;
  try {
    RunContext ctx = make_context(cfg);
    RunResult res = run_any(ctx, resume);
    write_run_outputs(cfg, *ctx.space, res);
    out.recall = res.final_recall;
    out.best = res.ledger->empty() ? 0 : res.ledger->best_score();
    out.calls = res.ledger->total_calls();
    out.overall_s = res.timings.overall();
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

void print_trial(const TrialOutcome& t) {
  if (t.failed) {
    std::printf("%-28s FAILED: %s\n", t.label.c_str(), t.error.c_str());
    return;
  }
  std::printf("%-28s method=%s strategy=%s seed=%llu best=%.6g calls=%llu",
              t.label.c_str(), t.method.c_str(), t.strategy.c_str(),
              (unsigned long long)t.seed, t.best, (unsigned long long)t.calls);
  if (t.recall >= 0) std::printf(" recall=%.4f", t.recall);
  std::printf(" time=%.1fs -> %s\n", t.overall_s, t.dir.c_str());
}

// --- run ---------------------------------------------------------------------

int cmd_run(const ConfigArgs& args, std::uint64_t trials,
            const std::string& out_dir, const std::string& resume) {
  if (trials < 1) throw ConfigError("--trials must be >= 1");
  if (trials > 1 && !resume.empty()) {
    throw ConfigError("--resume only applies to a single trial");
  }
  json doc = args.resolve();
  RunConfig base = parse_run_config(doc);
  const std::string root =
      !out_dir.empty() ? out_dir
                       : default_output_root() + "/" + config_stem(
                             args.config_path) + "-" + base.method;
  double recall_sum = 0;
  std::uint64_t recall_n = 0;
  bool any_failed = false;
  for (std::uint64_t t = 0; t < trials; ++t) {
    RunConfig cfg = base;
    cfg.seed = base.seed + t;
    cfg.output_dir = trials == 1 && !base.output_dir.empty()
                         ? base.output_dir
                         : root + "/seed-" + std::to_string(cfg.seed);
    TrialOutcome res =
        execute_run(cfg, "trial " + std::to_string(t + 1), resume);
    print_trial(res);
    if (res.failed) {
      any_failed = true;
      continue;
    }
    if (res.recall >= 0) {
      recall_sum += res.recall;
      ++recall_n;
    }
  }
  if (recall_n > 1) {
    std::printf("mean recall over %llu trials: %.4f\n",
                (unsigned long long)recall_n, recall_sum / recall_n);
  }
  return any_failed ? kExitRuntime : kExitOk;
}

// --- gen-space ---------------------------------------------------------------

int cmd_gen_space(const ConfigArgs& args, const std::string& out_dir) {
  RunConfig cfg = args.load();
  auto space = build_space_from_spec(cfg.space);
  const std::string dir =
      !out_dir.empty() ? out_dir : default_output_root() + "/space";
  fs::create_directories(dir);
  for (std::size_t v = 0; v < space->n_vectors(); ++v) {
    const std::string path =
        dir + "/synthons_v" + std::to_string(v) + ".tsv";
    save_synthon_set(space->set(v), path);
    std::printf("vector %zu: %zu items -> %s\n", v, space->set(v).size(),
                path.c_str());
  }
  return kExitOk;
}

// --- ground-truth ------------------------------------------------------------

int cmd_ground_truth(const ConfigArgs& args, std::uint64_t k,
                     const std::string& out_file) {
  RunConfig cfg = args.load();
  auto space = build_space_from_spec(cfg.space);
  auto objective = make_objective(cfg.objective, space);
  const std::uint64_t want =
      k > 0 ? k : (cfg.ground_truth_k > 0 ? cfg.ground_truth_k : 100);
  auto ranked =
      brute_force_ground_truth(*space, *objective, want, cfg.enumeration_cap);
  std::ostream* out = &std::cout;
  std::ofstream file;
  if (!out_file.empty()) {
    file.open(out_file);
    if (!file) throw IoError("cannot write '" + out_file + "'");
    out = &file;
  }
  (*out) << "rank";
  for (std::size_t v = 0; v < space->n_vectors(); ++v) {
    (*out) << "\titem_id_" << v;
  }
  (*out) << "\tscore\n";
  out->precision(17);
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    (*out) << r;
    for (std::size_t v = 0; v < space->n_vectors(); ++v) {
      (*out) << "\t" << space->set(v).ids[ranked[r].first.indices[v]];
    }
    (*out) << "\t" << ranked[r].second << "\n";
  }
  if (!out_file.empty() && !file) throw IoError("write failed");
  return kExitOk;
}

// --- sweep -------------------------------------------------------------------

int cmd_sweep(const std::vector<std::string>& config_paths,
              const std::vector<std::string>& overrides, std::uint64_t trials,
              unsigned jobs, const std::string& out_dir) {
  if (config_paths.size() < 2) {
    throw ConfigError("sweep needs at least two configs");
  }
  if (trials < 1) throw ConfigError("--trials must be >= 1");
  const std::string root =
      !out_dir.empty() ? out_dir : default_output_root() + "/sweep";
  fs::create_directories(root);

  struct Cell {
    RunConfig cfg;
    std::string label;
  };
  std::vector<Cell> cells;
  for (const auto& path : config_paths) {
    ConfigArgs args{path, overrides};
    RunConfig base = args.load();
    for (std::uint64_t t = 0; t < trials; ++t) {
      RunConfig cfg = base;
      cfg.seed = base.seed + t;
      const std::string label =
          config_stem(path) + "-seed" + std::to_string(cfg.seed);
      cfg.output_dir = root + "/" + label;
      cells.push_back({std::move(cfg), label});
    }
  }

  std::vector<TrialOutcome> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex print_mu;
  const unsigned n_workers = std::max(
      1u, std::min<unsigned>(jobs, static_cast<unsigned>(cells.size())));
  std::vector<std::thread> workers;
  workers.reserve(n_workers);
  for (unsigned w = 0; w < n_workers; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < cells.size();
           i = next.fetch_add(1)) {
        results[i] = execute_run(cells[i].cfg, cells[i].label, "");
        std::lock_guard<std::mutex> lock(print_mu);
        print_trial(results[i]);
      }
    });
  }
  for (auto& w : workers) w.join();

  const std::string table_path = root + "/sweep_summary.tsv";
  std::ofstream table(table_path);
  if (!table) throw IoError("cannot write '" + table_path + "'");
  table << "cell\tmethod\tstrategy\tseed\tstatus\trecall\tbest\tcalls\t"
           "overall_s\terror\n";
  table.precision(17);
  bool any_failed = false;
  for (const auto& r : results) {
    any_failed = any_failed || r.failed;
    std::string error = r.error;
    for (char& ch : error) {
      if (ch == '\t' || ch == '\n') ch = ' ';
    }
    table << r.label << "\t" << r.method << "\t" << r.strategy << "\t"
          << r.seed << "\t" << (r.failed ? "FAILED" : "ok") << "\t"
          << r.recall << "\t" << r.best << "\t" << r.calls << "\t"
          << r.overall_s << "\t" << error << "\n";
  }
  if (!table) throw IoError("write failed for '" + table_path + "'");
  std::printf("sweep table -> %s\n", table_path.c_str());
  return any_failed ? kExitRuntime : kExitOk;
}

// --- summarize ---------------------------------------------------------------

int cmd_summarize(const std::string& dir, const std::string& out_file) {
  struct Row {
    std::string name;
    std::string method;
    double recall = -1;
    double best = 0;
    std::uint64_t calls = 0;
    PhaseTotals timings;
  };
  std::vector<Row> rows;
  if (!fs::is_directory(dir)) {
    throw IoError("'" + dir + "' is not a directory");
  }
  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(dir)) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  for (const auto& p : entries) {
    const fs::path summary = p / "summary.json";
    if (!fs::is_regular_file(summary)) continue;
    std::ifstream in(summary);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw IoError("cannot parse '" + summary.string() + "': " + e.what());
    }
    Row r;
    r.name = p.filename().string();
    r.method = j.value("method", "?");
    r.recall = j.value("final_recall", -1.0);
    r.best = j.value("best_score", 0.0);
    r.calls = j.value("counted_calls", std::uint64_t{0});
    const json& t = j.at("timings");
    r.timings.scoring = t.value("scoring_s", 0.0);
    r.timings.training = t.value("training_s", 0.0);
    r.timings.inference = t.value("inference_s", 0.0);
    r.timings.acquisition = t.value("acquisition_s", 0.0);
    rows.push_back(std::move(r));
  }
  if (rows.empty()) {
    throw IoError("no <trial>/summary.json files under '" + dir + "'");
  }

  std::ostringstream out;
  out << "trial\tmethod\trecall\tbest\tcalls\tscoring_s\ttraining_s\t"
         "inference_s\tacquisition_s\toverall_s\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.name << "\t" << r.method << "\t" << r.recall << "\t" << r.best
        << "\t" << r.calls << "\t" << r.timings.scoring << "\t"
        << r.timings.training << "\t" << r.timings.inference << "\t"
        << r.timings.acquisition << "\t" << r.timings.overall() << "\n";
  }

  std::map<std::string, std::vector<const Row*>> by_method;
  for (const auto& r : rows) by_method[r.method].push_back(&r);
  out << "\nmethod\ttrials\trecall_mean\trecall_std\tbest_mean\t"
         "overall_mean_s\toverall_std_s\n";
  for (const auto& [method, group] : by_method) {
    std::vector<PhaseTotals> totals;
    double recall_sum = 0, recall_sq = 0, best_sum = 0;
    std::uint64_t recall_n = 0;
    for (const Row* r : group) {
      totals.push_back(r->timings);
      best_sum += r->best;
      if (r->recall >= 0) {
        recall_sum += r->recall;
        recall_sq += r->recall * r->recall;
        ++recall_n;
      }
    }
    const TimingRollup rollup = timing_rollup(totals);
    double rmean = -1, rstd = 0;
    if (recall_n > 0) {
      rmean = recall_sum / static_cast<double>(recall_n);
      const double var = recall_sq / static_cast<double>(recall_n) -
                         rmean * rmean;
      rstd = var > 0 ? std::sqrt(var) : 0;
    }
    out << method << "\t" << group.size() << "\t" << rmean << "\t" << rstd
        << "\t" << best_sum / static_cast<double>(group.size()) << "\t"
        << rollup.overall.mean << "\t" << rollup.overall.stddev << "\n";
  }

  if (out_file.empty()) {
    std::fputs(out.str().c_str(), stdout);
  } else {
    std::ofstream f(out_file);
    if (!f) throw IoError("cannot write '" + out_file + "'");
    f << out.str();
    if (!f) throw IoError("write failed for '" + out_file + "'");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "salsa — pool-based active learning over factored product spaces"};
  app.require_subcommand(1);
  app.footer(kExitFooter);

  // run
  ConfigArgs run_args;
  std::uint64_t trials = 1;
  std::string out_dir, resume, method, strategy, scorer_cmd;
  std::uint64_t seed_flag = 0;
  bool seed_set = false;
  auto* run = app.add_subcommand("run", "execute an active-learning run");
  add_config_options(run, run_args);
  run->add_option("--trials", trials, "consecutive seeds to run (default 1)");
  run->add_option("--seed", seed_flag, "base trial seed")
      ->each([&](const std::string&) { seed_set = true; });
  run->add_option("--method", method, "salsa | random | tabular-ts | pool-al");
  run->add_option("--strategy", strategy,
                  "ts | ts-oneshot | greedy | eps-greedy | ucb | ei | pi");
  run->add_option("--scorer-cmd", scorer_cmd,
                  "external scorer command (shell line)");
  run->add_option("-o,--out", out_dir, "output directory root");
  run->add_option("--resume", resume, "checkpoint JSON to resume from");
  run->footer(kExitFooter);

  // gen-space
  ConfigArgs gen_args;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen-space",
                                 "write synthon pool files for a space");
  add_config_options(gen, gen_args);
  gen->add_option("-o,--out", gen_out, "output directory");
  gen->footer(kExitFooter);

  // ground-truth
  ConfigArgs gt_args;
  std::uint64_t gt_k = 0;
  std::string gt_out;
  auto* gt = app.add_subcommand(
      "ground-truth", "brute-force the top-k of an enumerable space");
  add_config_options(gt, gt_args);
  gt->add_option("-k,--top-k", gt_k, "how many top candidates (default 100)");
  gt->add_option("-o,--out", gt_out, "output file (default stdout)");
  gt->footer(kExitFooter);

  // sweep
  std::vector<std::string> sweep_configs, sweep_overrides;
  std::uint64_t sweep_trials = 1;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string sweep_out;
  auto* sweep = app.add_subcommand(
      "sweep", "run several configs across a worker pool");
  sweep->add_option("configs", sweep_configs, "two or more config files");
  sweep->add_option("--set", sweep_overrides,
                    "override applied to every config")
      ->type_name("KEY=VALUE");
  sweep->add_option("--trials", sweep_trials, "seeds per config (default 1)");
  sweep->add_option("--jobs", jobs, "worker pool size");
  sweep->add_option("-o,--out", sweep_out, "sweep output root");
  sweep->footer(kExitFooter);

  // summarize
  std::string sum_dir, sum_out;
  auto* summarize = app.add_subcommand(
      "summarize", "aggregate a directory of trial outputs");
  summarize->add_option("dir", sum_dir, "directory holding trial subdirs")
      ->required();
  summarize->add_option("-o,--out", sum_out, "output file (default stdout)");
  summarize->footer(kExitFooter);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (run->parsed()) {
      if (seed_set) {
        run_args.overrides.push_back("seed=" + std::to_string(seed_flag));
      }
      if (!method.empty()) run_args.overrides.push_back("method=" + method);
      if (!strategy.empty()) {
        run_args.overrides.push_back("strategy.kind=" + strategy);
      }
      if (!scorer_cmd.empty()) {
        run_args.overrides.push_back("objective.kind=external");
        run_args.overrides.push_back("objective.command=" + scorer_cmd);
      }
      return cmd_run(run_args, trials, out_dir, resume);
    }
    if (gen->parsed()) return cmd_gen_space(gen_args, gen_out);
    if (gt->parsed()) return cmd_ground_truth(gt_args, gt_k, gt_out);
    if (sweep->parsed()) {
      return cmd_sweep(sweep_configs, sweep_overrides, sweep_trials, jobs,
                       sweep_out);
    }
    if (summarize->parsed()) return cmd_summarize(sum_dir, sum_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitConfig;
}
