// Benchmark runner.  `run` executes paired seeded repeats of the partitioned
// optimizer and/or the standard baseline and writes plot-ready CSV files.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "treebo/harness.hpp"

namespace {

std::string default_out_root() {
  if (const char* env = std::getenv("TREEBO_OUT_ROOT")) return env;
  return "runs";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree-partitioned Bayesian optimization benchmark harness"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run a benchmark suite");
  std::string preset_name;
  std::string objective;
  int dim = 0, n_init = 0, n_node = 0, n_total = 0;
  std::string method = "both";
  int repeats = 10;
  std::uint64_t seed = 0;
  std::string kernel = "powexp";
  std::string out_dir;
  int workers = 1;
  std::string external_cmd;
  double external_timeout = 300.0;

  run->add_option("--preset", preset_name, "Named configuration (ackley6, hartmann6, rastrigin6, "
                                           "schwefel6, levy10, michalewicz10, automotive124)");
  run->add_option("--objective", objective, "Objective name (explicit configuration)");
  run->add_option("--dim", dim, "Objective dimension");
  run->add_option("--n-init", n_init, "Initial design size");
  run->add_option("--n-node", n_node, "Leaf split threshold / fixed GP training size");
  run->add_option("--n-total", n_total, "Total observation budget");
  run->add_option("--method", method, "treebo | standard | both")
      ->check(CLI::IsMember({"treebo", "standard", "both"}));
  run->add_option("--repeats", repeats, "Paired repeats");
  run->add_option("--seed", seed, "Base seed (repeat r uses seed + r)");
  run->add_option("--kernel", kernel, "powexp | matern52")
      ->check(CLI::IsMember({"powexp", "matern52"}));
  run->add_option("--out", out_dir, "Output directory (default <TREEBO_OUT_ROOT>/<suite>)");
  run->add_option("--workers", workers, "Concurrent repeat workers");
  run->add_option("--external-cmd", external_cmd,
                  "External evaluator command (line protocol on stdin/stdout)");
  run->add_option("--external-timeout", external_timeout,
                  "External evaluator timeout in seconds");

  CLI11_PARSE(app, argc, argv);

  try {
    treebo::SuiteConfig cfg;
    std::string suite_name;
    if (!preset_name.empty()) {
      const auto& table = treebo::presets();
      auto it = table.find(preset_name);
      if (it == table.end()) {
        std::cerr << "unknown preset '" << preset_name << "'\n";
        return 2;
      }
      cfg.preset = it->second;
      suite_name = preset_name;
    } else {
      if (objective.empty() || dim <= 0 || n_init <= 0 || n_node <= 0 || n_total <= 0) {
        std::cerr << "either --preset or all of --objective/--dim/--n-init/--n-node/--n-total "
                     "are required\n";
        return 2;
      }
      cfg.preset.objective = objective;
      cfg.preset.dim = dim;
      cfg.preset.n_init = n_init;
      cfg.preset.n_node = n_node;
      cfg.preset.n_total = n_total;
      cfg.preset.external = objective == "external" || objective == "automotive";
      suite_name = objective + std::to_string(dim);
    }
    if (run->count("--kernel"))
      cfg.preset.kernel = kernel == "matern52" ? treebo::KernelFamily::Matern52
                                               : treebo::KernelFamily::PowerExponential;
    cfg.repeats = repeats;
    cfg.base_seed = seed;
    cfg.with_treebo = method != "standard";
    cfg.with_standard = method != "treebo";
    cfg.workers = workers;
    cfg.external_cmd = external_cmd;
    cfg.external_timeout = external_timeout;
    cfg.out_dir = out_dir.empty()
                      ? default_out_root() + "/" + suite_name + "_seed" + std::to_string(seed)
                      : out_dir;

    const auto result = treebo::run_suite(cfg);
    treebo::write_suite_csv(result, cfg.out_dir);

    int completed = 0;
    for (const auto& r : result.runs) {
      if (r.record.completed) {
        ++completed;
      } else {
        std::cerr << "run failed (repeat " << r.repeat << ", "
                  << treebo::method_name(r.record.cfg.method) << "): " << r.record.error << "\n";
      }
    }
    for (const auto& row : treebo::summarize(result)) {
      if (row.kind == "final")
        std::cout << row.method << " final best: mean " << row.mean << ", median " << row.median
                  << ", q25 " << row.q25 << ", q75 " << row.q75 << "\n";
    }
    std::cout << completed << "/" << result.runs.size() << " runs completed; results in "
              << cfg.out_dir << "\n";
    return result.all_completed() ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
