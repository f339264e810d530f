#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "treebo/drivers.hpp"
#include "treebo/external.hpp"
#include "treebo/sampling.hpp"

namespace treebo {

/// Latin hypercube design on the unit cube.
struct LhsDesign {
  Matrix points;  // n x d
  int n() const { return static_cast<int>(points.rows()); }
  int d() const { return static_cast<int>(points.cols()); }
};

inline LhsDesign lhs(int n, int d, RngStream& rng) { return LhsDesign{lhs_unit(n, d, rng)}; }

struct Preset {
  std::string objective;
  int dim = 0;
  int n_init = 0;
  int n_node = 0;
  int n_total = 0;
  KernelFamily kernel = KernelFamily::PowerExponential;
  bool external = false;  // requires an external evaluator command
};

/// Benchmark configurations.  n_total = n_init plus the subsequent-observation
/// budget; the high-dimensional automotive preset needs an external evaluator.
inline const std::map<std::string, Preset>& presets() {
  static const std::map<std::string, Preset> table = {
      {"ackley6", {"ackley", 6, 60, 100, 200, KernelFamily::PowerExponential, false}},
      {"hartmann6", {"hartmann6", 6, 60, 100, 200, KernelFamily::PowerExponential, false}},
      {"rastrigin6", {"rastrigin", 6, 60, 300, 400, KernelFamily::PowerExponential, false}},
      {"schwefel6", {"schwefel", 6, 60, 300, 400, KernelFamily::Matern52, false}},
      {"levy10", {"levy", 10, 100, 350, 450, KernelFamily::PowerExponential, false}},
      {"michalewicz10", {"michalewicz", 10, 100, 350, 450, KernelFamily::PowerExponential, false}},
      {"automotive124", {"automotive", 124, 125, 375, 600, KernelFamily::PowerExponential, true}},
  };
  return table;
}

struct SuiteConfig {
  Preset preset;
  int repeats = 10;
  std::uint64_t base_seed = 0;
  bool with_treebo = true;
  bool with_standard = true;
  int workers = 1;
  std::string external_cmd;  // used when preset.external
  double external_timeout = 300.0;
  std::string out_dir;  // empty: no files written
};

struct SuiteRun {
  int repeat = 0;
  std::uint64_t seed = 0;
  RunRecord record;
};

struct BenchmarkSuiteResult {
  SuiteConfig cfg;
  std::vector<SuiteRun> runs;  // repeat-major, treebo before standard
  std::vector<int> checkpoints;

  bool all_completed() const {
    for (const auto& r : runs)
      if (!r.record.completed) return false;
    return !runs.empty();
  }
};

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Checkpoint iterations: 0 plus 7 evenly spaced points ending at the
// subsequent-observation budget.
inline std::vector<int> checkpoint_iters(int budget) {
  std::vector<int> out;
  for (int j = 0; j <= 7; ++j) {
    const int c = static_cast<int>(std::llround(static_cast<double>(j) * budget / 7.0));
    if (out.empty() || c != out.back()) out.push_back(c);
  }
  return out;
}

inline double best_at_checkpoint(const RunRecord& r, int c) {
  if (c <= 0) return r.init_best;
  const std::size_t idx = static_cast<std::size_t>(c) - 1;
  if (idx >= r.rows.size()) return std::numeric_limits<double>::quiet_NaN();
  return r.rows[idx].best_so_far;
}

// Quartiles with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = q * (static_cast<double>(v.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(h);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline Objective make_suite_objective(const SuiteConfig& cfg) {
  if (cfg.preset.external) {
    if (cfg.external_cmd.empty())
      throw ArgumentError("preset '" + cfg.preset.objective + "' needs --external-cmd");
    return external_objective(cfg.external_cmd, Domain::unit(cfg.preset.dim),
                              cfg.external_timeout);
  }
  return make_objective(cfg.preset.objective, cfg.preset.dim);
}

}  // namespace detail

/// Runs paired seeded repeats: repeat r uses seed base_seed + r and one LHS
/// initial design shared by both methods.  Repeats may run on several worker
/// threads; results are merged in repeat order so output is independent of
/// the worker count.  Individual run failures are recorded and the suite
/// continues.
inline BenchmarkSuiteResult run_suite(const SuiteConfig& cfg) {
  BenchmarkSuiteResult result;
  result.cfg = cfg;
  result.checkpoints = detail::checkpoint_iters(cfg.preset.n_total - cfg.preset.n_init);

  std::vector<Method> methods;
  if (cfg.with_treebo) methods.push_back(Method::TreeBo);
  if (cfg.with_standard) methods.push_back(Method::Standard);
  if (methods.empty()) throw ArgumentError("run_suite: no method enabled");

  std::vector<std::vector<SuiteRun>> per_repeat(static_cast<std::size_t>(cfg.repeats));
  auto run_repeat = [&](int r) {
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(r);
    RngStream init_rng = substream(seed, "init-design");
    const Matrix init = lhs_unit(cfg.preset.n_init, cfg.preset.dim, init_rng);
    for (Method m : methods) {
      RunConfig rc;
      rc.method = m;
      rc.objective = cfg.preset.objective;
      rc.dim = cfg.preset.dim;
      rc.n_init = cfg.preset.n_init;
      rc.n_node = cfg.preset.n_node;
      rc.n_total = cfg.preset.n_total;
      rc.kernel = cfg.preset.kernel;
      rc.seed = seed;
      SuiteRun run;
      run.repeat = r;
      run.seed = seed;
      try {
        const Objective obj = detail::make_suite_objective(cfg);
        run.record = run_method(rc, obj, init);
      } catch (const std::exception& e) {
        run.record.cfg = rc;
        run.record.completed = false;
        run.record.error = e.what();
      }
      per_repeat[static_cast<std::size_t>(r)].push_back(std::move(run));
    }
  };

  const int workers = std::max(1, std::min(cfg.workers, cfg.repeats));
  if (workers == 1) {
    for (int r = 0; r < cfg.repeats; ++r) run_repeat(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < cfg.repeats; r = next.fetch_add(1)) run_repeat(r);
      });
    for (auto& t : pool) t.join();
  }

  for (auto& reps : per_repeat)
    for (auto& run : reps) result.runs.push_back(std::move(run));
  return result;
}

// ---------------------------------------------------------------------------
// Persistence and summaries
// ---------------------------------------------------------------------------

struct SummaryRow {
  std::string kind;    // "checkpoint", "final" or "pair_delta"
  std::string method;  // empty for pair_delta
  int checkpoint = -1;
  int repeat = -1;
  std::uint64_t seed = 0;
  double mean = 0.0, median = 0.0, q25 = 0.0, q75 = 0.0;
  double value = 0.0;  // pair_delta only: treebo final minus standard final
};

/// Per-method checkpoint quartiles, final statistics, and per-pair deltas
/// (negative deltas mean the partitioned method finished lower).
inline std::vector<SummaryRow> summarize(const BenchmarkSuiteResult& suite) {
  std::vector<SummaryRow> rows;
  for (Method m : {Method::TreeBo, Method::Standard}) {
    std::vector<const RunRecord*> records;
    for (const auto& run : suite.runs)
      if (run.record.cfg.method == m && run.record.completed) records.push_back(&run.record);
    if (records.empty()) continue;

    for (int c : suite.checkpoints) {
      std::vector<double> vals;
      for (const auto* r : records) vals.push_back(detail::best_at_checkpoint(*r, c));
      SummaryRow row;
      row.kind = "checkpoint";
      row.method = method_name(m);
      row.checkpoint = c;
      row.mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
      row.median = detail::quantile(vals, 0.5);
      row.q25 = detail::quantile(vals, 0.25);
      row.q75 = detail::quantile(vals, 0.75);
      rows.push_back(row);
    }

    std::vector<double> finals;
    for (const auto* r : records) finals.push_back(r->final_best());
    SummaryRow fin;
    fin.kind = "final";
    fin.method = method_name(m);
    fin.mean =
        std::accumulate(finals.begin(), finals.end(), 0.0) / static_cast<double>(finals.size());
    fin.median = detail::quantile(finals, 0.5);
    fin.q25 = detail::quantile(finals, 0.25);
    fin.q75 = detail::quantile(finals, 0.75);
    rows.push_back(fin);
  }

  // Pair deltas over repeats where both methods completed.
  std::map<int, std::pair<const SuiteRun*, const SuiteRun*>> pairs;
  for (const auto& run : suite.runs) {
    if (!run.record.completed) continue;
    if (run.record.cfg.method == Method::TreeBo)
      pairs[run.repeat].first = &run;
    else
      pairs[run.repeat].second = &run;
  }
  for (const auto& [repeat, pr] : pairs) {
    if (pr.first == nullptr || pr.second == nullptr) continue;
    SummaryRow row;
    row.kind = "pair_delta";
    row.repeat = repeat;
    row.seed = pr.first->seed;
    row.value = pr.first->record.final_best() - pr.second->record.final_best();
    rows.push_back(row);
  }
  return rows;
}

/// Writes observations.csv, points.csv, summary.csv and timings.csv into the
/// suite directory.  Wall times live in their own file so the other three are
/// byte-reproducible for a fixed base seed.
inline void write_suite_csv(const BenchmarkSuiteResult& suite, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::ofstream obs(fs::path(dir) / "observations.csv");
  std::ofstream pts(fs::path(dir) / "points.csv");
  std::ofstream tim(fs::path(dir) / "timings.csv");
  obs << "run_id,method,objective,dim,seed,iter,best_so_far,f,leaf_path,gp_train_size\n";
  tim << "run_id,iter,wall_ms\n";
  const int dim = suite.cfg.preset.dim;
  pts << "run_id,iter";
  for (int j = 1; j <= dim; ++j) pts << ",x" << j;
  pts << "\n";

  int run_id = 0;
  for (const auto& run : suite.runs) {
    const auto& rec = run.record;
    for (const auto& row : rec.rows) {
      obs << run_id << ',' << method_name(rec.cfg.method) << ',' << rec.cfg.objective << ','
          << rec.cfg.dim << ',' << run.seed << ',' << row.iter << ','
          << detail::fmt_double(row.best_so_far) << ',' << detail::fmt_double(row.f) << ','
          << row.leaf_path << ',' << row.gp_train_size << "\n";
      pts << run_id << ',' << row.iter;
      for (Eigen::Index j = 0; j < row.x_native.size(); ++j)
        pts << ',' << detail::fmt_double(row.x_native[j]);
      pts << "\n";
      tim << run_id << ',' << row.iter << ',' << detail::fmt_double(row.wall_ms) << "\n";
    }
    ++run_id;
  }

  std::ofstream sum(fs::path(dir) / "summary.csv");
  sum << "kind,method,checkpoint,repeat,seed,mean,median,q25,q75,value\n";
  for (const auto& row : summarize(suite)) {
    sum << row.kind << ',' << row.method << ',';
    if (row.checkpoint >= 0) sum << row.checkpoint;
    sum << ',';
    if (row.repeat >= 0) sum << row.repeat;
    sum << ',';
    if (row.kind == "pair_delta") sum << row.seed;
    sum << ',';
    if (row.kind != "pair_delta")
      sum << detail::fmt_double(row.mean) << ',' << detail::fmt_double(row.median) << ','
          << detail::fmt_double(row.q25) << ',' << detail::fmt_double(row.q75) << ',';
    else
      sum << ",,,," << detail::fmt_double(row.value);
    sum << "\n";
  }

  std::ofstream trees(fs::path(dir) / "trees.txt");
  run_id = 0;
  for (const auto& run : suite.runs) {
    if (!run.record.tree_snapshot.empty()) {
      trees << "# run " << run_id << " (" << method_name(run.record.cfg.method) << ", seed "
            << run.seed << ")\n"
            << run.record.tree_snapshot;
    }
    ++run_id;
  }
}

}  // namespace treebo
