#include "bilevel_lb/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bilevel_lb/bench.hpp"
#include "bilevel_lb/instance.hpp"
#include "bilevel_lb/parallel.hpp"
#include "bilevel_lb/report_io.hpp"
#include "bilevel_lb/verifier.hpp"

namespace bilevel_lb {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Config {
  double L_f = 1.0;
  double L_g = 100.0;
  double mu = 1.0;
  double Delta = 1.0;
  double eps = 0.1;
  double sigma = 0.0;
  std::string mode = "det";
  std::uint64_t seed = 0;
  std::size_t budget = 0;
  std::vector<std::string> grid;
  std::string out;
  std::string format = "json";
  std::vector<std::string> algs;
  std::size_t seeds = 1;
  std::string log;
};

void add_common(CLI::App* cmd, Config& cfg) {
  cmd->add_option("--Lf", cfg.L_f, "smoothness of f")->capture_default_str();
  cmd->add_option("--Lg", cfg.L_g, "smoothness of g")->capture_default_str();
  cmd->add_option("--mu", cfg.mu, "strong convexity of g")->capture_default_str();
  cmd->add_option("--Delta", cfg.Delta, "initial hyper-objective gap")->capture_default_str();
  cmd->add_option("--eps", cfg.eps, "target stationarity")->capture_default_str();
  cmd->add_option("--sigma", cfg.sigma, "oracle standard deviation (stoc mode)")->capture_default_str();
  cmd->add_option("--mode", cfg.mode, "det or stoc")
      ->check(CLI::IsMember({"det", "deterministic", "stoc", "stochastic"}))
      ->capture_default_str();
  cmd->add_option("--seed", cfg.seed, "run seed")->capture_default_str();
  cmd->add_option("--out", cfg.out, "output path (written atomically); stdout when empty");
}

FunctionClassParams fc_of(const Config& cfg) {
  FunctionClassParams fc;
  fc.L_f = cfg.L_f;
  fc.L_g = cfg.L_g;
  fc.mu = cfg.mu;
  fc.Delta = cfg.Delta;
  fc.eps = cfg.eps;
  fc.sigma = cfg.sigma;
  return fc;
}

Mode mode_of(const Config& cfg) {
  const Mode m = parse_mode(cfg.mode);
  if (m == Mode::deterministic && cfg.sigma != 0.0) {
    throw UsageError("--sigma only applies to --mode stoc");
  }
  return m;
}

// "axis=v1,v2,..." entries; axes kappa, eps, sigma.
std::map<std::string, std::vector<double>> parse_grid(const std::vector<std::string>& specs) {
  std::map<std::string, std::vector<double>> grid;
  for (const auto& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw UsageError("grid entry must look like axis=v1,v2: " + spec);
    const std::string axis = spec.substr(0, eq);
    if (axis != "kappa" && axis != "eps" && axis != "sigma") throw UsageError("unknown grid axis: " + axis);
    std::vector<double> values;
    std::stringstream ss(spec.substr(eq + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw UsageError("bad grid value '" + item + "' for axis " + axis);
      }
    }
    if (values.empty()) throw UsageError("empty grid axis: " + axis);
    grid[axis] = values;
  }
  return grid;
}

struct Cell {
  FunctionClassParams fc;
  Mode mode;
};

std::vector<Cell> expand(const Config& cfg, Mode mode, const std::map<std::string, std::vector<double>>& grid) {
  const FunctionClassParams base = fc_of(cfg);
  auto axis = [&](const char* name, double fallback) {
    auto it = grid.find(name);
    return it == grid.end() ? std::vector<double>{fallback} : it->second;
  };
  const auto kappas = axis("kappa", base.kappa());
  const auto epss = axis("eps", base.eps);
  const auto sigmas = axis("sigma", base.sigma);
  if (mode == Mode::deterministic && grid.count("sigma")) throw UsageError("sigma grid needs --mode stoc");
  std::vector<Cell> cells;
  for (double k : kappas) {
    for (double e : epss) {
      for (double s : sigmas) {
        FunctionClassParams fc = base;
        fc.L_g = k * base.mu;
        fc.eps = e;
        fc.sigma = s;
        cells.push_back({fc, mode});
      }
    }
  }
  return cells;
}

void emit(const Config& cfg, const std::string& content, std::ostream& out) {
  if (cfg.out.empty()) {
    out << content;
  } else {
    write_file_atomic(cfg.out, content);
  }
}

std::vector<std::string> default_verify_grid(Mode mode) {
  std::vector<std::string> g = {"kappa=25,100,400", "eps=0.2,0.1,0.05"};
  if (mode == Mode::stochastic) g.push_back("sigma=0.5,1");
  return g;
}

int cmd_params(const Config& cfg, std::ostream& out) {
  const Mode mode = mode_of(cfg);
  const FunctionClassParams fc = fc_of(cfg);
  const DerivedInstanceParams p = derive_params(fc, mode);
  emit(cfg, dump({{"fc", to_json(fc)}, {"derived", to_json(p)}}), out);
  return kExitOk;
}

int cmd_verify(const Config& cfg, std::ostream& out) {
  const Mode mode = mode_of(cfg);
  if (cfg.grid.empty()) {
    const FunctionClassParams fc = fc_of(cfg);
    derive_params(fc, mode);  // usage errors surface before any check runs
    const auto results = run_suite(fc, mode, cfg.seed);
    emit(cfg, suite_report_json(fc, mode, results), out);
    return all_pass(results) ? kExitOk : kExitCheckFailure;
  }
  std::vector<std::string> specs = cfg.grid;
  if (specs.size() == 1 && specs[0] == "default") specs = default_verify_grid(mode);
  const auto cells = expand(cfg, mode, parse_grid(specs));
  for (const auto& c : cells) derive_params(c.fc, c.mode);
  nlohmann::json reports = nlohmann::json::array();
  bool ok = true;
  for (const auto& c : cells) {
    const auto results = run_suite(c.fc, c.mode, cfg.seed);
    ok = ok && all_pass(results);
    reports.push_back(nlohmann::json::parse(suite_report_json(c.fc, c.mode, results)));
  }
  emit(cfg, dump({{"suite_version", kSuiteVersion}, {"reports", reports}}), out);
  return ok ? kExitOk : kExitCheckFailure;
}

int cmd_trace(const Config& cfg, std::ostream& out) {
  const Mode mode = mode_of(cfg);
  const DerivedInstanceParams p = derive_params(fc_of(cfg), mode);
  std::size_t budget = cfg.budget;
  if (budget == 0) {
    budget = static_cast<std::size_t>(
        std::min(5e6, static_cast<double>(p.chain_length() + 2 * p.n + 4) * std::ceil(4.0 / p.p)));
  }
  const ChainTrace ct = chain_trace(p, cfg.seed, budget);
  nlohmann::json delays = nlohmann::json::array();
  for (const auto& d : ct.delays) {
    delays.push_back({{"flat_index", d.flat_index}, {"query_index", d.query_index}, {"delay", d.delay}});
  }
  auto opt = [](const std::optional<std::size_t>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j = {{"derived", to_json(p)},
                      {"seed", cfg.seed},
                      {"budget", budget},
                      {"oracle_calls", ct.trace.oracle_calls},
                      {"reached_eps_at", opt(ct.trace.reached_eps_at)},
                      {"x1_active_at", opt(ct.x1_active_at)},
                      {"xT_active_at", opt(ct.xT_active_at)},
                      {"y_2n_active_at", opt(ct.y_2n_active_at)},
                      {"violation", ct.violation ? nlohmann::json(*ct.violation) : nlohmann::json(nullptr)},
                      {"activation_delays", delays}};
  if (!cfg.log.empty()) write_file_atomic(cfg.log, activation_jsonl(ct.trace.activations, cfg.seed));
  emit(cfg, dump(j), out);
  return ct.violation ? kExitCheckFailure : kExitOk;
}

int cmd_bench(const Config& cfg, std::ostream& out, std::ostream& err) {
  const Mode mode = mode_of(cfg);
  if (cfg.format != "json" && cfg.format != "csv") throw UsageError("--format must be json or csv");
  std::vector<Algorithm> algs;
  for (const auto& a : cfg.algs) {
    if (a == "all") {
      algs = all_algorithms();
      break;
    }
    try {
      algs.push_back(parse_algorithm(a));
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (algs.empty()) algs.push_back(Algorithm::greedy_prober);
  const auto grid = parse_grid(cfg.grid);
  const auto cells = expand(cfg, mode, grid);
  std::vector<DerivedInstanceParams> derived;
  for (const auto& c : cells) derived.push_back(derive_params(c.fc, c.mode));

  struct Job {
    Algorithm alg;
    std::size_t cell;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Algorithm a : algs) {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      for (std::size_t s = 0; s < cfg.seeds; ++s) jobs.push_back({a, c, cfg.seed + s});
    }
  }
  std::vector<RunTrace> traces(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    const auto& P = derived[jobs[i].cell];
    std::size_t budget = cfg.budget;
    if (budget == 0) budget = static_cast<std::size_t>(std::ceil(4.0 / P.p)) * (P.chain_length() + 2 * P.n + 4);
    RunOptions opt;
    opt.keep_activations = false;
    traces[i] = run_algorithm(AlgorithmSpec::defaults(jobs[i].alg), P, jobs[i].seed, budget, opt);
  });

  std::vector<ScalingFitResult> fits;
  for (Algorithm a : algs) {
    for (ScalingAxis axis : {ScalingAxis::kappa, ScalingAxis::eps}) {
      const char* name = to_string(axis);
      if (!grid.count(name) || grid.at(name).size() < 2) continue;
      // Mean oracle calls over seeds for each axis value.
      std::map<double, std::pair<double, std::size_t>> acc;
      std::map<double, bool> reached;
      for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (jobs[i].alg != a) continue;
        const auto& fc = cells[jobs[i].cell].fc;
        const double v = axis == ScalingAxis::kappa ? fc.kappa() : fc.eps;
        auto& slot = acc[v];
        slot.first += static_cast<double>(traces[i].oracle_calls);
        slot.second += 1;
        const bool r = traces[i].reached_eps_at.has_value();
        reached[v] = reached.count(v) ? (reached[v] && r) : r;
      }
      std::vector<ScalingPoint> pts;
      for (const auto& [v, s] : acc) pts.push_back({v, s.first / static_cast<double>(s.second), reached[v]});
      try {
        fits.push_back(fit_scaling(axis, pts));
      } catch (const std::invalid_argument& e) {
        err << "warning: " << to_string(a) << " " << name << " fit skipped: " << e.what() << "\n";
      }
    }
  }
  for (const auto& f : fits) {
    err << "fit " << to_string(f.axis) << ": exponent " << f.exponent << ", r^2 " << f.r_squared << "\n";
  }
  const BenchReport rep = report(traces, fits);
  emit(cfg, cfg.format == "csv" ? rep.csv : rep.json, out);
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hard-instance construction, verification and benchmarks for first-order bilevel lower bounds",
               "bilevel-lb"};
  app.require_subcommand(1);
  Config cfg;

  CLI::App* params = app.add_subcommand("params", "derive and print the instance parameters");
  add_common(params, cfg);

  CLI::App* verify = app.add_subcommand("verify", "run the certification suite; exit 1 if any check fails");
  add_common(verify, cfg);
  verify->add_option("--grid", cfg.grid, "axis=v1,v2 entries (kappa, eps, sigma) or 'default'");

  CLI::App* trace = app.add_subcommand("trace", "run the greedy prober and check the chain relations");
  add_common(trace, cfg);
  trace->add_option("--budget", cfg.budget, "query budget (0: automatic)")->capture_default_str();
  trace->add_option("--log", cfg.log, "JSON-lines activation log path");

  CLI::App* bench = app.add_subcommand("bench", "benchmark reference algorithms over a grid");
  add_common(bench, cfg);
  bench->add_option("--grid", cfg.grid, "axis=v1,v2 entries (kappa, eps, sigma)");
  bench->add_option("--alg", cfg.algs, "algorithm name(s) or 'all' (default greedy_prober)")->delimiter(',');
  bench->add_option("--seeds", cfg.seeds, "number of consecutive seeds per cell")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  bench->add_option("--budget", cfg.budget, "oracle-call budget per run (0: automatic)")->capture_default_str();
  bench->add_option("--format", cfg.format, "json or csv")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  // Subcommand help requests are routed through CallForHelp above; here
  // exactly one subcommand was parsed.
  try {
    if (params->parsed()) return cmd_params(cfg, out);
    if (verify->parsed()) return cmd_verify(cfg, out);
    if (trace->parsed()) return cmd_trace(cfg, out);
    return cmd_bench(cfg, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace bilevel_lb
