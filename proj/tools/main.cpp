#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fedbcs/checkpoint.hpp"
#include "fedbcs/config.hpp"
#include "fedbcs/errors.hpp"
#include "fedbcs/federation.hpp"
#include "fedbcs/gradcheck.hpp"
#include "fedbcs/metrics.hpp"
#include "fedbcs/server.hpp"
#include "fedbcs/synthdata.hpp"
#include "fedbcs/theory.hpp"

namespace {

using namespace fedbcs;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitRegime = 4;

struct RunOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> rounds;
  std::optional<std::string> method;
  std::optional<std::string> out;
  std::optional<std::size_t> parallel;
  std::optional<bool> checked;
};

int cmd_run(const RunOptions& opt) {
  RunConfig cfg = opt.config_path.empty() ? RunConfig{} : load_config(opt.config_path);
  if (opt.seed) cfg.federation.seed = *opt.seed;
  if (opt.rounds) cfg.federation.rounds = *opt.rounds;
  if (opt.method) cfg.federation.method = parse_method(*opt.method);
  if (opt.out) cfg.out_dir = *opt.out;
  if (const char* env = std::getenv("FEDBCS_OUT"); env != nullptr && *env != '\0') cfg.out_dir = env;
  if (opt.parallel) cfg.federation.parallelism = *opt.parallel;
  if (opt.checked) cfg.checked = *opt.checked;
  cfg.federation.validate();

  set_checked_mode(cfg.checked);
  const std::filesystem::path out = cfg.out_dir;
  std::filesystem::create_directories(out);
  {
    std::ofstream resolved(out / "config.ini");
    resolved << serialize_config(cfg);
  }

  const auto styles = default_styles(cfg.federation.clients);
  const auto data = make_federation_data(cfg.federation.clients, styles, cfg.data, cfg.federation.seed);
  if (cfg.dump_data) dump_dataset(out / "data", data, cfg.federation.seed);

  MetricsWriter metrics(out, data.size());
  auto result = run_experiment(cfg.federation, data, [&](const RoundReport& r, const NamedTensors&) {
    metrics.write(r);
    std::cerr << "round " << r.round << " uploads " << r.total_uploads;
    if (r.evaluated) std::cerr << " avg dice " << r.avg_dice;
    std::cerr << '\n';
  });
  write_checkpoint(out / "final.fbcs", result.final_params);

  const RoundReport& last = result.reports.back();
  std::cout << format_dice_table({{to_string(cfg.federation.method), last.domain_dice, last.avg_dice}});
  if (result.descent) {
    std::cout << "descent check satisfied in " << result.descent->fraction * 100 << "% of rounds (L_sm "
              << result.theory->smoothness << ", sigma^2 " << result.theory->grad_variance << ", G "
              << result.theory->prototype_bound << ")\n";
  }
  std::cout << "outputs written to " << out.string() << '\n';
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed) {
  CheckedModeScope checked(true);
  bool ok = true;
  for (const auto& e : gradcheck_suite(seed)) {
    std::cout << (e.passed() ? "PASS " : "FAIL ") << e.name << "  max rel err " << e.result.max_relative_error
              << " (" << e.result.worst_parameter << ", step " << e.step << ")\n";
    ok = ok && e.passed();
  }
  return ok ? kExitOk : kExitNumerical;
}

std::vector<Tensor> read_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read points file " + path);
  std::vector<Tensor> points;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    for (char& ch : line) {
      if (ch == ',') ch = ' ';
    }
    std::istringstream row(line);
    std::vector<Real> values;
    double v;
    while (row >> v) values.push_back(static_cast<Real>(v));
    if (!row.eof()) throw ConfigError(path + ": line " + std::to_string(line_no) + ": not a number");
    if (!points.empty() && values.size() != points.front().size()) {
      throw ConfigError(path + ": line " + std::to_string(line_no) + ": dimension differs from first point");
    }
    points.push_back(Tensor::vector(std::move(values)));
  }
  if (points.empty()) throw ConfigError(path + ": no points");
  return points;
}

int cmd_finch(const std::string& path, const std::string& distance, std::size_t depth) {
  const auto points = read_points(path);
  DistanceKind kind;
  if (distance == "cosine") {
    kind = DistanceKind::kCosine;
  } else if (distance == "euclidean") {
    kind = DistanceKind::kEuclidean;
  } else {
    throw ConfigError("unknown distance '" + distance + "'");
  }
  const auto levels = finch_hierarchy(points, depth, kind);
  for (std::size_t l = 0; l < levels.size(); ++l) {
    std::cout << "level " << l + 1 << ": " << levels[l].size() << " clusters\n";
    for (const auto& cluster : levels[l]) {
      std::cout << " ";
      for (auto i : cluster) std::cout << ' ' << i;
      std::cout << '\n';
    }
  }
  return kExitOk;
}

struct BoundsOptions {
  TheoryParams theory;
  std::optional<Real> grad_sum;
};

int cmd_bounds(const BoundsOptions& opt) {
  const TheoryParams& t = opt.theory;
  std::cout.precision(8);
  int status = kExitOk;
  if (opt.grad_sum) {
    const auto lr = lr_upper_bound(t, *opt.grad_sum);
    std::cout << "eta_max = " << lr.eta_max << '\n';
    std::cout << "lambda_c_max (per round) = " << lambda_upper_bound(t, *opt.grad_sum) << '\n';
    if (lr.lambda_too_large) {
      std::cout << lr.diagnostic << '\n';
      status = kExitRegime;
    }
  }
  if (t.target_eps > 0) {
    if (t.prototype_bound > 0) std::cout << "lambda_c_max (epsilon) = " << lambda_upper_bound_eps(t) << '\n';
    std::cout << "eta_max (epsilon) = " << lr_upper_bound_eps(t) << '\n';
    std::cout << "T = " << rounds_to_epsilon(t) << '\n';
  }
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated segmentation simulator with frequency-domain style recalibration and prototype alignment"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run a federated experiment on synthetic multi-domain data");
  run_cmd->add_option("--config", run.config_path, "Config file (key = value with [sections])");
  run_cmd->add_option("--seed", run.seed, "Master seed");
  run_cmd->add_option("--rounds", run.rounds, "Communication rounds");
  run_cmd->add_option("--method", run.method, "fedbcs | fedavg | fedbcs-no-fsr | fedbcs-no-cdpa");
  run_cmd->add_option("--out", run.out, "Output directory (FEDBCS_OUT overrides)");
  run_cmd->add_option("--parallel", run.parallel, "Client worker threads");
  run_cmd->add_option("--checked", run.checked, "NaN/shape guards (true/false)");
  run_cmd->footer("Defaults:\n" + serialize_config(RunConfig{}));

  std::uint64_t gc_seed = 0;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable op");
  gc_cmd->add_option("--seed", gc_seed, "Seed for the random inputs");

  std::string points_path, distance = "cosine";
  std::size_t depth = 1;
  auto* finch_cmd = app.add_subcommand("finch", "Cluster points (one per line) with FINCH");
  finch_cmd->add_option("points", points_path, "Points file")->required();
  finch_cmd->add_option("--distance", distance, "cosine | euclidean");
  finch_cmd->add_option("--depth", depth, "Hierarchy levels to print");
  finch_cmd->add_option("--seed", gc_seed, "Unused; accepted for uniformity");

  BoundsOptions bounds;
  Real grad_sum = 0;
  auto* b_cmd = app.add_subcommand("bounds", "Learning-rate, lambda_c and round-count bounds");
  b_cmd->add_option("--L", bounds.theory.smoothness, "Smoothness constant L_sm")->required();
  b_cmd->add_option("--sigma2", bounds.theory.grad_variance, "Gradient variance sigma^2");
  b_cmd->add_option("--G", bounds.theory.prototype_bound, "Prototype norm bound G");
  b_cmd->add_option("--tau", bounds.theory.tau, "Temperature");
  b_cmd->add_option("--lambda", bounds.theory.lambda_c, "Prototype loss weight lambda_c");
  b_cmd->add_option("--E", bounds.theory.local_steps, "Local steps per round");
  b_cmd->add_option("--eta", bounds.theory.learning_rate, "Learning rate");
  b_cmd->add_option("--delta", bounds.theory.initial_gap, "F_0 - F*");
  b_cmd->add_option("--eps", bounds.theory.target_eps, "Target gradient precision epsilon");
  auto* gs_opt = b_cmd->add_option("--grad-sum", grad_sum, "Sum of squared gradient norms over a round");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*gc_cmd) return cmd_gradcheck(gc_seed);
    if (*finch_cmd) return cmd_finch(points_path, distance, depth);
    if (*b_cmd) {
      if (gs_opt->count() > 0) bounds.grad_sum = grad_sum;
      return cmd_bounds(bounds);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const RegimeError& e) {
    std::cerr << "regime error: " << e.what() << '\n';
    return kExitRegime;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
