#include "sfess/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sfess/error.hpp"
#include "sfess/metrics.hpp"
#include "sfess/poibin.hpp"
#include "sfess/subset.hpp"
#include "sfess/train.hpp"
#include "sfess/variance_bench.hpp"

namespace sfess {

namespace {

std::string fixed12(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<double> parse_list(const std::string& flag, const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string token;
  while (std::getline(in, token, ',')) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (token.empty() || end != token.c_str() + token.size()) {
      throw InvalidArgument("--" + flag + ": '" + token + "' is not a number");
    }
    out.push_back(v);
  }
  if (out.empty()) throw InvalidArgument("--" + flag + " needs a comma-separated list");
  return out;
}

template <class T>
std::string join(const std::vector<T>& values, const char* sep = ",") {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += sep;
    if constexpr (std::is_floating_point_v<T>) {
      s += fixed12(values[i]);
    } else {
      s += std::to_string(values[i]);
    }
  }
  return s;
}

void write_error(std::ostream& err, const std::string& kind, const std::string& message) {
  nlohmann::ordered_json line;
  line["error"] = kind;
  line["message"] = message;
  err << line.dump() << '\n';
}

// Output goes to `path` when given, else to `fallback`.
template <class Fn>
void with_output(const std::string& path, std::ostream& fallback, Fn&& fn) {
  if (path.empty()) {
    fn(fallback);
    return;
  }
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path);
  fn(f);
}

struct PmfArgs {
  std::string theta;
  std::string method = "dft";
};

struct SampleArgs {
  std::string theta;
  std::size_t k = 1;
  std::size_t count = 1;
  std::uint64_t seed = 0;
};

struct ScoreCheckArgs {
  std::size_t n = 10;
  std::size_t k = 4;
  std::size_t cases = 1;
  std::uint64_t seed = 0;
  double step = 1e-6;
  double tolerance = 1e-5;
};

struct VarianceArgs {
  VarianceBenchConfig config;
  std::string theta;
  std::string weights;
  bool no_gs = false;
  std::string out;
};

struct ExportArgs {
  std::string run;
  std::string selector;
  std::string out;
  std::size_t k = 0;
};

int cmd_pmf(const PmfArgs& a, std::ostream& out) {
  const std::vector<double> theta = parse_list("theta", a.theta);
  poibin::validate_probabilities(theta);
  std::vector<double> pmf;
  if (a.method == "dft") pmf = poibin::pmf_dft(theta);
  else if (a.method == "direct") pmf = poibin::pmf_dft(theta, poibin::DftMethod::direct);
  else if (a.method == "fft") pmf = poibin::pmf_dft(theta, poibin::DftMethod::fft);
  else pmf = poibin::pmf_dp(theta);
  out << join(pmf) << '\n';
  return 0;
}

int cmd_sample(const SampleArgs& a, std::ostream& out) {
  const std::vector<double> theta = parse_list("theta", a.theta);
  const SubsetDistribution dist(theta, a.k);
  Rng rng(Rng::mix(a.seed));
  for (std::size_t i = 0; i < a.count; ++i) out << join(dist.sample(rng).indices()) << '\n';
  return 0;
}

int cmd_score_check(const ScoreCheckArgs& a, std::ostream& out) {
  if (a.k == 0 || a.k >= a.n) throw InvalidArgument("score-check needs 0 < k < n");
  Rng rng(Rng::mix(a.seed));
  double worst = 0.0;
  for (std::size_t c = 0; c < a.cases; ++c) {
    std::vector<double> theta(a.n);
    for (double& t : theta) t = rng.uniform(0.05, 0.95);
    const SubsetDistribution dist(theta, a.k);
    const SubsetMask z = dist.sample(rng);
    const std::vector<double> analytic = dist.score(z);
    for (std::size_t i = 0; i < a.n; ++i) {
      std::vector<double> up = theta, down = theta;
      up[i] += a.step;
      down[i] -= a.step;
      const double fd =
          (SubsetDistribution(up, a.k).log_prob(z) - SubsetDistribution(down, a.k).log_prob(z)) / (2 * a.step);
      const double scale = std::max({std::abs(fd), std::abs(analytic[i]), 1e-300});
      worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
    }
  }
  out << "max_rel_err=" << format_metric(worst) << '\n';
  return worst <= a.tolerance ? 0 : 1;
}

int cmd_train(const std::string& config_path, const std::map<std::string, std::string>& flags,
              const std::map<std::string, CLI::Option*>& options, std::ostream& out) {
  RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
  for (const auto& [key, value] : flags) {
    if (options.at(key)->count() > 0) set_config_value(config, key, value);
  }
  validate_config(config);
  const TrainOutcome outcome = train(config);
  write_run(outcome, config.out);
  const RunRecord& r = outcome.record;
  out << "out=" << config.out << " epochs=" << r.epochs.size() << " test_metric_topk=" << format_metric(r.test_metric_topk)
      << " test_metric_sampled=" << format_metric(r.test_metric_sampled) << " selected=" << join(r.selected) << '\n';
  return 0;
}

int cmd_variance(VarianceArgs a, std::ostream& out) {
  if (!a.theta.empty()) a.config.theta = parse_list("theta", a.theta);
  if (!a.weights.empty()) a.config.weights = parse_list("weights", a.weights);
  a.config.include_gs = !a.no_gs;
  const VarianceReport report = variance_bench(a.config);
  with_output(a.out, out, [&](std::ostream& o) { write_variance_csv(report, o); });
  if (!a.out.empty()) out << "variance_ratio=" << format_metric(report.variance_ratio()) << '\n';
  return 0;
}

int cmd_export(const ExportArgs& a, std::ostream& out) {
  if (a.run.empty() == a.selector.empty()) throw InvalidArgument("export-mask needs exactly one of --run or --selector");
  const std::filesystem::path path = a.selector.empty() ? std::filesystem::path(a.run) / "selector.txt" : std::filesystem::path(a.selector);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open selector file " + path.string());
  const Selector s = read_selector(in);
  const std::size_t k = a.k ? a.k : s.k;
  std::vector<double> theta(s.logits.size());
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = 1.0 / (1.0 + std::exp(-s.logits[i]));
  const SubsetMask mask = top_k(SubsetDistribution(theta, k).marginals(), k);
  with_output(a.out, out, [&](std::ostream& o) { write_mask(mask.indices(), o); });
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"k-subset sampling and score-function gradient tools", "sfess"};
  app.require_subcommand(1);

  PmfArgs pmf;
  auto* pmf_cmd = app.add_subcommand("pmf", "Poisson binomial PMF of a probability vector");
  pmf_cmd->add_option("--theta", pmf.theta, "comma-separated probabilities")->required();
  pmf_cmd->add_option("--method", pmf.method)->check(CLI::IsMember({"dft", "direct", "fft", "dp"}));

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample", "draw k-subsets");
  sample_cmd->add_option("--theta", sample.theta)->required();
  sample_cmd->add_option("--k", sample.k)->required();
  sample_cmd->add_option("--count", sample.count);
  sample_cmd->add_option("--seed", sample.seed);

  ScoreCheckArgs check;
  auto* check_cmd = app.add_subcommand("score-check", "compare the score with finite differences");
  check_cmd->add_option("--n", check.n);
  check_cmd->add_option("--k", check.k);
  check_cmd->add_option("--cases", check.cases);
  check_cmd->add_option("--seed", check.seed);
  check_cmd->add_option("--step", check.step);
  check_cmd->add_option("--tolerance", check.tolerance);

  std::string config_path;
  std::map<std::string, std::string> flags;
  std::map<std::string, CLI::Option*> flag_options;
  auto* train_cmd = app.add_subcommand("train", "train a selector and downstream network");
  train_cmd->add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  for (const std::string& key : config_keys()) flag_options[key] = train_cmd->add_option("--" + key, flags[key]);

  VarianceArgs variance;
  auto* variance_cmd = app.add_subcommand("variance-bench", "bias and variance of the gradient estimators");
  variance_cmd->add_option("--n", variance.config.n);
  variance_cmd->add_option("--k", variance.config.k);
  variance_cmd->add_option("--samples", variance.config.samples);
  variance_cmd->add_option("--trials", variance.config.trials);
  variance_cmd->add_option("--seed", variance.config.seed);
  variance_cmd->add_option("--tau", variance.config.tau);
  variance_cmd->add_option("--theta", variance.theta);
  variance_cmd->add_option("--weights", variance.weights);
  variance_cmd->add_flag("--no-gs", variance.no_gs);
  variance_cmd->add_option("--out", variance.out, "CSV path; stdout when omitted");

  ExportArgs exporter;
  auto* export_cmd = app.add_subcommand("export-mask", "write the top-k mask of a trained selector");
  export_cmd->add_option("--run", exporter.run, "run directory");
  export_cmd->add_option("--selector", exporter.selector, "selector file");
  export_cmd->add_option("--k", exporter.k);
  export_cmd->add_option("--out", exporter.out, "index list path; stdout when omitted");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::ParseError& e) {
    write_error(err, "usage", e.what());
    return 2;
  }

  try {
    if (pmf_cmd->parsed()) return cmd_pmf(pmf, out);
    if (sample_cmd->parsed()) return cmd_sample(sample, out);
    if (check_cmd->parsed()) return cmd_score_check(check, out);
    if (train_cmd->parsed()) return cmd_train(config_path, flags, flag_options, out);
    if (variance_cmd->parsed()) return cmd_variance(variance, out);
    if (export_cmd->parsed()) return cmd_export(exporter, out);
  } catch (const InvalidArgument& e) {
    write_error(err, e.kind(), e.what());
    return 2;
  } catch (const Error& e) {
    write_error(err, e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    write_error(err, "internal", e.what());
    return 1;
  }
  return 2;
}

}  // namespace sfess
