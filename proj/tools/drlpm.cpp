#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drlpm/cli.hpp"

namespace {

struct SharedFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> window;
  std::optional<double> mu;
  std::optional<std::size_t> checkpoint_every;
  std::vector<std::string> settings;
};

void add_shared_flags(CLI::App* cmd, SharedFlags& f) {
  cmd->add_option("--config", f.config, "key = value configuration file");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--window", f.window, "price window length n");
  cmd->add_option("--mu", f.mu, "transaction cost rate");
  cmd->add_option("--checkpoint-every", f.checkpoint_every, "save a checkpoint every K episodes");
  cmd->add_option("--set", f.settings, "extra key=value override, repeatable");
}

// Defaults, then the config file, then --set, then the dedicated flags.
drlpm::RunConfig build_config(const SharedFlags& f) {
  drlpm::RunConfig c;
  if (!f.config.empty()) drlpm::apply_config_file(c, f.config);
  for (const auto& s : f.settings) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw drlpm::UsageError("--set expects key=value, got " + s);
    drlpm::set_config_value(c, std::string(drlpm::detail::trim(s.substr(0, eq))), s.substr(eq + 1));
  }
  if (f.seed) c.train.seed = *f.seed;
  if (f.out) c.out = *f.out;
  if (f.window) c.env.window = *f.window;
  if (f.mu) c.env.mu = *f.mu;
  if (f.checkpoint_every) c.checkpoint_every = *f.checkpoint_every;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deep reinforcement learning portfolio manager"};
  app.require_subcommand(1);

  std::string ingest_dir, benchmark;
  auto* ingest = app.add_subcommand("ingest", "load and align a directory of price CSVs");
  ingest->add_option("dir", ingest_dir, "directory of date,open,high,low,close files")->required();
  ingest->add_option("--benchmark", benchmark, "benchmark asset id (default: last file)");

  SharedFlags train_flags, backtest_flags, compare_flags;
  auto* train = app.add_subcommand("train", "train the DDPG agent on the training range");
  add_shared_flags(train, train_flags);
  auto* backtest = app.add_subcommand("backtest", "greedy back-test of a checkpoint on the test range");
  add_shared_flags(backtest, backtest_flags);
  auto* compare = app.add_subcommand("compare", "compare the agent with the multi-factor baseline");
  add_shared_flags(compare, compare_flags);

  std::string synth_dir;
  std::size_t synth_days = 1000;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "write a synthetic demo data set");
  synth->add_option("dir", synth_dir, "output directory")->required();
  synth->add_option("--days", synth_days, "trading days");
  synth->add_option("--seed", synth_seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : drlpm::cli::kUsage;
  }

  try {
    if (*ingest) drlpm::cli::cmd_ingest(ingest_dir, benchmark, std::cout);
    else if (*train) drlpm::cli::cmd_train(build_config(train_flags), std::cout);
    else if (*backtest) drlpm::cli::cmd_backtest(build_config(backtest_flags), std::cout);
    else if (*compare) drlpm::cli::cmd_compare(build_config(compare_flags), std::cout);
    else if (*synth) drlpm::cli::cmd_synth(synth_dir, synth_days, synth_seed, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return drlpm::cli::exit_code_for(e);
  }
  return drlpm::cli::kOk;
}
