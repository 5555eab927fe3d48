// cnn-recover: experiment runner for planted-CNN parameter recovery.
//
//   cnn-recover <fig-a|fig-b|pipeline|moments-table|check-derivatives>
//               --config <path> [--out <dir>] [--seed <u64>] [--threads <n>]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical or decomposition
// error, 4 failed check.

#include <filesystem>
#include <iostream>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "cnnrecover/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int run(const std::string& command, const std::string& config_path, const std::string& out_dir_flag,
        const std::optional<std::uint64_t>& seed, int threads) {
  using namespace cnnrecover;
  ExperimentConfig cfg;
  if (!config_path.empty()) cfg = load_experiment_config(config_path);
  else if (command != "moments-table") throw ConfigError("--config is required for " + command);
  if (seed) cfg.seed = *seed;
  set_worker_threads(threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));

  const CommandResult result = run_command(command, cfg);
  const std::filesystem::path out_dir = !out_dir_flag.empty() ? out_dir_flag : cfg.output_dir.value_or("out");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + out_dir.string() + "': " + ec.message());
  for (const auto& [name, contents] : result.files) {
    write_text((out_dir / name).string(), contents);
    std::cout << (out_dir / name).string() << '\n';
  }
  for (const auto& line : result.log) std::cerr << line << '\n';
  return result.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Planted one-hidden-layer CNN recovery experiments"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  int threads = 0;

  const std::pair<const char*, const char*> commands[] = {
      {"fig-a", "Hessian extreme eigenvalues at W* against sample size"},
      {"fig-b", "gradient descent loss curves from random initializations"},
      {"pipeline", "tensor initialization followed by gradient descent"},
      {"moments-table", "alpha, beta and rho per activation and sigma"},
      {"check-derivatives", "finite-difference checks of gradient and Hessian"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "experiment config file")->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "master seed (overrides seed)");
    sub->add_option("--threads", threads, "worker threads (default: hardware concurrency)")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, config_path, out_dir, seed, threads);
  } catch (const cnnrecover::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const cnnrecover::RankDeficiencyError& e) {
    std::cerr << "rank deficiency: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const cnnrecover::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  }
}
