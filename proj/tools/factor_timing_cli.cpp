// Command-line entry point: ingest / run / report.
//
// Exit codes: 0 success, 1 usage or config error, 2 data error,
// 3 numeric failure.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "factor_timing/config.hpp"
#include "factor_timing/pipeline.hpp"

namespace ft = factor_timing;

namespace {

int exit_code(const ft::Error& e) { return static_cast<int>(e.category()); }

ft::RunConfig resolve(const std::string& config_path, const std::string& out, std::optional<std::uint64_t> seed) {
  auto cfg = config_path.empty() ? ft::RunConfig{} : ft::load_config(config_path);
  if (!out.empty()) cfg.output_dir = out;
  if (seed) {
    // A command-line seed overrides every model seed.
    cfg.apply_seed(*seed, {});
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factor-timing research engine: CMA premium forecasts, mean-variance timing and cost-aware backtests"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  bool dump = false;

  auto* ingest = app.add_subcommand("ingest", "Merge the input tables and print the aligned panel summary");
  ingest->add_option("--config", config_path, "Run configuration (JSON)")->required();
  ingest->add_option("--out", out_dir, "Output directory (overrides config)");
  ingest->add_flag("--dump", dump, "Write aligned.csv into the output directory");

  auto* run = app.add_subcommand("run", "Forecast, build weights and backtest every strategy");
  run->add_option("--config", config_path, "Run configuration (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory (overrides config)");
  run->add_option("--seed", seed, "Base seed (overrides config)");
  run->add_flag("--dump", dump, "Accepted for symmetry; run always writes its artifacts");

  auto* report = app.add_subcommand("report", "Print result tables from a run directory");
  report->add_option("--out", out_dir, "Run output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*ingest) {
      const auto cfg = resolve(config_path, out_dir, std::nullopt);
      const auto ds = ft::load_dataset(cfg);
      ft::print_summary(std::cout, ft::summarize(ds, cfg.split));
      if (dump) {
        std::filesystem::create_directories(cfg.output_dir);
        const auto path = cfg.output_dir / "aligned.csv";
        ft::write_with(path, [&](std::ostream& os) { ft::write_aligned_csv(os, ds); });
        std::cout << "wrote " << path.string() << "\n";
      }
    } else if (*run) {
      const auto cfg = resolve(config_path, out_dir, seed);
      const auto summary = ft::run_pipeline(cfg, cfg.output_dir, &std::cerr);
      std::cout << "wrote results to " << cfg.output_dir.string() << " (config digest "
                << summary["config_digest"].get<std::string>() << ")\n";
    } else if (*report) {
      ft::print_report(out_dir, std::cout);
    }
  } catch (const ft::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e);
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
