#include "jcep/experiment.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

int main(int argc, char** argv) {
  CLI::App app{"Joint channel estimation and prediction experiments"};
  app.require_subcommand(1);

  std::string config_path;
  int workers = 1;
  std::string profile;
  std::string output_dir;
  auto* run = app.add_subcommand("run", "Run an experiment configuration");
  run->add_option("config", config_path, "JSON configuration file")->required()->check(CLI::ExistingFile);
  run->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
  run->add_option("--profile", profile, "Override the profile (desk or paper)")
      ->check(CLI::IsMember({"desk", "paper"}));
  run->add_option("--output-dir", output_dir, "Override the output directory");

  std::string csv_path;
  auto* sum = app.add_subcommand("summarize", "Aggregate a results CSV");
  sum->add_option("csv", csv_path, "results.csv")->required()->check(CLI::ExistingFile);

  std::string replay_csv;
  std::size_t row = 0;
  auto* rep = app.add_subcommand("replay", "Recompute one row of a results CSV");
  rep->add_option("csv", replay_csv, "results.csv")->required()->check(CLI::ExistingFile);
  rep->add_option("--row", row, "0-based data row")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto out = jcep::run_experiment(config_path, workers,
                                            profile.empty() ? std::nullopt : std::optional<std::string>(profile),
                                            output_dir.empty() ? std::nullopt : std::optional<std::string>(output_dir));
      std::cout << "wrote " << out.csv_path << " (" << out.rows.size() << " rows) and " << out.manifest_path << "\n";
    } else if (*sum) {
      std::ifstream in(csv_path);
      std::stringstream ss;
      ss << in.rdbuf();
      std::cout << jcep::summary_csv(jcep::summarize(jcep::parse_results_csv(ss.str())));
    } else if (*rep) {
      const jcep::ResultRow r = jcep::replay(replay_csv, row);
      std::cout << jcep::results_csv({r});
    }
  } catch (const jcep::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
