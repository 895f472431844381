#pragma once

#include "jcep/baselines.hpp"
#include "jcep/channel.hpp"
#include "jcep/hmp.hpp"
#include "jcep/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace jcep {

enum class EstimatorKind { Hmp, EmBgAmp, EmBgAmpMmv, Omp, Somp };

const char* estimator_name(EstimatorKind k);
EstimatorKind estimator_from_name(const std::string& name);

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::Hmp;
  HmpOptions hmp;
  AmpOptions amp;
  /// Greedy stopping: 0 selects the true path count (oracle sparsity); a negative
  /// value stops on the residual threshold NMK L sigma_z instead.
  int sparsity = 0;
};

enum class SweepAxis { SnrDb, DeltaT, Mh };

struct ExperimentConfig {
  std::string profile = "desk";
  SystemConfig system;
  int doppler_grid_size = 0;  // 0 selects S_nu K
  Scenario scenario;
  double velocity_kmh = 60.0;
  bool doppler_from_velocity = true;
  double snr_db = 10.0;
  SweepAxis sweep_axis = SweepAxis::SnrDb;
  std::vector<double> sweep_values;
  std::vector<EstimatorSpec> estimators;
  int trials = 1;
  std::uint64_t master_seed = 1;
  std::string output_dir = "results";
  int prediction_instants = 8;
  bool record_wall_time = false;
  /// Canonical text of the configuration as read, used for hashing and replay.
  std::string source_text;
};

/// Parses a JSON experiment configuration. Errors name the offending field, or the
/// line and column for syntax errors. profile_override replaces the "profile" key.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>",
                              const std::optional<std::string>& profile_override = std::nullopt);
ExperimentConfig load_config(const std::string& path, const std::optional<std::string>& profile_override = std::nullopt);

/// System configuration, grid and scenario in effect for one sweep value.
struct SweepPoint {
  SystemConfig system;
  GridSpec grid;
  Scenario scenario;
  double snr_db = 0.0;
};
SweepPoint resolve_sweep_point(const ExperimentConfig& cfg, std::size_t sweep_index);

struct ResultRow {
  double sweep_value = 0.0;
  std::string estimator;
  int trial = 0;
  std::uint64_t seed = 0;
  double estimation_nmse_db = 0.0;
  double prediction_nmse_db = 0.0;
  int iterations_used = 0;
  double wall_time_ms = 0.0;
  bool diverged = false;
};

/// Seed of one trial, a pure function of (master seed, sweep index, trial index).
std::uint64_t trial_seed(std::uint64_t master, std::size_t sweep_index, int trial);

/// Runs every estimator on one channel realization.
std::vector<ResultRow> run_trial(const ExperimentConfig& cfg, std::size_t sweep_index, int trial,
                                 const std::vector<std::size_t>& estimator_indices = {});

/// All trials on a bounded worker pool; rows sorted by (sweep, estimator, trial).
std::vector<ResultRow> run_all(const ExperimentConfig& cfg, int workers = 1);

std::string results_csv(const std::vector<ResultRow>& rows);
std::vector<ResultRow> parse_results_csv(const std::string& text);

std::uint64_t config_hash(const std::string& text);
std::string manifest_json(const ExperimentConfig& cfg, int workers);

struct RunOutput {
  std::string csv_path;
  std::string manifest_path;
  std::vector<ResultRow> rows;
};

/// Loads, runs and writes results.csv and manifest.json into the output directory.
RunOutput run_experiment(const std::string& config_path, int workers = 1,
                         const std::optional<std::string>& profile_override = std::nullopt,
                         const std::optional<std::string>& output_dir_override = std::nullopt);

struct SummaryRow {
  double sweep_value = 0.0;
  std::string estimator;
  int trials = 0;
  double estimation_mean_db = 0.0;
  double estimation_std_db = 0.0;
  double prediction_mean_db = 0.0;
  double prediction_std_db = 0.0;
  int diverged = 0;
};

/// Means are taken on the linear NMSE scale and converted back to dB; standard
/// deviations are of the per-trial dB values (sample, n - 1).
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);
std::string summary_csv(const std::vector<SummaryRow>& rows);

/// Recomputes row `index` (0-based, header excluded) of a results CSV from the manifest
/// stored next to it.
ResultRow replay(const std::string& csv_path, std::size_t index);

}  // namespace jcep
