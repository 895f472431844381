#include "jcep/experiment.hpp"
#include "jcep/predict.hpp"
#include "jcep/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#ifndef JCEP_VERSION
#define JCEP_VERSION "0.0.0"
#endif

namespace jcep {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Dense dictionaries beyond this many entries are not built; HMP falls back to the
// factored operator and the dense-only baselines are rejected.
constexpr double kDenseEntryLimit = 16.0 * 1024 * 1024;

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument(s);
  return v;
}

// Typed access to one JSON object with unknown-key detection.
class Fields {
 public:
  Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("", "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    const std::string where = key.empty() ? path_ : (path_.empty() ? key : path_ + "." + key);
    throw ConfigError("config field '" + (where.empty() ? std::string("<root>") : where) + "': " + what);
  }

  std::string sub(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, double def, double lo = -std::numeric_limits<double>::infinity()) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    double x = 0.0;
    if (v.is_number()) {
      x = v.get<double>();
    } else if (v.is_string() && (v.get<std::string>() == "inf" || v.get<std::string>() == "-inf")) {
      x = parse_double(v.get<std::string>());
    } else {
      fail(key, "expected a number");
    }
    if (!(x >= lo)) fail(key, "must be >= " + fmt(lo));
    return x;
  }

  int integer(const std::string& key, int def, int lo = std::numeric_limits<int>::min()) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(key, "expected an integer");
    const long long x = v.get<long long>();
    if (x < lo || x > std::numeric_limits<int>::max()) fail(key, "must be an integer >= " + std::to_string(lo));
    return static_cast<int>(x);
  }

  std::uint64_t seed(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    fail(key, "expected a non-negative integer");
  }

  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_boolean()) fail(key, "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    if (!has(key)) return def;
    const json& v = j_.at(key);
    if (!v.is_string()) fail(key, "expected a string");
    return v.get<std::string>();
  }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) fail(it.key(), "unknown field");
  }

 private:
  const json j_;
  std::string path_;
  std::set<std::string> seen_;
};

SystemConfig profile_system(const std::string& name) {
  if (name == "desk") return SystemConfig::desk_profile();
  if (name == "paper") return SystemConfig::paper_profile();
  throw ConfigError("config field 'profile': expected \"desk\" or \"paper\", got \"" + name + "\"");
}

void parse_system(Fields f, SystemConfig& s) {
  const SystemConfig base = s;
  s.subcarrier_spacing = f.number("subcarrier_spacing", s.subcarrier_spacing, 1.0);
  s.n_subbands = f.integer("n_subbands", s.n_subbands, 1);
  s.n_comb = f.integer("n_comb", s.n_comb, 1);
  s.srs_len = f.integer("srs_len", s.srs_len, 1);
  s.m_v = f.integer("m_v", s.m_v, 1);
  s.m_h = f.integer("m_h", s.m_h, 1);
  s.n_soundings = f.integer("n_soundings", s.n_soundings, 1);
  s.doppler_oversample = f.integer("doppler_oversample", s.doppler_oversample, 1);
  s.carrier_freq = f.number("carrier_freq", s.carrier_freq, 0.0);
  s.n_sc = f.integer("n_sc", s.srs_len * s.n_subbands * s.n_comb, 1);
  int fft = base.n_fft;
  while (fft < s.n_sc) fft *= 2;
  s.n_fft = f.integer("n_fft", fft, 1);
  // Timing in seconds, or in symbols/slots of the configured numerology.
  const double dt_sym = f.number("dt_symbols", 1.0, 0.0);
  const double dT_slots = f.number("dT_slots", 4.0, 0.0);
  s.dt_srs = f.number("dt_srs", dt_sym * s.symbol_duration(), 0.0);
  s.dT_full = f.number("dT_full", dT_slots * s.slot_duration(), 0.0);
  if (f.has("hop_schedule")) {
    const json& h = f.raw("hop_schedule");
    if (!h.is_array()) f.fail("hop_schedule", "expected an array of subband indices");
    s.hop_schedule.clear();
    for (const json& v : h) {
      if (!v.is_number_integer()) f.fail("hop_schedule", "expected integer entries");
      s.hop_schedule.push_back(v.get<int>());
    }
  } else {
    s.hop_schedule.resize(static_cast<std::size_t>(s.n_subbands));
    for (int l = 0; l < s.n_subbands; ++l) s.hop_schedule[static_cast<std::size_t>(l)] = l;
  }
  f.finish();
  try {
    s.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config block 'system': ") + e.what());
  }
}

OffGridMode parse_offgrid_mode(Fields& f, const std::string& key, OffGridMode def) {
  const std::string v = f.string(key, def == OffGridMode::Fast ? "fast" : "exact");
  if (v == "fast") return OffGridMode::Fast;
  if (v == "exact") return OffGridMode::Exact;
  f.fail(key, "expected \"fast\" or \"exact\"");
}

SigmaRule parse_sigma_rule(Fields& f, const std::string& key, SigmaRule def) {
  const std::string v = f.string(key, def == SigmaRule::Pooled ? "pooled" : "per_grid");
  if (v == "pooled") return SigmaRule::Pooled;
  if (v == "per_grid") return SigmaRule::PerGrid;
  f.fail(key, "expected \"pooled\" or \"per_grid\"");
}

EstimatorSpec parse_estimator(const json& j, const std::string& path) {
  EstimatorSpec e;
  std::string name;
  json opts = json::object();
  if (j.is_string()) {
    name = j.get<std::string>();
  } else if (j.is_object()) {
    Fields f(j, path);
    if (!f.has("name")) f.fail("name", "missing estimator name");
    name = f.string("name", "");
    if (f.has("options")) opts = f.raw("options");
    f.finish();
  } else {
    throw ConfigError("config field '" + path + "': expected an estimator name or {name, options}");
  }
  try {
    e.kind = estimator_from_name(name);
  } catch (const ConfigError&) {
    throw ConfigError("config field '" + path + ".name': unknown estimator \"" + name +
                      "\" (expected hmp, em_bg_amp, em_bg_amp_mmv, omp or somp)");
  }
  Fields o(opts, path + ".options");
  switch (e.kind) {
    case EstimatorKind::Hmp: {
      HmpOptions& h = e.hmp;
      h.outer_iters = o.integer("outer_iters", h.outer_iters, 1);
      h.inner_iters = o.integer("inner_iters", h.inner_iters, 0);
      h.damping = o.number("damping", h.damping, 0.0);
      if (!(h.damping > 0.0 && h.damping <= 1.0)) o.fail("damping", "must lie in (0, 1]");
      h.llr_threshold = o.number("llr_threshold", h.llr_threshold);
      h.learn_offgrid = o.boolean("learn_offgrid", h.learn_offgrid);
      h.offgrid_mode = parse_offgrid_mode(o, "offgrid_mode", h.offgrid_mode);
      h.offset_ridge = o.number("offset_ridge", h.offset_ridge, 0.0);
      h.finite_size_terms = o.boolean("finite_size_terms", h.finite_size_terms);
      h.early_exit = o.boolean("early_exit", h.early_exit);
      h.early_exit_tol = o.number("early_exit_tol", h.early_exit_tol, 0.0);
      const std::string mode = o.string("operator_mode", "factored");
      if (mode != "dense" && mode != "factored")
        o.fail("operator_mode", "expected \"dense\" or \"factored\"");
      // The Kronecker path is exact and several times faster at desk scale.
      h.operator_mode = mode == "dense" ? OffGridOperator::Mode::Dense : OffGridOperator::Mode::Factored;
      h.sigma_rule = parse_sigma_rule(o, "sigma_rule", h.sigma_rule);
      h.data_init = o.boolean("data_init", h.data_init);
      break;
    }
    case EstimatorKind::EmBgAmp:
    case EstimatorKind::EmBgAmpMmv: {
      AmpOptions& a = e.amp;
      a.mmv = e.kind == EstimatorKind::EmBgAmpMmv;
      a.iterations = o.integer("iterations", a.iterations, 0);
      a.damping = o.number("damping", a.damping, 0.0);
      if (!(a.damping > 0.0 && a.damping <= 1.0)) o.fail("damping", "must lie in (0, 1]");
      a.llr_threshold = o.number("llr_threshold", a.llr_threshold);
      a.early_exit = o.boolean("early_exit", a.early_exit);
      a.sigma_rule = parse_sigma_rule(o, "sigma_rule", a.sigma_rule);
      a.data_init = o.boolean("data_init", a.data_init);
      a.early_exit_tol = o.number("early_exit_tol", a.early_exit_tol, 0.0);
      break;
    }
    case EstimatorKind::Omp:
    case EstimatorKind::Somp: {
      if (o.has("sparsity")) {
        const json& v = o.raw("sparsity");
        if (v.is_string() && v.get<std::string>() == "oracle") {
          e.sparsity = 0;
        } else if (v.is_string() && v.get<std::string>() == "residual") {
          e.sparsity = -1;
        } else if (v.is_number_integer() && v.get<int>() >= 1) {
          e.sparsity = v.get<int>();
        } else {
          o.fail("sparsity", "expected \"oracle\", \"residual\" or a positive integer");
        }
      }
      break;
    }
  }
  o.finish();
  return e;
}

json estimator_json(const EstimatorSpec& e) {
  json j;
  j["name"] = estimator_name(e.kind);
  json o;
  switch (e.kind) {
    case EstimatorKind::Hmp:
      o["outer_iters"] = e.hmp.outer_iters;
      o["inner_iters"] = e.hmp.inner_iters;
      o["damping"] = e.hmp.damping;
      o["llr_threshold"] = e.hmp.llr_threshold;
      o["learn_offgrid"] = e.hmp.learn_offgrid;
      o["offgrid_mode"] = e.hmp.offgrid_mode == OffGridMode::Fast ? "fast" : "exact";
      o["finite_size_terms"] = e.hmp.finite_size_terms;
      o["early_exit"] = e.hmp.early_exit;
      o["early_exit_tol"] = e.hmp.early_exit_tol;
      o["variance_floor"] = e.hmp.variance_floor;
      o["operator_mode"] = e.hmp.operator_mode == OffGridOperator::Mode::Dense ? "dense" : "factored";
      o["sigma_rule"] = e.hmp.sigma_rule == SigmaRule::Pooled ? "pooled" : "per_grid";
      o["data_init"] = e.hmp.data_init;
      break;
    case EstimatorKind::EmBgAmp:
    case EstimatorKind::EmBgAmpMmv:
      o["iterations"] = e.amp.iterations;
      o["damping"] = e.amp.damping;
      o["llr_threshold"] = e.amp.llr_threshold;
      o["mmv"] = e.amp.mmv;
      o["early_exit"] = e.amp.early_exit;
      o["early_exit_tol"] = e.amp.early_exit_tol;
      o["sigma_rule"] = e.amp.sigma_rule == SigmaRule::Pooled ? "pooled" : "per_grid";
      o["data_init"] = e.amp.data_init;
      break;
    case EstimatorKind::Omp:
    case EstimatorKind::Somp:
      o["sparsity"] = e.sparsity == 0 ? json("oracle") : e.sparsity < 0 ? json("residual") : json(e.sparsity);
      break;
  }
  j["options"] = o;
  return j;
}

std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

const char* axis_key(SweepAxis a) {
  switch (a) {
    case SweepAxis::SnrDb: return "snr_db";
    case SweepAxis::DeltaT: return "delta_T";
    case SweepAxis::Mh: return "m_h";
  }
  return "?";
}

}  // namespace

const char* estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::Hmp: return "hmp";
    case EstimatorKind::EmBgAmp: return "em_bg_amp";
    case EstimatorKind::EmBgAmpMmv: return "em_bg_amp_mmv";
    case EstimatorKind::Omp: return "omp";
    case EstimatorKind::Somp: return "somp";
  }
  return "?";
}

EstimatorKind estimator_from_name(const std::string& name) {
  for (EstimatorKind k : {EstimatorKind::Hmp, EstimatorKind::EmBgAmp, EstimatorKind::EmBgAmpMmv, EstimatorKind::Omp,
                          EstimatorKind::Somp})
    if (name == estimator_name(k)) return k;
  throw ConfigError("unknown estimator \"" + name + "\"");
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin,
                              const std::optional<std::string>& profile_override) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": syntax error at " + line_col(text, e.byte > 0 ? e.byte - 1 : 0) + ": " + e.what());
  }
  ExperimentConfig cfg;
  cfg.source_text = text;
  Fields f(root, "");
  cfg.profile = profile_override ? *profile_override : f.string("profile", "desk");
  if (profile_override) f.has("profile");
  cfg.system = profile_system(cfg.profile);
  parse_system(Fields(f.has("system") ? f.raw("system") : json::object(), "system"), cfg.system);

  {
    Fields g(f.has("grid") ? f.raw("grid") : json::object(), "grid");
    cfg.doppler_grid_size = g.integer("doppler_grid_size", 0, 0);
    g.finish();
  }
  {
    Fields s(f.has("scenario") ? f.raw("scenario") : json::object(), "scenario");
    Scenario& sc = cfg.scenario;
    sc.n_paths = s.integer("paths", sc.n_paths, 1);
    sc.delay_spread = s.number("delay_spread", sc.delay_spread, 0.0);
    sc.on_grid = s.boolean("on_grid", sc.on_grid);
    sc.subpaths = s.integer("subpaths", sc.subpaths, 1);
    sc.subpath_doppler_spread = s.number("subpath_doppler_spread", sc.subpath_doppler_spread, 0.0);
    cfg.velocity_kmh = s.number("velocity_kmh", cfg.velocity_kmh, 0.0);
    if (s.has("doppler_max")) {
      if (s.has("velocity_kmh") && root.at("scenario").contains("velocity_kmh"))
        s.fail("doppler_max", "give either velocity_kmh or doppler_max, not both");
      sc.doppler_max = s.number("doppler_max", 0.0, 0.0);
      cfg.doppler_from_velocity = false;
    }
    s.finish();
  }
  cfg.snr_db = f.number("snr_db", cfg.snr_db);
  if (f.has("sweep")) {
    Fields s(f.raw("sweep"), "sweep");
    const std::string axis = s.string("axis", "snr_db");
    if (axis == "snr_db") {
      cfg.sweep_axis = SweepAxis::SnrDb;
    } else if (axis == "delta_T") {
      cfg.sweep_axis = SweepAxis::DeltaT;
    } else if (axis == "m_h") {
      cfg.sweep_axis = SweepAxis::Mh;
    } else {
      s.fail("axis", "expected snr_db, delta_T or m_h");
    }
    if (!s.has("values")) s.fail("values", "missing sweep values");
    const json& v = s.raw("values");
    if (!v.is_array() || v.empty()) s.fail("values", "expected a non-empty array");
    for (const json& x : v) {
      if (x.is_number()) {
        cfg.sweep_values.push_back(x.get<double>());
      } else if (x.is_string() && x.get<std::string>() == "inf" && cfg.sweep_axis == SweepAxis::SnrDb) {
        cfg.sweep_values.push_back(std::numeric_limits<double>::infinity());
      } else {
        s.fail("values", "expected numbers");
      }
      const double val = cfg.sweep_values.back();
      if (cfg.sweep_axis == SweepAxis::DeltaT && !(val > 0.0)) s.fail("values", "delta_T values must be positive seconds");
      if (cfg.sweep_axis == SweepAxis::Mh && (val < 1.0 || val != std::floor(val)))
        s.fail("values", "m_h values must be positive integers");
    }
    s.finish();
  } else {
    cfg.sweep_axis = SweepAxis::SnrDb;
    cfg.sweep_values = {cfg.snr_db};
  }
  if (!f.has("estimators")) f.fail("estimators", "missing estimator list");
  const json& est = f.raw("estimators");
  if (!est.is_array() || est.empty()) f.fail("estimators", "expected a non-empty array");
  std::set<std::string> names;
  for (std::size_t i = 0; i < est.size(); ++i) {
    cfg.estimators.push_back(parse_estimator(est[i], "estimators[" + std::to_string(i) + "]"));
    if (!names.insert(estimator_name(cfg.estimators.back().kind)).second)
      f.fail("estimators", "estimator listed twice");
  }
  cfg.trials = f.integer("trials", cfg.trials, 1);
  cfg.master_seed = f.seed("master_seed", cfg.master_seed);
  cfg.output_dir = f.string("output_dir", cfg.output_dir);
  cfg.prediction_instants = f.integer("prediction_instants", cfg.prediction_instants, 1);
  cfg.record_wall_time = f.boolean("record_wall_time", cfg.record_wall_time);
  f.finish();
  for (std::size_t i = 0; i < cfg.sweep_values.size(); ++i) {
    try {
      resolve_sweep_point(cfg, i);
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ": sweep value " + fmt(cfg.sweep_values[i]) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path, const std::optional<std::string>& profile_override) {
  return parse_config(read_file(path), path, profile_override);
}

SweepPoint resolve_sweep_point(const ExperimentConfig& cfg, std::size_t sweep_index) {
  if (sweep_index >= cfg.sweep_values.size()) throw ConfigError("sweep index out of range");
  SweepPoint pt;
  pt.system = cfg.system;
  pt.scenario = cfg.scenario;
  pt.snr_db = cfg.snr_db;
  const double v = cfg.sweep_values[sweep_index];
  switch (cfg.sweep_axis) {
    case SweepAxis::SnrDb: pt.snr_db = v; break;
    case SweepAxis::DeltaT: pt.system.dT_full = v; break;
    case SweepAxis::Mh: pt.system.m_h = static_cast<int>(v); break;
  }
  pt.system.validate();
  if (cfg.doppler_from_velocity) pt.scenario.doppler_max = doppler_from_speed(cfg.velocity_kmh, pt.system.carrier_freq);
  pt.scenario.validate(pt.system);
  const int kt = cfg.doppler_grid_size > 0 ? cfg.doppler_grid_size : pt.system.doppler_oversample * pt.system.n_soundings;
  pt.grid = GridSpec::from_config(pt.system, kt);
  return pt;
}

std::uint64_t trial_seed(std::uint64_t master, std::size_t sweep_index, int trial) {
  return derive_seed(derive_seed(master, sweep_index), static_cast<std::uint64_t>(trial));
}

std::vector<ResultRow> run_trial(const ExperimentConfig& cfg, std::size_t sweep_index, int trial,
                                 const std::vector<std::size_t>& estimator_indices) {
  const SweepPoint pt = resolve_sweep_point(cfg, sweep_index);
  const SystemConfig& sys = pt.system;
  const std::uint64_t seed = trial_seed(cfg.master_seed, sweep_index, trial);

  const PathSet paths = sample_paths(pt.scenario, pt.grid, sys, derive_seed(seed, 0));
  const CMatrix G = synth_fst_channel(paths, sys);
  const CVector pilots = qpsk_pilots(sys.rows(), derive_seed(seed, 1));
  const ReceivedSignal rx = synth_received(G, pilots, pt.snr_db, derive_seed(seed, 2));
  const std::vector<double> horizons = default_horizons(sys, cfg.prediction_instants);
  const CMatrix G_future = synth_channel_at_times(paths, sys, horizon_times(sys, horizons));

  const bool dense = static_cast<double>(sys.rows()) * pt.grid.columns() <= kDenseEntryLimit;
  const DictionarySet dict = build_dictionary(pt.grid, sys, dense);
  const Index L = sys.n_subbands;

  std::vector<std::size_t> which = estimator_indices;
  if (which.empty())
    for (std::size_t i = 0; i < cfg.estimators.size(); ++i) which.push_back(i);

  std::vector<ResultRow> rows;
  for (std::size_t ei : which) {
    const EstimatorSpec& spec = cfg.estimators.at(ei);
    ResultRow row;
    row.sweep_value = cfg.sweep_values[sweep_index];
    row.estimator = estimator_name(spec.kind);
    row.trial = trial;
    row.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    if (!dense && spec.kind != EstimatorKind::Hmp)
      throw ConfigError(std::string(row.estimator) + " needs a dense dictionary, which this profile is too large for");
    try {
      CMatrix h_hat;
      CMatrix g_hat;
      OffGridParams offsets = OffGridParams::zeros(pt.grid);
      switch (spec.kind) {
        case EstimatorKind::Hmp: {
          HmpOptions o = spec.hmp;
          if (!dense) o.operator_mode = OffGridOperator::Mode::Factored;
          const EstimateResult r = hmp_run(rx.y, pilots, rx.noise_var, dict, o);
          h_hat = r.h_hat;
          g_hat = r.g_hat;
          offsets = r.offsets;
          row.iterations_used = r.iterations;
          break;
        }
        case EstimatorKind::EmBgAmp:
        case EstimatorKind::EmBgAmpMmv: {
          const OffGridOperator op(dict, OffGridParams::zeros(pt.grid), OffGridOperator::Mode::Factored);
          const EstimateResult r = em_bg_amp(rx.y, pilots, rx.noise_var, op, spec.amp);
          h_hat = r.h_hat;
          g_hat = r.g_hat;
          row.iterations_used = r.iterations;
          break;
        }
        case EstimatorKind::Omp:
        case EstimatorKind::Somp: {
          GreedyStop stop;
          if (spec.sparsity > 0) {
            stop.sparsity = spec.sparsity;
          } else if (spec.sparsity == 0) {
            stop.sparsity = pt.scenario.n_paths;
          }
          h_hat = CMatrix::Zero(dict.cols(), L);
          if (spec.kind == EstimatorKind::Somp) {
            if (spec.sparsity < 0) stop.residual_sq_stop = static_cast<double>(sys.rows()) * L * rx.noise_var;
            const GreedyResult r = somp(rx.y, pilots, dict.W, stop);
            h_hat = greedy_to_dad(r, dict.cols(), L);
            row.iterations_used = static_cast<int>(r.support.size());
          } else {
            if (spec.sparsity < 0) stop.residual_sq_stop = static_cast<double>(sys.rows()) * rx.noise_var;
            for (Index l = 0; l < L; ++l) {
              const GreedyResult r = omp(rx.y.col(l), pilots, dict.W, stop);
              h_hat.col(l) = greedy_to_dad(r, dict.cols(), 1).col(0);
              row.iterations_used += static_cast<int>(r.support.size());
            }
          }
          g_hat = dict.W * h_hat;
          break;
        }
      }
      row.estimation_nmse_db = nmse_db(G, g_hat);
      row.prediction_nmse_db = nmse_db(G_future, extrapolate(h_hat, offsets, dict, horizons));
    } catch (const DivergenceError& e) {
      row.diverged = true;
      row.iterations_used = e.iteration();
      row.estimation_nmse_db = 0.0;  // NMSE of the all-zero estimate
      row.prediction_nmse_db = 0.0;
    }
    if (cfg.record_wall_time)
      row.wall_time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    rows.push_back(row);
  }
  return rows;
}

std::vector<ResultRow> run_all(const ExperimentConfig& cfg, int workers) {
  if (workers < 1) throw ConfigError("workers must be >= 1");
  const std::size_t n_sweep = cfg.sweep_values.size();
  const std::size_t n_items = n_sweep * static_cast<std::size_t>(cfg.trials);
  std::vector<std::vector<ResultRow>> slots(n_items);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&]() {
    for (;;) {
      const std::size_t item = next.fetch_add(1);
      if (item >= n_items) return;
      try {
        slots[item] = run_trial(cfg, item / cfg.trials, static_cast<int>(item % cfg.trials));
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(n_items);
        return;
      }
    }
  };
  const int n_threads = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(workers), std::max<std::size_t>(n_items, 1)));
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  // Deterministic order: sweep index, estimator (config order), trial.
  std::vector<ResultRow> rows;
  rows.reserve(n_items * cfg.estimators.size());
  for (std::size_t s = 0; s < n_sweep; ++s)
    for (std::size_t e = 0; e < cfg.estimators.size(); ++e)
      for (int t = 0; t < cfg.trials; ++t) rows.push_back(slots[s * cfg.trials + t].at(e));
  return rows;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "sweep_value,estimator,trial,seed,estimation_nmse_db,prediction_nmse_db,iterations_used,wall_time_ms,diverged\n";
  for (const ResultRow& r : rows)
    os << fmt(r.sweep_value) << ',' << r.estimator << ',' << r.trial << ',' << r.seed << ','
       << fmt(r.estimation_nmse_db) << ',' << fmt(r.prediction_nmse_db) << ',' << r.iterations_used << ','
       << fmt(r.wall_time_ms) << ',' << (r.diverged ? 1 : 0) << '\n';
  return os.str();
}

std::vector<ResultRow> parse_results_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("results CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string header =
      "sweep_value,estimator,trial,seed,estimation_nmse_db,prediction_nmse_db,iterations_used,wall_time_ms,diverged";
  if (line != header) throw ConfigError("results CSV header mismatch: expected \"" + header + "\"");
  std::vector<ResultRow> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 9) throw ConfigError("results CSV line " + std::to_string(lineno) + ": expected 9 columns");
    try {
      ResultRow r;
      r.sweep_value = parse_double(cells[0]);
      r.estimator = cells[1];
      r.trial = std::stoi(cells[2]);
      r.seed = std::stoull(cells[3]);
      r.estimation_nmse_db = parse_double(cells[4]);
      r.prediction_nmse_db = parse_double(cells[5]);
      r.iterations_used = std::stoi(cells[6]);
      r.wall_time_ms = parse_double(cells[7]);
      r.diverged = cells[8] == "1";
      rows.push_back(r);
    } catch (const std::exception&) {
      throw ConfigError("results CSV line " + std::to_string(lineno) + ": malformed value");
    }
  }
  if (rows.empty()) throw ConfigError("results CSV has no data rows");
  return rows;
}

std::uint64_t config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string manifest_json(const ExperimentConfig& cfg, int workers) {
  json m;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(cfg.source_text)));
  m["config_hash"] = std::string("fnv1a64:") + hash;
  m["version"] = JCEP_VERSION;
  m["profile"] = cfg.profile;
  m["config_text"] = cfg.source_text;
  m["master_seed"] = cfg.master_seed;
  m["trials"] = cfg.trials;
  m["workers"] = workers;
  m["sweep"] = {{"axis", axis_key(cfg.sweep_axis)}, {"values", json::array()}};
  for (double v : cfg.sweep_values) m["sweep"]["values"].push_back(std::isinf(v) ? json("inf") : json(v));
  json pts = json::array();
  for (std::size_t i = 0; i < cfg.sweep_values.size(); ++i) {
    const SweepPoint pt = resolve_sweep_point(cfg, i);
    const SystemConfig& s = pt.system;
    pts.push_back({{"srs_len", s.srs_len},
                   {"m_v", s.m_v},
                   {"m_h", s.m_h},
                   {"n_soundings", s.n_soundings},
                   {"n_subbands", s.n_subbands},
                   {"n_comb", s.n_comb},
                   {"n_sc", s.n_sc},
                   {"n_fft", s.n_fft},
                   {"subcarrier_spacing_hz", s.subcarrier_spacing},
                   {"delta_f_hz", s.delta_f()},
                   {"symbol_duration_s", s.symbol_duration()},
                   {"slot_duration_s", s.slot_duration()},
                   {"dt_srs_s", s.dt_srs},
                   {"dT_full_s", s.dT_full},
                   {"hop_schedule", s.hop_schedule},
                   {"grid", {pt.grid.n_delay, pt.grid.n_elev, pt.grid.n_azim, pt.grid.n_doppler}},
                   {"doppler_max_hz", pt.scenario.doppler_max},
                   {"snr_db", std::isinf(pt.snr_db) ? json("inf") : json(pt.snr_db)}});
  }
  m["resolved_points"] = pts;
  json est = json::array();
  for (const EstimatorSpec& e : cfg.estimators) est.push_back(estimator_json(e));
  m["estimators"] = est;
  m["record_wall_time"] = cfg.record_wall_time;
  m["prediction_instants"] = cfg.prediction_instants;
  return m.dump(2) + "\n";
}

RunOutput run_experiment(const std::string& config_path, int workers,
                         const std::optional<std::string>& profile_override,
                         const std::optional<std::string>& output_dir_override) {
  ExperimentConfig cfg = load_config(config_path, profile_override);
  if (output_dir_override) cfg.output_dir = *output_dir_override;
  RunOutput out;
  out.rows = run_all(cfg, workers);
  fs::create_directories(cfg.output_dir);
  out.csv_path = (fs::path(cfg.output_dir) / "results.csv").string();
  out.manifest_path = (fs::path(cfg.output_dir) / "manifest.json").string();
  write_file(out.csv_path, results_csv(out.rows));
  write_file(out.manifest_path, manifest_json(cfg, workers));
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  if (rows.empty()) throw ConfigError("summarize: no rows");
  std::vector<SummaryRow> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  std::vector<std::vector<const ResultRow*>> groups;
  for (const ResultRow& r : rows) {
    const auto key = std::make_pair(fmt(r.sweep_value), r.estimator);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, groups.size()).first;
      groups.emplace_back();
      SummaryRow s;
      s.sweep_value = r.sweep_value;
      s.estimator = r.estimator;
      out.push_back(s);
    }
    groups[it->second].push_back(&r);
  }
  auto stats = [](const std::vector<double>& db, double& mean, double& sd) {
    double lin = 0.0, m = 0.0;
    for (double v : db) {
      lin += std::pow(10.0, v / 10.0);
      m += v;
    }
    lin /= static_cast<double>(db.size());
    m /= static_cast<double>(db.size());
    mean = lin > 0.0 ? std::max(kNmseFloorDb, 10.0 * std::log10(lin)) : kNmseFloorDb;
    double ss = 0.0;
    for (double v : db) ss += (v - m) * (v - m);
    sd = db.size() > 1 ? std::sqrt(ss / static_cast<double>(db.size() - 1)) : 0.0;
  };
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<double> est, pred;
    for (const ResultRow* r : groups[g]) {
      est.push_back(r->estimation_nmse_db);
      pred.push_back(r->prediction_nmse_db);
      out[g].diverged += r->diverged ? 1 : 0;
    }
    out[g].trials = static_cast<int>(groups[g].size());
    stats(est, out[g].estimation_mean_db, out[g].estimation_std_db);
    stats(pred, out[g].prediction_mean_db, out[g].prediction_std_db);
  }
  return out;
}

std::string summary_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << "sweep_value,estimator,trials,estimation_nmse_db_mean,estimation_nmse_db_std,prediction_nmse_db_mean,"
        "prediction_nmse_db_std,diverged\n";
  for (const SummaryRow& r : rows)
    os << fmt(r.sweep_value) << ',' << r.estimator << ',' << r.trials << ',' << fmt(r.estimation_mean_db) << ','
       << fmt(r.estimation_std_db) << ',' << fmt(r.prediction_mean_db) << ',' << fmt(r.prediction_std_db) << ','
       << r.diverged << '\n';
  return os.str();
}

ResultRow replay(const std::string& csv_path, std::size_t index) {
  const std::vector<ResultRow> rows = parse_results_csv(read_file(csv_path));
  if (index >= rows.size())
    throw ConfigError("replay: row " + std::to_string(index) + " out of range (" + std::to_string(rows.size()) +
                      " rows)");
  const ResultRow& target = rows[index];
  const fs::path manifest_path = fs::path(csv_path).parent_path() / "manifest.json";
  json m;
  try {
    m = json::parse(read_file(manifest_path.string()));
  } catch (const json::exception& e) {
    throw ConfigError("replay: cannot read " + manifest_path.string() + ": " + e.what());
  }
  const ExperimentConfig cfg =
      parse_config(m.at("config_text").get<std::string>(), manifest_path.string(), m.at("profile").get<std::string>());
  std::size_t sweep_index = cfg.sweep_values.size();
  for (std::size_t i = 0; i < cfg.sweep_values.size(); ++i)
    if (fmt(cfg.sweep_values[i]) == fmt(target.sweep_value)) sweep_index = i;
  if (sweep_index == cfg.sweep_values.size()) throw ConfigError("replay: sweep value not found in the manifest");
  std::size_t est_index = cfg.estimators.size();
  for (std::size_t i = 0; i < cfg.estimators.size(); ++i)
    if (target.estimator == estimator_name(cfg.estimators[i].kind)) est_index = i;
  if (est_index == cfg.estimators.size()) throw ConfigError("replay: estimator not found in the manifest");
  if (trial_seed(cfg.master_seed, sweep_index, target.trial) != target.seed)
    throw ConfigError("replay: row seed does not match the manifest's seed derivation");
  return run_trial(cfg, sweep_index, target.trial, {est_index}).at(0);
}

}  // namespace jcep
