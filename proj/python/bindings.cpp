#include "jcep/baselines.hpp"
#include "jcep/channel.hpp"
#include "jcep/dictionary.hpp"
#include "jcep/experiment.hpp"
#include "jcep/hmp.hpp"
#include "jcep/predict.hpp"
#include "jcep/steering.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

namespace py = pybind11;
using namespace jcep;

namespace {

py::dict offsets_dict(const OffGridParams& w) {
  py::dict d;
  d["delay"] = w.alpha;
  d["elevation"] = w.beta;
  d["azimuth"] = w.gamma;
  d["doppler"] = w.eta;
  return d;
}

py::dict estimate(const CMatrix& y, const CVector& pilots, double noise_var, const SystemConfig& cfg,
                  const std::string& estimator, int doppler_grid_size, const HmpOptions& hmp, int sparsity) {
  const GridSpec grid =
      GridSpec::from_config(cfg, doppler_grid_size > 0 ? doppler_grid_size : cfg.doppler_oversample * cfg.n_soundings);
  const EstimatorKind kind = estimator_from_name(estimator);
  const bool dense = kind == EstimatorKind::Omp || kind == EstimatorKind::Somp;
  const DictionarySet dict = build_dictionary(grid, cfg, dense);
  const Index L = y.cols();
  py::dict out;
  CMatrix h_hat;
  OffGridParams offsets = OffGridParams::zeros(grid);
  {
    py::gil_scoped_release release;
    switch (kind) {
      case EstimatorKind::Hmp: {
        HmpOptions o = hmp;
        o.operator_mode = OffGridOperator::Mode::Factored;
        const EstimateResult r = hmp_run(y, pilots, noise_var, dict, o);
        h_hat = r.h_hat;
        offsets = r.offsets;
        break;
      }
      case EstimatorKind::EmBgAmp:
      case EstimatorKind::EmBgAmpMmv: {
        AmpOptions a;
        a.mmv = kind == EstimatorKind::EmBgAmpMmv;
        const OffGridOperator op(dict, offsets, OffGridOperator::Mode::Factored);
        h_hat = em_bg_amp(y, pilots, noise_var, op, a).h_hat;
        break;
      }
      case EstimatorKind::Omp:
      case EstimatorKind::Somp: {
        if (sparsity < 1) throw ConfigError("greedy estimators need sparsity >= 1");
        GreedyStop stop;
        stop.sparsity = sparsity;
        if (kind == EstimatorKind::Somp) {
          h_hat = greedy_to_dad(somp(y, pilots, dict.W, stop), dict.cols(), L);
        } else {
          h_hat = CMatrix::Zero(dict.cols(), L);
          for (Index l = 0; l < L; ++l)
            h_hat.col(l) = greedy_to_dad(omp(y.col(l), pilots, dict.W, stop), dict.cols(), 1).col(0);
        }
        break;
      }
    }
  }
  const OffGridOperator op(dict, offsets, OffGridOperator::Mode::Factored);
  out["h_hat"] = h_hat;
  out["g_hat"] = CMatrix(op.apply(h_hat));
  out["offsets"] = offsets_dict(offsets);
  out["prediction_horizons"] = default_horizons(cfg);
  out["prediction"] = extrapolate(h_hat, offsets, dict, default_horizons(cfg));
  return out;
}

std::vector<py::dict> paths_list(const PathSet& ps) {
  std::vector<py::dict> out;
  for (const Path& p : ps.paths) {
    py::dict d;
    d["delay"] = p.delay;
    d["elev_cos"] = p.elev_cos;
    d["azim_cos"] = p.azim_cos;
    d["doppler"] = p.doppler;
    d["gain"] = p.gain;
    out.push_back(d);
  }
  return out;
}

PathSet paths_from(const std::vector<py::dict>& in) {
  PathSet ps;
  for (const py::dict& d : in) {
    Path p;
    p.delay = d["delay"].cast<double>();
    p.elev_cos = d["elev_cos"].cast<double>();
    p.azim_cos = d["azim_cos"].cast<double>();
    p.doppler = d["doppler"].cast<double>();
    p.gain = d["gain"].cast<cplx>();
    ps.paths.push_back(p);
  }
  return ps;
}

}  // namespace

PYBIND11_MODULE(_jcep, m) {
  m.doc() = "Joint channel estimation and prediction for frequency-hopping SRS";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  py::class_<SystemConfig>(m, "SystemConfig")
      .def(py::init<>())
      .def_static("desk_profile", &SystemConfig::desk_profile)
      .def_static("paper_profile", &SystemConfig::paper_profile)
      .def_readwrite("n_fft", &SystemConfig::n_fft)
      .def_readwrite("n_sc", &SystemConfig::n_sc)
      .def_readwrite("subcarrier_spacing", &SystemConfig::subcarrier_spacing)
      .def_readwrite("n_subbands", &SystemConfig::n_subbands)
      .def_readwrite("n_comb", &SystemConfig::n_comb)
      .def_readwrite("srs_len", &SystemConfig::srs_len)
      .def_readwrite("m_v", &SystemConfig::m_v)
      .def_readwrite("m_h", &SystemConfig::m_h)
      .def_readwrite("n_soundings", &SystemConfig::n_soundings)
      .def_readwrite("doppler_oversample", &SystemConfig::doppler_oversample)
      .def_readwrite("dt_srs", &SystemConfig::dt_srs)
      .def_readwrite("dT_full", &SystemConfig::dT_full)
      .def_readwrite("hop_schedule", &SystemConfig::hop_schedule)
      .def_readwrite("carrier_freq", &SystemConfig::carrier_freq)
      .def_property_readonly("rows", &SystemConfig::rows)
      .def_property_readonly("delta_f", &SystemConfig::delta_f)
      .def("validate", &SystemConfig::validate);

  py::class_<GridSpec>(m, "GridSpec")
      .def_static("from_config", py::overload_cast<const SystemConfig&, int>(&GridSpec::from_config),
                  py::arg("config"), py::arg("n_doppler"))
      .def_readonly("n_delay", &GridSpec::n_delay)
      .def_readonly("n_elev", &GridSpec::n_elev)
      .def_readonly("n_azim", &GridSpec::n_azim)
      .def_readonly("n_doppler", &GridSpec::n_doppler)
      .def_readonly("delay_grid", &GridSpec::delay_grid)
      .def_readonly("elev_cos_grid", &GridSpec::elev_cos_grid)
      .def_readonly("azim_cos_grid", &GridSpec::azim_cos_grid)
      .def_readonly("doppler_grid", &GridSpec::doppler_grid)
      .def_property_readonly("columns", &GridSpec::columns);

  py::class_<Scenario>(m, "Scenario")
      .def(py::init<>())
      .def_readwrite("n_paths", &Scenario::n_paths)
      .def_readwrite("delay_spread", &Scenario::delay_spread)
      .def_readwrite("doppler_max", &Scenario::doppler_max)
      .def_readwrite("on_grid", &Scenario::on_grid)
      .def_readwrite("subpaths", &Scenario::subpaths)
      .def_readwrite("subpath_doppler_spread", &Scenario::subpath_doppler_spread);

  py::class_<HmpOptions>(m, "HmpOptions")
      .def(py::init<>())
      .def_readwrite("outer_iters", &HmpOptions::outer_iters)
      .def_readwrite("inner_iters", &HmpOptions::inner_iters)
      .def_readwrite("damping", &HmpOptions::damping)
      .def_readwrite("learn_offgrid", &HmpOptions::learn_offgrid)
      .def_readwrite("offset_ridge", &HmpOptions::offset_ridge)
      .def_readwrite("finite_size_terms", &HmpOptions::finite_size_terms)
      .def_readwrite("shared_support", &HmpOptions::shared_support);

  m.def("steering_delay", &steering_delay, py::arg("tau"), py::arg("n"), py::arg("delta_f"));
  m.def("doppler_from_speed", &doppler_from_speed, py::arg("velocity_kmh"), py::arg("carrier_freq"));
  m.def(
      "sample_paths",
      [](const Scenario& sc, const GridSpec& g, const SystemConfig& c, std::uint64_t seed) {
        return paths_list(sample_paths(sc, g, c, seed));
      },
      py::arg("scenario"), py::arg("grid"), py::arg("config"), py::arg("seed"));
  m.def(
      "synth_channel", [](const std::vector<py::dict>& paths, const SystemConfig& c) {
        return synth_fst_channel(paths_from(paths), c);
      },
      py::arg("paths"), py::arg("config"), "FST-domain channel, rows NMK, one column per hop");
  m.def("qpsk_pilots", &qpsk_pilots, py::arg("n"), py::arg("seed"));
  m.def(
      "synth_received",
      [](const CMatrix& g, const CVector& pilots, double snr_db, std::uint64_t seed) {
        const ReceivedSignal r = synth_received(g, pilots, snr_db, seed);
        return py::make_tuple(r.y, r.noise_var);
      },
      py::arg("g"), py::arg("pilots"), py::arg("snr_db"), py::arg("seed"), "Returns (y, noise_var)");
  m.def("nmse_db", &nmse_db, py::arg("truth"), py::arg("estimate"));
  m.def("estimate", &estimate, py::arg("y"), py::arg("pilots"), py::arg("noise_var"), py::arg("config"),
        py::arg("estimator") = "hmp", py::arg("doppler_grid_size") = 0, py::arg("hmp_options") = HmpOptions(),
        py::arg("sparsity") = 0,
        "Runs one estimator; returns h_hat, g_hat, offsets and the extrapolated channel");
  m.def(
      "run_experiment",
      [](const std::string& config_path, int workers, const std::string& output_dir) {
        RunOutput out;
        {
          py::gil_scoped_release release;
          out = run_experiment(config_path, workers, std::nullopt,
                               output_dir.empty() ? std::nullopt : std::optional<std::string>(output_dir));
        }
        return py::make_tuple(out.csv_path, out.manifest_path);
      },
      py::arg("config_path"), py::arg("workers") = 1, py::arg("output_dir") = "",
      "Runs a JSON experiment; returns (results.csv, manifest.json) paths");
  m.def(
      "summarize_csv",
      [](const std::string& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot read " + path);
        std::ostringstream ss;
        ss << f.rdbuf();
        return summary_csv(summarize(parse_results_csv(ss.str())));
      },
      py::arg("csv_path"));
}
