#pragma once

// Experiment harness: JSON config ingestion with strict key checking, the four
// experiment drivers (simulate / decay / scatter / lifespan), and persistence
// (atomic CSV / JSON / plot-data emission).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "rsw/diagnostics.hpp"

namespace rsw {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  // grid
  int n = 256;
  double box_length = 32.0 * M_PI;
  double dealias_fraction = 2.0 / 3.0;
  // data
  double delta = 0.0;  // required in every config file
  double epsilon = 0.0;
  double profile_width = 2.0;
  std::uint64_t seed = 1;
  std::vector<double> epsilon_list;  // lifespan sweeps
  // integrator (dt and cfl_number are mutually exclusive; dt wins when set)
  std::optional<double> dt;
  double cfl_number = 0.8;
  double t_end = 20.0;
  double checkpoint_interval = 0.5;
  double blowup_threshold = 10.0;
  std::string formulation = "symmetrized";
  // diagnostics
  int vf_max_order = 2;
  double fit_t_min = 1.0;
  std::optional<double> fit_t_max;  // absent: automatic wrap-around guard
  double support_threshold = 1e-10;
  double scatter_match_time = 10.0;
  double scatter_fit_offset = 5.0;
  double lifespan_threshold_factor = 10.0;
  // output
  std::string directory = "out";
  std::vector<std::string> formats = {"csv", "json"};
};

namespace detail {

using nlohmann::json;

inline void cfg_check_keys(const json& obj, const std::string& prefix,
                           std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (item.key() == a) {
        ok = true;
        break;
      }
    if (!ok)
      throw ConfigError("unknown config key \"" + (prefix.empty() ? "" : prefix + ".") +
                        item.key() + "\"");
  }
}

inline const json* cfg_find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline double cfg_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError("config key \"" + path + "\" must be a number");
  return v.get<double>();
}

inline int cfg_integer(const json& v, const std::string& path) {
  if (!v.is_number_integer()) throw ConfigError("config key \"" + path + "\" must be an integer");
  return v.get<int>();
}

inline std::uint64_t cfg_uint(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError("config key \"" + path + "\" must be a nonnegative integer");
}

inline std::string cfg_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError("config key \"" + path + "\" must be a string");
  return v.get<std::string>();
}

}  // namespace detail

// Builds a config from parsed JSON. Unknown keys anywhere are hard errors
// naming the offending dotted path; a missing data.delta is a hard error too.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::cfg_find;
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  detail::cfg_check_keys(j, "", {"grid", "data", "integrator", "diagnostics", "output"});

  ExperimentConfig c;

  if (const auto* g = cfg_find(j, "grid")) {
    if (!g->is_object()) throw ConfigError("config key \"grid\" must be an object");
    detail::cfg_check_keys(*g, "grid", {"n", "box_length", "dealias_fraction"});
    if (const auto* v = cfg_find(*g, "n")) c.n = detail::cfg_integer(*v, "grid.n");
    if (const auto* v = cfg_find(*g, "box_length"))
      c.box_length = detail::cfg_number(*v, "grid.box_length");
    if (const auto* v = cfg_find(*g, "dealias_fraction"))
      c.dealias_fraction = detail::cfg_number(*v, "grid.dealias_fraction");
  }

  const auto* d = cfg_find(j, "data");
  if (!d) throw ConfigError("missing required config key \"data.delta\"");
  if (!d->is_object()) throw ConfigError("config key \"data\" must be an object");
  detail::cfg_check_keys(*d, "data",
                         {"delta", "epsilon", "profile_width", "seed", "epsilon_list"});
  if (const auto* v = cfg_find(*d, "delta"))
    c.delta = detail::cfg_number(*v, "data.delta");
  else
    throw ConfigError("missing required config key \"data.delta\"");
  if (const auto* v = cfg_find(*d, "epsilon")) c.epsilon = detail::cfg_number(*v, "data.epsilon");
  if (const auto* v = cfg_find(*d, "profile_width"))
    c.profile_width = detail::cfg_number(*v, "data.profile_width");
  if (const auto* v = cfg_find(*d, "seed")) c.seed = detail::cfg_uint(*v, "data.seed");
  if (const auto* v = cfg_find(*d, "epsilon_list")) {
    if (!v->is_array()) throw ConfigError("config key \"data.epsilon_list\" must be an array");
    for (const auto& e : *v) c.epsilon_list.push_back(detail::cfg_number(e, "data.epsilon_list"));
  }

  if (const auto* in = cfg_find(j, "integrator")) {
    if (!in->is_object()) throw ConfigError("config key \"integrator\" must be an object");
    detail::cfg_check_keys(*in, "integrator",
                           {"dt", "cfl_number", "t_end", "checkpoint_interval",
                            "blowup_threshold", "formulation"});
    const auto* vdt = cfg_find(*in, "dt");
    const auto* vcfl = cfg_find(*in, "cfl_number");
    if (vdt && vcfl)
      throw ConfigError(
          "config keys \"integrator.dt\" and \"integrator.cfl_number\" are mutually exclusive");
    if (vdt) c.dt = detail::cfg_number(*vdt, "integrator.dt");
    if (vcfl) c.cfl_number = detail::cfg_number(*vcfl, "integrator.cfl_number");
    if (const auto* v = cfg_find(*in, "t_end")) c.t_end = detail::cfg_number(*v, "integrator.t_end");
    if (const auto* v = cfg_find(*in, "checkpoint_interval"))
      c.checkpoint_interval = detail::cfg_number(*v, "integrator.checkpoint_interval");
    if (const auto* v = cfg_find(*in, "blowup_threshold"))
      c.blowup_threshold = detail::cfg_number(*v, "integrator.blowup_threshold");
    if (const auto* v = cfg_find(*in, "formulation")) {
      c.formulation = detail::cfg_string(*v, "integrator.formulation");
      if (c.formulation != "primitive" && c.formulation != "symmetrized")
        throw ConfigError("config key \"integrator.formulation\" must be \"primitive\" or "
                          "\"symmetrized\", got \"" +
                          c.formulation + "\"");
    }
  }

  if (const auto* dg = cfg_find(j, "diagnostics")) {
    if (!dg->is_object()) throw ConfigError("config key \"diagnostics\" must be an object");
    detail::cfg_check_keys(*dg, "diagnostics",
                           {"vf_max_order", "fit_t_min", "fit_t_max", "support_threshold",
                            "scatter_match_time", "scatter_fit_offset",
                            "lifespan_threshold_factor"});
    if (const auto* v = cfg_find(*dg, "vf_max_order"))
      c.vf_max_order = detail::cfg_integer(*v, "diagnostics.vf_max_order");
    if (const auto* v = cfg_find(*dg, "fit_t_min"))
      c.fit_t_min = detail::cfg_number(*v, "diagnostics.fit_t_min");
    if (const auto* v = cfg_find(*dg, "fit_t_max"))
      c.fit_t_max = detail::cfg_number(*v, "diagnostics.fit_t_max");
    if (const auto* v = cfg_find(*dg, "support_threshold"))
      c.support_threshold = detail::cfg_number(*v, "diagnostics.support_threshold");
    if (const auto* v = cfg_find(*dg, "scatter_match_time"))
      c.scatter_match_time = detail::cfg_number(*v, "diagnostics.scatter_match_time");
    if (const auto* v = cfg_find(*dg, "scatter_fit_offset"))
      c.scatter_fit_offset = detail::cfg_number(*v, "diagnostics.scatter_fit_offset");
    if (const auto* v = cfg_find(*dg, "lifespan_threshold_factor"))
      c.lifespan_threshold_factor = detail::cfg_number(*v, "diagnostics.lifespan_threshold_factor");
  }

  if (const auto* o = cfg_find(j, "output")) {
    if (!o->is_object()) throw ConfigError("config key \"output\" must be an object");
    detail::cfg_check_keys(*o, "output", {"directory", "formats"});
    if (const auto* v = cfg_find(*o, "directory"))
      c.directory = detail::cfg_string(*v, "output.directory");
    if (const auto* v = cfg_find(*o, "formats")) {
      if (!v->is_array()) throw ConfigError("config key \"output.formats\" must be an array");
      c.formats.clear();
      for (const auto& f : *v) {
        std::string s = detail::cfg_string(f, "output.formats");
        if (s != "csv" && s != "json")
          throw ConfigError("config key \"output.formats\" entries must be \"csv\" or \"json\", "
                            "got \"" + s + "\"");
        c.formats.push_back(s);
      }
    }
  }

  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file \"" + path + "\"");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file \"" + path + "\" is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// Canonical JSON image of the effective config. Feeding this back through
// parse_config reproduces the struct exactly; exactly one of dt / cfl_number
// is emitted.
inline nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["grid"] = {{"n", c.n}, {"box_length", c.box_length}, {"dealias_fraction", c.dealias_fraction}};
  j["data"] = {{"delta", c.delta},
               {"epsilon", c.epsilon},
               {"profile_width", c.profile_width},
               {"seed", c.seed}};
  if (!c.epsilon_list.empty()) j["data"]["epsilon_list"] = c.epsilon_list;
  j["integrator"] = {{"t_end", c.t_end},
                     {"checkpoint_interval", c.checkpoint_interval},
                     {"blowup_threshold", c.blowup_threshold},
                     {"formulation", c.formulation}};
  if (c.dt)
    j["integrator"]["dt"] = *c.dt;
  else
    j["integrator"]["cfl_number"] = c.cfl_number;
  j["diagnostics"] = {{"vf_max_order", c.vf_max_order},
                      {"fit_t_min", c.fit_t_min},
                      {"support_threshold", c.support_threshold},
                      {"scatter_match_time", c.scatter_match_time},
                      {"scatter_fit_offset", c.scatter_fit_offset},
                      {"lifespan_threshold_factor", c.lifespan_threshold_factor}};
  if (c.fit_t_max) j["diagnostics"]["fit_t_max"] = *c.fit_t_max;
  j["output"] = {{"directory", c.directory}, {"formats", c.formats}};
  return j;
}

// FNV-1a (64-bit) of the canonical config dump, as 16 hex digits. Computed
// after command-line overrides are applied, so the hash identifies the run.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string s = config_json(c).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline GridSpec grid_from(const ExperimentConfig& c) {
  return make_grid(c.n, c.box_length, c.dealias_fraction);
}

struct RunFlags {
  bool linear_only = false;
  int workers = 1;
};

inline IntegratorConfig integrator_from(const ExperimentConfig& c, const RunFlags& flags) {
  IntegratorConfig ic;
  if (c.dt) ic.dt = *c.dt;
  ic.cfl_number = c.cfl_number;
  ic.t_end = c.t_end;
  ic.checkpoint_interval = c.checkpoint_interval;
  ic.blowup_threshold = c.blowup_threshold;
  ic.formulation =
      c.formulation == "primitive" ? Formulation::primitive : Formulation::symmetrized;
  ic.linear_only = flags.linear_only;
  ic.store_checkpoints = false;
  return ic;
}

inline DiagnosticsOptions diagnostics_from(const ExperimentConfig& c, const RunFlags& flags) {
  DiagnosticsOptions opt;
  opt.vf_max_order = c.vf_max_order;
  opt.support_threshold = c.support_threshold;
  opt.linear_only = flags.linear_only;
  return opt;
}

// ---------------------------------------------------------------------------
// Output emission
// ---------------------------------------------------------------------------

namespace detail {

namespace fs = std::filesystem;

inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Write-temp-then-rename so readers never observe a partial file.
inline void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write file \"" + tmp.string() + "\"");
    out << content;
    if (!out) throw Error("short write to \"" + tmp.string() + "\"");
  }
  fs::rename(tmp, path);
}

inline std::string records_csv(const std::vector<DiagnosticsRecord>& recs,
                               const std::vector<double>* h3 = nullptr) {
  std::string out = h3 ? "time,sup_norm,l2_U,l2_dU,h3_E,theta_max,theta_integral,energy_F,"
                         "support_radius\n"
                       : "time,sup_norm,l2_U,l2_dU,theta_max,theta_integral,energy_F,"
                         "support_radius\n";
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const DiagnosticsRecord& r = recs[i];
    out += fmt17(r.time) + "," + fmt17(r.sup_norm) + "," + fmt17(r.l2_U) + "," + fmt17(r.l2_dU);
    if (h3) out += "," + fmt17((*h3)[i]);
    out += "," + fmt17(r.theta_max) + "," + fmt17(r.theta_integral) + "," + fmt17(r.energy_F) +
           "," + fmt17(r.support_radius) + "\n";
  }
  return out;
}

}  // namespace detail

struct PlotSeries {
  std::string name;  // written as plot_<name>.csv
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<std::pair<double, double>> points;
};

// Emits each series as a bare two-column x,y CSV plus a manifest describing
// axes and scales; no plotting library is invoked.
inline void emit_plots(const std::string& directory, const std::vector<PlotSeries>& plots) {
  namespace fs = std::filesystem;
  nlohmann::json manifest = nlohmann::json::array();
  for (const PlotSeries& p : plots) {
    std::string csv = "x,y\n";
    for (const auto& [x, y] : p.points) csv += detail::fmt17(x) + "," + detail::fmt17(y) + "\n";
    const std::string file = "plot_" + p.name + ".csv";
    detail::write_file_atomic(fs::path(directory) / file, csv);
    manifest.push_back({{"name", p.name},
                        {"file", file},
                        {"title", p.title},
                        {"x_label", p.x_label},
                        {"y_label", p.y_label},
                        {"log_x", p.log_x},
                        {"log_y", p.log_y}});
  }
  detail::write_file_atomic(fs::path(directory) / "plot_manifest.json", manifest.dump(2) + "\n");
}

namespace detail {

struct OutputWriter {
  std::string dir;
  bool want_csv = true;
  bool want_json = true;

  OutputWriter(const ExperimentConfig& c) : dir(c.directory) {
    want_csv = std::find(c.formats.begin(), c.formats.end(), "csv") != c.formats.end();
    want_json = std::find(c.formats.begin(), c.formats.end(), "json") != c.formats.end();
  }
  void csv(const std::string& name, const std::string& content) const {
    if (want_csv) write_file_atomic(fs::path(dir) / name, content);
  }
  void json_file(const std::string& name, const nlohmann::json& j) const {
    if (want_json) write_file_atomic(fs::path(dir) / name, j.dump(2) + "\n");
  }
};

inline nlohmann::json termination_json(const Termination& t) {
  return {{"kind", to_string(t.kind)}, {"time", t.time}};
}

inline nlohmann::json fit_json(const FitResult& f) {
  return {{"exponent", f.exponent},
          {"prefactor", f.prefactor},
          {"window", {f.t_min, f.t_max}},
          {"residual", f.residual},
          {"samples", f.samples}};
}

inline nlohmann::json final_norms_json(const DiagnosticsRecord& r) {
  return {{"sup_norm", r.sup_norm}, {"l2_U", r.l2_U},           {"l2_dU", r.l2_dU},
          {"energy_F", r.energy_F}, {"x_proxy", r.x_proxy},     {"max_coeff_inf", r.max_coeff_inf},
          {"theta_max", r.theta_max}};
}

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateResult {
  std::vector<DiagnosticsRecord> records;
  Termination termination;
  double t_final = 0.0;
  double theta_drift = 0.0;       // max_t |integral theta(t) - integral theta(0)|
  double theta_max_overall = 0.0; // max_t max_x |theta|
  double dt_used = 0.0;
  double runtime_seconds = 0.0;
  std::string hash;
};

namespace detail {

inline SimulateResult run_streaming(const PrimitiveState& initial, const IntegratorConfig& icfg,
                                    const DiagnosticsOptions& dopt, const std::string& hash) {
  Stopwatch clock;
  SimulateResult res;
  Trajectory traj = integrate(initial, icfg, [&](const Checkpoint& c) {
    res.records.push_back(compute_diagnostics(c.state, dopt));
    return true;
  });
  res.termination = traj.termination;
  res.t_final = traj.termination.time;
  res.dt_used = traj.dt_used;
  res.hash = hash;
  if (!res.records.empty()) {
    const double base = res.records.front().theta_integral;
    for (const DiagnosticsRecord& r : res.records) {
      res.theta_drift = std::max(res.theta_drift, std::abs(r.theta_integral - base));
      res.theta_max_overall = std::max(res.theta_max_overall, r.theta_max);
    }
  }
  res.runtime_seconds = clock.seconds();
  return res;
}

inline nlohmann::json summary_common(const SimulateResult& r, const ExperimentConfig& c,
                                     const RunFlags& flags, const char* command) {
  nlohmann::json j;
  j["command"] = command;
  j["termination"] = termination_json(r.termination);
  j["t_final"] = r.t_final;
  j["fit"] = nullptr;
  j["config_hash"] = r.hash;
  j["runtime_seconds"] = r.runtime_seconds;
  j["dt_used"] = r.dt_used;
  j["linear_only"] = flags.linear_only;
  j["grid"] = {{"n", c.n}, {"box_length", c.box_length}};
  j["theta"] = {{"integral_drift", r.theta_drift}, {"max_abs", r.theta_max_overall}};
  if (!r.records.empty()) j["final_norms"] = final_norms_json(r.records.back());
  return j;
}

}  // namespace detail

// Runs the configured initial data to t_end, streaming per-checkpoint
// diagnostics; writes <out>/simulate.csv, simulate_summary.json and plot data.
inline SimulateResult cmd_simulate(const ExperimentConfig& cfg, const RunFlags& flags = {}) {
  const GridSpec g = grid_from(cfg);
  PrimitiveState data =
      make_initial_data(cfg.delta, cfg.epsilon, ProfileSpec{cfg.profile_width}, cfg.seed, g);
  SimulateResult res = detail::run_streaming(data, integrator_from(cfg, flags),
                                             diagnostics_from(cfg, flags), config_hash(cfg));

  detail::OutputWriter out(cfg);
  out.csv("simulate.csv", detail::records_csv(res.records));
  out.json_file("simulate_summary.json", detail::summary_common(res, cfg, flags, "simulate"));
  std::vector<PlotSeries> plots(2);
  plots[0] = {"sup_norm", "Amplitude decay", "t", "sup |U|", false, true, {}};
  plots[1] = {"theta_max", "Relative vorticity", "t", "max |theta|", false, false, {}};
  for (const DiagnosticsRecord& r : res.records) {
    plots[0].points.push_back({r.time, r.sup_norm});
    plots[1].points.push_back({r.time, r.theta_max});
  }
  emit_plots(cfg.directory, plots);
  return res;
}

// ---------------------------------------------------------------------------
// decay
// ---------------------------------------------------------------------------

struct DecayResult {
  SimulateResult run;
  FitResult fit;
  double discarded_norm = 0.0;  // H^3 size of the dropped vortical part
  double window_lo = 0.0;
  double window_hi = 0.0;
};

namespace detail {

// Zero-relative-vorticity data for the wave experiments: whatever epsilon the
// config carries, the vortical complement is projected out; its measured H^3
// size is returned so the discard is visible.
inline PrimitiveState wave_only_data(const ExperimentConfig& cfg, const GridSpec& g,
                                     double* discarded) {
  PrimitiveState full =
      make_initial_data(cfg.delta, cfg.epsilon, ProfileSpec{cfg.profile_width}, cfg.seed, g);
  ZeroRvSplit split = project_zero_rv(full);
  *discarded =
      weighted_norm(Triple(split.E.rho, split.E.u.u1, split.E.u.u2), NormSpec::sobolev(3.0));
  split.K.time = 0.0;
  return split.K;
}

// Automatic upper fit limit: stop before the outgoing wave wraps around the
// periodic box (half the box minus the initial support radius), and never past
// the end of the run.
inline double wrap_guard_hi(const ExperimentConfig& cfg,
                            const std::vector<DiagnosticsRecord>& recs, double t_final) {
  double hi = cfg.fit_t_max ? *cfg.fit_t_max
                            : 0.5 * cfg.box_length - (recs.empty() ? 0.0 : recs.front().support_radius);
  return std::min(hi, t_final);
}

inline int samples_in(const std::vector<std::pair<double, double>>& series, double lo, double hi) {
  int k = 0;
  for (const auto& [t, v] : series)
    if (t >= lo - 1e-12 && t <= hi + 1e-12) ++k;
  return k;
}

}  // namespace detail

// Decay-rate experiment on zero-relative-vorticity data: fits
// sup|U(t)| ~ prefactor * (1+t)^(-exponent) over an automatic window that
// starts at fit_t_min and ends before the wave wraps around the box.
inline DecayResult cmd_decay(const ExperimentConfig& cfg, const RunFlags& flags = {}) {
  const GridSpec g = grid_from(cfg);
  DecayResult res;
  PrimitiveState data = detail::wave_only_data(cfg, g, &res.discarded_norm);
  res.run = detail::run_streaming(data, integrator_from(cfg, flags), diagnostics_from(cfg, flags),
                                  config_hash(cfg));

  std::vector<std::pair<double, double>> series;
  for (const DiagnosticsRecord& r : res.run.records) series.push_back({r.time, r.sup_norm});
  res.window_lo = cfg.fit_t_min;
  res.window_hi = detail::wrap_guard_hi(cfg, res.run.records, res.run.t_final);
  const int k = detail::samples_in(series, res.window_lo, res.window_hi);
  if (k < 5)
    throw FitError("decay fit window [" + std::to_string(res.window_lo) + ", " +
                   std::to_string(res.window_hi) + "] contains only " + std::to_string(k) +
                   " checkpoints (need 5); use a larger box_length, a longer t_end, or a smaller "
                   "checkpoint_interval");
  res.fit = fit_decay(series, res.window_lo, res.window_hi);

  detail::OutputWriter out(cfg);
  out.csv("decay.csv", detail::records_csv(res.run.records));
  nlohmann::json j = detail::summary_common(res.run, cfg, flags, "decay");
  j["fit"] = detail::fit_json(res.fit);
  j["discarded_vortical_norm"] = res.discarded_norm;
  out.json_file("decay_summary.json", j);

  std::vector<PlotSeries> plots(2);
  plots[0] = {"decay", "Amplitude decay", "1+t", "sup |U|", true, true, {}};
  plots[1] = {"decay_fit", "Fitted decay model", "1+t", "sup |U|", true, true, {}};
  for (const auto& [t, v] : series) {
    plots[0].points.push_back({1.0 + t, v});
    if (t >= res.window_lo - 1e-12 && t <= res.window_hi + 1e-12)
      plots[1].points.push_back(
          {1.0 + t, res.fit.prefactor * std::pow(1.0 + t, -res.fit.exponent)});
  }
  emit_plots(cfg.directory, plots);
  return res;
}

// ---------------------------------------------------------------------------
// scatter
// ---------------------------------------------------------------------------

struct ScatterResult {
  SimulateResult run;
  std::vector<ScatterPoint> series;
  FitResult fit;  // meaningful only when fit_done
  bool fit_done = false;
  bool exact_match = false;  // linear-only runs: differences at rounding level
  bool non_increasing = false;
  double max_uptick = 0.0;  // largest increase of diff_U inside the window
  double max_diff_U = 0.0;  // over the whole sampled range
  double window_lo = 0.0;
  double window_hi = 0.0;
  double match_time = 0.0;
};

// Free-flow comparison experiment: matches the linear flow at
// scatter_match_time and tracks the H^l distance afterwards. Linear-only runs
// must reproduce the free flow to rounding, so the fit is skipped there.
inline ScatterResult cmd_scatter(const ExperimentConfig& cfg, const RunFlags& flags = {}) {
  const GridSpec g = grid_from(cfg);
  ScatterResult res;
  res.match_time = cfg.scatter_match_time;
  double discarded = 0.0;
  PrimitiveState data = detail::wave_only_data(cfg, g, &discarded);

  detail::Stopwatch clock;
  IntegratorConfig icfg = integrator_from(cfg, flags);
  icfg.store_checkpoints = true;  // the comparison needs the states themselves
  if (res.match_time > icfg.t_end + 1e-9)
    throw RangeError("scatter match time " + std::to_string(res.match_time) +
                     " exceeds t_end " + std::to_string(icfg.t_end));
  const DiagnosticsOptions dopt = diagnostics_from(cfg, flags);
  Trajectory traj = integrate(data, icfg, [&](const Checkpoint& c) {
    res.run.records.push_back(compute_diagnostics(c.state, dopt));
    return true;
  });
  res.run.termination = traj.termination;
  res.run.t_final = traj.termination.time;
  res.run.dt_used = traj.dt_used;
  res.run.hash = config_hash(cfg);
  if (!res.run.records.empty()) {
    const double base = res.run.records.front().theta_integral;
    for (const DiagnosticsRecord& r : res.run.records) {
      res.run.theta_drift = std::max(res.run.theta_drift, std::abs(r.theta_integral - base));
      res.run.theta_max_overall = std::max(res.run.theta_max_overall, r.theta_max);
    }
  }

  std::vector<double> sample_times;
  for (const Checkpoint& c : traj.checkpoints)
    if (c.time >= res.match_time - 1e-9) sample_times.push_back(c.time);
  if (sample_times.empty())
    throw RangeError("no checkpoints at or after the scatter match time; the match time must "
                     "coincide with a checkpoint");
  res.series = scattering_diagnostic(traj, res.match_time, sample_times, 2.0);
  for (const ScatterPoint& p : res.series) res.max_diff_U = std::max(res.max_diff_U, p.diff_U);

  res.window_lo = res.match_time + cfg.scatter_fit_offset;
  res.window_hi = detail::wrap_guard_hi(cfg, res.run.records, res.run.t_final);

  if (flags.linear_only) {
    res.exact_match = res.max_diff_U <= 1e-10;
    res.fit_done = false;
  } else {
    std::vector<std::pair<double, double>> series;
    for (const ScatterPoint& p : res.series) series.push_back({p.time, p.diff_U});
    const int k = detail::samples_in(series, res.window_lo, res.window_hi);
    if (k < 5)
      throw FitError("scatter fit window [" + std::to_string(res.window_lo) + ", " +
                     std::to_string(res.window_hi) + "] contains only " + std::to_string(k) +
                     " checkpoints (need 5); use a larger box_length or a longer t_end");
    res.fit = fit_decay(series, res.window_lo, res.window_hi);
    res.fit_done = true;
  }

  // Monotonicity of the free-flow distance inside the fit window.
  res.non_increasing = true;
  double prev = std::numeric_limits<double>::infinity();
  for (const ScatterPoint& p : res.series) {
    if (p.time < res.window_lo - 1e-12 || p.time > res.window_hi + 1e-12) continue;
    if (std::isfinite(prev)) {
      res.max_uptick = std::max(res.max_uptick, p.diff_U - prev);
      if (p.diff_U > prev * (1.0 + 1e-12) + 1e-300) res.non_increasing = false;
    }
    prev = p.diff_U;
  }
  res.run.runtime_seconds = clock.seconds();

  detail::OutputWriter out(cfg);
  out.csv("scatter.csv", detail::records_csv(res.run.records));
  std::string scsv = "time,diff_U,diff_Ut\n";
  for (const ScatterPoint& p : res.series)
    scsv += detail::fmt17(p.time) + "," + detail::fmt17(p.diff_U) + "," + detail::fmt17(p.diff_Ut) +
            "\n";
  out.csv("scatter_series.csv", scsv);

  nlohmann::json j = detail::summary_common(res.run, cfg, flags, "scatter");
  if (res.fit_done) j["fit"] = detail::fit_json(res.fit);
  j["match_time"] = res.match_time;
  j["fit_skipped"] = !res.fit_done;
  j["exact_match"] = res.exact_match;
  j["max_diff_U"] = res.max_diff_U;
  j["non_increasing"] = res.non_increasing;
  j["max_uptick"] = res.max_uptick;
  j["discarded_vortical_norm"] = discarded;
  out.json_file("scatter_summary.json", j);

  PlotSeries plot{"scatter_diff", "Distance to matched free flow", "t", "H^2 difference",
                  false, true, {}};
  for (const ScatterPoint& p : res.series) plot.points.push_back({p.time, p.diff_U});
  emit_plots(cfg.directory, {plot});
  return res;
}

// ---------------------------------------------------------------------------
// lifespan
// ---------------------------------------------------------------------------

struct SweepRow {
  double epsilon = 0.0;
  double lifespan = 0.0;
  bool censored = false;  // reached t_end without crossing; lifespan is a lower bound
  Termination termination;
  double e0 = 0.0;        // initial H^3 distance to the companion run
  double threshold = 0.0; // e0 * lifespan_threshold_factor
  double ode_C = 0.0;     // C for which the comparison ODE bound blows up at the measured time
  double runtime_seconds = 0.0;
  std::vector<DiagnosticsRecord> records;
  std::vector<double> h3_error;  // aligned with records
};

struct SweepResult {
  std::vector<SweepRow> rows;  // ascending epsilon
  double delta = 0.0;
  double threshold_factor = 0.0;
  double slope = 0.0;         // d log T / d log epsilon over uncensored rows
  double slope_stderr = 0.0;
  double slope_lo = 0.0;      // slope - 2 stderr
  double slope_hi = 0.0;      // slope + 2 stderr
  double fitted_C2 = 0.0;     // from slope = -1/(1 + C2 delta)
  double predicted_slope = 0.0;
  double fitted_ode_C = 0.0;  // median of the per-row ODE constants
  bool all_censored = false;
  int used_in_fit = 0;
  double runtime_seconds = 0.0;
  std::string hash;
};

namespace detail {

// Solve ode_lifespan(C, delta, e0) = T for C by bisection in log C. The
// lifespan is strictly decreasing in C, from +inf at C -> 0 to 0 at C -> inf.
inline double ode_constant_for(double delta, double e0, double T) {
  if (!(T > 0.0) || !(e0 > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  double lo = std::log(1e-9), hi = std::log(1e9);
  auto f = [&](double logC) { return ode_lifespan(std::exp(logC), delta, e0) - T; };
  if (f(lo) < 0.0 || f(hi) > 0.0) return std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return std::exp(0.5 * (lo + hi));
}

// One sweep point, run in lockstep with its own copy of the shared
// zero-relative-vorticity companion (same step size, same checkpoints); stops
// as soon as the H^3 error crosses the threshold.
inline SweepRow lifespan_single(const ExperimentConfig& cfg, double eps, double dt0,
                                const RunFlags& flags) {
  Stopwatch clock;
  const GridSpec g = grid_from(cfg);
  PrimitiveState data =
      make_initial_data(cfg.delta, eps, ProfileSpec{cfg.profile_width}, cfg.seed, g);
  PrimitiveState companion0 =
      make_initial_data(cfg.delta, 0.0, ProfileSpec{cfg.profile_width}, cfg.seed, g);

  IntegratorConfig icfg = integrator_from(cfg, flags);
  icfg.dt = dt0;  // one shared step size across the sweep
  // Snap t_end up to a whole number of checkpoint intervals so the companion
  // advance below stays aligned with the observer's checkpoint times.
  const double interval = icfg.checkpoint_interval;
  icfg.t_end = std::ceil(icfg.t_end / interval - 1e-9) * interval;

  int steps_per = 0;
  const double dtc = detail::snap_dt(interval, dt0, &steps_per);

  // Companion advance in the same formulation and step sequence as the main
  // run. Linear-only runs use the exact propagator from t = 0.
  std::function<PrimitiveState(double)> companion_at;
  if (icfg.linear_only) {
    companion_at = [companion0](double t) { return linear_system_advance(companion0, t); };
  } else if (icfg.formulation == Formulation::primitive) {
    auto comp = std::make_shared<PrimitiveState>(companion0);
    companion_at = [comp, dtc, steps_per](double) {
      for (int j = 0; j < steps_per; ++j) *comp = rk4_step(*comp, dtc);
      return *comp;
    };
  } else {
    auto comp = std::make_shared<SymState>(to_sym(companion0));
    companion_at = [comp, dtc, steps_per](double) {
      for (int j = 0; j < steps_per; ++j) *comp = rk4_step(*comp, dtc);
      return to_primitive(*comp);
    };
  }

  const DiagnosticsOptions dopt = diagnostics_from(cfg, flags);
  SweepRow row;
  row.epsilon = eps;
  bool crossed = false;
  double t_prev = 0.0, e_prev = 0.0;
  auto observer = [&](const Checkpoint& c) {
    const bool first = row.records.empty();
    PrimitiveState comp = first ? companion0 : companion_at(c.time);
    const double e = h3_difference(c.state, comp, icfg.linear_only);
    row.records.push_back(compute_diagnostics(c.state, dopt));
    row.h3_error.push_back(e);
    if (first) {
      row.e0 = e;
      row.threshold = cfg.lifespan_threshold_factor * e;
      if (!(row.e0 > 0.0))
        throw Error("lifespan: initial separation is zero; epsilon " + std::to_string(eps) +
                    " produced no vortical part");
    } else if (!crossed && e >= row.threshold) {
      // Crossing time by interpolation of log e between the two checkpoints.
      double T = c.time;
      if (e_prev > 0.0 && e > e_prev) {
        const double f =
            (std::log(row.threshold) - std::log(e_prev)) / (std::log(e) - std::log(e_prev));
        T = t_prev + (c.time - t_prev) * std::min(1.0, std::max(0.0, f));
      }
      row.lifespan = T;
      crossed = true;
      return false;  // stop the run here
    }
    t_prev = c.time;
    e_prev = e;
    return true;
  };

  Trajectory traj = integrate(data, icfg, observer);
  row.termination = traj.termination;
  if (!crossed) {
    if (traj.termination.kind != TerminationKind::completed) {
      // The classical solution ended before the error crossed: that *is* the
      // lifespan.
      row.lifespan = traj.termination.time;
    } else {
      row.lifespan = icfg.t_end;
      row.censored = true;
    }
  }
  row.ode_C = row.censored ? std::numeric_limits<double>::quiet_NaN()
                           : ode_constant_for(cfg.delta, row.e0, row.lifespan);
  row.runtime_seconds = clock.seconds();
  return row;
}

}  // namespace detail

// Lifespan sweep: for each epsilon, integrates the full datum alongside its
// zero-relative-vorticity companion and records the first time the H^3
// distance exceeds threshold_factor * e(0); fits log T against log epsilon.
inline SweepResult cmd_lifespan(const ExperimentConfig& cfg, std::vector<double> epsilon_list,
                                const RunFlags& flags = {}) {
  if (epsilon_list.empty())
    throw ConfigError("lifespan requires a nonempty data.epsilon_list");
  for (double e : epsilon_list) {
    if (e == 0.0)
      throw ConfigError("epsilon 0 is not allowed in a lifespan sweep: the companion run is "
                        "identical and the threshold is never crossed");
    if (e < 0.0) throw ConfigError("epsilon values in a lifespan sweep must be positive");
  }
  std::sort(epsilon_list.begin(), epsilon_list.end());

  detail::Stopwatch clock;
  SweepResult res;
  res.delta = cfg.delta;
  res.threshold_factor = cfg.lifespan_threshold_factor;
  res.hash = config_hash(cfg);

  // One step size for the whole sweep, from the most restrictive (largest
  // epsilon) initial state, so all runs share an identical step sequence.
  const GridSpec g = grid_from(cfg);
  double dt0;
  if (cfg.dt) {
    dt0 = *cfg.dt;
  } else {
    PrimitiveState largest = make_initial_data(cfg.delta, epsilon_list.back(),
                                               ProfileSpec{cfg.profile_width}, cfg.seed, g);
    dt0 = cfl_dt(largest, cfg.cfl_number, g);
  }

  res.rows.resize(epsilon_list.size());
  const int nw = std::max(1, std::min<int>(flags.workers, static_cast<int>(epsilon_list.size())));
  if (nw <= 1) {
    for (std::size_t i = 0; i < epsilon_list.size(); ++i)
      res.rows[i] = detail::lifespan_single(cfg, epsilon_list[i], dt0, flags);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(nw);
    std::vector<std::thread> pool;
    for (int w = 0; w < nw; ++w)
      pool.emplace_back([&, w] {
        try {
          for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= epsilon_list.size()) break;
            res.rows[i] = detail::lifespan_single(cfg, epsilon_list[i], dt0, flags);
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors)
      if (e) std::rethrow_exception(e);
  }

  // Sweep-level fits over uncensored rows.
  res.all_censored = true;
  std::vector<double> xs, ys, odeCs;
  for (const SweepRow& r : res.rows) {
    if (r.censored) continue;
    res.all_censored = false;
    if (r.lifespan > 0.0) {
      xs.push_back(std::log(r.epsilon));
      ys.push_back(std::log(r.lifespan));
    }
    if (std::isfinite(r.ode_C)) odeCs.push_back(r.ode_C);
  }
  res.used_in_fit = static_cast<int>(xs.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (xs.size() >= 2) {
    const std::size_t n = xs.size();
    long double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sx += xs[i];
      sy += ys[i];
      sxx += static_cast<long double>(xs[i]) * xs[i];
      sxy += static_cast<long double>(xs[i]) * ys[i];
    }
    const long double den = n * sxx - sx * sx;
    res.slope = static_cast<double>((n * sxy - sx * sy) / den);
    const double intercept = static_cast<double>((sy - res.slope * sx) / n);
    long double rss = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = ys[i] - (intercept + res.slope * xs[i]);
      rss += static_cast<long double>(r) * r;
    }
    if (n > 2) {
      const double s2 = static_cast<double>(rss) / static_cast<double>(n - 2);
      const double sxx_c = static_cast<double>(sxx - sx * sx / static_cast<long double>(n));
      res.slope_stderr = std::sqrt(std::max(0.0, s2 / sxx_c));
    }
    res.slope_lo = res.slope - 2.0 * res.slope_stderr;
    res.slope_hi = res.slope + 2.0 * res.slope_stderr;
    res.fitted_C2 = res.slope < 0.0 ? (-1.0 / res.slope - 1.0) / cfg.delta : nan;
    res.predicted_slope =
        std::isfinite(res.fitted_C2) ? -1.0 / (1.0 + res.fitted_C2 * cfg.delta) : nan;
  } else {
    res.slope = res.slope_stderr = res.slope_lo = res.slope_hi = nan;
    res.fitted_C2 = res.predicted_slope = nan;
  }
  if (!odeCs.empty()) {
    std::sort(odeCs.begin(), odeCs.end());
    res.fitted_ode_C = odeCs[odeCs.size() / 2];
  } else {
    res.fitted_ode_C = nan;
  }
  res.runtime_seconds = clock.seconds();

  // Persistence: one series CSV per sweep point, the sweep table, a summary,
  // and the T(epsilon) plot data.
  detail::OutputWriter out(cfg);
  for (std::size_t i = 0; i < res.rows.size(); ++i)
    out.csv("lifespan_run_" + std::to_string(i) + ".csv",
            detail::records_csv(res.rows[i].records, &res.rows[i].h3_error));
  std::string sweep = "epsilon,lifespan,censored,e0,e0_over_epsilon,threshold,ode_C\n";
  for (const SweepRow& r : res.rows)
    sweep += detail::fmt17(r.epsilon) + "," + detail::fmt17(r.lifespan) + "," +
             (r.censored ? "1" : "0") + "," + detail::fmt17(r.e0) + "," +
             detail::fmt17(r.e0 / r.epsilon) + "," + detail::fmt17(r.threshold) + "," +
             detail::fmt17(r.ode_C) + "\n";
  out.csv("lifespan_sweep.csv", sweep);

  nlohmann::json j;
  j["command"] = "lifespan";
  j["config_hash"] = res.hash;
  j["runtime_seconds"] = res.runtime_seconds;
  j["delta"] = res.delta;
  j["threshold_factor"] = res.threshold_factor;
  j["t_final"] = res.rows.empty() ? 0.0 : res.rows.back().termination.time;
  j["termination"] =
      res.rows.empty() ? nlohmann::json(nullptr) : detail::termination_json(res.rows.back().termination);
  j["fit"] = nlohmann::json(nullptr);
  if (std::isfinite(res.slope))
    j["fit"] = {{"exponent", res.slope},
                {"prefactor", nan},
                {"window", {res.rows.front().epsilon, res.rows.back().epsilon}},
                {"residual", nan},
                {"slope_stderr", res.slope_stderr},
                {"slope_interval", {res.slope_lo, res.slope_hi}},
                {"samples", res.used_in_fit}};
  j["slope"] = res.slope;
  j["slope_stderr"] = res.slope_stderr;
  j["slope_interval"] = {res.slope_lo, res.slope_hi};
  j["fitted_C2"] = res.fitted_C2;
  j["predicted_slope"] = res.predicted_slope;
  j["fitted_ode_C"] = res.fitted_ode_C;
  if (res.all_censored)
    j["warning"] = "all sweep points were censored at t_end; lifespans are lower bounds only";
  nlohmann::json rows = nlohmann::json::array();
  for (const SweepRow& r : res.rows) {
    nlohmann::json rj = {{"epsilon", r.epsilon},
                         {"lifespan", r.lifespan},
                         {"censored", r.censored},
                         {"termination", detail::termination_json(r.termination)},
                         {"e0", r.e0},
                         {"e0_over_epsilon", r.e0 / r.epsilon},
                         {"threshold", r.threshold},
                         {"ode_C", r.ode_C},
                         {"runtime_seconds", r.runtime_seconds}};
    if (std::isfinite(res.fitted_ode_C))
      rj["ode_predicted_lifespan"] = ode_lifespan(res.fitted_ode_C, res.delta, r.e0);
    rows.push_back(rj);
  }
  j["rows"] = rows;
  out.json_file("lifespan_summary.json", j);

  PlotSeries plot{"lifespan", "Lifespan against vortical size", "epsilon", "T(epsilon)",
                  true, true, {}};
  for (const SweepRow& r : res.rows) plot.points.push_back({r.epsilon, r.lifespan});
  emit_plots(cfg.directory, {plot});
  return res;
}

inline SweepResult cmd_lifespan(const ExperimentConfig& cfg, const RunFlags& flags = {}) {
  return cmd_lifespan(cfg, cfg.epsilon_list, flags);
}

}  // namespace rsw
