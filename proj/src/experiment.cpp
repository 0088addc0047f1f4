#include "qvrl/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>

#include "qvrl/analysis.hpp"
#include "qvrl/csv.hpp"
#include "qvrl/errors.hpp"
#include "qvrl/lq_bench.hpp"
#include "qvrl/merton_bench.hpp"
#include "qvrl/parallel.hpp"

#ifndef QVRL_VERSION
#define QVRL_VERSION "dev"
#endif

namespace qvrl {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::merton_regime_a: return "merton_regime_a";
    case ExperimentKind::merton_regime_b: return "merton_regime_b";
    case ExperimentKind::lq_sweep: return "lq_sweep";
    case ExperimentKind::pg_bias: return "pg_bias";
    case ExperimentKind::schedule_check: return "schedule_check";
  }
  return "unknown";
}

namespace {

std::optional<ExperimentKind> kind_from_string(const std::string& s) {
  for (auto k : {ExperimentKind::merton_regime_a, ExperimentKind::merton_regime_b,
                 ExperimentKind::lq_sweep, ExperimentKind::pg_bias, ExperimentKind::schedule_check})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

json power_spec(double scale, double shift, double power) {
  return {{"kind", "power"}, {"scale", scale}, {"shift", shift}, {"power", power}};
}
json log_spec(double offset, double scale, double shift) {
  return {{"kind", "log"}, {"offset", offset}, {"scale", scale}, {"shift", shift}};
}
json const_spec(double value) { return {{"kind", "const"}, {"value", value}}; }

json regime_a_spec() {
  return {{"a_psi", power_spec(1, 1, 1)},
          {"a_theta", nullptr},
          {"b", log_spec(2, 1, 1)},
          {"c", log_spec(10, 1, 1)},
          {"lambda", const_spec(3)}};
}

json regime_b_spec() {
  return {{"a_psi", power_spec(1, 1, 0.5)},
          {"a_theta", nullptr},
          {"b", const_spec(2)},
          {"c", log_spec(10, 1, 1)},
          {"lambda", power_spec(3, 1, 0.5)}};
}

json merton_parameters(const json& schedule) {
  const MarketConfig m;
  return {{"market",
           {{"mu", m.mu},
            {"sigma", m.sigma},
            {"r", m.r},
            {"gamma", m.gamma},
            {"horizon", m.horizon},
            {"x0", m.x0}}},
          {"dt", 0.01},
          {"init", {{"theta", 0.0}, {"psi1", 0.0}, {"psi2", 1.0}}},
          {"schedule", schedule},
          {"explore_for_data", true},
          {"record_every", 1},
          {"fit_from", 1000}};
}

json lq_parameters() {
  const LqSweepConfig d;
  const auto& c = d.coefficients;
  return {{"coefficients",
           {{"A", c.A},
            {"B", c.B},
            {"C", c.C},
            {"D", c.D},
            {"M", c.M},
            {"N", c.N},
            {"R", c.R},
            {"P", c.P},
            {"Q", c.Q}}},
          {"lambda", d.lambda},
          {"dt", d.dt},
          {"x0", d.x0},
          {"behavior", {{"mean", d.behavior_mean}, {"variance", d.behavior_variance}}},
          {"horizons", d.horizons},
          {"epsilons", d.epsilons},
          {"step",
           {{"scale", d.step.scale},
            {"shift", d.step.shift},
            {"power", d.step.power},
            {"bound", d.step.bound},
            {"variance_floor", d.step.variance_floor},
            {"passes", d.step.passes}}}};
}

bool is_sequence_spec(const json& j) { return j.is_object() && j.contains("kind"); }

void merge_into(json& base, const json& user, const std::string& path,
                std::vector<std::string>& problems) {
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string where = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) {
      problems.push_back("unknown key '" + where + "'");
      continue;
    }
    json& slot = base[it.key()];
    const json& v = it.value();
    if (slot.is_object() && !is_sequence_spec(slot) && v.is_object()) {
      merge_into(slot, v, where, problems);
    } else if (slot.is_object() && !v.is_object() && !(is_sequence_spec(slot) && v.is_null())) {
      problems.push_back("'" + where + "' must be an object");
    } else if (slot.is_number() && !v.is_number()) {
      problems.push_back("'" + where + "' must be a number");
    } else if (slot.is_boolean() && !v.is_boolean()) {
      problems.push_back("'" + where + "' must be a boolean");
    } else if (slot.is_string() && !v.is_string()) {
      problems.push_back("'" + where + "' must be a string");
    } else if (slot.is_array() && !v.is_array()) {
      problems.push_back("'" + where + "' must be an array");
    } else {
      slot = v;
    }
  }
}

class Reader {
 public:
  explicit Reader(std::vector<std::string>& problems) : problems_(problems) {}

  double num(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) {
      problems_.push_back("missing required key '" + where + "." + key + "'");
      return 0.0;
    }
    if (!j.at(key).is_number()) {
      problems_.push_back("'" + where + "." + key + "' must be a number");
      return 0.0;
    }
    return j.at(key).get<double>();
  }

  std::size_t count(const json& j, const std::string& key, const std::string& where,
                    std::size_t min) {
    const double v = num(j, key, where);
    if (v < static_cast<double>(min) || v != std::floor(v)) {
      problems_.push_back("'" + where + "." + key + "' must be an integer >= " +
                          std::to_string(min));
      return min;
    }
    return static_cast<std::size_t>(v);
  }

  void require(bool ok, const std::string& msg) {
    if (!ok) problems_.push_back(msg);
  }

 private:
  std::vector<std::string>& problems_;
};

Sequence sequence_from(const json& spec, const std::string& where, Reader& rd) {
  if (!spec.is_object() || !spec.contains("kind") || !spec["kind"].is_string()) {
    rd.require(false, "'" + where + "' must be an object with a string 'kind'");
    return constant_sequence(1.0);
  }
  const std::string kind = spec["kind"];
  auto numeric = [&](const char* key) { return spec.contains(key) && spec[key].is_number(); };
  auto allow = [&](std::initializer_list<const char*> keys) {
    for (auto it = spec.begin(); it != spec.end(); ++it) {
      bool ok = it.key() == "kind";
      for (const char* k : keys) ok = ok || it.key() == k;
      rd.require(ok, "unknown key '" + where + "." + it.key() + "'");
    }
  };
  if (kind == "power") {
    allow({"scale", "shift", "power"});
    const double scale = rd.num(spec, "scale", where), shift = rd.num(spec, "shift", where),
                 power = rd.num(spec, "power", where);
    rd.require(!numeric("shift") || shift > 0.0, "'" + where + ".shift' must be > 0");
    rd.require(!numeric("scale") || scale > 0.0, "'" + where + ".scale' must be > 0");
    return power_sequence(scale, shift, power);
  }
  if (kind == "log") {
    allow({"offset", "scale", "shift"});
    const double offset = rd.num(spec, "offset", where), scale = rd.num(spec, "scale", where),
                 shift = rd.num(spec, "shift", where);
    rd.require(!numeric("shift") || shift >= 1.0, "'" + where + ".shift' must be >= 1");
    return log_sequence(offset, scale, shift);
  }
  if (kind == "const") {
    allow({"value"});
    const double v = rd.num(spec, "value", where);
    rd.require(!numeric("value") || v > 0.0, "'" + where + ".value' must be > 0");
    return constant_sequence(v);
  }
  rd.require(false, "'" + where + ".kind' must be power, log or const");
  return constant_sequence(1.0);
}

Schedule schedule_from(const json& spec, const std::string& where, Reader& rd) {
  Schedule s;
  if (!spec.is_object()) {
    rd.require(false, "'" + where + "' must be an object");
    return s;
  }
  for (const char* key : {"a_psi", "b", "c", "lambda"})
    if (!spec.contains(key)) rd.require(false, "missing required key '" + where + "." + key + "'");
  for (auto it = spec.begin(); it != spec.end(); ++it) {
    const std::string& k = it.key();
    rd.require(k == "a_psi" || k == "a_theta" || k == "b" || k == "c" || k == "lambda",
               "unknown key '" + where + "." + k + "'");
  }
  if (spec.contains("a_psi")) s.a_psi = sequence_from(spec["a_psi"], where + ".a_psi", rd);
  s.a_theta = spec.contains("a_theta") && !spec["a_theta"].is_null()
                  ? sequence_from(spec["a_theta"], where + ".a_theta", rd)
                  : s.a_psi;
  if (spec.contains("b")) s.b = sequence_from(spec["b"], where + ".b", rd);
  if (spec.contains("c")) s.c = sequence_from(spec["c"], where + ".c", rd);
  if (spec.contains("lambda")) s.lambda = sequence_from(spec["lambda"], where + ".lambda", rd);
  return s;
}

struct MertonSetup {
  MarketConfig market;
  double dt = 0.01;
  MertonParams init;
  Schedule schedule;
  bool explore_for_data = true;
  std::size_t record_every = 1;
  double fit_from = 1000;
};

MertonSetup merton_setup(const json& p, Reader& rd) {
  MertonSetup s;
  const json& m = p["market"];
  s.market.mu = rd.num(m, "mu", "parameters.market");
  s.market.sigma = rd.num(m, "sigma", "parameters.market");
  s.market.r = rd.num(m, "r", "parameters.market");
  s.market.gamma = rd.num(m, "gamma", "parameters.market");
  s.market.horizon = rd.num(m, "horizon", "parameters.market");
  s.market.x0 = rd.num(m, "x0", "parameters.market");
  rd.require(s.market.sigma > 0, "'parameters.market.sigma' must be > 0");
  rd.require(s.market.gamma > 0 && s.market.gamma != 1.0,
             "'parameters.market.gamma' must be > 0 and != 1");
  rd.require(s.market.horizon > 0, "'parameters.market.horizon' must be > 0");
  rd.require(s.market.x0 > 0, "'parameters.market.x0' must be > 0");
  s.dt = rd.num(p, "dt", "parameters");
  rd.require(s.dt > 0, "'parameters.dt' must be > 0");
  if (s.dt > 0 && s.market.horizon > 0) {
    try {
      TimeGrid(0.0, s.market.horizon, s.dt);
    } catch (const PreconditionViolation& e) {
      rd.require(false, std::string("'parameters.dt': ") + e.what());
    }
  }
  s.init.theta = rd.num(p["init"], "theta", "parameters.init");
  s.init.psi1 = rd.num(p["init"], "psi1", "parameters.init");
  s.init.psi2 = rd.num(p["init"], "psi2", "parameters.init");
  rd.require(s.init.psi2 > 0, "'parameters.init.psi2' must be > 0");
  s.schedule = schedule_from(p["schedule"], "parameters.schedule", rd);
  s.explore_for_data = p["explore_for_data"].get<bool>();
  s.record_every = rd.count(p, "record_every", "parameters", 1);
  s.fit_from = rd.num(p, "fit_from", "parameters");
  return s;
}

LqSweepConfig lq_setup(const json& p, std::size_t replications, Reader& rd) {
  LqSweepConfig c;
  const json& k = p["coefficients"];
  const std::string kw = "parameters.coefficients";
  c.coefficients = {rd.num(k, "A", kw), rd.num(k, "B", kw), rd.num(k, "C", kw),
                    rd.num(k, "D", kw), rd.num(k, "M", kw), rd.num(k, "N", kw),
                    rd.num(k, "R", kw), rd.num(k, "P", kw), rd.num(k, "Q", kw)};
  rd.require(c.coefficients.N > 0, "'parameters.coefficients.N' must be > 0");
  c.lambda = rd.num(p, "lambda", "parameters");
  rd.require(c.lambda > 0, "'parameters.lambda' must be > 0");
  c.dt = rd.num(p, "dt", "parameters");
  rd.require(c.dt > 0, "'parameters.dt' must be > 0");
  c.x0 = rd.num(p, "x0", "parameters");
  c.behavior_mean = rd.num(p["behavior"], "mean", "parameters.behavior");
  c.behavior_variance = rd.num(p["behavior"], "variance", "parameters.behavior");
  rd.require(c.behavior_variance > 0, "'parameters.behavior.variance' must be > 0");
  c.horizons.clear();
  c.epsilons.clear();
  for (const auto& v : p["horizons"]) {
    rd.require(v.is_number(), "'parameters.horizons' entries must be numbers");
    if (!v.is_number()) continue;
    const double T = v.get<double>();
    rd.require(T > 0, "'parameters.horizons' entries must be > 0");
    if (T > 0 && c.dt > 0) {
      try {
        TimeGrid(0.0, T, c.dt);
      } catch (const PreconditionViolation& e) {
        rd.require(false, std::string("'parameters.horizons': ") + e.what());
      }
    }
    c.horizons.push_back(T);
  }
  for (const auto& v : p["epsilons"]) {
    rd.require(v.is_number(), "'parameters.epsilons' entries must be numbers");
    if (v.is_number()) c.epsilons.push_back(v.get<double>());
  }
  rd.require(!c.horizons.empty(), "'parameters.horizons' must be nonempty");
  rd.require(!c.epsilons.empty(), "'parameters.epsilons' must be nonempty");
  const json& s = p["step"];
  c.step.scale = rd.num(s, "scale", "parameters.step");
  c.step.shift = rd.num(s, "shift", "parameters.step");
  c.step.power = rd.num(s, "power", "parameters.step");
  c.step.bound = rd.num(s, "bound", "parameters.step");
  c.step.variance_floor = rd.num(s, "variance_floor", "parameters.step");
  c.step.passes = rd.count(s, "passes", "parameters.step", 1);
  rd.require(c.step.scale > 0 && c.step.shift > 0, "'parameters.step' scale and shift must be > 0");
  rd.require(c.step.bound > 0 && c.step.variance_floor > 0,
             "'parameters.step' bound and variance_floor must be > 0");
  rd.require(replications >= 2, "'replications' must be >= 2 for lq_sweep");
  c.replications = replications;
  return c;
}

struct PgSetup {
  double phi = 1, x = 1, horizon = 1, epsilon = -2, dt = 0.01;
  std::size_t paths = 10000;
};

PgSetup pg_setup(const json& p, Reader& rd) {
  PgSetup s;
  s.phi = rd.num(p, "phi", "parameters");
  s.x = rd.num(p, "x", "parameters");
  s.horizon = rd.num(p, "horizon", "parameters");
  s.epsilon = rd.num(p, "epsilon", "parameters");
  s.dt = rd.num(p, "dt", "parameters");
  s.paths = rd.count(p, "paths", "parameters", 1000);
  rd.require(s.phi > 0, "'parameters.phi' must be > 0");
  rd.require(s.dt > 0 && s.horizon > 0, "'parameters.dt' and 'parameters.horizon' must be > 0");
  return s;
}

struct ScheduleCheckSetup {
  Schedule schedule;
  std::size_t horizon = 1000000;
  ScheduleScreenOptions screen;
};

ScheduleCheckSetup schedule_check_setup(const json& p, Reader& rd) {
  ScheduleCheckSetup s;
  s.schedule = schedule_from(p["schedule"], "parameters.schedule", rd);
  s.horizon = rd.count(p, "horizon", "parameters", 10);
  s.screen.step_condition_constant = rd.num(p, "step_condition_constant", "parameters");
  s.screen.divergence_ratio = rd.num(p, "divergence_ratio", "parameters");
  s.screen.tail_tolerance = rd.num(p, "tail_tolerance", "parameters");
  return s;
}

void validate_typed(const ExperimentConfig& cfg, std::vector<std::string>& problems) {
  Reader rd(problems);
  const json& p = cfg.resolved["parameters"];
  switch (cfg.experiment) {
    case ExperimentKind::merton_regime_a:
    case ExperimentKind::merton_regime_b: merton_setup(p, rd); break;
    case ExperimentKind::lq_sweep: lq_setup(p, cfg.replications, rd); break;
    case ExperimentKind::pg_bias: pg_setup(p, rd); break;
    case ExperimentKind::schedule_check: schedule_check_setup(p, rd); break;
  }
}

}  // namespace

json default_config(ExperimentKind k) {
  json doc = {{"experiment", to_string(k)},
              {"master_seed", 1},
              {"n_episodes", 10000},
              {"replications", 100},
              {"output_dir", "qvrl_out"},
              {"workers", 0}};
  switch (k) {
    case ExperimentKind::merton_regime_a: doc["parameters"] = merton_parameters(regime_a_spec()); break;
    case ExperimentKind::merton_regime_b: doc["parameters"] = merton_parameters(regime_b_spec()); break;
    case ExperimentKind::lq_sweep: doc["parameters"] = lq_parameters(); break;
    case ExperimentKind::pg_bias:
      doc["parameters"] = {{"phi", 1.0},     {"x", 1.0},       {"horizon", 1.0},
                           {"epsilon", -2.0}, {"paths", 10000}, {"dt", 0.01}};
      break;
    case ExperimentKind::schedule_check:
      doc["parameters"] = {{"schedule", regime_a_spec()},
                           {"horizon", 1000000},
                           {"step_condition_constant", 0.9},
                           {"divergence_ratio", 0.02},
                           {"tail_tolerance", 0.05}};
      break;
  }
  return doc;
}

json ExperimentConfig::echo() const {
  json doc = resolved;
  doc["experiment"] = to_string(experiment);
  doc["master_seed"] = master_seed;
  doc["n_episodes"] = n_episodes;
  doc["replications"] = replications;
  doc["output_dir"] = output_dir.string();
  doc["workers"] = workers;
  return doc;
}

ExperimentConfig parse_config(const json& doc) {
  std::vector<std::string> problems;
  if (!doc.is_object()) throw ConfigError({"configuration must be a JSON object"});
  if (!doc.contains("experiment")) throw ConfigError({"missing required key 'experiment'"});
  if (!doc["experiment"].is_string()) throw ConfigError({"'experiment' must be a string"});
  const auto kind = kind_from_string(doc["experiment"].get<std::string>());
  if (!kind)
    throw ConfigError({"unknown experiment '" + doc["experiment"].get<std::string>() +
                       "' (expected merton_regime_a, merton_regime_b, lq_sweep, pg_bias or "
                       "schedule_check)"});

  ExperimentConfig cfg;
  cfg.experiment = *kind;
  cfg.resolved = default_config(*kind);
  merge_into(cfg.resolved, doc, "", problems);

  Reader rd(problems);
  const json& r = cfg.resolved;
  if (r["master_seed"].is_number_unsigned() || r["master_seed"].is_number_integer()) {
    const auto s = r["master_seed"].get<std::int64_t>();
    rd.require(s >= 0 || r["master_seed"].is_number_unsigned(), "'master_seed' must be >= 0");
    cfg.master_seed = r["master_seed"].get<std::uint64_t>();
  } else {
    rd.require(false, "'master_seed' must be a non-negative integer");
  }
  cfg.n_episodes = rd.count(r, "n_episodes", "config", 1);
  cfg.replications = rd.count(r, "replications", "config", 1);
  cfg.workers = static_cast<int>(rd.count(r, "workers", "config", 0));
  cfg.output_dir = r["output_dir"].get<std::string>();
  if (problems.empty()) validate_typed(cfg, problems);
  if (!problems.empty()) throw ConfigError(problems);
  cfg.resolved = cfg.echo();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError({"cannot open configuration file '" + path.string() + "'"});
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError({"'" + path.string() + "' is not valid JSON: " + e.what()});
  }
  return parse_config(doc);
}

Sequence parse_sequence(const json& spec, const std::string& where) {
  std::vector<std::string> problems;
  Reader rd(problems);
  Sequence s = sequence_from(spec, where, rd);
  if (!problems.empty()) throw ConfigError(problems);
  return s;
}

Schedule parse_schedule(const json& spec) {
  std::vector<std::string> problems;
  Reader rd(problems);
  Schedule s = schedule_from(spec, "schedule", rd);
  if (!problems.empty()) throw ConfigError(problems);
  return s;
}

void apply_paper_scale(ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::merton_regime_a:
    case ExperimentKind::merton_regime_b: {
      cfg.n_episodes = 100000;
      cfg.replications = 1000;
      auto& every = cfg.resolved["parameters"]["record_every"];
      if (every.get<std::size_t>() < 100) every = 100;
      break;
    }
    case ExperimentKind::lq_sweep: cfg.replications = 10000; break;
    default: break;
  }
  cfg.resolved = cfg.echo();
}

namespace {

struct MertonSeries {
  std::vector<std::size_t> episode;
  std::vector<double> psi1, psi2, theta, erwl, accum;
};

const std::vector<std::string> kMertonEpisodeHeader{"episode", "psi1", "psi2",
                                                    "theta",   "erwl", "erwl_accum"};

CsvTable merton_episode_table(const MertonSeries& s) {
  CsvTable t;
  t.header = kMertonEpisodeHeader;
  for (std::size_t k = 0; k < s.episode.size(); ++k)
    t.add_row({std::to_string(s.episode[k]), format_double(s.psi1[k]), format_double(s.psi2[k]),
               format_double(s.theta[k]), format_double(s.erwl[k]), format_double(s.accum[k])});
  return t;
}

MertonSeries merton_series_from(const CsvTable& t) {
  if (t.header != kMertonEpisodeHeader) throw std::runtime_error("unexpected per-episode header");
  MertonSeries s;
  for (const auto& row : t.rows) {
    s.episode.push_back(static_cast<std::size_t>(std::stoull(row[0])));
    s.psi1.push_back(parse_double(row[1]));
    s.psi2.push_back(parse_double(row[2]));
    s.theta.push_back(parse_double(row[3]));
    s.erwl.push_back(parse_double(row[4]));
    s.accum.push_back(parse_double(row[5]));
  }
  return s;
}

void mean_band(const std::vector<double>& xs, double& mean, double& band) {
  const double n = static_cast<double>(xs.size());
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double v = 0.0;
  for (double x : xs) v += (x - mean) * (x - mean);
  band = xs.size() > 1 ? 2.0 * std::sqrt(v / (n - 1.0) / n) : 0.0;
}

struct MertonAggregate {
  CsvTable table;
  std::vector<SeriesPoint> mse_psi1, accum;
};

MertonAggregate merton_aggregate(const std::vector<MertonSeries>& reps, double psi1_star,
                                 double psi2_star) {
  MertonAggregate agg;
  agg.table.header = {"episode",  "mse_psi1",   "mse_psi1_band",   "mse_psi2",
                      "mse_psi2_band", "erwl_accum", "erwl_accum_band", "replications"};
  if (reps.empty()) return agg;
  const std::size_t rows = reps.front().episode.size();
  std::vector<double> e1(reps.size()), e2(reps.size()), ac(reps.size());
  for (std::size_t k = 0; k < rows; ++k) {
    for (std::size_t r = 0; r < reps.size(); ++r) {
      if (reps[r].episode.size() != rows || reps[r].episode[k] != reps.front().episode[k])
        throw std::runtime_error("replication series are not aligned");
      const double d1 = reps[r].psi1[k] - psi1_star, d2 = reps[r].psi2[k] - psi2_star;
      e1[r] = d1 * d1;
      e2[r] = d2 * d2;
      ac[r] = reps[r].accum[k];
    }
    double m1, b1, m2, b2, ma, ba;
    mean_band(e1, m1, b1);
    mean_band(e2, m2, b2);
    mean_band(ac, ma, ba);
    const auto ep = reps.front().episode[k];
    agg.table.add_row({std::to_string(ep), format_double(m1), format_double(b1),
                       format_double(m2), format_double(b2), format_double(ma), format_double(ba),
                       std::to_string(reps.size())});
    agg.mse_psi1.push_back({static_cast<double>(ep), m1});
    agg.accum.push_back({static_cast<double>(ep), ma});
  }
  return agg;
}

std::string rep_file_name(std::size_t r) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "rep_%05zu.csv", r);
  return buf;
}

json fit_json(const std::vector<SeriesPoint>& s, double lo, double hi) {
  try {
    const RateFit f = fit_loglog_rate(s, lo, hi);
    return {{"slope", f.slope},     {"intercept", f.intercept}, {"r_squared", f.r_squared},
            {"window", {lo, hi}}, {"points", f.points}};
  } catch (const std::exception& e) {
    return {{"error", e.what()}};
  }
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

int exit_for(std::size_t failures, std::size_t total) {
  if (failures == 0) return exit_ok;
  return failures == total ? exit_divergence : exit_partial_failure;
}

void run_merton_experiment(const ExperimentConfig& cfg, int workers, ExperimentReport& out) {
  std::vector<std::string> problems;
  Reader rd(problems);
  const MertonSetup s = merton_setup(cfg.resolved["parameters"], rd);
  const MertonRegime regime = cfg.experiment == ExperimentKind::merton_regime_a
                                  ? MertonRegime::deterministic_exec
                                  : MertonRegime::stochastic_exec;
  const RngStream base(cfg.master_seed, static_cast<std::uint64_t>(cfg.experiment));
  const std::size_t R = cfg.replications;
  std::vector<std::optional<MertonSeries>> series(R);
  std::vector<std::string> errors(R);

  MertonRunOptions opts;
  opts.dt = s.dt;
  opts.init = s.init;
  opts.explore_for_data = s.explore_for_data;
  opts.trace_stride = s.record_every;

  for_each_index(R, workers, [&](std::size_t r) {
    try {
      const MertonRun run = run_merton(s.market, regime, s.schedule, cfg.n_episodes,
                                       base.substream(r), opts);
      MertonSeries m;
      for (const auto& row : run.state.trace) {
        m.episode.push_back(row.episode + 1);
        m.psi1.push_back(row.params.psi[0]);
        m.psi2.push_back(row.params.psi[1]);
        m.theta.push_back(row.params.theta[0]);
        m.erwl.push_back(run.ledger.per_episode[row.episode]);
        m.accum.push_back(run.ledger.accumulated[row.episode]);
      }
      series[r] = std::move(m);
    } catch (const LearnerDivergence& e) {
      errors[r] = "replication " + std::to_string(r) + " diverged at episode " +
                  std::to_string(e.episode()) + ": " + e.what();
    }
  });

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir / "replications");
  const auto truth = ground_truth(s.market, s.schedule.lambda(0));
  CsvTable summary;
  summary.header = {"replication", "final_mse_psi1", "final_mse_psi2", "accum_erwl"};
  std::vector<MertonSeries> ok;
  for (std::size_t r = 0; r < R; ++r) {
    if (!series[r]) {
      out.failures.push_back(errors[r]);
      continue;
    }
    const auto& m = *series[r];
    const fs::path f = dir / "replications" / rep_file_name(r);
    merton_episode_table(m).write(f);
    out.files.push_back(f);
    const double d1 = m.psi1.back() - truth.psi1_star, d2 = m.psi2.back() - truth.psi2_star;
    summary.add_row({std::to_string(r), format_double(d1 * d1), format_double(d2 * d2),
                     format_double(m.accum.back())});
    ok.push_back(m);
  }
  summary.write(dir / "summary.csv");
  out.files.push_back(dir / "summary.csv");

  const auto agg = merton_aggregate(ok, truth.psi1_star, truth.psi2_star);
  agg.table.write(dir / "aggregate.csv");
  out.files.push_back(dir / "aggregate.csv");

  const double N = static_cast<double>(cfg.n_episodes);
  const double baseline = N * erwl({0.0, 0.0, 1.0}, s.market, 0.0);
  json res = {{"psi1_star", truth.psi1_star},
              {"psi2_star", truth.psi2_star},
              {"theta_star", truth.theta_star},
              {"replications_ok", ok.size()},
              {"replications_failed", R - ok.size()},
              {"mse_psi1_fit", fit_json(agg.mse_psi1, s.fit_from, N)},
              {"erwl_accum_fit", fit_json(agg.accum, s.fit_from, N)},
              {"linear_baseline_erwl", baseline}};
  if (!agg.mse_psi1.empty()) {
    res["final_mse_psi1"] = agg.mse_psi1.back().value;
    res["final_erwl_accum"] = agg.accum.back().value;
    res["erwl_accum_over_baseline"] = agg.accum.back().value / baseline;
  }
  out.report["results"] = res;
  out.exit_code = exit_for(R - ok.size(), R);
}

const std::vector<std::string> kLqRepHeader{
    "T",      "epsilon", "replication", "failed",      "psi1",        "psi2",       "psi3",
    "theta0", "theta1",  "theta2",      "sq_err_psi1", "sq_err_psi2", "sq_err_psi3"};

CsvTable lq_grid_table(const std::vector<LqCell>& cells) {
  CsvTable t;
  t.header = {"T", "epsilon", "mse_psi1", "mse_psi2", "mse_psi3", "replications", "failures"};
  for (const auto& c : cells)
    t.add_row({format_double(c.horizon), format_double(c.epsilon), format_double(c.mse_psi1),
               format_double(c.mse_psi2), format_double(c.mse_psi3),
               std::to_string(c.replications), std::to_string(c.failures)});
  return t;
}

void run_lq_experiment(const ExperimentConfig& cfg, int workers, ExperimentReport& out) {
  std::vector<std::string> problems;
  Reader rd(problems);
  const LqSweepConfig sc = lq_setup(cfg.resolved["parameters"], cfg.replications, rd);
  const RngStream base(cfg.master_seed, static_cast<std::uint64_t>(cfg.experiment));
  const LqSweepResult res = run_lq_sweep(sc, base, workers);

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  CsvTable reps;
  reps.header = kLqRepHeader;
  std::size_t failures = 0;
  for (const auto& r : res.runs) {
    const auto& e = r.estimate;
    if (r.failed) {
      ++failures;
      out.failures.push_back("T=" + format_double(sc.horizons[r.horizon_index]) +
                             " epsilon=" + format_double(sc.epsilons[r.epsilon_index]) +
                             " replication " + std::to_string(r.replication) + " failed");
    }
    reps.add_row({format_double(sc.horizons[r.horizon_index]),
                  format_double(sc.epsilons[r.epsilon_index]), std::to_string(r.replication),
                  r.failed ? "1" : "0", format_double(e.psi1), format_double(e.psi2),
                  format_double(e.psi3), format_double(e.theta0), format_double(e.theta1),
                  format_double(e.theta2), format_double(r.sq_err_psi1),
                  format_double(r.sq_err_psi2), format_double(r.sq_err_psi3)});
  }
  reps.write(dir / "replications.csv");
  lq_grid_table(res.cells).write(dir / "grid.csv");
  out.files.push_back(dir / "replications.csv");
  out.files.push_back(dir / "grid.csv");

  json grid = json::array();
  for (const auto& c : res.cells)
    grid.push_back({{"T", c.horizon},
                    {"epsilon", c.epsilon},
                    {"mse_psi1", c.mse_psi1},
                    {"mse_psi2", c.mse_psi2},
                    {"mse_psi3", c.mse_psi3},
                    {"replications", c.replications},
                    {"failures", c.failures}});
  out.report["results"] = {{"truth",
                            {{"k2", res.truth.k2},
                             {"k1", res.truth.k1},
                             {"beta", res.truth.beta},
                             {"policy_slope", res.truth.policy_slope},
                             {"policy_intercept", res.truth.policy_intercept},
                             {"psi3_target", res.truth.psi3_target()}}},
                           {"grid", grid}};
  out.exit_code = exit_for(failures, res.runs.size());
}

void run_pg_experiment(const ExperimentConfig& cfg, int workers, ExperimentReport& out) {
  std::vector<std::string> problems;
  Reader rd(problems);
  const PgSetup s = pg_setup(cfg.resolved["parameters"], rd);
  const RngStream base(cfg.master_seed, static_cast<std::uint64_t>(cfg.experiment));
  const PgBiasReport r = pg_bias_demo(s.phi, s.x, s.horizon, s.epsilon, s.paths, s.dt, base,
                                      workers);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  CsvTable t;
  t.header = {"naive_estimate", "naive_stderr", "true_gradient", "predicted_naive_mean", "bias",
              "paths"};
  t.add_row({format_double(r.naive_estimate), format_double(r.naive_stderr),
             format_double(r.true_gradient), format_double(r.predicted_naive_mean),
             format_double(r.bias), std::to_string(r.paths)});
  t.write(dir / "pg_bias.csv");
  out.files.push_back(dir / "pg_bias.csv");
  out.report["results"] = {{"naive_estimate", r.naive_estimate},
                           {"naive_stderr", r.naive_stderr},
                           {"true_gradient", r.true_gradient},
                           {"predicted_naive_mean", r.predicted_naive_mean},
                           {"bias", r.bias},
                           {"paths", r.paths}};
}

void run_schedule_experiment(const ExperimentConfig& cfg, ExperimentReport& out) {
  std::vector<std::string> problems;
  Reader rd(problems);
  const ScheduleCheckSetup s = schedule_check_setup(cfg.resolved["parameters"], rd);
  const ScheduleReport rep = validate_schedule(s.schedule, s.horizon, s.screen);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  CsvTable t;
  t.header = {"check", "passed", "statistic", "detail"};
  json checks = json::array();
  for (const auto& c : rep.checks) {
    std::string detail = c.detail;
    for (auto& ch : detail)
      if (ch == ',') ch = ';';
    t.add_row({c.name, c.passed ? "1" : "0", format_double(c.statistic), detail});
    checks.push_back(
        {{"check", c.name}, {"passed", c.passed}, {"statistic", c.statistic}, {"detail", c.detail}});
  }
  t.write(dir / "schedule_check.csv");
  out.files.push_back(dir / "schedule_check.csv");
  out.failures = rep.violations();
  out.report["results"] = {{"passed", rep.passed()},
                           {"decaying_temperature", rep.decaying_temperature},
                           {"required_step_constant", rep.required_step_constant},
                           {"checks", checks},
                           {"violations", rep.violations()}};
  out.exit_code = rep.passed() ? exit_ok : exit_schedule_violation;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const int workers = resolve_workers(cfg.workers > 0 ? std::optional<int>(cfg.workers)
                                                      : std::nullopt);
  ExperimentReport out;
  fs::create_directories(cfg.output_dir);
  write_json(cfg.output_dir / "config.json", cfg.echo());
  out.files.push_back(cfg.output_dir / "config.json");
  out.report["config"] = cfg.echo();

  switch (cfg.experiment) {
    case ExperimentKind::merton_regime_a:
    case ExperimentKind::merton_regime_b: run_merton_experiment(cfg, workers, out); break;
    case ExperimentKind::lq_sweep: run_lq_experiment(cfg, workers, out); break;
    case ExperimentKind::pg_bias: run_pg_experiment(cfg, workers, out); break;
    case ExperimentKind::schedule_check: run_schedule_experiment(cfg, out); break;
  }

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.report["failures"] = out.failures;
  out.report["exit_code"] = out.exit_code;
  out.report["provenance"] = {{"master_seed", cfg.master_seed},
                              {"version", QVRL_VERSION},
                              {"workers", workers},
                              {"wall_clock_seconds", secs}};
  write_json(cfg.output_dir / "report.json", out.report);
  out.files.push_back(cfg.output_dir / "report.json");
  return out;
}

std::string reaggregate(const fs::path& output_dir) {
  const ExperimentConfig cfg = load_config(output_dir / "config.json");
  std::vector<std::string> problems;
  Reader rd(problems);
  switch (cfg.experiment) {
    case ExperimentKind::merton_regime_a:
    case ExperimentKind::merton_regime_b: {
      const MertonSetup s = merton_setup(cfg.resolved["parameters"], rd);
      const auto truth = ground_truth(s.market, s.schedule.lambda(0));
      std::vector<MertonSeries> reps;
      for (std::size_t r = 0; r < cfg.replications; ++r) {
        const fs::path f = output_dir / "replications" / rep_file_name(r);
        if (fs::exists(f)) reps.push_back(merton_series_from(CsvTable::read(f)));
      }
      return merton_aggregate(reps, truth.psi1_star, truth.psi2_star).table.to_string();
    }
    case ExperimentKind::lq_sweep: {
      const LqSweepConfig sc = lq_setup(cfg.resolved["parameters"], cfg.replications, rd);
      const CsvTable t = CsvTable::read(output_dir / "replications.csv");
      if (t.header != kLqRepHeader) throw std::runtime_error("unexpected replications header");
      auto index_of = [](const std::vector<double>& xs, double v) {
        for (std::size_t i = 0; i < xs.size(); ++i)
          if (xs[i] == v) return i;
        throw std::runtime_error("value not in configured grid");
      };
      std::vector<LqReplication> runs;
      for (const auto& row : t.rows) {
        LqReplication r;
        r.horizon_index = index_of(sc.horizons, parse_double(row[0]));
        r.epsilon_index = index_of(sc.epsilons, parse_double(row[1]));
        r.replication = static_cast<std::size_t>(std::stoull(row[2]));
        r.failed = row[3] == "1";
        r.sq_err_psi1 = parse_double(row[10]);
        r.sq_err_psi2 = parse_double(row[11]);
        r.sq_err_psi3 = parse_double(row[12]);
        runs.push_back(r);
      }
      return lq_grid_table(aggregate_lq_cells(sc, runs)).to_string();
    }
    default: throw std::runtime_error("experiment has no aggregate table");
  }
}

}  // namespace qvrl
