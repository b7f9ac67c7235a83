// prlab: experiments on the perception-robustness tradeoff for the Gaussian
// denoising toy problem and exhaustive checks on finite models.
//
// Configuration precedence: built-in defaults < --config JSON file < flags.
// Every artifact is written atomically next to `<artifact>.config.json`
// holding the fully resolved configuration.
//
// Exit codes: 0 success, 1 verification failure / training divergence /
// failed cells / runtime error, 2 usage or configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "prlab/analytics.hpp"
#include "prlab/estimator.hpp"
#include "prlab/io.hpp"
#include "prlab/model.hpp"
#include "prlab/oracle.hpp"
#include "prlab/robustness.hpp"
#include "prlab/training.hpp"
#include "prlab/transport.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::uint64_t kDefaultMasterSeed = 20240501;
constexpr const char* kOutDirEnv = "PRLAB_OUT_DIR";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Nonzero exit without a usage error (failed verification, diverged run).
struct RunFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json common_defaults() {
  const char* env = std::getenv(kOutDirEnv);
  return {{"seed", kDefaultMasterSeed},
          {"sigma_n", 1.0},
          {"out_dir", env != nullptr && *env != '\0' ? env : "prlab_out"},
          {"no_timestamp", false}};
}

json training_defaults() {
  const prlab::TrainConfig c;
  return {{"steps", c.steps},
          {"batch", c.batch},
          {"train_samples", c.train_samples},
          {"lr", c.lr},
          {"sigma_z2", c.sigma_z2},
          {"z_param_is_stddev", c.z_param_is_stddev},
          {"r1_coeff", c.r1_coeff},
          {"lr_halving_start", c.lr_halving_start},
          {"lr_halving_period", c.lr_halving_period}};
}

json estimator_defaults() { return {{"estimator", "zigzag"}, {"delta", 0.25}, {"checkpoint", ""}}; }

json attack_defaults() {
  const prlab::AttackConfig a;
  return {{"alpha", a.alpha}, {"attack_steps", a.steps}};
}

json command_defaults(const std::string& cmd) {
  json d = common_defaults();
  auto merge = [&](const json& more) { d.update(more); };
  if (cmd == "sweep") {
    merge({{"family", "zigzag"},
           {"deltas", {1.0, 0.5, 0.25, 0.125, 0.0625}},
           {"lambdas", {0.0, 0.03, 0.1, 0.3, 1.0, 10.0}},
           {"seeds", {0, 1, 2}},
           {"n_metric", 2000},
           {"n_probe", 1000},
           {"zigzag_probe_sigma_z2", prlab::ZigzagSweep{}.probe_sigma_z2},
           {"q_clip", prlab::kDefaultQClip},
           {"paired", true},
           {"threads", 1},
           {"log_log", false}});
    merge(training_defaults());
  } else if (cmd == "train") {
    merge({{"lambda", 0.0}, {"n_metric", 2000}, {"n_probe", 1000}});
    merge(training_defaults());
  } else if (cmd == "kbar") {
    merge(estimator_defaults());
    merge(attack_defaults());
    merge({{"method", "random"}, {"n", 1000}, {"probe_sigma_z2", 0.2}});
  } else if (cmd == "emd") {
    merge({{"inputs", json::array()}, {"ground", "l1"}, {"p", 1}, {"solver", "exact"}});
  } else if (cmd == "fps") {
    merge(estimator_defaults());
    merge(attack_defaults());
    merge({{"y", 0.0}, {"S", 5}, {"fps_loss", "mean"}});
    d["alpha"] = 0.1;
    d["attack_steps"] = 150;
  } else if (cmd == "diag") {
    merge({{"ys", {0.0, 1.0, 2.0, 3.0}}, {"n_mc", 100000}, {"n_residual", 10000}});
  } else if (cmd == "oracle") {
    merge({{"model", ""}, {"p", 1}, {"gamma_policy", "global"}});
  }
  return d;
}

std::string flag_name(const std::string& key) {
  std::string f = "--";
  for (char c : key) f += c == '_' ? '-' : c;
  return f;
}

/// Registers one flag per default key; the callbacks write into `overrides`
/// so only flags given on the command line take part in the merge.
void register_flags(CLI::App* sub, const json& defaults, json& overrides) {
  for (const auto& [key, value] : defaults.items()) {
    const std::string name = flag_name(key);
    const std::string k = key;
    const std::string help = "default " + value.dump();
    if (key == "inputs") {
      sub->add_option_function<std::vector<std::string>>(
             "inputs", [&overrides, k](const std::vector<std::string>& v) { overrides[k] = v; }, "input CSV files")
          ->expected(2);
    } else if (value.is_boolean()) {
      sub->add_flag_function(name, [&overrides, k](std::int64_t n) { overrides[k] = n > 0; }, help);
    } else if (value.is_number_unsigned() || value.is_number_integer()) {
      sub->add_option_function<std::int64_t>(name, [&overrides, k](const std::int64_t& v) { overrides[k] = v; }, help);
    } else if (value.is_number()) {
      sub->add_option_function<double>(name, [&overrides, k](const double& v) { overrides[k] = v; }, help);
    } else if (value.is_string()) {
      sub->add_option_function<std::string>(name, [&overrides, k](const std::string& v) { overrides[k] = v; }, help);
    } else if (value.is_array() && !value.empty() && value.front().is_number_integer()) {
      sub->add_option_function<std::vector<std::int64_t>>(
             name, [&overrides, k](const std::vector<std::int64_t>& v) { overrides[k] = v; }, help)
          ->delimiter(',');
    } else if (value.is_array()) {
      sub->add_option_function<std::vector<double>>(
             name, [&overrides, k](const std::vector<double>& v) { overrides[k] = v; }, help)
          ->delimiter(',');
    }
  }
}

/// defaults, then the config file, then flags. Unknown keys and type
/// mismatches in the file are usage errors.
json resolve_config(const std::string& cmd, const std::string& config_path, const json& overrides) {
  json cfg = command_defaults(cmd);
  if (!config_path.empty()) {
    json file;
    try {
      file = json::parse(prlab::read_text(config_path));
    } catch (const json::exception& e) {
      throw UsageError("malformed config " + config_path + ": " + e.what());
    } catch (const prlab::Error& e) {
      throw UsageError(e.what());
    }
    if (!file.is_object()) throw UsageError("config must be a JSON object");
    for (const auto& [key, value] : file.items()) {
      if (key == "command") {
        if (value != cmd) throw UsageError("config is for command " + value.dump() + ", not \"" + cmd + "\"");
        continue;
      }
      if (!cfg.contains(key)) throw UsageError("unknown config key '" + key + "' for command " + cmd);
      const json& d = cfg[key];
      const bool ok = (d.is_number() && value.is_number()) || d.type() == value.type();
      if (!ok) throw UsageError("config key '" + key + "' has the wrong type");
      cfg[key] = value;
    }
  }
  for (const auto& [key, value] : overrides.items()) cfg[key] = value;
  cfg["command"] = cmd;
  return cfg;
}

template <class T>
T get(const json& cfg, const char* key) {
  try {
    return cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

std::size_t get_count(const json& cfg, const char* key) {
  const auto v = get<std::int64_t>(cfg, key);
  if (v < 0) throw UsageError(std::string(key) + " must be nonnegative");
  return static_cast<std::size_t>(v);
}

prlab::GaussianToyModel toy_model(const json& cfg) { return prlab::GaussianToyModel(get<double>(cfg, "sigma_n")); }

prlab::TrainConfig train_config(const json& cfg) {
  prlab::TrainConfig c;
  c.steps = get_count(cfg, "steps");
  c.batch = get_count(cfg, "batch");
  c.train_samples = get_count(cfg, "train_samples");
  c.lr = get<double>(cfg, "lr");
  c.sigma_z2 = get<double>(cfg, "sigma_z2");
  c.z_param_is_stddev = get<bool>(cfg, "z_param_is_stddev");
  c.r1_coeff = get<double>(cfg, "r1_coeff");
  c.lr_halving_start = get_count(cfg, "lr_halving_start");
  c.lr_halving_period = get_count(cfg, "lr_halving_period");
  if (cfg.contains("lambda")) c.lambda = get<double>(cfg, "lambda");
  c.seed = get<std::uint64_t>(cfg, "seed");
  return c;
}

prlab::Estimator build_estimator(const json& cfg, const prlab::GaussianToyModel& model) {
  const auto name = get<std::string>(cfg, "estimator");
  if (name == "mmse") return prlab::make_mmse(model);
  if (name == "dmax") return prlab::make_dmax(model);
  if (name == "zigzag") return prlab::make_zigzag(model, get<double>(cfg, "delta"));
  if (name == "posterior") return prlab::make_posterior_sampler(model, get<std::uint64_t>(cfg, "seed"));
  if (name == "checkpoint") {
    const auto path = get<std::string>(cfg, "checkpoint");
    if (path.empty()) throw UsageError("estimator 'checkpoint' needs --checkpoint <file>");
    try {
      return prlab::Estimator::from_json(json::parse(prlab::read_text(path)));
    } catch (const json::exception& e) {
      throw UsageError("malformed checkpoint " + path + ": " + e.what());
    }
  }
  throw UsageError("unknown estimator '" + name + "' (mmse, dmax, zigzag, posterior, checkpoint)");
}

prlab::AttackConfig attack_config(const json& cfg) {
  prlab::AttackConfig a;
  a.alpha = get<double>(cfg, "alpha");
  a.steps = get_count(cfg, "attack_steps");
  a.seed = get<std::uint64_t>(cfg, "seed");
  return a;
}

fs::path out_path(const json& cfg, const std::string& name) { return fs::path(get<std::string>(cfg, "out_dir")) / name; }

std::string fmt(double v) { return prlab::format_double(v); }

// ---------------------------------------------------------------------------
// commands

int cmd_sweep(const json& cfg) {
  const auto model = toy_model(cfg);
  const auto family = get<std::string>(cfg, "family");
  prlab::SweepOptions opt;
  opt.n_metric = get_count(cfg, "n_metric");
  opt.n_probe = get_count(cfg, "n_probe");
  opt.threads = get_count(cfg, "threads");
  opt.jemd.paired = get<bool>(cfg, "paired");
  opt.seeds = get<std::vector<std::uint64_t>>(cfg, "seeds");
  prlab::SweepFamily fam;
  if (family == "zigzag") {
    prlab::ZigzagSweep z;
    z.deltas = get<std::vector<double>>(cfg, "deltas");
    z.q_clip = get<double>(cfg, "q_clip");
    z.probe_sigma_z2 = get<double>(cfg, "zigzag_probe_sigma_z2");
    fam = z;
  } else if (family == "lambda") {
    prlab::LambdaSweep l;
    l.lambdas = get<std::vector<double>>(cfg, "lambdas");
    l.train = train_config(cfg);
    fam = l;
  } else {
    throw UsageError("unknown family '" + family + "' (zigzag or lambda)");
  }
  const prlab::SweepResult r = prlab::tradeoff_sweep(fam, model, opt);

  std::ostringstream csv;
  prlab::write_sweep_csv(csv, r);
  prlab::write_artifact(out_path(cfg, "sweep_" + family + ".csv"), csv.str(), cfg);
  prlab::SvgOptions svg;
  svg.log_log = get<bool>(cfg, "log_log");
  svg.timestamp = !get<bool>(cfg, "no_timestamp");
  prlab::write_artifact(out_path(cfg, "sweep_" + family + ".svg"), prlab::tradeoff_svg(r, svg), cfg);

  std::printf("%-10s %-12s %-12s %s\n", "control", "jemd", "kbar", "status");
  for (const auto& a : r.aggregated) {
    std::printf("%-10.4g %-12.5f %-12.4f %s\n", a.point.control, a.point.jemd, a.point.kbar, a.status.c_str());
  }
  if (r.aggregated.size() >= 2) {
    try {
      const auto t = prlab::sweep_trend(r);
      std::printf("spearman(control, jemd) = %.3f  spearman(control, kbar) = %.3f\n", t.spearman_jemd, t.spearman_kbar);
    } catch (const prlab::InvalidParameter&) {
    }
  }
  std::size_t failed = 0;
  for (const auto& c : r.cells) {
    if (c.status != "ok") {
      ++failed;
      std::fprintf(stderr, "cell control=%g seed=%llu: %s\n", c.point.control,
                   static_cast<unsigned long long>(c.point.seed), c.status.c_str());
    }
  }
  if (failed > 0) throw RunFailure(std::to_string(failed) + " sweep cell(s) failed");
  return 0;
}

int cmd_train(const json& cfg) {
  const auto model = toy_model(cfg);
  const prlab::TrainConfig tc = train_config(cfg);
  prlab::TrainResult tr = [&] {
    try {
      return prlab::train_denoiser(model, tc);
    } catch (const prlab::TrainingDiverged& e) {
      throw RunFailure(e.what());
    }
  }();
  std::ostringstream hist;
  prlab::write_history_csv(hist, tr.history);
  prlab::write_artifact(out_path(cfg, "train_history.csv"), hist.str(), cfg);
  prlab::write_artifact(out_path(cfg, "estimator.json"), tr.estimator.to_json().dump(2) + "\n", cfg);

  const std::uint64_t eval_seed = prlab::resolve_seeds(tc.seed, "train/eval");
  prlab::JemdOptions jo;
  jo.paired = true;
  const std::size_t n_metric = get_count(cfg, "n_metric");
  json metrics;
  metrics["jemd"] = prlab::jemd(tr.estimator, model, n_metric, eval_seed, jo);
  metrics["jemd_mmse"] = prlab::jemd(prlab::make_mmse(model), model, n_metric, eval_seed, jo);
  metrics["kbar"] = prlab::kbar_random(tr.estimator, model, get_count(cfg, "n_probe"), tc.z_stddev() * tc.z_stddev(),
                                       prlab::resolve_seeds(tc.seed, "train/probe"));
  metrics["final"] = {{"d_loss", tr.history.steps.back().d_loss},
                      {"g_loss", tr.history.steps.back().g_loss},
                      {"r1", tr.history.steps.back().r1},
                      {"robustness_loss", tr.history.steps.back().robustness_loss}};
  prlab::write_artifact(out_path(cfg, "train_metrics.json"), metrics.dump(2) + "\n", cfg);
  std::printf("jemd %.5f (mmse %.5f)  kbar %.4f\n", metrics["jemd"].get<double>(),
              metrics["jemd_mmse"].get<double>(), metrics["kbar"].get<double>());
  return 0;
}

int cmd_kbar(const json& cfg) {
  const auto model = toy_model(cfg);
  const auto e = build_estimator(cfg, model);
  const auto method = get<std::string>(cfg, "method");
  const std::size_t n = get_count(cfg, "n");
  json out{{"estimator", prlab::to_string(e.kind())}, {"method", method}, {"n", n}};
  if (method == "random") {
    out["kbar"] = prlab::kbar_random(e, model, n, get<double>(cfg, "probe_sigma_z2"), get<std::uint64_t>(cfg, "seed"));
  } else if (method == "ifgsm") {
    const auto k = prlab::kbar_ifgsm_detail(e, model, n, attack_config(cfg));
    out["kbar"] = k.kbar;
    out["degenerate"] = k.degenerate;
  } else {
    throw UsageError("unknown method '" + method + "' (random or ifgsm)");
  }
  prlab::write_artifact(out_path(cfg, "kbar.json"), out.dump(2) + "\n", cfg);
  std::printf("kbar %s\n", fmt(out["kbar"].get<double>()).c_str());
  return 0;
}

int cmd_emd(const json& cfg) {
  const auto inputs = get<std::vector<std::string>>(cfg, "inputs");
  if (inputs.size() != 2) throw UsageError("emd needs exactly two input CSV files");
  prlab::WassersteinOptions wo;
  wo.ground = prlab::parse_ground(get<std::string>(cfg, "ground"));
  wo.p = static_cast<int>(get<std::int64_t>(cfg, "p"));
  if (wo.p < 1) throw UsageError("p must be at least 1");
  const auto solver = get<std::string>(cfg, "solver");
  if (solver == "exact") {
    wo.solver = prlab::OtSolver::Exact;
  } else if (solver == "sinkhorn") {
    wo.solver = prlab::OtSolver::Sinkhorn;
  } else if (solver == "auto") {
    wo.solver = prlab::OtSolver::Auto;
  } else {
    throw UsageError("unknown solver '" + solver + "' (exact, sinkhorn, auto)");
  }
  const auto a = prlab::read_points_csv(fs::path(inputs[0]));
  const auto b = prlab::read_points_csv(fs::path(inputs[1]));
  if (a.dim != b.dim) throw UsageError("input files have different dimensions");
  const auto r = prlab::wasserstein(a, b, wo);
  const json out{{"cost", r.cost}, {"distance", r.distance}, {"p", r.p}, {"exact", r.exact}, {"converged", r.converged}};
  prlab::write_artifact(out_path(cfg, "emd.json"), out.dump(2) + "\n", cfg);
  std::printf("cost %s\n", fmt(r.cost).c_str());
  return 0;
}

int cmd_fps(const json& cfg) {
  const auto model = toy_model(cfg);
  const auto e = build_estimator(cfg, model);
  prlab::AttackConfig ac = attack_config(cfg);
  ac.objective = prlab::AttackObjective::FpsSpread;
  const auto loss = get<std::string>(cfg, "fps_loss");
  if (loss == "mean") {
    ac.fps_loss = prlab::FpsLoss::Mean;
  } else if (loss == "last") {
    ac.fps_loss = prlab::FpsLoss::LastOnly;
  } else {
    throw UsageError("unknown fps_loss '" + loss + "' (mean or last)");
  }
  const std::size_t S = get_count(cfg, "S");
  const std::vector<double> y(e.input_dim(), get<double>(cfg, "y"));
  const auto samples = prlab::fps_explore(e, y, S, ac);
  std::ostringstream csv;
  csv << "index";
  for (std::size_t k = 0; k < y.size(); ++k) csv << ",y_adv_" << k;
  for (std::size_t k = 0; k < samples[0].output.size(); ++k) csv << ",output_" << k;
  csv << "\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    csv << i;
    for (double v : samples[i].y_adv) csv << ',' << fmt(v);
    for (double v : samples[i].output) csv << ',' << fmt(v);
    csv << "\n";
  }
  prlab::write_artifact(out_path(cfg, "fps.csv"), csv.str(), cfg);
  std::printf("spread %s over %zu samples\n", fmt(prlab::output_spread(samples)).c_str(), samples.size());
  return 0;
}

int cmd_diag(const json& cfg) {
  const auto model = toy_model(cfg);
  const auto seed = get<std::uint64_t>(cfg, "seed");
  const std::vector<prlab::Estimator> ests = {prlab::make_mmse(model), prlab::make_dmax(model),
                                              prlab::make_posterior_sampler(model, prlab::resolve_seeds(seed, "diag/posterior"))};
  const std::size_t n_mc = get_count(cfg, "n_mc");
  std::ostringstream cm;
  cm << "estimator,y,closed,mc,se,n\n";
  for (const auto& e : ests) {
    for (double y : get<std::vector<double>>(cfg, "ys")) {
      const auto mc = prlab::conditional_mse_mc(e, model, y, n_mc, seed);
      cm << prlab::to_string(e.kind()) << ',' << fmt(y) << ',' << fmt(prlab::conditional_mse_closed(e.kind(), model, y))
         << ',' << fmt(mc.value) << ',' << fmt(mc.standard_error) << ',' << mc.n << "\n";
    }
  }
  prlab::write_artifact(out_path(cfg, "diag_cmse.csv"), cm.str(), cfg);
  std::ostringstream rd;
  rd << "estimator,ks_stat,ks_pvalue,corr,n\n";
  for (const auto& e : ests) {
    const auto r = prlab::residual_diagnostics(e, model, get_count(cfg, "n_residual"), seed);
    rd << prlab::to_string(e.kind()) << ',' << fmt(r.ks_statistic) << ',' << fmt(r.ks_pvalue) << ','
       << fmt(r.pearson_corr) << ',' << r.n << "\n";
  }
  prlab::write_artifact(out_path(cfg, "diag_residuals.csv"), rd.str(), cfg);
  std::cout << cm.str() << rd.str();
  return 0;
}

int cmd_oracle(const json& cfg) {
  const auto path = get<std::string>(cfg, "model");
  if (path.empty()) throw UsageError("oracle needs --model <file.json>");
  prlab::DiscreteJointModel model = [&] {
    try {
      return prlab::discrete_model_from_json(json::parse(prlab::read_text(path)));
    } catch (const json::exception& e) {
      throw UsageError("malformed model " + path + ": " + e.what());
    } catch (const prlab::InvalidParameter& e) {
      throw UsageError(e.what());
    }
  }();
  const int p = static_cast<int>(get<std::int64_t>(cfg, "p"));
  const auto pol = get<std::string>(cfg, "gamma_policy");
  prlab::GammaPolicy policy;
  if (pol == "global") {
    policy = prlab::GammaPolicy::Global;
  } else if (pol == "per-map" || pol == "per_map") {
    policy = prlab::GammaPolicy::PerMap;
  } else {
    throw UsageError("unknown gamma_policy '" + pol + "' (global or per-map)");
  }
  const prlab::TheoremReport rep = prlab::theorem_report(model, p, policy);
  std::ostringstream csv;
  csv << "map_id,wp,k,g,satisfied\n";
  for (const auto& r : rep.records) {
    csv << r.map_id << ',' << fmt(r.wp) << ',' << fmt(r.k) << ',' << fmt(r.g) << ',' << (r.satisfied ? "true" : "false")
        << "\n";
  }
  prlab::write_artifact(out_path(cfg, "oracle_report.csv"), csv.str(), cfg);
  const json summary{{"beta", rep.constants.beta}, {"k", rep.constants.k},     {"p_sy", rep.constants.p_sy},
                     {"t", rep.t},                 {"gamma", rep.gamma},       {"min_wp", rep.min_wp},
                     {"all_satisfied", rep.all_satisfied}, {"maps", rep.records.size()}, {"p", p}};
  prlab::write_artifact(out_path(cfg, "oracle_summary.json"), summary.dump(2) + "\n", cfg);
  std::cout << summary.dump(2) << "\n";
  if (!rep.all_satisfied) {
    try {
      prlab::verify_theorem(model, p, policy);
    } catch (const prlab::VerificationFailure& e) {
      std::string m;
      for (std::size_t xi : e.counterexample()) m += (m.empty() ? "" : ",") + std::to_string(xi);
      throw RunFailure(std::string(e.what()) + " (map x-indices " + m + ")");
    }
    throw RunFailure("theorem check failed");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Perception-robustness tradeoff experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "prlab 1.0");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"sweep", "K-bar vs JEMD sweep over the zigzag or trained family (CSV + SVG)"},
      {"train", "train the 1-D denoiser with a given lambda"},
      {"kbar", "Lipschitz lower bound K-bar of an estimator"},
      {"emd", "exact or entropic W_p between two CSV point sets"},
      {"fps", "farthest-point exploration of an estimator's outputs at y"},
      {"diag", "conditional MSE and residual diagnostics of the closed-form estimators"},
      {"oracle", "exhaustive theorem check on a discrete model JSON"}};

  std::map<std::string, json> overrides;
  std::map<std::string, std::string> config_paths;
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_paths[name], "JSON config file (flags override its values)");
    overrides[name] = json::object();
    register_flags(sub, command_defaults(name), overrides[name]);
    subs[name] = sub;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::string cmd;
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) cmd = name;

  try {
    const json cfg = resolve_config(cmd, config_paths[cmd], overrides[cmd]);
    if (cmd == "sweep") return cmd_sweep(cfg);
    if (cmd == "train") return cmd_train(cfg);
    if (cmd == "kbar") return cmd_kbar(cfg);
    if (cmd == "emd") return cmd_emd(cfg);
    if (cmd == "fps") return cmd_fps(cfg);
    if (cmd == "diag") return cmd_diag(cfg);
    if (cmd == "oracle") return cmd_oracle(cfg);
    throw UsageError("unknown command");
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const prlab::InvalidParameter& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const prlab::PreconditionFailed& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const prlab::TooLarge& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const RunFailure& e) {
    std::fprintf(stderr, "failed: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failed: %s\n", e.what());
    return 1;
  }
}
