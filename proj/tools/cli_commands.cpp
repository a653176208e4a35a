#include "cli_commands.hpp"

#include "factorlens/dataset_io.hpp"
#include "factorlens/findata.hpp"
#include "factorlens/oracles.hpp"
#include "factorlens/parallel.hpp"
#include "factorlens/selection.hpp"
#include "factorlens/study.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace factorlens::cli {

namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// Config access

template <class T>
T get_or(const Config& c, const std::string& key, T fallback) {
  if (!c.contains(key) || c.at(key).is_null()) return fallback;
  try {
    return c.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InputError("config: '" + key + "' has the wrong type");
  }
}

template <class T>
T require(const Config& c, const std::string& key) {
  if (!c.contains(key) || c.at(key).is_null()) throw InputError("config: '" + key + "' is required");
  return get_or<T>(c, key, T{});
}

std::vector<double> grid_or(const Config& c, const std::string& key,
                            std::vector<double> fallback) {
  if (!c.contains(key) || c.at(key).is_null()) return fallback;
  return parse_grid(c.at(key), key);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> range_grid(double start, double step, double stop, const std::string& key) {
  try {
    return ParamGrid::range(start, step, stop).candidates();
  } catch (const ParameterError& e) {
    throw InputError("config: '" + key + "': " + e.what());
  }
}

int threads_of(const Config& c) {
  const int t = get_or<int>(c, "threads", default_threads());
  if (t < 1) throw InputError("config: 'threads' must be >= 1");
  return t;
}

fs::path output_dir(const Config& c, const std::string& fallback) {
  fs::path dir = get_or<std::string>(c, "out", fallback);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
  if (!f) throw InputError("failed writing " + path.string());
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

bool is_k_estimator(const std::string& e) { return e == "urm" || e == "mrh" || e == "em"; }

LearnerOptions learner_options(const Config& c, bool strict_default) {
  LearnerOptions o;
  o.strict = get_or<bool>(c, "strict", strict_default);
  return o;
}

// ---------------------------------------------------------------------------
// Synthetic study config

StudyConfig study_config(const Config& c) {
  StudyConfig s;
  s.synth.m = get_or<Index>(c, "m", 200);
  s.synth.k_star = get_or<Index>(c, "k_star", 10);
  s.synth.sigma_f = get_or<double>(c, "sigma_f", 5.0);
  s.synth.sigma_r = get_or<double>(c, "sigma_r", 0.0);
  s.synth.seed = get_or<std::uint64_t>(c, "seed", 1);
  s.nonuniform = get_or<bool>(c, "nonuniform", s.synth.sigma_r > 0.0);
  s.n_values = get_or<std::vector<Index>>(c, "n_values", {100});
  s.replications = get_or<int>(c, "replications", 30);
  s.estimators = get_or<std::vector<std::string>>(c, "estimators", {"urm", "utm"});
  s.k_grid = grid_or(c, "k_grid", range_grid(0, 1, 15, "k_grid"));
  s.lambda_grid = grid_or(c, "lambda_grid", range_grid(100, 20, 400, "lambda_grid"));
  s.train_fraction = get_or<double>(c, "train_fraction", 0.7);
  for (const auto& p : get_or<std::vector<std::string>>(c, "edr_pairs", {})) {
    const auto parts = split(p, '/');
    if (parts.size() != 2) throw InputError("config: EDR pair '" + p + "' must read candidate/baseline");
    s.edr_pairs.push_back(EdrPair{parts[0], parts[1]});
  }
  s.edr_alpha = get_or<double>(c, "edr_alpha", 0.02);
  s.edr_reuse_theta = get_or<bool>(c, "edr_reuse_theta", false);
  s.threads = threads_of(c);
  s.learner_options = learner_options(c, false);
  if (!(s.train_fraction > 0.0 && s.train_fraction < 1.0))
    throw InputError("config: 'train_fraction' must lie in (0, 1)");
  return s;
}

Config study_echo(const StudyConfig& s) {
  Config j;
  j["m"] = s.synth.m;
  j["k_star"] = s.synth.k_star;
  j["sigma_f"] = s.synth.sigma_f;
  j["sigma_r"] = s.synth.sigma_r;
  j["nonuniform"] = s.nonuniform;
  j["seed"] = s.synth.seed;
  j["n_values"] = s.n_values;
  j["replications"] = s.replications;
  j["estimators"] = s.estimators;
  j["k_grid"] = s.k_grid;
  j["lambda_grid"] = s.lambda_grid;
  j["train_fraction"] = s.train_fraction;
  std::vector<std::string> pairs;
  for (const auto& p : s.edr_pairs) pairs.push_back(p.u2 + "/" + p.u1);
  j["edr_pairs"] = pairs;
  j["edr_alpha"] = s.edr_alpha;
  j["edr_reuse_theta"] = s.edr_reuse_theta;
  j["strict"] = s.learner_options.strict;
  return j;
}

std::size_t warning_count(const StudyResult& r) {
  std::size_t n = 0;
  for (const auto& s : r.scores) n += s.warnings.size();
  return n;
}

// ---------------------------------------------------------------------------

const std::vector<OptionSpec> kStudyOptions = {
    {"m", "m", OptionKind::kInt, "number of variables"},
    {"k-star", "k_star", OptionKind::kInt, "number of true factors"},
    {"sigma-f", "sigma_f", OptionKind::kDouble, "factor strength standard deviation"},
    {"sigma-r", "sigma_r", OptionKind::kDouble, "log-std of residual variances (0: uniform)"},
    {"nonuniform", "nonuniform", OptionKind::kFlag, "draw nonuniform residual variances"},
    {"n-values", "n_values", OptionKind::kIntList, "sample sizes, comma separated"},
    {"replications", "replications", OptionKind::kInt, "replications per sample size"},
    {"estimators", "estimators", OptionKind::kStringList, "urm,utm,mrh,em,tm,stm"},
    {"k-grid", "k_grid", OptionKind::kGrid, "factor-count grid, a:step:b or list"},
    {"lambda-grid", "lambda_grid", OptionKind::kGrid, "trace-penalty grid, a:step:b or list"},
    {"train-fraction", "train_fraction", OptionKind::kDouble, "holdout training share"},
    {"edr-pairs", "edr_pairs", OptionKind::kStringList, "candidate/baseline pairs, e.g. utm/urm"},
    {"edr-alpha", "edr_alpha", OptionKind::kDouble, "EDR prefix shrink step"},
    {"edr-reuse-theta", "edr_reuse_theta", OptionKind::kFlag,
     "reuse the full-data parameter on EDR prefixes"},
    {"seed", "seed", OptionKind::kInt, "base seed"},
    {"threads", "threads", OptionKind::kInt, "worker threads (default FACTORLENS_THREADS)"},
    {"out", "out", OptionKind::kString, "output directory"},
    {"strict", "strict", OptionKind::kFlag, "fail on solver non-convergence"},
};

}  // namespace

// ---------------------------------------------------------------------------

std::vector<double> parse_grid(const Config& value, const std::string& key) {
  try {
    if (value.is_array()) return ParamGrid(value.get<std::vector<double>>()).candidates();
    if (value.is_object()) {
      for (const auto& [k, v] : value.items())
        if (k != "start" && k != "step" && k != "stop")
          throw InputError("config: '" + key + "' has unknown field '" + k + "'");
      return range_grid(value.at("start").get<double>(), value.at("step").get<double>(),
                        value.at("stop").get<double>(), key);
    }
    if (value.is_string()) {
      const std::string text = value.get<std::string>();
      const auto parts = split(text, ':');
      if (parts.size() == 3)
        return range_grid(parse_double(parts[0]), parse_double(parts[1]), parse_double(parts[2]),
                          key);
      std::vector<double> v;
      for (const auto& p : split(text, ',')) v.push_back(parse_double(p));
      return ParamGrid(v).candidates();
    }
  } catch (const nlohmann::json::exception&) {
  } catch (const ParameterError& e) {
    throw InputError("config: '" + key + "': " + e.what());
  }
  throw InputError("config: '" + key + "' must be a list, a:step:b, or {start, step, stop}");
}

Config load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot read config file " + path);
  Config c;
  try {
    c = Config::parse(f, nullptr, true, true);  // comments allowed
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("config file " + path + ": " + e.what());
  }
  if (!c.is_object()) throw InputError("config file " + path + " must hold a JSON object");
  return c;
}

Config parse_flag_value(OptionKind kind, const std::string& text) {
  try {
    switch (kind) {
      case OptionKind::kString: return text;
      case OptionKind::kInt: {
        std::size_t pos = 0;
        const long long v = std::stoll(text, &pos);
        if (pos != text.size()) break;
        return v;
      }
      case OptionKind::kDouble: return parse_double(text);
      case OptionKind::kFlag: return true;
      case OptionKind::kIntList: {
        std::vector<long long> v;
        for (const auto& p : split(text, ',')) v.push_back(parse_flag_value(OptionKind::kInt, p).get<long long>());
        return v;
      }
      case OptionKind::kDoubleList: {
        std::vector<double> v;
        for (const auto& p : split(text, ',')) v.push_back(parse_double(p));
        return v;
      }
      case OptionKind::kStringList: return split(text, ',');
      case OptionKind::kGrid: return text;
    }
  } catch (const std::logic_error&) {
  }
  throw InputError("cannot parse '" + text + "'");
}

void reject_unknown_keys(const CommandSpec& command, const Config& config) {
  if (!config.is_object()) throw InputError("config must be a JSON object");
  for (const auto& [key, value] : config.items()) {
    const bool known = std::any_of(command.options.begin(), command.options.end(),
                                   [&](const OptionSpec& o) { return o.key == key; });
    if (!known) throw InputError(command.name + ": unknown config key '" + key + "'");
  }
}

int run_command(const CommandSpec& command, const Config& config, std::ostream& out,
                std::ostream& err) {
  try {
    reject_unknown_keys(command, config);
    return command.run(config, out);
  } catch (const ConvergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kConvergence;
  } catch (const OracleError& e) {
    err << "error: " << e.what() << '\n';
    return kConvergence;
  } catch (const InputError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const SelectionError& e) {
    err << "error: " << e.what() << '\n';
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    err << "error: config: " << e.what() << '\n';
    return kInputError;
  }
}

// ---------------------------------------------------------------------------
// fit

int cmd_fit(const Config& c, std::ostream& out) {
  const std::string input = require<std::string>(c, "input");
  const std::string est = require<std::string>(c, "estimator");
  const auto& names = learner_names();
  if (std::find(names.begin(), names.end(), est) == names.end())
    throw InputError("fit: unknown estimator '" + est + "'");
  if (!fs::exists(input)) throw InputError("fit: input file " + input + " not found");
  const Dataset data = read_dataset_csv_file(input, get_or<bool>(c, "header", false));

  if (get_or<bool>(c, "n_implied", false) && c.contains("n"))
    throw InputError("fit: 'n' and 'n_implied' are mutually exclusive");
  const Index n = get_or<Index>(c, "n", data.n());
  if (n < 1) throw InputError("fit: 'n' must be positive");

  double theta;
  if (is_k_estimator(est)) {
    if (c.contains("lambda")) throw InputError("fit: " + est + " takes 'k', not 'lambda'");
    theta = static_cast<double>(require<Index>(c, "k"));
  } else {
    if (c.contains("k")) throw InputError("fit: " + est + " takes 'lambda', not 'k'");
    theta = require<double>(c, "lambda");
  }

  const auto learner = make_learner(est, learner_options(c, true));
  const CovMatrix cov = sample_covariance(data);
  const FactorModelEstimate fit = learner->fit(cov, n, theta);
  const double ll = avg_loglik(fit.sigma(), data);

  const std::string prefix = get_or<std::string>(c, "out", "estimate");
  const fs::path parent = fs::path(prefix).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
  write_matrix_csv_file(prefix + ".sigma.csv", fit.sigma().matrix());

  Config j;
  j["schema"] = "factorlens.fit/1";
  j["estimator"] = est;
  j[is_k_estimator(est) ? "k" : "lambda"] = theta;
  j["input"] = input;
  j["n"] = n;
  j["rows"] = data.n();
  j["m"] = data.m();
  j["k_effective"] = fit.rank();
  j["trace"] = fit.sigma().trace();
  j["sample_trace"] = cov.trace();
  j["avg_loglik"] = std::isfinite(ll) ? Config(ll) : Config(nullptr);
  std::vector<std::vector<double>> loadings(static_cast<std::size_t>(fit.m()));
  for (Index i = 0; i < fit.m(); ++i)
    for (Index k = 0; k < fit.rank(); ++k) loadings[i].push_back(fit.loadings()(i, k));
  j["loadings"] = loadings;
  j["residual"] = std::vector<double>(fit.residual().data(),
                                      fit.residual().data() + fit.residual().size());
  j["warnings"] = fit.warnings();
  write_text(prefix + ".json", j.dump(2) + "\n");

  out << "avg_loglik " << std::setprecision(12) << ll << '\n';
  return kOk;
}

// ---------------------------------------------------------------------------
// synth-study and edr

int cmd_synth_study(const Config& c, std::ostream& out) {
  const StudyConfig s = study_config(c);
  const fs::path dir = output_dir(c, "synth_study");
  const StudyResult r = run_synth_study(s);

  write_text(dir / "scores.csv", scores_csv(r));
  write_text(dir / "aggregate.csv", aggregate_csv(r, s));
  std::vector<std::string> files{"scores.csv", "aggregate.csv"};
  if (!s.edr_pairs.empty()) {
    write_text(dir / "edr.csv", edr_csv(r));
    write_text(dir / "edr_aggregate.csv", edr_aggregate_csv(r, s));
    files.insert(files.end(), {"edr.csv", "edr_aggregate.csv"});
  }
  Config j;
  j["schema"] = "factorlens.synth_study/1";
  j["generator"] = kGeneratorName;
  j["config"] = study_echo(s);
  j["files"] = files;
  j["solver_warnings"] = warning_count(r);
  write_text(dir / "run.json", j.dump(2) + "\n");

  out << aggregate_csv(r, s);
  if (!s.edr_pairs.empty()) out << edr_aggregate_csv(r, s);
  return kOk;
}

int cmd_edr(const Config& c, std::ostream& out) {
  StudyConfig s = study_config(c);
  if (s.edr_pairs.empty()) throw InputError("edr: at least one candidate/baseline pair is required");
  if (!c.contains("estimators")) {
    s.estimators.clear();
    for (const auto& p : s.edr_pairs)
      for (const auto& e : {p.u2, p.u1})
        if (std::find(s.estimators.begin(), s.estimators.end(), e) == s.estimators.end())
          s.estimators.push_back(e);
  }
  const fs::path dir = output_dir(c, "edr");
  const StudyResult r = run_synth_study(s);
  write_text(dir / "edr.csv", edr_csv(r));
  write_text(dir / "edr_aggregate.csv", edr_aggregate_csv(r, s));
  Config j;
  j["schema"] = "factorlens.edr/1";
  j["generator"] = kGeneratorName;
  j["config"] = study_echo(s);
  j["files"] = {"edr.csv", "edr_aggregate.csv"};
  write_text(dir / "run.json", j.dump(2) + "\n");
  out << edr_aggregate_csv(r, s);
  return kOk;
}

// ---------------------------------------------------------------------------
// real-protocol

int cmd_real_protocol(const Config& c, std::ostream& out) {
  const std::string prices = require<std::string>(c, "prices");
  if (!fs::exists(prices)) throw InputError("real-protocol: prices file " + prices + " not found");
  const PriceTable table = read_price_table_csv_file(prices);

  PreprocessOptions pre;
  pre.drop_degenerate = get_or<bool>(c, "drop_degenerate", false);
  if (c.contains("clip_lower") || c.contains("clip_upper"))
    pre.clip_bounds = ClipBounds{require<double>(c, "clip_lower"), require<double>(c, "clip_upper")};
  const ReturnPanel panel = preprocess_prices(table, pre);
  const Dataset series(panel.returns);

  std::vector<Index> windows;
  for (double w : grid_or(c, "windows", range_grid(200, 100, 1200, "windows"))) {
    if (w != std::floor(w) || w < 1) throw InputError("real-protocol: windows must be positive integers");
    windows.push_back(static_cast<Index>(w));
  }
  const auto estimators =
      get_or<std::vector<std::string>>(c, "estimators", {"urm", "utm", "mrh", "em", "tm", "stm"});
  const std::vector<double> k_grid = grid_or(c, "k_grid", range_grid(0, 1, 15, "k_grid"));
  const std::vector<double> lambda_grid = grid_or(c, "lambda_grid", {});
  ProtocolAnchors anchors;
  anchors.validation_start = get_or<Index>(c, "validation_start", anchors.validation_start);
  anchors.evaluation_start = get_or<Index>(c, "evaluation_start", anchors.evaluation_start);
  anchors.count = get_or<Index>(c, "anchor_count", anchors.count);
  anchors.step = get_or<Index>(c, "anchor_step", anchors.step);
  anchors.test_len = get_or<Index>(c, "test_len", anchors.test_len);

  const auto& names = learner_names();
  std::vector<std::unique_ptr<Learner>> learners;
  for (const auto& e : estimators) {
    if (std::find(names.begin(), names.end(), e) == names.end())
      throw InputError("real-protocol: unknown estimator '" + e + "'");
    if (!is_k_estimator(e) && lambda_grid.empty())
      throw InputError("real-protocol: 'lambda_grid' is required for " + e);
    learners.push_back(make_learner(e, learner_options(c, false)));
  }
  // Every window must fit before any work starts.
  const Index last_test = std::max(anchors.validation_start, anchors.evaluation_start) +
                          (anchors.count - 1) * anchors.step;
  for (Index w : windows) {
    check_window(WindowSpec{w, anchors.validation_start, anchors.test_len}, series.n());
    check_window(WindowSpec{w, anchors.evaluation_start, anchors.test_len}, series.n());
    check_window(WindowSpec{w, last_test, anchors.test_len}, series.n());
  }

  struct Task {
    Index window;
    std::size_t est;
  };
  std::vector<Task> tasks;
  for (Index w : windows)
    for (std::size_t e = 0; e < estimators.size(); ++e) tasks.push_back({w, e});
  std::vector<std::optional<ProtocolResult>> results(tasks.size());
  parallel_for(tasks.size(), threads_of(c), [&](std::size_t i) {
    const Task& t = tasks[i];
    const std::string& e = estimators[t.est];
    const ParamGrid grid(is_k_estimator(e) ? k_grid : lambda_grid);
    results[i] = realdata_protocol(*learners[t.est], grid, series, t.window, anchors);
  });

  std::ostringstream summary, per_anchor, validation;
  summary << "window_n,estimator,theta,anchors,mean,ci95\n";
  per_anchor << "window_n,estimator,anchor_t,avg_loglik\n";
  validation << "window_n,estimator,theta,validation_total\n";
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const Task& t = tasks[i];
    const std::string& e = estimators[t.est];
    const ProtocolResult& r = *results[i];
    summary << t.window << ',' << e << ',' << fmt(r.theta) << ',' << r.report.per_replication.size()
            << ',' << fmt(r.report.mean) << ',' << fmt(r.report.ci95) << '\n';
    for (std::size_t a = 0; a < r.report.per_replication.size(); ++a)
      per_anchor << t.window << ',' << e << ','
                 << anchors.evaluation_start + static_cast<Index>(a) * anchors.step << ','
                 << fmt(r.report.per_replication[a]) << '\n';
    const auto& cands = (is_k_estimator(e) ? k_grid : lambda_grid);
    for (std::size_t g = 0; g < cands.size(); ++g)
      validation << t.window << ',' << e << ',' << fmt(cands[g]) << ','
                 << fmt(r.validation_totals[g]) << '\n';
  }

  const fs::path dir = output_dir(c, "real_protocol");
  write_text(dir / "protocol.csv", summary.str());
  write_text(dir / "protocol_anchors.csv", per_anchor.str());
  write_text(dir / "protocol_validation.csv", validation.str());
  write_text(dir / "panel.json", panel_metadata_json(panel) + "\n");
  Config j;
  j["schema"] = "factorlens.real_protocol/1";
  j["prices"] = prices;
  j["rows"] = series.n();
  j["stocks"] = series.m();
  j["windows"] = windows;
  j["estimators"] = estimators;
  j["k_grid"] = k_grid;
  j["lambda_grid"] = lambda_grid;
  j["anchors"] = {{"validation_start", anchors.validation_start},
                  {"evaluation_start", anchors.evaluation_start},
                  {"count", anchors.count},
                  {"step", anchors.step},
                  {"test_len", anchors.test_len}};
  j["files"] = {"protocol.csv", "protocol_anchors.csv", "protocol_validation.csv", "panel.json"};
  write_text(dir / "run.json", j.dump(2) + "\n");
  out << summary.str();
  return kOk;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const Config& c, std::ostream& out) {
  VerifyOptions o;
  for (const auto& s : get_or<std::vector<std::string>>(c, "only", {})) {
    const auto& sections = verify_sections();
    if (std::find(sections.begin(), sections.end(), s) == sections.end())
      throw InputError("verify: unknown section '" + s + "'");
    o.only.insert(s);
  }
  o.seed = get_or<std::uint64_t>(c, "seed", o.seed);
  o.oracle_instances = get_or<int>(c, "oracle_instances", o.oracle_instances);
  o.theorem2_trials = get_or<int>(c, "theorem2_trials", o.theorem2_trials);
  o.prop1_trials = get_or<int>(c, "prop1_trials", o.prop1_trials);
  o.threads = threads_of(c);
  const VerifyReport report = run_verification(o);
  const std::string json = report.to_json();
  if (c.contains("out")) {
    const fs::path path = require<std::string>(c, "out");
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    write_text(path, json + "\n");
  }
  out << json << '\n';
  if (report.any_fail()) return kAssertionFail;
  if (report.any_inconclusive()) return kConvergence;
  return kOk;
}

// ---------------------------------------------------------------------------

const std::vector<CommandSpec>& commands() {
  static const std::vector<CommandSpec> specs = [] {
    std::vector<CommandSpec> v;
    v.push_back({"fit",
                 "fit one estimator to a CSV sample matrix",
                 {
                     {"input", "input", OptionKind::kString, "CSV of samples, one row each"},
                     {"header", "header", OptionKind::kFlag, "input has a header line"},
                     {"est", "estimator", OptionKind::kString, "urm, utm, mrh, em, tm or stm"},
                     {"k", "k", OptionKind::kInt, "factor count (urm, mrh, em)"},
                     {"lambda", "lambda", OptionKind::kDouble, "trace penalty (utm, tm, stm)"},
                     {"n", "n", OptionKind::kInt, "sample count behind the penalty scaling"},
                     {"n-implied", "n_implied", OptionKind::kFlag, "take N from the input rows"},
                     {"out", "out", OptionKind::kString, "output prefix"},
                     {"strict", "strict", OptionKind::kFlag, "fail on non-convergence (default)"},
                 },
                 cmd_fit});
    v.push_back({"synth-study", "synthetic replication study", kStudyOptions, cmd_synth_study});
    v.push_back({"edr", "equivalent data requirement on synthetic data", kStudyOptions, cmd_edr});
    v.push_back(
        {"real-protocol",
         "sliding-window protocol on a price table",
         {
             {"prices", "prices", OptionKind::kString, "CSV price table, header date,TICKER..."},
             {"windows", "windows", OptionKind::kGrid, "training window sizes"},
             {"estimators", "estimators", OptionKind::kStringList, "estimators to run"},
             {"k-grid", "k_grid", OptionKind::kGrid, "factor-count grid"},
             {"lambda-grid", "lambda_grid", OptionKind::kGrid, "trace-penalty grid"},
             {"validation-start", "validation_start", OptionKind::kInt, "first validation anchor day"},
             {"evaluation-start", "evaluation_start", OptionKind::kInt, "first evaluation anchor day"},
             {"anchor-count", "anchor_count", OptionKind::kInt, "anchors per phase"},
             {"anchor-step", "anchor_step", OptionKind::kInt, "days between anchors"},
             {"test-len", "test_len", OptionKind::kInt, "test days per anchor"},
             {"drop-degenerate", "drop_degenerate", OptionKind::kFlag, "drop zero-volatility stocks"},
             {"clip-lower", "clip_lower", OptionKind::kDouble, "fixed lower clip threshold"},
             {"clip-upper", "clip_upper", OptionKind::kDouble, "fixed upper clip threshold"},
             {"threads", "threads", OptionKind::kInt, "worker threads"},
             {"out", "out", OptionKind::kString, "output directory"},
             {"strict", "strict", OptionKind::kFlag, "fail on solver non-convergence"},
         },
         cmd_real_protocol});
    v.push_back({"verify",
                 "check the estimators against reference solvers and closed forms",
                 {
                     {"only", "only", OptionKind::kStringList, "sections to run"},
                     {"seed", "seed", OptionKind::kInt, "seed"},
                     {"oracle-instances", "oracle_instances", OptionKind::kInt,
                      "random instances for the reference comparisons"},
                     {"theorem2-trials", "theorem2_trials", OptionKind::kInt, "spiked-model trials"},
                     {"prop1-trials", "prop1_trials", OptionKind::kInt, "trace-ratio trials"},
                     {"threads", "threads", OptionKind::kInt, "worker threads"},
                     {"out", "out", OptionKind::kString, "also write the JSON report here"},
                 },
                 cmd_verify});
    return v;
  }();
  return specs;
}

}  // namespace factorlens::cli
