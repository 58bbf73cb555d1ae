#include "hnd/bench.hpp"
#include "hnd/diagnostics.hpp"
#include "hnd/error.hpp"
#include "hnd/format.hpp"
#include "hnd/hypergraph.hpp"
#include "hnd/model.hpp"
#include "hnd/modulation.hpp"
#include "hnd/operators.hpp"
#include "hnd/solvers.hpp"
#include "hnd/version.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;

namespace hnd {
namespace {

struct RunConfig {
  std::string dataset;
  SbmParams sbm{250, 100, 15, 1, 32, 1.0, 0};
  std::uint64_t seed = 0;

  std::string scheme = "explicit_euler";
  double tau = 1.0;
  double horizon = 4.0;
  std::string modulation = "softmax";
  std::string policy = "frozen";
  double fp_tol = 1e-10;
  int fp_max_iter = 100;
  AdaptiveParams adaptive;
  std::optional<json> initial;

  std::string variant = "l";
  double lr = 0.01;
  double weight_decay = 5e-4;
  double input_dropout = 0.0;
  Index hidden_dim = 64;
  int epochs = 200;
  int splits = 5;
  std::array<double, 3> ratios{0.5, 0.25, 0.25};
  std::string aggregator = "mean";

  std::vector<Index> layers;
  std::string noise;
  std::vector<double> rates;

  std::vector<std::string> bench_schemes{"explicit_euler", "implicit_euler", "rk4", "ab4", "am4", "adaptive"};
  std::vector<double> bench_taus{0.4, 0.2, 0.1, 0.05};
  std::vector<double> bench_tolerances{1e-4, 1e-6};
  std::uint64_t bench_case_seed = 7;

  int spectrum_iterations = 1000;
  double spectrum_tolerance = 1e-10;
};

[[noreturn]] void bad_config(const std::string& detail) { throw Error(ErrorKind::InvalidConfig, detail); }

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    bad_config(std::string("wrong type for `") + key + "`");
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) bad_config(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) bad_config("unknown key `" + key + "` in " + where);
  }
}

void apply_document(const json& j, RunConfig& c) {
  reject_unknown(j,
                 {"dataset", "sbm", "seed", "scheme", "tau", "horizon", "modulation", "policy", "fp_tol",
                  "fp_max_iter", "adaptive", "initial", "variant", "lr", "weight_decay", "input_dropout",
                  "hidden_dim", "epochs", "splits", "ratios", "aggregator", "layers", "noise", "rates",
                  "bench_schemes", "bench_taus", "bench_tolerances", "bench_case_seed", "spectrum_iterations",
                  "spectrum_tolerance"},
                 "config");
  read_field(j, "dataset", c.dataset);
  if (j.contains("sbm")) {
    const json& s = j.at("sbm");
    reject_unknown(s, {"nodes_per_class", "edge_count", "edge_size", "alpha", "feature_dim", "sigma"}, "sbm");
    read_field(s, "nodes_per_class", c.sbm.nodes_per_class);
    read_field(s, "edge_count", c.sbm.edge_count);
    read_field(s, "edge_size", c.sbm.edge_size);
    read_field(s, "alpha", c.sbm.alpha);
    read_field(s, "feature_dim", c.sbm.feature_dim);
    read_field(s, "sigma", c.sbm.sigma);
  }
  read_field(j, "seed", c.seed);
  read_field(j, "scheme", c.scheme);
  read_field(j, "tau", c.tau);
  read_field(j, "horizon", c.horizon);
  read_field(j, "modulation", c.modulation);
  read_field(j, "policy", c.policy);
  read_field(j, "fp_tol", c.fp_tol);
  read_field(j, "fp_max_iter", c.fp_max_iter);
  if (j.contains("adaptive")) {
    const json& a = j.at("adaptive");
    reject_unknown(a, {"tol", "fac_min", "fac_max", "tau_init", "tau_min", "tau_max"}, "adaptive");
    read_field(a, "tol", c.adaptive.tol);
    read_field(a, "fac_min", c.adaptive.fac_min);
    read_field(a, "fac_max", c.adaptive.fac_max);
    read_field(a, "tau_init", c.adaptive.tau_init);
    read_field(a, "tau_min", c.adaptive.tau_min);
    read_field(a, "tau_max", c.adaptive.tau_max);
  }
  if (j.contains("initial")) c.initial = j.at("initial");
  read_field(j, "variant", c.variant);
  read_field(j, "lr", c.lr);
  read_field(j, "weight_decay", c.weight_decay);
  read_field(j, "input_dropout", c.input_dropout);
  read_field(j, "hidden_dim", c.hidden_dim);
  read_field(j, "epochs", c.epochs);
  read_field(j, "splits", c.splits);
  read_field(j, "ratios", c.ratios);
  read_field(j, "aggregator", c.aggregator);
  read_field(j, "layers", c.layers);
  read_field(j, "noise", c.noise);
  read_field(j, "rates", c.rates);
  read_field(j, "bench_schemes", c.bench_schemes);
  read_field(j, "bench_taus", c.bench_taus);
  read_field(j, "bench_tolerances", c.bench_tolerances);
  read_field(j, "bench_case_seed", c.bench_case_seed);
  read_field(j, "spectrum_iterations", c.spectrum_iterations);
  read_field(j, "spectrum_tolerance", c.spectrum_tolerance);
}

json to_json(const RunConfig& c) {
  json j;
  j["dataset"] = c.dataset;
  j["sbm"] = {{"nodes_per_class", c.sbm.nodes_per_class}, {"edge_count", c.sbm.edge_count},
              {"edge_size", c.sbm.edge_size},           {"alpha", c.sbm.alpha},
              {"feature_dim", c.sbm.feature_dim},       {"sigma", c.sbm.sigma}};
  j["seed"] = c.seed;
  j["scheme"] = c.scheme;
  j["tau"] = c.tau;
  j["horizon"] = c.horizon;
  j["modulation"] = c.modulation;
  j["policy"] = c.policy;
  j["fp_tol"] = c.fp_tol;
  j["fp_max_iter"] = c.fp_max_iter;
  j["adaptive"] = {{"tol", c.adaptive.tol},           {"fac_min", c.adaptive.fac_min},
                   {"fac_max", c.adaptive.fac_max},   {"tau_init", c.adaptive.tau_init},
                   {"tau_min", c.adaptive.tau_min},   {"tau_max", c.adaptive.tau_max}};
  j["initial"] = c.initial ? *c.initial : json(nullptr);
  j["variant"] = c.variant;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["input_dropout"] = c.input_dropout;
  j["hidden_dim"] = c.hidden_dim;
  j["epochs"] = c.epochs;
  j["splits"] = c.splits;
  j["ratios"] = c.ratios;
  j["aggregator"] = c.aggregator;
  j["layers"] = c.layers;
  j["noise"] = c.noise;
  j["rates"] = c.rates;
  j["bench_schemes"] = c.bench_schemes;
  j["bench_taus"] = c.bench_taus;
  j["bench_tolerances"] = c.bench_tolerances;
  j["bench_case_seed"] = c.bench_case_seed;
  j["spectrum_iterations"] = c.spectrum_iterations;
  j["spectrum_tolerance"] = c.spectrum_tolerance;
  return j;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& path, const std::string& body) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + tmp.string());
    out << body;
    if (!out) throw Error(ErrorKind::Io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

struct Flags {
  std::string config;
  std::string dataset;
  std::uint64_t seed = 0;
  std::string scheme;
  double tau = 0;
  double horizon = 0;
  std::string variant;
  std::vector<Index> layers;
  std::string noise;
  std::vector<double> rates;
  std::string out = ".";

  CLI::Option* seed_opt = nullptr;
  CLI::Option* scheme_opt = nullptr;
  CLI::Option* tau_opt = nullptr;
  CLI::Option* horizon_opt = nullptr;
  CLI::Option* variant_opt = nullptr;
  CLI::Option* layers_opt = nullptr;
  CLI::Option* noise_opt = nullptr;
  CLI::Option* rates_opt = nullptr;
};

void add_common(CLI::App* cmd, Flags& f, bool dataset_positional) {
  cmd->add_option("--config", f.config, "JSON run configuration");
  f.seed_opt = cmd->add_option("--seed", f.seed, "base seed");
  f.scheme_opt = cmd->add_option("--scheme", f.scheme, "integrator");
  f.tau_opt = cmd->add_option("--tau", f.tau, "step size");
  f.horizon_opt = cmd->add_option("--horizon", f.horizon, "integration horizon T");
  f.variant_opt = cmd->add_option("--variant", f.variant, "model variant")->check(CLI::IsMember({"l", "nl"}));
  f.layers_opt = cmd->add_option("--layers", f.layers, "depth sweep, e.g. 2,4,10")->delimiter(',');
  f.noise_opt = cmd->add_option("--noise", f.noise, "noise kind")
                    ->check(CLI::IsMember({"gaussian", "uniform", "mask", "structure"}));
  f.rates_opt = cmd->add_option("--rates", f.rates, "noise rates, e.g. 0.1,0.2")->delimiter(',');
  cmd->add_option("--out", f.out, "output directory");
  if (dataset_positional) cmd->add_option("dataset", f.dataset, "dataset document");
}

RunConfig resolve(const Flags& f) {
  RunConfig c;
  if (!f.config.empty()) {
    const std::string text = read_file(f.config);
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      bad_config(std::string("config is not valid JSON: ") + e.what());
    }
    apply_document(doc, c);
  }
  if (!f.dataset.empty()) c.dataset = f.dataset;
  if (f.seed_opt->count()) c.seed = f.seed;
  if (f.scheme_opt->count()) c.scheme = f.scheme;
  if (f.tau_opt->count()) c.tau = f.tau;
  if (f.horizon_opt->count()) c.horizon = f.horizon;
  if (f.variant_opt->count()) c.variant = f.variant;
  if (f.layers_opt->count()) c.layers = f.layers;
  if (f.noise_opt->count()) c.noise = f.noise;
  if (f.rates_opt->count()) c.rates = f.rates;
  return c;
}

Index fixed_steps(const RunConfig& c) {
  if (!(c.tau > 0) || !std::isfinite(c.tau)) bad_config("tau must be positive");
  if (!(c.horizon >= 0) || !std::isfinite(c.horizon)) bad_config("horizon must be non-negative");
  const double ratio = c.horizon / c.tau;
  const Index steps = static_cast<Index>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(steps)) > 1e-9 * std::max(1.0, ratio))
    bad_config("horizon must be an integer multiple of tau");
  return steps;
}

SolverSpec solver_spec(const RunConfig& c) {
  SolverSpec spec;
  spec.scheme = parse_scheme(c.scheme);
  if (c.policy == "frozen") {
    spec.modulation_policy = ModulationPolicy::Frozen;
  } else if (c.policy == "recompute_each_step" || c.policy == "recompute") {
    spec.modulation_policy = ModulationPolicy::Recompute;
  } else {
    bad_config("unknown policy '" + c.policy + "'");
  }
  spec.fp_tol = c.fp_tol;
  spec.fp_max_iter = c.fp_max_iter;
  spec.adaptive = c.adaptive;
  if (spec.scheme == Scheme::Adaptive) {
    if (!(c.horizon > 0)) bad_config("adaptive integration needs a positive horizon");
    spec.tau = c.horizon;
    spec.steps = 1;
  } else {
    spec.steps = fixed_steps(c);
    spec.tau = c.tau;
  }
  spec.validate();
  if (c.modulation != "uniform" && c.modulation != "softmax") bad_config("unknown modulation '" + c.modulation + "'");
  return spec;
}

TrainConfig train_config(const RunConfig& c) {
  TrainConfig t;
  t.lr = c.lr;
  t.weight_decay = c.weight_decay;
  t.input_dropout = c.input_dropout;
  t.hidden_dim = c.hidden_dim;
  t.horizon = c.horizon;
  t.tau = c.tau;
  t.variant = parse_variant(c.variant);
  t.scheme = parse_scheme(c.scheme);
  t.epochs = c.epochs;
  t.base_seed = c.seed;
  t.split_count = c.splits;
  t.ratios = c.ratios;
  t.aggregator = parse_aggregator(c.aggregator);
  t.validate();
  return t;
}

Dataset load_or_generate(const RunConfig& c) {
  if (!c.dataset.empty()) return load_dataset(c.dataset);
  SbmParams p = c.sbm;
  p.seed = c.seed;
  return generate_sbm(p);
}

json envelope(const std::string& command, const RunConfig& c) {
  json j;
  j["version"] = std::string(kLibraryVersion);
  j["command"] = command;
  j["config"] = to_json(c);
  return j;
}

std::string provenance_line(const std::string& command, const RunConfig& c) {
  return "# hnd " + std::string(kLibraryVersion) + " " + command + " config=" + to_json(c).dump() + "\n";
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir + ": " + ec.message());
  return fs::path(dir);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

NodeSignal initial_signal(const RunConfig& c, const Dataset& data) {
  const Index n = data.hypergraph.node_count();
  if (c.initial) {
    const json& rows = *c.initial;
    if (!rows.is_array() || static_cast<Index>(rows.size()) != n) bad_config("initial must have n rows");
    const std::size_t cols = rows.empty() || !rows[0].is_array() ? 0 : rows[0].size();
    if (cols == 0) bad_config("initial rows must be non-empty arrays");
    NodeSignal x(n, static_cast<Index>(cols));
    try {
      for (Index v = 0; v < n; ++v) {
        const json& row = rows[static_cast<std::size_t>(v)];
        if (!row.is_array() || row.size() != cols) bad_config("ragged initial signal");
        for (std::size_t k = 0; k < cols; ++k) x(v, static_cast<Index>(k)) = row[k].get<double>();
      }
    } catch (const json::exception&) {
      bad_config("initial entries must be numbers");
    }
    return x;
  }
  if (data.features.cols() > 0) return data.features;
  SplitMix64 rng(derive_seed(c.seed, 0x1417a1));
  NodeSignal x(n, 1);
  for (Index v = 0; v < n; ++v) x(v, 0) = rng.normal();
  return x;
}

struct Modulated {
  ModulationFn<double> fn;
  bool uniform = false;
};

Modulated make_modulation(const RunConfig& c, const Hypergraph& hg, Index d) {
  if (c.modulation == "uniform") {
    Eigen::VectorXd a = uniform_modulation<double>(hg);
    return {[a](const Signal<double>&) { return a; }, true};
  }
  SplitMix64 rng(derive_seed(c.seed, 0xa77e));
  auto params = AttentionParams<double>::random(d, rng);
  return {[params, &hg](const Signal<double>& x) { return softmax_modulation(params, x, hg); }, false};
}

int cmd_validate(const Flags& f) {
  const RunConfig c = resolve(f);
  if (c.dataset.empty()) bad_config("validate needs a dataset path");
  const Dataset data = load_dataset(c.dataset);
  const Hypergraph& hg = data.hypergraph;
  const auto& deg = hg.degree_info();
  const auto sizes = deg.edge_size;
  const double mean_size =
      static_cast<double>(std::accumulate(sizes.begin(), sizes.end(), Index{0})) / static_cast<double>(sizes.size());
  std::cout << "n=" << hg.node_count() << " m=" << hg.edge_count() << " N=" << hg.pair_count() << "\n";
  std::cout << "node_degree min=" << format_double(deg.node.minCoeff()) << " max=" << format_double(deg.node.maxCoeff())
            << " mean=" << format_double(deg.node.mean()) << "\n";
  std::cout << "edge_size min=" << *std::min_element(sizes.begin(), sizes.end())
            << " max=" << *std::max_element(sizes.begin(), sizes.end()) << " mean=" << format_double(mean_size)
            << "\n";
  std::cout << "features=" << data.features.cols() << " labels=" << (data.has_labels() ? "yes" : "no")
            << " classes=" << data.class_count << "\n";
  return 0;
}

int cmd_sbm(const Flags& f) {
  const RunConfig c = resolve(f);
  SbmParams p = c.sbm;
  p.seed = c.seed;
  const fs::path out = prepare_out(f.out);
  const Dataset data = generate_sbm(p);
  write_atomic(out / "sbm.json", to_json(data));
  json meta = envelope("sbm", c);
  meta["result"] = {{"nodes", data.hypergraph.node_count()},
                    {"edges", data.hypergraph.edge_count()},
                    {"pairs", data.hypergraph.pair_count()},
                    {"classes", data.class_count}};
  write_atomic(out / "sbm.meta.json", meta.dump(2) + "\n");
  std::cout << "wrote " << (out / "sbm.json").string() << " n=" << data.hypergraph.node_count()
            << " m=" << data.hypergraph.edge_count() << "\n";
  return 0;
}

int cmd_diffuse(const Flags& f) {
  const RunConfig c = resolve(f);
  const SolverSpec spec = solver_spec(c);
  const fs::path out = prepare_out(f.out);
  const Dataset data = load_or_generate(c);
  const NodeSignal x0 = initial_signal(c, data);
  Operators<double> ops(data.hypergraph);
  Modulated mod = make_modulation(c, data.hypergraph, x0.cols());
  DiffusionSystem<double> sys(ops, mod.fn, spec.modulation_policy);

  const auto start = std::chrono::steady_clock::now();
  const auto traj = integrate(sys, x0, spec);
  const double wall = seconds_since(start);

  const auto energies = energy_monotonicity(sys, traj);
  const auto bounds = max_principle(traj, data.hypergraph.degree_info());
  const Eigen::VectorXd a0 = mod.fn(x0);
  const auto spectral = spectral_radius(ops, a0, c.spectrum_iterations, c.spectrum_tolerance);

  std::ostringstream csv;
  csv << provenance_line("diffuse", c);
  write_trajectory_csv(csv, traj, energies);
  write_atomic(out / "trajectory.csv", csv.str());
  std::ostringstream bin;
  write_trajectory_binary(bin, traj);
  write_atomic(out / "trajectory.bin", bin.str());

  std::vector<double> norms;
  for (const auto& s : traj.states) norms.push_back(s.norm());
  json doc = envelope("diffuse", c);
  doc["result"] = {{"energy", to_json(energies)},
                   {"max_principle", to_json(bounds)},
                   {"spectral_radius", to_json(spectral)},
                   {"state_norms", norms},
                   {"accepted_steps", traj.accepted_steps},
                   {"rejected_steps", traj.rejected_steps},
                   {"rhs_evaluations", traj.rhs_evaluations},
                   {"solver_iterations", traj.solver_iterations},
                   {"final_time", traj.times.back()}};
  write_atomic(out / "diagnostics.json", doc.dump(2) + "\n");
  write_atomic(out / "diffuse.timing.json", json({{"wall_seconds", wall}}).dump(2) + "\n");
  std::cout << "steps=" << traj.step_sizes.size() << " energy_monotone=" << (energies.monotone ? "yes" : "no")
            << " max_principle=" << (bounds.holds ? "yes" : "no") << "\n";
  return 0;
}

json timing_of(const std::vector<MetricsReport>& reports) {
  json t = json::array();
  for (const auto& r : reports) {
    json splits = json::array();
    for (const auto& s : r.splits) splits.push_back(s.wall_seconds);
    t.push_back({{"label", r.label}, {"split_wall_seconds", splits}});
  }
  return t;
}

std::string safe_name(const std::string& label) {
  std::string s = label;
  for (char& ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '.' && ch != '-') ch = '_';
  return s;
}

int run_reports(const std::string& command, const RunConfig& c, const fs::path& out,
                const std::vector<MetricsReport>& reports, const std::string& name) {
  if (reports.size() > 1) {
    const fs::path points = out / (name + "_points");
    prepare_out(points.string());
    for (const auto& r : reports) {
      json p = envelope(command, c);
      p["result"] = to_json(r);
      write_atomic(points / (safe_name(r.label) + ".json"), p.dump(2) + "\n");
    }
  }
  json doc = envelope(command, c);
  json results = json::array();
  std::ostringstream csv;
  csv << provenance_line(command, c) << "label,mean_test_accuracy,std_test_accuracy\n";
  for (const auto& r : reports) {
    results.push_back(to_json(r));
    csv << r.label << "," << format_double(r.mean_test_accuracy) << "," << format_double(r.std_test_accuracy)
        << "\n";
    std::cout << r.label << " " << format_double(r.mean_test_accuracy) << " +- "
              << format_double(r.std_test_accuracy) << "\n";
  }
  doc["results"] = std::move(results);
  write_atomic(out / (name + ".csv"), csv.str());
  write_atomic(out / (name + ".timing.json"), timing_of(reports).dump(2) + "\n");
  write_atomic(out / (name + ".json"), doc.dump(2) + "\n");
  return 0;
}

std::vector<double> sweep_rates(const RunConfig& c) {
  return c.rates.empty() ? std::vector<double>{0.1, 0.2, 0.3, 0.4} : c.rates;
}

int cmd_train(const Flags& f) {
  const RunConfig c = resolve(f);
  const TrainConfig t = train_config(c);
  if (!c.layers.empty() && !c.noise.empty()) bad_config("choose either a depth sweep or a noise sweep");
  const NoiseKind kind = c.noise.empty() ? NoiseKind::Gaussian : parse_noise_kind(c.noise);
  for (double r : c.rates)
    if (!(r >= 0 && r <= 1)) throw Error(ErrorKind::InvalidRate, "rate " + format_double(r) + " outside [0, 1]");
  for (Index l : c.layers)
    if (l < 0) bad_config("layer counts must be non-negative");
  const fs::path out = prepare_out(f.out);
  const Dataset data = load_or_generate(c);
  std::vector<MetricsReport> reports;
  if (!c.layers.empty()) {
    reports = depth_sweep(data, t, c.layers);
  } else if (!c.noise.empty()) {
    reports = noise_sweep(data, t, kind, sweep_rates(c));
  } else {
    reports.push_back(train_and_evaluate(data, t));
  }
  return run_reports("train", c, out, reports, "metrics");
}

int cmd_bench_noise(const Flags& f) {
  RunConfig c = resolve(f);
  if (c.noise.empty()) c.noise = "structure";
  if (c.rates.empty()) c.rates = sweep_rates(c);
  const TrainConfig t = train_config(c);
  const NoiseKind kind = parse_noise_kind(c.noise);
  for (double r : c.rates)
    if (!(r >= 0 && r <= 1)) throw Error(ErrorKind::InvalidRate, "rate " + format_double(r) + " outside [0, 1]");
  const fs::path out = prepare_out(f.out);
  const Dataset data = load_or_generate(c);
  return run_reports("bench-noise", c, out, noise_sweep(data, t, kind, c.rates), "noise");
}

int cmd_bench_solver(const Flags& f) {
  RunConfig c = resolve(f);
  if (f.scheme_opt->count()) c.bench_schemes = {c.scheme};
  if (f.tau_opt->count()) c.bench_taus = {c.tau};
  std::vector<Scheme> schemes;
  for (const auto& s : c.bench_schemes) schemes.push_back(parse_scheme(s));
  for (double tau : c.bench_taus)
    if (!(tau > 0)) bad_config("bench taus must be positive");
  for (double tol : c.bench_tolerances)
    if (!(tol > 0)) bad_config("bench tolerances must be positive");
  const fs::path out = prepare_out(f.out);
  const LinearCase lc = bundled_linear_case(c.bench_case_seed);

  std::ostringstream csv;
  csv << provenance_line("bench-solver", c) << "scheme,tau,steps,error,rhs_evaluations,accepted,rejected\n";
  json table = json::array();
  json timing = json::array();
  for (Scheme scheme : schemes) {
    const bool adaptive = scheme == Scheme::Adaptive;
    const auto rows = convergence_study(lc, scheme, adaptive ? c.bench_tolerances : c.bench_taus);
    json entry;
    entry["scheme"] = std::string(to_string(scheme));
    json jrows = json::array();
    json wall = json::array();
    for (const auto& r : rows) {
      csv << to_string(scheme) << "," << format_double(r.tau) << "," << r.steps << "," << format_double(r.error)
          << "," << r.rhs_evaluations << "," << r.accepted << "," << r.rejected << "\n";
      jrows.push_back({{adaptive ? "tol" : "tau", r.tau},
                       {"steps", r.steps},
                       {"error", r.error},
                       {"rhs_evaluations", r.rhs_evaluations},
                       {"accepted", r.accepted},
                       {"rejected", r.rejected}});
      wall.push_back(r.wall_seconds);
    }
    entry["rows"] = std::move(jrows);
    if (!adaptive && rows.size() >= 2) entry["slope"] = richardson_slope(rows);
    if (!adaptive && rows.size() >= 2)
      std::cout << to_string(scheme) << " slope=" << format_double(richardson_slope(rows)) << "\n";
    table.push_back(std::move(entry));
    timing.push_back({{"scheme", std::string(to_string(scheme))}, {"wall_seconds", wall}});
  }
  json doc = envelope("bench-solver", c);
  doc["result"] = {{"schemes", table}, {"horizon", lc.horizon}, {"nodes", lc.hypergraph.node_count()}};
  write_atomic(out / "bench_solver.csv", csv.str());
  write_atomic(out / "bench_solver.timing.json", timing.dump(2) + "\n");
  write_atomic(out / "bench_solver.json", doc.dump(2) + "\n");
  return 0;
}

int cmd_spectrum(const Flags& f) {
  const RunConfig c = resolve(f);
  if (c.modulation != "uniform" && c.modulation != "softmax") bad_config("unknown modulation '" + c.modulation + "'");
  if (c.spectrum_iterations <= 0) bad_config("spectrum_iterations must be positive");
  const fs::path out = prepare_out(f.out);
  const Dataset data = load_or_generate(c);
  const NodeSignal x0 = initial_signal(c, data);
  Operators<double> ops(data.hypergraph);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(ops.pair_count());
  const auto laplacian = spectral_radius(ops, ones, c.spectrum_iterations, c.spectrum_tolerance);
  const Eigen::VectorXd a = make_modulation(c, data.hypergraph, x0.cols()).fn(x0);
  const auto modulated = spectral_radius(ops, a, c.spectrum_iterations, c.spectrum_tolerance);
  json doc = envelope("spectrum", c);
  doc["result"] = {{"laplacian", to_json(laplacian)},
                   {"modulated", to_json(modulated)},
                   {"explicit_euler_tau_bound", modulated.value > 0 ? 2.0 / modulated.value : 0.0}};
  write_atomic(out / "spectrum.json", doc.dump(2) + "\n");
  std::cout << "laplacian=" << format_double(laplacian.value) << " modulated=" << format_double(modulated.value)
            << "\n";
  return 0;
}

int exit_code(const Error& e) {
  if (e.numerical()) return 4;
  if (e.kind() == ErrorKind::Io) return 3;
  return 2;
}

int run(int argc, char** argv) {
  CLI::App app{"Hypergraph neural diffusion toolkit"};
  app.set_version_flag("--version", std::string(kLibraryVersion));
  app.require_subcommand(1);
  Flags flags;
  struct Command {
    const char* name;
    const char* help;
    bool positional;
    int (*fn)(const Flags&);
  };
  const Command commands[] = {
      {"validate", "parse and validate a hypergraph or dataset document", true, cmd_validate},
      {"sbm", "generate a hypergraph stochastic block model dataset", false, cmd_sbm},
      {"diffuse", "integrate the diffusion equation and report diagnostics", true, cmd_diffuse},
      {"train", "train and evaluate, optionally sweeping depth or noise", true, cmd_train},
      {"bench-solver", "integrator convergence against the matrix exponential", false, cmd_bench_solver},
      {"bench-noise", "accuracy under feature or structure noise", true, cmd_bench_noise},
      {"spectrum", "spectral radius of the diffusion operator", true, cmd_spectrum},
  };
  std::vector<std::pair<CLI::App*, int (*)(const Flags&)>> subs;
  for (const auto& cmd : commands) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    add_common(sub, flags, cmd.positional);
    subs.emplace_back(sub, cmd.fn);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  for (auto& [sub, fn] : subs) {
    if (!sub->parsed()) continue;
    // Options are shared across subcommands; rebind to the parsed one.
    flags.seed_opt = sub->get_option("--seed");
    flags.scheme_opt = sub->get_option("--scheme");
    flags.tau_opt = sub->get_option("--tau");
    flags.horizon_opt = sub->get_option("--horizon");
    flags.variant_opt = sub->get_option("--variant");
    flags.layers_opt = sub->get_option("--layers");
    flags.noise_opt = sub->get_option("--noise");
    flags.rates_opt = sub->get_option("--rates");
    try {
      return fn(flags);
    } catch (const Error& e) {
      std::cerr << "error: " << e.what() << "\n";
      return exit_code(e);
    }
  }
  return 2;
}

}  // namespace
}  // namespace hnd

int main(int argc, char** argv) {
  try {
    return hnd::run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
