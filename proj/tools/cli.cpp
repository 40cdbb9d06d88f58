#include "cli.hpp"

#include "nebp/io.hpp"
#include "nebp/metrics.hpp"
#include "nebp/nebp.hpp"
#include "nebp/oracle.hpp"
#include "nebp/tracker.hpp"
#include "nebp/train.hpp"

#include <CLI11.hpp>
#include <glob.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace nebp::cli {
namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

RunConfig load_or_default(const std::optional<std::string>& path) {
  return path ? load_config(*path) : default_run_config();
}

std::string sibling(const std::string& path, const std::string& suffix) {
  const fs::path p(path);
  return (p.parent_path() / (p.stem().string() + suffix)).string();
}

std::string manifest_path(const std::string& out) {
  if (fs::is_directory(out)) return (fs::path(out) / "manifest.json").string();
  return out + ".manifest.json";
}

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void finish_manifest(RunManifest m, const std::string& out, Clock::time_point start) {
  m.code_version = code_version();
  m.duration_s = seconds_since(start);
  write_manifest(manifest_path(out), m);
}

// Runs f(k) for k in [0, n) on up to `jobs` threads; the first exception is
// rethrown after every worker has stopped.
template <typename F>
void parallel_for(std::size_t n, int jobs, F&& f) {
  const auto workers = static_cast<std::size_t>(std::clamp(jobs, 1, 64));
  if (workers == 1 || n <= 1) {
    for (std::size_t k = 0; k < n; ++k) f(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < n; k = next++) {
        try {
          f(k);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

std::vector<std::string> expand_globs(const std::vector<std::string>& patterns) {
  std::vector<std::string> out;
  for (const auto& pat : patterns) {
    if (pat.find_first_of("*?[") == std::string::npos) {
      out.push_back(pat);
      continue;
    }
    glob_t g{};
    const int rc = ::glob(pat.c_str(), 0, nullptr, &g);
    if (rc == 0) {
      for (std::size_t k = 0; k < g.gl_pathc; ++k) out.emplace_back(g.gl_pathv[k]);
    }
    ::globfree(&g);
    if (rc != 0 && rc != GLOB_NOMATCH) throw ValidationError("cannot expand pattern " + pat);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string track_scenario(const Scenario& sc, const TrackArgs& args, const RunConfig* config,
                           const GnnNets* nets) {
  const ModelParams params = config ? config->model : model_params_from_sim(sc.config);
  require_valid(params);
  TrackWriter writer(args.mode, sc.n_frames());
  TrackerState state;
  for (int k = 0; k < sc.n_frames(); ++k) {
    const auto& dets = sc.frames[static_cast<std::size_t>(k)];
    if (nets) {
      const NebpStepResult r = nebp_track_step(state, dets, params, *nets);
      writer.frame(k, r.step.declared);
      if (args.debug_corrections) writer.diagnostics(k, r.corrections);
      state = r.step.state;
    } else {
      const StepResult r = bp_track_step(state, dets, params);
      writer.frame(k, r.declared);
      state = r.state;
    }
  }
  return writer.text();
}

std::pair<Index, Index> parse_size(const std::string& s) {
  const auto x = s.find('x');
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t used_i = 0;
    std::size_t used_j = 0;
    const long I = std::stol(s.substr(0, x), &used_i);
    const long J = std::stol(s.substr(x + 1), &used_j);
    if (used_i != x || used_j != s.size() - x - 1 || I < 0 || J < 0) throw std::invalid_argument(s);
    if (I > kOracleMaxSize || J > kOracleMaxSize) {
      throw ValidationError("oracle size " + s + " exceeds the enumeration guard (10)");
    }
    return {I, J};
  } catch (const std::logic_error&) {
    throw ValidationError("bad size '" + s + "', expected IxJ");
  }
}

}  // namespace

int cmd_simulate(const SimulateArgs& args, std::ostream& log) {
  const auto start = Clock::now();
  RunConfig config = load_or_default(args.config);
  apply_seed(config, args.seed);
  const Scenario sc = simulate(config.sim);
  write_scenario(args.out, sc);
  std::size_t n_det = 0;
  for (const auto& f : sc.frames) n_det += f.size();
  log << "simulate: " << sc.n_frames() << " frames, " << sc.truth.size() << " tracks, " << n_det
      << " detections -> " << args.out << "\n";
  RunManifest m;
  m.command = "simulate";
  m.config = to_config_text(config);
  m.seed = args.seed;
  if (args.config) m.inputs.push_back(*args.config);
  m.outputs.push_back(args.out);
  finish_manifest(std::move(m), args.out, start);
  return kOk;
}

int cmd_track(const TrackArgs& args, std::ostream& log) {
  const auto start = Clock::now();
  if (args.mode != "bp" && args.mode != "nebp") throw ValidationError("mode must be bp or nebp");
  if (args.scenarios.empty()) throw ValidationError("track needs at least one scenario");
  std::optional<RunConfig> config;
  if (args.config) config = load_config(*args.config);
  std::optional<GnnNets> nets;
  if (args.mode == "nebp") {
    if (!args.checkpoint) throw ValidationError("nebp mode requires --checkpoint");
    nets = read_checkpoint(*args.checkpoint);
  }

  const bool many = args.scenarios.size() > 1;
  if (many) fs::create_directories(args.out);
  std::vector<std::string> outputs(args.scenarios.size());
  for (std::size_t s = 0; s < args.scenarios.size(); ++s) {
    outputs[s] = many ? (fs::path(args.out) / (fs::path(args.scenarios[s]).stem().string() + ".tracks.jsonl")).string()
                      : args.out;
  }
  std::vector<std::string> texts(args.scenarios.size());
  parallel_for(args.scenarios.size(), args.jobs, [&](std::size_t s) {
    const Scenario sc = read_scenario(args.scenarios[s]);
    texts[s] = track_scenario(sc, args, config ? &*config : nullptr, nets ? &*nets : nullptr);
  });
  // Outputs appear only once every scenario has been tracked.
  for (std::size_t s = 0; s < texts.size(); ++s) {
    write_file_atomic(outputs[s], texts[s]);
    log << "track(" << args.mode << "): " << args.scenarios[s] << " -> " << outputs[s] << "\n";
  }

  RunManifest m;
  m.command = "track --mode " + args.mode;
  m.config = config ? to_config_text(*config) : std::string();
  m.seed = args.seed;
  m.inputs = args.scenarios;
  if (args.checkpoint) m.inputs.push_back(*args.checkpoint);
  m.outputs = outputs;
  finish_manifest(std::move(m), args.out, start);
  return kOk;
}

int cmd_train(const TrainArgs& args, std::ostream& log) {
  const auto start = Clock::now();
  RunConfig config = load_or_default(args.config);
  apply_seed(config, args.seed);
  const std::vector<std::string> paths = expand_globs(args.scenarios);
  if (paths.empty()) throw ValidationError("train needs at least one scenario file");
  std::vector<Scenario> scenarios(paths.size());
  parallel_for(paths.size(), args.jobs, [&](std::size_t s) { scenarios[s] = read_scenario(paths[s]); });
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    if (scenarios[s].config.shape_dim != config.gnn.descriptor_dim) {
      throw ValidationError(paths[s] + ": shape_dim does not match gnn.descriptor_dim");
    }
  }
  require_valid(config.model);

  GnnNets nets = GnnNets::create(config.gnn, args.seed);
  std::vector<StepLoss> steps;
  std::vector<std::string> outputs;
  const std::string ext = fs::path(args.out).extension().string();
  train(scenarios, nets, config.train, config.model, steps, [&](const EpochStats& e, const GnnNets& n) {
    const std::string path = sibling(args.out, ".epoch" + std::to_string(e.epoch + 1) + ext);
    write_checkpoint(path, n);
    outputs.push_back(path);
    log << "epoch " << e.epoch + 1 << ": frames " << e.frames << ", L_r " << e.mean_l_r << ", L_a "
        << e.mean_l_a << ", total " << e.mean_total() << "\n";
  });
  write_checkpoint(args.out, nets);
  const std::string metrics = sibling(args.out, ".metrics.csv");
  write_file_atomic(metrics, training_log_csv(steps));
  outputs.push_back(args.out);
  outputs.push_back(metrics);
  log << "train: " << config.train.epochs << " epochs over " << scenarios.size() << " scenarios -> "
      << args.out << "\n";

  RunManifest m;
  m.command = "train";
  m.config = to_config_text(config);
  m.seed = args.seed;
  m.inputs = paths;
  if (args.config) m.inputs.push_back(*args.config);
  m.outputs = outputs;
  finish_manifest(std::move(m), args.out, start);
  return kOk;
}

int cmd_eval(const EvalArgs& args, std::ostream& log) {
  const auto start = Clock::now();
  const RunConfig config = load_or_default(args.config);
  const TrackFile tracks = read_tracks(args.tracks);
  const Scenario sc = read_scenario(args.scenario);
  if (static_cast<int>(tracks.frames.size()) != sc.n_frames()) {
    throw ValidationError("track file has " + std::to_string(tracks.frames.size()) + " frames, scenario has " +
                          std::to_string(sc.n_frames()));
  }
  const MetricReport report = amota(tracks.frames, truth_frames(sc), config.eval.t_dist, config.eval.n_thresholds);
  const std::string csv = sibling(args.out, ".csv");
  write_file_atomic(args.out, report_to_json(report, config.eval));
  write_file_atomic(csv, report_to_csv(report));
  log << "eval: amota " << (report.amota ? format_double(*report.amota) : std::string("none")) << ", fp "
      << report.fp << ", fn " << report.fn << ", ids " << report.ids << ", frag " << report.frag << "\n";

  RunManifest m;
  m.command = "eval";
  m.config = to_config_text(config);
  m.seed = args.seed;
  m.inputs = {args.tracks, args.scenario};
  m.outputs = {args.out, csv};
  finish_manifest(std::move(m), args.out, start);
  return kOk;
}

int cmd_oracle_check(const OracleArgs& args, std::ostream& log) {
  const auto start = Clock::now();
  if (args.trials < 0) throw ValidationError("trials must be >= 0");
  std::vector<std::string> sizes = args.sizes;
  if (sizes.empty()) sizes = {"1x1", "1x4", "1x8", "4x1", "8x1", "2x2", "3x3", "4x4", "2x4", "4x2"};

  std::ostringstream table;
  table << "size,trials,max_abs_error,median_tv,max_tv,status\n";
  bool hard_fail = false;
  log << std::left << std::setw(6) << "size" << std::setw(8) << "trials" << std::setw(16) << "max_abs_error"
      << std::setw(14) << "median_tv" << std::setw(14) << "max_tv" << "status\n";
  for (const auto& s : sizes) {
    const auto [I, J] = parse_size(s);
    std::mt19937_64 rng(args.seed * 1000003ULL + static_cast<std::uint64_t>(I * 16 + J));
    std::vector<double> tvs;
    double max_err = 0.0;
    for (int t = 0; t < args.trials && I > 0 && J > 0; ++t) {
      const auto inst = random_da_instance<double>(rng, I, J);
      const OracleComparison c = compare_with_oracle<double>(inst.phi_a, inst.phi_b0);
      max_err = std::max(max_err, c.max_abs_error);
      tvs.push_back(c.tv);
    }
    double median = 0.0;
    double max_tv = 0.0;
    if (!tvs.empty()) {
      std::vector<double> sorted = tvs;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t n = sorted.size();
      median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
      max_tv = sorted.back();
    }
    const bool tree = I <= 1 || J <= 1;
    const bool pass = tree ? max_err < 1e-9 : max_tv <= 0.25;
    hard_fail = hard_fail || !pass;
    const std::string status = tvs.empty() ? "pass (vacuous)" : pass ? "pass" : "FAIL";
    table << s << "," << tvs.size() << "," << format_double(max_err) << "," << format_double(median) << ","
          << format_double(max_tv) << "," << status << "\n";
    log << std::left << std::setw(6) << s << std::setw(8) << tvs.size() << std::setw(16) << max_err
        << std::setw(14) << median << std::setw(14) << max_tv << status << "\n";
  }
  write_file_atomic(args.out, table.str());

  RunManifest m;
  m.command = "oracle-check";
  m.seed = args.seed;
  m.outputs = {args.out};
  finish_manifest(std::move(m), args.out, start);
  return hard_fail ? kNumerical : kOk;
}

int cmd_default_config(const std::string& out, std::ostream& log) {
  const std::string text = to_config_text(default_run_config());
  if (out.empty()) {
    log << text;
  } else {
    write_file_atomic(out, text);
  }
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Neural enhanced belief propagation for multi-object tracking"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic scenario");
  c_sim->add_option("--config", sim.config, "Config file");
  c_sim->add_option("--seed", sim.seed, "Run seed");
  c_sim->add_option("--out", sim.out, "Scenario file to write")->required();

  TrackArgs trk;
  auto* c_trk = app.add_subcommand("track", "Run the tracker over scenarios");
  c_trk->add_option("scenarios", trk.scenarios, "Scenario files")->required();
  c_trk->add_option("--mode", trk.mode, "bp or nebp")->check(CLI::IsMember({"bp", "nebp"}));
  c_trk->add_option("--checkpoint", trk.checkpoint, "Network checkpoint (nebp)");
  c_trk->add_option("--config", trk.config, "Config file; default model matches each scenario");
  c_trk->add_option("--seed", trk.seed, "Run seed");
  c_trk->add_option("--out", trk.out, "Track file, or directory for several scenarios")->required();
  c_trk->add_option("--jobs", trk.jobs, "Scenarios processed in parallel")->check(CLI::PositiveNumber);
  c_trk->add_flag("--debug-corrections", trk.debug_corrections, "Write correction factors per frame");

  TrainArgs trn;
  auto* c_trn = app.add_subcommand("train", "Train the enhancement networks");
  c_trn->add_option("scenarios", trn.scenarios, "Scenario files or glob patterns")->required();
  c_trn->add_option("--config", trn.config, "Config file");
  c_trn->add_option("--seed", trn.seed, "Run seed");
  c_trn->add_option("--out", trn.out, "Checkpoint to write")->required();
  c_trn->add_option("--jobs", trn.jobs, "Scenario files loaded in parallel")->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Score a track file against a scenario");
  c_ev->add_option("tracks", ev.tracks, "Track file")->required();
  c_ev->add_option("scenario", ev.scenario, "Scenario file")->required();
  c_ev->add_option("--config", ev.config, "Config file");
  c_ev->add_option("--seed", ev.seed, "Run seed");
  c_ev->add_option("--out", ev.out, "Report JSON to write")->required();

  OracleArgs orc;
  auto* c_orc = app.add_subcommand("oracle-check", "Compare association BP with exact enumeration");
  c_orc->add_option("--sizes", orc.sizes, "Problem sizes IxJ")->delimiter(',');
  c_orc->add_option("--trials", orc.trials, "Random instances per size");
  c_orc->add_option("--seed", orc.seed, "Run seed");
  c_orc->add_option("--out", orc.out, "CSV table to write")->required();

  std::string cfg_out;
  auto* c_cfg = app.add_subcommand("default-config", "Print or write the default config");
  c_cfg->add_option("--out", cfg_out, "File to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*c_sim) return cmd_simulate(sim, out);
    if (*c_trk) return cmd_track(trk, out);
    if (*c_trn) return cmd_train(trn, out);
    if (*c_ev) return cmd_eval(ev, out);
    if (*c_orc) return cmd_oracle_check(orc, out);
    if (*c_cfg) return cmd_default_config(cfg_out, out);
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kValidation;
  }
  return kUsage;
}

}  // namespace nebp::cli
