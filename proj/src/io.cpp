#include "nebp/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#ifndef NEBP_VERSION
#define NEBP_VERSION "0.0.0"
#endif

namespace nebp {
namespace {

using json = nlohmann::json;

constexpr int kFormatVersion = 1;

json vec_json(const Eigen::Ref<const VectorXd>& v) {
  json a = json::array();
  for (Index k = 0; k < v.size(); ++k) a.push_back(v(k));
  return a;
}

VectorXd json_vec(const json& a, Index expected, const char* what) {
  if (!a.is_array()) throw ValidationError(std::string(what) + ": expected an array");
  if (expected >= 0 && static_cast<Index>(a.size()) != expected) {
    throw ValidationError(std::string(what) + ": expected " + std::to_string(expected) + " values");
  }
  VectorXd v(static_cast<Index>(a.size()));
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (!a[k].is_number()) throw ValidationError(std::string(what) + ": non-numeric entry");
    v(static_cast<Index>(k)) = a[k].get<double>();
  }
  return v;
}

Vec4 json_vec4(const json& a, const char* what) { return json_vec(a, 4, what); }

json roi_json(const Roi& r) { return json::array({r.x_min, r.x_max, r.y_min, r.y_max}); }

Roi json_roi(const json& a) {
  const VectorXd v = json_vec(a, 4, "roi");
  return Roi{v(0), v(1), v(2), v(3)};
}

json sim_config_json(const SimConfig& c) {
  return json{{"n_frames", c.n_frames},
              {"initial_objects", c.initial_objects},
              {"birth_rate", c.birth_rate},
              {"survival_prob", c.p_s},
              {"detection_prob", c.p_d},
              {"clutter_rate", c.clutter_rate},
              {"process_noise", c.q},
              {"meas_cov", vec_json(Eigen::Map<const VectorXd>(c.meas_cov.data(), 16))},
              {"roi", roi_json(c.roi)},
              {"v_max", c.v_max},
              {"dt", c.dt},
              {"shape_dim", c.shape_dim},
              {"shape_noise", c.shape_noise},
              {"clutter_shape_offset", c.clutter_shape_offset},
              {"measure_velocity", c.measure_velocity},
              {"seed", c.seed}};
}

SimConfig json_sim_config(const json& j) {
  SimConfig c;
  c.n_frames = j.at("n_frames").get<int>();
  c.initial_objects = j.at("initial_objects").get<int>();
  c.birth_rate = j.at("birth_rate").get<double>();
  c.p_s = j.at("survival_prob").get<double>();
  c.p_d = j.at("detection_prob").get<double>();
  c.clutter_rate = j.at("clutter_rate").get<double>();
  c.q = j.at("process_noise").get<double>();
  const VectorXd r = json_vec(j.at("meas_cov"), 16, "meas_cov");
  c.meas_cov = Eigen::Map<const Mat4>(r.data());
  c.roi = json_roi(j.at("roi"));
  c.v_max = j.at("v_max").get<double>();
  c.dt = j.at("dt").get<double>();
  c.shape_dim = j.at("shape_dim").get<int>();
  c.shape_noise = j.at("shape_noise").get<double>();
  c.clutter_shape_offset = j.at("clutter_shape_offset").get<double>();
  c.measure_velocity = j.at("measure_velocity").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json parse_line(const std::string& line, int n) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw ValidationError("line " + std::to_string(n) + ": malformed JSON: " + e.what());
  }
}

template <typename F>
void for_each_record(const std::string& text, F&& f) {
  std::istringstream in(text);
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      f(parse_line(line, n), n);
    } catch (const json::exception& e) {
      throw ValidationError("line " + std::to_string(n) + ": " + e.what());
    }
  }
}

json gnn_config_json(const GnnConfig& c) {
  return json{{"hidden", c.hidden},
              {"motion_features", c.motion_features},
              {"shape_features", c.shape_features},
              {"descriptor_dim", c.descriptor_dim},
              {"rounds", c.rounds},
              {"position_scale", c.position_scale},
              {"velocity_scale", c.velocity_scale}};
}

GnnConfig json_gnn_config(const json& j) {
  GnnConfig c;
  c.hidden = j.at("hidden").get<Index>();
  c.motion_features = j.at("motion_features").get<Index>();
  c.shape_features = j.at("shape_features").get<Index>();
  c.descriptor_dim = j.at("descriptor_dim").get<Index>();
  c.rounds = j.at("rounds").get<int>();
  c.position_scale = j.at("position_scale").get<double>();
  c.velocity_scale = j.at("velocity_scale").get<double>();
  return c;
}

}  // namespace

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + path);
    out << content;
    out.flush();
    if (!out) throw ValidationError("cannot write " + path);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw ValidationError("cannot write " + path);
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string scenario_to_jsonl(const Scenario& sc) {
  std::string out;
  auto emit = [&](const json& j) {
    out += j.dump();
    out += '\n';
  };
  emit(json{{"type", "header"},
            {"format", "nebp-scenario"},
            {"version", kFormatVersion},
            {"n_frames", sc.n_frames()},
            {"config", sim_config_json(sc.config)}});
  for (const auto& t : sc.truth) {
    json states = json::array();
    for (const auto& x : t.states) states.push_back(vec_json(x));
    json rec{{"type", "truth"}, {"id", t.id}, {"birth", t.birth}, {"death", t.death}, {"states", states}};
    if (const auto it = sc.descriptor_book.find(t.id); it != sc.descriptor_book.end()) {
      rec["descriptor"] = vec_json(it->second);
    }
    emit(rec);
  }
  for (int k = 0; k < sc.n_frames(); ++k) {
    json dets = json::array();
    const auto& frame = sc.frames[static_cast<std::size_t>(k)];
    for (std::size_t j = 0; j < frame.size(); ++j) {
      json d{{"z", vec_json(frame[j].z)}, {"score", frame[j].score}};
      if (frame[j].shape) d["shape"] = vec_json(*frame[j].shape);
      const std::int64_t origin = sc.origins[static_cast<std::size_t>(k)][j];
      d["origin"] = origin == kClutterOrigin ? json(nullptr) : json(origin);
      dets.push_back(std::move(d));
    }
    emit(json{{"type", "frame"}, {"frame", k}, {"detections", dets}});
  }
  return out;
}

Scenario scenario_from_jsonl(const std::string& text) {
  Scenario sc;
  bool have_header = false;
  int n_frames = 0;
  int next_frame = 0;
  for_each_record(text, [&](const json& j, int n) {
    const std::string type = j.at("type").get<std::string>();
    if (!have_header) {
      if (type != "header" || j.value("format", "") != "nebp-scenario") {
        throw ValidationError("line " + std::to_string(n) + ": expected a scenario header");
      }
      if (j.at("version").get<int>() != kFormatVersion) throw ValidationError("unsupported scenario version");
      sc.config = json_sim_config(j.at("config"));
      n_frames = j.at("n_frames").get<int>();
      if (n_frames < 0) throw ValidationError("negative n_frames");
      sc.frames.resize(static_cast<std::size_t>(n_frames));
      sc.origins.resize(static_cast<std::size_t>(n_frames));
      have_header = true;
      return;
    }
    if (type == "truth") {
      TruthTrack t;
      t.id = j.at("id").get<std::int64_t>();
      t.birth = j.at("birth").get<int>();
      t.death = j.at("death").get<int>();
      for (const auto& s : j.at("states")) t.states.push_back(json_vec4(s, "truth state"));
      if (t.death < t.birth || static_cast<int>(t.states.size()) != t.death - t.birth + 1) {
        throw ValidationError("line " + std::to_string(n) + ": truth lifetime does not match its states");
      }
      if (j.contains("descriptor")) sc.descriptor_book[t.id] = json_vec(j.at("descriptor"), -1, "descriptor");
      sc.truth.push_back(std::move(t));
    } else if (type == "frame") {
      const int k = j.at("frame").get<int>();
      if (k != next_frame || k >= n_frames) {
        throw ValidationError("line " + std::to_string(n) + ": frame records out of order");
      }
      ++next_frame;
      for (const auto& d : j.at("detections")) {
        Detection det;
        det.z = json_vec4(d.at("z"), "detection z");
        det.score = d.at("score").get<double>();
        det.frame = k;
        if (d.contains("shape")) det.shape = json_vec(d.at("shape"), -1, "detection shape");
        const json& o = d.value("origin", json(nullptr));
        const std::int64_t origin = o.is_null() ? kClutterOrigin : o.get<std::int64_t>();
        if (origin != kClutterOrigin) {
          const auto it = std::find_if(sc.truth.begin(), sc.truth.end(),
                                       [&](const TruthTrack& t) { return t.id == origin; });
          if (it == sc.truth.end() || !it->alive(k)) {
            throw ValidationError("line " + std::to_string(n) + ": detection references a track not alive");
          }
        }
        sc.frames[static_cast<std::size_t>(k)].push_back(std::move(det));
        sc.origins[static_cast<std::size_t>(k)].push_back(origin);
      }
    } else {
      throw ValidationError("line " + std::to_string(n) + ": unknown record type '" + type + "'");
    }
  });
  if (!have_header) throw ValidationError("scenario file has no header");
  if (next_frame != n_frames) throw ValidationError("scenario file is missing frame records");
  return sc;
}

void write_scenario(const std::string& path, const Scenario& scenario) {
  write_file_atomic(path, scenario_to_jsonl(scenario));
}

Scenario read_scenario(const std::string& path) { return scenario_from_jsonl(read_file(path)); }

TrackWriter::TrackWriter(const std::string& mode, int n_frames) {
  out_ = json{{"type", "header"}, {"format", "nebp-tracks"}, {"version", kFormatVersion},
              {"mode", mode}, {"n_frames", n_frames}}
             .dump() +
         "\n";
}

void TrackWriter::frame(int k, const std::vector<DeclaredTrack>& tracks) {
  json arr = json::array();
  for (const auto& t : tracks) {
    arr.push_back(json{{"id", t.track_id},
                       {"mean", vec_json(t.mean)},
                       {"cov_diag", vec_json(t.covariance_diagonal)},
                       {"existence", t.existence},
                       {"score", t.score}});
  }
  out_ += json{{"type", "tracks"}, {"frame", k}, {"tracks", arr}}.dump() + "\n";
}

void TrackWriter::diagnostics(int k, const CorrectionFactors& corr) {
  json gamma = json::array();
  for (Index i = 0; i < corr.gamma.rows(); ++i) gamma.push_back(vec_json(corr.gamma.row(i).transpose()));
  out_ += json{{"type", "diagnostics"}, {"frame", k}, {"beta", vec_json(corr.beta)}, {"gamma", gamma}}.dump() +
          "\n";
}

TrackFile tracks_from_jsonl(const std::string& text) {
  TrackFile tf;
  bool have_header = false;
  int n_frames = 0;
  int next_frame = 0;
  for_each_record(text, [&](const json& j, int n) {
    const std::string type = j.at("type").get<std::string>();
    if (!have_header) {
      if (type != "header" || j.value("format", "") != "nebp-tracks") {
        throw ValidationError("line " + std::to_string(n) + ": expected a track file header");
      }
      tf.mode = j.at("mode").get<std::string>();
      n_frames = j.at("n_frames").get<int>();
      tf.frames.resize(static_cast<std::size_t>(std::max(n_frames, 0)));
      have_header = true;
      return;
    }
    if (type == "diagnostics") return;
    if (type != "tracks") throw ValidationError("line " + std::to_string(n) + ": unknown record type");
    const int k = j.at("frame").get<int>();
    if (k != next_frame || k >= n_frames) throw ValidationError("line " + std::to_string(n) + ": frame out of order");
    ++next_frame;
    for (const auto& t : j.at("tracks")) {
      DeclaredTrack d;
      d.frame = k;
      d.track_id = t.at("id").get<std::int64_t>();
      d.mean = json_vec4(t.at("mean"), "track mean");
      d.covariance_diagonal = json_vec4(t.at("cov_diag"), "track cov_diag");
      d.existence = t.at("existence").get<double>();
      d.score = t.at("score").get<double>();
      tf.frames[static_cast<std::size_t>(k)].push_back(d);
    }
  });
  if (!have_header) throw ValidationError("track file has no header");
  if (next_frame != n_frames) throw ValidationError("track file is missing frame records");
  return tf;
}

TrackFile read_tracks(const std::string& path) { return tracks_from_jsonl(read_file(path)); }

std::string checkpoint_to_json(const GnnNets& nets) {
  json jn = json::object();
  for (std::size_t n = 0; n < kNetCount; ++n) {
    json layers = json::array();
    for (const auto& l : nets.nets[n].layers) {
      json w = json::array();
      for (Index r = 0; r < l.weight.rows(); ++r) {
        for (Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
      }
      layers.push_back(json{{"in", l.weight.cols()},
                            {"out", l.weight.rows()},
                            {"activation", to_string(l.activation)},
                            {"weight", w},
                            {"bias", vec_json(l.bias)}});
    }
    jn[std::string(net_name(static_cast<Net>(n)))] = json{{"layers", layers}};
  }
  return json{{"format", "nebp-checkpoint"},
              {"version", kFormatVersion},
              {"config", gnn_config_json(nets.config)},
              {"nets", jn}}
             .dump(1);
}

GnnNets checkpoint_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  try {
    if (j.value("format", "") != "nebp-checkpoint") throw ValidationError("checkpoint: wrong format tag");
    if (j.at("version").get<int>() != kFormatVersion) throw ValidationError("checkpoint: unsupported version");
    GnnNets nets;
    nets.config = json_gnn_config(j.at("config"));
    const json& jn = j.at("nets");
    for (std::size_t n = 0; n < kNetCount; ++n) {
      const std::string name(net_name(static_cast<Net>(n)));
      if (!jn.contains(name)) throw ValidationError("checkpoint: missing network " + name);
      Mlp<double>& net = nets.nets[n];
      for (const auto& jl : jn.at(name).at("layers")) {
        DenseLayer<double> l;
        const Index in = jl.at("in").get<Index>();
        const Index out = jl.at("out").get<Index>();
        if (in < 1 || out < 1) throw ValidationError("checkpoint: bad layer size in " + name);
        l.activation = activation_from_string(jl.at("activation").get<std::string>());
        const VectorXd w = json_vec(jl.at("weight"), in * out, "checkpoint weight");
        l.weight = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            w.data(), out, in);
        l.bias = json_vec(jl.at("bias"), out, "checkpoint bias");
        net.layers.push_back(std::move(l));
      }
    }
    validate_shapes(nets);
    return nets;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::string& path, const GnnNets& nets) {
  write_file_atomic(path, checkpoint_to_json(nets));
}

GnnNets read_checkpoint(const std::string& path) { return checkpoint_from_json(read_file(path)); }

std::string report_to_json(const MetricReport& r, const EvalConfig& config) {
  json rows = json::array();
  for (const auto& row : r.per_recall) {
    rows.push_back(json{{"recall", row.recall},
                        {"achieved_recall", row.achieved_recall},
                        {"threshold", row.threshold},
                        {"reached", row.reached},
                        {"motar", row.motar},
                        {"fp", row.fp},
                        {"fn", row.fn},
                        {"ids", row.ids}});
  }
  return json{{"format", "nebp-report"},
              {"version", kFormatVersion},
              {"t_dist", config.t_dist},
              {"n_thresholds", config.n_thresholds},
              {"amota", r.amota ? json(*r.amota) : json(nullptr)},
              {"ids", r.ids},
              {"frag", r.frag},
              {"fp", r.fp},
              {"fn", r.fn},
              {"tp", r.tp},
              {"gt", r.gt},
              {"per_recall", rows}}
             .dump(1);
}

std::string report_to_csv(const MetricReport& r) {
  std::string out = "recall,achieved_recall,threshold,reached,motar,fp,fn,ids\n";
  for (const auto& row : r.per_recall) {
    out += format_double(row.recall) + "," + format_double(row.achieved_recall) + "," +
           format_double(row.threshold) + "," + (row.reached ? "1" : "0") + "," + format_double(row.motar) +
           "," + std::to_string(row.fp) + "," + std::to_string(row.fn) + "," + std::to_string(row.ids) + "\n";
  }
  return out;
}

std::string training_log_csv(const std::vector<StepLoss>& log) {
  std::string out = "epoch,step,L_r,L_a,total\n";
  for (const auto& s : log) {
    out += std::to_string(s.epoch) + "," + std::to_string(s.step) + "," + format_double(s.l_r) + "," +
           format_double(s.l_a) + "," + format_double(s.total()) + "\n";
  }
  return out;
}

std::string manifest_to_json(const RunManifest& m) {
  return json{{"command", m.command},
              {"config", m.config},
              {"seed", m.seed},
              {"inputs", m.inputs},
              {"outputs", m.outputs},
              {"code_version", m.code_version},
              {"duration_s", m.duration_s}}
      .dump(1);
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
  write_file_atomic(path, manifest_to_json(manifest));
}

std::string code_version() { return NEBP_VERSION; }

}  // namespace nebp
