#include "nebp/io.hpp"

#include <gtest/gtest.h>

#include <filesystem>

namespace nebp {
namespace {

namespace fs = std::filesystem;

Scenario small_scenario() {
  SimConfig c;
  c.n_frames = 15;
  c.initial_objects = 3;
  c.clutter_rate = 5;
  c.seed = 21;
  return simulate(c);
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("nebp_test_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string replace_first(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  if (pos != std::string::npos) s.replace(pos, from.size(), to);
  return s;
}

TEST(ScenarioIo, RoundTripIsExact) {
  const Scenario s = small_scenario();
  const std::string text = scenario_to_jsonl(s);
  const Scenario back = scenario_from_jsonl(text);
  EXPECT_EQ(scenario_to_jsonl(back), text);
  ASSERT_EQ(back.frames.size(), s.frames.size());
  for (std::size_t k = 0; k < s.frames.size(); ++k) {
    ASSERT_EQ(back.frames[k].size(), s.frames[k].size());
    EXPECT_EQ(back.origins[k], s.origins[k]);
    for (std::size_t j = 0; j < s.frames[k].size(); ++j) {
      EXPECT_EQ(back.frames[k][j].z, s.frames[k][j].z);
      EXPECT_EQ(back.frames[k][j].score, s.frames[k][j].score);
      EXPECT_EQ(*back.frames[k][j].shape, *s.frames[k][j].shape);
    }
  }
  ASSERT_EQ(back.truth.size(), s.truth.size());
  for (std::size_t t = 0; t < s.truth.size(); ++t) EXPECT_EQ(back.truth[t].states, s.truth[t].states);
}

TEST(ScenarioIo, EmptyScenario) {
  SimConfig c;
  c.n_frames = 0;
  const Scenario s = simulate(c);
  const Scenario back = scenario_from_jsonl(scenario_to_jsonl(s));
  EXPECT_EQ(back.n_frames(), 0);
}

TEST(ScenarioIo, CorruptInputs) {
  const std::string text = scenario_to_jsonl(small_scenario());
  EXPECT_THROW(scenario_from_jsonl(""), ValidationError);
  EXPECT_THROW(scenario_from_jsonl("{not json\n"), ValidationError);
  EXPECT_THROW(scenario_from_jsonl(text.substr(0, text.rfind('\n', text.size() - 2) + 1)), ValidationError);
  EXPECT_THROW(scenario_from_jsonl(text.substr(text.find('\n') + 1)), ValidationError);
  EXPECT_THROW(scenario_from_jsonl(text + "{\"type\":\"bogus\"}\n"), ValidationError);
  EXPECT_THROW(scenario_from_jsonl(text.substr(0, text.size() / 2)), ValidationError);
}

TEST(TrackIo, RoundTrip) {
  TrackWriter w("nebp", 3);
  DeclaredTrack t;
  t.track_id = 42;
  t.mean << 1.0 / 3.0, -2.5, 0.1, 7;
  t.covariance_diagonal << 0.25, 0.25, 1, 1;
  t.existence = 0.875;
  t.score = 1.2345678901234567;
  w.frame(0, {});
  w.frame(1, {t});
  CorrectionFactors corr;
  corr.beta = VectorXd::Constant(1, 0.5);
  corr.gamma = MatrixXd::Constant(1, 1, -0.25);
  w.diagnostics(1, corr);
  w.frame(2, {t, t});
  const TrackFile f = tracks_from_jsonl(w.text());
  EXPECT_EQ(f.mode, "nebp");
  ASSERT_EQ(f.frames.size(), 3u);
  EXPECT_TRUE(f.frames[0].empty());
  ASSERT_EQ(f.frames[1].size(), 1u);
  EXPECT_EQ(f.frames[1][0].track_id, 42);
  EXPECT_EQ(f.frames[1][0].mean, t.mean);
  EXPECT_EQ(f.frames[1][0].covariance_diagonal, t.covariance_diagonal);
  EXPECT_EQ(f.frames[1][0].score, t.score);
  EXPECT_EQ(f.frames[1][0].frame, 1);
  EXPECT_EQ(f.frames[2].size(), 2u);
}

TEST(TrackIo, CorruptInputs) {
  TrackWriter w("bp", 2);
  w.frame(0, {});
  EXPECT_THROW(tracks_from_jsonl(w.text()), ValidationError);
  w.frame(1, {});
  EXPECT_NO_THROW(tracks_from_jsonl(w.text()));
  TrackWriter skip("bp", 2);
  skip.frame(1, {});
  EXPECT_THROW(tracks_from_jsonl(skip.text()), ValidationError);
  EXPECT_THROW(tracks_from_jsonl("{\"type\":\"tracks\",\"frame\":0,\"tracks\":[]}\n"), ValidationError);
  const std::string text = replace_first(w.text(), "\"tracks\":[]", "\"tracks\":[{\"id\":1}]");
  EXPECT_THROW(tracks_from_jsonl(text), ValidationError);
}

TEST(CheckpointIo, RoundTripIsBitExact) {
  GnnConfig cfg;
  cfg.hidden = 8;
  cfg.motion_features = 4;
  cfg.shape_features = 4;
  const GnnNets nets = GnnNets::create(cfg, 9);
  const std::string text = checkpoint_to_json(nets);
  const GnnNets back = checkpoint_from_json(text);
  EXPECT_EQ(checkpoint_to_json(back), text);
  EXPECT_EQ(back.config.hidden, 8);
  for (std::size_t n = 0; n < kNetCount; ++n) {
    ASSERT_EQ(back.nets[n].layers.size(), nets.nets[n].layers.size());
    for (std::size_t l = 0; l < nets.nets[n].layers.size(); ++l) {
      EXPECT_EQ(back.nets[n].layers[l].weight, nets.nets[n].layers[l].weight);
      EXPECT_EQ(back.nets[n].layers[l].bias, nets.nets[n].layers[l].bias);
      EXPECT_EQ(back.nets[n].layers[l].activation, nets.nets[n].layers[l].activation);
    }
  }
}

TEST(CheckpointIo, CorruptInputs) {
  const std::string text = checkpoint_to_json(GnnNets::create(GnnConfig{}, 1));
  EXPECT_THROW(checkpoint_from_json(""), ValidationError);
  EXPECT_THROW(checkpoint_from_json(text.substr(0, text.size() / 2)), ValidationError);
  EXPECT_THROW(checkpoint_from_json(replace_first(text, "nebp-checkpoint", "other")), ValidationError);
  EXPECT_THROW(checkpoint_from_json(replace_first(text, "\"edge\"", "\"edges\"")), ValidationError);
  EXPECT_THROW(checkpoint_from_json(replace_first(text, "leaky_relu", "tanh")), ValidationError);
  EXPECT_THROW(checkpoint_from_json("[1, 2, 3]"), ValidationError);
}

TEST(Files, AtomicWriteAndRead) {
  const fs::path dir = scratch_dir("atomic");
  const std::string path = (dir / "out.txt").string();
  write_file_atomic(path, "first");
  write_file_atomic(path, "second");
  EXPECT_EQ(read_file(path), "second");
  std::size_t entries = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++entries;
  EXPECT_EQ(entries, 1u);
  EXPECT_THROW(read_file((dir / "missing").string()), ValidationError);
  EXPECT_THROW(write_file_atomic((dir / "no" / "such" / "dir.txt").string(), "x"), ValidationError);

  const Scenario s = small_scenario();
  write_scenario((dir / "s.jsonl").string(), s);
  EXPECT_EQ(scenario_to_jsonl(read_scenario((dir / "s.jsonl").string())), scenario_to_jsonl(s));
  fs::remove_all(dir);
}

TEST(Reports, JsonAndCsv) {
  MetricReport r;
  r.amota = 0.5;
  r.gt = 4;
  r.tp = 3;
  RecallRow row;
  row.recall = 0.5;
  row.achieved_recall = 0.75;
  row.threshold = 0.25;
  row.reached = true;
  row.motar = 1.0;
  r.per_recall.push_back(row);
  EXPECT_EQ(report_to_csv(r), "recall,achieved_recall,threshold,reached,motar,fp,fn,ids\n0.5,0.75,0.25,1,1,0,0,0\n");
  const std::string j = report_to_json(r, EvalConfig{});
  EXPECT_NE(j.find("\"amota\": 0.5"), std::string::npos);
  MetricReport none;
  EXPECT_NE(report_to_json(none, EvalConfig{}).find("\"amota\": null"), std::string::npos);
}

TEST(Reports, TrainingLog) {
  StepLoss s;
  s.epoch = 1;
  s.step = 2;
  s.l_r = 0.5;
  s.l_a = 0.25;
  EXPECT_EQ(training_log_csv({s}), "epoch,step,L_r,L_a,total\n1,2,0.5,0.25,0.75\n");
}

TEST(Reports, Manifest) {
  RunManifest m;
  m.command = "simulate";
  m.seed = 7;
  m.outputs = {"a.jsonl"};
  m.code_version = code_version();
  const std::string j = manifest_to_json(m);
  for (const char* key : {"\"command\"", "\"config\"", "\"seed\"", "\"inputs\"", "\"outputs\"", "\"code_version\"",
                          "\"duration_s\""}) {
    EXPECT_NE(j.find(key), std::string::npos) << key;
  }
  EXPECT_FALSE(code_version().empty());
}

}  // namespace
}  // namespace nebp
