#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "gdvig/attention.hpp"
#include "gdvig/error.hpp"
#include "gdvig/graph_dump.hpp"
#include "gdvig/shortcut.hpp"
#include "gdvig/tensor_io.hpp"
#include "gdvig/train.hpp"
#include "oracles.hpp"

using namespace gdvig;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  return dir;
}

CorpusSpec tiny_corpus(std::size_t n_train = 16, std::size_t n_test = 8) {
  CorpusSpec s;
  s.n_train = n_train;
  s.n_test = n_test;
  s.image_size = 32;
  s.seed = 4;
  return s;
}

RunConfig tiny_run() {
  RunConfig c;
  c.model.image_size = 32;
  c.model.base_channels = 8;
  c.model.encoder_depth = 1;
  c.model.gdc_depths = {1, 1};
  c.model.k = 4;
  c.train.epochs = 2;
  c.train.batch_size = 4;
  c.train.lr = 1e-3;
  c.train.val_fraction = 0.25;
  c.train.seed = 7;
  return c;
}

std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) { return read_bytes(p); }

}  // namespace

TEST(Config, ParsesKnownKeysAndRejectsOthers) {
  const RunConfig c = parse_run_config("# comment\nimage_size=64\nlr=0.003\nuse_gmg=false\ngmg_variant=cnn_only\n");
  EXPECT_EQ(c.model.image_size, 64u);
  EXPECT_EQ(c.train.lr, 0.003);
  EXPECT_FALSE(c.train.use_gmg);
  EXPECT_EQ(c.model.gmg_variant, GmgVariant::kCnnOnly);
  EXPECT_EQ(to_text(parse_run_config(to_text(c))), to_text(c));
  EXPECT_THROW(parse_run_config("learning_rate=0.1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("lr=fast\n"), ConfigError);
  EXPECT_THROW(parse_run_config("image_size\n"), ConfigError);
  EXPECT_THROW(parse_run_config("image_size=40\n"), ConfigError);
}

TEST(Train, RunsAreByteIdentical) {
  const Corpus corpus = generate_corpus(tiny_corpus());
  const auto a = fresh_dir("gdvig_train_a"), b = fresh_dir("gdvig_train_b");
  train(corpus, tiny_run(), a);
  train(corpus, tiny_run(), b);
  EXPECT_EQ(file_bytes(a / "train.log"), file_bytes(b / "train.log"));
  EXPECT_EQ(file_bytes(a / "split.txt"), file_bytes(b / "split.txt"));
  std::size_t files = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(file_bytes(e.path()), file_bytes(b / std::filesystem::relative(e.path(), a))) << e.path();
    ++files;
  }
  EXPECT_GT(files, 10u);
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(Train, LogHasOneLinePerEpochAndBestEpoch) {
  const Corpus corpus = generate_corpus(tiny_corpus());
  std::vector<std::size_t> seen;
  const TrainResult r = train(corpus, tiny_run(), std::nullopt, [&](const EpochLog& e) { seen.push_back(e.epoch); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{1, 2}));
  ASSERT_EQ(r.epochs.size(), 2u);
  EXPECT_EQ(r.val_ids.size(), 4u);
  EXPECT_GE(r.best_epoch, 1u);
  EXPECT_LE(r.best_epoch, 2u);
  const std::string line = format_epoch(r.epochs[0]);
  EXPECT_EQ(line.rfind("epoch=1 l_gmg=", 0), 0u) << line;
  EXPECT_NE(line.find(" val_acc="), std::string::npos);
}

TEST(Train, DivergenceAbortsNamingEpochAndBatch) {
  const Corpus corpus = generate_corpus(tiny_corpus());
  RunConfig c = tiny_run();
  c.train.lr = 1e300;
  try {
    train(corpus, c, std::nullopt);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite value at epoch "), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find(" batch "), std::string::npos) << e.what();
  }
}

TEST(Train, ZeroClassifierWeightStaysAtChance) {
  const Corpus corpus = generate_corpus(tiny_corpus(32, 100));
  RunConfig c = tiny_run();
  c.train.lambda_c = 0.0;
  c.train.val_fraction = 0.0;
  TrainResult r = train(corpus, c, std::nullopt);
  const EvalResult e = evaluate(r.model, c.train, corpus.test);
  // Balanced test split of 100: 95% binomial band around 0.5.
  const double band = 1.96 * std::sqrt(0.25 / 100.0);
  EXPECT_LE(std::abs(e.report.acc - 0.5), band) << e.report.acc;
}

TEST(Train, PredictionsJsonlCarriesLogits) {
  const Corpus corpus = generate_corpus(tiny_corpus());
  RunConfig c = tiny_run();
  c.train.epochs = 1;
  TrainResult r = train(corpus, c, std::nullopt);
  const EvalResult e = evaluate(r.model, c.train, corpus.test);
  const std::string text = predictions_jsonl(e);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 8);
  EXPECT_NE(text.find("\"logits\""), std::string::npos);
  EXPECT_NE(text.find("\"id\":\"test-00000\""), std::string::npos);
}

TEST(GradCam, FlatMapIsAllZero) {
  Tensor features({1, 4, 2}, 1.0);
  Tensor grad({1, 4, 2}, 0.5);
  const Tensor cam = grad_cam(features, grad, 2, 2, 8, 8);
  EXPECT_EQ(cam.shape(), (Shape{1, 8, 8}));
  for (double v : cam.data()) EXPECT_EQ(v, 0.0);
}

TEST(GradCam, RangeAndNearestUpsampling) {
  Rng rng(3);
  Tensor features({2, 16, 5}), grad({2, 16, 5});
  for (double& v : features.data()) v = rng.uniform(-1, 1);
  for (double& v : grad.data()) v = rng.uniform(-1, 1);
  const Tensor cam = grad_cam(features, grad, 4, 4, 32, 32);
  ASSERT_EQ(cam.shape(), (Shape{2, 32, 32}));
  for (std::size_t b = 0; b < 2; ++b) {
    double lo = 1, hi = 0;
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j) {
        const double v = cam.at({b, i, j});
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        EXPECT_EQ(v, cam.at({b, i / 8 * 8, j / 8 * 8}));
      }
    EXPECT_GE(lo, 0.0);
    EXPECT_LE(hi, 1.0);
  }
}

TEST(GradCam, DuplicatedRecordsGetIdenticalMaps) {
  const Corpus corpus = generate_corpus(tiny_corpus());
  RunConfig c = tiny_run();
  GdVig model = GdVig::create(c.model, 1);
  const SampleRecord* r = &corpus.test[1];
  const std::vector<const SampleRecord*> recs{r, r, &corpus.test[2]};
  const AttentionResult a = attention_maps(model, c.train, recs);
  ASSERT_EQ(a.heatmaps.shape(), (Shape{3, 32, 32}));
  for (std::size_t i = 0; i < 32 * 32; ++i) EXPECT_EQ(a.heatmaps[i], a.heatmaps[32 * 32 + i]);
  EXPECT_GE(a.heatmaps.min(), 0.0);
  EXPECT_LE(a.heatmaps.max(), 1.0);
}

TEST(GradCam, ArgmaxInside) {
  Tensor heat({2, 2}, std::vector<double>{0.1, 1.0, 1.0, 0.2});
  EXPECT_TRUE(argmax_inside(heat, Tensor({2, 2}, std::vector<double>{0, 0, 1, 0})));
  EXPECT_FALSE(argmax_inside(heat, Tensor({2, 2}, std::vector<double>{1, 0, 0, 1})));
}

class GraphAnalysis : public ::testing::Test {
 protected:
  void SetUp() override {
    Rng rng(77);
    features = Tensor({36, 4});
    for (double& v : features.data()) v = rng.uniform(-1, 1);
    gaze = Tensor({36});
    for (double& v : gaze.data()) v = rng.uniform();
  }
  Tensor features, gaze;
};

TEST_F(GraphAnalysis, ZeroGazeWeightReproducesFeatureGraph) {
  const std::vector<std::size_t> centers{0, 7, 35};
  const GraphReport r = analyze_graphs(NodeGrid(features, 6, 6), GazeGrid(gaze), 5, 0.0, centers);
  EXPECT_EQ(r.fused, r.feature);
  for (const auto& c : r.centers) {
    EXPECT_TRUE(c.eliminated.empty());
    EXPECT_TRUE(c.added.empty());
    EXPECT_EQ(c.retained.size(), 5u);
  }
}

TEST_F(GraphAnalysis, NeighborSetsMatchIndependentComparator) {
  const std::size_t k = 6;
  const double lambda = 8.0;
  std::vector<std::size_t> centers(36);
  std::iota(centers.begin(), centers.end(), 0);
  const GraphReport r = analyze_graphs(NodeGrid(features, 6, 6), GazeGrid(gaze), k, lambda, centers);
  const auto feat = oracle::knn(features.vec(), 36, 4, nullptr, 0, k);
  const auto fused = oracle::knn(features.vec(), 36, 4, &gaze.vec(), lambda, k);
  for (const auto& c : r.centers) {
    const std::set<std::size_t> f(feat.begin() + c.center * k, feat.begin() + (c.center + 1) * k);
    const std::set<std::size_t> g(fused.begin() + c.center * k, fused.begin() + (c.center + 1) * k);
    std::set<std::size_t> elim, kept, added;
    for (std::size_t j : f) (g.count(j) ? kept : elim).insert(j);
    for (std::size_t j : g)
      if (!f.count(j)) added.insert(j);
    EXPECT_EQ(std::set<std::size_t>(c.eliminated.begin(), c.eliminated.end()), elim) << c.center;
    EXPECT_EQ(std::set<std::size_t>(c.retained.begin(), c.retained.end()), kept) << c.center;
    EXPECT_EQ(std::set<std::size_t>(c.added.begin(), c.added.end()), added) << c.center;
  }
}

TEST_F(GraphAnalysis, EdgeTermsReevaluate) {
  const std::vector<std::size_t> centers{3, 20};
  const NodeGrid nodes(features, 6, 6);
  const GazeGrid g(gaze);
  const GraphReport r = analyze_graphs(nodes, g, 4, 5.0, centers);
  for (const auto& c : r.centers) {
    for (const auto* edges : {&c.feature_edges, &c.gaze_edges, &c.fused_edges}) {
      ASSERT_EQ(edges->size(), 4u);
      for (const auto& e : *edges) {
        EXPECT_EQ(e.feature, feature_distance(nodes, c.center, e.neighbor));
        EXPECT_EQ(e.gaze, gaze_distance(g, c.center, e.neighbor, 5.0));
        EXPECT_EQ(e.fused, fused_distance(nodes, g, c.center, e.neighbor, 5.0));
      }
    }
  }
  EXPECT_THROW(analyze_graphs(nodes, g, 4, 5.0, std::vector<std::size_t>{36}), ConfigError);
}

TEST(GraphDumpFiles, WritesAllFourArtifacts) {
  const Corpus corpus = generate_corpus(tiny_corpus());
  RunConfig c = tiny_run();
  GdVig model = GdVig::create(c.model, 2);
  const std::vector<std::size_t> centers{0, 10};
  const GraphReport r = dump_graphs(model, c.train, corpus.test[1], centers);
  EXPECT_EQ(r.grid_h, 8u);
  const auto dir = fresh_dir("gdvig_graph_dump");
  write_graph_report(dir, r);
  for (const char* f : {"feature.graph", "gaze.graph", "fused.graph", "report.json"})
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  std::filesystem::remove_all(dir);
}

TEST(ShortcutReport, RoundTripsAndDetectsSwappedArms) {
  ShortcutReport r;
  r.seeds = {1, 2};
  r.no_gaze = ArmResult{"no_gaze", false, 0.0, {0.4, 0.5}, {0.1, 0.2}, median({0.4, 0.5}), median({0.1, 0.2})};
  r.gd_vig = ArmResult{"gd_vig", true, 3.0, {0.7, 0.6}, {0.5, 0.4}, median({0.7, 0.6}), median({0.5, 0.4})};
  const ShortcutReport back = parse_shortcut_report(to_json(r));
  EXPECT_EQ(back.gd_vig.test_acc, r.gd_vig.test_acc);
  EXPECT_EQ(back.no_gaze.lesion_hit_rate, r.no_gaze.lesion_hit_rate);
  ShortcutReport swapped = r;
  swapped.no_gaze.name = "gd_vig";
  swapped.gd_vig.name = "no_gaze";
  EXPECT_THROW(parse_shortcut_report(to_json(swapped)), FormatError);
  ShortcutReport short_arm = r;
  short_arm.gd_vig.test_acc.pop_back();
  EXPECT_THROW(parse_shortcut_report(to_json(short_arm)), FormatError);
  EXPECT_THROW(parse_shortcut_report("{}"), FormatError);
}

TEST(ShortcutSetup, SyncsModelWithCorpusAndRequiresFullCorrelation) {
  const ShortcutSetup s = parse_shortcut_setup("shortcut=true\nimage_size=32\nclasses=2\nepochs=1\nbase_channels=8\n");
  EXPECT_EQ(s.run.model.image_size, 32u);
  EXPECT_EQ(s.run.train.epochs, 1u);
  EXPECT_EQ(median({3, 1, 2}), 2.0);
  EXPECT_EQ(median({4, 1, 2, 3}), 2.5);
  ShortcutSetup weak = s;
  weak.corpus.train_correlation = 0.5;
  const std::vector<std::uint64_t> seeds{1};
  EXPECT_THROW(shortcut_experiment(weak, seeds), ConfigError);
  EXPECT_THROW(parse_shortcut_setup("shortcut=true\nbogus=1\n"), ConfigError);
}
