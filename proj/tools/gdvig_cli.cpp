#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include "gdvig/attention.hpp"
#include "gdvig/error.hpp"
#include "gdvig/gradcheck.hpp"
#include "gdvig/graph_dump.hpp"
#include "gdvig/kernels.hpp"
#include "gdvig/rng.hpp"
#include "gdvig/shortcut.hpp"
#include "gdvig/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace gdvig;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (auto v : parse_uint_list("centers", text)) out.push_back(static_cast<std::size_t>(v));
  return out;
}

const SampleRecord& find_sample(const Corpus& corpus, const std::string& id) { return corpus.find(id); }

int cmd_synth(const fs::path& spec, const fs::path& out) {
  const CorpusSpec s = parse_corpus_spec(slurp(spec));
  const Corpus c = generate_corpus(s);
  save_corpus(c, out);
  std::cout << "wrote " << c.train.size() << " train and " << c.test.size() << " test records to " << out << "\n";
  return 0;
}

int cmd_train(const fs::path& corpus_dir, const fs::path& config, const fs::path& out, bool quiet) {
  const RunConfig cfg = load_run_config(config);
  const Corpus corpus = load_corpus(corpus_dir);
  ProgressFn progress;
  if (!quiet) progress = [](const EpochLog& e) { std::cerr << format_epoch(e) << "\n"; };
  const TrainResult r = train(corpus, cfg, out, progress);
  std::cout << "best epoch " << r.best_epoch << ", checkpoints in " << out / "best" << " and " << out / "last"
            << "\n";
  return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& corpus_dir, const std::string& split,
             const std::string& predictions) {
  const Corpus corpus = load_corpus(corpus_dir);
  const EvalResult r = evaluate_checkpoint(checkpoint, corpus, split);
  std::cout << to_json(r.report) << "\n";
  if (!predictions.empty()) {
    std::ofstream out(predictions, std::ios::trunc);
    out << predictions_jsonl(r);
  }
  return r.report.auc ? 0 : 3;
}

int cmd_attention(const fs::path& checkpoint, const fs::path& corpus_dir, const std::string& id, fs::path out) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const Corpus corpus = load_corpus(corpus_dir);
  const SampleRecord& rec = find_sample(corpus, id);
  validate_record(rec, ck.cfg.model.num_classes);
  const SampleRecord* one[] = {&rec};
  const AttentionResult a = attention_maps(ck.model, ck.cfg.train, one);
  const Tensor map = a.heatmaps.reshaped({a.heatmaps.dim(1), a.heatmaps.dim(2)});
  if (out.empty()) out = checkpoint / "attention";
  fs::create_directories(out);
  write_pgm(out / (id + ".pgm"), map);
  write_tensor(out / (id + ".gdvt"), map);
  std::cout << "predicted class " << a.predicted[0] << "; heatmap in " << out / (id + ".pgm") << "\n";
  if (rec.lesion_mask) std::cout << "argmax inside lesion: " << (argmax_inside(map, *rec.lesion_mask) ? "yes" : "no") << "\n";
  return 0;
}

int cmd_dump_graph(const fs::path& checkpoint, const fs::path& corpus_dir, const std::string& id,
                   const std::string& centers, fs::path out) {
  LoadedCheckpoint ck = load_checkpoint(checkpoint);
  const Corpus corpus = load_corpus(corpus_dir);
  const auto idx = parse_index_list(centers);
  const GraphReport r = dump_graphs(ck.model, ck.cfg.train, find_sample(corpus, id), idx);
  if (out.empty()) out = checkpoint / "graphs" / id;
  write_graph_report(out, r);
  for (const auto& c : r.centers) {
    std::cout << "center " << c.center << " (gaze " << format_double(c.gaze_value) << "): eliminated "
              << c.eliminated.size() << ", retained " << c.retained.size() << ", added " << c.added.size() << "\n";
  }
  std::cout << "graphs and report in " << out << "\n";
  return 0;
}

int cmd_shortcut(const fs::path& spec, const std::string& seeds, const std::string& out, bool quiet) {
  const ShortcutSetup setup = parse_shortcut_setup(slurp(spec));
  const auto seed_list = parse_uint_list("seeds", seeds);
  ArmProgressFn progress;
  if (!quiet) {
    progress = [](std::uint64_t seed, const std::string& arm, const EpochLog& e) {
      std::cerr << "seed=" << seed << " arm=" << arm << " " << format_epoch(e) << "\n";
    };
  }
  const ShortcutReport r = shortcut_experiment(setup, seed_list, progress);
  const std::string json = to_json(r);
  if (!out.empty()) std::ofstream(out, std::ios::trunc) << json << "\n";
  std::cout << json << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double tol) {
  bool ok = true;
  for (const auto& r : run_gradcheck_suite(seed, 1e-6, tol)) {
    std::cout << (r.passed ? "ok   " : "FAIL ") << r.name << "  max_rel_error=" << r.max_rel_error << " ("
              << r.worst_tensor << ", " << r.entries << " entries)\n";
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int cmd_knn_bench(std::size_t n, std::size_t k, std::size_t channels, int reps) {
  Rng rng(7);
  std::vector<double> feats(n * channels), gaze(n);
  for (double& v : feats) v = rng.normal();
  for (double& v : gaze) v = rng.uniform();
  std::vector<std::size_t> a(n * k), b(n * k);
  auto time = [&](auto&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    for (int r = 0; r < reps; ++r) fn();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / reps;
  };
  const double ts = time([&] { kernels::serial::knn_select(feats, n, channels, gaze, 3.0, k, a); });
  const double tp = time([&] { kernels::omp::knn_select(feats, n, channels, gaze, 3.0, k, b); });
  std::cout << "n=" << n << " k=" << k << " channels=" << channels << " threads=" << kernels::num_threads() << "\n"
            << "serial " << ts << " ms, openmp " << tp << " ms, identical=" << (a == b ? "yes" : "no") << "\n";
  return a == b ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaze-steered graph classifier toolkit"};
  app.require_subcommand(1);

  std::string spec, out, corpus, config, checkpoint, split = "test", sample, centers, seeds = "1,2,3,4,5",
                                                     predictions;
  bool quiet = false;
  std::uint64_t seed = 0;
  double tol = 1e-5;
  std::size_t n = 256, k = 9, channels = 48;
  int reps = 5;

  auto* synth = app.add_subcommand("synth-data", "Generate a synthetic corpus");
  synth->add_option("--spec", spec, "Corpus spec (key=value)")->required();
  synth->add_option("--out", out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train a model");
  tr->add_option("--corpus", corpus)->required();
  tr->add_option("--config", config, "Run config (key=value)")->required();
  tr->add_option("--out", out)->required();
  tr->add_flag("--quiet", quiet);

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--corpus", corpus)->required();
  ev->add_option("--split", split);
  ev->add_option("--predictions", predictions, "Write per-sample predictions (JSON lines)");

  auto* att = app.add_subcommand("export-attention", "Grad-CAM heatmap for one sample");
  att->add_option("--checkpoint", checkpoint)->required();
  att->add_option("--corpus", corpus)->required();
  att->add_option("--sample", sample)->required();
  att->add_option("--out", out);

  auto* dg = app.add_subcommand("dump-graph", "Feature, gaze and fused graphs for chosen centers");
  dg->add_option("--checkpoint", checkpoint)->required();
  dg->add_option("--corpus", corpus)->required();
  dg->add_option("--sample", sample)->required();
  dg->add_option("--centers", centers)->required();
  dg->add_option("--out", out);

  auto* sc = app.add_subcommand("shortcut-exp", "Gaze vs no-gaze arms on a shortcut corpus");
  sc->add_option("--spec", spec)->required();
  sc->add_option("--seeds", seeds);
  sc->add_option("--out", out, "Also write the JSON report here");
  sc->add_flag("--quiet", quiet);

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  gc->add_option("--seed", seed);
  gc->add_option("--tol", tol);

  auto* kb = app.add_subcommand("knn-bench", "Serial vs OpenMP KNN timing");
  kb->add_option("--n", n);
  kb->add_option("--k", k);
  kb->add_option("--channels", channels);
  kb->add_option("--reps", reps);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(spec, out);
    if (*tr) return cmd_train(corpus, config, out, quiet);
    if (*ev) return cmd_eval(checkpoint, corpus, split, predictions);
    if (*att) return cmd_attention(checkpoint, corpus, sample, out);
    if (*dg) return cmd_dump_graph(checkpoint, corpus, sample, centers, out);
    if (*sc) return cmd_shortcut(spec, seeds, out, quiet);
    if (*gc) return cmd_gradcheck(seed, tol);
    if (*kb) return cmd_knn_bench(n, k, channels, reps);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
