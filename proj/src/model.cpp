#include "gdvig/model.hpp"

#include <fstream>
#include <sstream>

#include "gdvig/error.hpp"

namespace gdvig {

GmgConfig gmg_config(const ModelConfig& m) {
  return GmgConfig{m.gmg_variant, m.encoder_depth, m.base_channels, m.k, m.knn_normalize};
}

GdcConfig gdc_config(const ModelConfig& m) {
  GdcConfig c;
  c.num_classes = m.num_classes;
  c.k = m.k;
  c.lambda_g = m.lambda_g;
  c.knn_normalize = m.knn_normalize;
  c.stages.clear();
  std::size_t ch = m.base_channels;
  for (auto d : m.gdc_depths) {
    c.stages.push_back(GdcStage{d, ch});
    ch *= 2;
  }
  return c;
}

GdVig GdVig::create(const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  GdVig m;
  m.cfg = cfg;
  Rng rng(derive_seed(seed, 0x6d6f64656cULL));
  if (cfg.share_stem) {
    const StemParams stem = StemParams::create(m.params, "stem", cfg.base_channels, rng);
    m.gmg = GmgParams::create(m.params, gmg_config(cfg), rng, &stem);
    m.gdc = GdcParams::create(m.params, gdc_config(cfg), rng, &stem);
  } else {
    m.gmg = GmgParams::create(m.params, gmg_config(cfg), rng);
    m.gdc = GdcParams::create(m.params, gdc_config(cfg), rng);
  }
  return m;
}

ForwardResult forward(const Context& ctx, const GdVig& model, Var image, const ForwardOptions& opts) {
  ForwardResult r;
  const StemOutput s = stem(ctx, image, model.gdc.stem);
  if (opts.use_gmg) {
    r.gaze = model.cfg.share_stem ? gmg_forward_from_stem(ctx, image, s, model.gmg)
                                  : gmg_forward(ctx, image, model.gmg);
  }
  std::optional<Tensor> steer;
  if (opts.use_gmg) steer = opts.steer_gaze ? *opts.steer_gaze : r.gaze->value();
  Var gdc_in = opts.detach_gmg && model.cfg.share_stem ? detach(s.quarter) : s.quarter;
  r.gdc = gdc_forward_from_stem(ctx, gdc_in, steer, model.gdc);
  return r;
}

JointLoss joint_loss(Var gm, Var gm_hat, Var logits, std::span<const int> labels, double lambda_c) {
  JointLoss l;
  l.gmg = gmg_loss(gm, gm_hat);
  l.gdc = cross_entropy(logits, labels);
  l.total = add(*l.gmg, scale(l.gdc, lambda_c));
  return l;
}

JointLoss classifier_loss(Var logits, std::span<const int> labels, double lambda_c) {
  JointLoss l;
  l.gdc = cross_entropy(logits, labels);
  l.total = scale(l.gdc, lambda_c);
  return l;
}

void save_checkpoint(const std::filesystem::path& dir, const GdVig& model, const RunConfig& cfg) {
  std::filesystem::create_directories(dir);
  model.params.save(dir);
  std::ofstream out(dir / "config.txt", std::ios::trunc);
  out << to_text(cfg);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  RunConfig cfg = load_run_config(dir / "config.txt");
  GdVig model = GdVig::create(cfg.model, cfg.train.seed);
  model.params.load(dir);
  return LoadedCheckpoint{cfg, std::move(model)};
}

}  // namespace gdvig
