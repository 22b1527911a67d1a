#pragma once

// End-to-end orchestration shared by the CLI and the closed-loop tests:
// synthetic dataset generation, shape-space fitting, training, inference,
// and evaluation, with all file formats (manifest, predictions, metrics)
// in one place. Angles are degrees in files, radians in memory.

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dmnt/config.hpp"
#include "dmnt/image.hpp"
#include "dmnt/inference.hpp"
#include "dmnt/metrics.hpp"
#include "dmnt/model_io.hpp"
#include "dmnt/obj_io.hpp"
#include "dmnt/synth.hpp"
#include "dmnt/training.hpp"

namespace dmnt {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Formatting helpers: fixed formatting so outputs are byte-stable.

namespace detail {

inline std::string fmt_real(real x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", double(x));
  return buf;
}

inline std::map<std::string, std::string> parse_fields(const std::string& line) {
  std::map<std::string, std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) {
    auto eq = tok.find('=');
    check(eq != std::string::npos, "record: malformed field '" + tok + "'");
    out[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return out;
}

inline real deg2rad(real d) { return d * kPi / 180; }
inline real rad2deg(real r) { return r * 180 / kPi; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Manifest

struct ManifestRecord {
  std::string image;
  int class_id = 0;
  CameraPose pose;  // radians in memory
  int latent = 0;
  std::string visible_mask, amodal_mask;
  int occlusion = 0;
};

inline void write_manifest(const std::string& path, const std::vector<ManifestRecord>& recs,
                           uint64_t config_hash, uint64_t seed) {
  std::ofstream out(path);
  check(out.good(), "write_manifest: cannot open " + path);
  out << "# dmnt manifest v1 config_hash=" << config_hash << " seed=" << seed << "\n";
  for (const auto& r : recs) {
    out << "image=" << r.image << " class=" << r.class_id
        << " azimuth_deg=" << detail::fmt_real(detail::rad2deg(r.pose.azimuth))
        << " elevation_deg=" << detail::fmt_real(detail::rad2deg(r.pose.elevation))
        << " theta_deg=" << detail::fmt_real(detail::rad2deg(r.pose.theta))
        << " distance=" << detail::fmt_real(r.pose.distance) << " latent=" << r.latent
        << " visible_mask=" << r.visible_mask << " amodal_mask=" << r.amodal_mask
        << " occlusion=" << r.occlusion << "\n";
  }
  check(out.good(), "write_manifest: write failed");
}

inline std::vector<ManifestRecord> read_manifest(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "read_manifest: cannot open " + path);
  std::vector<ManifestRecord> recs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto f = detail::parse_fields(line);
    ManifestRecord r;
    r.image = f.at("image");
    r.class_id = std::stoi(f.at("class"));
    r.pose.azimuth = detail::deg2rad(real(std::stod(f.at("azimuth_deg"))));
    r.pose.elevation = detail::deg2rad(real(std::stod(f.at("elevation_deg"))));
    r.pose.theta = detail::deg2rad(real(std::stod(f.at("theta_deg"))));
    r.pose.distance = real(std::stod(f.at("distance")));
    r.latent = std::stoi(f.at("latent"));
    if (f.count("visible_mask")) r.visible_mask = f.at("visible_mask");
    if (f.count("amodal_mask")) r.amodal_mask = f.at("amodal_mask");
    if (f.count("occlusion")) r.occlusion = std::stoi(f.at("occlusion"));
    recs.push_back(std::move(r));
  }
  return recs;
}

// ---------------------------------------------------------------------------
// Predictions

struct PredictionRecord {
  std::string image;
  int class_id = 0;
  CameraPose pose;
  real loss = 0;
  std::vector<real> class_losses;
  std::string visible_mask, amodal_mask, mesh;
};

inline void write_predictions(const std::string& path,
                              const std::vector<PredictionRecord>& preds,
                              uint64_t config_hash, uint64_t seed) {
  std::ofstream out(path);
  check(out.good(), "write_predictions: cannot open " + path);
  out << "# dmnt predictions v1 config_hash=" << config_hash << " seed=" << seed << "\n";
  for (const auto& p : preds) {
    Mat3 R = pose_to_extrinsics(p.pose).R;
    out << "image=" << p.image << " class=" << p.class_id
        << " azimuth_deg=" << detail::fmt_real(detail::rad2deg(p.pose.azimuth))
        << " elevation_deg=" << detail::fmt_real(detail::rad2deg(p.pose.elevation))
        << " theta_deg=" << detail::fmt_real(detail::rad2deg(p.pose.theta))
        << " distance=" << detail::fmt_real(p.pose.distance)
        << " loss=" << detail::fmt_real(p.loss);
    out << " losses=";
    for (size_t i = 0; i < p.class_losses.size(); ++i)
      out << (i ? "," : "") << detail::fmt_real(p.class_losses[i]);
    out << " R=";
    for (int i = 0; i < 9; ++i)
      out << (i ? "," : "") << detail::fmt_real(R.m[size_t(i)]);
    if (!p.visible_mask.empty()) out << " visible_mask=" << p.visible_mask;
    if (!p.amodal_mask.empty()) out << " amodal_mask=" << p.amodal_mask;
    if (!p.mesh.empty()) out << " mesh=" << p.mesh;
    out << "\n";
  }
  check(out.good(), "write_predictions: write failed");
}

inline std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path);
  check(in.good(), "read_predictions: cannot open " + path);
  std::vector<PredictionRecord> preds;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto f = detail::parse_fields(line);
    PredictionRecord p;
    p.image = f.at("image");
    p.class_id = std::stoi(f.at("class"));
    p.pose.azimuth = detail::deg2rad(real(std::stod(f.at("azimuth_deg"))));
    p.pose.elevation = detail::deg2rad(real(std::stod(f.at("elevation_deg"))));
    p.pose.theta = detail::deg2rad(real(std::stod(f.at("theta_deg"))));
    p.pose.distance = real(std::stod(f.at("distance")));
    p.loss = real(std::stod(f.at("loss")));
    if (f.count("losses")) {
      std::istringstream ls(f.at("losses"));
      std::string tok;
      while (std::getline(ls, tok, ',')) p.class_losses.push_back(real(std::stod(tok)));
    }
    if (f.count("visible_mask")) p.visible_mask = f.at("visible_mask");
    if (f.count("amodal_mask")) p.amodal_mask = f.at("amodal_mask");
    if (f.count("mesh")) p.mesh = f.at("mesh");
    preds.push_back(std::move(p));
  }
  return preds;
}

// ---------------------------------------------------------------------------
// Pipeline configuration (desk-scale defaults; every knob is config-exposed)

struct PipelineConfig {
  uint64_t seed = 0;
  SynthConfig synth;

  int train_per_class = 6;   // images per class for training
  int eval_per_class = 4;    // images per class for evaluation
  int occlusion_level = 0;

  // model dimensions
  int q = 64;
  int feature_dim = 32;
  int bins = 7;
  real temp = 5;
  real sigma = 1;
  real momentum = real(0.9);
  int bg_capacity = 512;
  int extractor_hidden = 24;

  FitConfig fit;
  int epochs = 30;
  real lr = real(1e-3);
  real contrastive_temp = real(0.07);
  SamplerConfig sampler;

  SearchGrid grid;
  OptimizeConfig opt;

  PipelineConfig() {
    // desk-scale sampler / fit defaults (paper-scale values are the struct
    // defaults of the respective types)
    sampler.positives = 128;
    sampler.negatives = 256;
    sampler.class_negatives = 64;
    sampler.background_negatives = 64;
    fit.steps = 250;
    fit.hidden = {32, 32};
    grid.distance = 5;
    opt.steps = 60;
    opt.restarts = 3;
  }

  uint64_t hash() const {
    Config c;
    c.set("seed", std::to_string(seed));
    c.set("width", std::to_string(synth.width));
    c.set("classes", std::to_string(synth.classes));
    c.set("exemplars", std::to_string(synth.exemplars_per_class));
    c.set("q", std::to_string(q));
    c.set("d", std::to_string(feature_dim));
    c.set("epochs", std::to_string(epochs));
    c.set("occlusion", std::to_string(occlusion_level));
    return c.hash();
  }
};

// Keys accepted in config files / env overrides, mapped onto PipelineConfig.
inline const std::set<std::string>& pipeline_config_keys() {
  static const std::set<std::string> keys = {
      "seed", "width", "height", "classes", "exemplars_per_class", "template_level",
      "train_per_class", "eval_per_class", "occlusion_level", "q", "feature_dim",
      "bins", "temp", "sigma", "momentum", "bg_capacity", "extractor_hidden",
      "fit_steps", "fit_lr", "lambda_lap", "lambda_n", "max_disp", "epochs", "lr",
      "contrastive_temp", "positives", "negatives", "tau", "class_negatives",
      "background_negatives", "opt_steps", "opt_lr", "opt_restarts", "grid_distance",
      "focal_per_width"};
  return keys;
}

inline PipelineConfig pipeline_config_from(const Config& c) {
  c.validate(pipeline_config_keys());
  PipelineConfig p;
  p.seed = uint64_t(c.get_int("seed", int(p.seed)));
  p.synth.width = c.get_int("width", p.synth.width);
  p.synth.height = c.get_int("height", p.synth.height);
  p.synth.classes = c.get_int("classes", p.synth.classes);
  p.synth.exemplars_per_class = c.get_int("exemplars_per_class", p.synth.exemplars_per_class);
  p.synth.template_level = c.get_int("template_level", p.synth.template_level);
  p.synth.focal_per_width = c.get_real("focal_per_width", p.synth.focal_per_width);
  p.train_per_class = c.get_int("train_per_class", p.train_per_class);
  p.eval_per_class = c.get_int("eval_per_class", p.eval_per_class);
  p.occlusion_level = c.get_int("occlusion_level", p.occlusion_level);
  p.q = c.get_int("q", p.q);
  p.feature_dim = c.get_int("feature_dim", p.feature_dim);
  p.bins = c.get_int("bins", p.bins);
  p.temp = c.get_real("temp", p.temp);
  p.sigma = c.get_real("sigma", p.sigma);
  p.momentum = c.get_real("momentum", p.momentum);
  p.bg_capacity = c.get_int("bg_capacity", p.bg_capacity);
  p.extractor_hidden = c.get_int("extractor_hidden", p.extractor_hidden);
  p.fit.steps = c.get_int("fit_steps", p.fit.steps);
  p.fit.lr = c.get_real("fit_lr", p.fit.lr);
  p.fit.lambda_lap = c.get_real("lambda_lap", p.fit.lambda_lap);
  p.fit.lambda_n = c.get_real("lambda_n", p.fit.lambda_n);
  p.fit.max_disp = c.get_real("max_disp", p.fit.max_disp);
  p.epochs = c.get_int("epochs", p.epochs);
  p.lr = c.get_real("lr", p.lr);
  p.contrastive_temp = c.get_real("contrastive_temp", p.contrastive_temp);
  p.sampler.positives = c.get_int("positives", p.sampler.positives);
  p.sampler.negatives = c.get_int("negatives", p.sampler.negatives);
  p.sampler.tau = c.get_real("tau", p.sampler.tau);
  p.sampler.class_negatives = c.get_int("class_negatives", p.sampler.class_negatives);
  p.sampler.background_negatives = c.get_int("background_negatives", p.sampler.background_negatives);
  p.opt.steps = c.get_int("opt_steps", p.opt.steps);
  p.opt.lr = c.get_real("opt_lr", p.opt.lr);
  p.opt.restarts = c.get_int("opt_restarts", p.opt.restarts);
  p.grid.distance = c.get_real("grid_distance", p.grid.distance);
  return p;
}

// ---------------------------------------------------------------------------
// Stage: synthetic dataset generation

inline std::vector<ManifestRecord> run_synth_gen(const PipelineConfig& cfg,
                                                 const std::string& outdir,
                                                 int per_class, int occlusion_level,
                                                 uint64_t seed, const std::string& tag) {
  fs::create_directories(outdir);
  Rng rng(seed);
  std::vector<ManifestRecord> recs;
  for (int c = 0; c < cfg.synth.classes; ++c)
    for (int i = 0; i < per_class; ++i) {
      int latent = i % cfg.synth.exemplars_per_class;
      SynthScene sc = generate_scene(cfg.synth, c, latent, occlusion_level, rng);
      std::string stem = tag + "_c" + std::to_string(c) + "_i" + std::to_string(i);
      ManifestRecord r;
      r.image = stem + ".png";
      r.visible_mask = stem + "_vis.png";
      r.amodal_mask = stem + "_amodal.png";
      r.class_id = c;
      r.latent = latent;
      r.pose = sc.pose;
      r.occlusion = occlusion_level;
      write_png(outdir + "/" + r.image, tensor_to_u8(sc.image));
      write_png(outdir + "/" + r.visible_mask,
                mask_to_u8(sc.visible, cfg.synth.width, cfg.synth.height));
      write_png(outdir + "/" + r.amodal_mask,
                mask_to_u8(sc.amodal, cfg.synth.width, cfg.synth.height));
      recs.push_back(std::move(r));
    }
  write_manifest(outdir + "/manifest.txt", recs, cfg.hash(), seed);
  return recs;
}

// ---------------------------------------------------------------------------
// Stage: shape-space fitting from the procedural exemplars

inline std::vector<ShapeSpace> run_fit_shapes(const PipelineConfig& cfg,
                                              std::vector<FitResult>* results = nullptr) {
  Mesh tmpl = build_template(cfg.synth.template_level);
  std::vector<ShapeSpace> shapes;
  for (int c = 0; c < cfg.synth.classes; ++c) {
    std::vector<Mesh> exemplars;
    for (int k = 0; k < cfg.synth.exemplars_per_class; ++k)
      exemplars.push_back(make_exemplar(c, k, cfg.synth.template_level));
    FitConfig fc = cfg.fit;
    fc.seed = cfg.seed + uint64_t(c) * 7919;
    FitResult fr;
    shapes.push_back(fit_shape_space(exemplars, tmpl, fc, &fr));
    if (results) results->push_back(std::move(fr));
  }
  return shapes;
}

inline Model build_model(const PipelineConfig& cfg, std::vector<ShapeSpace> shapes) {
  Model m;
  m.shapes = std::move(shapes);
  m.momentum = cfg.momentum;
  m.extractor.cfg.hidden = cfg.extractor_hidden;
  m.extractor.cfg.d = cfg.feature_dim;
  Rng rng(cfg.seed + 101);
  m.extractor.init(rng);
  for (int c = 0; c < int(m.shapes.size()); ++c) {
    NeuralTextureBank bank;
    bank.q = cfg.q;
    bank.d = cfg.feature_dim;
    bank.bins = make_viewing_bins(cfg.bins);
    bank.temp = cfg.temp;
    bank.sigma = cfg.sigma;
    bank.init(rng);
    m.banks.push_back(std::move(bank));
  }
  m.background = BackgroundBank(cfg.feature_dim, cfg.bg_capacity);
  return m;
}

// ---------------------------------------------------------------------------
// Stage: training

inline std::vector<TrainSample> load_train_samples(const std::vector<ManifestRecord>& recs,
                                                   const std::string& dir) {
  std::vector<TrainSample> out;
  for (const auto& r : recs) {
    TrainSample s;
    s.image = u8_to_tensor(read_png(dir + "/" + r.image));
    s.class_id = r.class_id;
    s.pose = r.pose;
    s.latent = r.latent;
    s.occluder_free = r.occlusion == 0;
    out.push_back(std::move(s));
  }
  return out;
}

struct TrainLog {
  std::vector<EpochMetrics> epochs;
};

inline TrainLog run_train(Model& model, const std::vector<TrainSample>& samples,
                          const PipelineConfig& cfg) {
  TrainConfig tc;
  tc.sampler = cfg.sampler;
  tc.lr = cfg.lr;
  tc.temp = cfg.contrastive_temp;
  tc.intrinsics = cfg.synth.intrinsics();
  TrainerState trainer;
  trainer.init(model, cfg.lr);
  Rng rng(cfg.seed + 2027);
  TrainLog log;
  for (int e = 0; e < cfg.epochs; ++e)
    log.epochs.push_back(train_epoch(samples, model, trainer, tc, rng));
  return log;
}

inline void write_train_log(const std::string& path, const TrainLog& log,
                            uint64_t config_hash, uint64_t seed) {
  std::ofstream out(path);
  check(out.good(), "write_train_log: cannot open " + path);
  out << "# dmnt train v1 config_hash=" << config_hash << " seed=" << seed << "\n";
  out << "epoch,loss,pos_sim,neg_sim,skipped\n";
  for (size_t e = 0; e < log.epochs.size(); ++e) {
    const auto& m = log.epochs[e];
    out << e << "," << detail::fmt_real(m.mean_loss) << ","
        << detail::fmt_real(m.mean_pos_sim) << "," << detail::fmt_real(m.mean_neg_sim)
        << "," << m.skipped << "\n";
  }
}

// ---------------------------------------------------------------------------
// Stage: inference

// Nearest-neighbor upsample of a feature-resolution mask to image resolution.
inline std::vector<uint8_t> upsample_mask(const std::vector<uint8_t>& m, int fw, int fh,
                                          int stride) {
  std::vector<uint8_t> out(size_t(fw) * fh * stride * stride);
  int w = fw * stride;
  for (int y = 0; y < fh * stride; ++y)
    for (int x = 0; x < w; ++x)
      out[size_t(int64_t(y) * w + x)] = m[size_t(int64_t(y / stride) * fw + x / stride)];
  return out;
}

struct InferOutput {
  PredictionRecord record;
  SegmentationResult seg;        // feature resolution
  std::vector<uint8_t> visible_img, amodal_img;  // image resolution
  Mesh colored_mesh;
};

inline InferOutput infer_image(const Tensor& image, const Model& model,
                               const PipelineConfig& cfg,
                               const std::vector<int>* class_subset = nullptr) {
  Intrinsics img_in = cfg.synth.intrinsics();
  Intrinsics fin = feature_intrinsics(img_in, model.extractor.cfg.stride);
  Tensor F = model.extractor.extract(hwc_to_chw(image));

  // restricted classify: run init+optimize per allowed class
  std::vector<int> classes;
  if (class_subset && !class_subset->empty()) classes = *class_subset;
  else for (int c = 0; c < model.class_count(); ++c) classes.push_back(c);

  InferOutput out;
  out.record.class_losses.assign(size_t(model.class_count()),
                                 std::numeric_limits<real>::max());
  int best_c = -1;
  InferenceState best;
  for (int c : classes) {
    OptimizeResult o = optimize_multistart(F, model.shapes[size_t(c)], model.banks[size_t(c)],
                                           model.background, fin, cfg.grid, cfg.opt);
    out.record.class_losses[size_t(c)] = o.state.loss;
    if (best_c < 0 || o.state.loss < best.loss) {
      best_c = c;
      best = o.state;
    }
  }
  check(best_c >= 0, "infer_image: no classes evaluated");

  out.record.class_id = best_c;
  out.record.pose = best.pose;
  out.record.loss = best.loss;

  // segmentation and masks at the winning state
  SegmentationResult seg;
  reconstruction_loss(F, best, model.shapes[size_t(best_c)], model.banks[size_t(best_c)],
                      model.background, fin, nullptr, &seg);
  out.seg = seg;
  int stride = model.extractor.cfg.stride;
  out.visible_img = upsample_mask(seg.visible, fin.width, fin.height, stride);
  // amodal at image resolution: rasterize the optimized mesh full-res
  Mesh mesh = instance_mesh(model.shapes[size_t(best_c)], best);
  FragmentMap full = rasterize(mesh, best.pose, img_in);
  out.amodal_img.assign(full.face.size(), 0);
  for (size_t i = 0; i < full.face.size(); ++i) out.amodal_img[i] = full.face[i] >= 0;
  // visible mask constrained to the amodal support
  for (size_t i = 0; i < out.visible_img.size(); ++i)
    out.visible_img[i] = out.visible_img[i] && out.amodal_img[i];

  FragmentMap ffrag = rasterize(mesh, best.pose, fin);
  auto labels = vertex_visibility(mesh, best.pose, fin, ffrag, seg);
  out.colored_mesh = mesh;
  color_mesh_by_visibility(out.colored_mesh, labels);
  return out;
}

inline std::vector<PredictionRecord> run_infer(const Model& model,
                                               const std::vector<ManifestRecord>& recs,
                                               const std::string& datadir,
                                               const std::string& outdir,
                                               const PipelineConfig& cfg,
                                               const std::vector<int>* class_subset = nullptr) {
  fs::create_directories(outdir);
  std::vector<PredictionRecord> preds;
  for (const auto& r : recs) {
    Tensor img = u8_to_tensor(read_png(datadir + "/" + r.image));
    InferOutput io = infer_image(img, model, cfg, class_subset);
    std::string stem = fs::path(r.image).stem().string();
    io.record.image = r.image;
    io.record.visible_mask = stem + "_pred_vis.png";
    io.record.amodal_mask = stem + "_pred_amodal.png";
    io.record.mesh = stem + "_pred.obj";
    write_png(outdir + "/" + io.record.visible_mask,
              mask_to_u8(io.visible_img, cfg.synth.width, cfg.synth.height));
    write_png(outdir + "/" + io.record.amodal_mask,
              mask_to_u8(io.amodal_img, cfg.synth.width, cfg.synth.height));
    write_obj(outdir + "/" + io.record.mesh, io.colored_mesh);
    preds.push_back(io.record);
  }
  write_predictions(outdir + "/predictions.txt", preds, cfg.hash(), cfg.seed);
  return preds;
}

// ---------------------------------------------------------------------------
// Stage: evaluation

inline std::vector<EvalSample> match_predictions(const std::vector<ManifestRecord>& recs,
                                                 const std::vector<PredictionRecord>& preds,
                                                 const std::string& datadir,
                                                 const std::string& preddir,
                                                 std::vector<std::string>* missing = nullptr) {
  std::map<std::string, const PredictionRecord*> by_image;
  for (const auto& p : preds) by_image[p.image] = &p;
  std::vector<EvalSample> out;
  for (const auto& r : recs) {
    EvalSample e;
    e.occlusion_level = r.occlusion;
    auto it = by_image.find(r.image);
    if (it == by_image.end()) {
      e.valid = false;
      if (missing) missing->push_back(r.image);
      out.push_back(e);
      continue;
    }
    const PredictionRecord& p = *it->second;
    e.pose_err = pose_error(pose_to_extrinsics(p.pose).R, pose_to_extrinsics(r.pose).R);
    e.class_correct = p.class_id == r.class_id;
    if (!r.amodal_mask.empty() && !p.amodal_mask.empty()) {
      auto gt = u8_to_mask(read_png(datadir + "/" + r.amodal_mask));
      auto pr = u8_to_mask(read_png(preddir + "/" + p.amodal_mask));
      e.amodal_iou = mask_iou(gt, pr);
    }
    if (!r.visible_mask.empty() && !p.visible_mask.empty()) {
      auto gt = u8_to_mask(read_png(datadir + "/" + r.visible_mask));
      auto pr = u8_to_mask(read_png(preddir + "/" + p.visible_mask));
      e.visible_iou = mask_iou(gt, pr);
    }
    out.push_back(e);
  }
  return out;
}

inline void write_metrics_csv(const std::string& path, const MetricReport& rep,
                              uint64_t config_hash, uint64_t seed) {
  std::ofstream out(path);
  check(out.good(), "write_metrics_csv: cannot open " + path);
  out << "# dmnt metrics v1 config_hash=" << config_hash << " seed=" << seed << "\n";
  out << "bucket,count,acc_pi6,acc_pi18,median_pose_err,amodal_iou,visible_iou,top1\n";
  auto row = [&](const std::string& name, const MetricBucket& b) {
    out << name << "," << b.count << "," << detail::fmt_real(b.acc_pi6) << ","
        << detail::fmt_real(b.acc_pi18) << "," << detail::fmt_real(b.median_pose_error)
        << "," << detail::fmt_real(b.amodal_iou) << "," << detail::fmt_real(b.visible_iou)
        << "," << detail::fmt_real(b.top1) << "\n";
  };
  row("overall", rep.overall);
  for (const auto& [lvl, b] : rep.per_level) row("L" + std::to_string(lvl), b);
}

}  // namespace dmnt
