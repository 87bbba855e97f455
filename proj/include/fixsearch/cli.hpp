#ifndef FIXSEARCH_CLI_HPP
#define FIXSEARCH_CLI_HPP

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixsearch/common.hpp"
#include "fixsearch/csv.hpp"
#include "fixsearch/fdm.hpp"
#include "fixsearch/ingest.hpp"
#include "fixsearch/metrics.hpp"
#include "fixsearch/model.hpp"
#include "fixsearch/plot.hpp"
#include "fixsearch/segeval.hpp"

namespace fixsearch::cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Run manifest: every subcommand emits exactly one, recording the command,
// config snapshot, seed, input digests, and output paths. Reruns with the
// same manifest inputs produce byte-identical outputs.
// ---------------------------------------------------------------------------

class RunManifest {
 public:
  RunManifest(std::string command, std::uint64_t seed) : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["toolkit_version"] = kVersion;
    doc_["seed"] = seed;
    doc_["inputs"] = nlohmann::json::array();
    doc_["outputs"] = nlohmann::json::array();
  }

  void set_config(nlohmann::json cfg) { doc_["config"] = std::move(cfg); }

  void add_input(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    doc_["inputs"].push_back({{"path", path.string()}, {"digest", fnv1a_hex(bytes)}});
  }
  void add_input(const fs::path& path, const std::string& text) {
    doc_["inputs"].push_back({{"path", path.string()}, {"digest", fnv1a_hex(text.data(), text.size())}});
  }

  void write_output(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    atomic_write_file(path, bytes);
    doc_["outputs"].push_back(path.string());
  }
  void write_output(const fs::path& path, const std::string& text) {
    atomic_write_file(path, text);
    doc_["outputs"].push_back(path.string());
  }

  void save(const fs::path& path) {
    doc_["wall_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    atomic_write_file(path, doc_.dump(2) + "\n");
  }

 private:
  nlohmann::json doc_;
  std::chrono::steady_clock::time_point start_;
};

inline std::string sanitize_name(const std::string& s) {
  std::string out;
  for (char c : s)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.') ? c : '_';
  return out;
}

// ---------------------------------------------------------------------------
// Toy-experiment config file (versioned JSON; flags override file values)
// ---------------------------------------------------------------------------

struct ToyConfig {
  model::ModelConfig model;
  int n_train = 200;
  int n_valid = 50;
  int n_test = 50;
  double kl_epsilon = 1e-7;

  static ToyConfig from_json(const nlohmann::json& j) {
    ToyConfig cfg;
    if (j.value("schema_version", 1) != 1)
      throw ConfigError("config: unsupported schema_version " +
                        std::to_string(j.value("schema_version", 1)));
    if (j.contains("model")) {
      const auto& m = j["model"];
      cfg.model.base_channels = m.value("base_channels", cfg.model.base_channels);
      cfg.model.feature_channels = m.value("feature_channels", cfg.model.feature_channels);
      cfg.model.image_h = m.value("image_h", cfg.model.image_h);
      cfg.model.image_w = m.value("image_w", cfg.model.image_w);
      cfg.model.target_h = m.value("target_h", cfg.model.target_h);
      cfg.model.target_w = m.value("target_w", cfg.model.target_w);
      cfg.model.one_stream = m.value("one_stream", cfg.model.one_stream);
      cfg.model.decoder_smoothing = m.value("decoder_smoothing", cfg.model.decoder_smoothing);
      if (m.contains("aspp_rates")) {
        const auto& r = m["aspp_rates"];
        if (r.size() != 3) throw ConfigError("config: aspp_rates needs exactly 3 entries");
        for (int i = 0; i < 3; ++i) cfg.model.aspp_rates[static_cast<std::size_t>(i)] = r[i].get<int>();
      }
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      cfg.model.epochs = t.value("epochs", cfg.model.epochs);
      cfg.model.lr = t.value("lr", cfg.model.lr);
      cfg.model.seed = t.value("seed", cfg.model.seed);
      cfg.n_train = t.value("n_train", cfg.n_train);
      cfg.n_valid = t.value("n_valid", cfg.n_valid);
      cfg.n_test = t.value("n_test", cfg.n_test);
      cfg.kl_epsilon = t.value("kl_epsilon", cfg.kl_epsilon);
    }
    cfg.model.validate();
    return cfg;
  }

  nlohmann::json to_json() const {
    return {{"schema_version", 1},
            {"model",
             {{"base_channels", model.base_channels},
              {"feature_channels", model.feature_channels},
              {"image_h", model.image_h},
              {"image_w", model.image_w},
              {"target_h", model.target_h},
              {"target_w", model.target_w},
              {"aspp_rates", model.aspp_rates},
              {"one_stream", model.one_stream},
              {"decoder_smoothing", model.decoder_smoothing}}},
            {"train",
             {{"epochs", model.epochs},
              {"lr", model.lr},
              {"seed", model.seed},
              {"n_train", n_train},
              {"n_valid", n_valid},
              {"n_test", n_test},
              {"kl_epsilon", kl_epsilon}}}};
  }

  static ToyConfig load(const std::optional<std::string>& path) {
    if (!path) return ToyConfig{};
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_file_text(*path));
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config " + *path + ": " + e.what());
    }
    return from_json(j);
  }

  std::uint64_t synth_seed(int stream) const { return mix_seed(model.seed, 0xda7a + stream); }
};

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestOptions {
  std::string fixations_path;
  std::string out_path;
  int width = 512;
  int height = 320;
  int frame_width = 1680;
  int frame_height = 1050;
  bool augment = false;
  std::optional<std::string> split_mode;  // "paper" | "random"
  std::string split_dir;
  int test_per_category = 18;
  std::uint64_t seed = 0;
};

inline int cmd_ingest(const IngestOptions& opt) {
  RunManifest manifest("ingest", opt.seed);
  const std::string raw = read_file_text(opt.fixations_path);
  manifest.add_input(opt.fixations_path, raw);

  auto trials = ingest::parse_fixation_dataset(raw, {opt.frame_width, opt.frame_height});
  ingest::FilterStats stats;
  trials = ingest::filter_trials(trials, &stats);
  for (auto& t : trials) t = ingest::rescale_trial(t, {opt.width, opt.height});
  auto pairs = ingest::group_pairs(trials);
  log_info("ingest: " + std::to_string(pairs.size()) + " task-image pairs from " +
           std::to_string(trials.size()) + " trials (dropped " +
           std::to_string(stats.dropped_incorrect) + " incorrect, " +
           std::to_string(stats.dropped_empty) + " emptied)");

  if (opt.split_mode) {
    ingest::SplitOptions sopt;
    sopt.mode = *opt.split_mode == "random" ? ingest::SplitMode::Random : ingest::SplitMode::Paper;
    sopt.seed = opt.seed;
    sopt.test_per_category = opt.test_per_category;
    auto split = ingest::build_split(pairs, sopt);
    auto emit = [&](const char* name, std::vector<ingest::TaskImagePair> part, bool augment) {
      if (augment) {
        const std::size_t n = part.size();
        for (std::size_t i = 0; i < n; ++i)
          part.push_back(ingest::augment_hflip(part[i], opt.width));
      }
      manifest.write_output(fs::path(opt.split_dir) / (std::string(name) + ".ndjson"),
                            ingest::pairs_to_manifest(part));
    };
    emit("train", split.train, opt.augment);  // augmented pairs never leak past train
    emit("valid", split.valid, false);
    emit("test", split.test, false);
  }

  if (opt.augment && !opt.split_mode) {
    const std::size_t n = pairs.size();
    for (std::size_t i = 0; i < n; ++i) pairs.push_back(ingest::augment_hflip(pairs[i], opt.width));
  }
  manifest.write_output(opt.out_path, ingest::pairs_to_manifest(pairs));
  manifest.save(fs::path(opt.out_path).string() + ".manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// fdm
// ---------------------------------------------------------------------------

struct FdmOptions {
  std::string manifest_path;
  std::string out_dir;
  int width = 512;
  int height = 320;
  double sigma = 11.0;
  double truncation_sigmas = 3.0;
  bool heatmaps = false;
  int jobs = 1;
  std::uint64_t seed = 0;
};

inline int cmd_fdm(const FdmOptions& opt) {
  RunManifest manifest("fdm", opt.seed);
  const std::string text = read_file_text(opt.manifest_path);
  manifest.add_input(opt.manifest_path, text);
  auto entries = ingest::parse_manifest(text, {opt.width, opt.height});

  // Group trials by (image, category, augmented); each group yields one pair
  // of maps built from all observers' fixations.
  std::map<std::string, std::vector<fdm::PixelFixation>> groups;
  for (const auto& [trial, augmented] : entries) {
    std::string key = sanitize_name(trial.image_id) + "__" + sanitize_name(trial.category) +
                      (augmented ? "__flip" : "");
    auto fix = fdm::pixel_fixations(trial);
    auto& bucket = groups[key];
    bucket.insert(bucket.end(), fix.begin(), fix.end());
  }

  std::vector<std::pair<std::string, std::vector<fdm::PixelFixation>>> items(groups.begin(),
                                                                             groups.end());
  struct Built {
    std::vector<std::uint8_t> density, binary, heatmap;
  };
  std::vector<Built> built(items.size());
  parallel_for(items.size(), opt.jobs, [&](std::size_t i) {
    auto density =
        fdm::build_density_map(items[i].second, opt.width, opt.height, opt.sigma, opt.truncation_sigmas);
    auto binary = fdm::build_binary_map(items[i].second, opt.width, opt.height);
    built[i].density = fdm::serialize_map(density);
    built[i].binary = fdm::serialize_map(binary);
    if (opt.heatmaps) built[i].heatmap = fdm::render_heatmap(density);
  });
  for (std::size_t i = 0; i < items.size(); ++i) {
    const fs::path base = fs::path(opt.out_dir) / items[i].first;
    manifest.write_output(base.string() + ".density.fdm1", built[i].density);
    manifest.write_output(base.string() + ".binary.fdm1", built[i].binary);
    if (opt.heatmaps) manifest.write_output(base.string() + ".heatmap.png", built[i].heatmap);
  }
  manifest.save(fs::path(opt.out_dir) / "run_manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// eval-saliency
// ---------------------------------------------------------------------------

struct EvalSaliencyOptions {
  std::string pred_dir;
  std::string gt_dir;
  std::string out_path;
  metrics::EvalConfig cfg;
  int jobs = 1;
};

inline int cmd_eval_saliency(const EvalSaliencyOptions& opt) {
  RunManifest manifest("eval-saliency", opt.cfg.seed);

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(opt.pred_dir)) {
    const std::string fname = entry.path().filename().string();
    const std::string suffix = ".density.fdm1";
    if (fname.size() > suffix.size() && fname.ends_with(suffix))
      names.push_back(fname.substr(0, fname.size() - suffix.size()));
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw InvalidInputError("eval-saliency: no *.density.fdm1 files in " + opt.pred_dir);

  std::vector<fdm::DensityMap> preds(names.size()), gt_densities(names.size());
  std::vector<fdm::BinaryFixationMap> gt_binaries(names.size());
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto pred_bytes = read_file_bytes(fs::path(opt.pred_dir) / (names[i] + ".density.fdm1"));
    const auto gtd_bytes = read_file_bytes(fs::path(opt.gt_dir) / (names[i] + ".density.fdm1"));
    const auto gtb_bytes = read_file_bytes(fs::path(opt.gt_dir) / (names[i] + ".binary.fdm1"));
    manifest.add_input(fs::path(opt.pred_dir) / (names[i] + ".density.fdm1"), pred_bytes);
    preds[i] = fdm::deserialize_density(pred_bytes);
    gt_densities[i] = fdm::deserialize_density(gtd_bytes);
    gt_binaries[i] = fdm::deserialize_binary(gtb_bytes);
  }

  std::vector<metrics::SaliencyScores> scores(names.size());
  parallel_for(names.size(), opt.jobs, [&](std::size_t i) {
    // Baseline: every other image's blurred fixations, overlayed and
    // normalized. The sAUC negatives come from the next image's fixations.
    metrics::EvalConfig cfg = opt.cfg;
    cfg.seed = mix_seed(opt.cfg.seed, i);
    const fdm::DensityMap baseline =
        names.size() > 1 ? fdm::build_baseline_map(gt_densities, i) : gt_densities[i];
    const auto& other = gt_binaries[(i + 1) % gt_binaries.size()];
    scores[i] = metrics::evaluate_all(preds[i], gt_densities[i], gt_binaries[i], baseline, other, cfg);
  });

  csv::Writer out;
  out.field("image_id").field("category");
  for (const char* m : metrics::kMetricNames) out.field(m);
  out.end_row();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto split = names[i].find("__");
    out.field(split == std::string::npos ? names[i] : names[i].substr(0, split));
    out.field(split == std::string::npos ? "" : names[i].substr(split + 2));
    for (std::size_t m = 0; m < 8; ++m) {
      if (scores[i].values[m]) out.field(*scores[i].values[m]);
      else out.field("");
    }
    out.end_row();
  }
  const auto agg = metrics::aggregate_scores(scores);
  for (const char* row : {"mean", "sd"}) {
    out.field(row).field("");
    for (std::size_t m = 0; m < 8; ++m) {
      const auto& v = std::string(row) == "mean" ? agg.mean[m] : agg.sd[m];
      if (v) out.field(*v);
      else out.field("");
    }
    out.end_row();
  }
  manifest.write_output(opt.out_path, out.str());
  manifest.save(fs::path(opt.out_path).string() + ".manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// train-toy
// ---------------------------------------------------------------------------

struct TrainToyOptions {
  std::optional<std::string> config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};

inline int cmd_train_toy(const TrainToyOptions& opt) {
  ToyConfig cfg = ToyConfig::load(opt.config_path);
  if (opt.seed) cfg.model.seed = *opt.seed;
  if (opt.epochs) cfg.model.epochs = *opt.epochs;
  RunManifest manifest("train-toy", cfg.model.seed);
  manifest.set_config(cfg.to_json());
  if (opt.config_path) manifest.add_input(*opt.config_path, read_file_text(*opt.config_path));

  auto train_set =
      model::generate_synthetic(cfg.synth_seed(0), cfg.n_train, cfg.model.image_h, cfg.model.image_w,
                                cfg.model.target_h, cfg.model.target_w, cfg.model.seed);
  auto valid_set =
      model::generate_synthetic(cfg.synth_seed(1), cfg.n_valid, cfg.model.image_h, cfg.model.image_w,
                                cfg.model.target_h, cfg.model.target_w, cfg.model.seed);
  model::SearchSaliencyModel net(cfg.model);
  model::TrainOptions topt;
  topt.epochs = cfg.model.epochs;
  topt.lr = cfg.model.lr;
  topt.seed = cfg.model.seed;
  topt.kl_epsilon = cfg.kl_epsilon;
  auto report = model::train(net, train_set, valid_set, topt);

  // Final weights drive predict; the best-validation snapshot ships alongside.
  manifest.write_output(fs::path(opt.out_dir) / "checkpoint.nnp1", net.save());
  manifest.write_output(fs::path(opt.out_dir) / "checkpoint.best.nnp1", report.best_checkpoint);
  nlohmann::json rep;
  rep["train_loss"] = report.train_loss;
  rep["valid_loss"] = report.valid_loss;
  rep["best_epoch"] = report.best_epoch;
  rep["wall_seconds"] = report.wall_seconds;
  rep["checkpoint"] = (fs::path(opt.out_dir) / "checkpoint.nnp1").string();
  rep["best_checkpoint"] = (fs::path(opt.out_dir) / "checkpoint.best.nnp1").string();
  manifest.write_output(fs::path(opt.out_dir) / "train_report.json", rep.dump(2) + "\n");

  csv::Writer losses;
  losses.field("epoch").field("train_kl").field("valid_kl");
  losses.end_row();
  for (std::size_t e = 0; e < report.train_loss.size(); ++e) {
    losses.field(static_cast<std::int64_t>(e + 1)).field(report.train_loss[e]).field(report.valid_loss[e]);
    losses.end_row();
  }
  manifest.write_output(fs::path(opt.out_dir) / "losses.csv", losses.str());
  manifest.save(fs::path(opt.out_dir) / "run_manifest.json");

  const double final_kl = report.train_loss.back();
  const double first_kl = report.train_loss.front();
  log_info("train-toy: epoch-1 KL " + format_double(first_kl) + " -> final KL " +
           format_double(final_kl));
  return 0;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

struct PredictOptions {
  std::string checkpoint_path;
  std::optional<std::string> config_path;
  std::string out_dir;
  std::optional<int> count;
  bool heatmaps = false;
  bool write_gt = false;
};

inline int cmd_predict(const PredictOptions& opt) {
  ToyConfig cfg = ToyConfig::load(opt.config_path);
  RunManifest manifest("predict", cfg.model.seed);
  manifest.set_config(cfg.to_json());
  const auto ckpt_bytes = read_file_bytes(opt.checkpoint_path);
  manifest.add_input(opt.checkpoint_path, ckpt_bytes);

  model::SearchSaliencyModel net(cfg.model);
  net.load(ckpt_bytes);
  const int n = opt.count.value_or(cfg.n_test);
  auto test_set =
      model::generate_synthetic(cfg.synth_seed(2), n, cfg.model.image_h, cfg.model.image_w,
                                cfg.model.target_h, cfg.model.target_w, cfg.model.seed);

  csv::Writer hits;
  hits.field("sample").field("category").field("argmax_x").field("argmax_y").field("hit");
  hits.end_row();
  std::size_t hit_count = 0;
  for (std::size_t i = 0; i < test_set.samples.size(); ++i) {
    const auto& s = test_set.samples[i];
    const auto& patch = test_set.target_pools[static_cast<std::size_t>(s.category)][0];
    fdm::DensityMap pred = net.predict(s.image, patch);
    const std::string base = "sample" + std::to_string(i);
    manifest.write_output(fs::path(opt.out_dir) / (base + ".density.fdm1"), fdm::serialize_map(pred));
    if (opt.heatmaps)
      manifest.write_output(fs::path(opt.out_dir) / (base + ".heatmap.png"), fdm::render_heatmap(pred));
    if (opt.write_gt) {
      fdm::DensityMap gt(cfg.model.image_w, cfg.model.image_h);
      gt.values = s.gt.values();
      std::vector<fdm::PixelFixation> points;
      for (auto [x, y] : s.gt_points) points.push_back({x, y});
      manifest.write_output(fs::path(opt.out_dir) / (base + ".gt.density.fdm1"),
                            fdm::serialize_map(gt));
      manifest.write_output(
          fs::path(opt.out_dir) / (base + ".gt.binary.fdm1"),
          fdm::serialize_map(fdm::build_binary_map(points, cfg.model.image_w, cfg.model.image_h)));
    }
    std::size_t arg = 0;
    for (std::size_t k = 1; k < pred.values.size(); ++k)
      if (pred.values[k] > pred.values[arg]) arg = k;
    const int x = static_cast<int>(arg % static_cast<std::size_t>(pred.width));
    const int y = static_cast<int>(arg / static_cast<std::size_t>(pred.width));
    const bool hit = x >= s.target_bbox[0] && x <= s.target_bbox[2] && y >= s.target_bbox[1] &&
                     y <= s.target_bbox[3];
    hit_count += hit ? 1 : 0;
    hits.field(static_cast<std::int64_t>(i))
        .field(static_cast<std::int64_t>(s.category))
        .field(x)
        .field(y)
        .field(static_cast<std::int64_t>(hit));
    hits.end_row();
  }
  hits.field("hit_rate")
      .field("")
      .field("")
      .field("")
      .field(static_cast<double>(hit_count) / static_cast<double>(test_set.samples.size()));
  hits.end_row();
  manifest.write_output(fs::path(opt.out_dir) / "hits.csv", hits.str());
  manifest.save(fs::path(opt.out_dir) / "run_manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// eval-seg
// ---------------------------------------------------------------------------

struct EvalSegOptions {
  std::string gt_path;
  std::string pred_path;
  std::string out_dir;
  double iou = 0.5;
  bool three_class = false;
  double fixation_radius = 0.0;
  std::optional<std::string> manifest_path;  // trials for distraction levels
  int manifest_width = 512;
  int manifest_height = 320;
  std::uint64_t seed = 0;
};

inline int cmd_eval_seg(const EvalSegOptions& opt) {
  RunManifest manifest("eval-seg", opt.seed);
  const std::string gt_text = read_file_text(opt.gt_path);
  const std::string pred_text = read_file_text(opt.pred_path);
  manifest.add_input(opt.gt_path, gt_text);
  manifest.add_input(opt.pred_path, pred_text);

  // Distraction levels come from the annotation file or, when a trial
  // manifest is given, are recomputed from fixations.
  auto gts = segeval::load_coco_instances(gt_text, false, false);
  if (opt.manifest_path) {
    const std::string mtext = read_file_text(*opt.manifest_path);
    manifest.add_input(*opt.manifest_path, mtext);
    auto entries = ingest::parse_manifest(mtext, {opt.manifest_width, opt.manifest_height});
    std::map<std::string, std::vector<ingest::FixationTrial>> by_image;
    for (auto& [trial, augmented] : entries)
      if (!augmented) by_image[trial.image_id].push_back(trial);
    for (auto& img : gts) {
      auto it = by_image.find(img.image_id);
      if (it == by_image.end()) continue;
      for (auto& g : img.gts)
        if (g.label != segeval::ObjLabel::Target)
          g.distraction_level = segeval::distraction_level(g, it->second, opt.fixation_radius);
    }
  }
  if (opt.three_class) {
    for (auto& img : gts)
      for (auto& g : img.gts)
        if (g.label == segeval::ObjLabel::Distractor) {
          if (g.distraction_level < 0)
            throw ValidationError("three-class mode needs distraction levels (annotation field or --manifest)");
          g.label = segeval::classify_distraction(g.distraction_level) == segeval::DistractionClass::Low
                        ? segeval::ObjLabel::LowDistractor
                        : segeval::ObjLabel::HighDistractor;
        }
  }
  auto preds = segeval::load_coco_instances(pred_text, true, opt.three_class);
  auto joined = segeval::join_instances(std::move(gts), std::move(preds));
  const auto result = segeval::evaluate_segmentation(joined, opt.iou, opt.three_class);

  csv::Writer scores;
  scores.field("metric").field("value");
  scores.end_row();
  for (const auto& cat : result.categories) {
    scores.field(std::string("ap50_") + segeval::label_name(cat.label)).field(cat.ap);
    scores.end_row();
    scores.field(std::string("recall50_") + segeval::label_name(cat.label)).field(cat.mean_recall);
    scores.end_row();
  }
  scores.field("map50").field(result.map50);
  scores.end_row();
  scores.field("mar50").field(result.mar50);
  scores.end_row();
  scores.field("f1").field(result.f1);
  scores.end_row();
  for (const auto& label : result.confusion.labels) {
    if (label == segeval::ObjLabel::Background) continue;
    scores.field(std::string("accuracy_") + segeval::label_name(label))
        .field(segeval::class_accuracy(result.confusion, label));
    scores.end_row();
  }
  manifest.write_output(fs::path(opt.out_dir) / "seg_scores.csv", scores.str());

  csv::Writer cmcsv;
  cmcsv.field("gt\\pred");
  for (auto l : result.confusion.labels) cmcsv.field(segeval::label_name(l));
  cmcsv.field("total");
  cmcsv.end_row();
  for (std::size_t r = 0; r < result.confusion.labels.size(); ++r) {
    cmcsv.field(segeval::label_name(result.confusion.labels[r]));
    for (std::size_t c = 0; c < result.confusion.labels.size(); ++c)
      cmcsv.field(result.confusion.counts[r][c]);
    cmcsv.field(result.confusion.row_total(r));
    cmcsv.end_row();
  }
  cmcsv.field("total");
  for (std::size_t c = 0; c < result.confusion.labels.size(); ++c)
    cmcsv.field(result.confusion.col_total(c));
  cmcsv.field(result.confusion.grand_total());
  cmcsv.end_row();
  manifest.write_output(fs::path(opt.out_dir) / "confusion.csv", cmcsv.str());
  manifest.write_output(fs::path(opt.out_dir) / "confusion.png",
                        image::encode_png(plot::confusion_plot(result.confusion, "CONFUSION")));

  for (const auto& cat : result.categories) {
    csv::Writer pr;
    pr.field("confidence").field("precision").field("recall");
    pr.end_row();
    for (const auto& p : cat.curve.points) {
      pr.field(p.confidence).field(p.precision).field(p.recall);
      pr.end_row();
    }
    const std::string name = sanitize_name(segeval::label_name(cat.label));
    manifest.write_output(fs::path(opt.out_dir) / ("pr_" + name + ".csv"), pr.str());
    manifest.write_output(fs::path(opt.out_dir) / ("pr_" + name + ".png"),
                          image::encode_png(plot::pr_plot(cat.curve.points, "PR " + name)));
  }

  std::vector<segeval::InstanceMask> all_gts;
  for (const auto& img : joined)
    for (const auto& g : img.gts)
      if (g.label != segeval::ObjLabel::Target) all_gts.push_back(g);
  const auto hist = segeval::distraction_histogram(all_gts);
  csv::Writer hcsv;
  hcsv.field("level").field("count");
  hcsv.end_row();
  std::vector<std::string> hlabels;
  std::vector<double> hvalues;
  for (int level = 0; level <= 10; ++level) {
    hcsv.field(level).field(hist[static_cast<std::size_t>(level)]);
    hcsv.end_row();
    hlabels.push_back(std::to_string(level));
    hvalues.push_back(static_cast<double>(hist[static_cast<std::size_t>(level)]));
  }
  manifest.write_output(fs::path(opt.out_dir) / "distraction_histogram.csv", hcsv.str());
  manifest.write_output(fs::path(opt.out_dir) / "distraction_histogram.png",
                        image::encode_png(plot::bar_chart(hlabels, hvalues, "DISTRACTION LEVELS")));
  manifest.save(fs::path(opt.out_dir) / "run_manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportOptions {
  std::optional<std::string> scores_path;  // eval-saliency CSV
  std::optional<std::string> pr_path;      // PR points CSV
  std::optional<std::string> hist_path;    // histogram CSV
  std::string out_dir;
  std::uint64_t seed = 0;
};

inline int cmd_report(const ReportOptions& opt) {
  RunManifest manifest("report", opt.seed);
  if (!opt.scores_path && !opt.pr_path && !opt.hist_path)
    throw UsageError("report: nothing to do (need --scores, --pr, or --hist)");

  if (opt.scores_path) {
    const std::string text = read_file_text(*opt.scores_path);
    manifest.add_input(*opt.scores_path, text);
    auto rows = csv::parse(text);
    if (rows.size() < 2) throw ParseError("scores CSV has no data rows");
    const auto& header = rows[0];
    if (header.size() < 3 || header[0] != "image_id")
      throw ParseError("row 1: expected an eval-saliency scores header");

    // Per-category mean/sd for every metric column.
    std::map<std::string, std::vector<std::vector<double>>> by_cat;
    const std::size_t n_metrics = header.size() - 2;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      const auto& row = rows[r];
      if (row.size() != header.size())
        throw ParseError("row " + std::to_string(r + 1) + ": expected " +
                         std::to_string(header.size()) + " fields, got " + std::to_string(row.size()));
      if (row[0] == "mean" || row[0] == "sd") continue;
      auto& bucket = by_cat[row[1]];
      bucket.resize(n_metrics);
      for (std::size_t m = 0; m < n_metrics; ++m)
        if (!row[m + 2].empty()) bucket[m].push_back(csv::to_double(row[m + 2], r + 1));
    }
    if (by_cat.empty()) throw ParseError("scores CSV has no per-image rows");

    csv::Writer agg;
    agg.field("category").field("stat");
    for (std::size_t m = 0; m < n_metrics; ++m) agg.field(header[m + 2]);
    agg.end_row();
    std::vector<double> overall_mean(n_metrics, 0.0);
    std::vector<std::int64_t> overall_n(n_metrics, 0);
    for (const auto& [cat, columns] : by_cat) {
      for (const char* stat : {"mean", "sd"}) {
        agg.field(cat).field(stat);
        for (std::size_t m = 0; m < n_metrics; ++m) {
          const auto& col = columns[m];
          if (col.empty()) {
            agg.field("");
            continue;
          }
          double mean = 0.0;
          for (double v : col) mean += v;
          mean /= static_cast<double>(col.size());
          if (std::string(stat) == "mean") {
            agg.field(mean);
            overall_mean[m] += mean * static_cast<double>(col.size());
            overall_n[m] += static_cast<std::int64_t>(col.size());
          } else {
            double var = 0.0;
            for (double v : col) var += (v - mean) * (v - mean);
            agg.field(std::sqrt(var / static_cast<double>(col.size())));
          }
        }
        agg.end_row();
      }
    }
    manifest.write_output(fs::path(opt.out_dir) / "aggregate.csv", agg.str());

    std::vector<std::string> labels;
    std::vector<double> values;
    for (std::size_t m = 0; m < n_metrics; ++m)
      if (overall_n[m] > 0) {
        labels.push_back(header[m + 2]);
        values.push_back(overall_mean[m] / static_cast<double>(overall_n[m]));
      }
    manifest.write_output(fs::path(opt.out_dir) / "metric_means.png",
                          image::encode_png(plot::bar_chart(labels, values, "METRIC MEANS")));
  }

  if (opt.pr_path) {
    const std::string text = read_file_text(*opt.pr_path);
    manifest.add_input(*opt.pr_path, text);
    auto rows = csv::parse(text);
    std::vector<segeval::PRPoint> points;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() != 3) throw ParseError("row " + std::to_string(r + 1) + ": expected 3 fields");
      points.push_back({csv::to_double(rows[r][1], r + 1), csv::to_double(rows[r][2], r + 1),
                        csv::to_double(rows[r][0], r + 1)});
    }
    manifest.write_output(fs::path(opt.out_dir) / "pr_curve.png",
                          image::encode_png(plot::pr_plot(points, "PR CURVE")));
  }

  if (opt.hist_path) {
    const std::string text = read_file_text(*opt.hist_path);
    manifest.add_input(*opt.hist_path, text);
    auto rows = csv::parse(text);
    std::vector<std::string> labels;
    std::vector<double> values;
    for (std::size_t r = 1; r < rows.size(); ++r) {
      if (rows[r].size() != 2) throw ParseError("row " + std::to_string(r + 1) + ": expected 2 fields");
      labels.push_back(rows[r][0]);
      values.push_back(csv::to_double(rows[r][1], r + 1));
    }
    manifest.write_output(fs::path(opt.out_dir) / "histogram.png",
                          image::encode_png(plot::bar_chart(labels, values, "HISTOGRAM")));
  }
  manifest.save(fs::path(opt.out_dir) / "report_manifest.json");
  return 0;
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Runs one subcommand. Exit codes: 0 success, 1 validation/configuration
/// error (including usage), 2 I/O error. All randomness derives from --seed.
int run(const std::vector<std::string>& args);

}  // namespace fixsearch::cli

#endif  // FIXSEARCH_CLI_HPP
