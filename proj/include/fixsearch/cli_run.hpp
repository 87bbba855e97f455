#ifndef FIXSEARCH_CLI_RUN_HPP
#define FIXSEARCH_CLI_RUN_HPP

// Definition of cli::run (CLI11 wiring). Kept out of cli.hpp so tests that
// drive the command structs directly do not pull the parser in.

#include <CLI11.hpp>

#include "fixsearch/cli.hpp"

namespace fixsearch::cli {

inline int run(const std::vector<std::string>& args) {
  CLI::App app{"fixsearch: visual-search attention toolkit"};
  app.require_subcommand(1);

  IngestOptions ingest_opt;
  auto* ingest_cmd = app.add_subcommand("ingest", "parse, filter, rescale and augment fixation data");
  ingest_cmd->add_option("--fixations", ingest_opt.fixations_path, "fixation JSON file")->required();
  ingest_cmd->add_option("--out", ingest_opt.out_path, "trial manifest output (.ndjson)")->required();
  ingest_cmd->add_option("--width", ingest_opt.width, "working width (default 512)");
  ingest_cmd->add_option("--height", ingest_opt.height, "working height (default 320)");
  ingest_cmd->add_option("--frame-width", ingest_opt.frame_width, "source frame width (default 1680)");
  ingest_cmd->add_option("--frame-height", ingest_opt.frame_height, "source frame height (default 1050)");
  ingest_cmd->add_flag("--augment", ingest_opt.augment, "add horizontally flipped pairs");
  std::string split_mode;
  ingest_cmd->add_option("--split-mode", split_mode, "paper|random: also write split manifests")
      ->check(CLI::IsMember({"paper", "random"}));
  ingest_cmd->add_option("--split-out", ingest_opt.split_dir, "directory for split manifests");
  ingest_cmd->add_option("--test-per-category", ingest_opt.test_per_category,
                         "paper-mode test pairs per category (default 18)");
  ingest_cmd->add_option("--seed", ingest_opt.seed, "split seed");

  FdmOptions fdm_opt;
  auto* fdm_cmd = app.add_subcommand("fdm", "build fixation density and binary maps");
  fdm_cmd->add_option("--manifest", fdm_opt.manifest_path, "trial manifest (.ndjson)")->required();
  fdm_cmd->add_option("--out", fdm_opt.out_dir, "output directory")->required();
  fdm_cmd->add_option("--width", fdm_opt.width, "map width (default 512)");
  fdm_cmd->add_option("--height", fdm_opt.height, "map height (default 320)");
  fdm_cmd->add_option("--sigma", fdm_opt.sigma, "Gaussian sigma in working pixels (default 11)");
  fdm_cmd->add_option("--truncation", fdm_opt.truncation_sigmas, "kernel truncation in sigmas (default 3)");
  fdm_cmd->add_flag("--heatmaps", fdm_opt.heatmaps, "also render heatmap PNGs");
  fdm_cmd->add_option("--jobs", fdm_opt.jobs, "worker threads (default 1)");
  fdm_cmd->add_option("--seed", fdm_opt.seed, "recorded in the manifest");

  EvalSaliencyOptions ev_opt;
  std::string cc_formula = "pearson", ig_base = "bits";
  auto* ev_cmd = app.add_subcommand("eval-saliency", "run the eight saliency metrics");
  ev_cmd->add_option("--pred", ev_opt.pred_dir, "directory of predicted *.density.fdm1")->required();
  ev_cmd->add_option("--gt", ev_opt.gt_dir, "directory of ground-truth FDM1 maps")->required();
  ev_cmd->add_option("--out", ev_opt.out_path, "scores CSV path")->required();
  ev_cmd->add_option("--seed", ev_opt.cfg.seed, "sampling seed (default 0)");
  ev_cmd->add_option("--epsilon", ev_opt.cfg.epsilon, "KLD/IG epsilon (default 1e-7)");
  ev_cmd->add_option("--auc-step", ev_opt.cfg.auc_step,
                     "AUC-Borji/sAUC threshold step; 0 = exact sweep (default 0.05)");
  ev_cmd->add_option("--auc-splits", ev_opt.cfg.auc_splits, "negative-sample splits (default 100)");
  ev_cmd->add_option("--cc-formula", cc_formula, "pearson|eq2 (default pearson)")
      ->check(CLI::IsMember({"pearson", "eq2"}));
  ev_cmd->add_option("--ig-base", ig_base, "bits|nats (default bits)")
      ->check(CLI::IsMember({"bits", "nats"}));
  ev_cmd->add_option("--jobs", ev_opt.jobs, "worker threads (default 1)");

  TrainToyOptions tr_opt;
  std::string tr_config;
  std::uint64_t tr_seed = 0;
  int tr_epochs = 0;
  auto* tr_cmd = app.add_subcommand("train-toy", "train the toy two-stream model on synthetic data");
  auto* tr_cfg_opt = tr_cmd->add_option("--config", tr_config, "experiment config JSON");
  tr_cmd->add_option("--out", tr_opt.out_dir, "output directory")->required();
  auto* tr_seed_opt = tr_cmd->add_option("--seed", tr_seed, "override config seed");
  auto* tr_ep_opt = tr_cmd->add_option("--epochs", tr_epochs, "override config epochs");

  PredictOptions pr_opt;
  std::string pr_config;
  int pr_count = 0;
  auto* pr_cmd = app.add_subcommand("predict", "predict FDMs for synthetic samples");
  pr_cmd->add_option("--checkpoint", pr_opt.checkpoint_path, "model checkpoint (.nnp1)")->required();
  auto* pr_cfg_opt = pr_cmd->add_option("--config", pr_config, "experiment config JSON");
  pr_cmd->add_option("--out", pr_opt.out_dir, "output directory")->required();
  auto* pr_count_opt = pr_cmd->add_option("--count", pr_count, "number of samples");
  pr_cmd->add_flag("--heatmaps", pr_opt.heatmaps, "render heatmap PNGs");
  pr_cmd->add_flag("--write-gt", pr_opt.write_gt, "also write ground-truth FDM1 maps");

  EvalSegOptions seg_opt;
  std::string seg_manifest;
  auto* seg_cmd = app.add_subcommand("eval-seg", "object-level target/distractor evaluation");
  seg_cmd->add_option("--gt", seg_opt.gt_path, "ground-truth COCO annotation JSON")->required();
  seg_cmd->add_option("--pred", seg_opt.pred_path, "prediction COCO annotation JSON")->required();
  seg_cmd->add_option("--out", seg_opt.out_dir, "output directory")->required();
  seg_cmd->add_option("--iou", seg_opt.iou, "matching IoU threshold (default 0.5)");
  seg_cmd->add_flag("--three-class", seg_opt.three_class, "target/low-distractor/high-distractor");
  seg_cmd->add_option("--fixation-radius", seg_opt.fixation_radius,
                      "fixation-on-object radius in pixels (default 0: exact pixel)");
  auto* seg_manifest_opt =
      seg_cmd->add_option("--manifest", seg_manifest, "trial manifest for distraction levels");
  seg_cmd->add_option("--manifest-width", seg_opt.manifest_width, "manifest working width");
  seg_cmd->add_option("--manifest-height", seg_opt.manifest_height, "manifest working height");
  seg_cmd->add_option("--seed", seg_opt.seed, "recorded in the manifest");

  ReportOptions rep_opt;
  std::string rep_scores, rep_pr, rep_hist;
  auto* rep_cmd = app.add_subcommand("report", "aggregate tables and plots from score CSVs");
  auto* rep_scores_opt = rep_cmd->add_option("--scores", rep_scores, "eval-saliency scores CSV");
  auto* rep_pr_opt = rep_cmd->add_option("--pr", rep_pr, "PR points CSV");
  auto* rep_hist_opt = rep_cmd->add_option("--hist", rep_hist, "histogram CSV");
  rep_cmd->add_option("--out", rep_opt.out_dir, "output directory")->required();
  rep_cmd->add_option("--seed", rep_opt.seed, "recorded in the manifest");

  // CLI11 wants argv in reverse order without the program name.
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::puts(app.help().c_str());
      return 0;
    }
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }

  try {
    if (*ingest_cmd) {
      if (!split_mode.empty()) {
        ingest_opt.split_mode = split_mode;
        if (ingest_opt.split_dir.empty())
          throw UsageError("ingest: --split-mode needs --split-out");
      }
      return cmd_ingest(ingest_opt);
    }
    if (*fdm_cmd) return cmd_fdm(fdm_opt);
    if (*ev_cmd) {
      ev_opt.cfg.cc_formula =
          cc_formula == "eq2" ? metrics::CcFormula::PaperEq2 : metrics::CcFormula::Pearson;
      ev_opt.cfg.ig_base = ig_base == "nats" ? metrics::IgLogBase::Nats : metrics::IgLogBase::Bits;
      return cmd_eval_saliency(ev_opt);
    }
    if (*tr_cmd) {
      if (*tr_cfg_opt) tr_opt.config_path = tr_config;
      if (*tr_seed_opt) tr_opt.seed = tr_seed;
      if (*tr_ep_opt) tr_opt.epochs = tr_epochs;
      return cmd_train_toy(tr_opt);
    }
    if (*pr_cmd) {
      if (*pr_cfg_opt) pr_opt.config_path = pr_config;
      if (*pr_count_opt) pr_opt.count = pr_count;
      return cmd_predict(pr_opt);
    }
    if (*seg_cmd) {
      if (*seg_manifest_opt) seg_opt.manifest_path = seg_manifest;
      return cmd_eval_seg(seg_opt);
    }
    if (*rep_cmd) {
      if (*rep_scores_opt) rep_opt.scores_path = rep_scores;
      if (*rep_pr_opt) rep_opt.pr_path = rep_pr;
      if (*rep_hist_opt) rep_opt.hist_path = rep_hist;
      return cmd_report(rep_opt);
    }
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 2;
  }
  return 1;
}

}  // namespace fixsearch::cli

#endif  // FIXSEARCH_CLI_RUN_HPP
