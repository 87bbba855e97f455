#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "fixsearch/cli_run.hpp"

using namespace fixsearch;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("fixsearch_test_" + std::to_string(Catch::rngSeed()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

const std::string kFixtureJson = R"([
  {"name":"img1.jpg","subject":1,"task":"bottle","X":[840,300,900],"Y":[525,200,400],"T":[100,180,220],"correct":1,"split":"train"},
  {"name":"img1.jpg","subject":2,"task":"bottle","X":[840,500],"Y":[525,300],"T":[90,210],"correct":1,"split":"train"},
  {"name":"img2.jpg","subject":1,"task":"car","X":[840,1200,1400],"Y":[525,700,800],"T":[95,200,150],"correct":1,"split":"train"},
  {"name":"img2.jpg","subject":2,"task":"car","X":[840,1000],"Y":[525,900],"T":[80,170],"correct":0,"split":"train"},
  {"name":"img3.jpg","subject":3,"task":"cup","X":[840,200,600,1100],"Y":[525,150,450,600],"T":[70,120,140,160],"correct":1,"split":"train"}
])";

std::string file_text(const std::string& path) { return read_file_text(path); }

}  // namespace

TEST_CASE("cli: unknown subcommand and missing required flags exit 1") {
  CHECK(cli::run({"frobnicate"}) == 1);
  CHECK(cli::run({"eval-saliency", "--pred", "/nonexistent"}) == 1);  // missing --gt/--out
  CHECK(cli::run({}) == 1);
}

TEST_CASE("cli: ingest -> fdm -> eval-saliency round trip with deterministic outputs") {
  TempDir dir;
  const std::string fixture = dir / "fix.json";
  atomic_write_file(fixture, kFixtureJson);

  REQUIRE(cli::run({"ingest", "--fixations", fixture, "--out", dir / "trials.ndjson", "--width",
                    "64", "--height", "40"}) == 0);
  const std::string manifest = file_text(dir / "trials.ndjson");
  // 4 correct trials survive filtering.
  CHECK(std::count(manifest.begin(), manifest.end(), '\n') == 4);
  CHECK(fs::exists(dir / "trials.ndjson.manifest.json"));

  REQUIRE(cli::run({"fdm", "--manifest", dir / "trials.ndjson", "--out", dir / "maps", "--width",
                    "64", "--height", "40", "--sigma", "3", "--heatmaps"}) == 0);
  CHECK(fs::exists(dir / "maps/img1.jpg__bottle.density.fdm1"));
  CHECK(fs::exists(dir / "maps/img1.jpg__bottle.binary.fdm1"));
  CHECK(fs::exists(dir / "maps/img1.jpg__bottle.heatmap.png"));
  CHECK(fs::exists(dir / "maps/img2.jpg__car.density.fdm1"));
  CHECK(fs::exists(dir / "maps/img3.jpg__cup.density.fdm1"));

  // Use the ground-truth maps as predictions: self-evaluation scores.
  REQUIRE(cli::run({"eval-saliency", "--pred", dir / "maps", "--gt", dir / "maps", "--out",
                    dir / "scores.csv", "--seed", "7"}) == 0);
  const std::string csv1 = file_text(dir / "scores.csv");
  REQUIRE(cli::run({"eval-saliency", "--pred", dir / "maps", "--gt", dir / "maps", "--out",
                    dir / "scores2.csv", "--seed", "7"}) == 0);
  CHECK(csv1 == file_text(dir / "scores2.csv"));  // byte-identical rerun
  CHECK(csv1.starts_with("image_id,category,auc_judd,auc_borji,sauc,nss,kld,cc,sim,ig\n"));
  CHECK(csv1.find("\nmean,") != std::string::npos);
  CHECK(csv1.find("\nsd,") != std::string::npos);

  REQUIRE(cli::run({"report", "--scores", dir / "scores.csv", "--out", dir / "report"}) == 0);
  CHECK(fs::exists(dir / "report/aggregate.csv"));
  CHECK(fs::exists(dir / "report/metric_means.png"));
}

TEST_CASE("cli: ingest with splits and augmentation keeps flips out of valid/test") {
  TempDir dir;
  // 2 categories x 3 pairs, everything train-designated.
  std::string json = "[";
  bool first = true;
  for (const char* task : {"bottle", "car"})
    for (int i = 0; i < 3; ++i) {
      if (!first) json += ",";
      first = false;
      json += std::string(R"({"name":"i)") + task + std::to_string(i) +
              R"(.jpg","subject":1,"task":")" + task +
              R"(","X":[840,300],"Y":[525,200],"T":[100,150],"correct":1,"split":"train"})";
    }
  json += "]";
  atomic_write_file(dir / "fix.json", json);
  REQUIRE(cli::run({"ingest", "--fixations", dir / "fix.json", "--out", dir / "all.ndjson",
                    "--split-mode", "paper", "--split-out", dir / "splits", "--test-per-category",
                    "1", "--augment", "--seed", "3"}) == 0);
  const std::string train = file_text(dir / "splits/train.ndjson");
  const std::string test = file_text(dir / "splits/test.ndjson");
  CHECK(train.find("\"augmented\":true") != std::string::npos);
  CHECK(test.find("\"augmented\":true") == std::string::npos);
  // 4 train pairs doubled by augmentation; 2 test pairs.
  CHECK(std::count(train.begin(), train.end(), '\n') == 8);
  CHECK(std::count(test.begin(), test.end(), '\n') == 2);
}

TEST_CASE("cli: train-toy on a tiny config descends and predict scores the argmax hits") {
  TempDir dir;
  const std::string cfg = R"({
    "schema_version": 1,
    "model": {"base_channels": 2, "feature_channels": 4, "image_h": 32, "image_w": 64,
              "target_h": 8, "target_w": 8},
    "train": {"epochs": 10, "lr": 0.002, "seed": 5, "n_train": 12, "n_valid": 4, "n_test": 6}
  })";
  atomic_write_file(dir / "cfg.json", cfg);
  REQUIRE(cli::run({"train-toy", "--config", dir / "cfg.json", "--out", dir / "run"}) == 0);
  REQUIRE(fs::exists(dir / "run/checkpoint.nnp1"));
  REQUIRE(fs::exists(dir / "run/train_report.json"));
  const auto report = nlohmann::json::parse(file_text(dir / "run/train_report.json"));
  const auto& losses = report["train_loss"];
  REQUIRE(losses.size() == 10);
  CHECK(losses.back().get<double>() <= 0.5 * losses.front().get<double>());

  REQUIRE(cli::run({"predict", "--checkpoint", dir / "run/checkpoint.nnp1", "--config",
                    dir / "cfg.json", "--out", dir / "pred", "--write-gt", "--heatmaps"}) == 0);
  CHECK(fs::exists(dir / "pred/sample0.density.fdm1"));
  CHECK(fs::exists(dir / "pred/sample0.gt.density.fdm1"));
  CHECK(fs::exists(dir / "pred/sample0.gt.binary.fdm1"));
  CHECK(fs::exists(dir / "pred/sample0.heatmap.png"));
  CHECK(fs::exists(dir / "pred/hits.csv"));
  const std::string hits = file_text(dir / "pred/hits.csv");
  CHECK(hits.find("hit_rate") != std::string::npos);

  // Determinism across repeated runs: checkpoint and predictions byte-equal.
  REQUIRE(cli::run({"train-toy", "--config", dir / "cfg.json", "--out", dir / "run2"}) == 0);
  CHECK(read_file_bytes(dir / "run/checkpoint.nnp1") == read_file_bytes(dir / "run2/checkpoint.nnp1"));
  REQUIRE(cli::run({"predict", "--checkpoint", dir / "run2/checkpoint.nnp1", "--config",
                    dir / "cfg.json", "--out", dir / "pred2"}) == 0);
  CHECK(read_file_bytes(dir / "pred/sample0.density.fdm1") ==
        read_file_bytes(dir / "pred2/sample0.density.fdm1"));
}

TEST_CASE("cli: eval-seg produces scores, confusion, PR curves, and histogram") {
  TempDir dir;
  const std::string gt = R"({
    "images": [{"id": 1, "file_name": "a.jpg", "width": 16, "height": 16},
               {"id": 2, "file_name": "b.jpg", "width": 16, "height": 16}],
    "categories": [{"id": 1, "name": "target"}, {"id": 2, "name": "distractor"}],
    "annotations": [
      {"id": 1, "image_id": 1, "category_id": 1, "segmentation": [[1,1,5,1,5,5,1,5]]},
      {"id": 2, "image_id": 1, "category_id": 2, "distraction_level": 2,
       "segmentation": [[8,8,13,8,13,13,8,13]]},
      {"id": 3, "image_id": 2, "category_id": 1, "segmentation": [[2,2,6,2,6,6,2,6]]},
      {"id": 4, "image_id": 2, "category_id": 2, "distraction_level": 4,
       "segmentation": [[9,1,14,1,14,6,9,6]]}
    ]})";
  const std::string pred = R"({
    "images": [{"id": 1, "file_name": "a.jpg", "width": 16, "height": 16},
               {"id": 2, "file_name": "b.jpg", "width": 16, "height": 16}],
    "categories": [{"id": 1, "name": "target"}, {"id": 2, "name": "distractor"}],
    "annotations": [
      {"id": 1, "image_id": 1, "category_id": 1, "score": 0.9, "segmentation": [[1,1,5,1,5,5,1,5]]},
      {"id": 2, "image_id": 1, "category_id": 2, "score": 0.8, "segmentation": [[8,8,13,8,13,13,8,13]]},
      {"id": 3, "image_id": 2, "category_id": 1, "score": 0.85, "segmentation": [[2,2,6,2,6,6,2,6]]}
    ]})";
  atomic_write_file(dir / "gt.json", gt);
  atomic_write_file(dir / "pred.json", pred);
  REQUIRE(cli::run({"eval-seg", "--gt", dir / "gt.json", "--pred", dir / "pred.json", "--out",
                    dir / "seg"}) == 0);
  const std::string scores = file_text(dir / "seg/seg_scores.csv");
  CHECK(scores.find("map50,") != std::string::npos);
  CHECK(scores.find("f1,") != std::string::npos);
  CHECK(fs::exists(dir / "seg/confusion.csv"));
  CHECK(fs::exists(dir / "seg/confusion.png"));
  CHECK(fs::exists(dir / "seg/pr_target.csv"));
  CHECK(fs::exists(dir / "seg/pr_distractor.png"));
  CHECK(fs::exists(dir / "seg/distraction_histogram.csv"));
  const std::string hist = file_text(dir / "seg/distraction_histogram.csv");
  CHECK(hist.find("2,1") != std::string::npos);
  CHECK(hist.find("4,1") != std::string::npos);

  // Three-class mode reads the annotation levels.
  REQUIRE(cli::run({"eval-seg", "--gt", dir / "gt.json", "--pred", dir / "pred.json", "--out",
                    dir / "seg3", "--three-class"}) == 1);  // preds lack 3-class labels -> validation error
}

TEST_CASE("cli: report rejects malformed and empty CSV with exit 1") {
  TempDir dir;
  atomic_write_file(dir / "empty.csv", std::string(""));
  CHECK(cli::run({"report", "--scores", dir / "empty.csv", "--out", dir / "rep"}) == 1);
  atomic_write_file(dir / "bad.csv",
                    std::string("image_id,category,auc_judd\nimg,cat,0.5\nimg2,cat\n"));
  CHECK(cli::run({"report", "--scores", dir / "bad.csv", "--out", dir / "rep"}) == 1);
  atomic_write_file(dir / "row.csv", std::string("image_id,category,auc_judd\nimg,cat,0.5\n"));
  REQUIRE(cli::run({"report", "--scores", dir / "row.csv", "--out", dir / "rep"}) == 0);
  const std::string agg = file_text(dir / "rep/aggregate.csv");
  CHECK(agg.find("cat,mean,0.5") != std::string::npos);
}

TEST_CASE("cli: missing input file exits 2") {
  TempDir dir;
  CHECK(cli::run({"fdm", "--manifest", dir / "nope.ndjson", "--out", dir / "maps"}) == 2);
  CHECK(cli::run({"ingest", "--fixations", dir / "nope.json", "--out", dir / "x.ndjson"}) == 2);
}

TEST_CASE("cli: run manifests reference every output") {
  TempDir dir;
  atomic_write_file(dir / "fix.json", kFixtureJson);
  REQUIRE(cli::run({"ingest", "--fixations", dir / "fix.json", "--out", dir / "t.ndjson"}) == 0);
  REQUIRE(cli::run({"fdm", "--manifest", dir / "t.ndjson", "--out", dir / "maps", "--width", "512",
                    "--height", "320", "--sigma", "5"}) == 0);
  const auto manifest = nlohmann::json::parse(file_text(dir / "maps/run_manifest.json"));
  CHECK(manifest["command"] == "fdm");
  CHECK(manifest["inputs"].size() == 1);
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir / "maps"))
    if (entry.path().filename() != "run_manifest.json") ++files;
  CHECK(manifest["outputs"].size() == files);
}
