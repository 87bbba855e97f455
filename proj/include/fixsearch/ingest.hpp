#ifndef FIXSEARCH_INGEST_HPP
#define FIXSEARCH_INGEST_HPP

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixsearch/common.hpp"

namespace fixsearch::ingest {

/// The 18 COCO-Search18 target categories.
inline const std::array<std::string, 18>& known_categories() {
  static const std::array<std::string, 18> cats = {
      "bottle", "bowl",      "car",   "chair",        "clock", "cup",
      "fork",   "keyboard",  "knife", "laptop",       "microwave", "mouse",
      "oven",   "potted plant", "sink", "stop sign", "toilet", "tv"};
  return cats;
}

inline bool is_known_category(const std::string& name) {
  const auto& cats = known_categories();
  return std::find(cats.begin(), cats.end(), name) != cats.end();
}

struct Fixation {
  double x = 0.0;
  double y = 0.0;
  double duration_ms = 0.0;
  bool operator==(const Fixation&) const = default;
};

struct Dims {
  int width = 0;
  int height = 0;
  bool operator==(const Dims&) const = default;
};

/// Which source split a trial was tagged with in the dataset JSON.
enum class SourceSplit { Train, Valid, Unspecified };

/// One observer's fixation sequence for one (image, target-category) trial.
struct FixationTrial {
  std::string image_id;
  std::string category;
  int subject = 0;
  std::vector<Fixation> fixations;
  bool correct = false;
  Dims image_dims;
  SourceSplit source_split = SourceSplit::Unspecified;
  // Set once filter_trials has dropped the center-dot fixation; makes the
  // filter idempotent.
  bool first_fixation_removed = false;
};

/// All observers' trials for one (image, target-category) pair.
struct TaskImagePair {
  std::string image_id;
  std::string category;
  std::vector<FixationTrial> trials;
  SourceSplit source_split = SourceSplit::Unspecified;
  bool augmented = false;

  std::pair<std::string, std::string> key() const { return {image_id, category}; }
};

struct DatasetSplit {
  std::vector<TaskImagePair> train;
  std::vector<TaskImagePair> valid;
  std::vector<TaskImagePair> test;
  std::uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// Parsing
//
// Input records follow the public COCO-Search18 fixation schema:
//   name    — image file name
//   task    — target category (one of the 18 names)
//   subject — integer observer id
//   X, Y, T — equal-length arrays: fixation x, y (pixels) and duration (ms)
//   correct — 1 for a correct response, 0 otherwise
//   split   — optional "train"/"valid" tag
// Images in the source dataset are 1680x1050; records carry no dims, so the
// frame size is a parser parameter with that default.
// ---------------------------------------------------------------------------

inline std::vector<FixationTrial> parse_fixation_dataset(const std::string& raw,
                                                         Dims frame = {1680, 1050}) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("invalid fixation JSON: ") + e.what(),
                     static_cast<std::int64_t>(e.byte));
  }
  if (!doc.is_array()) throw ParseError("fixation JSON root must be an array");

  std::vector<FixationTrial> trials;
  trials.reserve(doc.size());
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& rec = doc[i];
    auto fail = [i](const std::string& why) {
      throw ValidationError("record " + std::to_string(i) + ": " + why);
    };
    if (!rec.is_object()) fail("not an object");
    if (!rec.contains("name") || !rec["name"].is_string()) fail("missing string field 'name'");
    if (!rec.contains("task") || !rec["task"].is_string()) fail("missing string field 'task'");
    if (!rec.contains("subject") || !rec["subject"].is_number()) fail("missing numeric field 'subject'");
    for (const char* field : {"X", "Y", "T"})
      if (!rec.contains(field) || !rec[field].is_array())
        fail(std::string("missing array field '") + field + "'");
    if (!rec.contains("correct")) fail("missing field 'correct'");

    FixationTrial t;
    t.image_id = rec["name"].get<std::string>();
    t.category = rec["task"].get<std::string>();
    if (!is_known_category(t.category)) fail("unknown category '" + t.category + "'");
    t.subject = rec["subject"].get<int>();
    const auto& xs = rec["X"];
    const auto& ys = rec["Y"];
    const auto& ts = rec["T"];
    if (xs.size() != ys.size() || xs.size() != ts.size())
      fail("X/Y/T lengths differ (" + std::to_string(xs.size()) + "/" + std::to_string(ys.size()) +
           "/" + std::to_string(ts.size()) + ")");
    if (xs.empty()) fail("empty fixation arrays");
    t.fixations.reserve(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
      if (!xs[k].is_number() || !ys[k].is_number() || !ts[k].is_number())
        fail("non-numeric fixation entry at index " + std::to_string(k));
      t.fixations.push_back({xs[k].get<double>(), ys[k].get<double>(), ts[k].get<double>()});
    }
    if (rec["correct"].is_boolean()) t.correct = rec["correct"].get<bool>();
    else if (rec["correct"].is_number()) t.correct = rec["correct"].get<int>() != 0;
    else fail("field 'correct' must be 0/1 or boolean");
    if (rec.contains("split") && rec["split"].is_string()) {
      std::string s = rec["split"].get<std::string>();
      if (s == "train") t.source_split = SourceSplit::Train;
      else if (s == "valid" || s == "val") t.source_split = SourceSplit::Valid;
    }
    t.image_dims = frame;
    trials.push_back(std::move(t));
  }
  return trials;
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

struct FilterStats {
  std::size_t dropped_incorrect = 0;
  std::size_t dropped_empty = 0;
};

/// Drops incorrect trials and the leading center-dot fixation of each
/// remaining trial. Trials emptied by the removal are dropped and counted.
/// Idempotent: already-filtered trials pass through unchanged.
inline std::vector<FixationTrial> filter_trials(const std::vector<FixationTrial>& trials,
                                                FilterStats* stats = nullptr) {
  FilterStats local;
  std::vector<FixationTrial> out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    if (!t.correct) {
      ++local.dropped_incorrect;
      continue;
    }
    FixationTrial kept = t;
    if (!kept.first_fixation_removed) {
      kept.fixations.erase(kept.fixations.begin());
      kept.first_fixation_removed = true;
    }
    if (kept.fixations.empty()) {
      ++local.dropped_empty;
      continue;
    }
    out.push_back(std::move(kept));
  }
  if (local.dropped_incorrect || local.dropped_empty)
    log_info("filter_trials: dropped " + std::to_string(local.dropped_incorrect) +
             " incorrect and " + std::to_string(local.dropped_empty) + " emptied trials");
  if (stats) *stats = local;
  return out;
}

// ---------------------------------------------------------------------------
// Rescaling
//
// Coordinates stay continuous: each axis is scaled by to/from and the result
// is clamped into [0, width-1] x [0, height-1]. Round-tripping is exact except
// at the extreme right/bottom edge where the clamp engages.
// ---------------------------------------------------------------------------

inline FixationTrial rescale_trial(const FixationTrial& trial, Dims to_dims) {
  if (trial.image_dims.width <= 0 || trial.image_dims.height <= 0)
    throw InvalidInputError("rescale_trial: source dims must be positive, got " +
                            std::to_string(trial.image_dims.width) + "x" +
                            std::to_string(trial.image_dims.height));
  if (to_dims.width <= 0 || to_dims.height <= 0)
    throw InvalidInputError("rescale_trial: target dims must be positive");
  FixationTrial out = trial;
  for (auto& f : out.fixations) {
    // Multiply before dividing: x*to/from is exact whenever the true quotient
    // is representable (e.g. the frame center maps to the exact new center).
    f.x = std::clamp(f.x * to_dims.width / trial.image_dims.width, 0.0,
                     static_cast<double>(to_dims.width - 1));
    f.y = std::clamp(f.y * to_dims.height / trial.image_dims.height, 0.0,
                     static_cast<double>(to_dims.height - 1));
  }
  out.image_dims = to_dims;
  return out;
}

// ---------------------------------------------------------------------------
// Grouping and splitting
// ---------------------------------------------------------------------------

/// Groups trials into task-image pairs, sorted by (category, image_id).
inline std::vector<TaskImagePair> group_pairs(const std::vector<FixationTrial>& trials) {
  std::map<std::pair<std::string, std::string>, TaskImagePair> by_key;
  for (const auto& t : trials) {
    auto key = std::make_pair(t.category, t.image_id);
    auto& pair = by_key[key];
    if (pair.trials.empty()) {
      pair.image_id = t.image_id;
      pair.category = t.category;
      pair.source_split = t.source_split;
    }
    pair.trials.push_back(t);
  }
  std::vector<TaskImagePair> out;
  out.reserve(by_key.size());
  for (auto& [key, pair] : by_key) {
    std::set<int> subjects;
    for (const auto& t : pair.trials) subjects.insert(t.subject);
    if (subjects.size() > 10)
      throw ValidationError("pair (" + pair.image_id + ", " + pair.category + ") has " +
                            std::to_string(subjects.size()) + " subjects; at most 10 expected");
    out.push_back(std::move(pair));
  }
  return out;
}

enum class SplitMode { Paper, Random };

struct SplitOptions {
  SplitMode mode = SplitMode::Paper;
  std::uint64_t seed = 0;
  // Paper mode: per-category stratified test draw from train-designated pairs.
  int test_per_category = 18;
  // Random mode fractions (test takes the remainder).
  double train_fraction = 0.8;
  double valid_fraction = 0.1;
};

/// Splits task-image pairs.
///
/// Paper mode reproduces the counting discipline of the 1826-324-324 split:
/// valid-designated pairs go to valid; from the train-designated pairs each
/// category contributes test_per_category test pairs, drawn by sorting
/// image_ids lexicographically and shuffling with the seed; the rest train.
/// Random mode partitions all pairs by seeded shuffle and the fractions.
inline DatasetSplit build_split(const std::vector<TaskImagePair>& pairs, const SplitOptions& opt) {
  DatasetSplit split;
  split.seed = opt.seed;
  if (opt.mode == SplitMode::Random) {
    std::vector<TaskImagePair> all = pairs;
    std::sort(all.begin(), all.end(),
              [](const TaskImagePair& a, const TaskImagePair& b) { return a.key() < b.key(); });
    Rng rng(opt.seed);
    rng.shuffle(all);
    const std::size_t n = all.size();
    const std::size_t n_train = static_cast<std::size_t>(n * opt.train_fraction);
    const std::size_t n_valid = static_cast<std::size_t>(n * opt.valid_fraction);
    if (n_train + n_valid > n) throw ConfigError("build_split: fractions exceed 1");
    split.train.assign(all.begin(), all.begin() + n_train);
    split.valid.assign(all.begin() + n_train, all.begin() + n_train + n_valid);
    split.test.assign(all.begin() + n_train + n_valid, all.end());
    return split;
  }

  // Paper mode.
  std::map<std::string, std::vector<TaskImagePair>> train_by_cat;
  for (const auto& p : pairs) {
    if (p.source_split == SourceSplit::Valid) split.valid.push_back(p);
    else train_by_cat[p.category].push_back(p);
  }
  Rng rng(opt.seed);
  for (auto& [cat, cat_pairs] : train_by_cat) {
    if (static_cast<int>(cat_pairs.size()) < opt.test_per_category)
      throw ConfigError("build_split: category '" + cat + "' has only " +
                        std::to_string(cat_pairs.size()) + " train-designated pairs; " +
                        std::to_string(opt.test_per_category) + " needed for the test draw");
    std::sort(cat_pairs.begin(), cat_pairs.end(),
              [](const TaskImagePair& a, const TaskImagePair& b) { return a.image_id < b.image_id; });
    rng.shuffle(cat_pairs);
    for (std::size_t i = 0; i < cat_pairs.size(); ++i) {
      if (i < static_cast<std::size_t>(opt.test_per_category)) split.test.push_back(cat_pairs[i]);
      else split.train.push_back(cat_pairs[i]);
    }
  }
  return split;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

/// Mirrors every fixation horizontally (x -> width-1-x) and tags the pair as
/// augmented so it can never leak into validation or test sets.
inline TaskImagePair augment_hflip(const TaskImagePair& pair, int image_width) {
  TaskImagePair out = pair;
  for (auto& trial : out.trials) {
    if (trial.image_dims.width != image_width)
      throw InvalidInputError("augment_hflip: width " + std::to_string(image_width) +
                              " does not match trial dims " + std::to_string(trial.image_dims.width));
    for (auto& f : trial.fixations) f.x = static_cast<double>(image_width - 1) - f.x;
  }
  out.augmented = !pair.augmented;
  return out;
}

// ---------------------------------------------------------------------------
// K-fold cross-validation splitting
// ---------------------------------------------------------------------------

struct Fold {
  std::vector<TaskImagePair> train;
  std::vector<TaskImagePair> valid;
};

/// Deterministic k-fold partition: pairs are sorted by key, shuffled with the
/// seed, then cut into k contiguous validation chunks; the first (n mod k)
/// chunks take one extra pair.
inline std::vector<Fold> kfold(const std::vector<TaskImagePair>& pairs, int k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be >= 2, got " + std::to_string(k));
  if (static_cast<std::size_t>(k) > pairs.size())
    throw ConfigError("kfold: k=" + std::to_string(k) + " exceeds pair count " +
                      std::to_string(pairs.size()));
  std::vector<TaskImagePair> all = pairs;
  std::sort(all.begin(), all.end(),
            [](const TaskImagePair& a, const TaskImagePair& b) { return a.key() < b.key(); });
  Rng rng(seed);
  rng.shuffle(all);

  std::vector<Fold> folds(static_cast<std::size_t>(k));
  const std::size_t base = all.size() / static_cast<std::size_t>(k);
  const std::size_t extra = all.size() % static_cast<std::size_t>(k);
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    std::size_t len = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    folds[f].valid.assign(all.begin() + pos, all.begin() + pos + len);
    folds[f].train.reserve(all.size() - len);
    folds[f].train.insert(folds[f].train.end(), all.begin(), all.begin() + pos);
    folds[f].train.insert(folds[f].train.end(), all.begin() + pos + len, all.end());
    pos += len;
  }
  return folds;
}

// ---------------------------------------------------------------------------
// Trial manifest (newline-delimited JSON, one trial per line)
// ---------------------------------------------------------------------------

inline std::string trial_to_ndjson_line(const FixationTrial& trial, bool augmented) {
  nlohmann::json j;
  j["image_id"] = trial.image_id;
  j["category"] = trial.category;
  j["subject"] = trial.subject;
  auto fix = nlohmann::json::array();
  for (const auto& f : trial.fixations) fix.push_back({f.x, f.y, f.duration_ms});
  j["fixations"] = std::move(fix);
  j["correct"] = trial.correct;
  j["augmented"] = augmented;
  return j.dump();
}

inline std::string pairs_to_manifest(const std::vector<TaskImagePair>& pairs) {
  std::string out;
  for (const auto& p : pairs)
    for (const auto& t : p.trials) {
      out += trial_to_ndjson_line(t, p.augmented);
      out += '\n';
    }
  return out;
}

/// Parses a manifest back into trials (augmented flag returned per trial).
inline std::vector<std::pair<FixationTrial, bool>> parse_manifest(const std::string& text,
                                                                  Dims dims) {
  std::vector<std::pair<FixationTrial, bool>> out;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    FixationTrial t;
    t.image_id = j.at("image_id").get<std::string>();
    t.category = j.at("category").get<std::string>();
    t.subject = j.at("subject").get<int>();
    for (const auto& f : j.at("fixations"))
      t.fixations.push_back({f.at(0).get<double>(), f.at(1).get<double>(), f.at(2).get<double>()});
    t.correct = j.at("correct").get<bool>();
    t.image_dims = dims;
    t.first_fixation_removed = true;  // manifests hold post-filter trials
    out.emplace_back(std::move(t), j.value("augmented", false));
  }
  return out;
}

}  // namespace fixsearch::ingest

#endif  // FIXSEARCH_INGEST_HPP
