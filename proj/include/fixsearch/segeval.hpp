#ifndef FIXSEARCH_SEGEVAL_HPP
#define FIXSEARCH_SEGEVAL_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fixsearch/common.hpp"
#include "fixsearch/ingest.hpp"

namespace fixsearch::segeval {

enum class ObjLabel { Target, Distractor, LowDistractor, HighDistractor, Background };

inline const char* label_name(ObjLabel l) {
  switch (l) {
    case ObjLabel::Target: return "target";
    case ObjLabel::Distractor: return "distractor";
    case ObjLabel::LowDistractor: return "low-distractor";
    case ObjLabel::HighDistractor: return "high-distractor";
    case ObjLabel::Background: return "background";
  }
  return "?";
}

/// One segmented object: category label, bitmask, confidence (predictions)
/// and distraction level (ground truth distractors).
struct InstanceMask {
  std::string image_id;
  ObjLabel label = ObjLabel::Distractor;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major 0/1
  double confidence = 1.0;
  int distraction_level = -1;  // -1 when not set

  std::int64_t area() const {
    std::int64_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
};

// ---------------------------------------------------------------------------
// IoU and matching
// ---------------------------------------------------------------------------

inline double compute_iou(const InstanceMask& a, const InstanceMask& b) {
  if (a.width != b.width || a.height != b.height)
    throw InvalidInputError("compute_iou: dims mismatch " + std::to_string(a.width) + "x" +
                            std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                            std::to_string(b.height));
  std::int64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.bits.size(); ++i) {
    inter += a.bits[i] & b.bits[i];
    uni += a.bits[i] | b.bits[i];
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

struct MatchPair {
  std::size_t pred_idx = 0;
  std::size_t gt_idx = 0;
  double iou = 0.0;
  bool label_match = false;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<std::size_t> unmatched_preds;  // false positives vs background
  std::vector<std::size_t> unmatched_gts;    // missed, predicted as background
};

/// Greedy matching in descending prediction confidence: each prediction takes
/// the highest-IoU unmatched ground truth at or above the threshold,
/// regardless of category. Label agreement is recorded on the pair.
inline MatchResult match_instances(const std::vector<InstanceMask>& preds,
                                   const std::vector<InstanceMask>& gts, double iou_thresh = 0.5) {
  if (iou_thresh <= 0.0 || iou_thresh > 1.0)
    throw InvalidInputError("match_instances: iou threshold must be in (0,1]");
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return preds[a].confidence > preds[b].confidence;
  });

  MatchResult result;
  std::vector<bool> gt_taken(gts.size(), false);
  for (std::size_t pi : order) {
    double best_iou = 0.0;
    std::size_t best_gt = gts.size();
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
      if (gt_taken[gi]) continue;
      const double iou = compute_iou(preds[pi], gts[gi]);
      if (iou >= iou_thresh && iou > best_iou) {
        best_iou = iou;
        best_gt = gi;
      }
    }
    if (best_gt < gts.size()) {
      gt_taken[best_gt] = true;
      result.pairs.push_back({pi, best_gt, best_iou, preds[pi].label == gts[best_gt].label});
    } else {
      result.unmatched_preds.push_back(pi);
    }
  }
  for (std::size_t gi = 0; gi < gts.size(); ++gi)
    if (!gt_taken[gi]) result.unmatched_gts.push_back(gi);
  return result;
}

// ---------------------------------------------------------------------------
// PR curves and average precision
// ---------------------------------------------------------------------------

struct PRPoint {
  double precision = 0.0;
  double recall = 0.0;
  double confidence = 0.0;
};

struct PRCurve {
  std::vector<PRPoint> points;  // one per prediction, confidence descending
  std::int64_t n_gt = 0;
};

/// A detection of one category, flagged true-positive when it matched a
/// ground truth of the same label at the IoU threshold.
struct Detection {
  double confidence = 0.0;
  bool true_positive = false;
};

inline PRCurve pr_curve(std::vector<Detection> detections, std::int64_t n_gt) {
  if (n_gt <= 0) throw DegenerateInputError("pr_curve: no ground truths of this category (AP undefined)");
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
  PRCurve curve;
  curve.n_gt = n_gt;
  std::int64_t tp = 0, fp = 0;
  for (const auto& d : detections) {
    if (d.true_positive) ++tp;
    else ++fp;
    curve.points.push_back({static_cast<double>(tp) / static_cast<double>(tp + fp),
                            static_cast<double>(tp) / static_cast<double>(n_gt), d.confidence});
  }
  return curve;
}

/// Area under the PR curve with all-points interpolation: each recall
/// increment contributes the maximum precision at or beyond it.
inline double average_precision(const PRCurve& curve) {
  if (curve.n_gt <= 0) throw DegenerateInputError("average_precision: no ground truths");
  const auto& pts = curve.points;
  std::vector<double> pmax(pts.size());
  double running = 0.0;
  for (std::size_t i = pts.size(); i-- > 0;) {
    running = std::max(running, pts[i].precision);
    pmax[i] = running;
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].recall > prev_recall) {
      ap += (pts[i].recall - prev_recall) * pmax[i];
      prev_recall = pts[i].recall;
    }
  }
  return ap;
}

// ---------------------------------------------------------------------------
// Aggregate scores
// ---------------------------------------------------------------------------

inline double f1_score(double map50, double mar50) {
  const double denom = map50 + mar50;
  return denom > 0.0 ? 2.0 * map50 * mar50 / denom : 0.0;
}

// ---------------------------------------------------------------------------
// Confusion matrix with a background pseudo-class
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
  std::vector<ObjLabel> labels;              // object labels + Background last
  std::vector<std::vector<std::int64_t>> counts;  // rows: ground truth, cols: prediction

  std::size_t index_of(ObjLabel l) const {
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == l) return i;
    throw InvalidInputError(std::string("confusion matrix has no label '") + label_name(l) + "'");
  }

  std::int64_t row_total(std::size_t r) const {
    std::int64_t t = 0;
    for (auto v : counts[r]) t += v;
    return t;
  }
  std::int64_t col_total(std::size_t c) const {
    std::int64_t t = 0;
    for (const auto& row : counts) t += row[c];
    return t;
  }
  std::int64_t grand_total() const {
    std::int64_t t = 0;
    for (std::size_t r = 0; r < counts.size(); ++r) t += row_total(r);
    return t;
  }
};

inline std::vector<ObjLabel> class_labels(bool three_class) {
  if (three_class)
    return {ObjLabel::Target, ObjLabel::LowDistractor, ObjLabel::HighDistractor, ObjLabel::Background};
  return {ObjLabel::Target, ObjLabel::Distractor, ObjLabel::Background};
}

/// Builds the matrix from a match: pairs land in (gt label, pred label),
/// unmatched predictions in the background row, missed ground truths in the
/// background column.
inline ConfusionMatrix confusion_matrix(const MatchResult& match,
                                        const std::vector<InstanceMask>& preds,
                                        const std::vector<InstanceMask>& gts,
                                        bool three_class = false) {
  ConfusionMatrix cm;
  cm.labels = class_labels(three_class);
  cm.counts.assign(cm.labels.size(), std::vector<std::int64_t>(cm.labels.size(), 0));
  for (const auto& p : match.pairs)
    ++cm.counts[cm.index_of(gts[p.gt_idx].label)][cm.index_of(preds[p.pred_idx].label)];
  const std::size_t bg = cm.index_of(ObjLabel::Background);
  for (std::size_t pi : match.unmatched_preds) ++cm.counts[bg][cm.index_of(preds[pi].label)];
  for (std::size_t gi : match.unmatched_gts) ++cm.counts[cm.index_of(gts[gi].label)][bg];
  return cm;
}

inline ConfusionMatrix merge(const ConfusionMatrix& a, const ConfusionMatrix& b) {
  if (a.labels.empty()) return b;
  if (a.labels != b.labels) throw InvalidInputError("confusion matrix merge: label sets differ");
  ConfusionMatrix out = a;
  for (std::size_t r = 0; r < out.counts.size(); ++r)
    for (std::size_t c = 0; c < out.counts.size(); ++c) out.counts[r][c] += b.counts[r][c];
  return out;
}

/// One-vs-rest accuracy (TP+TN)/(TP+TN+FP+FN) read off the matrix.
inline double class_accuracy(const ConfusionMatrix& cm, ObjLabel label) {
  const std::size_t i = cm.index_of(label);
  const std::int64_t total = cm.grand_total();
  if (total == 0) throw DegenerateInputError("class_accuracy: empty confusion matrix");
  const std::int64_t tp = cm.counts[i][i];
  const std::int64_t fn = cm.row_total(i) - tp;
  const std::int64_t fp = cm.col_total(i) - tp;
  const std::int64_t tn = total - tp - fn - fp;
  return static_cast<double>(tp + tn) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Distraction levels
// ---------------------------------------------------------------------------

/// Number of distinct subjects with at least one fixation on the object. A
/// fixation lies on the object when its pixel is inside the mask; with a
/// positive radius, when any mask pixel falls within that distance.
inline int distraction_level(const InstanceMask& mask,
                             const std::vector<ingest::FixationTrial>& trials,
                             double radius = 0.0) {
  std::vector<int> subjects;
  for (const auto& trial : trials) {
    if (trial.image_dims.width != mask.width || trial.image_dims.height != mask.height)
      throw InvalidInputError("distraction_level: trial dims do not match mask dims");
    bool hit = false;
    for (const auto& f : trial.fixations) {
      const int x = std::clamp(static_cast<int>(std::llround(f.x)), 0, mask.width - 1);
      const int y = std::clamp(static_cast<int>(std::llround(f.y)), 0, mask.height - 1);
      if (radius <= 0.0) {
        hit = mask.bits[static_cast<std::size_t>(y) * mask.width + x] != 0;
      } else {
        const int r = static_cast<int>(std::ceil(radius));
        for (int dy = -r; dy <= r && !hit; ++dy)
          for (int dx = -r; dx <= r && !hit; ++dx) {
            if (dx * dx + dy * dy > radius * radius) continue;
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || nx >= mask.width || ny < 0 || ny >= mask.height) continue;
            hit = mask.bits[static_cast<std::size_t>(ny) * mask.width + nx] != 0;
          }
      }
      if (hit) break;
    }
    if (hit && std::find(subjects.begin(), subjects.end(), trial.subject) == subjects.end())
      subjects.push_back(trial.subject);
  }
  return static_cast<int>(subjects.size());
}

enum class DistractionClass { Low, High };

/// Distractors fixated by 1 or 2 people are low; 3 or more, high. Level 0
/// objects are not distractors.
inline DistractionClass classify_distraction(int level) {
  if (level == 0) throw InvalidInputError("classify_distraction: level 0 is not a distractor");
  if (level < 0 || level > 10)
    throw InvalidInputError("classify_distraction: level " + std::to_string(level) +
                            " outside [0,10]");
  return level <= 2 ? DistractionClass::Low : DistractionClass::High;
}

/// Histogram of distraction levels 0..10; masks without a level are skipped.
inline std::array<std::int64_t, 11> distraction_histogram(const std::vector<InstanceMask>& gts) {
  std::array<std::int64_t, 11> counts{};
  for (const auto& m : gts) {
    if (m.distraction_level < 0) continue;
    if (m.distraction_level > 10)
      throw InvalidInputError("distraction_histogram: level " +
                              std::to_string(m.distraction_level) + " outside [0,10]");
    ++counts[static_cast<std::size_t>(m.distraction_level)];
  }
  return counts;
}

// ---------------------------------------------------------------------------
// Whole-dataset evaluation
// ---------------------------------------------------------------------------

struct ImageInstances {
  std::string image_id;
  std::vector<InstanceMask> preds;
  std::vector<InstanceMask> gts;
};

struct CategoryResult {
  ObjLabel label = ObjLabel::Target;
  double ap = 0.0;
  PRCurve curve;
  double mean_recall = 0.0;
  std::int64_t image_count = 0;    // image/category combos with ground truths
  std::int64_t images_skipped = 0; // combos skipped for having none
};

struct SegEvalResult {
  std::vector<CategoryResult> categories;
  double map50 = 0.0;
  double mar50 = 0.0;
  double f1 = 0.0;
  ConfusionMatrix confusion;
};

/// Matches every image, then aggregates AP per category, mean recall over
/// (image, category) combos with ground truths, MAP/MAR/F1, and the pooled
/// confusion matrix.
inline SegEvalResult evaluate_segmentation(const std::vector<ImageInstances>& images,
                                           double iou_thresh = 0.5, bool three_class = false) {
  auto labels = class_labels(three_class);
  labels.pop_back();  // drop background

  std::map<ObjLabel, std::vector<Detection>> detections;
  std::map<ObjLabel, std::int64_t> gt_totals;
  std::map<ObjLabel, std::pair<double, std::int64_t>> recall_acc;  // sum, count
  std::map<ObjLabel, std::int64_t> recall_skipped;
  SegEvalResult result;

  for (const auto& img : images) {
    const MatchResult match = match_instances(img.preds, img.gts, iou_thresh);
    result.confusion = merge(result.confusion, confusion_matrix(match, img.preds, img.gts, three_class));

    // A prediction is a true positive for its label when it matched a ground
    // truth of the same label.
    std::vector<bool> pred_tp(img.preds.size(), false);
    std::map<ObjLabel, std::int64_t> image_tp;
    for (const auto& p : match.pairs)
      if (p.label_match) {
        pred_tp[p.pred_idx] = true;
        ++image_tp[img.preds[p.pred_idx].label];
      }
    for (std::size_t pi = 0; pi < img.preds.size(); ++pi)
      detections[img.preds[pi].label].push_back({img.preds[pi].confidence, pred_tp[pi]});

    for (ObjLabel label : labels) {
      std::int64_t n_gt = 0;
      for (const auto& g : img.gts) n_gt += g.label == label ? 1 : 0;
      gt_totals[label] += n_gt;
      if (n_gt == 0) {
        ++recall_skipped[label];
        continue;
      }
      auto& [sum, count] = recall_acc[label];
      sum += static_cast<double>(image_tp[label]) / static_cast<double>(n_gt);
      ++count;
    }
  }

  double ap_sum = 0.0, recall_sum = 0.0;
  for (ObjLabel label : labels) {
    CategoryResult cat;
    cat.label = label;
    cat.curve = pr_curve(detections[label], gt_totals[label]);
    cat.ap = average_precision(cat.curve);
    const auto& [sum, count] = recall_acc[label];
    if (count == 0)
      throw DegenerateInputError(std::string("evaluate_segmentation: no image has '") +
                                 label_name(label) + "' ground truths");
    cat.mean_recall = sum / static_cast<double>(count);
    cat.image_count = count;
    cat.images_skipped = recall_skipped[label];
    ap_sum += cat.ap;
    recall_sum += cat.mean_recall;
    result.categories.push_back(std::move(cat));
  }
  result.map50 = ap_sum / static_cast<double>(labels.size());
  result.mar50 = recall_sum / static_cast<double>(labels.size());
  result.f1 = f1_score(result.map50, result.mar50);
  return result;
}

// ---------------------------------------------------------------------------
// COCO-style annotation JSON
//
// Accepted segmentation encodings: polygon lists [[x0,y0,x1,y1,...],...],
// uncompressed RLE {"size":[h,w],"counts":[...]} and compressed RLE
// {"size":[h,w],"counts":"..."} (column-major, starting with the zero run).
// ---------------------------------------------------------------------------

namespace detail {

inline void rasterize_polygon(const std::vector<double>& poly, std::vector<std::uint8_t>& bits,
                              int width, int height) {
  // Even-odd scanline fill against pixel centers.
  const std::size_t n = poly.size() / 2;
  if (n < 3) throw ValidationError("polygon needs at least 3 points");
  for (int y = 0; y < height; ++y) {
    const double py = y + 0.5;
    std::vector<double> xs;
    for (std::size_t i = 0; i < n; ++i) {
      const double x0 = poly[2 * i], y0 = poly[2 * i + 1];
      const double x1 = poly[2 * ((i + 1) % n)], y1 = poly[2 * ((i + 1) % n) + 1];
      if ((y0 <= py) == (y1 <= py)) continue;  // edge does not cross the scanline
      xs.push_back(x0 + (py - y0) / (y1 - y0) * (x1 - x0));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int x_start = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      const int x_end = std::min(width - 1, static_cast<int>(std::floor(xs[k + 1] - 0.5)));
      for (int x = x_start; x <= x_end; ++x)
        bits[static_cast<std::size_t>(y) * width + x] = 1;
    }
  }
}

inline std::vector<std::int64_t> rle_counts_from_string(const std::string& s) {
  // The standard COCO string packing: 6-bit groups biased by 48, with runs
  // above the first two stored as deltas.
  std::vector<std::int64_t> counts;
  std::size_t p = 0;
  while (p < s.size()) {
    std::int64_t x = 0;
    int k = 0;
    bool more = true;
    while (more) {
      if (p >= s.size()) throw ParseError("RLE string truncated", static_cast<std::int64_t>(p));
      const int c = s[p] - 48;
      x |= static_cast<std::int64_t>(c & 0x1f) << (5 * k);
      more = (c & 0x20) != 0;
      ++p;
      ++k;
      if (!more && (c & 0x10)) x |= -1LL << (5 * k);
    }
    if (counts.size() > 2) x += counts[counts.size() - 2];
    counts.push_back(x);
  }
  return counts;
}

inline void fill_from_rle(const std::vector<std::int64_t>& counts, std::vector<std::uint8_t>& bits,
                          int width, int height) {
  // Column-major runs, zeros first.
  std::int64_t pos = 0;
  bool value = false;
  const std::int64_t total = static_cast<std::int64_t>(width) * height;
  for (std::int64_t run : counts) {
    if (run < 0 || pos + run > total)
      throw ValidationError("RLE runs exceed mask size " + std::to_string(width) + "x" +
                            std::to_string(height));
    if (value)
      for (std::int64_t i = pos; i < pos + run; ++i) {
        const std::int64_t row = i % height, col = i / height;
        bits[static_cast<std::size_t>(row) * width + col] = 1;
      }
    pos += run;
    value = !value;
  }
  if (pos != total) throw ValidationError("RLE runs cover " + std::to_string(pos) + " of " +
                                          std::to_string(total) + " pixels");
}

}  // namespace detail

/// Parses a COCO-style annotation file into per-image instance lists.
/// Category names must be target/distractor (or the 3-class names). In
/// three_class mode, plain "distractor" ground truths carrying a
/// distraction_level are classed low/high by the level.
inline std::vector<ImageInstances> load_coco_instances(const std::string& json_text,
                                                       bool expect_scores,
                                                       bool three_class = false) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("annotation JSON: ") + e.what(), static_cast<std::int64_t>(e.byte));
  }
  struct ImageInfo {
    std::string name;
    int width = 0, height = 0;
    std::size_t slot = 0;
  };
  std::map<std::int64_t, ImageInfo> images;
  std::vector<ImageInstances> out;
  for (const auto& im : doc.at("images")) {
    ImageInfo info;
    info.name = im.contains("file_name") ? im["file_name"].get<std::string>()
                                         : std::to_string(im.at("id").get<std::int64_t>());
    info.width = im.at("width").get<int>();
    info.height = im.at("height").get<int>();
    info.slot = out.size();
    images[im.at("id").get<std::int64_t>()] = info;
    out.push_back({info.name, {}, {}});
  }
  std::map<std::int64_t, std::string> categories;
  for (const auto& cat : doc.at("categories"))
    categories[cat.at("id").get<std::int64_t>()] = cat.at("name").get<std::string>();

  for (const auto& ann : doc.at("annotations")) {
    const std::int64_t image_id = ann.at("image_id").get<std::int64_t>();
    auto img_it = images.find(image_id);
    if (img_it == images.end())
      throw ValidationError("annotation references unknown image id " + std::to_string(image_id));
    const ImageInfo& info = img_it->second;

    InstanceMask mask;
    mask.image_id = info.name;
    mask.width = info.width;
    mask.height = info.height;
    mask.bits.assign(static_cast<std::size_t>(info.width) * info.height, 0);

    const std::string cat_name = categories.at(ann.at("category_id").get<std::int64_t>());
    if (cat_name == "target") mask.label = ObjLabel::Target;
    else if (cat_name == "distractor") mask.label = ObjLabel::Distractor;
    else if (cat_name == "low-distractor") mask.label = ObjLabel::LowDistractor;
    else if (cat_name == "high-distractor") mask.label = ObjLabel::HighDistractor;
    else throw ValidationError("unknown category name '" + cat_name + "'");

    if (ann.contains("distraction_level")) mask.distraction_level = ann["distraction_level"].get<int>();
    if (expect_scores) {
      if (!ann.contains("score")) throw ValidationError("prediction annotation missing 'score'");
      mask.confidence = ann["score"].get<double>();
      if (mask.confidence < 0.0 || mask.confidence > 1.0)
        throw ValidationError("score " + format_double(mask.confidence) + " outside [0,1]");
    }
    if (three_class && mask.label == ObjLabel::Distractor) {
      if (mask.distraction_level < 0)
        throw ValidationError("three-class mode needs distraction_level on distractors");
      mask.label = classify_distraction(mask.distraction_level) == DistractionClass::Low
                       ? ObjLabel::LowDistractor
                       : ObjLabel::HighDistractor;
    }

    const auto& seg = ann.at("segmentation");
    if (seg.is_array()) {
      for (const auto& poly : seg) {
        std::vector<double> coords;
        for (const auto& v : poly) coords.push_back(v.get<double>());
        if (coords.size() % 2) throw ValidationError("polygon has an odd coordinate count");
        detail::rasterize_polygon(coords, mask.bits, info.width, info.height);
      }
    } else if (seg.is_object()) {
      const auto& size = seg.at("size");
      if (size.at(0).get<int>() != info.height || size.at(1).get<int>() != info.width)
        throw ValidationError("RLE size does not match image dims");
      std::vector<std::int64_t> counts;
      if (seg.at("counts").is_string())
        counts = detail::rle_counts_from_string(seg["counts"].get<std::string>());
      else
        for (const auto& v : seg["counts"]) counts.push_back(v.get<std::int64_t>());
      detail::fill_from_rle(counts, mask.bits, info.width, info.height);
    } else {
      throw ValidationError("unsupported segmentation encoding");
    }
    if (mask.area() == 0) throw ValidationError("annotation rasterized to an empty mask");

    auto& bucket = out[info.slot];
    (expect_scores ? bucket.preds : bucket.gts).push_back(std::move(mask));
  }
  return out;
}

/// Joins predictions and ground truths by image name.
inline std::vector<ImageInstances> join_instances(std::vector<ImageInstances> gts,
                                                  std::vector<ImageInstances> preds) {
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < gts.size(); ++i) slot[gts[i].image_id] = i;
  for (auto& p : preds) {
    auto it = slot.find(p.image_id);
    if (it == slot.end())
      throw ValidationError("prediction for unknown image '" + p.image_id + "'");
    gts[it->second].preds = std::move(p.preds);
  }
  return gts;
}

}  // namespace fixsearch::segeval

#endif  // FIXSEARCH_SEGEVAL_HPP
