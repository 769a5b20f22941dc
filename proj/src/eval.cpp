#include "pla/eval.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include "pla/common.hpp"

namespace pla {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : counts_(Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(
          static_cast<Eigen::Index>(num_classes), static_cast<Eigen::Index>(num_classes))) {
  if (num_classes == 0) throw InputError("confusion matrix needs at least one class");
}

void ConfusionMatrix::accumulate(const std::vector<int>& predictions, const std::vector<int>& labels) {
  if (predictions.size() != labels.size())
    throw InputError("accumulate: predictions and labels differ in length");
  const auto k = static_cast<int>(classes());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y == kIgnored) continue;
    const int p = predictions[i];
    if (y < 0 || y >= k || p < 0 || p >= k)
      throw InputError(fmt::format("accumulate: index out of range at point {} (label {}, prediction {})",
                                   i, y, p));
    ++counts_(y, p);
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes() != classes()) throw InputError("merge: class count mismatch");
  counts_ += other.counts_;
}

ConfusionMatrix ConfusionMatrix::permuted(const std::vector<std::size_t>& perm) const {
  if (perm.size() != classes()) throw InputError("permuted: wrong permutation length");
  ConfusionMatrix out(classes());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < perm.size(); ++j)
      out.counts_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          counts_(static_cast<Eigen::Index>(perm[i]), static_cast<Eigen::Index>(perm[j]));
  return out;
}

ConfusionMatrix accumulate(ConfusionMatrix cm, const std::vector<int>& predictions,
                           const std::vector<int>& labels) {
  cm.accumulate(predictions, labels);
  return cm;
}

double harmonic_mean_iou(double b, double n) {
  if (b + n <= 0.0) return 0.0;
  return 2.0 * b * n / (b + n);
}

MetricReport report(const ConfusionMatrix& cm, const CategoryList& categories) {
  categories.validate();
  if (categories.size() != cm.classes())
    throw InputError("report: category list does not match confusion matrix");
  MetricReport r;
  r.names = categories.names;
  r.base_mask = categories.base_mask;
  const auto& c = cm.counts();
  double sum_b = 0, sum_n = 0;
  int cnt_b = 0, cnt_n = 0;
  for (Eigen::Index k = 0; k < c.rows(); ++k) {
    const auto tp = c(k, k);
    const auto fn = c.row(k).sum() - tp;
    const auto fp = c.col(k).sum() - tp;
    const auto denom = tp + fp + fn;
    if (denom == 0) {
      r.per_class_iou.emplace_back();
      continue;
    }
    const double iou = static_cast<double>(tp) / static_cast<double>(denom);
    r.per_class_iou.emplace_back(iou);
    if (categories.is_base(static_cast<std::size_t>(k))) {
      sum_b += iou;
      ++cnt_b;
    } else {
      sum_n += iou;
      ++cnt_n;
    }
  }
  if (cnt_b) r.miou_base = sum_b / cnt_b;
  if (cnt_n) r.miou_novel = sum_n / cnt_n;
  if (cnt_b + cnt_n) r.miou_all = (sum_b + sum_n) / (cnt_b + cnt_n);
  if (r.miou_base && r.miou_novel) r.hiou = harmonic_mean_iou(*r.miou_base, *r.miou_novel);
  return r;
}

std::string report_to_json(const MetricReport& r) {
  using nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); };
  ordered_json classes = ordered_json::array();
  for (std::size_t k = 0; k < r.names.size(); ++k)
    classes.push_back({{"name", r.names[k]},
                       {"split", r.base_mask[k] ? "base" : "novel"},
                       {"iou", opt(r.per_class_iou[k])}});
  ordered_json j{{"classes", classes},
                 {"miou_base", opt(r.miou_base)},
                 {"miou_novel", opt(r.miou_novel)},
                 {"miou_all", opt(r.miou_all)},
                 {"hiou", opt(r.hiou)}};
  return j.dump(2) + "\n";
}

std::string report_to_text(const MetricReport& r) {
  auto pct = [](const std::optional<double>& v) {
    return v ? fmt::format("{:6.1f}", 100.0 * *v) : std::string("     -");
  };
  std::string out = fmt::format("{:<20} {:<6} {:>6}\n", "class", "split", "IoU");
  for (std::size_t k = 0; k < r.names.size(); ++k)
    out += fmt::format("{:<20} {:<6} {}\n", r.names[k], r.base_mask[k] ? "base" : "novel",
                       pct(r.per_class_iou[k]));
  out += fmt::format("\nhIoU {}  mIoU(base) {}  mIoU(novel) {}  mIoU(all) {}\n", pct(r.hiou),
                     pct(r.miou_base), pct(r.miou_novel), pct(r.miou_all));
  return out;
}

}  // namespace pla
