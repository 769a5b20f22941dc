#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pla/text.hpp"

namespace pla {

/// K x K counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  std::size_t classes() const { return static_cast<std::size_t>(counts_.rows()); }
  const Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>& counts() const {
    return counts_;
  }
  std::int64_t total() const { return counts_.sum(); }

  /// Skips kIgnored labels; throws InputError on out-of-range values.
  void accumulate(const std::vector<int>& predictions, const std::vector<int>& labels);
  void merge(const ConfusionMatrix& other);

  /// Simultaneous row/column permutation: new class i is old class perm[i].
  ConfusionMatrix permuted(const std::vector<std::size_t>& perm) const;

 private:
  Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> counts_;
};

ConfusionMatrix accumulate(ConfusionMatrix cm, const std::vector<int>& predictions,
                           const std::vector<int>& labels);

struct MetricReport {
  std::vector<std::string> names;
  std::vector<bool> base_mask;
  std::vector<std::optional<double>> per_class_iou;  // empty when TP+FP+FN = 0
  std::optional<double> miou_base, miou_novel, miou_all;
  std::optional<double> hiou;
};

/// 2 b n / (b + n), or 0 when both are 0.
double harmonic_mean_iou(double miou_base, double miou_novel);

MetricReport report(const ConfusionMatrix& cm, const CategoryList& categories);

/// JSON with per-class IoU, the summary and the partition used.
std::string report_to_json(const MetricReport& r);
/// Fixed-width table in percent.
std::string report_to_text(const MetricReport& r);

}  // namespace pla
