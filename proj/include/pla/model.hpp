#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "pla/association.hpp"
#include "pla/geometry.hpp"
#include "pla/text.hpp"

namespace pla {

/// Per-point encoder input: position, color, and the mean position and color
/// of the point's voxel cell.
inline constexpr int kEncoderInputDim = 12;

struct ModelDims {
  int hidden = 32;          // encoder hidden width
  int feature = 32;         // encoder output D
  int adapter_hidden = 32;  // adapter hidden width
  int embed = 64;           // text embedding dim

  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

/// Two affine layers with a SiLU in between.
struct EncoderParams {
  Eigen::MatrixXd w1, b1;  // hidden x 12, hidden x 1
  Eigen::MatrixXd w2, b2;  // feature x hidden, feature x 1
};

/// Affine, layer normalization with learned gain/shift, SiLU, affine. Holds
/// the contrastive temperature as log(tau).
struct AdapterParams {
  Eigen::MatrixXd w1, b1;          // adapter_hidden x feature
  Eigen::MatrixXd gain, shift;     // adapter_hidden x 1
  Eigen::MatrixXd w2, b2;          // embed x adapter_hidden
  Eigen::MatrixXd log_temperature; // 1 x 1
};

struct BinaryHeadParams {
  Eigen::MatrixXd w, b;  // 1 x feature, 1 x 1
};

inline constexpr double kMinTemperature = 1e-3;
inline constexpr double kMaxTemperature = 1e3;

struct ModelParams {
  EncoderParams encoder;
  AdapterParams adapter;
  BinaryHeadParams binary;

  /// Visits every tensor in a fixed order with a stable name.
  void for_each(const std::function<void(const std::string&, Eigen::MatrixXd&)>& f);
  void for_each(const std::function<void(const std::string&, const Eigen::MatrixXd&)>& f) const;

  ModelParams zeros_like() const;
  double temperature() const;
  void clamp_temperature();
  bool all_finite() const;
  std::size_t parameter_count() const;
};

/// Random init: uniform fan-in scaled weights, zero biases, unit gain, tau_init.
ModelParams init_params(const ModelDims& dims, double tau_init, std::uint64_t seed);

Eigen::MatrixXd encoder_input(const PointCloud& scene, double neighborhood_voxel);

/// Point features f^p (N x D).
Eigen::MatrixXd encode(const PointCloud& scene, const EncoderParams& params,
                       double neighborhood_voxel);
Eigen::MatrixXd encode_input(const Eigen::MatrixXd& input, const EncoderParams& params);

/// Adapted features f^v, unit-normalized per row.
Eigen::MatrixXd adapt(const Eigen::MatrixXd& features, const AdapterParams& adapter);

Eigen::VectorXd binary_logits(const Eigen::MatrixXd& features, const BinaryHeadParams& head);

/// Row-stochastic N x K class probabilities.
struct ScoreField {
  Eigen::MatrixXd probs;

  Eigen::Index points() const { return probs.rows(); }
  Eigen::Index classes() const { return probs.cols(); }
  void validate(double tol = 1e-5) const;
  std::vector<int> argmax() const;
};

/// softmax((normalize(adapter(features)) . rows^T) / score_temperature).
ScoreField semantic_scores(const Eigen::MatrixXd& features, const AdapterParams& adapter,
                           const Eigen::MatrixXd& category_rows, double score_temperature);

/// Row-wise softmax restricted to the columns where `mask` is true; other
/// columns are zero.
ScoreField masked_softmax(const Eigen::MatrixXd& logits, const std::vector<bool>& mask);

/// s = s_B (1 - s_b) + s_N s_b, row by row.
ScoreField calibrate(const ScoreField& scores_base_only, const ScoreField& scores_novel_only,
                     const Eigen::VectorXd& binary);

/// Mean -log p(label) over non-ignored points; 0 when every point is ignored.
double semantic_loss(const ScoreField& scores, const std::vector<int>& labels);

/// Mean stable BCE-with-logits over non-ignored points (labels 0, 1 or kIgnored).
double binary_loss(const Eigen::VectorXd& logits, const std::vector<int>& labels);

struct PooledCaption {
  Eigen::VectorXd feature;  // pooled f^v, unit norm
  std::string text;
};

/// Drops later duplicate captions, then mean cross-entropy of each pooled
/// feature against its own caption among the surviving captions.
double caption_loss(const std::vector<PooledCaption>& pairs, const TextEncoder& encoder,
                    double temperature);

struct LossWeights {
  std::array<double, 3> alpha{0.0, 0.05, 0.05};  // scene, view, entity
  void validate() const;
};

struct LossComponents {
  double sem = 0, bi = 0;
  std::array<double, 3> cap{0, 0, 0};
};

double total_loss(const LossComponents& c, const LossWeights& w);

// --- training --------------------------------------------------------------

/// Caption pairs of one level with their unit caption embeddings.
struct CaptionSet {
  std::vector<std::vector<PointIndex>> points;
  std::vector<std::string> texts;
  Eigen::MatrixXd embeddings;  // n x embed

  std::size_t size() const { return texts.size(); }
  /// Keeps the first pair of every caption text.
  CaptionSet deduplicated() const;
  CaptionSet subset(const std::vector<std::size_t>& keep) const;
};

struct TrainingExample {
  std::string scene_id;
  Eigen::MatrixXd input;           // N x 12
  std::vector<int> sem_labels;     // index into the training category rows, or kIgnored
  std::vector<int> binary_labels;  // 1 novel/unannotated, 0 base, or kIgnored
  std::array<CaptionSet, 3> captions;
};

struct LossBreakdown {
  LossComponents parts;
  double total = 0;
  std::array<std::size_t, 3> caption_count{0, 0, 0};
};

/// Full forward pass; fills `grad` (same layout as params) when non-null.
LossBreakdown forward_backward(const ModelParams& params, const TrainingExample& example,
                               const Eigen::MatrixXd& category_rows, const LossWeights& weights,
                               double score_temperature, ModelParams* grad);

struct TrainConfig {
  ModelDims dims;
  LossWeights weights;
  double learning_rate = 0.004;
  double weight_decay = 0.01;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int iterations = 400;
  std::uint64_t seed = 0;
  double score_temperature = 0.01;
  double tau_init = 0.07;
  double neighborhood_voxel = 0.1;
  int max_pairs_per_level = 64;

  void validate() const;
};

struct TraceRow {
  int iteration = 0;
  std::string scene_id;
  double learning_rate = 0;
  LossBreakdown loss;
  double temperature = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<TraceRow> trace;
};

/// AdamW with cosine-decayed learning rate, one scene per step. Throws
/// NumericError naming the component when a loss turns non-finite.
TrainResult train(const std::vector<TrainingExample>& dataset, const Eigen::MatrixXd& category_rows,
                  const TrainConfig& config, std::optional<ModelParams> init = std::nullopt);

// --- inference -------------------------------------------------------------

struct Prediction {
  std::vector<int> labels;     // argmax over the full category list
  ScoreField scores;
  Eigen::VectorXd novel_prob;  // s_b
};

/// Open-vocabulary semantic prediction. With calibration, base and novel
/// softmaxes are mixed by the binary head; without it one softmax spans all
/// categories.
Prediction predict(const ModelParams& params, const Eigen::MatrixXd& input,
                   const Eigen::MatrixXd& all_category_rows, const std::vector<bool>& base_mask,
                   double score_temperature, bool use_calibration);

// --- checkpoints -----------------------------------------------------------

struct Checkpoint {
  ModelParams params;
  std::map<std::string, std::string> meta;
};

std::string checkpoint_to_bytes(const Checkpoint& ckpt);
Checkpoint checkpoint_from_bytes(std::string_view bytes, const std::string& source);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace pla
