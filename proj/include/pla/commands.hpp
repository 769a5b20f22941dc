#pragma once

#include <array>
#include <string>
#include <vector>

#include "pla/config.hpp"
#include "pla/eval.hpp"
#include "pla/model.hpp"
#include "pla/synth.hpp"

namespace pla {

/// Writes scenes/, frames/<scene>/, captions.jsonl, lexicon.txt,
/// embeddings.bin, partition.tsv and pla.cfg under out_dir.
void cmd_synth(const SyntheticSceneSpec& spec, const std::string& out_dir);

struct LevelStats {
  std::size_t captions = 0;
  double points_per_caption = 0;
};

struct AssociationStats {
  std::size_t scenes = 0;
  std::size_t frames = 0;
  std::array<LevelStats, 3> levels;  // scene, view, entity
};

std::string stats_to_json(const AssociationStats& s);

/// Builds pairs for every scene; writes pairs.jsonl, pairs.bin and
/// association_stats.json to the output directory.
AssociationStats cmd_associate(const RunConfig& cfg);

struct TrainOutput {
  TrainResult result;
  Checkpoint checkpoint;
};

/// Trains and writes model.ckpt (or cfg.checkpoint) and loss_trace.csv.
TrainOutput cmd_train(const RunConfig& cfg);

/// Evaluates every scene; writes report.json and report.txt (suffixed
/// "_uncalibrated" when calibration is off).
MetricReport cmd_eval(const RunConfig& cfg);

/// Human-readable summary of any binary artifact (scene, embeddings, pairs,
/// checkpoint).
std::string cmd_inspect(const std::string& path);

// --- shared loading --------------------------------------------------------

/// Scene files (*.scene, *.tsv) in a directory, sorted by scene id.
std::vector<SceneFile> load_scene_dir(const std::string& dir);

struct TrainingSet {
  CategoryList categories;
  CategoryMatrix base_rows;
  std::vector<TrainingExample> examples;
};

TrainingSet build_training_set(const RunConfig& cfg);

/// Maps full-list labels to training rows (novel and ignored become kIgnored)
/// and to binary novelty labels.
void split_labels(const std::vector<int>& labels, const CategoryList& categories,
                  std::vector<int>& sem_labels, std::vector<int>& binary_labels);

/// Confusion matrix of a model over scenes.
ConfusionMatrix evaluate_scenes(const ModelParams& params, const std::vector<SceneFile>& scenes,
                                const CategoryList& categories, const Eigen::MatrixXd& all_rows,
                                double score_temperature, double neighborhood_voxel,
                                bool use_calibration);

Checkpoint make_checkpoint(const ModelParams& params, const RunConfig& cfg,
                           const CategoryList& categories);

}  // namespace pla
