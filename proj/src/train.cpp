#include <cmath>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "pla/common.hpp"
#include "pla/model.hpp"

namespace pla {

void TrainConfig::validate() const {
  dims.validate();
  weights.validate();
  if (!(learning_rate > 0)) throw InputError("learning rate must be positive");
  if (weight_decay < 0) throw InputError("weight decay must be >= 0");
  if (iterations < 0) throw InputError("iterations must be >= 0");
  if (!(score_temperature > 0)) throw InputError("score temperature must be positive");
  if (!(neighborhood_voxel > 0)) throw InputError("neighborhood voxel must be positive");
  if (max_pairs_per_level < 1) throw InputError("max pairs per level must be >= 1");
}

namespace {

bool decays(const std::string& name) {
  const auto dot = name.rfind('.');
  return name.compare(dot + 1, 1, "w") == 0;
}

void check_finite(const LossBreakdown& l, int iteration, const std::string& scene) {
  auto bad = [&](const char* what) {
    throw NumericError("non-finite " + std::string(what) + " loss at iteration " +
                       std::to_string(iteration) + " (scene " + scene + ")");
  };
  if (!std::isfinite(l.parts.sem)) bad("semantic");
  if (!std::isfinite(l.parts.bi)) bad("binary");
  if (!std::isfinite(l.parts.cap[0])) bad("scene caption");
  if (!std::isfinite(l.parts.cap[1])) bad("view caption");
  if (!std::isfinite(l.parts.cap[2])) bad("entity caption");
  if (!std::isfinite(l.total)) bad("total");
}

// Up to `cap` caption pairs, drawn without replacement after de-duplication.
CaptionSet sample_captions(const CaptionSet& all, int cap, std::mt19937_64& rng) {
  CaptionSet unique = all.deduplicated();
  if (unique.size() <= static_cast<std::size_t>(cap)) return unique;
  std::vector<std::size_t> idx(unique.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < static_cast<std::size_t>(cap); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(static_cast<std::size_t>(cap));
  std::sort(idx.begin(), idx.end());
  return unique.subset(idx);
}

}  // namespace

TrainResult train(const std::vector<TrainingExample>& dataset, const Eigen::MatrixXd& category_rows,
                  const TrainConfig& config, std::optional<ModelParams> init) {
  config.validate();
  TrainResult result;
  result.params = init ? std::move(*init)
                       : init_params(config.dims, config.tau_init, config.seed);
  if (config.iterations == 0) return result;
  if (dataset.empty()) throw InputError("train: empty dataset");
  if (category_rows.cols() != config.dims.embed)
    throw InputError("train: category embedding dim differs from model embed dim");

  ModelParams& params = result.params;
  ModelParams m1 = params.zeros_like();
  ModelParams m2 = params.zeros_like();
  std::mt19937_64 rng(config.seed ^ 0x5eedULL);

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();

  for (int it = 0; it < config.iterations; ++it) {
    if (cursor == order.size()) {
      for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
      cursor = 0;
    }
    const TrainingExample& full = dataset[order[cursor++]];
    TrainingExample batch;
    batch.scene_id = full.scene_id;
    for (std::size_t l = 0; l < 3; ++l)
      batch.captions[l] = sample_captions(full.captions[l], config.max_pairs_per_level, rng);
    // labels and inputs are shared read-only; copy is the simple route at desk scale
    batch.input = full.input;
    batch.sem_labels = full.sem_labels;
    batch.binary_labels = full.binary_labels;

    ModelParams grad;
    const LossBreakdown loss = forward_backward(params, batch, category_rows, config.weights,
                                                config.score_temperature, &grad);
    check_finite(loss, it, batch.scene_id);

    const double lr = config.learning_rate * 0.5 *
                      (1.0 + std::cos(M_PI * static_cast<double>(it) / config.iterations));
    const double t = static_cast<double>(it + 1);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);

    std::vector<Eigen::MatrixXd*> gs, ms, vs;
    grad.for_each([&](const std::string&, Eigen::MatrixXd& g) { gs.push_back(&g); });
    m1.for_each([&](const std::string&, Eigen::MatrixXd& m) { ms.push_back(&m); });
    m2.for_each([&](const std::string&, Eigen::MatrixXd& v) { vs.push_back(&v); });
    std::size_t k = 0;
    params.for_each([&](const std::string& name, Eigen::MatrixXd& p) {
      const Eigen::MatrixXd& g = *gs[k];
      Eigen::MatrixXd& m = *ms[k];
      Eigen::MatrixXd& v = *vs[k];
      ++k;
      m = config.beta1 * m + (1.0 - config.beta1) * g;
      v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
      if (decays(name)) p *= 1.0 - lr * config.weight_decay;
      p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + config.adam_eps);
    });
    params.clamp_temperature();
    if (!params.all_finite())
      throw NumericError("non-finite parameters after iteration " + std::to_string(it));

    result.trace.push_back({it, batch.scene_id, lr, loss, params.temperature()});
    spdlog::debug("iter {} scene {} total {:.5f} sem {:.5f} bi {:.5f} cap {:.4f}/{:.4f}/{:.4f}", it,
                  batch.scene_id, loss.total, loss.parts.sem, loss.parts.bi, loss.parts.cap[0],
                  loss.parts.cap[1], loss.parts.cap[2]);
  }
  return result;
}

}  // namespace pla
