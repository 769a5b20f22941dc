// Command-line front end: synth, associate, train, eval, inspect.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "pla/commands.hpp"
#include "pla/common.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> scenes, frames, captions, embeddings, partition, out, lexicon, checkpoint, pairs;
  std::optional<double> voxel_size, radius, delta;
  std::optional<int> gamma, iters;
  std::optional<std::string> alphas;
  std::optional<long long> seed;
  bool no_calibration = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "key = value config file");
  cmd->add_option("--scenes", o.scenes, "scene directory");
  cmd->add_option("--frames", o.frames, "frame directory (one subdirectory per scene)");
  cmd->add_option("--captions", o.captions, "captions JSON-lines file");
  cmd->add_option("--embeddings", o.embeddings, "embedding table");
  cmd->add_option("--partition", o.partition, "category partition file");
  cmd->add_option("--lexicon", o.lexicon, "entity lexicon");
  cmd->add_option("--checkpoint", o.checkpoint, "checkpoint path");
  cmd->add_option("--pairs", o.pairs, "point-caption pair file");
  cmd->add_option("--voxel-size", o.voxel_size);
  cmd->add_option("--radius", o.radius);
  cmd->add_option("--gamma", o.gamma);
  cmd->add_option("--delta", o.delta);
  cmd->add_option("--alphas", o.alphas, "scene,view,entity caption weights");
  cmd->add_option("--seed", o.seed);
  cmd->add_option("--iters", o.iters);
  cmd->add_option("--out", o.out, "output directory");
}

pla::RunConfig resolve(const Overrides& o) {
  pla::RunConfig cfg = o.config.empty() ? pla::RunConfig{} : pla::load_run_config(o.config);
  auto set = [&](const char* key, const auto& v) {
    if (v) {
      if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, std::string>) cfg.set(key, *v);
      else cfg.set(key, std::to_string(*v));
    }
  };
  set("scenes", o.scenes);
  set("frames", o.frames);
  set("captions", o.captions);
  set("embeddings", o.embeddings);
  set("partition", o.partition);
  set("lexicon", o.lexicon);
  set("checkpoint", o.checkpoint);
  set("pairs", o.pairs);
  set("out", o.out);
  set("voxel_size", o.voxel_size);
  set("radius", o.radius);
  set("gamma", o.gamma);
  set("delta", o.delta);
  set("alphas", o.alphas);
  set("seed", o.seed);
  set("iterations", o.iters);
  if (o.no_calibration) cfg.calibration = false;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  pla::init_logging();
  pla::tune_allocator();
  CLI::App app{"Point-language association: synthetic data, pair building, training, evaluation"};
  app.require_subcommand(1);

  std::string spec_path, synth_out = "synth_out";
  auto* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  synth->add_option("--spec", spec_path, "scene spec JSON (built-in fixture when omitted)");
  synth->add_option("--out", synth_out, "output directory");

  Overrides assoc_o, train_o, eval_o;
  auto* associate = app.add_subcommand("associate", "build scene/view/entity point-caption pairs");
  add_common(associate, assoc_o);
  auto* trn = app.add_subcommand("train", "train the adapter, encoder and binary head");
  add_common(trn, train_o);
  auto* evl = app.add_subcommand("eval", "evaluate open-vocabulary segmentation");
  add_common(evl, eval_o);
  evl->add_flag("--no-calibration", eval_o.no_calibration, "plain softmax over all categories");

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "pretty-print a binary artifact");
  inspect->add_option("path", inspect_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const auto spec = spec_path.empty() ? pla::default_synth_spec() : pla::load_synth_spec(spec_path);
      pla::cmd_synth(spec, synth_out);
    } else if (associate->parsed()) {
      const auto stats = pla::cmd_associate(resolve(assoc_o));
      std::cout << pla::stats_to_json(stats);
    } else if (trn->parsed()) {
      const auto out = pla::cmd_train(resolve(train_o));
      const auto& tr = out.result.trace;
      if (!tr.empty()) std::cout << "final loss " << tr.back().loss.total << "\n";
    } else if (evl->parsed()) {
      std::cout << pla::report_to_text(pla::cmd_eval(resolve(eval_o)));
    } else if (inspect->parsed()) {
      std::cout << pla::cmd_inspect(inspect_path);
    }
  } catch (const pla::NumericError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
