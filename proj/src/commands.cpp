#include "pla/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "binary_io.hpp"
#include "pla/common.hpp"

namespace pla {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void require(const std::string& value, const char* what) {
  if (value.empty()) throw InputError(std::string("missing input: ") + what + " is not set");
  if (!fs::exists(value)) throw InputError(std::string("missing input: ") + what + " " + value);
}

std::string join(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, sep)) out.push_back(part);
  return out;
}

std::vector<CameraFrame> load_scene_frames(const RunConfig& cfg, const std::string& scene_id,
                                           const std::vector<CaptionRecord>& captions) {
  std::vector<CameraFrame> frames;
  const fs::path dir = fs::path(cfg.frames_dir) / scene_id;
  for (const auto& c : captions) {
    const auto txt = (dir / (*c.frame_id + ".txt")).string();
    if (!fs::exists(txt) || !fs::exists(depth_path_for(txt)))
      throw InputError("scene " + scene_id + ": frame " + *c.frame_id +
                       " has a caption but no frame/depth file under " + dir.string());
    frames.push_back(load_frame(txt));
  }
  return frames;
}

}  // namespace

// --- synth -----------------------------------------------------------------

void cmd_synth(const SyntheticSceneSpec& spec, const std::string& out_dir) {
  const SynthDataset data = generate_synthetic(spec);
  const fs::path out(out_dir);
  fs::create_directories(out / "scenes");
  CaptionStore store;
  for (const auto& s : data.scenes) {
    save_scene((out / "scenes" / (s.cloud.scene_id + ".scene")).string(), s.cloud,
               static_cast<std::uint32_t>(data.categories.size()));
    const fs::path fdir = out / "frames" / s.cloud.scene_id;
    fs::create_directories(fdir);
    for (const auto& f : s.frames) save_frame((fdir / (f.frame_id + ".txt")).string(), f);
    store.views.insert(store.views.end(), s.captions.begin(), s.captions.end());
  }
  save_captions((out / "captions.jsonl").string(), store);
  save_lexicon((out / "lexicon.txt").string(), data.lexicon);
  save_embeddings((out / "embeddings.bin").string(), data.embeddings);
  save_category_list((out / "partition.tsv").string(), data.categories);
  io::write_file((out / "synth_spec.json").string(), synth_spec_to_json(spec));

  RunConfig cfg;
  cfg.scenes_dir = "scenes";
  cfg.frames_dir = "frames";
  cfg.captions = "captions.jsonl";
  cfg.embeddings = "embeddings.bin";
  cfg.lexicon = "lexicon.txt";
  cfg.partition = "partition.tsv";
  cfg.out_dir = ".";
  cfg.train.dims.embed = spec.embedding_dim;
  io::write_file((out / "pla.cfg").string(), run_config_to_text(cfg));
  spdlog::info("synth: wrote {} scenes to {}", data.scenes.size(), out_dir);
}

// --- associate -------------------------------------------------------------

std::vector<SceneFile> load_scene_dir(const std::string& dir) {
  if (!fs::is_directory(dir)) throw InputError("missing input: scenes directory " + dir);
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".scene" || ext == ".tsv")) paths.push_back(e.path().string());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw InputError("missing input: no scene files in " + dir);
  std::vector<SceneFile> scenes;
  for (const auto& p : paths) scenes.push_back(load_scene(p));
  std::sort(scenes.begin(), scenes.end(),
            [](const SceneFile& a, const SceneFile& b) { return a.cloud.scene_id < b.cloud.scene_id; });
  return scenes;
}

std::string stats_to_json(const AssociationStats& s) {
  ordered_json levels;
  for (std::size_t l = 0; l < 3; ++l)
    levels[std::string(to_string(static_cast<CaptionLevel>(l)))] = {
        {"captions", s.levels[l].captions}, {"points_per_caption", s.levels[l].points_per_caption}};
  ordered_json j{{"scenes", s.scenes}, {"frames", s.frames}, {"levels", levels}};
  return j.dump(2) + "\n";
}

AssociationStats cmd_associate(const RunConfig& cfg) {
  cfg.validate();
  require(cfg.scenes_dir, "scenes");
  require(cfg.frames_dir, "frames");
  require(cfg.captions, "captions");
  require(cfg.lexicon, "lexicon");
  const auto scenes = load_scene_dir(cfg.scenes_dir);
  const CaptionStore store = load_captions(cfg.captions);
  const Lexicon lexicon = load_lexicon(cfg.lexicon);

  std::vector<PointCaptionPair> all;
  AssociationStats stats;
  std::array<double, 3> point_sum{0, 0, 0};
  for (const auto& sf : scenes) {
    const auto caps = store.views_for(sf.cloud.scene_id);
    if (caps.empty()) {
      spdlog::warn("associate: scene {} has no view captions, skipped", sf.cloud.scene_id);
      continue;
    }
    const auto frames = load_scene_frames(cfg, sf.cloud.scene_id, caps);
    auto pairs = build_pairs(sf.cloud, frames, caps, lexicon, cfg.association, store.summaries);

    std::map<std::string, std::size_t> view_size;
    for (const auto& p : pairs)
      if (p.level == CaptionLevel::View) view_size[*p.caption.frame_id] = p.points.size();
    for (const auto& p : pairs) {
      if (p.level != CaptionLevel::Entity) continue;
      const auto si = view_size.count(*p.caption.frame_id) ? view_size[*p.caption.frame_id] : 0;
      const auto sj = view_size.count(*p.caption.partner_frame_id) ? view_size[*p.caption.partner_frame_id] : 0;
      if (!cfg.association.filter.accepts(p.points.size(), si, sj, EntitySet(split(p.caption.text, ' '))))
        throw NumericError("associate: entity pair violates the size filter in scene " + sf.cloud.scene_id);
    }

    ++stats.scenes;
    stats.frames += frames.size();
    for (const auto& p : pairs) {
      const auto l = static_cast<std::size_t>(p.level);
      ++stats.levels[l].captions;
      point_sum[l] += static_cast<double>(p.points.size());
    }
    std::move(pairs.begin(), pairs.end(), std::back_inserter(all));
  }
  for (std::size_t l = 0; l < 3; ++l)
    if (stats.levels[l].captions) stats.levels[l].points_per_caption = point_sum[l] / stats.levels[l].captions;

  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  const std::string bin = cfg.pairs_path();
  const std::string jsonl = fs::path(bin).replace_extension(".jsonl").string();
  io::write_file(bin, pairs_to_binary(all));
  io::write_file(jsonl, pairs_to_jsonl(all));
  io::write_file((out / "association_stats.json").string(), stats_to_json(stats));
  spdlog::info("associate: {} scene, {} view, {} entity pairs", stats.levels[0].captions,
               stats.levels[1].captions, stats.levels[2].captions);
  return stats;
}

// --- train -----------------------------------------------------------------

void split_labels(const std::vector<int>& labels, const CategoryList& categories,
                  std::vector<int>& sem_labels, std::vector<int>& binary_labels) {
  std::vector<int> row_of(categories.size(), kIgnored);
  int row = 0;
  for (std::size_t k = 0; k < categories.size(); ++k)
    if (categories.is_base(k)) row_of[k] = row++;
  sem_labels.resize(labels.size());
  binary_labels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l == kIgnored) {
      sem_labels[i] = binary_labels[i] = kIgnored;
    } else {
      if (l < 0 || static_cast<std::size_t>(l) >= categories.size())
        throw InputError("label " + std::to_string(l) + " outside the category list");
      sem_labels[i] = row_of[static_cast<std::size_t>(l)];
      binary_labels[i] = categories.is_base(static_cast<std::size_t>(l)) ? 0 : 1;
    }
  }
}

TrainingSet build_training_set(const RunConfig& cfg) {
  cfg.validate();
  require(cfg.scenes_dir, "scenes");
  require(cfg.embeddings, "embeddings");
  require(cfg.partition, "partition");
  require(cfg.pairs_path(), "pairs");
  TrainingSet ts;
  ts.categories = load_category_list(cfg.partition);
  const EmbeddingTable table = load_embeddings(cfg.embeddings);
  if (table.dim() != cfg.train.dims.embed)
    throw InputError(fmt::format("embedding dim {} differs from configured embed_dim {}", table.dim(),
                                 cfg.train.dims.embed));
  const TextEncoder encoder(&table, cfg.fallback_embeddings, cfg.fallback_seed);
  ts.base_rows = category_matrix(ts.categories, encoder, false);

  const auto pairs = load_pairs(cfg.pairs_path());
  std::map<std::string, std::vector<const PointCaptionPair*>> by_scene;
  for (const auto& p : pairs) by_scene[p.points.scene_id].push_back(&p);

  for (const auto& sf : load_scene_dir(cfg.scenes_dir)) {
    if (sf.category_count != ts.categories.size())
      throw InputError(fmt::format("scene {} has {} categories, partition lists {}", sf.cloud.scene_id,
                                   sf.category_count, ts.categories.size()));
    TrainingExample ex;
    ex.scene_id = sf.cloud.scene_id;
    ex.input = encoder_input(sf.cloud, cfg.train.neighborhood_voxel);
    split_labels(sf.cloud.labels, ts.categories, ex.sem_labels, ex.binary_labels);
    std::array<std::vector<const PointCaptionPair*>, 3> per_level;
    for (const auto* p : by_scene[ex.scene_id]) {
      if (p->points.empty()) continue;
      if (p->points.indices.back() >= sf.cloud.size())
        throw InputError("pairs for scene " + ex.scene_id + " index past the point cloud");
      per_level[static_cast<std::size_t>(p->level)].push_back(p);
    }
    for (std::size_t l = 0; l < 3; ++l) {
      CaptionSet& cs = ex.captions[l];
      cs.embeddings.resize(static_cast<Eigen::Index>(per_level[l].size()), table.dim());
      for (std::size_t r = 0; r < per_level[l].size(); ++r) {
        cs.points.push_back(per_level[l][r]->points.indices);
        cs.texts.push_back(per_level[l][r]->caption.text);
        cs.embeddings.row(static_cast<Eigen::Index>(r)) =
            encoder.embed(per_level[l][r]->caption.text).transpose();
      }
    }
    ts.examples.push_back(std::move(ex));
  }
  return ts;
}

Checkpoint make_checkpoint(const ModelParams& params, const RunConfig& cfg,
                           const CategoryList& categories) {
  Checkpoint ck;
  ck.params = params;
  std::vector<std::string> split_names;
  for (std::size_t k = 0; k < categories.size(); ++k)
    split_names.push_back(categories.is_base(k) ? "base" : "novel");
  const auto& t = cfg.train;
  ck.meta = {{"categories", join(categories.names, '\n')},
             {"splits", join(split_names, ',')},
             {"score_temperature", fmt::format("{}", t.score_temperature)},
             {"neighborhood_voxel", fmt::format("{}", t.neighborhood_voxel)},
             {"embed_dim", std::to_string(t.dims.embed)},
             {"alphas", fmt::format("{},{},{}", t.weights.alpha[0], t.weights.alpha[1], t.weights.alpha[2])},
             {"iterations", std::to_string(t.iterations)},
             {"seed", std::to_string(t.seed)}};
  return ck;
}

TrainOutput cmd_train(const RunConfig& cfg) {
  const TrainingSet ts = build_training_set(cfg);
  TrainOutput out;
  out.result = train(ts.examples, ts.base_rows.rows, cfg.train);
  out.checkpoint = make_checkpoint(out.result.params, cfg, ts.categories);

  fs::create_directories(cfg.out_dir);
  save_checkpoint(cfg.checkpoint_path(), out.checkpoint);
  std::string csv = "iteration,scene,lr,total,sem,bi,cap_scene,cap_view,cap_entity,temperature\n";
  for (const auto& r : out.result.trace)
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.iteration, r.scene_id, r.learning_rate,
                       r.loss.total, r.loss.parts.sem, r.loss.parts.bi, r.loss.parts.cap[0],
                       r.loss.parts.cap[1], r.loss.parts.cap[2], r.temperature);
  io::write_file((fs::path(cfg.out_dir) / "loss_trace.csv").string(), csv);
  return out;
}

// --- eval ------------------------------------------------------------------

ConfusionMatrix evaluate_scenes(const ModelParams& params, const std::vector<SceneFile>& scenes,
                                const CategoryList& categories, const Eigen::MatrixXd& all_rows,
                                double score_temperature, double neighborhood_voxel,
                                bool use_calibration) {
  ConfusionMatrix cm(categories.size());
  for (const auto& sf : scenes) {
    const auto pred = predict(params, encoder_input(sf.cloud, neighborhood_voxel), all_rows,
                              categories.base_mask, score_temperature, use_calibration);
    cm.accumulate(pred.labels, sf.cloud.labels);
  }
  return cm;
}

MetricReport cmd_eval(const RunConfig& cfg) {
  cfg.validate();
  require(cfg.scenes_dir, "scenes");
  require(cfg.embeddings, "embeddings");
  require(cfg.partition, "partition");
  require(cfg.checkpoint_path(), "checkpoint");
  const Checkpoint ck = load_checkpoint(cfg.checkpoint_path());
  const CategoryList categories = load_category_list(cfg.partition);
  if (const auto it = ck.meta.find("categories");
      it != ck.meta.end() && split(it->second, '\n') != categories.names)
    throw InputError("category mismatch between checkpoint and partition file " + cfg.partition);

  const EmbeddingTable table = load_embeddings(cfg.embeddings);
  const TextEncoder encoder(&table, cfg.fallback_embeddings, cfg.fallback_seed);
  const CategoryMatrix rows = category_matrix(categories, encoder, true);
  if (rows.rows.cols() != ck.params.adapter.w2.rows())
    throw InputError("embedding dim differs from the checkpoint's adapter output");

  auto meta_double = [&](const char* key, double fallback) {
    const auto it = ck.meta.find(key);
    return it == ck.meta.end() ? fallback : std::stod(it->second);
  };
  const double score_t = meta_double("score_temperature", cfg.train.score_temperature);
  const double voxel = meta_double("neighborhood_voxel", cfg.train.neighborhood_voxel);

  const auto scenes = load_scene_dir(cfg.scenes_dir);
  const ConfusionMatrix cm =
      evaluate_scenes(ck.params, scenes, categories, rows.rows, score_t, voxel, cfg.calibration);
  const MetricReport r = report(cm, categories);

  fs::create_directories(cfg.out_dir);
  const std::string stem = cfg.calibration ? "report" : "report_uncalibrated";
  io::write_file((fs::path(cfg.out_dir) / (stem + ".json")).string(), report_to_json(r));
  io::write_file((fs::path(cfg.out_dir) / (stem + ".txt")).string(), report_to_text(r));
  return r;
}

// --- inspect ---------------------------------------------------------------

std::string cmd_inspect(const std::string& path) {
  const std::string bytes = io::read_file(path);
  const std::string magic = bytes.substr(0, 4);
  std::string out;
  if (magic == "PLAS") {
    const auto sf = load_scene(path);
    const auto& c = sf.cloud;
    out += fmt::format("scene {}: {} points, {} categories\n", c.scene_id, c.size(), sf.category_count);
    const Eigen::RowVector3d lo = c.positions.colwise().minCoeff(), hi = c.positions.colwise().maxCoeff();
    out += fmt::format("bounds min ({:.3f}, {:.3f}, {:.3f}) max ({:.3f}, {:.3f}, {:.3f})\n", lo[0], lo[1],
                       lo[2], hi[0], hi[1], hi[2]);
    std::map<int, std::size_t> hist;
    for (const int l : c.labels) ++hist[l];
    for (const auto& [l, n] : hist) out += fmt::format("  label {:>3}: {}\n", l, n);
  } else if (magic == "PLAE") {
    const auto t = load_embeddings(path);
    out += fmt::format("embedding table: {} entries, dim {}\n", t.size(), t.dim());
    std::size_t shown = 0;
    for (const auto& [k, v] : t.entries()) {
      if (shown++ == 20) {
        out += "  ...\n";
        break;
      }
      out += fmt::format("  \"{}\" |v|={:.4f}\n", k, v.norm());
    }
  } else if (magic == "PLAP") {
    const auto pairs = pairs_from_binary(bytes, path);
    std::array<std::size_t, 3> n{0, 0, 0};
    for (const auto& p : pairs) ++n[static_cast<std::size_t>(p.level)];
    out += fmt::format("pairs: {} total ({} scene, {} view, {} entity)\n", pairs.size(), n[0], n[1], n[2]);
    for (std::size_t i = 0; i < std::min<std::size_t>(pairs.size(), 10); ++i)
      out += fmt::format("  [{}] {} {} points: \"{}\"\n", to_string(pairs[i].level), pairs[i].points.scene_id,
                         pairs[i].points.size(), pairs[i].caption.text);
  } else if (magic == "PLAM") {
    const auto ck = checkpoint_from_bytes(bytes, path);
    out += fmt::format("checkpoint: {} parameters, tau {:.5f}\n", ck.params.parameter_count(),
                       ck.params.temperature());
    ck.params.for_each([&](const std::string& name, const Eigen::MatrixXd& m) {
      out += fmt::format("  {:<26} {}x{}  |w|={:.5f}\n", name, m.rows(), m.cols(), m.norm());
    });
    for (const auto& [k, v] : ck.meta) {
      std::string shown = v;
      std::replace(shown.begin(), shown.end(), '\n', ',');
      out += fmt::format("  meta {} = {}\n", k, shown);
    }
  } else {
    throw InputError(path + ": unrecognized artifact (magic \"" + magic + "\") at byte offset 0");
  }
  return out;
}

}  // namespace pla
