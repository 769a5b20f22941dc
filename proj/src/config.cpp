#include "pla/config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "pla/common.hpp"

namespace pla {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InputError("config " + key + ": expected a number, got \"" + v + "\"");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw InputError("config " + key + ": expected an integer, got \"" + v + "\"");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw InputError("config " + key + ": expected true/false, got \"" + v + "\"");
}

std::string num(double v) { return fmt::format("{}", v); }

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto& a = association;
  auto& t = train;
  if (key == "scenes") scenes_dir = v;
  else if (key == "frames") frames_dir = v;
  else if (key == "captions") captions = v;
  else if (key == "embeddings") embeddings = v;
  else if (key == "lexicon") lexicon = v;
  else if (key == "partition") partition = v;
  else if (key == "out") out_dir = v;
  else if (key == "pairs") pairs = v;
  else if (key == "checkpoint") checkpoint = v;
  else if (key == "voxel_size") a.voxel_size = to_double(key, v);
  else if (key == "radius") a.radius = to_double(key, v);
  else if (key == "stride") a.stride = static_cast<int>(to_int(key, v));
  else if (key == "gamma") a.filter.gamma = static_cast<int>(to_int(key, v));
  else if (key == "delta") a.filter.delta = to_double(key, v);
  else if (key == "adjacency") {
    if (v == "consecutive") a.adjacency = Adjacency::Consecutive;
    else if (v == "all") a.adjacency = Adjacency::AllPairs;
    else throw InputError("config adjacency: expected consecutive or all");
  } else if (key == "alphas") {
    std::stringstream ss(v);
    std::string part;
    std::vector<double> vals;
    while (std::getline(ss, part, ',')) vals.push_back(to_double(key, trim(part)));
    if (vals.size() != 3) throw InputError("config alphas: expected three comma-separated values");
    t.weights.alpha = {vals[0], vals[1], vals[2]};
  } else if (key == "lr") t.learning_rate = to_double(key, v);
  else if (key == "weight_decay") t.weight_decay = to_double(key, v);
  else if (key == "iterations") t.iterations = static_cast<int>(to_int(key, v));
  else if (key == "seed") t.seed = static_cast<std::uint64_t>(to_int(key, v));
  else if (key == "hidden") t.dims.hidden = static_cast<int>(to_int(key, v));
  else if (key == "feature_dim") t.dims.feature = static_cast<int>(to_int(key, v));
  else if (key == "adapter_hidden") t.dims.adapter_hidden = static_cast<int>(to_int(key, v));
  else if (key == "embed_dim") t.dims.embed = static_cast<int>(to_int(key, v));
  else if (key == "score_temperature") t.score_temperature = to_double(key, v);
  else if (key == "tau_init") t.tau_init = to_double(key, v);
  else if (key == "neighborhood_voxel") t.neighborhood_voxel = to_double(key, v);
  else if (key == "max_pairs_per_level") t.max_pairs_per_level = static_cast<int>(to_int(key, v));
  else if (key == "calibration") calibration = to_bool(key, v);
  else if (key == "fallback_embeddings") fallback_embeddings = to_bool(key, v);
  else if (key == "fallback_seed") fallback_seed = static_cast<std::uint64_t>(to_int(key, v));
  else throw InputError("unknown config key \"" + key + "\"");
}

void RunConfig::validate() const {
  if (association.filter.gamma < 1) throw InputError("gamma must be >= 1");
  if (!(association.filter.delta > 0 && association.filter.delta <= 1))
    throw InputError("delta must lie in (0, 1]");
  if (!(association.voxel_size > 0)) throw InputError("voxel_size must be positive");
  if (!(association.radius > 0)) throw InputError("radius must be positive");
  if (association.stride < 1) throw InputError("stride must be >= 1");
  train.validate();
}

std::string RunConfig::pairs_path() const {
  return pairs.empty() ? (fs::path(out_dir) / "pairs.bin").string() : pairs;
}

std::string RunConfig::checkpoint_path() const {
  return checkpoint.empty() ? (fs::path(out_dir) / "model.ckpt").string() : checkpoint;
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  const auto& a = association;
  const auto& t = train;
  return {
      {"scenes", scenes_dir},
      {"frames", frames_dir},
      {"captions", captions},
      {"embeddings", embeddings},
      {"lexicon", lexicon},
      {"partition", partition},
      {"out", out_dir},
      {"pairs", pairs},
      {"checkpoint", checkpoint},
      {"voxel_size", num(a.voxel_size)},
      {"radius", num(a.radius)},
      {"stride", std::to_string(a.stride)},
      {"gamma", std::to_string(a.filter.gamma)},
      {"delta", num(a.filter.delta)},
      {"adjacency", a.adjacency == Adjacency::Consecutive ? "consecutive" : "all"},
      {"alphas", fmt::format("{},{},{}", t.weights.alpha[0], t.weights.alpha[1], t.weights.alpha[2])},
      {"lr", num(t.learning_rate)},
      {"weight_decay", num(t.weight_decay)},
      {"iterations", std::to_string(t.iterations)},
      {"seed", std::to_string(t.seed)},
      {"hidden", std::to_string(t.dims.hidden)},
      {"feature_dim", std::to_string(t.dims.feature)},
      {"adapter_hidden", std::to_string(t.dims.adapter_hidden)},
      {"embed_dim", std::to_string(t.dims.embed)},
      {"score_temperature", num(t.score_temperature)},
      {"tau_init", num(t.tau_init)},
      {"neighborhood_voxel", num(t.neighborhood_voxel)},
      {"max_pairs_per_level", std::to_string(t.max_pairs_per_level)},
      {"calibration", calibration ? "true" : "false"},
      {"fallback_embeddings", fallback_embeddings ? "true" : "false"},
      {"fallback_seed", std::to_string(fallback_seed)},
  };
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  RunConfig cfg;
  const fs::path base = fs::path(path).parent_path();
  static const char* const kPathKeys[] = {"scenes",    "frames", "captions", "embeddings",
                                          "lexicon",   "partition", "out",   "pairs",
                                          "checkpoint"};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InputError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    for (const char* pk : kPathKeys)
      if (key == pk && !value.empty() && fs::path(value).is_relative())
        value = (base / value).lexically_normal().string();
    try {
      cfg.set(key, value);
    } catch (const InputError& e) {
      throw InputError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

std::string run_config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : cfg.entries())
    if (!v.empty()) out += k + " = " + v + "\n";
  return out;
}

}  // namespace pla
