#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "binary_io.hpp"
#include "pla/association.hpp"
#include "pla/common.hpp"

namespace pla {

using nlohmann::json;

namespace {

constexpr std::string_view kPairsMagic = "PLAP";
constexpr std::uint32_t kPairsVersion = 1;

template <class F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t lineno = 0, start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++lineno;
    auto line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) f(line, lineno);
    start = end + 1;
  }
}

}  // namespace

std::vector<CaptionRecord> CaptionStore::views_for(const std::string& scene_id) const {
  std::vector<CaptionRecord> out;
  for (const auto& c : views)
    if (c.scene_id == scene_id) out.push_back(c);
  return out;
}

CaptionStore load_captions(const std::string& path) {
  const std::string text = io::read_file(path);
  CaptionStore store;
  for_each_line(text, [&](std::string_view line, std::size_t lineno) {
    const auto where = path + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError(where + ": " + e.what());
    }
    try {
      CaptionRecord r;
      r.scene_id = j.at("scene").get<std::string>();
      if (j.contains("frame") && !j["frame"].is_null()) r.frame_id = j["frame"].get<std::string>();
      r.level = caption_level_from_string(j.at("level").get<std::string>());
      r.text = j.at("text").get<std::string>();
      if (r.level == CaptionLevel::Entity)
        throw InputError("entity captions are derived, not ingested");
      r.validate();
      if (r.level == CaptionLevel::Scene) {
        if (!store.summaries.emplace(r.scene_id, r.text).second)
          spdlog::warn("{}: duplicate summary for scene {}, keeping the first", where, r.scene_id);
      } else {
        store.views.push_back(std::move(r));
      }
    } catch (const json::exception& e) {
      throw InputError(where + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError(where + ": " + e.what());
    }
  });
  return store;
}

void save_captions(const std::string& path, const CaptionStore& store) {
  std::string out;
  for (const auto& [scene, text] : store.summaries)
    out += json{{"scene", scene}, {"frame", nullptr}, {"level", "scene"}, {"text", text}}.dump() + "\n";
  for (const auto& r : store.views) {
    json j{{"scene", r.scene_id}, {"level", to_string(r.level)}, {"text", r.text}};
    j["frame"] = r.frame_id ? json(*r.frame_id) : json(nullptr);
    out += j.dump() + "\n";
  }
  io::write_file(path, out);
}

Lexicon load_lexicon(const std::string& path) {
  const std::string text = io::read_file(path);
  std::vector<std::string> phrases;
  for_each_line(text, [&](std::string_view line, std::size_t lineno) {
    const auto b = line.find_first_not_of(" \t");
    const auto e = line.find_last_not_of(" \t");
    std::string p(line.substr(b, e - b + 1));
    for (const char c : p)
      if (std::isupper(static_cast<unsigned char>(c)))
        throw InputError(path + ":" + std::to_string(lineno) + ": lexicon entries must be lower-case");
    phrases.push_back(std::move(p));
  });
  if (phrases.empty()) throw InputError(path + ": empty lexicon");
  return Lexicon(std::move(phrases));
}

void save_lexicon(const std::string& path, const Lexicon& lexicon) {
  std::string out;
  for (const auto& p : lexicon.phrases()) out += p + "\n";
  io::write_file(path, out);
}

std::string pairs_to_jsonl(const std::vector<PointCaptionPair>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    json j{{"scene", p.points.scene_id},
           {"level", to_string(p.level)},
           {"caption", p.caption.text},
           {"indices", p.points.indices}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<PointCaptionPair> pairs_from_jsonl(std::string_view text, const std::string& source) {
  std::vector<PointCaptionPair> out;
  for_each_line(text, [&](std::string_view line, std::size_t lineno) {
    try {
      const json j = json::parse(line);
      PointCaptionPair p;
      p.points.scene_id = j.at("scene").get<std::string>();
      p.level = caption_level_from_string(j.at("level").get<std::string>());
      p.points.indices = j.at("indices").get<std::vector<PointIndex>>();
      p.caption.scene_id = p.points.scene_id;
      p.caption.level = p.level;
      p.caption.text = j.at("caption").get<std::string>();
      if (!std::is_sorted(p.points.indices.begin(), p.points.indices.end()) ||
          std::adjacent_find(p.points.indices.begin(), p.points.indices.end()) !=
              p.points.indices.end())
        throw InputError("indices not strictly increasing");
      out.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw InputError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  });
  return out;
}

std::string pairs_to_binary(const std::vector<PointCaptionPair>& pairs) {
  io::Writer w;
  w.magic(kPairsMagic);
  w.u32(kPairsVersion);
  w.u32(static_cast<std::uint32_t>(pairs.size()));
  for (const auto& p : pairs) {
    w.str(p.points.scene_id);
    w.u8(static_cast<std::uint8_t>(p.level));
    w.str(p.caption.text);
    w.u32(static_cast<std::uint32_t>(p.points.indices.size()));
    for (const auto i : p.points.indices) w.u32(i);
  }
  return w.bytes();
}

std::vector<PointCaptionPair> pairs_from_binary(std::string_view bytes, const std::string& source) {
  io::Reader r(bytes, source);
  r.expect_magic(kPairsMagic);
  r.expect_version(kPairsVersion);
  const auto count = r.u32();
  std::vector<PointCaptionPair> out;
  out.reserve(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    PointCaptionPair p;
    p.points.scene_id = r.str();
    const auto level = r.u8();
    if (level > 2) r.fail("bad caption level " + std::to_string(level));
    p.level = static_cast<CaptionLevel>(level);
    p.caption.text = r.str();
    p.caption.scene_id = p.points.scene_id;
    p.caption.level = p.level;
    const auto n = r.u32();
    if (r.remaining() / 4 < n) r.fail("truncated index list");
    p.points.indices.resize(n);
    for (auto& i : p.points.indices) i = r.u32();
    out.push_back(std::move(p));
  }
  if (!r.done()) r.fail("trailing bytes");
  return out;
}

std::vector<PointCaptionPair> load_pairs(const std::string& path) {
  const std::string bytes = io::read_file(path);
  if (std::filesystem::path(path).extension() == ".jsonl") return pairs_from_jsonl(bytes, path);
  return pairs_from_binary(bytes, path);
}

}  // namespace pla
