#include "pla/association.hpp"

#include <algorithm>
#include <cassert>
#include <cctype>
#include <iterator>
#include <numeric>
#include <set>

#include "pla/common.hpp"

namespace pla {

std::string_view to_string(CaptionLevel level) {
  switch (level) {
    case CaptionLevel::Scene: return "scene";
    case CaptionLevel::View: return "view";
    case CaptionLevel::Entity: return "entity";
  }
  return "unknown";
}

CaptionLevel caption_level_from_string(std::string_view s) {
  if (s == "scene") return CaptionLevel::Scene;
  if (s == "view") return CaptionLevel::View;
  if (s == "entity") return CaptionLevel::Entity;
  throw InputError("unknown caption level \"" + std::string(s) + "\"");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

bool is_word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

void CaptionRecord::validate() const {
  if (scene_id.empty()) throw InputError("caption without scene id");
  if (level != CaptionLevel::Scene && !frame_id)
    throw InputError("scene " + scene_id + ": " + std::string(to_string(level)) +
                     " caption without frame id");
  if (level == CaptionLevel::Entity && !partner_frame_id)
    throw InputError("scene " + scene_id + ": entity caption without frame pair");
  if (level != CaptionLevel::Entity && trim(text).empty())
    throw InputError("scene " + scene_id + ": empty caption text");
}

// --- entity sets -----------------------------------------------------------

EntitySet::EntitySet(std::vector<std::string> words) : words_(std::move(words)) {
  for (const auto& w : words_) {
    if (w.empty()) throw InputError("empty entity word");
    if (std::any_of(w.begin(), w.end(), [](unsigned char c) { return std::isupper(c); }))
      throw InputError("entity word must be lower-case: " + w);
  }
  std::sort(words_.begin(), words_.end());
  words_.erase(std::unique(words_.begin(), words_.end()), words_.end());
}

std::string EntitySet::concat() const {
  std::string out;
  for (const auto& w : words_) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

EntitySet EntitySet::difference(const EntitySet& other) const {
  EntitySet r;
  std::set_difference(words_.begin(), words_.end(), other.words_.begin(), other.words_.end(),
                      std::back_inserter(r.words_));
  return r;
}

EntitySet EntitySet::intersection(const EntitySet& other) const {
  EntitySet r;
  std::set_intersection(words_.begin(), words_.end(), other.words_.begin(), other.words_.end(),
                        std::back_inserter(r.words_));
  return r;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Lexicon::Lexicon(std::vector<std::string> phrases) : phrases_(std::move(phrases)) {
  std::sort(phrases_.begin(), phrases_.end());
  phrases_.erase(std::unique(phrases_.begin(), phrases_.end()), phrases_.end());
  tokens_.reserve(phrases_.size());
  for (const auto& p : phrases_) {
    auto toks = tokenize(p);
    if (toks.empty()) throw InputError("lexicon entry has no words: \"" + p + "\"");
    tokens_.push_back(std::move(toks));
  }
  order_.resize(phrases_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
    return tokens_[a].size() > tokens_[b].size();
  });
}

namespace {

// Caption token matches a vocabulary token directly or as its s/es plural.
bool token_matches(const std::string& caption_tok, const std::string& vocab_tok, bool allow_plural) {
  if (caption_tok == vocab_tok) return true;
  if (!allow_plural || caption_tok.size() <= vocab_tok.size()) return false;
  if (caption_tok.compare(0, vocab_tok.size(), vocab_tok) != 0) return false;
  const std::string_view suffix(caption_tok.data() + vocab_tok.size(),
                                caption_tok.size() - vocab_tok.size());
  return suffix == "s" || suffix == "es";
}

}  // namespace

EntitySet Lexicon::extract(std::string_view caption) const {
  const auto toks = tokenize(caption);
  std::vector<std::string> found;
  std::size_t pos = 0;
  while (pos < toks.size()) {
    std::size_t consumed = 0;
    for (const std::size_t k : order_) {
      const auto& phrase = tokens_[k];
      if (pos + phrase.size() > toks.size()) continue;
      bool ok = true;
      for (std::size_t t = 0; t < phrase.size() && ok; ++t)
        ok = token_matches(toks[pos + t], phrase[t], t + 1 == phrase.size());
      if (ok) {
        found.push_back(phrases_[k]);
        consumed = phrase.size();
        break;
      }
    }
    pos += consumed > 0 ? consumed : 1;
  }
  return EntitySet(std::move(found));
}

EntitySet extract_entities(std::string_view caption, const Lexicon& vocabulary) {
  return vocabulary.extract(caption);
}

// --- scene captions --------------------------------------------------------

CaptionRecord scene_caption(const std::vector<CaptionRecord>& view_captions,
                            const SceneSummaries& summaries) {
  if (view_captions.empty()) throw InputError("scene caption requested for a scene without views");
  const std::string& scene = view_captions.front().scene_id;
  for (const auto& c : view_captions) {
    if (c.scene_id != scene)
      throw InputError("scene_caption: mixed scenes " + scene + " and " + c.scene_id);
    if (c.level != CaptionLevel::View)
      throw InputError("scene_caption: expected view-level captions for scene " + scene);
  }
  CaptionRecord out;
  out.scene_id = scene;
  out.level = CaptionLevel::Scene;
  if (const auto it = summaries.find(scene); it != summaries.end()) {
    out.text = it->second;
    return out;
  }
  std::set<std::string> seen;
  for (const auto& c : view_captions) {
    std::string t = trim(c.text);
    if (t.empty() || !seen.insert(t).second) continue;
    if (!out.text.empty()) out.text += ' ';
    out.text += t;
  }
  return out;
}

// --- entity pairs ----------------------------------------------------------

std::vector<PointIndex> sorted_difference(const std::vector<PointIndex>& a,
                                          const std::vector<PointIndex>& b) {
  std::vector<PointIndex> r;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r));
  return r;
}

std::vector<PointIndex> sorted_intersection(const std::vector<PointIndex>& a,
                                            const std::vector<PointIndex>& b) {
  std::vector<PointIndex> r;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r));
  return r;
}

void EntityFilter::validate() const {
  if (gamma < 1) throw InputError("gamma must be >= 1");
  if (!(delta > 0.0 && delta <= 1.0)) throw InputError("delta must lie in (0, 1]");
}

bool EntityFilter::accepts(std::size_t points, std::size_t size_i, std::size_t size_j,
                           const EntitySet& words) const {
  const double upper = delta * static_cast<double>(std::min(size_i, size_j));
  return static_cast<long long>(points) > gamma && static_cast<double>(points) < upper &&
         !words.empty();
}

std::vector<PointCaptionPair> entity_pairs(const ViewEntry& view_i, const ViewEntry& view_j,
                                           const EntityFilter& filter) {
  filter.validate();
  if (view_i.points.scene_id != view_j.points.scene_id)
    throw InputError("entity_pairs: views from different scenes");
  const auto& pi = view_i.points.indices;
  const auto& pj = view_j.points.indices;

  struct Candidate {
    std::vector<PointIndex> points;
    EntitySet words;
  };
  const std::array<Candidate, 3> cands{
      Candidate{sorted_difference(pi, pj), view_i.words.difference(view_j.words)},
      Candidate{sorted_difference(pj, pi), view_j.words.difference(view_i.words)},
      Candidate{sorted_intersection(pi, pj), view_i.words.intersection(view_j.words)}};

#ifndef NDEBUG
  {
    std::vector<PointIndex> uni;
    std::set_union(pi.begin(), pi.end(), pj.begin(), pj.end(), std::back_inserter(uni));
    assert(cands[0].points.size() + cands[1].points.size() + cands[2].points.size() == uni.size());
    assert(sorted_intersection(cands[0].points, cands[1].points).empty());
  }
#endif

  std::vector<PointCaptionPair> out;
  for (const auto& c : cands) {
    if (!filter.accepts(c.points.size(), pi.size(), pj.size(), c.words)) continue;
    PointCaptionPair p;
    p.level = CaptionLevel::Entity;
    p.points = {view_i.points.scene_id, c.points};
    p.caption.scene_id = view_i.points.scene_id;
    p.caption.level = CaptionLevel::Entity;
    p.caption.frame_id = view_i.frame_id;
    p.caption.partner_frame_id = view_j.frame_id;
    p.caption.text = c.words.concat();
    out.push_back(std::move(p));
  }
  return out;
}

// --- full pipeline ---------------------------------------------------------

std::vector<PointCaptionPair> build_pairs(const PointCloud& scene,
                                          const std::vector<CameraFrame>& frames,
                                          const std::vector<CaptionRecord>& captions,
                                          const Lexicon& lexicon, const AssociationConfig& config,
                                          const SceneSummaries& summaries) {
  config.filter.validate();
  std::map<std::string, const CaptionRecord*> by_frame;
  for (const auto& c : captions) {
    if (c.scene_id != scene.scene_id || c.level != CaptionLevel::View || !c.frame_id) continue;
    by_frame.emplace(*c.frame_id, &c);
  }

  std::vector<const CameraFrame*> ordered;
  for (const auto& f : frames) ordered.push_back(&f);
  for (const auto& [frame_id, _] : by_frame)
    if (std::none_of(frames.begin(), frames.end(),
                     [&](const CameraFrame& f) { return f.frame_id == frame_id; }))
      throw InputError("scene " + scene.scene_id + ": caption for frame " + frame_id +
                       " but no depth frame");
  std::sort(ordered.begin(), ordered.end(),
            [](const CameraFrame* a, const CameraFrame* b) { return a->frame_id < b->frame_id; });

  std::vector<ViewEntry> views;
  std::vector<CaptionRecord> view_caps;
  for (const CameraFrame* f : ordered) {
    const auto it = by_frame.find(f->frame_id);
    if (it == by_frame.end())
      throw InputError("scene " + scene.scene_id + ": no caption for frame " + f->frame_id);
    const Points3 bp = back_project(*f, config.stride);
    views.push_back({f->frame_id, view_overlap(scene, bp, config.voxel_size, config.radius),
                     lexicon.extract(it->second->text)});
    view_caps.push_back(*it->second);
  }

  std::vector<PointCaptionPair> out;
  if (!view_caps.empty()) {
    PointCaptionPair sp;
    sp.level = CaptionLevel::Scene;
    sp.points.scene_id = scene.scene_id;
    sp.points.indices.resize(scene.size());
    std::iota(sp.points.indices.begin(), sp.points.indices.end(), PointIndex{0});
    sp.caption = scene_caption(view_caps, summaries);
    out.push_back(std::move(sp));
  }

  for (std::size_t k = 0; k < views.size(); ++k) {
    if (views[k].points.empty()) continue;
    PointCaptionPair vp;
    vp.level = CaptionLevel::View;
    vp.points = views[k].points;
    vp.caption = view_caps[k];
    out.push_back(std::move(vp));
  }

  auto emit = [&](std::size_t i, std::size_t j) {
    auto ep = entity_pairs(views[i], views[j], config.filter);
    std::move(ep.begin(), ep.end(), std::back_inserter(out));
  };
  for (std::size_t i = 0; i < views.size(); ++i) {
    if (config.adjacency == Adjacency::Consecutive) {
      if (i + 1 < views.size()) emit(i, i + 1);
    } else {
      for (std::size_t j = i + 1; j < views.size(); ++j) emit(i, j);
    }
  }
  return out;
}

}  // namespace pla
