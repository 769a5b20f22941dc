#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pla/geometry.hpp"

namespace pla {

enum class CaptionLevel : std::uint8_t { Scene = 0, View = 1, Entity = 2 };

std::string_view to_string(CaptionLevel level);
CaptionLevel caption_level_from_string(std::string_view s);

struct CaptionRecord {
  std::string scene_id;
  std::optional<std::string> frame_id;          // absent for SCENE
  std::optional<std::string> partner_frame_id;  // second frame of an ENTITY pair
  CaptionLevel level = CaptionLevel::View;
  std::string text;

  void validate() const;
};

/// Sorted unique lower-case entity strings.
class EntitySet {
 public:
  EntitySet() = default;
  explicit EntitySet(std::vector<std::string> words);

  const std::vector<std::string>& words() const { return words_; }
  bool empty() const { return words_.empty(); }
  std::size_t size() const { return words_.size(); }
  /// Words joined by single spaces, in sorted order.
  std::string concat() const;

  EntitySet difference(const EntitySet& other) const;
  EntitySet intersection(const EntitySet& other) const;

  bool operator==(const EntitySet&) const = default;

 private:
  std::vector<std::string> words_;
};

/// Entity vocabulary. Phrases may span several words; matching is whole-word
/// and tries longer phrases first.
class Lexicon {
 public:
  Lexicon() = default;
  explicit Lexicon(std::vector<std::string> phrases);

  const std::vector<std::string>& phrases() const { return phrases_; }
  bool empty() const { return phrases_.empty(); }

  EntitySet extract(std::string_view caption) const;

 private:
  std::vector<std::string> phrases_;
  std::vector<std::vector<std::string>> tokens_;  // longest first
  std::vector<std::size_t> order_;
};

/// Lower-cased whole-word tokens (ASCII alphanumerics plus any non-ASCII byte).
std::vector<std::string> tokenize(std::string_view text);

EntitySet extract_entities(std::string_view caption, const Lexicon& vocabulary);

struct PointCaptionPair {
  PointIndexSet points;
  CaptionRecord caption;
  CaptionLevel level = CaptionLevel::View;
};

/// Precomputed summaries keyed by scene id.
using SceneSummaries = std::map<std::string, std::string>;

/// Summary from `summaries` when present, otherwise the de-duplicated
/// space-joined view captions in input order.
CaptionRecord scene_caption(const std::vector<CaptionRecord>& view_captions,
                            const SceneSummaries& summaries);

struct ViewEntry {
  std::string frame_id;
  PointIndexSet points;
  EntitySet words;
};

struct EntityFilter {
  int gamma = 100;
  double delta = 0.3;

  void validate() const;
  bool accepts(std::size_t points, std::size_t size_i, std::size_t size_j,
               const EntitySet& words) const;
};

enum class EntityKind : std::uint8_t { IMinusJ = 0, JMinusI = 1, Intersection = 2 };

/// Differences and intersection of two views, filtered by size bounds and a
/// nonempty caption. Output order: i\j, j\i, i&j.
std::vector<PointCaptionPair> entity_pairs(const ViewEntry& view_i, const ViewEntry& view_j,
                                           const EntityFilter& filter);

/// Set algebra on sorted index lists.
std::vector<PointIndex> sorted_difference(const std::vector<PointIndex>& a,
                                          const std::vector<PointIndex>& b);
std::vector<PointIndex> sorted_intersection(const std::vector<PointIndex>& a,
                                            const std::vector<PointIndex>& b);

enum class Adjacency { Consecutive, AllPairs };

struct AssociationConfig {
  double voxel_size = 0.05;
  double radius = 0.05;
  int stride = 1;
  EntityFilter filter;
  Adjacency adjacency = Adjacency::Consecutive;
};

/// Scene pair, then view pairs by frame id, then entity pairs by
/// (frame_i, frame_j, kind).
std::vector<PointCaptionPair> build_pairs(const PointCloud& scene,
                                          const std::vector<CameraFrame>& frames,
                                          const std::vector<CaptionRecord>& captions,
                                          const Lexicon& lexicon, const AssociationConfig& config,
                                          const SceneSummaries& summaries = {});

// --- files -----------------------------------------------------------------

struct CaptionStore {
  std::vector<CaptionRecord> views;
  SceneSummaries summaries;

  std::vector<CaptionRecord> views_for(const std::string& scene_id) const;
};

CaptionStore load_captions(const std::string& path);
void save_captions(const std::string& path, const CaptionStore& store);

Lexicon load_lexicon(const std::string& path);
void save_lexicon(const std::string& path, const Lexicon& lexicon);

std::string pairs_to_jsonl(const std::vector<PointCaptionPair>& pairs);
std::vector<PointCaptionPair> pairs_from_jsonl(std::string_view text, const std::string& source);
std::string pairs_to_binary(const std::vector<PointCaptionPair>& pairs);
std::vector<PointCaptionPair> pairs_from_binary(std::string_view bytes, const std::string& source);

/// Reads either format, chosen by extension (.jsonl or .bin).
std::vector<PointCaptionPair> load_pairs(const std::string& path);

}  // namespace pla
