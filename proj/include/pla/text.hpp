#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace pla {

/// Exact-string map from text to a fixed-length f32 vector.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(int dim);

  int dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, Eigen::VectorXf>& entries() const { return entries_; }

  /// Inserts or replaces. Throws InputError on wrong length or non-finite values.
  void set(const std::string& key, Eigen::VectorXf v);
  const Eigen::VectorXf* find(const std::string& key) const;

 private:
  int dim_ = 0;
  std::map<std::string, Eigen::VectorXf> entries_;
};

EmbeddingTable load_embeddings(const std::string& path);
void save_embeddings(const std::string& path, const EmbeddingTable& table);

/// Deterministic bag-of-tokens embedding: each whitespace token is hashed
/// with the seed into one of `dim` buckets with a +/-1 sign; the sum is scaled
/// to unit norm. Token-free text maps to the first basis vector.
Eigen::VectorXd fallback_embed(std::string_view text, int dim, std::uint64_t seed);

/// Table lookup with an optional, explicitly enabled fallback embedder.
class TextEncoder {
 public:
  explicit TextEncoder(const EmbeddingTable* table, bool allow_fallback = false,
                       std::uint64_t seed = 0);

  int dim() const;
  bool has(const std::string& text) const;
  /// Unit-norm embedding; throws InputError when missing and fallback is off.
  Eigen::VectorXd embed(const std::string& text) const;

 private:
  const EmbeddingTable* table_;
  bool fallback_;
  std::uint64_t seed_;
};

struct CategoryList {
  std::vector<std::string> names;
  std::vector<bool> base_mask;

  std::size_t size() const { return names.size(); }
  std::size_t base_count() const;
  std::size_t novel_count() const { return size() - base_count(); }
  bool is_base(std::size_t k) const { return base_mask[k]; }
  void validate() const;
};

/// One "name<TAB>base|novel" line per category.
CategoryList load_category_list(const std::string& path);
void save_category_list(const std::string& path, const CategoryList& categories);

struct CategoryMatrix {
  Eigen::MatrixXd rows;                 // K x dim, unit rows
  std::vector<std::size_t> categories;  // row -> index into the full list
};

/// Category name embeddings in list order; novel rows dropped when
/// include_novel is false.
CategoryMatrix category_matrix(const CategoryList& categories, const TextEncoder& encoder,
                               bool include_novel);

}  // namespace pla
