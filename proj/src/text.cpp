#include "pla/text.hpp"

#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "binary_io.hpp"
#include "pla/common.hpp"

namespace pla {

namespace {

constexpr std::string_view kEmbeddingMagic = "PLAE";
constexpr std::uint32_t kEmbeddingVersion = 1;

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

EmbeddingTable::EmbeddingTable(int dim) : dim_(dim) {
  if (dim < 1) throw InputError("embedding dim must be positive");
}

void EmbeddingTable::set(const std::string& key, Eigen::VectorXf v) {
  if (v.size() != dim_)
    throw InputError("embedding \"" + key + "\" has length " + std::to_string(v.size()) +
                     ", table dim is " + std::to_string(dim_));
  if (!v.allFinite()) throw InputError("embedding \"" + key + "\" is not finite");
  entries_[key] = std::move(v);
}

const Eigen::VectorXf* EmbeddingTable::find(const std::string& key) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

EmbeddingTable load_embeddings(const std::string& path) {
  const std::string bytes = io::read_file(path);
  io::Reader r(bytes, path);
  r.expect_magic(kEmbeddingMagic);
  r.expect_version(kEmbeddingVersion);
  const auto count = r.u32();
  const auto dim = r.u32();
  if (dim == 0) r.fail("zero embedding dim");
  EmbeddingTable table(static_cast<int>(dim));
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string key = r.str();
    Eigen::VectorXf v(dim);
    r.f32s({v.data(), dim});
    if (table.find(key)) spdlog::warn("{}: duplicate embedding key \"{}\", last record wins", path, key);
    if (!v.allFinite()) r.fail("non-finite embedding for \"" + key + "\"");
    table.set(key, std::move(v));
  }
  if (!r.done()) r.fail("trailing bytes (record length disagrees with dim)");
  return table;
}

void save_embeddings(const std::string& path, const EmbeddingTable& table) {
  io::Writer w;
  w.magic(kEmbeddingMagic);
  w.u32(kEmbeddingVersion);
  w.u32(static_cast<std::uint32_t>(table.size()));
  w.u32(static_cast<std::uint32_t>(table.dim()));
  for (const auto& [key, v] : table.entries()) {
    w.str(key);
    w.f32s({v.data(), static_cast<std::size_t>(v.size())});
  }
  io::write_file(path, w.bytes());
}

Eigen::VectorXd fallback_embed(std::string_view text, int dim, std::uint64_t seed) {
  if (dim < 2) throw InputError("fallback_embed: dim must be >= 2");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
  const std::uint64_t seed_hash = mix(seed);
  std::istringstream ss{std::string(text)};
  std::string tok;
  while (ss >> tok) {
    const std::uint64_t h = mix(fnv1a(tok) ^ seed_hash);
    const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim));
    v[bucket] += (h >> 63) ? -1.0 : 1.0;
  }
  const double n = v.norm();
  if (n == 0.0) {
    v.setZero();
    v[0] = 1.0;
    return v;
  }
  return v / n;
}

TextEncoder::TextEncoder(const EmbeddingTable* table, bool allow_fallback, std::uint64_t seed)
    : table_(table), fallback_(allow_fallback), seed_(seed) {
  if (!table_) throw InputError("TextEncoder needs an embedding table");
}

int TextEncoder::dim() const { return table_->dim(); }

bool TextEncoder::has(const std::string& text) const {
  return fallback_ || table_->find(text) != nullptr;
}

Eigen::VectorXd TextEncoder::embed(const std::string& text) const {
  if (const auto* v = table_->find(text)) {
    Eigen::VectorXd d = v->cast<double>();
    const double n = d.norm();
    if (n == 0.0) throw InputError("zero-norm embedding for \"" + text + "\"");
    return d / n;
  }
  if (!fallback_) throw InputError("no embedding for \"" + text + "\" and fallback is disabled");
  return fallback_embed(text, table_->dim(), seed_);
}

std::size_t CategoryList::base_count() const {
  std::size_t n = 0;
  for (const bool b : base_mask) n += b ? 1 : 0;
  return n;
}

void CategoryList::validate() const {
  if (names.size() != base_mask.size()) throw InputError("category list: mask size mismatch");
  if (names.empty()) throw InputError("category list is empty");
  std::set<std::string> seen;
  for (const auto& n : names)
    if (!seen.insert(n).second) throw InputError("duplicate category \"" + n + "\"");
  if (base_count() == 0) throw InputError("category list needs at least one base category");
}

CategoryList load_category_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open partition file " + path);
  CategoryList c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw InputError(path + ":" + std::to_string(lineno) + ": expected name<TAB>base|novel");
    const std::string kind = line.substr(tab + 1);
    if (kind != "base" && kind != "novel")
      throw InputError(path + ":" + std::to_string(lineno) + ": split must be base or novel");
    c.names.push_back(line.substr(0, tab));
    c.base_mask.push_back(kind == "base");
  }
  c.validate();
  return c;
}

void save_category_list(const std::string& path, const CategoryList& categories) {
  categories.validate();
  std::string out;
  for (std::size_t k = 0; k < categories.size(); ++k)
    out += categories.names[k] + "\t" + (categories.base_mask[k] ? "base" : "novel") + "\n";
  io::write_file(path, out);
}

CategoryMatrix category_matrix(const CategoryList& categories, const TextEncoder& encoder,
                               bool include_novel) {
  categories.validate();
  std::vector<std::string> missing;
  CategoryMatrix m;
  for (std::size_t k = 0; k < categories.size(); ++k) {
    if (!include_novel && !categories.is_base(k)) continue;
    if (!encoder.has(categories.names[k])) missing.push_back(categories.names[k]);
    m.categories.push_back(k);
  }
  if (!missing.empty()) {
    std::string msg = "missing category embeddings:";
    for (const auto& n : missing) msg += " " + n;
    throw InputError(msg);
  }
  m.rows.resize(static_cast<Eigen::Index>(m.categories.size()), encoder.dim());
  for (std::size_t r = 0; r < m.categories.size(); ++r)
    m.rows.row(static_cast<Eigen::Index>(r)) = encoder.embed(categories.names[m.categories[r]]).transpose();
  return m;
}

}  // namespace pla
