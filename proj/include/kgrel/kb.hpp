#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "kgrel/errors.hpp"
#include "kgrel/io.hpp"
#include "kgrel/rng.hpp"
#include "kgrel/text.hpp"

namespace kgrel {

using ConceptId = std::uint32_t;
using RelationId = std::uint32_t;
using WordId = std::uint32_t;

enum class EdgeDir : std::uint8_t { Forward = 0, Inverse = 1 };

enum class HopClass { One, Two, MoreThanTwo };

struct Triple {
  RelationId relation;
  ConceptId subject;
  ConceptId object;
  double weight;

  bool operator==(const Triple&) const = default;
};

struct Concept {
  std::string surface;             // normalized, space-joined tokens
  std::vector<WordId> token_ids;   // interned words of the surface
};

// One adjacency entry. Forward means the owning concept is the subject of
// the underlying triple, Inverse means it is the object.
struct Edge {
  ConceptId neighbor;
  RelationId relation;
  EdgeDir dir;
  double weight;
};

// Immutable triple store with interned vocabularies, per-concept adjacency
// sorted for top-k queries, and a surface index for entity linking.
// Safe for concurrent readers once built.
class KnowledgeGraph {
 public:
  class Builder;

  std::size_t concept_count() const { return concepts_.size(); }
  std::size_t relation_count() const { return relations_.size(); }
  std::size_t triple_count() const { return triples_.size(); }
  std::size_t word_count() const { return words_.size(); }

  const Concept& concept_at(ConceptId c) const {
    check_concept(c);
    return concepts_[c];
  }
  const std::string& relation_name(RelationId r) const { return relations_[r]; }
  const std::string& word(WordId w) const { return words_[w]; }
  const std::vector<Triple>& triples() const { return triples_; }
  const std::vector<std::string>& relations() const { return relations_; }

  std::vector<std::string> concept_tokens(ConceptId c) const {
    std::vector<std::string> out;
    for (WordId w : concept_at(c).token_ids) out.push_back(words_[w]);
    return out;
  }

  std::optional<ConceptId> find_concept(std::string_view normalized_surface) const {
    auto it = surface_index_.find(std::string(normalized_surface));
    if (it == surface_index_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<RelationId> find_relation(std::string_view name) const {
    auto it = relation_index_.find(std::string(name));
    if (it == relation_index_.end()) return std::nullopt;
    return it->second;
  }

  // Adjacency in inference order: weight descending, ties by ascending
  // neighbor surface, then relation, then direction.
  const std::vector<Edge>& adjacency(ConceptId c) const {
    check_concept(c);
    return adj_[c];
  }

  std::size_t degree(ConceptId c) const { return adjacency(c).size(); }

  std::vector<Edge> neighbors_topk(ConceptId c, std::size_t cap) const {
    const auto& edges = adjacency(c);
    std::size_t n = std::min(cap, edges.size());
    return std::vector<Edge>(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n));
  }

  // Uniform sample without replacement (reservoir), deterministic per rng state.
  std::vector<Edge> neighbors_sampled(ConceptId c, std::size_t cap, Rng& rng) const {
    const auto& edges = adjacency(c);
    if (edges.size() <= cap) return edges;
    std::vector<Edge> res(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(cap));
    for (std::size_t i = cap; i < edges.size(); ++i) {
      std::size_t j = rng.index(i + 1);
      if (j < cap) res[j] = edges[i];
    }
    return res;
  }

  bool adjacent(ConceptId a, ConceptId b) const {
    check_concept(a);
    check_concept(b);
    const auto& ns = sorted_neighbor_ids_[a];
    return std::binary_search(ns.begin(), ns.end(), b);
  }

  // Undirected shortest-path classification, search truncated at depth 2.
  HopClass hop_distance_capped(ConceptId a, ConceptId b) const {
    check_concept(a);
    check_concept(b);
    if (a == b) throw ValidationError("hop_distance_capped: identical concepts");
    if (adjacent(a, b)) return HopClass::One;
    // pick the cheaper side to expand
    const auto& from = degree(a) <= degree(b) ? sorted_neighbor_ids_[a] : sorted_neighbor_ids_[b];
    ConceptId target = degree(a) <= degree(b) ? b : a;
    for (ConceptId mid : from) {
      if (adjacent(mid, target)) return HopClass::Two;
    }
    return HopClass::MoreThanTwo;
  }

  void save(std::ostream& os) const {
    os.write("KGKB", 4);
    write_u32(os, kFormatVersion);
    write_u32(os, static_cast<std::uint32_t>(relations_.size()));
    write_u32(os, static_cast<std::uint32_t>(concepts_.size()));
    write_u64(os, triples_.size());
    for (const auto& r : relations_) write_str(os, r);
    for (const auto& c : concepts_) write_str(os, c.surface);
    for (const auto& t : triples_) {
      write_u32(os, t.relation);
      write_u32(os, t.subject);
      write_u32(os, t.object);
      write_f64(os, t.weight);
    }
  }

  static KnowledgeGraph load(std::istream& is);
  static KnowledgeGraph load_file(const std::string& path);

 private:
  friend class Builder;

  void check_concept(ConceptId c) const {
    if (c >= concepts_.size()) throw ValidationError("unknown concept id " + std::to_string(c));
  }

  static constexpr std::uint32_t kFormatVersion = 1;

  std::vector<std::string> relations_;
  std::vector<Concept> concepts_;
  std::vector<std::string> words_;
  std::vector<Triple> triples_;
  std::vector<std::vector<Edge>> adj_;
  std::vector<std::vector<ConceptId>> sorted_neighbor_ids_;
  std::unordered_map<std::string, ConceptId> surface_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
  std::unordered_map<std::string, WordId> word_index_;
};

// Single-writer accumulation of parsed triples; finalize() produces the
// immutable graph.
class KnowledgeGraph::Builder {
 public:
  // Returns nullopt for comment ('#'-prefixed) and blank lines.
  // Throws ParseError for malformed lines.
  std::optional<Triple> parse_triple_line(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.find_first_not_of(" \t") == std::string_view::npos) {
      return std::nullopt;
    }
    if (line.front() == '#') return std::nullopt;
    auto fields = split(line, '\t');
    if (fields.size() != 4) {
      throw ParseError("expected 4 tab-separated fields, got " +
                       std::to_string(fields.size()) + ": \"" + std::string(line) + "\"");
    }
    const std::string& rel_name = fields[0];
    std::string subj = normalize_surface(fields[1]);
    std::string obj = normalize_surface(fields[2]);
    if (rel_name.empty() || subj.empty() || obj.empty()) {
      throw ParseError("empty field: \"" + std::string(line) + "\"");
    }
    double w = parse_weight(fields[3], line);
    if (subj == obj) {
      throw ParseError("self-loop rejected: \"" + std::string(line) + "\"");
    }
    Triple t;
    t.relation = intern_relation(rel_name);
    t.subject = intern_concept(subj);
    t.object = intern_concept(obj);
    t.weight = w;
    return t;
  }

  // Duplicate (relation, subject, object) keeps the max weight.
  void add(const Triple& t) {
    TripleKey key{t.relation, t.subject, t.object};
    auto it = triple_pos_.find(key);
    if (it != triple_pos_.end()) {
      double& w = g_.triples_[it->second].weight;
      w = std::max(w, t.weight);
      return;
    }
    triple_pos_.emplace(key, g_.triples_.size());
    g_.triples_.push_back(t);
  }

  void add_lines(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      try {
        if (auto t = parse_triple_line(line)) add(*t);
      } catch (const ParseError& e) {
        throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  ConceptId intern_concept(const std::string& normalized) {
    auto it = g_.surface_index_.find(normalized);
    if (it != g_.surface_index_.end()) return it->second;
    ConceptId id = static_cast<ConceptId>(g_.concepts_.size());
    Concept c;
    c.surface = normalized;
    for (const auto& tok : split(normalized, ' ')) c.token_ids.push_back(intern_word(tok));
    g_.concepts_.push_back(std::move(c));
    g_.surface_index_.emplace(normalized, id);
    return id;
  }

  RelationId intern_relation(const std::string& name) {
    auto it = g_.relation_index_.find(name);
    if (it != g_.relation_index_.end()) return it->second;
    RelationId id = static_cast<RelationId>(g_.relations_.size());
    g_.relations_.push_back(name);
    g_.relation_index_.emplace(name, id);
    return id;
  }

  KnowledgeGraph finalize() {
    g_.adj_.assign(g_.concepts_.size(), {});
    g_.sorted_neighbor_ids_.assign(g_.concepts_.size(), {});
    for (const auto& t : g_.triples_) {
      g_.adj_[t.subject].push_back({t.object, t.relation, EdgeDir::Forward, t.weight});
      g_.adj_[t.object].push_back({t.subject, t.relation, EdgeDir::Inverse, t.weight});
    }
    for (std::size_t c = 0; c < g_.adj_.size(); ++c) {
      auto& edges = g_.adj_[c];
      std::sort(edges.begin(), edges.end(), [this](const Edge& x, const Edge& y) {
        if (x.weight != y.weight) return x.weight > y.weight;
        const std::string& sx = g_.concepts_[x.neighbor].surface;
        const std::string& sy = g_.concepts_[y.neighbor].surface;
        if (sx != sy) return sx < sy;
        if (x.relation != y.relation) return x.relation < y.relation;
        return x.dir < y.dir;
      });
      auto& ids = g_.sorted_neighbor_ids_[c];
      ids.reserve(edges.size());
      for (const auto& e : edges) ids.push_back(e.neighbor);
      std::sort(ids.begin(), ids.end());
      ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    }
    return std::move(g_);
  }

 private:
  struct TripleKey {
    RelationId rel;
    ConceptId subj;
    ConceptId obj;
    bool operator==(const TripleKey&) const = default;
  };
  struct TripleKeyHash {
    std::size_t operator()(const TripleKey& k) const {
      std::uint64_t h = k.rel;
      h = h * 0x9e3779b97f4a7c15ULL + k.subj;
      h = h * 0x9e3779b97f4a7c15ULL + k.obj;
      h ^= h >> 29;
      return static_cast<std::size_t>(h);
    }
  };

  static double parse_weight(const std::string& field, std::string_view line) {
    const char* begin = field.c_str();
    char* end = nullptr;
    double w = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
      throw ParseError("non-numeric weight: \"" + std::string(line) + "\"");
    }
    if (!(w >= 0.0) || w != w || w > 1e300) {
      throw ParseError("weight must be a finite non-negative number: \"" +
                       std::string(line) + "\"");
    }
    return w;
  }

  WordId intern_word(const std::string& w) {
    auto it = g_.word_index_.find(w);
    if (it != g_.word_index_.end()) return it->second;
    WordId id = static_cast<WordId>(g_.words_.size());
    g_.words_.push_back(w);
    g_.word_index_.emplace(w, id);
    return id;
  }

  KnowledgeGraph g_;
  std::unordered_map<TripleKey, std::size_t, TripleKeyHash> triple_pos_;
};

// Builds a graph from a stream of triple lines. The first parse error is
// reported with its line number.
inline KnowledgeGraph ingest(std::istream& in) {
  KnowledgeGraph::Builder b;
  b.add_lines(in);
  return b.finalize();
}

inline KnowledgeGraph KnowledgeGraph::load(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string_view(magic, 4) != "KGKB") throw ParseError("bad graph file magic");
  std::uint32_t version = read_u32(is);
  if (version != kFormatVersion) {
    throw ParseError("unsupported graph format version " + std::to_string(version));
  }
  std::uint32_t n_rel = read_u32(is);
  std::uint32_t n_con = read_u32(is);
  std::uint64_t n_tri = read_u64(is);
  Builder b;
  for (std::uint32_t i = 0; i < n_rel; ++i) b.intern_relation(read_str(is));
  for (std::uint32_t i = 0; i < n_con; ++i) b.intern_concept(read_str(is));
  for (std::uint64_t i = 0; i < n_tri; ++i) {
    Triple t;
    t.relation = read_u32(is);
    t.subject = read_u32(is);
    t.object = read_u32(is);
    t.weight = read_f64(is);
    if (t.relation >= n_rel || t.subject >= n_con || t.object >= n_con) {
      throw ParseError("triple references out-of-range id");
    }
    b.add(t);
  }
  return b.finalize();
}

// Accepts either the binary graph format or a triples TSV, sniffed by magic.
inline KnowledgeGraph KnowledgeGraph::load_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open graph file: " + path);
  char magic[4] = {0, 0, 0, 0};
  in.read(magic, 4);
  in.clear();
  in.seekg(0);
  if (std::string_view(magic, 4) == "KGKB") return load(in);
  return ingest(in);
}

}  // namespace kgrel
