#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "kgrel/checkpoint.hpp"
#include "kgrel/errors.hpp"
#include "kgrel/kb.hpp"
#include "kgrel/rng.hpp"
#include "kgrel/text.hpp"

namespace kgrel {

// ---- PMI over graph adjacency ----

// Each triple counts as one co-occurrence of its endpoints.
class PmiTable {
 public:
  static PmiTable from_graph(const KnowledgeGraph& kg) {
    PmiTable t;
    t.unit_counts_.assign(kg.concept_count(), 0);
    for (const Triple& tr : kg.triples()) {
      ++t.unit_counts_[tr.subject];
      ++t.unit_counts_[tr.object];
      ++t.pair_counts_[pair_key(tr.subject, tr.object)];
      ++t.total_;
    }
    return t;
  }

  // log((pair + 1) * total / (unit1 * unit2)); 0 when either concept is
  // unseen in the co-occurrence counts.
  double score(ConceptId c1, ConceptId c2) const {
    if (c1 >= unit_counts_.size() || c2 >= unit_counts_.size()) return 0.0;
    std::uint64_t u1 = unit_counts_[c1], u2 = unit_counts_[c2];
    if (u1 == 0 || u2 == 0 || total_ == 0) return 0.0;
    std::uint64_t pair = 0;
    auto it = pair_counts_.find(pair_key(c1, c2));
    if (it != pair_counts_.end()) pair = it->second;
    return std::log((static_cast<double>(pair) + 1.0) * static_cast<double>(total_) /
                    (static_cast<double>(u1) * static_cast<double>(u2)));
  }

  std::uint64_t total() const { return total_; }
  std::uint64_t unit_count(ConceptId c) const {
    return c < unit_counts_.size() ? unit_counts_[c] : 0;
  }
  std::uint64_t pair_count(ConceptId a, ConceptId b) const {
    auto it = pair_counts_.find(pair_key(a, b));
    return it == pair_counts_.end() ? 0 : it->second;
  }

  // Sorted TSV: a total line, unit lines by surface, pair lines by
  // (surface1, surface2) with surface1 <= surface2.
  void save_tsv(std::ostream& os, const KnowledgeGraph& kg) const {
    os << "total\t" << total_ << '\n';
    std::vector<ConceptId> ids;
    for (ConceptId c = 0; c < unit_counts_.size(); ++c) {
      if (unit_counts_[c]) ids.push_back(c);
    }
    std::sort(ids.begin(), ids.end(), [&](ConceptId a, ConceptId b) {
      return kg.concept_at(a).surface < kg.concept_at(b).surface;
    });
    for (ConceptId c : ids) {
      os << "unit\t" << kg.concept_at(c).surface << '\t' << unit_counts_[c] << '\n';
    }
    std::vector<std::pair<std::pair<std::string, std::string>, std::uint64_t>> rows;
    rows.reserve(pair_counts_.size());
    for (const auto& [key, count] : pair_counts_) {
      ConceptId a = static_cast<ConceptId>(key >> 32);
      ConceptId b = static_cast<ConceptId>(key & 0xffffffffu);
      std::string sa = kg.concept_at(a).surface, sb = kg.concept_at(b).surface;
      if (sb < sa) std::swap(sa, sb);
      rows.push_back({{std::move(sa), std::move(sb)}, count});
    }
    std::sort(rows.begin(), rows.end());
    for (const auto& [pair, count] : rows) {
      os << "pair\t" << pair.first << '\t' << pair.second << '\t' << count << '\n';
    }
  }

  static PmiTable load_tsv(std::istream& is, const KnowledgeGraph& kg) {
    PmiTable t;
    t.unit_counts_.assign(kg.concept_count(), 0);
    std::string line;
    std::size_t line_no = 0;
    auto concept_or_throw = [&](const std::string& surface) {
      auto c = kg.find_concept(surface);
      if (!c) {
        throw ParseError("pmi table line " + std::to_string(line_no) +
                         ": surface not in graph: \"" + surface + "\"");
      }
      return *c;
    };
    while (std::getline(is, line)) {
      ++line_no;
      if (line.empty() || line[0] == '#') continue;
      auto fields = split(line, '\t');
      try {
        if (fields[0] == "total" && fields.size() == 2) {
          t.total_ = std::stoull(fields[1]);
        } else if (fields[0] == "unit" && fields.size() == 3) {
          t.unit_counts_[concept_or_throw(fields[1])] = std::stoull(fields[2]);
        } else if (fields[0] == "pair" && fields.size() == 4) {
          ConceptId a = concept_or_throw(fields[1]);
          ConceptId b = concept_or_throw(fields[2]);
          t.pair_counts_[pair_key(a, b)] = std::stoull(fields[3]);
        } else {
          throw ParseError("pmi table line " + std::to_string(line_no) + ": unrecognized row");
        }
      } catch (const std::invalid_argument&) {
        throw ParseError("pmi table line " + std::to_string(line_no) + ": bad count");
      } catch (const std::out_of_range&) {
        throw ParseError("pmi table line " + std::to_string(line_no) + ": bad count");
      }
    }
    return t;
  }

 private:
  static std::uint64_t pair_key(ConceptId a, ConceptId b) {
    if (b < a) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  std::unordered_map<std::uint64_t, std::uint64_t> pair_counts_;
  std::vector<std::uint64_t> unit_counts_;
  std::uint64_t total_ = 0;
};

// ---- TransE ----

enum class TranseNorm { L1, L2 };

struct TranseConfig {
  std::size_t dim = 50;
  double margin = 1.0;
  TranseNorm norm = TranseNorm::L2;
  std::size_t epochs = 100;
  double learning_rate = 0.01;
  std::uint64_t seed = 42;
};

struct TranseParams {
  std::size_t dim = 0;
  double margin = 1.0;
  TranseNorm norm = TranseNorm::L2;
  std::vector<std::string> relations;
  std::vector<std::string> concepts;
  std::vector<double> entity;    // |concepts| x dim
  std::vector<double> relation;  // |relations| x dim

  const double* entity_vec(ConceptId c) const {
    if (c >= concepts.size()) throw ValidationError("unknown concept id " + std::to_string(c));
    return entity.data() + static_cast<std::size_t>(c) * dim;
  }
  const double* relation_vec(RelationId r) const { return relation.data() + r * dim; }
};

struct TranseRun {
  TranseParams params;
  std::vector<double> loss_history;  // per-epoch mean hinge loss
};

namespace detail {

inline double transe_distance(const double* a, const double* b, const double* c,
                              std::size_t dim, TranseNorm norm) {
  // d(a + b, c)
  double acc = 0.0;
  if (norm == TranseNorm::L1) {
    for (std::size_t i = 0; i < dim; ++i) acc += std::abs(a[i] + b[i] - c[i]);
    return acc;
  }
  for (std::size_t i = 0; i < dim; ++i) {
    double diff = a[i] + b[i] - c[i];
    acc += diff * diff;
  }
  return std::sqrt(acc);
}

inline void l2_normalize(double* v, std::size_t n) {
  double norm = std::sqrt(dot(v, v, n));
  if (norm > 0.0) {
    for (std::size_t i = 0; i < n; ++i) v[i] /= norm;
  }
}

// One SGD step on d(h + r, t); sign +1 descends the distance (positive
// triple), -1 ascends it (corrupted triple).
inline void transe_sgd_step(TranseParams& p, ConceptId h, RelationId r, ConceptId t,
                            double sign, double lr, std::vector<double>& scratch) {
  double* eh = p.entity.data() + static_cast<std::size_t>(h) * p.dim;
  double* et = p.entity.data() + static_cast<std::size_t>(t) * p.dim;
  double* er = p.relation.data() + static_cast<std::size_t>(r) * p.dim;
  scratch.resize(p.dim);
  if (p.norm == TranseNorm::L1) {
    for (std::size_t i = 0; i < p.dim; ++i) {
      double diff = eh[i] + er[i] - et[i];
      scratch[i] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
    }
  } else {
    double dist = 0.0;
    for (std::size_t i = 0; i < p.dim; ++i) {
      double diff = eh[i] + er[i] - et[i];
      scratch[i] = diff;
      dist += diff * diff;
    }
    dist = std::sqrt(dist);
    if (dist > 0.0) {
      for (std::size_t i = 0; i < p.dim; ++i) scratch[i] /= dist;
    } else {
      std::fill(scratch.begin(), scratch.end(), 0.0);
    }
  }
  for (std::size_t i = 0; i < p.dim; ++i) {
    double delta = lr * sign * scratch[i];
    eh[i] -= delta;
    er[i] -= delta;
    et[i] += delta;
  }
}

}  // namespace detail

// d(h + r, t) of a stored triple.
inline double transe_triple_distance(ConceptId h, RelationId r, ConceptId t,
                                     const TranseParams& p) {
  return detail::transe_distance(p.entity_vec(h), p.relation_vec(r), p.entity_vec(t), p.dim,
                                 p.norm);
}

// Relation-free pair score: the best translation over all relations,
// negated so larger is better (always <= 0).
inline double transe_pair_score(ConceptId c1, ConceptId c2, const TranseParams& p) {
  const double* e1 = p.entity_vec(c1);
  const double* e2 = p.entity_vec(c2);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r < p.relations.size(); ++r) {
    best = std::max(best, -detail::transe_distance(e1, p.relation_vec(r), e2, p.dim, p.norm));
  }
  return best;
}

// Margin-based SGD with uniform head/tail corruption; corrupted triples
// that exist in the graph are rejected. Entity embeddings are renormalized
// to unit L2 after every update.
inline TranseRun transe_train(const KnowledgeGraph& kg, const TranseConfig& cfg) {
  if (kg.triple_count() == 0) throw ValidationError("cannot train TransE on an empty graph");
  if (cfg.dim == 0) throw ValidationError("TransE dimension must be positive");

  TranseRun run;
  TranseParams& p = run.params;
  p.dim = cfg.dim;
  p.margin = cfg.margin;
  p.norm = cfg.norm;
  p.relations = kg.relations();
  p.concepts.reserve(kg.concept_count());
  for (ConceptId c = 0; c < kg.concept_count(); ++c) p.concepts.push_back(kg.concept_at(c).surface);

  Rng rng(cfg.seed);
  double bound = 6.0 / std::sqrt(static_cast<double>(cfg.dim));
  p.entity.resize(kg.concept_count() * cfg.dim);
  p.relation.resize(kg.relation_count() * cfg.dim);
  for (double& v : p.entity) v = rng.uniform(-bound, bound);
  for (double& v : p.relation) v = rng.uniform(-bound, bound);
  for (std::size_t r = 0; r < kg.relation_count(); ++r) {
    detail::l2_normalize(p.relation.data() + r * cfg.dim, cfg.dim);
  }
  for (std::size_t c = 0; c < kg.concept_count(); ++c) {
    detail::l2_normalize(p.entity.data() + c * cfg.dim, cfg.dim);
  }

  std::unordered_set<std::uint64_t> existing;
  auto triple_key = [&](RelationId r, ConceptId h, ConceptId t) {
    return (static_cast<std::uint64_t>(r) * 0x1000003ULL + h) * 0x1000003ULL + t;
  };
  for (const Triple& t : kg.triples()) existing.insert(triple_key(t.relation, t.subject, t.object));

  std::vector<std::size_t> order(kg.triple_count());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<double> grad(cfg.dim);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const Triple& t = kg.triples()[idx];
      bool corrupt_head = rng.below(2) != 0;
      ConceptId ch = t.subject, ct = t.object;
      constexpr int kMaxTries = 1000;
      for (int tries = 0; tries < kMaxTries; ++tries) {
        ConceptId r = static_cast<ConceptId>(rng.index(kg.concept_count()));
        if (corrupt_head) {
          if (r != t.subject && !existing.count(triple_key(t.relation, r, t.object))) {
            ch = r;
            break;
          }
        } else {
          if (r != t.object && !existing.count(triple_key(t.relation, t.subject, r))) {
            ct = r;
            break;
          }
        }
      }
      if (ch == t.subject && ct == t.object) continue;  // could not corrupt

      double d_pos = transe_triple_distance(t.subject, t.relation, t.object, p);
      double d_neg = transe_triple_distance(ch, t.relation, ct, p);
      double loss = std::max(0.0, cfg.margin + d_pos - d_neg);
      if (!std::isfinite(loss)) throw NumericError("non-finite TransE loss");
      loss_sum += loss;
      if (loss > 0.0 && cfg.learning_rate > 0.0) {
        detail::transe_sgd_step(p, t.subject, t.relation, t.object, +1.0, cfg.learning_rate, grad);
        detail::transe_sgd_step(p, ch, t.relation, ct, -1.0, cfg.learning_rate, grad);
        detail::l2_normalize(p.entity.data() + t.subject * cfg.dim, cfg.dim);
        detail::l2_normalize(p.entity.data() + t.object * cfg.dim, cfg.dim);
        detail::l2_normalize(p.entity.data() + ch * cfg.dim, cfg.dim);
        detail::l2_normalize(p.entity.data() + ct * cfg.dim, cfg.dim);
      }
    }
    run.loss_history.push_back(loss_sum / static_cast<double>(kg.triple_count()));
  }
  return run;
}

// ---- checkpoint io (shared container format, distinct header kind) ----

inline void save_transe(std::ostream& os, const TranseParams& p) {
  nlohmann::json h;
  h["format"] = 1;
  h["kind"] = "transe";
  h["dim"] = p.dim;
  h["margin"] = p.margin;
  h["norm"] = p.norm == TranseNorm::L1 ? "L1" : "L2";
  h["relations"] = p.relations;
  h["concepts"] = p.concepts;
  h["param_count"] = p.entity.size() + p.relation.size();
  std::vector<double> flat;
  flat.reserve(p.entity.size() + p.relation.size());
  flat.insert(flat.end(), p.entity.begin(), p.entity.end());
  flat.insert(flat.end(), p.relation.begin(), p.relation.end());
  write_container(os, h, flat);
}

inline TranseParams load_transe(std::istream& is) {
  auto [h, flat] = read_container(is);
  if (h.value("kind", "") != std::string("transe")) {
    throw ParseError("checkpoint: expected kind \"transe\"");
  }
  TranseParams p;
  p.dim = h.at("dim").get<std::size_t>();
  p.margin = h.at("margin").get<double>();
  p.norm = h.at("norm").get<std::string>() == "L1" ? TranseNorm::L1 : TranseNorm::L2;
  p.relations = h.at("relations").get<std::vector<std::string>>();
  p.concepts = h.at("concepts").get<std::vector<std::string>>();
  std::size_t want = (p.relations.size() + p.concepts.size()) * p.dim;
  if (flat.size() != want) throw ParseError("checkpoint: parameter count mismatch");
  p.entity.assign(flat.begin(), flat.begin() + static_cast<std::ptrdiff_t>(p.concepts.size() * p.dim));
  p.relation.assign(flat.begin() + static_cast<std::ptrdiff_t>(p.concepts.size() * p.dim), flat.end());
  return p;
}

}  // namespace kgrel
