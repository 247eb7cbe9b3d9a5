#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgrel/errors.hpp"
#include "kgrel/kb.hpp"
#include "kgrel/retrieval.hpp"

namespace kgrel {

using PairScoreFn = std::function<double(ConceptId, ConceptId)>;

// Soft alignment between two concept sets: for each concept on the first
// side take its best match on the second side, then average. Both sides
// are canonicalized (sorted, deduplicated) so the value is invariant to
// ordering and duplicates. Empty sides score 0.
inline double aggregate(std::vector<ConceptId> e1, std::vector<ConceptId> e2,
                        const PairScoreFn& score) {
  if (e1.empty() || e2.empty()) return 0.0;
  std::sort(e1.begin(), e1.end());
  e1.erase(std::unique(e1.begin(), e1.end()), e1.end());
  std::sort(e2.begin(), e2.end());
  e2.erase(std::unique(e2.begin(), e2.end()), e2.end());
  double sum = 0.0;
  for (ConceptId x : e1) {
    double best = score(x, e2[0]);
    for (std::size_t j = 1; j < e2.size(); ++j) best = std::max(best, score(x, e2[j]));
    sum += best;
  }
  return sum / static_cast<double>(e1.size());
}

struct QAInstance {
  std::string id;
  std::string question;
  std::optional<std::string> passage;
  std::vector<std::string> candidates;
  std::optional<int> gold;
  std::optional<std::vector<double>> doc_scores;
};

enum class PairChannel { QuestionAnswer, AnswerPassage, QuestionPassage };

// Question-passage applies to the indirect scorer only; the other two feed
// both scorers. Channels that need a passage are skipped when none exists.
struct CombinationWeights {
  double alpha = 1.0;
  double beta_dir = 0.0;
  double beta_ind = 0.0;
  std::vector<PairChannel> pair_channels = {PairChannel::QuestionAnswer,
                                            PairChannel::AnswerPassage,
                                            PairChannel::QuestionPassage};

  bool has_channel(PairChannel ch) const {
    return std::find(pair_channels.begin(), pair_channels.end(), ch) != pair_channels.end();
  }

  void validate() const {
    if (alpha == 0.0 && beta_dir == 0.0 && beta_ind == 0.0) {
      throw ValidationError("at least one combination weight must be nonzero");
    }
  }
};

struct CandidateScore {
  double doc = 0.0;
  double dir = 0.0;
  double ind = 0.0;
  double z_doc = 0.0;
  double z_dir = 0.0;
  double z_ind = 0.0;
  double combined = 0.0;
};

struct Prediction {
  std::string id;
  int chosen = 0;
  std::vector<CandidateScore> candidates;
};

namespace detail {

// z-score across candidates; a constant channel standardizes to all zeros.
inline std::vector<double> standardize(const std::vector<double>& xs) {
  std::vector<double> z(xs.size(), 0.0);
  if (xs.empty()) return z;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= static_cast<double>(xs.size());
  double sd = std::sqrt(var);
  if (sd == 0.0) return z;
  for (std::size_t i = 0; i < xs.size(); ++i) z[i] = (xs[i] - mean) / sd;
  return z;
}

}  // namespace detail

// Per-candidate channel scores and their weighted combination for one
// instance. Both pair scorers see the same retrieved concept sets.
inline std::vector<CandidateScore> score_instance(const QAInstance& inst,
                                                  const KnowledgeGraph& kg,
                                                  const PairScoreFn& dir_scorer,
                                                  const PairScoreFn& ind_scorer,
                                                  const CombinationWeights& w,
                                                  const RetrievalOptions& ropts = {}) {
  w.validate();
  if (inst.candidates.size() < 2) {
    throw ValidationError("instance " + inst.id + ": needs at least 2 candidates");
  }
  if (w.alpha != 0.0 && !inst.doc_scores) {
    throw ValidationError("instance " + inst.id +
                          ": document weight is nonzero but doc_scores are missing");
  }
  if (inst.doc_scores && inst.doc_scores->size() != inst.candidates.size()) {
    throw ValidationError("instance " + inst.id + ": doc_scores length mismatch");
  }

  auto rq = retrieve_concepts(inst.question, kg, ropts);
  RetrievedConceptSet rp;
  if (inst.passage) rp = retrieve_concepts(*inst.passage, kg, ropts);

  const std::size_t n = inst.candidates.size();
  std::vector<double> doc(n, 0.0), dir(n, 0.0), ind(n, 0.0);
  if (inst.doc_scores) doc = *inst.doc_scores;

  double qp_ind = 0.0;
  if (inst.passage && w.has_channel(PairChannel::QuestionPassage)) {
    qp_ind = aggregate(rq.concept_ids, rp.concept_ids, ind_scorer);
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto ra = retrieve_concepts(inst.candidates[i], kg, ropts);
    if (w.has_channel(PairChannel::QuestionAnswer)) {
      dir[i] += aggregate(rq.concept_ids, ra.concept_ids, dir_scorer);
      ind[i] += aggregate(rq.concept_ids, ra.concept_ids, ind_scorer);
    }
    if (inst.passage && w.has_channel(PairChannel::AnswerPassage)) {
      dir[i] += aggregate(rp.concept_ids, ra.concept_ids, dir_scorer);
      ind[i] += aggregate(rp.concept_ids, ra.concept_ids, ind_scorer);
    }
    ind[i] += qp_ind;
  }

  auto z_doc = detail::standardize(doc);
  auto z_dir = detail::standardize(dir);
  auto z_ind = detail::standardize(ind);

  std::vector<CandidateScore> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].doc = doc[i];
    out[i].dir = dir[i];
    out[i].ind = ind[i];
    out[i].z_doc = z_doc[i];
    out[i].z_dir = z_dir[i];
    out[i].z_ind = z_ind[i];
    out[i].combined = w.alpha * z_doc[i] + w.beta_dir * z_dir[i] + w.beta_ind * z_ind[i];
  }
  return out;
}

inline CandidateScore score_candidate(const QAInstance& inst, std::size_t i,
                                      const KnowledgeGraph& kg, const PairScoreFn& dir_scorer,
                                      const PairScoreFn& ind_scorer,
                                      const CombinationWeights& w,
                                      const RetrievalOptions& ropts = {}) {
  auto scores = score_instance(inst, kg, dir_scorer, ind_scorer, w, ropts);
  if (i >= scores.size()) throw ValidationError("candidate index out of range");
  return scores[i];
}

// Argmax of the combined score; ties resolve to the lowest index.
inline int argmax_combined(const std::vector<CandidateScore>& scores) {
  int best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i].combined > scores[best].combined) best = static_cast<int>(i);
  }
  return best;
}

inline Prediction predict(const QAInstance& inst, const KnowledgeGraph& kg,
                          const PairScoreFn& dir_scorer, const PairScoreFn& ind_scorer,
                          const CombinationWeights& w, const RetrievalOptions& ropts = {}) {
  Prediction pred;
  pred.id = inst.id;
  pred.candidates = score_instance(inst, kg, dir_scorer, ind_scorer, w, ropts);
  pred.chosen = argmax_combined(pred.candidates);
  return pred;
}

struct EvalReport {
  double accuracy = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  CombinationWeights weights;
  std::vector<Prediction> predictions;
};

inline EvalReport evaluate(const std::vector<QAInstance>& instances, const KnowledgeGraph& kg,
                           const PairScoreFn& dir_scorer, const PairScoreFn& ind_scorer,
                           const CombinationWeights& w, const RetrievalOptions& ropts = {}) {
  if (instances.empty()) throw ValidationError("cannot evaluate an empty dataset");
  EvalReport report;
  report.weights = w;
  for (const auto& inst : instances) {
    if (!inst.gold) throw ValidationError("instance " + inst.id + ": missing gold label");
    if (*inst.gold < 0 || static_cast<std::size_t>(*inst.gold) >= inst.candidates.size()) {
      throw ValidationError("instance " + inst.id + ": gold index out of range");
    }
    Prediction pred = predict(inst, kg, dir_scorer, ind_scorer, w, ropts);
    if (pred.chosen == *inst.gold) ++report.correct;
    ++report.total;
    report.predictions.push_back(std::move(pred));
  }
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.total);
  return report;
}

struct GridSearchResult {
  CombinationWeights weights;
  double accuracy = 0.0;
};

// Exhaustive search over alpha, beta_dir, beta_ind in {0, 0.1, ..., 1.0}
// constrained to sum to 1; earlier grid points win ties. Channel z-scores
// are weight-independent, so they are computed once per instance.
inline GridSearchResult grid_search(const std::vector<QAInstance>& validation,
                                    const KnowledgeGraph& kg, const PairScoreFn& dir_scorer,
                                    const PairScoreFn& ind_scorer,
                                    const std::vector<PairChannel>& channels,
                                    const RetrievalOptions& ropts = {}) {
  if (validation.empty()) throw ValidationError("cannot grid-search an empty validation set");
  CombinationWeights probe;
  probe.alpha = 1.0;
  probe.beta_dir = 1.0;
  probe.beta_ind = 1.0;
  probe.pair_channels = channels;
  struct Cached {
    int gold;
    std::vector<CandidateScore> scores;
  };
  std::vector<Cached> cache;
  cache.reserve(validation.size());
  for (const auto& inst : validation) {
    if (!inst.gold) throw ValidationError("instance " + inst.id + ": missing gold label");
    cache.push_back({*inst.gold, score_instance(inst, kg, dir_scorer, ind_scorer, probe, ropts)});
  }

  GridSearchResult best;
  best.accuracy = -1.0;
  for (int a = 0; a <= 10; ++a) {
    for (int bd = 0; bd + a <= 10; ++bd) {
      int bi = 10 - a - bd;
      CombinationWeights w;
      w.alpha = a / 10.0;
      w.beta_dir = bd / 10.0;
      w.beta_ind = bi / 10.0;
      w.pair_channels = channels;
      std::size_t correct = 0;
      for (const auto& c : cache) {
        int chosen = 0;
        double bestv = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < c.scores.size(); ++i) {
          double v = w.alpha * c.scores[i].z_doc + w.beta_dir * c.scores[i].z_dir +
                     w.beta_ind * c.scores[i].z_ind;
          if (v > bestv) {
            bestv = v;
            chosen = static_cast<int>(i);
          }
        }
        if (chosen == c.gold) ++correct;
      }
      double acc = static_cast<double>(correct) / static_cast<double>(cache.size());
      if (acc > best.accuracy) {
        best.accuracy = acc;
        best.weights = w;
      }
    }
  }
  return best;
}

// ---- dataset and report io ----

inline std::vector<QAInstance> load_dataset_jsonl(std::istream& is) {
  std::vector<QAInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ParseError("dataset line " + std::to_string(line_no) + ": malformed JSON");
    }
    QAInstance inst;
    try {
      inst.id = j.at("id").get<std::string>();
      inst.question = j.at("question").get<std::string>();
      inst.candidates = j.at("candidates").get<std::vector<std::string>>();
      if (j.contains("passage") && !j["passage"].is_null()) {
        inst.passage = j["passage"].get<std::string>();
      }
      if (j.contains("gold") && !j["gold"].is_null()) inst.gold = j["gold"].get<int>();
      if (j.contains("doc_scores") && !j["doc_scores"].is_null()) {
        inst.doc_scores = j["doc_scores"].get<std::vector<double>>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    if (inst.candidates.size() < 2) {
      throw ParseError("dataset line " + std::to_string(line_no) + ": needs at least 2 candidates");
    }
    if (inst.gold && (*inst.gold < 0 ||
                      static_cast<std::size_t>(*inst.gold) >= inst.candidates.size())) {
      throw ParseError("dataset line " + std::to_string(line_no) + ": gold index out of range");
    }
    if (inst.doc_scores && inst.doc_scores->size() != inst.candidates.size()) {
      throw ParseError("dataset line " + std::to_string(line_no) + ": doc_scores length mismatch");
    }
    out.push_back(std::move(inst));
  }
  return out;
}

inline nlohmann::json report_to_json(const EvalReport& r,
                                     const std::vector<QAInstance>& instances) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  j["correct"] = r.correct;
  j["total"] = r.total;
  j["weights"] = {{"alpha", r.weights.alpha},
                  {"beta_dir", r.weights.beta_dir},
                  {"beta_ind", r.weights.beta_ind}};
  nlohmann::json preds = nlohmann::json::array();
  for (std::size_t k = 0; k < r.predictions.size(); ++k) {
    const Prediction& p = r.predictions[k];
    nlohmann::json jp;
    jp["id"] = p.id;
    jp["chosen"] = p.chosen;
    if (k < instances.size() && instances[k].gold) {
      jp["gold"] = *instances[k].gold;
      jp["correct"] = (*instances[k].gold == p.chosen);
    }
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : p.candidates) {
      cands.push_back({{"doc", c.doc},
                       {"dir", c.dir},
                       {"ind", c.ind},
                       {"combined", c.combined}});
    }
    jp["candidates"] = std::move(cands);
    preds.push_back(std::move(jp));
  }
  j["predictions"] = std::move(preds);
  return j;
}

inline std::string report_table(const EvalReport& r, const std::vector<QAInstance>& instances) {
  std::ostringstream os;
  os << "id\tchosen\tgold\tcorrect\tcombined\n";
  for (std::size_t k = 0; k < r.predictions.size(); ++k) {
    const Prediction& p = r.predictions[k];
    os << p.id << '\t' << p.chosen << '\t';
    if (k < instances.size() && instances[k].gold) {
      os << *instances[k].gold << '\t' << ((*instances[k].gold == p.chosen) ? "yes" : "no");
    } else {
      os << "-\t-";
    }
    os << '\t' << p.candidates[static_cast<std::size_t>(p.chosen)].combined << '\n';
  }
  os << "accuracy\t" << r.accuracy << "\t(" << r.correct << "/" << r.total << ")\n";
  return os.str();
}

}  // namespace kgrel
