#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgrel/encoder.hpp"
#include "kgrel/errors.hpp"
#include "kgrel/kb.hpp"
#include "kgrel/rng.hpp"
#include "kgrel/vectors.hpp"

namespace kgrel {

enum class PairKind { Direct, Indirect };

inline const char* pair_kind_name(PairKind k) {
  return k == PairKind::Direct ? "direct" : "indirect";
}

// One ranking instance: the anchor scored against a related concept and an
// unrelated one.
struct PairSample {
  ConceptId anchor;
  ConceptId positive;
  ConceptId negative;
  PairKind kind;
};

inline double margin_loss(double pos_score, double neg_score, double margin) {
  // (neg - pos) first: an exact tie then yields the margin bit-exactly
  return std::max(0.0, margin + (neg_score - pos_score));
}

namespace detail {

constexpr int kMaxRejects = 1000;

inline ConceptId draw_direct_negative(const KnowledgeGraph& kg, ConceptId anchor, Rng& rng) {
  for (int t = 0; t < kMaxRejects; ++t) {
    ConceptId c = static_cast<ConceptId>(rng.index(kg.concept_count()));
    if (c != anchor && !kg.adjacent(anchor, c)) return c;
  }
  throw ValidationError("direct negative sampling failed after " +
                        std::to_string(kMaxRejects) + " rejections");
}

inline ConceptId draw_indirect_negative(const KnowledgeGraph& kg, ConceptId anchor, Rng& rng) {
  for (int t = 0; t < kMaxRejects; ++t) {
    ConceptId c = static_cast<ConceptId>(rng.index(kg.concept_count()));
    if (c != anchor && kg.hop_distance_capped(anchor, c) == HopClass::MoreThanTwo) return c;
  }
  throw ValidationError("indirect negative sampling failed after " +
                        std::to_string(kMaxRejects) + " rejections");
}

// Random pair at hop distance exactly 2, found by walking a random 2-path.
inline std::pair<ConceptId, ConceptId> draw_indirect_positive(const KnowledgeGraph& kg,
                                                              Rng& rng) {
  for (int t = 0; t < kMaxRejects; ++t) {
    ConceptId a = static_cast<ConceptId>(rng.index(kg.concept_count()));
    const auto& adj_a = kg.adjacency(a);
    if (adj_a.empty()) continue;
    ConceptId pivot = adj_a[rng.index(adj_a.size())].neighbor;
    const auto& adj_p = kg.adjacency(pivot);
    ConceptId b = adj_p[rng.index(adj_p.size())].neighbor;
    if (b == a || kg.adjacent(a, b)) continue;
    return {a, b};
  }
  throw ValidationError("indirect positive sampling failed after " +
                        std::to_string(kMaxRejects) + " rejections: no concept pairs at hop distance 2");
}

}  // namespace detail

// Positives drawn uniformly from the triples (undirected); negatives by
// rejection among concepts with no edge to the anchor.
inline std::vector<PairSample> sample_direct(const KnowledgeGraph& kg, std::size_t n,
                                             std::uint64_t seed) {
  if (kg.triple_count() == 0) throw ValidationError("cannot sample pairs from an empty graph");
  Rng rng(seed);
  std::vector<PairSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Triple& t = kg.triples()[rng.index(kg.triple_count())];
    bool flip = rng.below(2) != 0;
    ConceptId anchor = flip ? t.object : t.subject;
    ConceptId pos = flip ? t.subject : t.object;
    ConceptId neg = detail::draw_direct_negative(kg, anchor, rng);
    out.push_back({anchor, pos, neg, PairKind::Direct});
  }
  return out;
}

// Positives at hop distance exactly 2 (a common neighbor but no direct
// edge); negatives at distance greater than 2.
inline std::vector<PairSample> sample_indirect(const KnowledgeGraph& kg, std::size_t n,
                                               std::uint64_t seed) {
  if (kg.triple_count() == 0) throw ValidationError("cannot sample pairs from an empty graph");
  Rng rng(seed);
  std::vector<PairSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto [a, b] = detail::draw_indirect_positive(kg, rng);
    ConceptId neg = detail::draw_indirect_negative(kg, a, rng);
    out.push_back({a, b, neg, PairKind::Indirect});
  }
  return out;
}

// ---- batched forward/backward over shared word encodings ----

// Neighbor edges are pre-selected per sample so a loss value is a pure
// function of the parameters; the finite-difference check depends on that.
struct SampleContext {
  PairSample pair;
  std::vector<Edge> anchor_edges;
  std::vector<Edge> positive_edges;
  std::vector<Edge> negative_edges;
};

// Word-part encodings are shared across all uses of a concept within one
// batch (as itself or as someone's neighbor): forward runs once and the
// accumulated upstream gradient is propagated back once.
class TrainWorkspace {
 public:
  TrainWorkspace(const KnowledgeGraph& kg, const ConceptEncoderParams& p) : kg_(kg), p_(p) {}

  void start_batch() {
    index_.clear();
    tapes_.clear();
    dhw_.clear();
  }

  std::size_t tape_index(ConceptId c) {
    auto it = index_.find(c);
    if (it != index_.end()) return it->second;
    std::size_t idx = tapes_.size();
    tapes_.push_back(encode_word_rows(p_, rows_for(c)));
    dhw_.emplace_back(2 * p_.H(), 0.0);
    index_.emplace(c, idx);
    return idx;
  }

  const SeqTape& tape(std::size_t idx) const { return tapes_[idx]; }
  std::vector<double>& dhw(std::size_t idx) { return dhw_[idx]; }
  std::size_t tape_count() const { return tapes_.size(); }

  const std::vector<std::int32_t>& rows_for(ConceptId c) {
    if (c >= rows_cache_.size()) rows_cache_.resize(kg_.concept_count());
    auto& slot = rows_cache_[c];
    if (slot.empty()) {
      slot = word_rows_for_tokens(p_, kg_.concept_tokens(c));
      if (slot.empty()) slot.push_back(-1);  // unreachable: surfaces are non-empty
    }
    return slot;
  }

 private:
  const KnowledgeGraph& kg_;
  const ConceptEncoderParams& p_;
  std::vector<std::vector<std::int32_t>> rows_cache_;
  std::unordered_map<ConceptId, std::size_t> index_;
  std::vector<SeqTape> tapes_;
  std::vector<std::vector<double>> dhw_;
};

namespace detail {

// Backprop through one direction of the sequence encoder given the
// gradient at the final hidden state.
inline void lstm_backward(const ConceptEncoderParams& p, int dir, const LstmDirTape& tape,
                          const double* dh_final, std::vector<double>& grad) {
  const std::size_t H = p.H(), d = p.d();
  const double* Wx = p.lstm_wx(dir);
  const double* Wh = p.lstm_wh(dir);
  double* gWx = grad.data() + p.off_lstm(dir);
  double* gWh = gWx + 4 * H * d;
  double* gb = gWh + 4 * H * H;
  const std::size_t T = tape.rows.size();
  std::vector<double> dh(dh_final, dh_final + H);
  std::vector<double> dc(H, 0.0);
  std::vector<double> da(4 * H);
  const std::vector<double> zero(H, 0.0);
  for (std::size_t t = T; t-- > 0;) {
    const auto& gi = tape.gi[t];
    const auto& gf = tape.gf[t];
    const auto& gg = tape.gg[t];
    const auto& go = tape.go[t];
    const auto& cc = tape.cell[t];
    const double* c_prev = t == 0 ? zero.data() : tape.cell[t - 1].data();
    const double* h_prev = t == 0 ? zero.data() : tape.hid[t - 1].data();
    for (std::size_t j = 0; j < H; ++j) {
      double tc = std::tanh(cc[j]);
      double d_o = dh[j] * tc;
      dc[j] += dh[j] * go[j] * (1.0 - tc * tc);
      double d_i = dc[j] * gg[j];
      double d_f = dc[j] * c_prev[j];
      double d_g = dc[j] * gi[j];
      da[j] = d_i * gi[j] * (1.0 - gi[j]);
      da[H + j] = d_f * gf[j] * (1.0 - gf[j]);
      da[2 * H + j] = d_g * (1.0 - gg[j] * gg[j]);
      da[3 * H + j] = d_o * go[j] * (1.0 - go[j]);
    }
    const double* x = p.word_vec(tape.rows[t]);
    outer_add(gWx, da.data(), x, 4 * H, d);
    outer_add(gWh, da.data(), h_prev, 4 * H, H);
    for (std::size_t i = 0; i < 4 * H; ++i) gb[i] += da[i];
    // input gradient into the word vector (or shared unk) row
    double* gx = grad.data() + (tape.rows[t] < 0
                                    ? p.off_unk()
                                    : static_cast<std::size_t>(tape.rows[t]) * d);
    matvec_t_add(Wx, da.data(), gx, 4 * H, d);
    // recurrent gradient
    std::fill(dh.begin(), dh.end(), 0.0);
    matvec_t_add(Wh, da.data(), dh.data(), 4 * H, H);
    for (std::size_t j = 0; j < H; ++j) dc[j] *= gf[j];
  }
}

inline void seq_backward(const ConceptEncoderParams& p, const SeqTape& tape,
                         const double* d_hw, std::vector<double>& grad) {
  lstm_backward(p, 0, tape.fwd, d_hw, grad);
  lstm_backward(p, 1, tape.bwd, d_hw + p.H(), grad);
}

}  // namespace detail

// Mean hinge loss over the batch; when grad is non-null, accumulates
// d(mean loss)/d(theta) into it (grad must be zeroed by the caller).
inline double batch_loss_and_grad(const KnowledgeGraph& kg, const ConceptEncoderParams& p,
                                  const std::vector<SampleContext>& batch, double margin,
                                  std::vector<double>* grad, TrainWorkspace& ws) {
  if (batch.empty()) return 0.0;
  const std::size_t H2 = 2 * p.H(), H4 = 4 * p.H();
  ws.start_batch();

  struct EncodedConcept {
    std::size_t tape_idx;
    std::vector<double> enc;  // 4H
  };
  auto encode = [&](ConceptId c, const std::vector<Edge>& edges) {
    EncodedConcept out;
    out.tape_idx = ws.tape_index(c);
    out.enc.assign(H4, 0.0);
    const auto& hw = ws.tape(out.tape_idx).hw;
    std::copy(hw.begin(), hw.end(), out.enc.begin());
    double* hn = out.enc.data() + H2;
    for (const Edge& e : edges) {
      std::size_t nbr_idx = ws.tape_index(e.neighbor);
      std::size_t s = p.slot_of(e.relation, e.dir);
      matvec_add(p.slot_w(s), ws.tape(nbr_idx).hw.data(), hn, H2, H2);
      const double* b = p.slot_b(s);
      for (std::size_t i = 0; i < H2; ++i) hn[i] += b[i];
    }
    return out;
  };

  auto backprop_enc = [&](const EncodedConcept& ec, const std::vector<Edge>& edges,
                          const std::vector<double>& d_enc) {
    auto& dhw = ws.dhw(ec.tape_idx);
    for (std::size_t i = 0; i < H2; ++i) dhw[i] += d_enc[i];
    const double* d_hn = d_enc.data() + H2;
    for (const Edge& e : edges) {
      std::size_t nbr_idx = ws.tape_index(e.neighbor);  // already present
      std::size_t s = p.slot_of(e.relation, e.dir);
      double* gW = grad->data() + p.off_slot(s);
      double* gb = gW + H2 * H2;
      outer_add(gW, d_hn, ws.tape(nbr_idx).hw.data(), H2, H2);
      for (std::size_t i = 0; i < H2; ++i) gb[i] += d_hn[i];
      matvec_t_add(p.slot_w(s), d_hn, ws.dhw(nbr_idx).data(), H2, H2);
    }
  };

  double loss_sum = 0.0;
  for (const SampleContext& ctx : batch) {
    EncodedConcept ea = encode(ctx.pair.anchor, ctx.anchor_edges);
    EncodedConcept ep = encode(ctx.pair.positive, ctx.positive_edges);
    EncodedConcept en = encode(ctx.pair.negative, ctx.negative_edges);
    double s_pos = dot(ea.enc.data(), ep.enc.data(), H4);
    double s_neg = dot(ea.enc.data(), en.enc.data(), H4);
    double loss = margin_loss(s_pos, s_neg, margin);
    loss_sum += loss;
    if (grad && loss > 0.0) {
      std::vector<double> d_ea(H4), d_ep(H4), d_en(H4);
      for (std::size_t i = 0; i < H4; ++i) {
        d_ea[i] = en.enc[i] - ep.enc[i];
        d_ep[i] = -ea.enc[i];
        d_en[i] = ea.enc[i];
      }
      backprop_enc(ea, ctx.anchor_edges, d_ea);
      backprop_enc(ep, ctx.positive_edges, d_ep);
      backprop_enc(en, ctx.negative_edges, d_en);
    }
  }

  if (grad) {
    for (std::size_t idx = 0; idx < ws.tape_count(); ++idx) {
      auto& dhw = ws.dhw(idx);
      bool nonzero = false;
      for (double v : dhw) {
        if (v != 0.0) {
          nonzero = true;
          break;
        }
      }
      if (nonzero) detail::seq_backward(p, ws.tape(idx), dhw.data(), *grad);
    }
    double inv = 1.0 / static_cast<double>(batch.size());
    for (double& g : *grad) g *= inv;
  }
  return loss_sum / static_cast<double>(batch.size());
}

// ---- optimizer ----

struct Adam {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m, v;
  std::uint64_t t = 0;

  explicit Adam(double learning_rate, std::size_t n) : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& theta, const std::vector<double>& grad) {
    ++t;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      theta[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

// ---- training ----

struct TrainConfig {
  PairKind kind = PairKind::Direct;
  double margin = 0.1;
  std::size_t epochs = 5;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 42;
  std::size_t neighbor_cap = 16;
  std::size_t negatives_per_positive = 1;
  std::size_t hidden = 50;
  std::size_t embed_dim = 50;       // used when no word vector table is given
  std::size_t samples_per_epoch = 0;  // 0: one positive per triple
  double heldout_fraction = 0.05;
  bool zero_init = false;
  bool freeze_words = false;

  void validate() const {
    if (!(margin > 0.0)) throw ValidationError("margin must be positive");
    if (epochs == 0 || batch_size == 0) throw ValidationError("epochs and batch size must be positive");
    if (negatives_per_positive == 0) throw ValidationError("negatives per positive must be positive");
    if (hidden == 0 || embed_dim == 0 || neighbor_cap == 0) {
      throw ValidationError("model dimensions must be positive");
    }
    if (!(learning_rate >= 0.0)) throw ValidationError("learning rate must be non-negative");
    if (!(heldout_fraction >= 0.0 && heldout_fraction < 1.0)) {
      throw ValidationError("held-out fraction must be in [0, 1)");
    }
  }
};

struct TrainingRun {
  TrainConfig config;
  std::vector<double> loss_history;       // mean hinge loss per epoch
  std::vector<double> heldout_accuracy;   // fraction of held-out pairs ranked correctly
  ConceptEncoderParams params;
};

namespace detail {

inline std::vector<Edge> select_edges(const KnowledgeGraph& kg, ConceptId c, std::size_t cap,
                                      Rng& rng) {
  return kg.neighbors_sampled(c, cap, rng);
}

inline ConceptId draw_negative(const KnowledgeGraph& kg, PairKind kind, ConceptId anchor,
                               Rng& rng) {
  return kind == PairKind::Direct ? draw_direct_negative(kg, anchor, rng)
                                  : draw_indirect_negative(kg, anchor, rng);
}

}  // namespace detail

// Minimizes the margin ranking loss over sampled pair batches with Adam.
// Fully deterministic for a fixed config (single-threaded).
inline TrainingRun train(const KnowledgeGraph& kg, const WordVectorTable* table,
                         const TrainConfig& cfg) {
  cfg.validate();
  if (kg.triple_count() == 0) throw ValidationError("cannot train on an empty graph");

  Rng root(cfg.seed);
  EncoderConfig ecfg{cfg.embed_dim, cfg.hidden, cfg.neighbor_cap};
  ConceptEncoderParams params = ConceptEncoderParams::init(
      kg, table, ecfg, cfg.zero_init ? InitMode::Zero : InitMode::Random,
      root.fork(11).next_u64());

  // positive pool
  Rng pool_rng = root.fork(12);
  std::vector<std::pair<ConceptId, ConceptId>> pool;
  if (cfg.kind == PairKind::Direct) {
    std::size_t n = cfg.samples_per_epoch;
    if (n == 0) {
      pool.reserve(kg.triple_count());
      for (const Triple& t : kg.triples()) pool.emplace_back(t.subject, t.object);
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        const Triple& t = kg.triples()[pool_rng.index(kg.triple_count())];
        pool.emplace_back(t.subject, t.object);
      }
    }
  } else {
    std::size_t n = cfg.samples_per_epoch ? cfg.samples_per_epoch : kg.triple_count();
    for (std::size_t i = 0; i < n; ++i) {
      pool.push_back(detail::draw_indirect_positive(kg, pool_rng));
    }
  }

  // held-out split with fresh, fixed negatives
  Rng split_rng = root.fork(13);
  split_rng.shuffle(pool);
  std::size_t n_held = static_cast<std::size_t>(cfg.heldout_fraction *
                                                static_cast<double>(pool.size()));
  if (n_held >= pool.size()) n_held = pool.size() - 1;
  std::vector<PairSample> heldout;
  heldout.reserve(n_held);
  for (std::size_t i = 0; i < n_held; ++i) {
    auto [a, b] = pool[i];
    if (split_rng.below(2)) std::swap(a, b);
    heldout.push_back({a, b, detail::draw_negative(kg, cfg.kind, a, split_rng), cfg.kind});
  }
  std::vector<std::pair<ConceptId, ConceptId>> train_pool(pool.begin() + n_held, pool.end());
  if (train_pool.empty()) throw ValidationError("no training positives after held-out split");

  TrainingRun run;
  run.config = cfg;
  Adam opt(cfg.learning_rate, params.param_count());
  TrainWorkspace ws(kg, params);
  std::vector<double> grad(params.param_count(), 0.0);
  std::vector<SampleContext> batch;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng erng = root.fork(1000 + epoch);
    erng.shuffle(train_pool);

    // negatives are resampled every epoch
    std::vector<SampleContext> contexts;
    contexts.reserve(train_pool.size() * cfg.negatives_per_positive);
    for (auto [a, b] : train_pool) {
      if (erng.below(2)) std::swap(a, b);
      for (std::size_t k = 0; k < cfg.negatives_per_positive; ++k) {
        SampleContext ctx;
        ctx.pair = {a, b, detail::draw_negative(kg, cfg.kind, a, erng), cfg.kind};
        ctx.anchor_edges = detail::select_edges(kg, a, cfg.neighbor_cap, erng);
        ctx.positive_edges = detail::select_edges(kg, b, cfg.neighbor_cap, erng);
        ctx.negative_edges = detail::select_edges(kg, ctx.pair.negative, cfg.neighbor_cap, erng);
        contexts.push_back(std::move(ctx));
      }
    }

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < contexts.size(); begin += cfg.batch_size) {
      std::size_t end = std::min(begin + cfg.batch_size, contexts.size());
      batch.assign(contexts.begin() + begin, contexts.begin() + end);
      std::fill(grad.begin(), grad.end(), 0.0);
      double mean_loss = batch_loss_and_grad(kg, params, batch, cfg.margin, &grad, ws);
      if (!std::isfinite(mean_loss)) {
        throw NumericError("non-finite loss in epoch " + std::to_string(epoch + 1) +
                           " (mean batch loss = " + std::to_string(mean_loss) + ")");
      }
      loss_sum += mean_loss * static_cast<double>(batch.size());
      seen += batch.size();
      if (cfg.freeze_words) {
        std::fill(grad.begin(), grad.begin() + static_cast<std::ptrdiff_t>(params.off_lstm(0)),
                  0.0);
      }
      opt.step(params.theta, grad);
    }
    run.loss_history.push_back(loss_sum / static_cast<double>(seen));

    // held-out ranking accuracy under inference-mode encodings
    if (heldout.empty()) {
      run.heldout_accuracy.push_back(1.0);
    } else {
      EncoderScorer scorer(kg, params);
      std::size_t correct = 0;
      for (const PairSample& s : heldout) {
        if (scorer.score(s.anchor, s.positive) > scorer.score(s.anchor, s.negative)) ++correct;
      }
      run.heldout_accuracy.push_back(static_cast<double>(correct) /
                                     static_cast<double>(heldout.size()));
    }
  }

  run.params = std::move(params);
  return run;
}

// ---- gradient check ----

struct GradCheckResult {
  double max_rel_error = 0.0;
  double loss = 0.0;
  bool hinge_active = false;
};

// Central finite differences over every parameter against the analytic
// gradient, on a fixed sample with inference-selected neighbors.
inline GradCheckResult gradient_check(const KnowledgeGraph& kg, ConceptEncoderParams params,
                                      const PairSample& sample, double margin,
                                      double epsilon = 1e-5) {
  SampleContext ctx;
  ctx.pair = sample;
  ctx.anchor_edges = kg.neighbors_topk(sample.anchor, params.K());
  ctx.positive_edges = kg.neighbors_topk(sample.positive, params.K());
  ctx.negative_edges = kg.neighbors_topk(sample.negative, params.K());
  std::vector<SampleContext> batch{ctx};

  TrainWorkspace ws(kg, params);
  std::vector<double> analytic(params.param_count(), 0.0);
  GradCheckResult res;
  res.loss = batch_loss_and_grad(kg, params, batch, margin, &analytic, ws);
  res.hinge_active = res.loss > 0.0;

  for (std::size_t i = 0; i < params.theta.size(); ++i) {
    double saved = params.theta[i];
    params.theta[i] = saved + epsilon;
    double up = batch_loss_and_grad(kg, params, batch, margin, nullptr, ws);
    params.theta[i] = saved - epsilon;
    double down = batch_loss_and_grad(kg, params, batch, margin, nullptr, ws);
    params.theta[i] = saved;
    double numeric = (up - down) / (2.0 * epsilon);
    double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    res.max_rel_error = std::max(res.max_rel_error, std::abs(analytic[i] - numeric) / denom);
  }
  return res;
}

}  // namespace kgrel
