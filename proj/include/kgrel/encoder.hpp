#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgrel/errors.hpp"
#include "kgrel/kb.hpp"
#include "kgrel/rng.hpp"
#include "kgrel/vectors.hpp"

namespace kgrel {

// ---- small dense kernels (row-major) ----

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

// y += A x, A is rows x cols
inline void matvec_add(const double* A, const double* x, double* y, std::size_t rows,
                       std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] += dot(A + r * cols, x, cols);
  }
}

// y += A^T x, A is rows x cols, x has rows entries, y has cols entries
inline void matvec_t_add(const double* A, const double* x, double* y, std::size_t rows,
                         std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = A + r * cols;
    double xr = x[r];
    for (std::size_t c = 0; c < cols; ++c) y[c] += xr * row[c];
  }
}

// A += x y^T (outer product accumulation), A is |x| x |y|
inline void outer_add(double* A, const double* x, const double* y, std::size_t nx,
                      std::size_t ny) {
  for (std::size_t r = 0; r < nx; ++r) {
    double xr = x[r];
    double* row = A + r * ny;
    for (std::size_t c = 0; c < ny; ++c) row[c] += xr * y[c];
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ---- parameters ----

enum class InitMode { Zero, Random };

struct EncoderConfig {
  std::size_t embed_dim = 50;     // word vector dimension d
  std::size_t hidden = 50;        // per-direction hidden size H
  std::size_t neighbor_cap = 16;  // K
};

// All trainable parameters in one flat array:
//   [0]                word vectors, one row of d per vocabulary word
//   [off_unk]          shared vector for out-of-vocabulary words (d)
//   [off_lstm(0)]      forward LSTM:  Wx (4H x d), Wh (4H x H), b (4H)
//   [off_lstm(1)]      backward LSTM: same shapes
//   [off_slot(s)]      per (relation, direction) slot: W (2H x 2H), b (2H)
// Gate rows within 4H blocks are ordered input, forget, cell, output.
// Slot s = 2 * relation + (1 if the edge is inverse).
class ConceptEncoderParams {
 public:
  EncoderConfig cfg;
  std::vector<std::string> words;       // trainable vocabulary, row order
  std::vector<std::string> relations;   // relation names, id order
  std::vector<std::string> concepts;    // concept surfaces of the source graph
  std::vector<double> theta;

  std::size_t d() const { return cfg.embed_dim; }
  std::size_t H() const { return cfg.hidden; }
  std::size_t K() const { return cfg.neighbor_cap; }
  std::size_t slot_count() const { return 2 * relations.size(); }

  std::size_t lstm_size() const { return 4 * H() * d() + 4 * H() * H() + 4 * H(); }
  std::size_t slot_size() const { return 2 * H() * 2 * H() + 2 * H(); }

  std::size_t off_unk() const { return words.size() * d(); }
  std::size_t off_lstm(int dir) const { return off_unk() + d() + dir * lstm_size(); }
  std::size_t off_slot(std::size_t s) const { return off_lstm(2) + s * slot_size(); }
  std::size_t param_count() const { return off_slot(slot_count()); }

  // row < 0 selects the shared unk vector
  const double* word_vec(std::int32_t row) const {
    return theta.data() + (row < 0 ? off_unk() : static_cast<std::size_t>(row) * d());
  }

  const double* lstm_wx(int dir) const { return theta.data() + off_lstm(dir); }
  const double* lstm_wh(int dir) const { return lstm_wx(dir) + 4 * H() * d(); }
  const double* lstm_b(int dir) const { return lstm_wh(dir) + 4 * H() * H(); }

  const double* slot_w(std::size_t s) const { return theta.data() + off_slot(s); }
  const double* slot_b(std::size_t s) const { return slot_w(s) + 4 * H() * H(); }

  std::int32_t word_row(const std::string& w) const {
    auto it = word_index_.find(w);
    return it == word_index_.end() ? -1 : it->second;
  }

  std::size_t slot_of(RelationId rel, EdgeDir dir) const {
    return 2 * static_cast<std::size_t>(rel) + (dir == EdgeDir::Inverse ? 1 : 0);
  }

  void rebuild_index() {
    word_index_.clear();
    for (std::size_t i = 0; i < words.size(); ++i) {
      word_index_[words[i]] = static_cast<std::int32_t>(i);
    }
  }

  void check_finite() const {
    for (double v : theta) {
      if (!std::isfinite(v)) throw NumericError("non-finite parameter value");
    }
  }

  // Fresh parameters for a graph. With a vector table, the trainable
  // vocabulary is the graph vocabulary restricted to the table (other words
  // share the unk vector); without one, every graph word gets a random row.
  static ConceptEncoderParams init(const KnowledgeGraph& kg, const WordVectorTable* table,
                                   const EncoderConfig& cfg, InitMode mode, std::uint64_t seed) {
    ConceptEncoderParams p;
    p.cfg = cfg;
    if (table) p.cfg.embed_dim = table->dim;
    if (p.cfg.embed_dim == 0 || p.cfg.hidden == 0 || p.cfg.neighbor_cap == 0) {
      throw ValidationError("encoder dimensions must be positive");
    }
    p.relations = kg.relations();
    p.concepts.reserve(kg.concept_count());
    for (ConceptId c = 0; c < kg.concept_count(); ++c) {
      p.concepts.push_back(kg.concept_at(c).surface);
    }
    for (WordId w = 0; w < kg.word_count(); ++w) {
      const std::string& word = kg.word(w);
      if (!table || table->contains(word)) p.words.push_back(word);
    }
    p.rebuild_index();
    p.theta.assign(p.param_count(), 0.0);
    if (table) {
      for (std::size_t i = 0; i < p.words.size(); ++i) {
        const auto& v = table->lookup(p.words[i]);
        std::copy(v.begin(), v.end(), p.theta.begin() + i * p.d());
      }
    }
    if (mode == InitMode::Random) {
      Rng rng(seed);
      if (!table) {
        Rng wr = rng.fork(1);
        for (std::size_t i = 0; i < p.words.size() * p.d(); ++i) {
          p.theta[i] = wr.normal(0.0, 0.1);
        }
      }
      Rng lr = rng.fork(2);
      double sx = 1.0 / std::sqrt(static_cast<double>(p.d()));
      double sh = 1.0 / std::sqrt(static_cast<double>(p.H()));
      for (int dir = 0; dir < 2; ++dir) {
        double* wx = p.theta.data() + p.off_lstm(dir);
        for (std::size_t i = 0; i < 4 * p.H() * p.d(); ++i) wx[i] = lr.uniform(-sx, sx);
        double* wh = wx + 4 * p.H() * p.d();
        for (std::size_t i = 0; i < 4 * p.H() * p.H(); ++i) wh[i] = lr.uniform(-sh, sh);
        // biases stay zero
      }
      Rng sr = rng.fork(3);
      double ss = 1.0 / std::sqrt(static_cast<double>(2 * p.H()));
      for (std::size_t s = 0; s < p.slot_count(); ++s) {
        double* w = p.theta.data() + p.off_slot(s);
        for (std::size_t i = 0; i < 4 * p.H() * p.H(); ++i) w[i] = sr.uniform(-ss, ss);
      }
    }
    return p;
  }

 private:
  std::unordered_map<std::string, std::int32_t> word_index_;
};

// ---- forward passes (tapes retained for backprop) ----

struct LstmDirTape {
  // one entry per step, processing order
  std::vector<std::int32_t> rows;          // word vector row per step (-1 = unk)
  std::vector<std::vector<double>> gi, gf, gg, go, cell, hid;
};

struct SeqTape {
  LstmDirTape fwd, bwd;
  std::vector<double> hw;  // 2H: [forward final ; backward final]
};

namespace detail {

inline void lstm_run(const ConceptEncoderParams& p, int dir,
                     const std::vector<std::int32_t>& rows, LstmDirTape& tape) {
  const std::size_t H = p.H(), d = p.d();
  const double* Wx = p.lstm_wx(dir);
  const double* Wh = p.lstm_wh(dir);
  const double* b = p.lstm_b(dir);
  tape.rows = rows;
  const std::size_t T = rows.size();
  tape.gi.resize(T);
  tape.gf.resize(T);
  tape.gg.resize(T);
  tape.go.resize(T);
  tape.cell.resize(T);
  tape.hid.resize(T);
  std::vector<double> pre(4 * H);
  const std::vector<double> zero(H, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double* x = p.word_vec(rows[t]);
    const double* h_prev = t == 0 ? zero.data() : tape.hid[t - 1].data();
    const double* c_prev = t == 0 ? zero.data() : tape.cell[t - 1].data();
    for (std::size_t i = 0; i < 4 * H; ++i) pre[i] = b[i];
    matvec_add(Wx, x, pre.data(), 4 * H, d);
    matvec_add(Wh, h_prev, pre.data(), 4 * H, H);
    auto& gi = tape.gi[t];
    auto& gf = tape.gf[t];
    auto& gg = tape.gg[t];
    auto& go = tape.go[t];
    auto& cc = tape.cell[t];
    auto& hh = tape.hid[t];
    gi.resize(H);
    gf.resize(H);
    gg.resize(H);
    go.resize(H);
    cc.resize(H);
    hh.resize(H);
    for (std::size_t j = 0; j < H; ++j) {
      gi[j] = sigmoid(pre[j]);
      gf[j] = sigmoid(pre[H + j]);
      gg[j] = std::tanh(pre[2 * H + j]);
      go[j] = sigmoid(pre[3 * H + j]);
      cc[j] = gf[j] * c_prev[j] + gi[j] * gg[j];
      hh[j] = go[j] * std::tanh(cc[j]);
    }
  }
}

}  // namespace detail

// Bidirectional encoding of a token sequence given as word vector rows;
// the result is the concatenation of the two final hidden states.
inline SeqTape encode_word_rows(const ConceptEncoderParams& p,
                                const std::vector<std::int32_t>& rows) {
  if (rows.empty()) throw ValidationError("cannot encode an empty token sequence");
  SeqTape tape;
  detail::lstm_run(p, 0, rows, tape.fwd);
  std::vector<std::int32_t> rev(rows.rbegin(), rows.rend());
  detail::lstm_run(p, 1, rev, tape.bwd);
  const std::size_t H = p.H();
  tape.hw.resize(2 * H);
  std::copy(tape.fwd.hid.back().begin(), tape.fwd.hid.back().end(), tape.hw.begin());
  std::copy(tape.bwd.hid.back().begin(), tape.bwd.hid.back().end(), tape.hw.begin() + H);
  return tape;
}

inline std::vector<std::int32_t> word_rows_for_tokens(const ConceptEncoderParams& p,
                                                      const std::vector<std::string>& tokens) {
  std::vector<std::int32_t> rows;
  rows.reserve(tokens.size());
  for (const auto& t : tokens) rows.push_back(p.word_row(t));
  return rows;
}

inline std::vector<double> encode_words(const std::vector<std::string>& tokens,
                                        const ConceptEncoderParams& p) {
  return encode_word_rows(p, word_rows_for_tokens(p, tokens)).hw;
}

struct ConceptEncoding {
  std::vector<double> word_part;      // h_w, 2H
  std::vector<double> neighbor_part;  // h_n, 2H
  std::vector<double> enc;            // [h_w ; h_n], 4H
};

// h_n(c) = sum over selected edges of W_slot h_w(neighbor) + b_slot.
inline std::vector<double> encode_neighbors(const KnowledgeGraph& kg,
                                            const ConceptEncoderParams& p,
                                            const std::vector<Edge>& edges) {
  const std::size_t H2 = 2 * p.H();
  std::vector<double> hn(H2, 0.0);
  for (const Edge& e : edges) {
    auto rows = word_rows_for_tokens(p, kg.concept_tokens(e.neighbor));
    SeqTape t = encode_word_rows(p, rows);
    std::size_t s = p.slot_of(e.relation, e.dir);
    matvec_add(p.slot_w(s), t.hw.data(), hn.data(), H2, H2);
    const double* b = p.slot_b(s);
    for (std::size_t i = 0; i < H2; ++i) hn[i] += b[i];
  }
  return hn;
}

inline ConceptEncoding encode_concept(ConceptId c, const KnowledgeGraph& kg,
                                      const ConceptEncoderParams& p,
                                      const std::vector<Edge>& edges) {
  ConceptEncoding out;
  out.word_part = encode_words(kg.concept_tokens(c), p);
  out.neighbor_part = encode_neighbors(kg, p, edges);
  out.enc.reserve(4 * p.H());
  out.enc.insert(out.enc.end(), out.word_part.begin(), out.word_part.end());
  out.enc.insert(out.enc.end(), out.neighbor_part.begin(), out.neighbor_part.end());
  return out;
}

// Inference-mode encoding: highest-weight neighbors up to the cap.
inline ConceptEncoding encode_concept_topk(ConceptId c, const KnowledgeGraph& kg,
                                           const ConceptEncoderParams& p) {
  return encode_concept(c, kg, p, kg.neighbors_topk(c, p.K()));
}

// f(c1, c2): elementwise product of the two encodings reduced by sum.
inline double score_pair(ConceptId c1, ConceptId c2, const KnowledgeGraph& kg,
                         const ConceptEncoderParams& p) {
  ConceptEncoding e1 = encode_concept_topk(c1, kg, p);
  ConceptEncoding e2 = encode_concept_topk(c2, kg, p);
  return dot(e1.enc.data(), e2.enc.data(), e1.enc.size());
}

// Deterministic pair scorer with per-concept encoding cache. Not safe for
// concurrent use; create one per thread.
class EncoderScorer {
 public:
  EncoderScorer(const KnowledgeGraph& kg, const ConceptEncoderParams& p) : kg_(kg), p_(p) {
    if (p.relations != kg.relations()) {
      throw ValidationError("checkpoint relation table does not match the graph");
    }
  }

  double score(ConceptId a, ConceptId b) const {
    const auto& ea = encoding(a);
    const auto& eb = encoding(b);
    return dot(ea.data(), eb.data(), ea.size());
  }

  const std::vector<double>& encoding(ConceptId c) const {
    auto it = cache_.find(c);
    if (it != cache_.end()) return it->second;
    auto enc = encode_concept_topk(c, kg_, p_).enc;
    return cache_.emplace(c, std::move(enc)).first->second;
  }

 private:
  const KnowledgeGraph& kg_;
  const ConceptEncoderParams& p_;
  mutable std::unordered_map<ConceptId, std::vector<double>> cache_;
};

}  // namespace kgrel
