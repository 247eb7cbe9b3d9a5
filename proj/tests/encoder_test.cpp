#include "kgrel/encoder.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <sstream>

#include "kgrel/checkpoint.hpp"
#include "support.hpp"

using namespace kgrel;
using testsupport::driving_graph;
using testsupport::ingest_text;

namespace {

// Step-by-step reference for the standard LSTM recurrences, written
// against the raw weight arrays. Shares no code with the library pass.
struct OracleLstm {
  std::size_t H, d;
  const double* Wx;  // 4H x d, gate rows i,f,g,o
  const double* Wh;  // 4H x H
  const double* b;   // 4H

  std::vector<double> final_hidden(const std::vector<std::vector<double>>& xs) const {
    std::vector<double> h(H, 0.0), c(H, 0.0);
    for (const auto& x : xs) {
      std::vector<double> h_new(H), c_new(H);
      for (std::size_t j = 0; j < H; ++j) {
        double pi = b[j], pf = b[H + j], pg = b[2 * H + j], po = b[3 * H + j];
        for (std::size_t k = 0; k < d; ++k) {
          pi += Wx[j * d + k] * x[k];
          pf += Wx[(H + j) * d + k] * x[k];
          pg += Wx[(2 * H + j) * d + k] * x[k];
          po += Wx[(3 * H + j) * d + k] * x[k];
        }
        for (std::size_t k = 0; k < H; ++k) {
          pi += Wh[j * H + k] * h[k];
          pf += Wh[(H + j) * H + k] * h[k];
          pg += Wh[(2 * H + j) * H + k] * h[k];
          po += Wh[(3 * H + j) * H + k] * h[k];
        }
        double gi = 1.0 / (1.0 + std::exp(-pi));
        double gf = 1.0 / (1.0 + std::exp(-pf));
        double gg = std::tanh(pg);
        double go = 1.0 / (1.0 + std::exp(-po));
        c_new[j] = gf * c[j] + gi * gg;
        h_new[j] = go * std::tanh(c_new[j]);
      }
      h = h_new;
      c = c_new;
    }
    return h;
  }
};

ConceptEncoderParams tiny_params(const KnowledgeGraph& kg, std::size_t d, std::size_t H,
                                 std::size_t K, InitMode mode, std::uint64_t seed) {
  return ConceptEncoderParams::init(kg, nullptr, EncoderConfig{d, H, K}, mode, seed);
}

}  // namespace

TEST(WordVectors, LoadsWellFormed) {
  std::istringstream in("cat 0.1 0.2 0.3\ndog -1 2.5 0\n");
  auto table = load_word_vectors(in, 3);
  EXPECT_EQ(table.dim, 3u);
  EXPECT_EQ(table.vectors.size(), 2u);
  EXPECT_DOUBLE_EQ(table.lookup("cat")[1], 0.2);
  EXPECT_DOUBLE_EQ(table.lookup("dog")[0], -1.0);
}

TEST(WordVectors, DimensionMismatchNamesLine) {
  std::istringstream in("cat 0.1 0.2 0.3\ndog 1 2\n");
  try {
    load_word_vectors(in, 3);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(WordVectors, AbsentWordIsZero) {
  std::istringstream in("cat 1 2 3\n");
  auto table = load_word_vectors(in, 3);
  auto& v = table.lookup("zebra");
  EXPECT_EQ(v, (std::vector<double>{0.0, 0.0, 0.0}));
}

TEST(EncodeWords, ZeroParamsGiveZeroVector) {
  auto g = ingest_text("IsA\tcar\tvehicle\t1.0\n");
  auto p = tiny_params(g, 1, 1, 4, InitMode::Zero, 0);
  auto hw = encode_words({"car"}, p);
  ASSERT_EQ(hw.size(), 2u);
  EXPECT_DOUBLE_EQ(hw[0], 0.0);
  EXPECT_DOUBLE_EQ(hw[1], 0.0);
}

TEST(EncodeWords, SingleStepMatchesHandComputation) {
  auto g = ingest_text("IsA\tcar\tvehicle\t1.0\n");
  auto p = tiny_params(g, 1, 1, 4, InitMode::Zero, 0);
  std::int32_t row = p.word_row("car");
  ASSERT_GE(row, 0);
  p.theta[static_cast<std::size_t>(row)] = 0.5;
  double* wx_f = p.theta.data() + p.off_lstm(0);
  wx_f[0] = 0.1;
  wx_f[1] = 0.2;
  wx_f[2] = 0.3;
  wx_f[3] = 0.4;
  double* b_f = p.theta.data() + p.off_lstm(0) + 4 * (1 + 1);
  b_f[0] = 0.05;
  b_f[1] = 0.06;
  b_f[2] = 0.07;
  b_f[3] = 0.08;
  double* wx_b = p.theta.data() + p.off_lstm(1);
  wx_b[0] = 0.11;
  wx_b[1] = 0.21;
  wx_b[2] = 0.31;
  wx_b[3] = 0.41;

  auto sigmoid_ = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  double i_f = sigmoid_(0.1 * 0.5 + 0.05);
  double g_f = std::tanh(0.3 * 0.5 + 0.07);
  double o_f = sigmoid_(0.4 * 0.5 + 0.08);
  double expect_f = o_f * std::tanh(i_f * g_f);
  double i_b = sigmoid_(0.11 * 0.5);
  double g_b = std::tanh(0.31 * 0.5);
  double o_b = sigmoid_(0.41 * 0.5);
  double expect_b = o_b * std::tanh(i_b * g_b);

  auto hw = encode_words({"car"}, p);
  ASSERT_EQ(hw.size(), 2u);
  EXPECT_DOUBLE_EQ(hw[0], expect_f);
  EXPECT_DOUBLE_EQ(hw[1], expect_b);
}

TEST(EncodeWords, MultiStepMatchesOracle) {
  auto g = ingest_text("r\tred fast car\tblue slow bike\t1.0\n");
  const std::size_t d = 2, H = 2;
  auto p = tiny_params(g, d, H, 4, InitMode::Random, 1234);
  std::vector<std::string> tokens{"red", "fast", "car"};
  auto hw = encode_words(tokens, p);
  ASSERT_EQ(hw.size(), 2 * H);

  auto vecs_for = [&](const std::vector<std::string>& toks) {
    std::vector<std::vector<double>> xs;
    for (const auto& t : toks) {
      const double* v = p.word_vec(p.word_row(t));
      xs.emplace_back(v, v + d);
    }
    return xs;
  };
  OracleLstm fwd{H, d, p.lstm_wx(0), p.lstm_wh(0), p.lstm_b(0)};
  OracleLstm bwd{H, d, p.lstm_wx(1), p.lstm_wh(1), p.lstm_b(1)};
  auto hf = fwd.final_hidden(vecs_for(tokens));
  auto hb = bwd.final_hidden(vecs_for({"car", "fast", "red"}));
  for (std::size_t j = 0; j < H; ++j) {
    EXPECT_NEAR(hw[j], hf[j], 1e-12);
    EXPECT_NEAR(hw[H + j], hb[j], 1e-12);
  }
}

TEST(EncodeWords, EmptySequenceThrows) {
  auto g = ingest_text("IsA\tcar\tvehicle\t1.0\n");
  auto p = tiny_params(g, 2, 2, 4, InitMode::Random, 1);
  EXPECT_THROW(encode_words({}, p), ValidationError);
}

TEST(EncodeWords, OutputLengthIs2H) {
  auto g = ingest_text("IsA\tcar\tvehicle\t1.0\n");
  for (std::size_t H : {1u, 3u, 7u}) {
    auto p = tiny_params(g, 3, H, 4, InitMode::Random, H);
    EXPECT_EQ(encode_words({"car", "vehicle"}, p).size(), 2 * H);
  }
}

TEST(EncodeNeighbors, IsolatedConceptIsZero) {
  KnowledgeGraph::Builder b;
  b.add(*b.parse_triple_line("IsA\tcar\tvehicle\t1.0"));
  ConceptId lonely = b.intern_concept("lonely");
  auto g = b.finalize();
  auto p = tiny_params(g, 2, 2, 4, InitMode::Random, 5);
  auto hn = encode_neighbors(g, p, g.neighbors_topk(lonely, p.K()));
  for (double v : hn) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(EncodeNeighbors, IdentityCompositionPassesThrough) {
  auto g = ingest_text("IsA\tcar\tvehicle\t1.0\n");
  auto p = tiny_params(g, 2, 2, 4, InitMode::Random, 8);
  // make every slot W the identity with zero bias
  const std::size_t H2 = 2 * p.H();
  for (std::size_t s = 0; s < p.slot_count(); ++s) {
    double* W = p.theta.data() + p.off_slot(s);
    std::fill(W, W + H2 * H2 + H2, 0.0);
    for (std::size_t i = 0; i < H2; ++i) W[i * H2 + i] = 1.0;
  }
  auto car = *g.find_concept("car");
  auto vehicle = *g.find_concept("vehicle");
  auto hn = encode_neighbors(g, p, g.neighbors_topk(car, p.K()));
  auto hw_vehicle = encode_words(g.concept_tokens(vehicle), p);
  ASSERT_EQ(hn.size(), hw_vehicle.size());
  for (std::size_t i = 0; i < hn.size(); ++i) EXPECT_DOUBLE_EQ(hn[i], hw_vehicle[i]);
}

TEST(EncodeNeighbors, SumsOverTwoNeighbors) {
  auto g = ingest_text(
      "IsA\tcar\tvehicle\t1.0\n"
      "IsA\tcar\tmachine\t1.0\n");
  auto p = tiny_params(g, 2, 2, 4, InitMode::Random, 9);
  const std::size_t H2 = 2 * p.H();
  for (std::size_t s = 0; s < p.slot_count(); ++s) {
    double* W = p.theta.data() + p.off_slot(s);
    std::fill(W, W + H2 * H2 + H2, 0.0);
    for (std::size_t i = 0; i < H2; ++i) W[i * H2 + i] = 1.0;
  }
  auto car = *g.find_concept("car");
  auto hn = encode_neighbors(g, p, g.neighbors_topk(car, p.K()));
  auto h1 = encode_words(g.concept_tokens(*g.find_concept("vehicle")), p);
  auto h2 = encode_words(g.concept_tokens(*g.find_concept("machine")), p);
  for (std::size_t i = 0; i < hn.size(); ++i) EXPECT_DOUBLE_EQ(hn[i], h1[i] + h2[i]);
}

TEST(EncodeConcept, ConcatenationAndShape) {
  auto g = driving_graph();
  auto p = tiny_params(g, 3, 4, 16, InitMode::Random, 77);
  auto c = *g.find_concept("driving");
  auto enc = encode_concept_topk(c, g, p);
  ASSERT_EQ(enc.enc.size(), 4 * p.H());
  ASSERT_EQ(enc.word_part.size(), 2 * p.H());
  ASSERT_EQ(enc.neighbor_part.size(), 2 * p.H());
  for (std::size_t i = 0; i < 2 * p.H(); ++i) {
    EXPECT_DOUBLE_EQ(enc.enc[i], enc.word_part[i]);
    EXPECT_DOUBLE_EQ(enc.enc[2 * p.H() + i], enc.neighbor_part[i]);
  }
}

TEST(EncodeConcept, IsolatedConceptHasZeroNeighborPart) {
  KnowledgeGraph::Builder b;
  b.add(*b.parse_triple_line("IsA\tcar\tvehicle\t1.0"));
  ConceptId lonely = b.intern_concept("lonely");
  auto g = b.finalize();
  auto p = tiny_params(g, 2, 3, 4, InitMode::Random, 6);
  auto enc = encode_concept_topk(lonely, g, p);
  for (std::size_t i = 2 * p.H(); i < 4 * p.H(); ++i) EXPECT_DOUBLE_EQ(enc.enc[i], 0.0);
}

TEST(EncodeConcept, DeterministicAtInference) {
  auto g = driving_graph();
  auto p = tiny_params(g, 3, 3, 2, InitMode::Random, 13);
  auto c = *g.find_concept("driving");
  auto e1 = encode_concept_topk(c, g, p).enc;
  auto e2 = encode_concept_topk(c, g, p).enc;
  EXPECT_EQ(0, std::memcmp(e1.data(), e2.data(), e1.size() * sizeof(double)));
}

TEST(EncodeConcept, NeighborCapRespected) {
  auto g = ingest_text(
      "r\thub\tn1\t5.0\n"
      "r\thub\tn2\t4.0\n"
      "r\thub\tn3\t3.0\n"
      "r\thub\tn4\t2.0\n"
      "r\thub\tn5\t1.0\n");
  auto p = tiny_params(g, 2, 2, 2, InitMode::Random, 21);
  auto hub = *g.find_concept("hub");
  auto enc_capped = encode_concept_topk(hub, g, p);
  // manual encoding with exactly the two highest-weight edges
  auto top2 = g.neighbors_topk(hub, 2);
  ASSERT_EQ(top2.size(), 2u);
  EXPECT_EQ(g.concept_at(top2[0].neighbor).surface, "n1");
  EXPECT_EQ(g.concept_at(top2[1].neighbor).surface, "n2");
  auto enc_manual = encode_concept(hub, g, p, top2);
  EXPECT_EQ(enc_capped.enc, enc_manual.enc);
}

TEST(ScorePair, SymmetryAndZero) {
  auto g = driving_graph();
  auto c1 = *g.find_concept("driving");
  auto c2 = *g.find_concept("a car");
  auto p = tiny_params(g, 3, 3, 8, InitMode::Random, 31);
  EXPECT_DOUBLE_EQ(score_pair(c1, c2, g, p), score_pair(c2, c1, g, p));

  auto pz = tiny_params(g, 3, 3, 8, InitMode::Zero, 0);
  for (ConceptId a = 0; a < g.concept_count(); ++a) {
    for (ConceptId b = 0; b < g.concept_count(); ++b) {
      EXPECT_DOUBLE_EQ(score_pair(a, b, g, pz), 0.0);
    }
  }
}

TEST(ScorePair, MatchesEncodingDotProduct) {
  auto g = driving_graph();
  auto p = tiny_params(g, 2, 4, 8, InitMode::Random, 41);
  auto c1 = *g.find_concept("road");
  auto c2 = *g.find_concept("a license");
  auto e1 = encode_concept_topk(c1, g, p).enc;
  auto e2 = encode_concept_topk(c2, g, p).enc;
  double expected = 0.0;
  for (std::size_t i = 0; i < e1.size(); ++i) expected += e1[i] * e2[i];
  EXPECT_DOUBLE_EQ(score_pair(c1, c2, g, p), expected);
  EncoderScorer scorer(g, p);
  EXPECT_DOUBLE_EQ(scorer.score(c1, c2), expected);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  auto g = driving_graph();
  auto p = tiny_params(g, 3, 5, 7, InitMode::Random, 51);
  std::ostringstream out;
  save_encoder(out, p);
  std::istringstream in(out.str());
  auto p2 = load_encoder(in);
  EXPECT_EQ(p2.cfg.embed_dim, p.cfg.embed_dim);
  EXPECT_EQ(p2.cfg.hidden, p.cfg.hidden);
  EXPECT_EQ(p2.cfg.neighbor_cap, p.cfg.neighbor_cap);
  EXPECT_EQ(p2.words, p.words);
  EXPECT_EQ(p2.relations, p.relations);
  EXPECT_EQ(p2.concepts, p.concepts);
  ASSERT_EQ(p2.theta.size(), p.theta.size());
  EXPECT_EQ(0, std::memcmp(p2.theta.data(), p.theta.data(), p.theta.size() * sizeof(double)));
  // and the serialized bytes are stable
  std::ostringstream out2;
  save_encoder(out2, p2);
  EXPECT_EQ(out.str(), out2.str());
}

TEST(Checkpoint, RejectsWrongKind) {
  std::istringstream in("{\"kind\":\"transe\",\"format\":1}\n");
  EXPECT_THROW(load_encoder(in), ParseError);
}

TEST(EncoderScorer, RejectsRelationMismatch) {
  auto g1 = ingest_text("IsA\tcar\tvehicle\t1.0\n");
  auto g2 = ingest_text("HasA\tcar\twheel\t1.0\n");
  auto p = tiny_params(g1, 2, 2, 4, InitMode::Random, 61);
  EXPECT_THROW(EncoderScorer(g2, p), ValidationError);
}
