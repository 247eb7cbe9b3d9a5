#include "kgrel/qa.hpp"

#include <gtest/gtest.h>

#include <map>
#include <sstream>

#include "kgrel/trainer.hpp"
#include "support.hpp"

using namespace kgrel;
using testsupport::ingest_text;

namespace {

// Stub scorer over a dense matrix; E1 ids index rows, E2 ids (offset by
// row count) index columns.
PairScoreFn matrix_scorer(const std::vector<std::vector<double>>& m) {
  return [m](ConceptId a, ConceptId b) {
    std::size_t rows = m.size();
    return m[a][b - rows];
  };
}

std::vector<ConceptId> iota_ids(std::size_t from, std::size_t n) {
  std::vector<ConceptId> ids;
  for (std::size_t i = 0; i < n; ++i) ids.push_back(static_cast<ConceptId>(from + i));
  return ids;
}

// mean over rows of the row max, written as plainly as possible
double brute_force_aggregate(const std::vector<std::vector<double>>& m) {
  if (m.empty() || m[0].empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t r = 0; r < m.size(); ++r) {
    double best = m[r][0];
    for (std::size_t c = 1; c < m[r].size(); ++c) best = std::max(best, m[r][c]);
    sum += best;
  }
  return sum / static_cast<double>(m.size());
}

}  // namespace

TEST(Aggregate, RowMaxMean) {
  std::vector<std::vector<double>> m{{1, 2}, {3, 4}};
  double v = aggregate(iota_ids(0, 2), iota_ids(2, 2), matrix_scorer(m));
  EXPECT_DOUBLE_EQ(v, 3.0);
}

TEST(Aggregate, EmptySidesAreZero) {
  std::vector<std::vector<double>> m{{1.0}};
  EXPECT_EQ(aggregate({}, iota_ids(1, 1), matrix_scorer(m)), 0.0);
  EXPECT_EQ(aggregate(iota_ids(0, 1), {}, matrix_scorer(m)), 0.0);
}

TEST(Aggregate, SingletonIsThePairScore) {
  std::vector<std::vector<double>> m{{0.731}};
  EXPECT_EQ(aggregate({0}, {1}, matrix_scorer(m)), 0.731);
}

TEST(Aggregate, PermutationAndDuplicateInvariantBitwise) {
  std::vector<std::vector<double>> m{{0.3, -1.2, 2.0}, {0.9, 0.1, -0.5}, {1.5, 1.4, 1.3}};
  auto fn = matrix_scorer(m);
  double base = aggregate({0, 1, 2}, {3, 4, 5}, fn);
  EXPECT_EQ(base, aggregate({2, 0, 1}, {5, 3, 4}, fn));
  EXPECT_EQ(base, aggregate({1, 1, 0, 2, 2}, {4, 3, 5, 5, 3}, fn));
}

TEST(Aggregate, MatchesBruteForceBitwise) {
  Rng rng(41);
  for (int t = 0; t < 200; ++t) {
    std::size_t rows = 1 + rng.index(8), cols = 1 + rng.index(8);
    std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
    for (auto& row : m) {
      for (double& v : row) v = rng.uniform(-5, 5);
    }
    double got = aggregate(iota_ids(0, rows), iota_ids(rows, cols), matrix_scorer(m));
    EXPECT_EQ(got, brute_force_aggregate(m));
  }
}

TEST(Aggregate, SandwichBounds) {
  Rng rng(59);
  for (int t = 0; t < 100; ++t) {
    std::size_t rows = 1 + rng.index(6), cols = 1 + rng.index(6);
    std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
    double max_pair = -1e300;
    for (auto& row : m) {
      for (double& v : row) {
        v = rng.uniform(-3, 3);
        max_pair = std::max(max_pair, v);
      }
    }
    double min_row_max = 1e300;
    for (const auto& row : m) {
      min_row_max = std::min(min_row_max, *std::max_element(row.begin(), row.end()));
    }
    double v = aggregate(iota_ids(0, rows), iota_ids(rows, cols), matrix_scorer(m));
    EXPECT_LE(v, max_pair + 1e-12);
    EXPECT_GE(v, min_row_max - 1e-12);
  }
}

namespace {

KnowledgeGraph color_graph() {
  return ingest_text(
      "r\tcolor\tred\t1.0\n"
      "r\tcolor\tblue\t1.0\n"
      "r\tcolor\tgreen\t1.0\n");
}

QAInstance color_instance(std::vector<double> doc = {}) {
  QAInstance inst;
  inst.id = "q1";
  inst.question = "which color";
  inst.candidates = {"red", "blue", "green"};
  if (!doc.empty()) inst.doc_scores = doc;
  return inst;
}

PairScoreFn zero_fn() {
  return [](ConceptId, ConceptId) { return 0.0; };
}

}  // namespace

TEST(ScoreCandidate, DocOnlyMatchesDocRanking) {
  auto g = color_graph();
  auto inst = color_instance({0.2, 0.9, 0.4});
  CombinationWeights w;  // alpha = 1, betas = 0
  auto pred = predict(inst, g, zero_fn(), zero_fn(), w);
  EXPECT_EQ(pred.chosen, 1);
}

TEST(ScoreCandidate, CommonsenseOnlyPicksStubFavorite) {
  auto g = color_graph();
  auto inst = color_instance();
  auto color = *g.find_concept("color");
  auto green = *g.find_concept("green");
  PairScoreFn fav = [color, green](ConceptId a, ConceptId b) {
    return (a == color && b == green) ? 5.0 : 0.1;
  };
  CombinationWeights w;
  w.alpha = 0.0;
  w.beta_dir = 1.0;
  w.beta_ind = 0.0;
  auto pred = predict(inst, g, fav, zero_fn(), w);
  EXPECT_EQ(pred.chosen, 2);
}

TEST(ScoreCandidate, MissingDocScoresWithNonzeroAlphaThrows) {
  auto g = color_graph();
  auto inst = color_instance();
  CombinationWeights w;
  EXPECT_THROW(score_instance(inst, g, zero_fn(), zero_fn(), w), ValidationError);
}

TEST(ScoreCandidate, ConstantChannelStandardizesToZero) {
  auto g = color_graph();
  auto inst = color_instance({0.5, 0.5, 0.5});
  CombinationWeights w;
  w.beta_dir = 0.3;
  auto scores = score_instance(inst, g, zero_fn(), zero_fn(), w);
  for (const auto& s : scores) {
    EXPECT_EQ(s.z_doc, 0.0);
    EXPECT_EQ(s.z_dir, 0.0);
  }
}

TEST(ScoreCandidate, DocShiftInvariance) {
  auto g = color_graph();
  CombinationWeights w;
  w.beta_dir = 0.2;
  auto color = *g.find_concept("color");
  auto red = *g.find_concept("red");
  PairScoreFn stub = [color, red](ConceptId a, ConceptId b) {
    return (a == color && b == red) ? 1.0 : -0.3;
  };
  auto p1 = predict(color_instance({0.1, 0.7, 0.3}), g, stub, zero_fn(), w);
  auto p2 = predict(color_instance({100.1, 100.7, 100.3}), g, stub, zero_fn(), w);
  EXPECT_EQ(p1.chosen, p2.chosen);
  for (std::size_t i = 0; i < p1.candidates.size(); ++i) {
    EXPECT_NEAR(p1.candidates[i].z_doc, p2.candidates[i].z_doc, 1e-9);
  }
}

TEST(Predict, ArgmaxAndTieRules) {
  auto g = color_graph();
  CombinationWeights w;
  {
    auto pred = predict(color_instance({0.1, 0.9, 0.3}), g, zero_fn(), zero_fn(), w);
    EXPECT_EQ(pred.chosen, 1);
  }
  {
    auto pred = predict(color_instance({0.4, 0.4, 0.4}), g, zero_fn(), zero_fn(), w);
    EXPECT_EQ(pred.chosen, 0);  // all-equal: lowest index
  }
  {
    QAInstance inst;
    inst.id = "tie";
    inst.question = "which color";
    inst.candidates = {"red", "blue"};
    inst.doc_scores = std::vector<double>{0.5, 0.5 - 1e-12};
    auto pred = predict(inst, g, zero_fn(), zero_fn(), w);
    EXPECT_EQ(pred.chosen, 0);  // strictly greater wins
  }
}

TEST(Evaluate, AccuracyAndErrors) {
  auto g = color_graph();
  std::vector<QAInstance> data;
  for (int i = 0; i < 4; ++i) {
    auto inst = color_instance({0.1, 0.2, 0.3});
    inst.id = "q" + std::to_string(i);
    inst.gold = (i == 0) ? 0 : 2;  // doc ranking picks 2; only q0 is wrong
    data.push_back(inst);
  }
  CombinationWeights w;
  auto report = evaluate(data, g, zero_fn(), zero_fn(), w);
  EXPECT_DOUBLE_EQ(report.accuracy, 0.75);
  EXPECT_EQ(report.correct, 3u);

  EXPECT_THROW(evaluate({}, g, zero_fn(), zero_fn(), w), ValidationError);
  data[0].gold.reset();
  EXPECT_THROW(evaluate(data, g, zero_fn(), zero_fn(), w), ValidationError);
}

TEST(GridSearch, FindsIndirectOnlyOptimum) {
  auto g = color_graph();
  auto color = *g.find_concept("color");
  auto red = *g.find_concept("red");
  // doc prefers the wrong candidate, dir is flat, ind prefers gold (red)
  PairScoreFn ind = [color, red](ConceptId a, ConceptId b) {
    return (a == color && b == red) ? 2.0 : -1.0;
  };
  std::vector<QAInstance> val;
  for (int i = 0; i < 3; ++i) {
    auto inst = color_instance({0.1, 0.9, 0.2});
    inst.id = "v" + std::to_string(i);
    inst.gold = 0;
    val.push_back(inst);
  }
  auto result = grid_search(val, g, zero_fn(), ind,
                            {PairChannel::QuestionAnswer, PairChannel::AnswerPassage,
                             PairChannel::QuestionPassage});
  EXPECT_DOUBLE_EQ(result.accuracy, 1.0);
  EXPECT_GT(result.weights.beta_ind, 0.0);
  EXPECT_GT(result.weights.beta_ind, result.weights.alpha);
}

// A question whose answer is only reachable through the graph: the
// destination connects to the car via the shared driving hub.
TEST(TrainedFixture, IndirectChannelPrefersCarOverBook) {
  auto g = ingest_text(
      "UsedFor\tcar\tdriving\t1.0\n"
      "HasSubevent\tdriving\tdestination\t1.0\n"
      "AtLocation\tdriving\troad\t1.0\n"
      "HasPrerequisite\tdriving\tlicense\t1.0\n"
      "UsedFor\tbook\treading\t1.0\n"
      "AtLocation\tbook\tlibrary\t1.0\n"
      "Synonym\tbook\tvolume\t1.0\n");
  TrainConfig cfg;
  cfg.kind = PairKind::Indirect;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.01;
  cfg.hidden = 8;
  cfg.embed_dim = 8;
  cfg.neighbor_cap = 8;
  cfg.seed = 7;
  cfg.samples_per_epoch = 48;
  cfg.heldout_fraction = 0.0;
  auto run = train(g, nullptr, cfg);
  EncoderScorer scorer(g, run.params);
  PairScoreFn ind = [&scorer](ConceptId a, ConceptId b) { return scorer.score(a, b); };

  QAInstance inst;
  inst.id = "fig-destination";
  inst.question = "how did someone get to the destination";
  inst.candidates = {"drove the car", "read a book"};
  CombinationWeights w;
  w.alpha = 0.0;
  w.beta_dir = 0.0;
  w.beta_ind = 1.0;
  auto scores = score_instance(inst, g, zero_fn(), ind, w);
  EXPECT_GT(scores[0].ind, scores[1].ind);
  auto pred = predict(inst, g, zero_fn(), ind, w);
  EXPECT_EQ(pred.chosen, 0);
}

TEST(DatasetIo, ParsesAndValidates) {
  std::string jsonl =
      R"({"id":"a","question":"which color","candidates":["red","blue"],"gold":1,"doc_scores":[0.1,0.2]})"
      "\n"
      R"({"id":"b","question":"w","passage":"p","candidates":["x","y","z"]})"
      "\n";
  std::istringstream in(jsonl);
  auto data = load_dataset_jsonl(in);
  ASSERT_EQ(data.size(), 2u);
  EXPECT_EQ(data[0].id, "a");
  ASSERT_TRUE(data[0].gold.has_value());
  EXPECT_EQ(*data[0].gold, 1);
  ASSERT_TRUE(data[0].doc_scores.has_value());
  EXPECT_TRUE(data[1].passage.has_value());
  EXPECT_FALSE(data[1].gold.has_value());

  auto expect_parse_error = [](const std::string& line) {
    std::istringstream s(line);
    EXPECT_THROW(load_dataset_jsonl(s), ParseError) << line;
  };
  expect_parse_error("not json\n");
  expect_parse_error(R"({"id":"x","question":"q","candidates":["only"]})" "\n");
  expect_parse_error(R"({"id":"x","question":"q","candidates":["a","b"],"gold":7})" "\n");
  expect_parse_error(R"({"id":"x","question":"q","candidates":["a","b"],"doc_scores":[1.0]})" "\n");
  expect_parse_error(R"({"question":"q","candidates":["a","b"]})" "\n");
}

TEST(Report, JsonShape) {
  auto g = color_graph();
  std::vector<QAInstance> data{color_instance({0.9, 0.1, 0.2})};
  data[0].gold = 0;
  CombinationWeights w;
  auto report = evaluate(data, g, zero_fn(), zero_fn(), w);
  auto j = report_to_json(report, data);
  EXPECT_DOUBLE_EQ(j["accuracy"].get<double>(), 1.0);
  EXPECT_EQ(j["predictions"].size(), 1u);
  EXPECT_EQ(j["predictions"][0]["chosen"].get<int>(), 0);
  EXPECT_TRUE(j["predictions"][0]["correct"].get<bool>());
  EXPECT_EQ(j["predictions"][0]["candidates"].size(), 3u);
  auto table = report_table(report, data);
  EXPECT_NE(table.find("accuracy"), std::string::npos);
}
