// kgrel: concept-relatedness pretraining over a commonsense knowledge
// graph, and candidate reranking for multiple-choice QA.
//
// One subcommand per pipeline stage:
//   convert-conceptnet  lower a raw assertion dump to the triples TSV
//   ingest              parse a triples TSV into a binary graph
//   train               fit a pair scorer (direct / indirect / transe / pmi)
//   grad-check          finite-difference check of the analytic gradient
//   retrieve            link a sentence to graph concepts
//   score-pair          score one concept pair with a trained scorer
//   eval                rerank a QA dataset and report accuracy
//   grid-search         pick combination weights on a validation set
//
// Exit codes: 0 ok, 1 usage, 2 data/validation error, 3 numerical failure.

#include <atomic>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "kgrel/baselines.hpp"
#include "kgrel/checkpoint.hpp"
#include "kgrel/conceptnet.hpp"
#include "kgrel/config.hpp"
#include "kgrel/encoder.hpp"
#include "kgrel/errors.hpp"
#include "kgrel/kb.hpp"
#include "kgrel/manifest.hpp"
#include "kgrel/qa.hpp"
#include "kgrel/retrieval.hpp"
#include "kgrel/trainer.hpp"
#include "kgrel/vectors.hpp"

namespace {

struct GlobalOpts {
  std::uint64_t seed = 42;
  int threads = 1;
  bool quiet = false;
};

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw kgrel::ValidationError("cannot open file: " + path);
  return in;
}

// scorer factories so parallel evaluation can build one scorer per thread
using ScorerFactory = std::function<kgrel::PairScoreFn()>;

ScorerFactory encoder_factory(std::shared_ptr<const kgrel::KnowledgeGraph> kg,
                              std::shared_ptr<const kgrel::ConceptEncoderParams> params) {
  return [kg, params]() -> kgrel::PairScoreFn {
    auto scorer = std::make_shared<kgrel::EncoderScorer>(*kg, *params);
    return [kg, params, scorer](kgrel::ConceptId a, kgrel::ConceptId b) {
      return scorer->score(a, b);
    };
  };
}

ScorerFactory zero_factory() {
  return []() -> kgrel::PairScoreFn {
    return [](kgrel::ConceptId, kgrel::ConceptId) { return 0.0; };
  };
}

ScorerFactory pmi_factory(std::shared_ptr<const kgrel::PmiTable> table) {
  return [table]() -> kgrel::PairScoreFn {
    return [table](kgrel::ConceptId a, kgrel::ConceptId b) { return table->score(a, b); };
  };
}

ScorerFactory transe_factory(std::shared_ptr<const kgrel::TranseParams> params) {
  return [params]() -> kgrel::PairScoreFn {
    return [params](kgrel::ConceptId a, kgrel::ConceptId b) {
      return kgrel::transe_pair_score(a, b, *params);
    };
  };
}

kgrel::EvalReport run_evaluation(const std::vector<kgrel::QAInstance>& instances,
                                 const kgrel::KnowledgeGraph& kg, const ScorerFactory& dir_f,
                                 const ScorerFactory& ind_f, const kgrel::CombinationWeights& w,
                                 int threads) {
  if (threads <= 1 || instances.size() < 2) {
    return kgrel::evaluate(instances, kg, dir_f(), ind_f(), w);
  }
  // instances are independent; shared state is read-only
  if (instances.empty()) throw kgrel::ValidationError("cannot evaluate an empty dataset");
  for (const auto& inst : instances) {
    if (!inst.gold) throw kgrel::ValidationError("instance " + inst.id + ": missing gold label");
  }
  std::vector<kgrel::Prediction> preds(instances.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&]() {
    kgrel::PairScoreFn dir_fn = dir_f();
    kgrel::PairScoreFn ind_fn = ind_f();
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= instances.size()) return;
      try {
        preds[i] = kgrel::predict(instances[i], kg, dir_fn, ind_fn, w);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mu);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);

  kgrel::EvalReport report;
  report.weights = w;
  report.total = instances.size();
  for (std::size_t i = 0; i < instances.size(); ++i) {
    if (preds[i].chosen == *instances[i].gold) ++report.correct;
  }
  report.accuracy = static_cast<double>(report.correct) / static_cast<double>(report.total);
  report.predictions = std::move(preds);
  return report;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"concept relatedness over a commonsense knowledge graph"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--threads", g.threads, "worker threads (1 = deterministic)")
      ->check(CLI::PositiveNumber);
  app.add_flag("--quiet", g.quiet, "suppress progress output");

  // convert-conceptnet
  auto* cmd_convert = app.add_subcommand("convert-conceptnet",
                                         "lower an assertion dump to the triples TSV");
  std::string cv_in, cv_out;
  cmd_convert->add_option("--in", cv_in, "assertion CSV (5 tab-separated columns)")->required();
  cmd_convert->add_option("--out", cv_out, "output triples TSV")->required();

  // ingest
  auto* cmd_ingest = app.add_subcommand("ingest", "build a binary graph from a triples TSV");
  std::string in_triples, in_out;
  cmd_ingest->add_option("--triples", in_triples, "triples TSV")->required();
  cmd_ingest->add_option("--out", in_out, "output graph file")->required();

  // train
  auto* cmd_train = app.add_subcommand("train", "fit a pair scorer on the graph");
  std::string tr_kb, tr_out, tr_kind = "direct", tr_config, tr_vectors;
  kgrel::TrainConfig tr_cfg;
  kgrel::TranseConfig tr_transe;
  std::string tr_transe_norm = "L2";
  double tr_margin = -1.0;
  cmd_train->add_option("--kb", tr_kb, "graph file (binary or TSV)")->required();
  cmd_train->add_option("--out", tr_out, "output checkpoint (or PMI table)")->required();
  cmd_train->add_option("--kind", tr_kind, "direct | indirect | transe | pmi");
  cmd_train->add_option("--config", tr_config, "key = value config file");
  cmd_train->add_option("--vectors", tr_vectors, "word vector file for initialization");
  cmd_train->add_option("--epochs", tr_cfg.epochs, "training epochs");
  cmd_train->add_option("--batch", tr_cfg.batch_size, "batch size");
  cmd_train->add_option("--lr", tr_cfg.learning_rate, "learning rate");
  cmd_train->add_option("--margin", tr_margin, "ranking margin");
  cmd_train->add_option("--neighbor-cap", tr_cfg.neighbor_cap, "max neighbors per concept");
  cmd_train->add_option("--hidden", tr_cfg.hidden, "recurrent hidden size per direction");
  cmd_train->add_option("--embed-dim", tr_cfg.embed_dim, "word vector dimension (random init)");
  cmd_train->add_option("--neg-per-pos", tr_cfg.negatives_per_positive, "negatives per positive");
  cmd_train->add_option("--heldout", tr_cfg.heldout_fraction, "held-out fraction of positives");
  cmd_train->add_option("--samples-per-epoch", tr_cfg.samples_per_epoch,
                        "positive pool size (0 = one per triple)");
  cmd_train->add_flag("--zero-init", tr_cfg.zero_init, "start from all-zero parameters");
  cmd_train->add_flag("--freeze-words", tr_cfg.freeze_words, "do not fine-tune word vectors");
  cmd_train->add_option("--transe-dim", tr_transe.dim, "TransE embedding dimension");
  cmd_train->add_option("--transe-norm", tr_transe_norm, "TransE distance norm: L1 | L2");

  // grad-check
  auto* cmd_grad = app.add_subcommand("grad-check", "finite-difference gradient validation");
  std::string gc_kb, gc_kind = "direct", gc_out;
  std::size_t gc_hidden = 3, gc_dim = 3, gc_cap = 4, gc_samples = 20;
  double gc_margin = 0.1, gc_eps = 1e-5, gc_tol = 0.0;
  cmd_grad->add_option("--kb", gc_kb, "graph file")->required();
  cmd_grad->add_option("--kind", gc_kind, "direct | indirect");
  cmd_grad->add_option("--hidden", gc_hidden, "hidden size of the tiny model");
  cmd_grad->add_option("--embed-dim", gc_dim, "embedding dimension of the tiny model");
  cmd_grad->add_option("--neighbor-cap", gc_cap, "neighbor cap");
  cmd_grad->add_option("--samples", gc_samples, "number of random models checked");
  cmd_grad->add_option("--margin", gc_margin, "ranking margin");
  cmd_grad->add_option("--epsilon", gc_eps, "finite-difference step");
  cmd_grad->add_option("--tolerance", gc_tol, "fail (exit 3) if max relative error exceeds this");
  cmd_grad->add_option("--out", gc_out, "optional JSON result file");

  // retrieve
  auto* cmd_retrieve = app.add_subcommand("retrieve", "link a sentence to graph concepts");
  std::string rt_kb, rt_text, rt_stopwords, rt_out;
  bool rt_nofilter = false;
  cmd_retrieve->add_option("--kb", rt_kb, "graph file")->required();
  cmd_retrieve->add_option("--text", rt_text, "sentence to link")->required();
  cmd_retrieve->add_option("--stopwords", rt_stopwords, "stopword list file (one word per line)");
  cmd_retrieve->add_flag("--no-stopword-filter", rt_nofilter, "keep stopword unigrams");
  cmd_retrieve->add_option("--out", rt_out, "optional JSON output file");

  // score-pair
  auto* cmd_score = app.add_subcommand("score-pair", "score one concept pair");
  std::string sp_kb, sp_c1, sp_c2, sp_ckpt, sp_transe, sp_out;
  bool sp_pmi = false;
  cmd_score->add_option("--kb", sp_kb, "graph file")->required();
  cmd_score->add_option("--c1", sp_c1, "first concept surface")->required();
  cmd_score->add_option("--c2", sp_c2, "second concept surface")->required();
  cmd_score->add_option("--ckpt", sp_ckpt, "encoder checkpoint");
  cmd_score->add_option("--transe", sp_transe, "TransE checkpoint");
  cmd_score->add_flag("--pmi", sp_pmi, "score with PMI counts built from the graph");
  cmd_score->add_option("--out", sp_out, "optional JSON output file");

  // eval / grid-search share most options
  std::string ev_kb, ev_data, ev_dir, ev_ind, ev_out, ev_scorer = "encoder", ev_transe, ev_val;
  double ev_alpha = 1.0, ev_beta_dir = 0.0, ev_beta_ind = 0.0;
  bool ev_grid = false;
  auto* cmd_eval = app.add_subcommand("eval", "rerank a QA dataset and report accuracy");
  cmd_eval->add_option("--kb", ev_kb, "graph file")->required();
  cmd_eval->add_option("--data", ev_data, "dataset JSONL")->required();
  cmd_eval->add_option("--out", ev_out, "report JSON")->required();
  cmd_eval->add_option("--dir", ev_dir, "direct encoder checkpoint");
  cmd_eval->add_option("--ind", ev_ind, "indirect encoder checkpoint");
  cmd_eval->add_option("--scorer", ev_scorer, "encoder | pmi | transe");
  cmd_eval->add_option("--transe", ev_transe, "TransE checkpoint (scorer=transe)");
  cmd_eval->add_option("--alpha", ev_alpha, "document score weight");
  cmd_eval->add_option("--beta-dir", ev_beta_dir, "direct relatedness weight");
  cmd_eval->add_option("--beta-ind", ev_beta_ind, "indirect relatedness weight");
  cmd_eval->add_flag("--grid", ev_grid, "grid-search weights on --val first");
  cmd_eval->add_option("--val", ev_val, "validation JSONL for --grid");

  std::string gs_kb, gs_data, gs_dir, gs_ind, gs_out, gs_scorer = "encoder", gs_transe;
  auto* cmd_gs = app.add_subcommand("grid-search", "search combination weights");
  cmd_gs->add_option("--kb", gs_kb, "graph file")->required();
  cmd_gs->add_option("--val", gs_data, "validation JSONL")->required();
  cmd_gs->add_option("--out", gs_out, "weights JSON")->required();
  cmd_gs->add_option("--dir", gs_dir, "direct encoder checkpoint");
  cmd_gs->add_option("--ind", gs_ind, "indirect encoder checkpoint");
  cmd_gs->add_option("--scorer", gs_scorer, "encoder | pmi | transe");
  cmd_gs->add_option("--transe", gs_transe, "TransE checkpoint (scorer=transe)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }

  try {
    if (*cmd_convert) {
      kgrel::RunManifest manifest("convert-conceptnet", g.seed);
      manifest.add_input(cv_in);
      auto in = open_or_throw(cv_in);
      kgrel::AtomicFile out(cv_out);
      auto stats = kgrel::convert_conceptnet(in, out.stream());
      out.commit();
      manifest.add_output(cv_out);
      manifest.set_config({{"in", cv_in}, {"out", cv_out}});
      manifest.write(cv_out);
      if (!g.quiet) {
        std::cout << "kept " << stats.rows_kept << " of " << stats.rows_read << " rows\n";
      }
    } else if (*cmd_ingest) {
      kgrel::RunManifest manifest("ingest", g.seed);
      manifest.add_input(in_triples);
      auto in = open_or_throw(in_triples);
      kgrel::KnowledgeGraph kg = kgrel::ingest(in);
      kgrel::AtomicFile out(in_out);
      kg.save(out.stream());
      out.commit();
      manifest.add_output(in_out);
      manifest.set_config({{"triples", in_triples}, {"out", in_out}});
      manifest.write(in_out);
      if (!g.quiet) {
        std::cout << kg.concept_count() << " concepts, " << kg.relation_count()
                  << " relations, " << kg.triple_count() << " triples\n";
      }
    } else if (*cmd_train) {
      kgrel::RunManifest manifest("train", g.seed);
      manifest.add_input(tr_kb);
      kgrel::KnowledgeGraph kg = kgrel::KnowledgeGraph::load_file(tr_kb);
      if (tr_kind == "direct" || tr_kind == "indirect") {
        if (!tr_config.empty()) {
          manifest.add_input(tr_config);
          auto cf = open_or_throw(tr_config);
          auto kvs = kgrel::parse_key_values(cf);
          kgrel::apply_train_config(kvs, tr_cfg);
        }
        // explicit flags override the config file
        tr_cfg.kind = tr_kind == "direct" ? kgrel::PairKind::Direct : kgrel::PairKind::Indirect;
        if (cmd_train->count("--margin")) tr_cfg.margin = tr_margin;
        if (app.count("--seed") || tr_config.empty()) tr_cfg.seed = g.seed;
        std::optional<kgrel::WordVectorTable> table;
        if (!tr_vectors.empty()) {
          manifest.add_input(tr_vectors);
          auto vf = open_or_throw(tr_vectors);
          table = kgrel::load_word_vectors(vf, tr_cfg.embed_dim);
        }
        kgrel::TrainingRun run = kgrel::train(kg, table ? &*table : nullptr, tr_cfg);
        kgrel::save_encoder_file(tr_out, run.params);
        manifest.add_output(tr_out);
        manifest.set_config(kgrel::train_config_json(tr_cfg));
        manifest.write(tr_out);
        if (!g.quiet) {
          for (std::size_t e = 0; e < run.loss_history.size(); ++e) {
            std::cout << "epoch " << (e + 1) << "  loss " << run.loss_history[e]
                      << "  heldout " << run.heldout_accuracy[e] << "\n";
          }
        }
      } else if (tr_kind == "transe") {
        tr_transe.epochs = cmd_train->count("--epochs") ? tr_cfg.epochs : tr_transe.epochs;
        if (cmd_train->count("--lr")) tr_transe.learning_rate = tr_cfg.learning_rate;
        if (cmd_train->count("--margin")) tr_transe.margin = tr_margin;
        tr_transe.seed = g.seed;
        if (tr_transe_norm == "L1") tr_transe.norm = kgrel::TranseNorm::L1;
        else if (tr_transe_norm == "L2") tr_transe.norm = kgrel::TranseNorm::L2;
        else throw kgrel::ValidationError("unknown TransE norm: " + tr_transe_norm);
        kgrel::TranseRun run = kgrel::transe_train(kg, tr_transe);
        kgrel::AtomicFile out(tr_out);
        kgrel::save_transe(out.stream(), run.params);
        out.commit();
        manifest.add_output(tr_out);
        manifest.set_config({{"kind", "transe"},
                             {"dim", tr_transe.dim},
                             {"margin", tr_transe.margin},
                             {"norm", tr_transe_norm},
                             {"epochs", tr_transe.epochs},
                             {"learning_rate", tr_transe.learning_rate},
                             {"seed", tr_transe.seed}});
        manifest.write(tr_out);
        if (!g.quiet && !run.loss_history.empty()) {
          std::cout << "loss " << run.loss_history.front() << " -> " << run.loss_history.back()
                    << "\n";
        }
      } else if (tr_kind == "pmi") {
        kgrel::PmiTable table = kgrel::PmiTable::from_graph(kg);
        kgrel::AtomicFile out(tr_out);
        table.save_tsv(out.stream(), kg);
        out.commit();
        manifest.add_output(tr_out);
        manifest.set_config({{"kind", "pmi"}});
        manifest.write(tr_out);
      } else {
        throw kgrel::ValidationError("unknown train kind: " + tr_kind);
      }
    } else if (*cmd_grad) {
      kgrel::KnowledgeGraph kg = kgrel::KnowledgeGraph::load_file(gc_kb);
      kgrel::PairKind kind =
          gc_kind == "indirect" ? kgrel::PairKind::Indirect : kgrel::PairKind::Direct;
      kgrel::EncoderConfig ecfg{gc_dim, gc_hidden, gc_cap};
      double max_err = 0.0;
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t i = 0; i < gc_samples; ++i) {
        auto params = kgrel::ConceptEncoderParams::init(kg, nullptr, ecfg,
                                                        kgrel::InitMode::Random, g.seed + i);
        kgrel::GradCheckResult res;
        bool found = false;
        for (std::uint64_t attempt = 0; attempt < 50 && !found; ++attempt) {
          auto samples = kind == kgrel::PairKind::Direct
                             ? kgrel::sample_direct(kg, 1, g.seed + 7919 * i + attempt)
                             : kgrel::sample_indirect(kg, 1, g.seed + 7919 * i + attempt);
          res = kgrel::gradient_check(kg, params, samples[0], gc_margin, gc_eps);
          found = res.hinge_active && res.loss > 1e-3;
        }
        if (!found) throw kgrel::ValidationError("could not find an active-hinge sample");
        max_err = std::max(max_err, res.max_rel_error);
        rows.push_back({{"model", i}, {"loss", res.loss}, {"max_rel_error", res.max_rel_error}});
        if (!g.quiet) {
          std::cout << "model " << i << "  loss " << res.loss << "  max rel err "
                    << res.max_rel_error << "\n";
        }
      }
      std::cout << "max relative error over " << gc_samples << " models: " << max_err << "\n";
      if (!gc_out.empty()) {
        kgrel::AtomicFile out(gc_out);
        out.stream() << nlohmann::json{{"max_rel_error", max_err}, {"models", rows}}.dump(2)
                     << "\n";
        out.commit();
        kgrel::RunManifest manifest("grad-check", g.seed);
        manifest.add_input(gc_kb);
        manifest.add_output(gc_out);
        manifest.set_config({{"hidden", gc_hidden}, {"embed_dim", gc_dim}, {"samples", gc_samples},
                             {"epsilon", gc_eps}, {"margin", gc_margin}});
        manifest.write(gc_out);
      }
      if (gc_tol > 0.0 && max_err >= gc_tol) {
        std::cerr << "gradient check failed: " << max_err << " >= " << gc_tol << "\n";
        return 3;
      }
    } else if (*cmd_retrieve) {
      kgrel::KnowledgeGraph kg = kgrel::KnowledgeGraph::load_file(rt_kb);
      kgrel::RetrievalOptions ropts;
      std::unordered_set<std::string> custom;
      if (!rt_stopwords.empty()) {
        auto sf = open_or_throw(rt_stopwords);
        custom = kgrel::load_stopwords(sf);
        ropts.stopwords = &custom;
      }
      ropts.filter_stopwords = !rt_nofilter;
      auto rset = kgrel::retrieve_concepts(rt_text, kg, ropts);
      nlohmann::json j;
      j["text"] = rset.source_text;
      nlohmann::json matches = nlohmann::json::array();
      for (const auto& m : rset.matches) {
        matches.push_back({{"ngram", m.ngram},
                           {"begin", m.begin},
                           {"end", m.end},
                           {"concept", kg.concept_at(m.concept_id).surface}});
      }
      j["matches"] = std::move(matches);
      nlohmann::json concepts = nlohmann::json::array();
      for (kgrel::ConceptId c : rset.concept_ids) concepts.push_back(kg.concept_at(c).surface);
      j["concepts"] = std::move(concepts);
      std::cout << j.dump(2) << "\n";
      if (!rt_out.empty()) {
        kgrel::AtomicFile out(rt_out);
        out.stream() << j.dump(2) << "\n";
        out.commit();
        kgrel::RunManifest manifest("retrieve", g.seed);
        manifest.add_input(rt_kb);
        manifest.add_output(rt_out);
        manifest.set_config({{"text", rt_text}});
        manifest.write(rt_out);
      }
    } else if (*cmd_score) {
      kgrel::KnowledgeGraph kg = kgrel::KnowledgeGraph::load_file(sp_kb);
      auto c1 = kg.find_concept(kgrel::normalize_surface(sp_c1));
      auto c2 = kg.find_concept(kgrel::normalize_surface(sp_c2));
      if (!c1) throw kgrel::ValidationError("concept not in graph: \"" + sp_c1 + "\"");
      if (!c2) throw kgrel::ValidationError("concept not in graph: \"" + sp_c2 + "\"");
      double score = 0.0;
      std::string scorer_name;
      if (!sp_ckpt.empty()) {
        auto params = kgrel::load_encoder_file(sp_ckpt);
        kgrel::EncoderScorer scorer(kg, params);
        score = scorer.score(*c1, *c2);
        scorer_name = "encoder";
      } else if (!sp_transe.empty()) {
        auto in = open_or_throw(sp_transe);
        auto params = kgrel::load_transe(in);
        score = kgrel::transe_pair_score(*c1, *c2, params);
        scorer_name = "transe";
      } else if (sp_pmi) {
        score = kgrel::PmiTable::from_graph(kg).score(*c1, *c2);
        scorer_name = "pmi";
      } else {
        throw kgrel::ValidationError("score-pair needs one of --ckpt, --transe, --pmi");
      }
      nlohmann::json j{{"c1", kg.concept_at(*c1).surface},
                       {"c2", kg.concept_at(*c2).surface},
                       {"scorer", scorer_name},
                       {"score", score}};
      std::cout << j.dump() << "\n";
      if (!sp_out.empty()) {
        kgrel::AtomicFile out(sp_out);
        out.stream() << j.dump(2) << "\n";
        out.commit();
        kgrel::RunManifest manifest("score-pair", g.seed);
        manifest.add_input(sp_kb);
        manifest.add_output(sp_out);
        manifest.set_config({{"c1", sp_c1}, {"c2", sp_c2}, {"scorer", scorer_name}});
        manifest.write(sp_out);
      }
    } else if (*cmd_eval || *cmd_gs) {
      const bool is_eval = static_cast<bool>(*cmd_eval);
      const std::string kb_path = is_eval ? ev_kb : gs_kb;
      const std::string data_path = is_eval ? ev_data : gs_data;
      const std::string out_path = is_eval ? ev_out : gs_out;
      const std::string dir_path = is_eval ? ev_dir : gs_dir;
      const std::string ind_path = is_eval ? ev_ind : gs_ind;
      const std::string scorer_kind = is_eval ? ev_scorer : gs_scorer;
      const std::string transe_path = is_eval ? ev_transe : gs_transe;

      kgrel::RunManifest manifest(is_eval ? "eval" : "grid-search", g.seed);
      manifest.add_input(kb_path);
      manifest.add_input(data_path);
      auto kg = std::make_shared<const kgrel::KnowledgeGraph>(
          kgrel::KnowledgeGraph::load_file(kb_path));
      auto df = open_or_throw(data_path);
      auto instances = kgrel::load_dataset_jsonl(df);

      ScorerFactory dir_f = zero_factory(), ind_f = zero_factory();
      bool have_dir = false, have_ind = false;
      if (scorer_kind == "encoder") {
        if (!dir_path.empty()) {
          manifest.add_input(dir_path);
          dir_f = encoder_factory(kg, std::make_shared<const kgrel::ConceptEncoderParams>(
                                          kgrel::load_encoder_file(dir_path)));
          have_dir = true;
        }
        if (!ind_path.empty()) {
          manifest.add_input(ind_path);
          ind_f = encoder_factory(kg, std::make_shared<const kgrel::ConceptEncoderParams>(
                                          kgrel::load_encoder_file(ind_path)));
          have_ind = true;
        }
      } else if (scorer_kind == "pmi") {
        auto table = std::make_shared<const kgrel::PmiTable>(kgrel::PmiTable::from_graph(*kg));
        dir_f = pmi_factory(table);
        ind_f = pmi_factory(table);
        have_dir = have_ind = true;
      } else if (scorer_kind == "transe") {
        if (transe_path.empty()) {
          throw kgrel::ValidationError("scorer=transe requires --transe checkpoint");
        }
        manifest.add_input(transe_path);
        auto in = open_or_throw(transe_path);
        auto params = std::make_shared<const kgrel::TranseParams>(kgrel::load_transe(in));
        dir_f = transe_factory(params);
        ind_f = transe_factory(params);
        have_dir = have_ind = true;
      } else {
        throw kgrel::ValidationError("unknown scorer: " + scorer_kind);
      }

      const std::vector<kgrel::PairChannel> channels = {kgrel::PairChannel::QuestionAnswer,
                                                        kgrel::PairChannel::AnswerPassage,
                                                        kgrel::PairChannel::QuestionPassage};
      if (!is_eval) {
        if (!have_dir || !have_ind) {
          throw kgrel::ValidationError("grid-search needs both pair scorers");
        }
        auto result = kgrel::grid_search(instances, *kg, dir_f(), ind_f(), channels);
        nlohmann::json j{{"alpha", result.weights.alpha},
                         {"beta_dir", result.weights.beta_dir},
                         {"beta_ind", result.weights.beta_ind},
                         {"accuracy", result.accuracy}};
        kgrel::AtomicFile out(out_path);
        out.stream() << j.dump(2) << "\n";
        out.commit();
        manifest.add_output(out_path);
        manifest.set_config({{"scorer", scorer_kind}});
        manifest.write(out_path);
        if (!g.quiet) std::cout << j.dump() << "\n";
        return 0;
      }

      kgrel::CombinationWeights w;
      w.alpha = ev_alpha;
      w.beta_dir = ev_beta_dir;
      w.beta_ind = ev_beta_ind;
      w.pair_channels = channels;
      if (ev_grid) {
        if (ev_val.empty()) throw kgrel::ValidationError("--grid requires --val");
        if (!have_dir || !have_ind) {
          throw kgrel::ValidationError("grid search needs both pair scorers");
        }
        manifest.add_input(ev_val);
        auto vf = open_or_throw(ev_val);
        auto val_instances = kgrel::load_dataset_jsonl(vf);
        auto result = kgrel::grid_search(val_instances, *kg, dir_f(), ind_f(), channels);
        w = result.weights;
        if (!g.quiet) {
          std::cout << "grid-search weights: alpha " << w.alpha << ", beta_dir " << w.beta_dir
                    << ", beta_ind " << w.beta_ind << " (val accuracy " << result.accuracy
                    << ")\n";
        }
      }
      if (w.beta_dir != 0.0 && !have_dir) {
        throw kgrel::ValidationError("beta_dir is nonzero but no direct scorer was given");
      }
      if (w.beta_ind != 0.0 && !have_ind) {
        throw kgrel::ValidationError("beta_ind is nonzero but no indirect scorer was given");
      }

      auto report = run_evaluation(instances, *kg, dir_f, ind_f, w, g.threads);
      kgrel::AtomicFile out(out_path);
      out.stream() << kgrel::report_to_json(report, instances).dump(2) << "\n";
      out.commit();
      manifest.add_output(out_path);
      manifest.set_config({{"scorer", scorer_kind},
                           {"alpha", w.alpha},
                           {"beta_dir", w.beta_dir},
                           {"beta_ind", w.beta_ind},
                           {"grid", ev_grid},
                           {"threads", g.threads}});
      manifest.write(out_path);
      if (!g.quiet) std::cout << kgrel::report_table(report, instances);
    }
  } catch (const kgrel::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const kgrel::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
