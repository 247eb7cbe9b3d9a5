#pragma once

#include <algorithm>
#include <istream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "kgrel/kb.hpp"
#include "kgrel/text.hpp"

namespace kgrel {

// Function words whose unigrams would link to huge hub concepts and drown
// the aggregation. Longer n-grams are never filtered.
inline const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",    "an",   "the",  "of",   "in",   "on",    "at",    "to",    "for",
      "with", "by",   "from", "as",   "is",   "are",   "was",   "were",  "be",
      "been", "am",   "do",   "does", "did",  "have",  "has",   "had",   "will",
      "would", "can", "could", "shall", "should", "may", "might", "must", "it",
      "its",  "this", "that", "these", "those", "and",  "or",    "but",   "not",
      "no",   "so",   "if",   "then", "than", "there", "here",  "he",    "she",
      "they", "we",   "you",  "i",    "what", "which", "who",   "how",   "when",
      "where", "why"};
  return words;
}

inline std::unordered_set<std::string> load_stopwords(std::istream& in) {
  std::unordered_set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = tokenize(line);
    if (toks.size() == 1) words.insert(toks[0]);
  }
  return words;
}

struct RetrievalOptions {
  bool filter_stopwords = true;
  // nullptr selects the built-in list
  const std::unordered_set<std::string>* stopwords = nullptr;

  const std::unordered_set<std::string>& stopword_set() const {
    return stopwords ? *stopwords : default_stopwords();
  }
};

struct NgramSpan {
  std::string text;   // space-joined tokens
  std::size_t begin;  // token span, half-open
  std::size_t end;
};

// All contiguous {1,2,3}-grams, unigrams first, then bigrams, then
// trigrams, each by start position. Stopword unigrams are dropped when the
// filter is enabled.
inline std::vector<NgramSpan> extract_ngrams(const std::vector<std::string>& tokens,
                                             const RetrievalOptions& opts = {}) {
  std::vector<NgramSpan> out;
  const auto& stop = opts.stopword_set();
  for (std::size_t n = 1; n <= 3; ++n) {
    if (tokens.size() < n) break;
    for (std::size_t b = 0; b + n <= tokens.size(); ++b) {
      if (n == 1 && opts.filter_stopwords && stop.count(tokens[b])) continue;
      std::string text = tokens[b];
      for (std::size_t k = 1; k < n; ++k) {
        text.push_back(' ');
        text += tokens[b + k];
      }
      out.push_back({std::move(text), b, b + n});
    }
  }
  return out;
}

struct ConceptMatch {
  std::string ngram;
  std::size_t begin;
  std::size_t end;
  ConceptId concept_id;
};

// The KB concepts whose surface exactly equals an extracted n-gram of the
// sentence. One surface-index lookup per n-gram.
struct RetrievedConceptSet {
  std::string source_text;
  std::vector<ConceptId> concept_ids;  // sorted, unique
  std::vector<ConceptMatch> matches;   // in extraction order
};

inline RetrievedConceptSet retrieve_concepts(std::string_view sentence,
                                             const KnowledgeGraph& kg,
                                             const RetrievalOptions& opts = {}) {
  RetrievedConceptSet result;
  result.source_text = std::string(sentence);
  auto tokens = tokenize(sentence);
  for (auto& ng : extract_ngrams(tokens, opts)) {
    if (auto c = kg.find_concept(ng.text)) {
      result.matches.push_back({ng.text, ng.begin, ng.end, *c});
      result.concept_ids.push_back(*c);
    }
  }
  std::sort(result.concept_ids.begin(), result.concept_ids.end());
  result.concept_ids.erase(std::unique(result.concept_ids.begin(), result.concept_ids.end()),
                           result.concept_ids.end());
  return result;
}

}  // namespace kgrel
