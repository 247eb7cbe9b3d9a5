#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include <json.hpp>

#include "kgrel/errors.hpp"
#include "kgrel/text.hpp"

namespace kgrel {

// Lowers a raw ConceptNet assertion dump (5 tab-separated columns:
// assertion URI, relation URI, start URI, end URI, JSON metadata) to the
// canonical 4-field triples TSV. Only rows whose start and end URIs are
// both English-language concepts are kept.
struct ConvertStats {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
};

namespace detail {

inline constexpr std::string_view kEnglishPrefix = "/c/en/";

// "/c/en/negative_charge/n" -> "negative_charge"
inline std::string_view concept_term(std::string_view uri) {
  std::string_view rest = uri.substr(kEnglishPrefix.size());
  std::size_t slash = rest.find('/');
  return slash == std::string_view::npos ? rest : rest.substr(0, slash);
}

inline std::string_view relation_term(std::string_view uri) {
  constexpr std::string_view prefix = "/r/";
  return uri.substr(0, prefix.size()) == prefix ? uri.substr(prefix.size()) : uri;
}

inline std::string format_weight(double w) {
  // shortest round-trip formatting
  return nlohmann::json(w).dump();
}

}  // namespace detail

inline ConvertStats convert_conceptnet(std::istream& in, std::ostream& out) {
  ConvertStats stats;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++stats.rows_read;
    auto fields = split(line, '\t');
    if (fields.size() != 5) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 5 tab-separated columns, got " +
                       std::to_string(fields.size()));
    }
    const std::string& rel_uri = fields[1];
    const std::string& start_uri = fields[2];
    const std::string& end_uri = fields[3];
    const std::string& meta = fields[4];
    if (start_uri.rfind(detail::kEnglishPrefix, 0) != 0 ||
        end_uri.rfind(detail::kEnglishPrefix, 0) != 0) {
      continue;
    }
    double weight = 1.0;
    if (!meta.empty()) {
      nlohmann::json j = nlohmann::json::parse(meta, nullptr, false);
      if (j.is_discarded()) {
        throw ParseError("line " + std::to_string(line_no) + ": malformed JSON metadata");
      }
      if (j.contains("weight") && j["weight"].is_number()) {
        weight = j["weight"].get<double>();
      }
    }
    std::string subj(detail::concept_term(start_uri));
    std::string obj(detail::concept_term(end_uri));
    if (subj.empty() || obj.empty()) continue;
    // rows the core parser would reject are dropped here, not propagated
    if (weight < 0.0 || normalize_surface(subj) == normalize_surface(obj)) continue;
    out << detail::relation_term(rel_uri) << '\t' << subj << '\t' << obj << '\t'
        << detail::format_weight(weight) << '\n';
    ++stats.rows_kept;
  }
  return stats;
}

}  // namespace kgrel
