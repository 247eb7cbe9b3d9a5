#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgrel/encoder.hpp"
#include "kgrel/errors.hpp"
#include "kgrel/io.hpp"

namespace kgrel {

// Checkpoint container: one compact JSON header line, then the parameter
// array as raw little-endian 64-bit floats. The header's "kind" field
// distinguishes encoder checkpoints from baseline ones.

inline void write_container(std::ostream& os, const nlohmann::json& header,
                            const std::vector<double>& params) {
  os << header.dump() << '\n';
  write_u64(os, params.size());
  os.write(reinterpret_cast<const char*>(params.data()),
           static_cast<std::streamsize>(params.size() * sizeof(double)));
}

inline std::pair<nlohmann::json, std::vector<double>> read_container(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError("checkpoint: missing header");
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || !header.is_object()) {
    throw ParseError("checkpoint: malformed header");
  }
  std::uint64_t n = read_u64(is);
  std::vector<double> params(n);
  is.read(reinterpret_cast<char*>(params.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw ParseError("checkpoint: truncated parameter array");
  return {std::move(header), std::move(params)};
}

inline void save_encoder(std::ostream& os, const ConceptEncoderParams& p) {
  nlohmann::json h;
  h["format"] = 1;
  h["kind"] = "encoder";
  h["embed_dim"] = p.d();
  h["hidden"] = p.H();
  h["neighbor_cap"] = p.K();
  h["relations"] = p.relations;
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& r : p.relations) {
    slots.push_back(r + "/fwd");
    slots.push_back(r + "/inv");
  }
  h["slots"] = std::move(slots);
  h["words"] = p.words;
  h["concepts"] = p.concepts;
  h["param_count"] = p.param_count();
  write_container(os, h, p.theta);
}

inline ConceptEncoderParams load_encoder(std::istream& is) {
  auto [h, params] = read_container(is);
  if (h.value("kind", "") != std::string("encoder")) {
    throw ParseError("checkpoint: expected kind \"encoder\", got \"" +
                     h.value("kind", std::string("?")) + "\"");
  }
  if (h.value("format", 0) != 1) throw ParseError("checkpoint: unsupported format version");
  ConceptEncoderParams p;
  p.cfg.embed_dim = h.at("embed_dim").get<std::size_t>();
  p.cfg.hidden = h.at("hidden").get<std::size_t>();
  p.cfg.neighbor_cap = h.at("neighbor_cap").get<std::size_t>();
  p.relations = h.at("relations").get<std::vector<std::string>>();
  p.words = h.at("words").get<std::vector<std::string>>();
  p.concepts = h.at("concepts").get<std::vector<std::string>>();
  p.rebuild_index();
  p.theta = std::move(params);
  if (p.theta.size() != p.param_count()) {
    throw ParseError("checkpoint: parameter count mismatch");
  }
  return p;
}

inline void save_encoder_file(const std::string& path, const ConceptEncoderParams& p) {
  AtomicFile f(path);
  save_encoder(f.stream(), p);
  f.commit();
}

inline ConceptEncoderParams load_encoder_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint: " + path);
  return load_encoder(in);
}

}  // namespace kgrel
