#pragma once

#include <istream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "kgrel/errors.hpp"
#include "kgrel/trainer.hpp"

namespace kgrel {

// "key = value" lines; '#' starts a comment, blank lines are ignored.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::string t = trim(line);
    if (t.empty()) continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ParseError("config line " + std::to_string(line_no) + ": empty key");
    }
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

inline void apply_train_config(const std::vector<std::pair<std::string, std::string>>& kvs,
                               TrainConfig& cfg) {
  for (const auto& [key, value] : kvs) {
    try {
      if (key == "kind") {
        if (value == "direct") cfg.kind = PairKind::Direct;
        else if (value == "indirect") cfg.kind = PairKind::Indirect;
        else throw ParseError("unknown kind \"" + value + "\"");
      } else if (key == "margin") cfg.margin = std::stod(value);
      else if (key == "epochs") cfg.epochs = std::stoul(value);
      else if (key == "batch_size") cfg.batch_size = std::stoul(value);
      else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "neighbor_cap") cfg.neighbor_cap = std::stoul(value);
      else if (key == "negatives_per_positive") cfg.negatives_per_positive = std::stoul(value);
      else if (key == "hidden") cfg.hidden = std::stoul(value);
      else if (key == "embed_dim") cfg.embed_dim = std::stoul(value);
      else if (key == "samples_per_epoch") cfg.samples_per_epoch = std::stoul(value);
      else if (key == "heldout_fraction") cfg.heldout_fraction = std::stod(value);
      else if (key == "zero_init") cfg.zero_init = (value == "true" || value == "1");
      else if (key == "freeze_words") cfg.freeze_words = (value == "true" || value == "1");
      else throw ParseError("unknown config key \"" + key + "\"");
    } catch (const std::invalid_argument&) {
      throw ParseError("config key \"" + key + "\": bad value \"" + value + "\"");
    } catch (const std::out_of_range&) {
      throw ParseError("config key \"" + key + "\": bad value \"" + value + "\"");
    }
  }
}

inline nlohmann::json train_config_json(const TrainConfig& cfg) {
  return {{"kind", pair_kind_name(cfg.kind)},
          {"margin", cfg.margin},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"seed", cfg.seed},
          {"neighbor_cap", cfg.neighbor_cap},
          {"negatives_per_positive", cfg.negatives_per_positive},
          {"hidden", cfg.hidden},
          {"embed_dim", cfg.embed_dim},
          {"samples_per_epoch", cfg.samples_per_epoch},
          {"heldout_fraction", cfg.heldout_fraction},
          {"zero_init", cfg.zero_init},
          {"freeze_words", cfg.freeze_words}};
}

}  // namespace kgrel
