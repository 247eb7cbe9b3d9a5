#pragma once

// Shared fixtures for the test suites: tiny hand-built graphs, planted
// random graphs, and an independent BFS distance oracle that only looks at
// the triple list.

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "kgrel/kb.hpp"
#include "kgrel/rng.hpp"

namespace testsupport {

inline kgrel::KnowledgeGraph ingest_text(const std::string& tsv) {
  std::istringstream in(tsv);
  return kgrel::ingest(in);
}

// The 4-edge star around "driving" used across the suites.
inline std::string driving_tsv() {
  return
      "HasPrerequisite\tdriving\ta license\t1.0\n"
      "HasSubevent\tdriving\tgetting to a destination\t1.0\n"
      "UsedFor\ta car\tdriving\t1.0\n"
      "AtLocation\tdriving\troad\t1.0\n";
}

inline kgrel::KnowledgeGraph driving_graph() { return ingest_text(driving_tsv()); }

// Two dense clusters with no edges between them.
inline std::string two_cluster_tsv(std::size_t per_cluster, double p_intra, std::uint64_t seed) {
  kgrel::Rng rng(seed);
  std::ostringstream out;
  auto name = [](std::size_t cluster, std::size_t i) {
    return "c" + std::to_string(cluster) + "n" + std::to_string(i);
  };
  for (std::size_t cl = 0; cl < 2; ++cl) {
    for (std::size_t i = 0; i < per_cluster; ++i) {
      for (std::size_t j = i + 1; j < per_cluster; ++j) {
        if (rng.uniform01() < p_intra) {
          out << "rel\t" << name(cl, i) << '\t' << name(cl, j) << "\t1.0\n";
        }
      }
    }
  }
  return out.str();
}

// Disjoint stars: hub h<k> connected to its leaves.
inline std::string star_forest_tsv(std::size_t stars, std::size_t leaves) {
  std::ostringstream out;
  for (std::size_t s = 0; s < stars; ++s) {
    for (std::size_t l = 0; l < leaves; ++l) {
      out << "rel\thub" << s << "\tleaf" << s << "x" << l << "\t1.0\n";
    }
  }
  return out.str();
}

// Breadth-first distance over the undirected triple list, independent of
// the graph's adjacency structures. Returns -1 if unreachable.
inline int bfs_distance(const kgrel::KnowledgeGraph& kg, kgrel::ConceptId a,
                        kgrel::ConceptId b) {
  std::vector<std::vector<kgrel::ConceptId>> adj(kg.concept_count());
  for (const auto& t : kg.triples()) {
    adj[t.subject].push_back(t.object);
    adj[t.object].push_back(t.subject);
  }
  std::vector<int> dist(kg.concept_count(), -1);
  std::queue<kgrel::ConceptId> q;
  dist[a] = 0;
  q.push(a);
  while (!q.empty()) {
    kgrel::ConceptId u = q.front();
    q.pop();
    if (u == b) return dist[u];
    for (kgrel::ConceptId v : adj[u]) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
    }
  }
  return dist[b];
}

// Random graph over n concepts for oracle comparisons.
inline std::string random_graph_tsv(std::size_t n, std::size_t edges, std::uint64_t seed,
                                    std::size_t relations = 3) {
  kgrel::Rng rng(seed);
  std::ostringstream out;
  for (std::size_t e = 0; e < edges; ++e) {
    std::size_t a = rng.index(n);
    std::size_t b = rng.index(n);
    if (a == b) continue;
    out << "r" << rng.index(relations) << "\tv" << a << "\tv" << b << '\t'
        << (1.0 + rng.index(3)) << ".0\n";
  }
  return out.str();
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    dir_ = std::filesystem::temp_directory_path() /
           ("kgrel_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(dir_, ec);
  }
  std::filesystem::path path(const std::string& name) const { return dir_ / name; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace testsupport
