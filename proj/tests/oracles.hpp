#pragma once

// Brute-force reference implementations shared by the unit and acceptance tests.

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fuseqa/retrieval.hpp"
#include "fuseqa/tensor.hpp"

namespace oracle {

// Every simple undirected path of at most max_hop edges from a question seed.
// A path counts when it ends at an answer seed other than its start, or at any
// node when there are no answer seeds. Returns triplet id -> shortest length.
inline std::map<fuseqa::TripletId, std::size_t> path_triplets(const fuseqa::KnowledgeGraph& kg,
                                                              const fuseqa::SeedSet& seeds, std::size_t max_hop) {
  using namespace fuseqa;
  std::map<TripletId, std::size_t> best;
  std::vector<TripletId> path;
  std::vector<std::uint32_t> visited;
  auto dfs = [&](auto&& self, std::uint32_t start, std::uint32_t v) -> void {
    const bool counts = seeds.answer.empty() ? !path.empty() : v != start && seeds.answer.count(EntityId{v}) > 0;
    if (counts)
      for (auto id : path) {
        auto [it, inserted] = best.emplace(id, path.size());
        if (!inserted) it->second = std::min(it->second, path.size());
      }
    if (path.size() == max_hop) return;
    for (const auto& t : kg.triplets()) {
      std::uint32_t next;
      if (index(t.head) == v)
        next = index(t.tail);
      else if (index(t.tail) == v)
        next = index(t.head);
      else
        continue;
      if (std::find(visited.begin(), visited.end(), next) != visited.end()) continue;
      visited.push_back(next);
      path.push_back(t.id);
      self(self, start, next);
      path.pop_back();
      visited.pop_back();
    }
  };
  for (auto q : seeds.question) {
    visited = {index(q)};
    dfs(dfs, index(q), index(q));
  }
  return best;
}

inline fuseqa::KnowledgeGraph random_graph(fuseqa::SplitMix64& rng, std::size_t n, std::size_t m) {
  std::ostringstream out;
  for (std::size_t i = 0; i < m; ++i) out << 'n' << rng.below(n) << "\tr" << rng.below(3) << "\tn" << rng.below(n) << '\n';
  std::istringstream in(out.str());
  return fuseqa::parse_triples(in);
}

// One to three question seeds and zero to three answer seeds; zero exercises
// the neighbourhood fallback.
inline fuseqa::SeedSet random_seeds(fuseqa::SplitMix64& rng, const fuseqa::KnowledgeGraph& kg) {
  fuseqa::SeedSet s;
  const auto n = kg.num_entities();
  for (auto k = 1 + rng.below(3); k > 0; --k) s.question.insert(fuseqa::EntityId{static_cast<std::uint32_t>(rng.below(n))});
  for (auto k = rng.below(4); k > 0; --k) s.answer.insert(fuseqa::EntityId{static_cast<std::uint32_t>(rng.below(n))});
  return s;
}

}  // namespace oracle
