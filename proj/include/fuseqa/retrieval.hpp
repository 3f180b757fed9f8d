#pragma once

// Entity grounding and hop-bounded subgraph extraction.

#include <cstddef>
#include <iosfwd>
#include <set>
#include <string_view>
#include <vector>

#include "fuseqa/kg_store.hpp"

namespace fuseqa {

struct SeedSet {
  std::set<EntityId> question;
  std::set<EntityId> answer;
};

struct Subgraph {
  std::size_t max_hop = 0;
  std::vector<TripletId> triplets;    // ascending
  std::vector<std::size_t> min_hop;   // parallel to triplets: shortest qualifying path using it
  std::vector<EntityId> nodes;        // ascending, union of heads and tails

  bool empty() const { return triplets.empty(); }
  bool operator==(const Subgraph&) const = default;
};

// Leftmost-longest matching of KG entity surfaces over the word tokens of
// `text`. A chosen span suppresses every other span that overlaps it.
std::set<EntityId> ground_entities(std::string_view text, const KnowledgeGraph& kg);

// Triplets lying on a simple undirected path of at most max_hop edges from a
// question seed to a different answer seed. With no answer seeds, triplets on
// a simple path of at most max_hop edges starting at a question seed.
// Self-loops never lie on a simple path and are never returned.
Subgraph retrieve_subgraph(const KnowledgeGraph& kg, const SeedSet& seeds, std::size_t max_hop);

// Keeps the max_triplets triplets with the smallest (min_hop, id).
Subgraph cap_subgraph(const Subgraph& sub, const KnowledgeGraph& kg, std::size_t max_triplets);

// Builds a subgraph over an explicit triplet list (min_hop left at 0).
Subgraph subgraph_from_triplets(const KnowledgeGraph& kg, std::vector<TripletId> ids, std::size_t max_hop);

// `# hop=<n>` then one TSV triple line per triplet.
void write_subgraph(const Subgraph& sub, const KnowledgeGraph& kg, std::ostream& out);

}  // namespace fuseqa
