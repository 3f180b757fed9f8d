#include "fuseqa/retrieval.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <tuple>
#include <ostream>

#include "fuseqa/error.hpp"
#include "fuseqa/text.hpp"

namespace fuseqa {

std::set<EntityId> ground_entities(std::string_view text, const KnowledgeGraph& kg) {
  std::set<EntityId> found;
  const auto tokens = text::word_tokens(text);
  const std::size_t longest = kg.max_entity_tokens();
  std::size_t i = 0;
  while (i < tokens.size()) {
    std::size_t matched = 0;
    std::string span;
    std::optional<EntityId> best;
    for (std::size_t len = 1; len <= longest && i + len <= tokens.size(); ++len) {
      if (len > 1) span += ' ';
      span += tokens[i + len - 1];
      if (auto e = kg.lookup_entity(span)) {
        best = e;
        matched = len;
      }
    }
    if (best) {
      found.insert(*best);
      i += matched;
    } else {
      ++i;
    }
  }
  return found;
}

namespace {

constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();

EntityId other_end(const Triplet& t, EntityId from) { return t.head == from ? t.tail : t.head; }

template <typename F>
void for_each_incident(const KnowledgeGraph& kg, EntityId v, F&& f) {
  for (auto id : kg.out_edges(v)) f(kg.triplet(id));
  for (auto id : kg.in_edges(v)) f(kg.triplet(id));
}

// Undirected BFS distance from the seed set, bounded by limit.
std::vector<std::size_t> distances(const KnowledgeGraph& kg, const std::set<EntityId>& seeds, std::size_t limit) {
  std::vector<std::size_t> dist(kg.num_entities(), kUnreached);
  std::deque<EntityId> queue;
  for (auto s : seeds) {
    dist[index(s)] = 0;
    queue.push_back(s);
  }
  while (!queue.empty()) {
    const auto v = queue.front();
    queue.pop_front();
    if (dist[index(v)] >= limit) continue;
    for_each_incident(kg, v, [&](const Triplet& t) {
      const auto u = other_end(t, v);
      if (dist[index(u)] == kUnreached) {
        dist[index(u)] = dist[index(v)] + 1;
        queue.push_back(u);
      }
    });
  }
  return dist;
}

// Depth-first enumeration of simple paths from one question seed. A branch is
// abandoned as soon as no answer seed is reachable within the remaining
// budget, which keeps the search exact while visiting few dead ends.
class PathSearch {
 public:
  PathSearch(const KnowledgeGraph& kg, const SeedSet& seeds, std::size_t max_hop, std::vector<std::size_t>& best)
      : kg_(kg), max_hop_(max_hop), best_(best), on_path_(kg.num_entities(), false) {
    answer_.assign(kg.num_entities(), false);
    for (auto a : seeds.answer) answer_[index(a)] = true;
    to_answer_ = distances(kg, seeds.answer, max_hop);
  }

  void run(EntityId start) {
    on_path_[index(start)] = true;
    extend(start);
    on_path_[index(start)] = false;
  }

 private:
  void extend(EntityId v) {
    const std::size_t depth = stack_.size();
    if (depth > 0 && answer_[index(v)]) {
      for (auto id : stack_) best_[id] = std::min(best_[id], depth);
    }
    if (depth == max_hop_) return;
    const std::size_t budget = max_hop_ - depth - 1;
    for_each_incident(kg_, v, [&](const Triplet& t) {
      const auto u = other_end(t, v);
      if (on_path_[index(u)]) return;
      if (to_answer_[index(u)] > budget) return;
      on_path_[index(u)] = true;
      stack_.push_back(t.id);
      extend(u);
      stack_.pop_back();
      on_path_[index(u)] = false;
    });
  }

  const KnowledgeGraph& kg_;
  std::size_t max_hop_;
  std::vector<std::size_t>& best_;
  std::vector<bool> on_path_;
  std::vector<bool> answer_;
  std::vector<std::size_t> to_answer_;
  std::vector<TripletId> stack_;
};

std::vector<EntityId> collect_nodes(const KnowledgeGraph& kg, const std::vector<TripletId>& ids) {
  std::set<EntityId> nodes;
  for (auto id : ids) {
    nodes.insert(kg.triplet(id).head);
    nodes.insert(kg.triplet(id).tail);
  }
  return {nodes.begin(), nodes.end()};
}

}  // namespace

Subgraph retrieve_subgraph(const KnowledgeGraph& kg, const SeedSet& seeds, std::size_t max_hop) {
  if (max_hop == 0) throw ConfigError("max_hop must be positive");
  Subgraph sub;
  sub.max_hop = max_hop;
  if (seeds.question.empty()) return sub;

  std::vector<std::size_t> best(kg.num_triplets(), kUnreached);
  if (seeds.answer.empty()) {
    const auto dist = distances(kg, seeds.question, max_hop);
    for (const auto& t : kg.triplets()) {
      if (t.head == t.tail) continue;
      const auto d = std::min(dist[index(t.head)], dist[index(t.tail)]);
      if (d < max_hop) best[t.id] = d + 1;
    }
  } else {
    PathSearch search(kg, seeds, max_hop, best);
    for (auto q : seeds.question) search.run(q);
  }

  for (TripletId id = 0; id < best.size(); ++id) {
    if (best[id] == kUnreached) continue;
    sub.triplets.push_back(id);
    sub.min_hop.push_back(best[id]);
  }
  sub.nodes = collect_nodes(kg, sub.triplets);
  return sub;
}

Subgraph cap_subgraph(const Subgraph& sub, const KnowledgeGraph& kg, std::size_t max_triplets) {
  if (max_triplets == 0) throw ConfigError("cap must be positive");
  if (sub.triplets.size() <= max_triplets) return sub;
  std::vector<std::size_t> order(sub.triplets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(sub.min_hop[a], sub.triplets[a]) < std::tie(sub.min_hop[b], sub.triplets[b]);
  });
  order.resize(max_triplets);
  std::sort(order.begin(), order.end());  // triplets are id-sorted, so index order is id order

  Subgraph out;
  out.max_hop = sub.max_hop;
  for (auto i : order) {
    out.triplets.push_back(sub.triplets[i]);
    out.min_hop.push_back(sub.min_hop[i]);
  }
  out.nodes = collect_nodes(kg, out.triplets);
  return out;
}

Subgraph subgraph_from_triplets(const KnowledgeGraph& kg, std::vector<TripletId> ids, std::size_t max_hop) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Subgraph sub;
  sub.max_hop = max_hop;
  sub.min_hop.assign(ids.size(), 0);
  sub.nodes = collect_nodes(kg, ids);
  sub.triplets = std::move(ids);
  return sub;
}

void write_subgraph(const Subgraph& sub, const KnowledgeGraph& kg, std::ostream& out) {
  out << "# hop=" << sub.max_hop << '\n';
  for (auto id : sub.triplets) {
    const auto& t = kg.triplet(id);
    out << kg.entity_surface(t.head) << '\t' << kg.relation_surface(t.relation) << '\t'
        << kg.entity_surface(t.tail) << '\n';
  }
}

}  // namespace fuseqa
