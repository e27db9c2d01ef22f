#include <deque>
#include <stdexcept>

#include "dahl/assets.hpp"
#include "dahl/protocols.hpp"

namespace dahl {

Program asset_program(std::string_view name) {
  auto text = find_asset(name);
  if (!text) throw std::invalid_argument("unknown program asset: " + std::string(name));
  return parse_program(*text);
}

Graph random_connected_graph(std::mt19937_64& rng, int nodes, int extra_edges) {
  Graph g;
  std::vector<std::string> names;
  for (int i = 0; i < nodes; ++i) {
    names.push_back("n" + std::to_string(i));
    g[names.back()];
  }
  std::vector<int> order(nodes);
  for (int i = 0; i < nodes; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  // Each vertex attaches to a random earlier one in a random order.
  for (int i = 1; i < nodes; ++i) {
    std::uniform_int_distribution<int> pick(0, i - 1);
    const std::string& a = names[order[i]];
    const std::string& b = names[order[pick(rng)]];
    g[a].insert(b);
    g[b].insert(a);
  }
  if (nodes >= 2) {
    std::uniform_int_distribution<int> any(0, nodes - 1);
    for (int e = 0; e < extra_edges; ++e) {
      int a = any(rng), b = any(rng);
      if (a == b) continue;
      g[names[a]].insert(names[b]);
      g[names[b]].insert(names[a]);
    }
  }
  return g;
}

std::vector<Clause> neighbor_facts(const Graph& g, const std::string& node) {
  std::vector<Clause> out;
  auto it = g.find(node);
  if (it == g.end()) return out;
  for (const std::string& n : it->second) out.push_back(Clause::fact(Term::compound("neighbor", {Term::atom(n)})));
  return out;
}

void add_spanning_tree_nodes(SimNetwork& net, const Graph& g) {
  Program program = asset_program("spanning_tree");
  for (const auto& [name, _] : g) {
    NodeConfig cfg;
    cfg.address = name;
    cfg.program = program;
    cfg.facts = neighbor_facts(g, name);
    net.add_node(std::move(cfg));
  }
}

std::map<std::string, std::string> extract_tree(SimNetwork& net, const std::string& root,
                                                std::vector<std::string>* duplicates) {
  std::map<std::string, std::string> parents;
  for (const std::string& addr : net.addresses()) {
    Node* n = net.node(addr);
    for (const Clause& c : n->database().clauses({"tree", 2})) {
      if (!c.head.arg(0).is_atom(root) || !c.head.arg(1).is_atom()) continue;
      if (!parents.emplace(addr, c.head.arg(1).name()).second && duplicates) duplicates->push_back(addr);
    }
  }
  return parents;
}

std::set<std::string> reachable(const Graph& g, const std::string& root) {
  std::set<std::string> seen;
  if (!g.count(root)) return seen;
  std::deque<std::string> frontier{root};
  seen.insert(root);
  while (!frontier.empty()) {
    std::string cur = frontier.front();
    frontier.pop_front();
    for (const std::string& n : g.at(cur))
      if (seen.insert(n).second) frontier.push_back(n);
  }
  return seen;
}

std::optional<std::string> check_spanning_tree(const Graph& g, const std::string& root,
                                               const std::map<std::string, std::string>& parents) {
  std::set<std::string> want = reachable(g, root);
  for (const std::string& n : want)
    if (!parents.count(n)) return "reachable node " + n + " has no parent";
  for (const auto& [node, parent] : parents) {
    if (!want.count(node)) return "unreachable node " + node + " has a parent";
    if (node == root) {
      if (parent != root) return "root's parent is " + parent;
      continue;
    }
    auto it = g.find(node);
    if (it == g.end() || !it->second.count(parent)) return "parent edge " + node + "->" + parent + " is not a link";
  }
  for (const auto& [node, _] : parents) {
    std::string cur = node;
    for (std::size_t hops = 0; cur != root; ++hops) {
      if (hops > parents.size()) return "parent chain from " + node + " does not reach the root";
      cur = parents.at(cur);
    }
  }
  return std::nullopt;
}

}  // namespace dahl
