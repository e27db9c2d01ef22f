#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dahl/node.hpp"
#include "dahl/sim.hpp"

namespace dahl {

// Program text of a built-in asset, parsed. Throws std::invalid_argument
// for unknown names.
Program asset_program(std::string_view name);

// --- spanning tree ---

// Undirected link graph: node -> neighbors.
using Graph = std::map<std::string, std::set<std::string>>;

// Random connected graph on n0..n(N-1): a random spanning tree plus
// `extra_edges` random chords.
Graph random_connected_graph(std::mt19937_64& rng, int nodes, int extra_edges);

std::vector<Clause> neighbor_facts(const Graph& g, const std::string& node);

// Adds one spanning-tree node per graph vertex.
void add_spanning_tree_nodes(SimNetwork& net, const Graph& g);

// Parent of every node holding tree(Root, Parent). Several facts for the
// same root are reported through `duplicates`.
std::map<std::string, std::string> extract_tree(SimNetwork& net, const std::string& root,
                                                std::vector<std::string>* duplicates = nullptr);

// Nodes reachable from root in g (breadth-first).
std::set<std::string> reachable(const Graph& g, const std::string& root);

// Empty when the parent map is a spanning tree of the component of root in
// g: root is its own parent, every parent edge is a link, following
// parents from any node reaches root, and every reachable node has a parent
// while others have none. Otherwise a description of the first violation.
std::optional<std::string> check_spanning_tree(const Graph& g, const std::string& root,
                                               const std::map<std::string, std::string>& parents);

// --- Zyzzyva, first phase ---

struct ZyzzyvaOptions {
  int faults = 1;  // f; 3f+1 replicas
  int batch_size = 1;
  SimTime latency = kMs;
  // Replica whose replies to clients get one MAC byte flipped in flight.
  std::optional<int> tampered_replica;
};

class ZyzzyvaCluster {
 public:
  ZyzzyvaCluster(SimNetwork& net, ZyzzyvaOptions opt);

  const std::vector<std::string>& replicas() const { return replicas_; }
  const std::string& primary() const { return replicas_.front(); }
  const std::string& client() const { return client_; }
  int quorum() const { return 3 * opt_.faults + 1; }

  void submit(const Term& request);
  void run() { net_.run_to_quiescence(); }

  struct Status {
    bool committed = false;
    std::size_t best_match = 0;  // replicas agreeing on the most common reply
    std::optional<Term> seq;
    std::optional<Term> output;
    bool conflicting = false;  // replies from different replicas disagree
  };
  Status status(const Term& request);

  // computed(N) at a replica.
  std::int64_t computations(const std::string& replica);

  // process/2 envelopes observed from the primary, in send order.
  const std::vector<std::pair<std::string, Envelope>>& process_envelopes() const { return process_; }
  // Re-delivers every captured process envelope to its replica.
  void replay_process_envelopes();

 private:
  SimNetwork& net_;
  ZyzzyvaOptions opt_;
  std::vector<std::string> replicas_;
  std::string client_;
  std::vector<std::pair<std::string, Envelope>> process_;
};

// Flips bit 0 of the first MAC byte of an encoded signed frame. Returns
// false for unsigned frames.
bool flip_mac_byte(std::string& frame);

// --- Chord ---

struct ChordOptions {
  unsigned bits = 16;
  int succ_count = 4;
  std::int64_t stabilize_ms = 5000;
  std::int64_t fix_ms = 10000;
  // One-way delay per envelope, drawn uniformly from [min, max].
  SimTime latency_min = 2 * kMs;
  SimTime latency_max = 20 * kMs;
  SimTime lookup_timeout = 5000 * kMs;
};

struct LookupResult {
  std::uint64_t query = 0;
  std::uint64_t key = 0;
  std::string from;
  bool answered = false;
  std::string owner;
  std::uint64_t owner_id = 0;
  std::int64_t hops = 0;
  SimTime issued = 0;
  SimTime latency = 0;
  std::string expected;  // oracle owner at answer (or timeout) time
  bool consistent = false;
};

class ChordRing {
 public:
  ChordRing(SimNetwork& net, ChordOptions opt);

  const ChordOptions& options() const { return opt_; }
  std::uint64_t id_of(const std::string& address) const;

  // Starts a node. The first creates the ring; later ones join through a
  // random member. Throws std::invalid_argument on an identifier collision
  // with a live node.
  void add_node(const std::string& address);
  void kill(const std::string& address);

  // Live nodes, and those of them that finished joining.
  std::vector<std::string> live() const;
  std::vector<std::string> members() const;

  // Advances virtual time until no node's successor, predecessor or finger
  // state changes across two checks one finger period apart. False when
  // max_time passes first.
  bool quiesce(SimTime max_time);

  // Owner of key among `nodes`: the first node clockwise at or after key.
  std::string oracle_owner(std::uint64_t key, const std::vector<std::string>& nodes) const;

  // Issues a lookup at `from` and runs the network until it is answered
  // or times out.
  LookupResult lookup(const std::string& from, std::uint64_t key);

  // Issues a lookup without waiting; poll with collect().
  std::uint64_t issue(const std::string& from, std::uint64_t key);
  // Finished lookups (answered or timed out) since the last call. Lookups
  // whose origin was killed are counted in abandoned() instead.
  std::vector<LookupResult> collect();
  std::size_t abandoned() const { return abandoned_; }
  std::size_t outstanding() const { return pending_.size(); }

  // Successor pointers from any live member visit every live member exactly
  // once.
  bool ring_consistent() const;

  SimNetwork& net() { return net_; }

  // Re-sends join to nodes that are still joining after `grace`.
  void retry_joins(SimTime grace);

 private:
  std::string snapshot() const;
  void observe(const TraceRecord& r);
  void expire();

  SimNetwork& net_;
  ChordOptions opt_;
  Program program_;
  std::map<std::string, std::uint64_t> ids_;  // live nodes
  std::uint64_t next_query_ = 0;
  std::size_t abandoned_ = 0;
  std::map<std::uint64_t, LookupResult> pending_;
  std::vector<LookupResult> done_;
  std::map<std::string, SimTime> joining_;  // address -> last join attempt
};

// Builds a ring one node per `join_every`, then quiesces. Addresses are
// c0, c1, ...; colliding identifiers are skipped. False when the ring did
// not quiesce within `max_settle`.
bool build_ring(ChordRing& ring, int nodes, SimTime join_every, SimTime max_settle);

struct ChurnOptions {
  SimTime mean_session = 250'000 * kMs;  // exponential session times
  SimTime duration = 600'000 * kMs;
  SimTime lookup_every = 500 * kMs;
};

struct ChurnResult {
  std::vector<LookupResult> lookups;
  std::size_t abandoned = 0;  // origin killed before the answer arrived
  std::size_t kills = 0;
  std::size_t joins = 0;
  double consistency() const;
};

// Kills nodes at the end of their sessions and replaces each with a fresh
// address, keeping the population constant, while issuing lookups from
// random members for random keys.
ChurnResult run_churn(ChordRing& ring, const ChurnOptions& opt);

}  // namespace dahl
