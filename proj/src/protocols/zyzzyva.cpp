#include <stdexcept>

#include "dahl/protocols.hpp"

namespace dahl {

namespace {

Term fact1(std::string_view name, Term arg) { return Term::compound(std::string(name), {std::move(arg)}); }

// Deterministic per-pair demo key.
Bytes pair_key(const std::string& a, const std::string& b) {
  const std::string& lo = a < b ? a : b;
  const std::string& hi = a < b ? b : a;
  return digest("zyzzyva-key:" + lo + "|" + hi);
}

}  // namespace

bool flip_mac_byte(std::string& frame) {
  if (frame.size() < 7 || !(static_cast<std::uint8_t>(frame[4]) & 1)) return false;
  std::size_t sender_len = (static_cast<std::uint8_t>(frame[5]) << 8) | static_cast<std::uint8_t>(frame[6]);
  std::size_t mac_at = 7 + sender_len + 3;
  if (mac_at >= frame.size()) return false;
  frame[mac_at] = static_cast<char>(frame[mac_at] ^ 1);
  return true;
}

ZyzzyvaCluster::ZyzzyvaCluster(SimNetwork& net, ZyzzyvaOptions opt) : net_(net), opt_(opt) {
  if (opt_.faults < 0 || opt_.batch_size < 1) throw std::invalid_argument("bad zyzzyva options");
  for (int i = 0; i < quorum(); ++i) replicas_.push_back("r" + std::to_string(i));
  client_ = "c1";

  std::vector<std::string> all = replicas_;
  all.push_back(client_);
  auto keys = std::make_shared<KeyStore>();
  for (const std::string& a : all)
    for (const std::string& b : all)
      if (a <= b) keys->add(a, b, pair_key(a, b));

  std::vector<Clause> roles;
  roles.push_back(Clause::fact(fact1("primary", Term::atom(primary()))));
  for (const std::string& r : replicas_) roles.push_back(Clause::fact(fact1("replica", Term::atom(r))));

  Program replica = asset_program("zyzzyva");
  replica.append(asset_program("zyzzyva_echo"));
  for (const std::string& r : replicas_) {
    NodeConfig cfg;
    cfg.address = r;
    cfg.program = replica;
    cfg.facts = roles;
    cfg.facts.push_back(Clause::fact(fact1("batch_size", Term::integer(opt_.batch_size))));
    cfg.keys = keys;
    net_.add_node(std::move(cfg));
  }
  NodeConfig client;
  client.address = client_;
  client.program = asset_program("zyzzyva_client");
  client.facts = roles;
  client.keys = keys;
  net_.add_node(std::move(client));

  SimTime latency = opt_.latency;
  net_.links().latency = [latency](const std::string&, const std::string&, std::mt19937_64&) { return latency; };
  if (opt_.tampered_replica) {
    std::string bad = replicas_.at(*opt_.tampered_replica);
    std::string client_addr = client_;
    net_.links().corrupt = [bad, client_addr](const std::string& from, const std::string& to, std::string& frame) {
      if (from == bad && to == client_addr) flip_mac_byte(frame);
    };
  }
  std::string p = primary();
  net_.set_send_tap([this, p](const std::string& from, const std::string& to, const Envelope& env) {
    if (from == p && env.payload.starts_with("process(")) process_.emplace_back(to, env);
  });
}

void ZyzzyvaCluster::submit(const Term& request) {
  net_.inject(client_, Envelope{"driver", serialize(Term::compound("submit", {request})), std::nullopt, Origin::kNetwork});
}

ZyzzyvaCluster::Status ZyzzyvaCluster::status(const Term& request) {
  Status st;
  // (Seq, Out) -> replicas that replied with it.
  std::vector<std::pair<std::pair<Term, Term>, std::set<std::string>>> groups;
  for (const Clause& c : net_.node(client_)->database().clauses({"got", 4})) {
    const Term& h = c.head;
    if (!(h.arg(2) == request) || !h.arg(0).is_atom()) continue;
    std::pair<Term, Term> key{h.arg(1), h.arg(3)};
    auto it = std::find_if(groups.begin(), groups.end(),
                           [&](const auto& g) { return g.first.first == key.first && g.first.second == key.second; });
    if (it == groups.end()) {
      groups.push_back({key, {}});
      it = std::prev(groups.end());
    }
    it->second.insert(h.arg(0).name());
  }
  st.conflicting = groups.size() > 1;
  for (const auto& [key, who] : groups) {
    if (who.size() > st.best_match) {
      st.best_match = who.size();
      st.seq = key.first;
      st.output = key.second;
    }
  }
  st.committed = st.best_match >= static_cast<std::size_t>(quorum());
  return st;
}

std::int64_t ZyzzyvaCluster::computations(const std::string& replica) {
  for (const Clause& c : net_.node(replica)->database().clauses({"computed", 1}))
    if (c.head.arg(0).is_int()) return c.head.arg(0).int_value();
  return 0;
}

void ZyzzyvaCluster::replay_process_envelopes() {
  auto captured = process_;
  for (const auto& [to, env] : captured) net_.inject(to, env);
}

}  // namespace dahl
