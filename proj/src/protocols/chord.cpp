#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dahl/protocols.hpp"

namespace dahl {

namespace {

Clause int_fact(const char* name, std::int64_t v) { return Clause::fact(Term::compound(name, {Term::integer(v)})); }

Envelope driver_message(const Term& t) { return Envelope{"driver", serialize(t), std::nullopt, Origin::kNetwork}; }

}  // namespace

ChordRing::ChordRing(SimNetwork& net, ChordOptions opt) : net_(net), opt_(opt), program_(asset_program("chord")) {
  if (opt_.bits < 1 || opt_.bits > 62) throw std::invalid_argument("chord bits must be in 1..62");
  SimTime lo = opt_.latency_min, hi = std::max(opt_.latency_min, opt_.latency_max);
  net_.links().latency = [lo, hi](const std::string&, const std::string&, std::mt19937_64& rng) {
    return std::uniform_int_distribution<SimTime>(lo, hi)(rng);
  };
  net_.set_trace_sink([this](const TraceRecord& r) { observe(r); });
}

std::uint64_t ChordRing::id_of(const std::string& address) const { return digest_id(address, opt_.bits); }

void ChordRing::add_node(const std::string& address) {
  std::uint64_t id = id_of(address);
  for (const auto& [a, i] : ids_)
    if (i == id) throw std::invalid_argument("chord identifier collision: " + address + " and " + a);
  std::vector<std::string> boot = members();

  NodeConfig cfg;
  cfg.address = address;
  cfg.program = program_;
  cfg.facts = {int_fact("chord_bits", opt_.bits), int_fact("succ_count", opt_.succ_count),
               int_fact("stabilize_every", opt_.stabilize_ms), int_fact("fix_every", opt_.fix_ms)};
  net_.add_node(std::move(cfg));
  ids_[address] = id;

  if (ids_.size() == 1 || boot.empty()) {
    net_.inject(address, driver_message(Term::atom("create")));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, boot.size() - 1);
    net_.inject(address, driver_message(Term::compound("join", {Term::atom(boot[pick(net_.rng())])})));
  }
  joining_[address] = net_.now();
}

void ChordRing::kill(const std::string& address) {
  net_.remove_node(address);
  ids_.erase(address);
  joining_.erase(address);
}

std::vector<std::string> ChordRing::live() const {
  std::vector<std::string> out;
  for (const auto& [a, _] : ids_) out.push_back(a);
  return out;
}

std::vector<std::string> ChordRing::members() const {
  std::vector<std::string> out;
  for (const auto& [a, _] : ids_) {
    const Predicate* p = const_cast<SimNetwork&>(net_).node(a)->database().find("joined", 0);
    if (p && !p->empty()) out.push_back(a);
  }
  return out;
}

void ChordRing::retry_joins(SimTime grace) {
  std::vector<std::string> boot = members();
  for (auto it = joining_.begin(); it != joining_.end();) {
    if (std::find(boot.begin(), boot.end(), it->first) != boot.end()) {
      it = joining_.erase(it);
      continue;
    }
    if (net_.now() - it->second >= grace && !boot.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, boot.size() - 1);
      net_.inject(it->first, driver_message(Term::compound("join", {Term::atom(boot[pick(net_.rng())])})));
      it->second = net_.now();
    }
    ++it;
  }
}

std::string ChordRing::snapshot() const {
  std::string out;
  for (const auto& [a, _] : ids_) {
    const Database& db = const_cast<SimNetwork&>(net_).node(a)->database();
    // Sorted: refreshing a finger moves its clause to the end.
    std::vector<std::string> lines;
    for (PredicateIndicator ind : {PredicateIndicator{"succs", 1}, {"pred", 2}, {"finger", 3}})
      for (const Clause& c : db.clauses(ind)) lines.push_back(serialize(c.head));
    std::sort(lines.begin(), lines.end());
    out += a;
    out += '\n';
    for (const std::string& l : lines) {
      out += l;
      out += '\n';
    }
  }
  return out;
}

bool ChordRing::quiesce(SimTime max_time) {
  SimTime deadline = net_.now() + max_time;
  std::string prev = snapshot();
  int stable = 0;
  while (net_.now() < deadline) {
    net_.run_until(net_.now() + opt_.fix_ms * kMs);
    std::string cur = snapshot();
    if (cur == prev) {
      if (++stable >= 2) return true;
    } else {
      stable = 0;
      prev = std::move(cur);
    }
  }
  return false;
}

std::string ChordRing::oracle_owner(std::uint64_t key, const std::vector<std::string>& nodes) const {
  std::string best, lowest;
  std::uint64_t best_id = 0, lowest_id = 0;
  for (const std::string& n : nodes) {
    std::uint64_t id = id_of(n);
    if (lowest.empty() || id < lowest_id) lowest = n, lowest_id = id;
    if (id >= key && (best.empty() || id < best_id)) best = n, best_id = id;
  }
  return best.empty() ? lowest : best;
}

std::uint64_t ChordRing::issue(const std::string& from, std::uint64_t key) {
  std::uint64_t q = next_query_++;
  LookupResult r;
  r.query = q;
  r.key = key;
  r.from = from;
  r.issued = net_.now();
  pending_[q] = r;
  net_.inject(from, driver_message(Term::compound(
                        "lookup", {Term::integer(static_cast<std::int64_t>(q)), Term::integer(static_cast<std::int64_t>(key))})));
  return q;
}

void ChordRing::observe(const TraceRecord& rec) {
  const DispatchRecord& d = rec.dispatch;
  if (!d.payload.starts_with("found(lookup(")) return;
  Term t = deserialize(d.payload);
  if (!t.is_compound("found", 5) || !t.arg(0).arg(0).is_int()) return;
  auto it = pending_.find(static_cast<std::uint64_t>(t.arg(0).arg(0).int_value()));
  if (it == pending_.end() || it->second.from != d.node) return;
  LookupResult r = it->second;
  pending_.erase(it);
  r.answered = true;
  r.owner = t.arg(2).is_atom() ? t.arg(2).name() : serialize(t.arg(2));
  r.owner_id = t.arg(3).is_int() ? static_cast<std::uint64_t>(t.arg(3).int_value()) : 0;
  r.hops = t.arg(4).is_int() ? t.arg(4).int_value() : -1;
  r.latency = rec.time - r.issued;
  r.expected = oracle_owner(r.key, members());
  r.consistent = r.owner == r.expected;
  done_.push_back(std::move(r));
}

void ChordRing::expire() {
  for (auto it = pending_.begin(); it != pending_.end();) {
    LookupResult& r = it->second;
    if (!ids_.count(r.from)) {
      ++abandoned_;
      it = pending_.erase(it);
    } else if (net_.now() - r.issued > opt_.lookup_timeout) {
      r.expected = oracle_owner(r.key, members());
      r.latency = net_.now() - r.issued;
      done_.push_back(std::move(r));
      it = pending_.erase(it);
    } else {
      ++it;
    }
  }
}

std::vector<LookupResult> ChordRing::collect() {
  expire();
  std::vector<LookupResult> out;
  out.swap(done_);
  return out;
}

LookupResult ChordRing::lookup(const std::string& from, std::uint64_t key) {
  std::uint64_t q = issue(from, key);
  SimTime deadline = net_.now() + opt_.lookup_timeout;
  while (pending_.count(q) && net_.now() <= deadline)
    if (!net_.step()) break;
  if (pending_.count(q) && net_.now() <= deadline) net_.run_until(deadline + 1);
  expire();
  auto it = std::find_if(done_.begin(), done_.end(), [q](const LookupResult& r) { return r.query == q; });
  if (it == done_.end()) throw std::logic_error("lookup vanished");
  LookupResult r = std::move(*it);
  done_.erase(it);
  return r;
}

bool ChordRing::ring_consistent() const {
  std::vector<std::string> all = live();
  if (all.empty()) return true;
  std::set<std::string> seen;
  std::string cur = all.front();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (!seen.insert(cur).second) return false;
    Node* n = const_cast<SimNetwork&>(net_).node(cur);
    if (!n) return false;
    auto succs = n->database().clauses({"succs", 1});
    if (succs.size() != 1) return false;
    auto items = list_items(succs.front().head.arg(0));
    if (!items || items->empty() || !items->front().is_compound("n", 2) || !items->front().arg(0).is_atom()) return false;
    cur = items->front().arg(0).name();
  }
  return cur == all.front() && seen.size() == all.size();
}

bool build_ring(ChordRing& ring, int nodes, SimTime join_every, SimTime max_settle) {
  SimNetwork& net = ring.net();
  int added = 0;
  for (int i = 0; added < nodes; ++i) {
    try {
      ring.add_node("c" + std::to_string(i));
    } catch (const std::invalid_argument&) {
      continue;
    }
    ++added;
    net.run_until(net.now() + join_every);
    ring.retry_joins(10'000 * kMs);
  }
  SimTime deadline = net.now() + max_settle;
  while (net.now() < deadline) {
    ring.retry_joins(10'000 * kMs);
    if (ring.members().size() == ring.live().size() && ring.quiesce(deadline - net.now())) return true;
    net.run_until(net.now() + ring.options().stabilize_ms * kMs);
  }
  return false;
}

double ChurnResult::consistency() const {
  if (lookups.empty()) return 1.0;
  std::size_t ok = std::count_if(lookups.begin(), lookups.end(), [](const LookupResult& r) { return r.consistent; });
  return static_cast<double>(ok) / static_cast<double>(lookups.size());
}

ChurnResult run_churn(ChordRing& ring, const ChurnOptions& opt) {
  SimNetwork& net = ring.net();
  std::mt19937_64& rng = net.rng();
  std::exponential_distribution<double> session(1.0 / static_cast<double>(opt.mean_session));
  std::uniform_int_distribution<std::uint64_t> any_key(0, (std::uint64_t{1} << ring.options().bits) - 1);
  auto draw = [&] { return net.now() + static_cast<SimTime>(std::ceil(session(rng))); };

  ChurnResult res;
  std::map<std::string, SimTime> death;
  for (const std::string& a : ring.live()) death[a] = draw();
  std::size_t fresh = 0;
  std::size_t abandoned_before = ring.abandoned();
  SimTime end = net.now() + opt.duration;

  while (net.now() < end) {
    net.run_until(net.now() + opt.lookup_every);
    std::vector<std::string> dead;
    for (const auto& [a, t] : death)
      if (t <= net.now()) dead.push_back(a);
    for (const std::string& a : dead) {
      death.erase(a);
      if (ring.live().size() <= 1) continue;
      ring.kill(a);
      ++res.kills;
      for (;;) {
        std::string addr = "j" + std::to_string(fresh++);
        try {
          ring.add_node(addr);
        } catch (const std::invalid_argument&) {
          continue;
        }
        death[addr] = draw();
        ++res.joins;
        break;
      }
    }
    ring.retry_joins(10'000 * kMs);
    std::vector<std::string> members = ring.members();
    if (!members.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
      ring.issue(members[pick(rng)], any_key(rng));
    }
    for (LookupResult& r : ring.collect()) res.lookups.push_back(std::move(r));
  }
  SimTime drain = net.now() + ring.options().lookup_timeout + kMs;
  while (ring.outstanding() > 0 && net.now() < drain) {
    net.run_until(net.now() + opt.lookup_every);
    for (LookupResult& r : ring.collect()) res.lookups.push_back(std::move(r));
  }
  for (LookupResult& r : ring.collect()) res.lookups.push_back(std::move(r));
  res.abandoned = ring.abandoned() - abandoned_before;
  return res;
}

}  // namespace dahl
