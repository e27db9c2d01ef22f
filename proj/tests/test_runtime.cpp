#include "dahl/node.hpp"
#include "dahl/sim.hpp"
#include "doctest.h"
#include "support/helpers.hpp"

using namespace dahl;
using namespace dahl::testing;

namespace {

std::shared_ptr<KeyStore> keys_for(const std::vector<std::string>& nodes) {
  auto ks = std::make_shared<KeyStore>();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    for (std::size_t j = i; j < nodes.size(); ++j) {
      Bytes k(16);
      for (std::size_t b = 0; b < k.size(); ++b) k[b] = static_cast<std::uint8_t>(i * 31 + j * 7 + b);
      ks->add(nodes[i], nodes[j], k);
    }
  }
  return ks;
}

std::vector<TraceRecord> drain(SimNetwork& net) {
  std::vector<TraceRecord> out;
  while (auto r = net.step()) out.push_back(*r);
  return out;
}

}  // namespace

TEST_CASE("start: addresses are unique per network") {
  SimNetwork net;
  net.add_node(config("n1", ""));
  CHECK_THROWS_AS(net.add_node(config("n1", "")), std::invalid_argument);
}

TEST_CASE("start: empty program discards everything") {
  SimNetwork net;
  Node& n = net.add_node(config("n1", ""));
  net.inject("n1", msg("x", "hello(1)"));
  auto recs = drain(net);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].dispatch.outcome == DispatchRecord::Outcome::kDiscarded);
  CHECK(n.metrics().discarded == 1);
}

TEST_CASE("dispatch: spanning tree handler at a fresh node") {
  SimNetwork net;
  Node& r = net.add_node(config("r", asset_text("spanning_tree"), "neighbor(n2). neighbor(n3)."));
  net.add_node(config("n2", ""));
  net.add_node(config("n3", ""));
  net.inject("r", msg("r", "span_tree(r, r)"));
  auto first = net.step();
  REQUIRE(first);
  CHECK(first->dispatch.outcome == DispatchRecord::Outcome::kOk);
  CHECK(holds(r, "tree(r, r)"));
  REQUIRE(first->dispatch.sends.size() == 2);
  CHECK(first->dispatch.sends[0].to == "n2");
  CHECK(first->dispatch.sends[0].payload == "span_tree(r,r)");
  CHECK(first->dispatch.sends[1].to == "n3");

  // The same envelope again fails at the guard and sends nothing.
  net.inject("r", msg("r", "span_tree(r, r)"));
  drain(net);
  net.inject("r", msg("r", "span_tree(r, r)"));
  std::optional<TraceRecord> again;
  while (auto rec = net.step()) {
    if (rec->dispatch.node == "r") again = rec;
  }
  REQUIRE(again);
  CHECK(again->dispatch.outcome == DispatchRecord::Outcome::kFailure);
  CHECK(again->dispatch.sends.empty());
  CHECK(count_of(r, "tree(_, _)") == 1);
}

TEST_CASE("dispatch: alarm-only predicates ignore the network") {
  SimNetwork net;
  Node& n = net.add_node(config("n1", ":- alarm tick/0.\ntick :- assert(ticked)."));
  net.inject("n1", msg("evil", "tick"));
  auto rec = net.step();
  REQUIRE(rec);
  CHECK(rec->dispatch.outcome == DispatchRecord::Outcome::kDiscarded);
  CHECK_FALSE(holds(n, "ticked"));
}

TEST_CASE("dispatch: undeclared and non-callable messages are discarded, decode errors counted") {
  SimNetwork net;
  Node& n = net.add_node(config("n1", ":- event ping/0.\nping. other :- assert(x)."));
  net.inject("n1", msg("a", "other"));
  net.inject("n1", Envelope{"a", "42", std::nullopt, Origin::kNetwork});
  net.inject("n1", Envelope{"a", "ping(", std::nullopt, Origin::kNetwork});
  auto recs = drain(net);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].dispatch.outcome == DispatchRecord::Outcome::kDiscarded);
  CHECK(recs[1].dispatch.outcome == DispatchRecord::Outcome::kDiscarded);
  CHECK(recs[2].dispatch.outcome == DispatchRecord::Outcome::kDecodeError);
  CHECK(n.metrics().decode_errors == 1);
  CHECK(n.metrics().discarded == 2);
  CHECK_FALSE(holds(n, "x"));
}

TEST_CASE("failure isolation: side effects persist, node continues") {
  SimNetwork net;
  const char* prog =
      ":- event a/0, b/0, c/0.\n:- dynamic log/1.\n"
      "a :- assert(log(a)), fail.\n"
      "b :- assert(log(b)), X is foo + 1.\n"
      "c :- assert(log(c)).\n";
  Node& n = net.add_node(config("n1", prog));
  std::vector<std::string> logged;
  n.set_log([&](const std::string& s) { logged.push_back(s); });
  net.inject("n1", msg("x", "a"));
  net.inject("n1", msg("x", "b"));
  net.inject("n1", msg("x", "c"));
  auto recs = drain(net);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].dispatch.outcome == DispatchRecord::Outcome::kFailure);
  CHECK(recs[1].dispatch.outcome == DispatchRecord::Outcome::kError);
  CHECK(recs[1].dispatch.error.find("type") == 0);
  CHECK(recs[2].dispatch.outcome == DispatchRecord::Outcome::kOk);
  CHECK(count_of(n, "log(_)") == 3);
  CHECK(n.metrics().failures == 1);
  CHECK(n.metrics().errors == 1);
  CHECK(logged.size() == 2);
}

TEST_CASE("step budget aborts a handler; node continues") {
  SimNetwork net;
  NodeConfig cfg = config("n1", ":- event spin/0, ok/0.\nspin :- spin.\nok :- assert(fine).");
  cfg.limits.max_steps = 1000;
  Node& n = net.add_node(std::move(cfg));
  net.inject("n1", msg("x", "spin"));
  net.inject("n1", msg("x", "ok"));
  auto recs = drain(net);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].dispatch.outcome == DispatchRecord::Outcome::kError);
  CHECK(recs[0].dispatch.error.find("step_limit") == 0);
  CHECK(holds(n, "fine"));
}

TEST_CASE("this_node") {
  SimNetwork net;
  const char* prog = ":- event q/1.\nq(X) :- this_node(X).";
  net.add_node(config("n3", prog));
  net.add_node(config("10.0.0.1:4000", prog));
  net.inject("n3", msg("x", "q(n3)"));
  net.inject("n3", msg("x", "q(n4)"));
  net.inject("10.0.0.1:4000", msg("x", "q('10.0.0.1:4000')"));
  auto recs = drain(net);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].dispatch.outcome == DispatchRecord::Outcome::kOk);
  CHECK(recs[1].dispatch.outcome == DispatchRecord::Outcome::kFailure);
  CHECK(recs[2].dispatch.outcome == DispatchRecord::Outcome::kOk);
}

TEST_CASE("send: delivery, link error with backtracking, ignore policy") {
  SimNetwork net;
  const char* prog = ":- event go/0, ping/0.\n:- dynamic got/0.\ngo :- send(n9, ping) ; send(n2, ping).\nping :- assert(got).";
  net.add_node(config("n1", prog));
  Node& n2 = net.add_node(config("n2", prog));
  net.inject("n1", msg("x", "go"));
  auto recs = drain(net);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].dispatch.outcome == DispatchRecord::Outcome::kOk);
  REQUIRE(recs[0].dispatch.sends.size() == 2);
  CHECK_FALSE(recs[0].dispatch.sends[0].accepted);
  CHECK(recs[0].dispatch.sends[1].accepted);
  CHECK(recs[1].dispatch.node == "n2");
  CHECK(recs[1].time == kMs);
  CHECK(holds(n2, "got"));

  NodeConfig ign = config("n5", ":- event go/0.\n:- dynamic after/0.\ngo :- send(n9, ping), assert(after).");
  ign.policy = SendPolicy::kIgnore;
  Node& n5 = net.add_node(std::move(ign));
  net.inject("n5", msg("x", "go"));
  drain(net);
  CHECK(holds(n5, "after"));

  NodeConfig thr = config("n6", ":- event go/0.\ngo :- send(n9, ping).");
  thr.policy = SendPolicy::kThrow;
  net.add_node(std::move(thr));
  net.inject("n6", msg("x", "go"));
  auto r = net.step();
  REQUIRE(r);
  CHECK(r->dispatch.outcome == DispatchRecord::Outcome::kError);
  CHECK(r->dispatch.error.find("send") == 0);
}

TEST_CASE("sendall: snapshot, zero solutions, generator-dependent destinations") {
  SimNetwork net;
  const char* prog =
      ":- event go/0, none/0, solve/1.\n:- dynamic solved/1.\n"
      "task(t1). task(t2). assign(t1, n2). assign(t2, n3).\n"
      "go :- sendall(N, (task(T), assign(T, N)), solve(T)).\n"
      "none :- sendall(N, neighbor(N), ping).\n"
      "solve(T) :- assert(solved(T)).\n";
  net.add_node(config("n1", prog));
  Node& n2 = net.add_node(config("n2", prog));
  Node& n3 = net.add_node(config("n3", prog));
  net.inject("n1", msg("x", "go"));
  net.inject("n1", msg("x", "none"));
  auto recs = drain(net);
  REQUIRE(recs.size() == 4);
  CHECK(recs[0].dispatch.sends.size() == 2);
  CHECK(recs[1].dispatch.outcome == DispatchRecord::Outcome::kOk);
  CHECK(recs[1].dispatch.sends.empty());
  CHECK(holds(n2, "solved(t1)"));
  CHECK_FALSE(holds(n2, "solved(t2)"));
  CHECK(holds(n3, "solved(t2)"));
}

TEST_CASE("sendall: generator that mutates the database is enumerated first") {
  SimNetwork net;
  const char* prog =
      ":- event go/0.\n:- dynamic item/1.\nitem(a). item(b).\n"
      "go :- sendall(n2, (retract(item(X)), assert(item(X))), got(X)).\n";
  Node& n1 = net.add_node(config("n1", prog));
  net.add_node(config("n2", ""));
  net.inject("n1", msg("x", "go"));
  auto r = net.step();
  REQUIRE(r);
  CHECK(r->dispatch.sends.size() == 2);
  CHECK(count_of(n1, "item(_)") == 2);
}

TEST_CASE("sendall: stops at the first failing send under the fail policy") {
  SimNetwork net;
  const char* prog = ":- event go/0.\nd(n2). d(n9). d(n3).\ngo :- sendall(N, d(N), hi).";
  net.add_node(config("n1", prog));
  net.add_node(config("n2", ""));
  net.add_node(config("n3", ""));
  net.inject("n1", msg("x", "go"));
  auto r = net.step();
  REQUIRE(r);
  CHECK(r->dispatch.outcome == DispatchRecord::Outcome::kFailure);
  REQUIRE(r->dispatch.sends.size() == 2);
  CHECK(r->dispatch.sends[0].accepted);
  CHECK_FALSE(r->dispatch.sends[1].accepted);
}

TEST_CASE("alarms: delay, zero delay after the handler, periodic re-arm") {
  SimNetwork net;
  const char* prog =
      ":- event start/0.\n:- alarm stabilize/0, now0/0.\n:- dynamic order/1.\n"
      "start :- alarm(stabilize, 5000), alarm(now0, 0), assert(order(start_done)).\n"
      "stabilize :- assert(order(stabilized)).\n"
      "now0 :- assert(order(now0)).\n";
  Node& n = net.add_node(config("n1", prog));
  net.inject("n1", msg("x", "start"));
  net.run_until(4999 * kMs);
  CHECK(holds(n, "order(now0)"));
  CHECK_FALSE(holds(n, "order(stabilized)"));
  net.run_until(5000 * kMs);
  CHECK(holds(n, "order(stabilized)"));
  Term g = parse_term("order(X)");
  auto all = solve_all(g, n.database());
  REQUIRE(all.size() == 3);
  CHECK(binding(g, all[0], "X") == Term::atom("start_done"));
  CHECK(binding(g, all[1], "X") == Term::atom("now0"));

}

TEST_CASE("alarms: periodic firing counted") {
  SimNetwork net;
  const char* prog =
      ":- event start/0.\n:- alarm tick/0.\n:- dynamic ticks/1.\nticks(0).\n"
      "start :- alarm(tick, 100).\n"
      "tick :- retract(ticks(N)), M is N + 1, assert(ticks(M)), alarm(tick, 100).\n";
  Node& n = net.add_node(config("n1", prog));
  net.inject("n1", msg("x", "start"));
  net.run_until(1000 * kMs);
  CHECK(holds(n, "ticks(10)"));
}

TEST_CASE("alarms: negative delay is a type error") {
  SimNetwork net;
  net.add_node(config("n1", ":- event go/0.\ngo :- alarm(x, -1)."));
  net.inject("n1", msg("x", "go"));
  auto r = net.step();
  REQUIRE(r);
  CHECK(r->dispatch.outcome == DispatchRecord::Outcome::kError);
  CHECK(r->dispatch.error.find("type") == 0);
}

TEST_CASE("signed messaging") {
  auto ks = keys_for({"n1", "n2"});
  SimNetwork net;
  const char* prog =
      ":- event go/1, request/1.\n:- dynamic from/1, sig/1.\n"
      "go(To) :- send_signed(To, request(r)).\n"
      "request(R) :- signed, signed_by(S), assert(from(S)), signed_by(S, Sig), assert(sig(Sig)).\n";
  net.add_node(config("n1", prog, "", ks));
  Node& n2 = net.add_node(config("n2", prog, "", ks));
  net.inject("n1", msg("x", "go(n2)"));
  drain(net);
  CHECK(holds(n2, "from(n1)"));
  CHECK(holds(n2, "sig(mac('hmac-sha256', _))"));

  // Unsigned envelope: signed fails.
  net.inject("n2", msg("n1", "request(r)"));
  auto r = net.step();
  REQUIRE(r);
  CHECK(r->dispatch.outcome == DispatchRecord::Outcome::kFailure);
}

TEST_CASE("signed messaging: missing key follows the policy") {
  auto ks = keys_for({"n1", "n2"});
  SimNetwork net;
  const char* prog = ":- event go/0.\n:- dynamic after/0.\ngo :- send_signed(n7, hi), assert(after).";
  Node& a = net.add_node(config("n1", prog, "", ks));
  net.add_node(config("n7", ""));
  NodeConfig t = config("n2", prog, "", ks);
  t.policy = SendPolicy::kThrow;
  net.add_node(std::move(t));
  net.inject("n1", msg("x", "go"));
  net.inject("n2", msg("x", "go"));
  auto recs = drain(net);
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].dispatch.outcome == DispatchRecord::Outcome::kFailure);
  CHECK(a.metrics().missing_keys == 1);
  CHECK(recs[1].dispatch.outcome == DispatchRecord::Outcome::kError);
  CHECK(recs[1].dispatch.error.find("key") == 0);
}

TEST_CASE("signed messaging: a flipped payload byte fails verification") {
  auto ks = keys_for({"n1", "n2"});
  SimNetwork net;
  const char* prog =
      ":- event go/0, request/1.\n:- dynamic ok/1.\n"
      "go :- send_signed(n2, request(abc)).\n"
      "request(R) :- signed_by(_), assert(ok(R)).\n";
  net.add_node(config("n1", prog, "", ks));
  Node& n2 = net.add_node(config("n2", prog, "", ks));
  net.links().corrupt = [](const std::string&, const std::string& to, std::string& frame) {
    if (to == "n2") frame[frame.size() - 3] ^= 0x01;  // 'abc' -> 'a' ^ ...
  };
  net.inject("n1", msg("x", "go"));
  auto recs = drain(net);
  REQUIRE(recs.size() == 2);
  CHECK(recs[1].dispatch.outcome == DispatchRecord::Outcome::kFailure);
  CHECK(count_of(n2, "ok(_)") == 0);
}

TEST_CASE("signed_by outside a handler is a context error") {
  SimNetwork net;
  Node& n = net.add_node(config("n1", ""));
  SolveOutcome out = solve_first(parse_term("signed_by(X)"), n.database(), {}, &n);
  REQUIRE(out.error);
  CHECK(out.error->kind() == ErrorKind::kContext);
}

TEST_CASE("lazy verification: no MAC work unless asked") {
  auto ks = keys_for({"n1", "n2"});
  SimNetwork net;
  const char* prog =
      ":- event go/0, plain/1, checked/1.\n"
      "go :- send_signed(n2, plain(1)), send_signed(n2, checked(1)).\n"
      "plain(_).\nchecked(_) :- signed, signed, signed_by(_).\n";
  net.add_node(config("n1", prog, "", ks));
  Node& n2 = net.add_node(config("n2", prog, "", ks));
  net.inject("n1", msg("x", "go"));
  net.step();
  reset_auth_counters();
  net.step();
  CHECK(auth_counters().verifies == 0);
  CHECK(n2.metrics().mac_verifications == 0);
  net.step();
  CHECK(auth_counters().verifies == 1);
  CHECK(n2.metrics().mac_verifications == 1);
}

TEST_CASE("debug endpoint answers dump requests") {
  SimNetwork net;
  NodeConfig cfg = config("n1", ":- dynamic tree/2.\ntree(r, n0).");
  cfg.debug_endpoint = true;
  net.add_node(std::move(cfg));
  const char* sink = ":- event '$dump_reply'/2.\n:- dynamic got/2.\n'$dump_reply'(I, L) :- assert(got(I, L)).";
  Node& c = net.add_node(config("c", sink));
  net.inject("n1", msg("c", "'$dump'(tree/2, c)"));
  net.inject("n1", msg("c", "'$dump'(nothing/0, c)"));
  drain(net);
  CHECK(holds(c, "got(tree/2, [tree(r, n0)])"));
  CHECK(holds(c, "got(nothing/0, [])"));
}

TEST_CASE("atomicity: handlers run one at a time in dispatch order") {
  SimNetwork net(3);
  const char* prog =
      ":- event inc/0.\n:- dynamic c/1.\nc(0).\n"
      "inc :- retract(c(N)), M is N + 1, assert(c(M)).\n";
  Node& n = net.add_node(config("n1", prog));
  for (int i = 0; i < 50; ++i) net.inject("n1", msg("x", "inc"), i % 3);
  drain(net);
  CHECK(holds(n, "c(50)"));
}
