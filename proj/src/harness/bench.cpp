#include <atomic>
#include <chrono>
#include <memory>
#include <thread>

#include "dahl/assets.hpp"
#include "dahl/harness.hpp"

namespace dahl {

namespace {

using Clock = std::chrono::steady_clock;

std::uint64_t server_errors(const TcpNode& server) {
  NodeMetrics m = server.metrics();
  TcpStats t = const_cast<TcpNode&>(server).transport().stats();
  return m.failures + m.errors + m.decode_errors + m.sends_failed + t.decode_errors;
}

NodeConfig pingpong_server(const std::string& bind) {
  NodeConfig cfg;
  cfg.address = bind;
  cfg.program = asset_program("pingpong");
  return cfg;
}

// One closed-loop connection: a ping goes out whenever a pong comes back.
class PingClient {
 public:
  PingClient(std::string server, std::atomic<bool>& running)
      : server_(std::move(server)), running_(running), transport_("127.0.0.1:0") {
    ping_ = Envelope{transport_.address(), serialize(parse_term(bench_ping_term())), std::nullopt, Origin::kNetwork};
    transport_.start([this](Envelope env) {
      if (!env.payload.starts_with("pong(")) {
        ++errors;
        return;
      }
      ++received;
      if (running_) fire();
    });
  }

  void fire() {
    if (transport_.send(server_, ping_) == SendStatus::kAccepted)
      ++sent;
    else
      ++errors;
  }
  void stop() { transport_.stop(); }

  std::atomic<std::uint64_t> sent{0};
  std::atomic<std::uint64_t> received{0};
  std::atomic<std::uint64_t> errors{0};

 private:
  std::string server_;
  std::atomic<bool>& running_;
  TcpTransport transport_;
  Envelope ping_;
};

void run_clients(const std::string& server, int connections, double seconds, BenchReport& r,
                 const std::function<void()>& during) {
  std::atomic<bool> running{true};
  std::vector<std::unique_ptr<PingClient>> clients;
  for (int i = 0; i < std::max(1, connections); ++i) clients.push_back(std::make_unique<PingClient>(server, running));
  auto t0 = Clock::now();
  for (auto& c : clients) c->fire();
  if (during) during();
  else std::this_thread::sleep_until(t0 + std::chrono::duration<double>(seconds));
  running = false;
  // Drain outstanding pongs.
  auto drain_end = Clock::now() + std::chrono::seconds(2);
  auto outstanding = [&] {
    std::uint64_t s = 0, g = 0;
    for (auto& c : clients) s += c->sent, g += c->received;
    return s - g;
  };
  while (outstanding() > 0 && Clock::now() < drain_end) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  for (auto& c : clients) {
    c->stop();
    r.sent += c->sent;
    r.received += c->received;
    r.protocol_errors += c->errors;
  }
  r.lost = r.sent - r.received;
}

}  // namespace

std::string bench_ping_term() { return "ping(abcdefghijklmn)"; }

BenchReport bench_serve(TcpNode& server, double seconds) {
  BenchReport r;
  while (server.metrics().dispatched == 0) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  auto t0 = Clock::now();
  std::uint64_t c0 = server.metrics().handled_ok;
  if (seconds <= 0) {
    server.wait();
  } else {
    std::this_thread::sleep_until(t0 + std::chrono::duration<double>(seconds));
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  r.requests = server.metrics().handled_ok - c0;
  r.requests_per_second = r.seconds > 0 ? static_cast<double>(r.requests) / r.seconds : 0;
  r.protocol_errors = server_errors(server);
  return r;
}

BenchReport bench_client(const std::string& server, int connections, double seconds) {
  BenchReport r;
  auto t0 = Clock::now();
  run_clients(server, connections, seconds, r, nullptr);
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  r.requests = r.received;
  r.requests_per_second = seconds > 0 ? static_cast<double>(r.received) / seconds : 0;
  return r;
}

BenchReport bench_loopback(int connections, double seconds) {
  TcpNode server(pingpong_server("127.0.0.1:0"));
  server.start();
  BenchReport r;
  BenchReport measured;
  run_clients(server.address(), connections, seconds, r, [&] { measured = bench_serve(server, seconds); });
  server.stop();
  r.seconds = measured.seconds;
  r.requests = measured.requests;
  r.requests_per_second = measured.requests_per_second;
  r.protocol_errors += server_errors(server);
  return r;
}

SimBenchReport bench_sim(std::uint64_t pings, SimTime rtt) {
  SimNetwork net(1);
  SimTime one_way = rtt / 2;
  net.links().latency = [one_way](const std::string&, const std::string&, std::mt19937_64&) { return one_way; };
  NodeConfig server;
  server.address = "server";
  server.program = asset_program("pingpong");
  net.add_node(std::move(server));
  NodeConfig client;
  client.address = "client";
  client.program = parse_program(
      ":- event go/0, pong/1.\n"
      ":- dynamic left/1, pongs/1.\n"
      "pongs(0).\n"
      "go :- send(server, " + bench_ping_term() + ").\n"
      "pong(P) :- retract(pongs(N)), N1 is N + 1, assert(pongs(N1)),\n"
      "  retract(left(L)), L1 is L - 1, assert(left(L1)),\n"
      "  ( L1 > 0 -> send(server, ping(P)) ; true ).\n");
  client.facts.push_back(Clause::fact(Term::compound("left", {Term::integer(static_cast<std::int64_t>(pings))})));
  Node& c = net.add_node(std::move(client));
  SimBenchReport r;
  if (pings == 0) return r;
  net.inject("client", Envelope{"driver", "go", std::nullopt, Origin::kNetwork});
  net.run_to_quiescence();
  r.pings = net.node("server")->metrics().handled_ok;
  for (const Clause& cl : c.database().clauses({"pongs", 1})) r.pongs = static_cast<std::uint64_t>(cl.head.arg(0).int_value());
  r.elapsed = net.now();
  return r;
}

void write_bench_csv(std::ostream& out, const BenchReport& r) {
  out << "metric,value\n"
      << "schema_version,1\n"
      << "seconds," << r.seconds << "\n"
      << "server_requests," << r.requests << "\n"
      << "requests_per_second," << r.requests_per_second << "\n"
      << "pings_sent," << r.sent << "\n"
      << "pongs_received," << r.received << "\n"
      << "lost_pairs," << r.lost << "\n"
      << "protocol_errors," << r.protocol_errors << "\n";
}

}  // namespace dahl
