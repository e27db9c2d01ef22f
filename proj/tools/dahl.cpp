// Command-line entry points: real nodes over TCP, simulator scenarios,
// the ping-pong benchmark and the Chord experiment.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "dahl/assets.hpp"
#include "dahl/harness.hpp"
#include "dahl/tcp.hpp"

using namespace dahl;

namespace {

enum Exit { kOk = 0, kAssertion = 1, kUsage = 2, kRuntime = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// An asset name or a file path.
Program load_program(const std::string& spec) {
  if (auto a = find_asset(spec)) return parse_program(*a);
  return parse_program(read_file(spec));
}

std::shared_ptr<const KeyStore> load_keys(const std::string& path, const std::string& alg) {
  if (path.empty()) return nullptr;
  try {
    return std::make_shared<const KeyStore>(KeyStore::load(path, parse_mac_algorithm(alg)));
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

std::atomic<bool> g_interrupted{false};

void on_signal(int) { g_interrupted = true; }

void wait_for_signal(TcpNode& node) {
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  node.stop();
}

void print_syntax_error(const std::string& what, const SyntaxError& e) {
  std::cerr << "dahl: " << what << ": syntax error at " << e.line() << ":" << e.column() << ": " << e.message() << "\n";
}

// --- subcommands ---

struct RunArgs {
  std::vector<std::string> programs;
  std::vector<std::string> facts;
  std::string bind = "127.0.0.1:4000";
  std::string keys;
  std::string mac = "hmac-sha256";
  std::string policy = "fail";
  bool debug = false;
  bool log = false;
};

int cmd_run(const RunArgs& a) {
  NodeConfig cfg;
  cfg.address = a.bind;
  for (const std::string& p : a.programs) {
    try {
      cfg.program.append(load_program(p));
    } catch (const SyntaxError& e) {
      print_syntax_error(p, e);
      return kUsage;
    }
  }
  for (const std::string& f : a.facts) {
    try {
      for (const Clause& c : parse_program(read_file(f)).clauses) cfg.facts.push_back(c);
    } catch (const SyntaxError& e) {
      print_syntax_error(f, e);
      return kUsage;
    }
  }
  cfg.keys = load_keys(a.keys, a.mac);
  cfg.policy = parse_send_policy(a.policy);
  cfg.debug_endpoint = a.debug;
  std::unique_ptr<TcpNode> node;
  try {
    node = std::make_unique<TcpNode>(std::move(cfg));
  } catch (const BindError& e) {
    std::cerr << "dahl: " << e.what() << "\n";
    return kRuntime;
  }
  if (a.log) {
    node->set_observer([](const DispatchRecord& r) {
      std::ostringstream line;
      line << "from=" << r.sender << " msg=" << r.payload << " outcome=" << outcome_name(r.outcome);
      if (!r.error.empty()) line << " error=\"" << r.error << "\"";
      std::cerr << line.str() << "\n";
    });
  }
  node->start();
  std::cout << "listening " << node->address() << std::endl;
  wait_for_signal(*node);
  return kOk;
}

struct SimArgs {
  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::string trace;
  std::string metrics;
};

int cmd_sim(const SimArgs& a) {
  Scenario sc = Scenario::load(a.scenario);
  std::ofstream trace;
  if (!a.trace.empty()) {
    trace.open(a.trace, std::ios::binary);
    if (!trace) throw UsageError("cannot write " + a.trace);
  }
  ScenarioResult r = sc.run(a.seed, a.trace.empty() ? std::function<void(const TraceRecord&)>()
                                                    : [&trace](const TraceRecord& t) { trace << trace_line(t) << '\n'; });
  for (const std::string& line : r.output) std::cout << line << "\n";
  if (!a.metrics.empty()) {
    std::ofstream m(a.metrics, std::ios::binary);
    if (!m) throw UsageError("cannot write " + a.metrics);
    write_metrics_csv(m, r);
  }
  for (const AssertionFailure& f : r.failures)
    std::cerr << "assertion failed (line " << f.line << "): " << f.statement << ": " << f.detail << "\n";
  std::cout << r.assertions - r.failures.size() << "/" << r.assertions << " assertions passed, end t="
            << static_cast<double>(r.end) / kMs << "ms\n";
  return r.ok() ? kOk : kAssertion;
}

struct BenchArgs {
  bool server = false;
  std::string client;
  bool loopback = false;
  bool sim = false;
  std::string bind = "127.0.0.1:4100";
  int conns = 1;
  double duration = 10;
  std::uint64_t pings = 1000;
  double rtt_ms = 0.09;
  std::string csv;
};

void print_report(const BenchReport& r, const std::string& csv) {
  std::cout << "requests/s " << r.requests_per_second << " (server requests " << r.requests << " in " << r.seconds
            << " s), sent " << r.sent << ", received " << r.received << ", lost " << r.lost << ", protocol errors "
            << r.protocol_errors << "\n";
  if (!csv.empty()) {
    std::ofstream f(csv);
    write_bench_csv(f, r);
  }
}

int cmd_bench(const BenchArgs& a) {
  int modes = a.server + !a.client.empty() + a.loopback + a.sim;
  if (modes != 1) throw UsageError("choose exactly one of --server, --client, --loopback, --sim");
  if (a.sim) {
    SimTime rtt = static_cast<SimTime>(std::llround(a.rtt_ms * kMs));
    SimBenchReport r = bench_sim(a.pings, rtt);
    std::cout << "pings " << r.pings << ", pongs " << r.pongs << ", virtual elapsed "
              << static_cast<double>(r.elapsed) / kMs << " ms\n";
    return r.pongs == a.pings ? kOk : kRuntime;
  }
  if (a.server) {
    NodeConfig cfg;
    cfg.address = a.bind;
    cfg.program = asset_program("pingpong");
    std::unique_ptr<TcpNode> node;
    try {
      node = std::make_unique<TcpNode>(std::move(cfg));
    } catch (const BindError& e) {
      std::cerr << "dahl: " << e.what() << "\n";
      return kRuntime;
    }
    node->start();
    std::cout << "listening " << node->address() << std::endl;
    BenchReport r = bench_serve(*node, a.duration);
    node->stop();
    print_report(r, a.csv);
    return r.protocol_errors == 0 ? kOk : kRuntime;
  }
  BenchReport r = a.loopback ? bench_loopback(a.conns, a.duration) : bench_client(a.client, a.conns, a.duration);
  print_report(r, a.csv);
  if (r.sent == 0) {
    std::cerr << "dahl: no ping could be sent\n";
    return kRuntime;
  }
  return r.protocol_errors == 0 && r.lost == 0 ? kOk : kRuntime;
}

struct ChordArgs {
  int nodes = 64;
  int lookups = 1000;
  std::uint64_t seed = 1;
  std::string churn;
  std::string out = "chord-out";
  unsigned bits = 16;
};

int cmd_chord(const ChordArgs& a) {
  if (a.nodes < 2) throw UsageError("--nodes must be at least 2");
  ChordExperimentOptions opt;
  opt.nodes = a.nodes;
  opt.lookups = a.lookups;
  opt.seed = a.seed;
  opt.chord.bits = a.bits;
  if (!a.churn.empty()) {
    try {
      opt.churn = parse_churn_spec(a.churn);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  ChordExperimentResult r = run_chord_experiment(opt);
  write_chord_csvs(a.out, opt, r);
  std::cout << "nodes " << a.nodes << ", quiesced " << r.quiesced << ", agreement " << r.agreement << ", max hops "
            << r.max_hops << " (bound " << r.hop_bound << ")";
  if (r.churn) std::cout << ", churn consistency " << r.churn->consistency();
  std::cout << "\nwrote " << a.out << "/{lookups,latency_cdf,hops,summary}.csv\n";
  return kOk;
}

struct InjectArgs {
  std::string address;
  std::string term;
  std::string from = "inject";
  std::string signed_as;
  std::string keys;
  std::string mac = "hmac-sha256";
};

int cmd_inject(const InjectArgs& a) {
  Term t;
  try {
    t = parse_term(a.term);
  } catch (const SyntaxError& e) {
    print_syntax_error("term", e);
    return kUsage;
  }
  Envelope env{a.signed_as.empty() ? a.from : a.signed_as, serialize(t), std::nullopt, Origin::kNetwork};
  if (!a.signed_as.empty()) {
    auto ks = load_keys(a.keys, a.mac);
    if (!ks) throw UsageError("--signed-as needs --keys");
    try {
      env.signature = sign(*ks, a.signed_as, a.address, a.signed_as, env.payload);
    } catch (const MissingKeyError& e) {
      throw UsageError(e.what());
    }
  }
  TcpTransport tx("127.0.0.1:0");
  if (tx.send(a.address, env) != SendStatus::kAccepted) {
    std::cerr << "dahl: cannot reach " << a.address << "\n";
    return kRuntime;
  }
  return kOk;
}

struct DumpArgs {
  std::string address;
  std::string indicator;
  std::string bind = "127.0.0.1:0";
  int timeout_ms = 3000;
};

int cmd_dump(const DumpArgs& a) {
  auto slash = a.indicator.rfind('/');
  if (slash == std::string::npos) throw UsageError("indicator must be name/arity");
  Term spec;
  try {
    spec = Term::compound("/", {Term::atom(a.indicator.substr(0, slash)), Term::integer(std::stoll(a.indicator.substr(slash + 1)))});
  } catch (const std::exception&) {
    throw UsageError("indicator must be name/arity");
  }
  TcpTransport rx(a.bind);
  std::mutex mu;
  std::condition_variable cv;
  std::optional<Term> reply;
  rx.start([&](Envelope env) {
    try {
      Term m = deserialize(env.payload);
      if (!m.is_compound(kDumpReply, 2) || !(m.arg(0) == spec)) return;
      std::lock_guard lk(mu);
      reply = m.arg(1);
      cv.notify_all();
    } catch (const DecodeError&) {
    }
  });
  Envelope req{rx.address(), serialize(Term::compound(std::string(kDumpRequest), {spec, Term::atom(rx.address())})),
               std::nullopt, Origin::kNetwork};
  if (rx.send(a.address, req) != SendStatus::kAccepted) {
    std::cerr << "dahl: cannot reach " << a.address << "\n";
    return kRuntime;
  }
  std::unique_lock lk(mu);
  if (!cv.wait_for(lk, std::chrono::milliseconds(a.timeout_ms), [&] { return reply.has_value(); })) {
    std::cerr << "dahl: no dump reply from " << a.address << " (is the debug endpoint enabled?)\n";
    return kRuntime;
  }
  for (const Term& c : list_items(*reply).value_or(std::vector<Term>{})) std::cout << serialize(c) << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dahl: declarative networking runtime"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run a node over TCP until interrupted");
  run_cmd->add_option("program", run.programs, "Program files or built-in asset names")->required();
  run_cmd->add_option("--facts", run.facts, "Initial facts file (repeatable)");
  run_cmd->add_option("--bind", run.bind, "Listen address host:port");
  run_cmd->add_option("--keys", run.keys, "Key file: nodeA nodeB hexkey per line");
  run_cmd->add_option("--mac", run.mac, "MAC algorithm")->check(CLI::IsMember({"hmac-sha256", "hmac-md5"}));
  run_cmd->add_option("--policy", run.policy, "Send failure policy")->check(CLI::IsMember({"fail", "throw", "ignore"}));
  run_cmd->add_flag("--debug", run.debug, "Answer dump requests");
  run_cmd->add_flag("--log", run.log, "Log every dispatch to stderr");

  SimArgs sim;
  std::uint64_t sim_seed = 0;
  auto* sim_cmd = app.add_subcommand("sim", "Run a simulator scenario");
  sim_cmd->add_option("scenario", sim.scenario, "Scenario file")->required();
  auto* seed_opt = sim_cmd->add_option("--seed", sim_seed, "Override the scenario seed");
  sim_cmd->add_option("--trace", sim.trace, "Write the dispatch trace here");
  sim_cmd->add_option("--metrics", sim.metrics, "Write metrics CSV here");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Ping-pong throughput benchmark");
  bench_cmd->add_flag("--server", bench.server, "Serve pings");
  bench_cmd->add_option("--client", bench.client, "Drive the server at this address");
  bench_cmd->add_flag("--loopback", bench.loopback, "Server and clients in this process");
  bench_cmd->add_flag("--sim", bench.sim, "Serial client in the simulator");
  bench_cmd->add_option("--bind", bench.bind, "Server listen address");
  bench_cmd->add_option("--conns", bench.conns, "Client connections")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--duration", bench.duration, "Seconds (server: after the first ping)");
  bench_cmd->add_option("--pings", bench.pings, "Simulated pings");
  bench_cmd->add_option("--rtt", bench.rtt_ms, "Simulated round-trip time in ms");
  bench_cmd->add_option("--csv", bench.csv, "Write the report as CSV");

  ChordArgs chord;
  auto* chord_cmd = app.add_subcommand("chord-experiment", "Ring build, static lookups and optional churn");
  chord_cmd->add_option("--nodes", chord.nodes, "Ring size");
  chord_cmd->add_option("--lookups", chord.lookups, "Static lookups after quiescence");
  chord_cmd->add_option("--seed", chord.seed, "Seed");
  chord_cmd->add_option("--churn", chord.churn, "session=250s,duration=600s,every=500ms");
  chord_cmd->add_option("--bits", chord.bits, "Identifier bits")->check(CLI::Range(1, 62));
  chord_cmd->add_option("--out", chord.out, "Output directory");

  InjectArgs inject;
  auto* inject_cmd = app.add_subcommand("inject", "Send one message to a node");
  inject_cmd->add_option("address", inject.address, "Target host:port")->required();
  inject_cmd->add_option("term", inject.term, "Message term")->required();
  inject_cmd->add_option("--from", inject.from, "Sender field of an unsigned message");
  inject_cmd->add_option("--signed-as", inject.signed_as, "Sign as this node (sets the sender)");
  inject_cmd->add_option("--keys", inject.keys, "Key file for signing");
  inject_cmd->add_option("--mac", inject.mac, "MAC algorithm")->check(CLI::IsMember({"hmac-sha256", "hmac-md5"}));

  DumpArgs dump;
  auto* dump_cmd = app.add_subcommand("dump", "List a node's clauses for name/arity");
  dump_cmd->add_option("address", dump.address, "Target host:port")->required();
  dump_cmd->add_option("indicator", dump.indicator, "name/arity")->required();
  dump_cmd->add_option("--bind", dump.bind, "Reply listen address");
  dump_cmd->add_option("--timeout", dump.timeout_ms, "Milliseconds to wait");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*sim_cmd) {
      if (*seed_opt) sim.seed = sim_seed;
      return cmd_sim(sim);
    }
    if (*bench_cmd) return cmd_bench(bench);
    if (*chord_cmd) return cmd_chord(chord);
    if (*inject_cmd) return cmd_inject(inject);
    if (*dump_cmd) return cmd_dump(dump);
  } catch (const UsageError& e) {
    std::cerr << "dahl: " << e.what() << "\n";
    return kUsage;
  } catch (const ScenarioError& e) {
    std::cerr << "dahl: scenario " << e.what() << "\n";
    return kUsage;
  } catch (const SyntaxError& e) {
    print_syntax_error("input", e);
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "dahl: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
