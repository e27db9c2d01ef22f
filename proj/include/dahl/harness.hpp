#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dahl/protocols.hpp"
#include "dahl/sim.hpp"
#include "dahl/tcp.hpp"

namespace dahl {

// --- scenarios ---

// Malformed scenario text or a missing referenced file.
class ScenarioError : public std::runtime_error {
 public:
  ScenarioError(int line, const std::string& msg);
  int line() const { return line_; }

 private:
  int line_;
};

// "750us", "2.5ms", "3s"; a bare number is milliseconds.
SimTime parse_duration(std::string_view text);

struct AssertionFailure {
  int line = 0;
  std::string statement;
  std::string detail;
};

struct ScenarioResult {
  std::size_t assertions = 0;
  std::vector<AssertionFailure> failures;
  SimTime end = 0;
  SimMetrics sim;
  NodeMetrics nodes;
  std::vector<std::string> output;  // `print` statements

  bool ok() const { return failures.empty(); }
};

// A line-oriented simulation script; see the README for the statements.
class Scenario {
 public:
  // base_dir resolves relative program, facts and key paths.
  static Scenario parse(std::string_view text, std::string base_dir = ".");
  static Scenario load(const std::string& path);

  // Seed from the scenario's `seed` statement unless overridden.
  ScenarioResult run(std::optional<std::uint64_t> seed = std::nullopt,
                     std::function<void(const TraceRecord&)> trace = nullptr) const;

  std::uint64_t seed() const { return seed_; }

  struct Statement {
    int line = 0;
    std::string text;
    std::vector<std::string> words;  // leading keywords and options
    std::string rest;                // trailing term text, if any
  };

 private:
  std::vector<Statement> statements_;
  std::string base_dir_;
  std::uint64_t seed_ = 1;
};

// Versioned `metric,value` CSV.
void write_metrics_csv(std::ostream& out, const ScenarioResult& r);

// --- ping-pong benchmark ---

// Ping payload text serializing to exactly 20 bytes.
std::string bench_ping_term();

struct BenchReport {
  double seconds = 0;
  std::uint64_t requests = 0;  // pings handled at the server in the window
  double requests_per_second = 0;
  std::uint64_t sent = 0;
  std::uint64_t received = 0;
  std::uint64_t lost = 0;             // pings without a pong after the drain
  std::uint64_t protocol_errors = 0;  // decode errors, handler failures and errors, failed sends
};

// Serves pings until `seconds` after the first one arrives (or forever when
// seconds <= 0), printing nothing; returns the server-side report.
BenchReport bench_serve(TcpNode& server, double seconds);

// Closed-loop clients, one connection each, against a running server.
BenchReport bench_client(const std::string& server, int connections, double seconds);

// Server and clients in this process over loopback; measured at the server.
BenchReport bench_loopback(int connections, double seconds);

struct SimBenchReport {
  std::uint64_t pings = 0;
  std::uint64_t pongs = 0;
  SimTime elapsed = 0;
};

// A serial client against one server in the simulator.
SimBenchReport bench_sim(std::uint64_t pings, SimTime rtt);

void write_bench_csv(std::ostream& out, const BenchReport& r);

// --- Chord experiment ---

struct ChordExperimentOptions {
  int nodes = 64;
  int lookups = 1000;
  std::uint64_t seed = 1;
  ChordOptions chord;
  std::optional<ChurnOptions> churn;
  SimTime join_every = 1000 * kMs;
  SimTime max_settle = 900'000 * kMs;
};

struct ChordExperimentResult {
  bool quiesced = false;
  bool ring_consistent = false;
  std::vector<LookupResult> lookups;  // static lookups after quiescence
  std::optional<ChurnResult> churn;
  std::int64_t max_hops = 0;
  std::int64_t hop_bound = 0;  // ceil(log2 N)
  double agreement = 0;        // static lookups matching the oracle
};

// "session=250s,duration=600s,every=500ms"; keys may be omitted.
ChurnOptions parse_churn_spec(std::string_view spec);

ChordExperimentResult run_chord_experiment(const ChordExperimentOptions& opt);

// lookups.csv, latency_cdf.csv, hops.csv and summary.csv in dir.
void write_chord_csvs(const std::string& dir, const ChordExperimentOptions& opt, const ChordExperimentResult& r);

}  // namespace dahl
