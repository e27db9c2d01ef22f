#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <random>
#include <string>
#include <vector>

#include "dahl/envelope.hpp"
#include "dahl/node.hpp"

namespace dahl {

// Virtual time in microseconds; alarms and the programs see milliseconds.
using SimTime = std::int64_t;
inline constexpr SimTime kMs = 1000;

struct LinkModel {
  // Delay for one envelope on from -> to. Default: 1 ms.
  std::function<SimTime(const std::string& from, const std::string& to, std::mt19937_64& rng)> latency;
  // Loss probability in [0, 1]. Default: none.
  std::function<double(const std::string& from, const std::string& to)> drop;
  // May rewrite the encoded frame in flight. Delivery decodes the result.
  std::function<void(const std::string& from, const std::string& to, std::string& frame)> corrupt;
};

struct TraceRecord {
  SimTime time = 0;
  std::uint64_t seq = 0;
  DispatchRecord dispatch;
};

// One deterministic line per record.
std::string trace_line(const TraceRecord& r);

struct SimMetrics {
  std::uint64_t accepted = 0;
  std::uint64_t delivered = 0;
  std::uint64_t dropped = 0;       // lost by the link model
  std::uint64_t dead_letters = 0;  // destination gone on arrival
  std::uint64_t link_errors = 0;   // unknown destination at send time
  std::uint64_t alarms = 0;
};

// Single-threaded event-ordered delivery fabric.
class SimNetwork {
 public:
  explicit SimNetwork(std::uint64_t seed = 1);
  ~SimNetwork();
  SimNetwork(const SimNetwork&) = delete;
  SimNetwork& operator=(const SimNetwork&) = delete;

  // Throws std::invalid_argument when the address is taken.
  Node& add_node(NodeConfig cfg);
  // Kills a node: its alarms never fire; envelopes in flight to it vanish.
  void remove_node(const std::string& address);
  Node* node(const std::string& address);
  bool has_node(const std::string& address) const { return nodes_.count(address) > 0; }
  // Registered addresses in sorted order.
  std::vector<std::string> addresses() const;

  // Queues a network-origin envelope for `to` at time `at` (default now).
  void inject(const std::string& to, Envelope env, std::optional<SimTime> at = std::nullopt);

  // Dispatches the next due event; empty when the queue is.
  std::optional<TraceRecord> step();
  // Processes every event due at or before t, then advances the clock to t.
  void run_until(SimTime t);
  // Runs until the queue drains or `limit` events were processed.
  std::size_t run_to_quiescence(std::size_t limit = 10'000'000);
  SimTime now() const { return now_; }
  bool idle() const { return queue_.empty(); }
  std::size_t pending() const { return queue_.size(); }

  LinkModel& links() { return links_; }
  std::mt19937_64& rng() { return rng_; }
  const SimMetrics& metrics() const { return metrics_; }
  NodeMetrics node_metrics() const;

  void set_trace_sink(std::function<void(const TraceRecord&)> sink) { trace_ = std::move(sink); }
  // Observes every accepted network send (before loss or corruption).
  void set_send_tap(std::function<void(const std::string& from, const std::string& to, const Envelope&)> tap) {
    tap_ = std::move(tap);
  }

 private:
  class Port;
  struct Hosted {
    std::unique_ptr<Port> port;
    std::unique_ptr<Node> node;
    std::uint64_t incarnation;
  };
  struct Event {
    SimTime due;
    std::uint64_t seq;
    std::string to;
    Envelope env;
    std::optional<std::string> frame;  // set when the link may corrupt
    std::uint64_t incarnation;         // alarms only; 0 for network
    bool operator>(const Event& o) const { return due != o.due ? due > o.due : seq > o.seq; }
  };

  SendStatus send_from(const std::string& from, const std::string& to, Envelope env);
  void alarm_from(const std::string& self, std::int64_t delay_ms, Envelope env);
  void push(SimTime due, std::string to, Envelope env, std::optional<std::string> frame, std::uint64_t incarnation);

  std::mt19937_64 rng_;
  SimTime now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t next_incarnation_ = 1;
  std::map<std::string, Hosted> nodes_;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> queue_;
  LinkModel links_;
  SimMetrics metrics_;
  NodeMetrics retired_;
  std::function<void(const TraceRecord&)> trace_;
  std::function<void(const std::string&, const std::string&, const Envelope&)> tap_;
};

}  // namespace dahl
