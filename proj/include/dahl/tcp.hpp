#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <queue>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "dahl/envelope.hpp"
#include "dahl/node.hpp"

namespace dahl {

class BindError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
};

// "host:port"; throws std::invalid_argument.
HostPort parse_host_port(std::string_view address);

struct TcpStats {
  std::uint64_t inbound_connections = 0;
  std::uint64_t frames_in = 0;
  std::uint64_t frames_out = 0;
  std::uint64_t decode_errors = 0;  // malformed or truncated inbound streams
  std::uint64_t connects = 0;
  std::uint64_t reconnects = 0;
  std::uint64_t send_failures = 0;
};

// Listens on one address and sends length-prefixed frames to peers over
// cached outbound connections. Thread-safe.
class TcpTransport {
 public:
  using Handler = std::function<void(Envelope)>;

  // Binds and listens. Port 0 picks a free port. Throws BindError.
  explicit TcpTransport(const std::string& bind_address, std::size_t max_connections = 4096);
  ~TcpTransport();
  TcpTransport(const TcpTransport&) = delete;
  TcpTransport& operator=(const TcpTransport&) = delete;

  // Starts accepting; every decoded inbound envelope goes to the handler,
  // called from reader threads.
  void start(Handler on_envelope);
  void stop();

  // Bound address with the actual port.
  const std::string& address() const { return address_; }

  // Writes one frame on the cached connection to `to`, connecting on first
  // use. A failed write evicts the connection and retries once on a fresh
  // one. Accepted means the write completed locally.
  SendStatus send(const std::string& to, const Envelope& env);

  std::size_t outbound_connections() const;
  TcpStats stats() const;

 private:
  struct Outbound {
    int fd = -1;
    std::mutex write;
    std::list<std::string>::iterator lru;
  };

  void accept_loop();
  void read_loop(int fd);
  std::shared_ptr<Outbound> connection(const std::string& to, bool fresh);
  void evict(const std::string& to, const std::shared_ptr<Outbound>& conn);

  std::string address_;
  std::size_t max_connections_;
  int listen_fd_ = -1;
  Handler handler_;
  std::atomic<bool> running_{false};
  std::thread acceptor_;

  mutable std::mutex readers_mu_;
  std::vector<std::thread> readers_;
  std::vector<int> reader_fds_;

  mutable std::mutex out_mu_;
  std::map<std::string, std::shared_ptr<Outbound>> out_;
  std::list<std::string> lru_;  // most recently used first

  mutable std::mutex stats_mu_;
  TcpStats stats_;
};

// A node served by a TCP transport: inbound envelopes and due alarms are
// queued and dispatched one at a time on the node's own thread.
class TcpNode final : public NodeServices {
 public:
  // cfg.address is the bind address; with port 0 the node's address becomes
  // the bound one. Throws BindError.
  explicit TcpNode(NodeConfig cfg);
  ~TcpNode() override;

  void start();
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

  const std::string& address() const { return transport_.address(); }
  TcpTransport& transport() { return transport_; }
  // Counters of the wrapped node; safe to read while running.
  NodeMetrics metrics() const;

  // Called on the node thread after each dispatch.
  void set_observer(std::function<void(const DispatchRecord&)> fn) { observer_ = std::move(fn); }

  SendStatus send(const std::string& to, Envelope env) override;
  std::int64_t now_ms() const override;
  void schedule_alarm(std::int64_t delay_ms, Envelope env) override;

 private:
  using Clock = std::chrono::steady_clock;
  struct Alarm {
    Clock::time_point due;
    std::uint64_t seq;
    Envelope env;
    bool operator>(const Alarm& o) const { return due != o.due ? due > o.due : seq > o.seq; }
  };

  void enqueue(Envelope env);
  void loop();

  TcpTransport transport_;
  std::unique_ptr<Node> node_;
  Clock::time_point epoch_ = Clock::now();

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::queue<Envelope> inbox_;
  std::priority_queue<Alarm, std::vector<Alarm>, std::greater<>> alarms_;
  std::uint64_t alarm_seq_ = 0;
  bool stopping_ = false;
  bool stopped_ = false;
  NodeMetrics metrics_;
  std::thread thread_;
  std::function<void(const DispatchRecord&)> observer_;
};

}  // namespace dahl
