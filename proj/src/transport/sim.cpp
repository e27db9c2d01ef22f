#include "dahl/sim.hpp"

#include <stdexcept>

namespace dahl {

class SimNetwork::Port final : public NodeServices {
 public:
  Port(SimNetwork& net, std::string self) : net_(net), self_(std::move(self)) {}

  SendStatus send(const std::string& to, Envelope env) override { return net_.send_from(self_, to, std::move(env)); }
  std::int64_t now_ms() const override { return net_.now_ / kMs; }
  void schedule_alarm(std::int64_t delay_ms, Envelope env) override {
    net_.alarm_from(self_, delay_ms, std::move(env));
  }

 private:
  SimNetwork& net_;
  std::string self_;
};

namespace {

std::string format_time(SimTime t) {
  std::string frac = std::to_string(t % kMs);
  return std::to_string(t / kMs) + "." + std::string(3 - frac.size(), '0') + frac;
}

}  // namespace

std::string trace_line(const TraceRecord& r) {
  const DispatchRecord& d = r.dispatch;
  std::string line = "t=" + format_time(r.time) + " seq=" + std::to_string(r.seq) + " node=" + d.node +
                     " from=" + d.sender + " origin=" + std::string(origin_name(d.origin)) + " msg=" + d.payload +
                     " outcome=" + std::string(outcome_name(d.outcome));
  if (!d.error.empty()) line += " error=\"" + d.error + "\"";
  line += " sends=[";
  for (std::size_t i = 0; i < d.sends.size(); ++i) {
    const SendRecord& s = d.sends[i];
    if (i) line += " ";
    line += s.to + (s.signed_ ? "!" : "") + (s.accepted ? "" : "?") + ":" + s.payload;
  }
  line += "]";
  return line;
}

SimNetwork::SimNetwork(std::uint64_t seed) : rng_(seed) {}

SimNetwork::~SimNetwork() = default;

Node& SimNetwork::add_node(NodeConfig cfg) {
  if (nodes_.count(cfg.address)) throw std::invalid_argument("address already bound: " + cfg.address);
  std::string addr = cfg.address;
  Hosted h;
  h.port = std::make_unique<Port>(*this, addr);
  h.node = std::make_unique<Node>(std::move(cfg), *h.port);
  h.incarnation = next_incarnation_++;
  auto [it, inserted] = nodes_.emplace(addr, std::move(h));
  return *it->second.node;
}

void SimNetwork::remove_node(const std::string& address) {
  auto it = nodes_.find(address);
  if (it == nodes_.end()) return;
  retired_ += it->second.node->metrics();
  nodes_.erase(it);
}

Node* SimNetwork::node(const std::string& address) {
  auto it = nodes_.find(address);
  return it == nodes_.end() ? nullptr : it->second.node.get();
}

std::vector<std::string> SimNetwork::addresses() const {
  std::vector<std::string> out;
  out.reserve(nodes_.size());
  for (const auto& [addr, h] : nodes_) out.push_back(addr);
  return out;
}

NodeMetrics SimNetwork::node_metrics() const {
  NodeMetrics m = retired_;
  for (const auto& [addr, h] : nodes_) m += h.node->metrics();
  return m;
}

void SimNetwork::push(SimTime due, std::string to, Envelope env, std::optional<std::string> frame,
                      std::uint64_t incarnation) {
  queue_.push(Event{due, next_seq_++, std::move(to), std::move(env), std::move(frame), incarnation});
}

void SimNetwork::inject(const std::string& to, Envelope env, std::optional<SimTime> at) {
  env.origin = Origin::kNetwork;
  push(std::max(at.value_or(now_), now_), to, std::move(env), std::nullopt, 0);
}

SendStatus SimNetwork::send_from(const std::string& from, const std::string& to, Envelope env) {
  if (!nodes_.count(to)) {
    metrics_.link_errors++;
    return SendStatus::kLinkError;
  }
  env.origin = Origin::kNetwork;
  metrics_.accepted++;
  if (tap_) tap_(from, to, env);
  if (links_.drop) {
    double p = links_.drop(from, to);
    if (p > 0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p) {
      metrics_.dropped++;
      return SendStatus::kAccepted;
    }
  }
  SimTime delay = links_.latency ? links_.latency(from, to, rng_) : kMs;
  if (delay < 0) throw std::logic_error("negative link latency");
  std::optional<std::string> frame;
  if (links_.corrupt) {
    frame = encode_frame(env);
    links_.corrupt(from, to, *frame);
  }
  push(now_ + delay, to, std::move(env), std::move(frame), 0);
  return SendStatus::kAccepted;
}

void SimNetwork::alarm_from(const std::string& self, std::int64_t delay_ms, Envelope env) {
  auto it = nodes_.find(self);
  if (it == nodes_.end()) return;
  env.origin = Origin::kAlarm;
  push(now_ + delay_ms * kMs, self, std::move(env), std::nullopt, it->second.incarnation);
}

std::optional<TraceRecord> SimNetwork::step() {
  while (!queue_.empty()) {
    Event ev = queue_.top();
    queue_.pop();
    now_ = std::max(now_, ev.due);
    auto it = nodes_.find(ev.to);
    if (it == nodes_.end() || (ev.incarnation != 0 && ev.incarnation != it->second.incarnation)) {
      metrics_.dead_letters++;
      continue;
    }
    TraceRecord rec;
    rec.time = now_;
    rec.seq = ev.seq;
    Envelope env = std::move(ev.env);
    if (ev.frame) {
      try {
        env = decode_frame(*ev.frame);
      } catch (const FrameError& e) {
        rec.dispatch.node = ev.to;
        rec.dispatch.sender = env.sender;
        rec.dispatch.payload = env.payload;
        rec.dispatch.outcome = DispatchRecord::Outcome::kDecodeError;
        rec.dispatch.error = e.what();
        if (trace_) trace_(rec);
        return rec;
      }
    }
    if (ev.incarnation != 0) {
      metrics_.alarms++;
      env.origin = Origin::kAlarm;
    } else {
      metrics_.delivered++;
    }
    rec.dispatch = it->second.node->dispatch(env);
    if (trace_) trace_(rec);
    return rec;
  }
  return std::nullopt;
}

void SimNetwork::run_until(SimTime t) {
  while (!queue_.empty() && queue_.top().due <= t) step();
  now_ = std::max(now_, t);
}

std::size_t SimNetwork::run_to_quiescence(std::size_t limit) {
  std::size_t n = 0;
  while (n < limit && step()) ++n;
  return n;
}

}  // namespace dahl
