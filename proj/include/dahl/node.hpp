#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dahl/auth.hpp"
#include "dahl/database.hpp"
#include "dahl/engine.hpp"
#include "dahl/envelope.hpp"
#include "dahl/reader.hpp"

namespace dahl {

enum class SendPolicy { kFail, kThrow, kIgnore };

std::string_view send_policy_name(SendPolicy p);
SendPolicy parse_send_policy(std::string_view name);

enum class SendStatus { kAccepted, kLinkError };

// What a node needs from the fabric it runs on.
class NodeServices {
 public:
  virtual ~NodeServices() = default;
  // Hands env to the transport. Accepted means handed off, not delivered.
  virtual SendStatus send(const std::string& to, Envelope env) = 0;
  virtual std::int64_t now_ms() const = 0;
  // Queues env (alarm origin, from self) for dispatch delay_ms from now.
  virtual void schedule_alarm(std::int64_t delay_ms, Envelope env) = 0;
};

struct NodeConfig {
  std::string address;
  Program program;
  std::vector<Clause> facts;
  SendPolicy policy = SendPolicy::kFail;
  SolveLimits limits;
  std::shared_ptr<const KeyStore> keys;
  // Answer the reserved '$dump'(Name/Arity, ReplyTo) message.
  bool debug_endpoint = false;
};

// Reserved debug messages. The reply is '$dump_reply'(Name/Arity, Clauses).
inline constexpr std::string_view kDumpRequest = "$dump";
inline constexpr std::string_view kDumpReply = "$dump_reply";

struct SendRecord {
  std::string to;
  std::string payload;
  bool signed_ = false;
  bool accepted = false;
};

struct DispatchRecord {
  enum class Outcome { kOk, kFailure, kError, kDiscarded, kDecodeError, kDebug };

  std::string node;
  std::string sender;
  Origin origin = Origin::kNetwork;
  std::string payload;
  Outcome outcome = Outcome::kDiscarded;
  std::string error;
  std::vector<SendRecord> sends;
  std::uint64_t steps = 0;
};

std::string_view outcome_name(DispatchRecord::Outcome o);

struct NodeMetrics {
  std::uint64_t dispatched = 0;
  std::uint64_t handled_ok = 0;
  std::uint64_t failures = 0;
  std::uint64_t errors = 0;
  std::uint64_t discarded = 0;
  std::uint64_t decode_errors = 0;
  std::uint64_t sends_ok = 0;
  std::uint64_t sends_failed = 0;
  std::uint64_t missing_keys = 0;
  std::uint64_t mac_verifications = 0;

  NodeMetrics& operator+=(const NodeMetrics& o);
};

// A node kernel: one database, handlers evaluated one at a time.
class Node final : public BuiltinHost {
 public:
  Node(NodeConfig cfg, NodeServices& services);
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  // Evaluates one envelope to completion.
  DispatchRecord dispatch(const Envelope& env);

  const std::string& address() const { return cfg_.address; }
  Database& database() { return db_; }
  const Database& database() const { return db_; }
  const NodeMetrics& metrics() const { return metrics_; }
  SendPolicy policy() const { return cfg_.policy; }

  // Optional sink for failure and error lines.
  void set_log(std::function<void(const std::string&)> log) { log_ = std::move(log); }

  const Builtin* find_builtin(std::string_view name, std::size_t arity) const override;

 private:
  struct HandlerContext {
    const Envelope* env;
    enum class Verification { kUnchecked, kValid, kInvalid } state = Verification::kUnchecked;
    std::vector<SendRecord>* sends;
  };

  void install_builtins();
  HandlerContext& context(std::string_view builtin) const;
  bool verified() const;
  bool do_send(CallContext& ctx, const Term& dest, const Term& message, bool sign);
  bool dump(const Term& request);

  NodeConfig cfg_;
  NodeServices& services_;
  Database db_;
  NodeMetrics metrics_;
  std::map<std::string, std::vector<std::pair<std::size_t, Builtin>>, std::less<>> builtins_;
  HandlerContext* current_ = nullptr;
  std::function<void(const std::string&)> log_;
};

}  // namespace dahl
