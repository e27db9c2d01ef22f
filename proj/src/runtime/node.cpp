#include "dahl/node.hpp"

#include <utility>

namespace dahl {

std::string_view send_policy_name(SendPolicy p) {
  switch (p) {
    case SendPolicy::kFail: return "fail";
    case SendPolicy::kThrow: return "throw";
    case SendPolicy::kIgnore: return "ignore";
  }
  return "?";
}

SendPolicy parse_send_policy(std::string_view name) {
  if (name == "fail") return SendPolicy::kFail;
  if (name == "throw") return SendPolicy::kThrow;
  if (name == "ignore") return SendPolicy::kIgnore;
  throw std::invalid_argument("unknown send policy '" + std::string(name) + "'");
}

std::string_view outcome_name(DispatchRecord::Outcome o) {
  switch (o) {
    case DispatchRecord::Outcome::kOk: return "ok";
    case DispatchRecord::Outcome::kFailure: return "fail";
    case DispatchRecord::Outcome::kError: return "error";
    case DispatchRecord::Outcome::kDiscarded: return "discarded";
    case DispatchRecord::Outcome::kDecodeError: return "decode_error";
    case DispatchRecord::Outcome::kDebug: return "debug";
  }
  return "?";
}

NodeMetrics& NodeMetrics::operator+=(const NodeMetrics& o) {
  dispatched += o.dispatched;
  handled_ok += o.handled_ok;
  failures += o.failures;
  errors += o.errors;
  discarded += o.discarded;
  decode_errors += o.decode_errors;
  sends_ok += o.sends_ok;
  sends_failed += o.sends_failed;
  missing_keys += o.missing_keys;
  mac_verifications += o.mac_verifications;
  return *this;
}

Node::Node(NodeConfig cfg, NodeServices& services) : cfg_(std::move(cfg)), services_(services) {
  if (cfg_.address.empty()) throw std::invalid_argument("node address is empty");
  load_program(db_, cfg_.program);
  for (const Clause& c : cfg_.facts) db_.consult(c);
  install_builtins();
}

const Builtin* Node::find_builtin(std::string_view name, std::size_t arity) const {
  auto it = builtins_.find(name);
  if (it == builtins_.end()) return nullptr;
  for (const auto& [n, fn] : it->second) {
    if (n == arity) return &fn;
  }
  return nullptr;
}

Node::HandlerContext& Node::context(std::string_view builtin) const {
  if (!current_) throw EngineError(ErrorKind::kContext, std::string(builtin) + " called outside a handler");
  return *current_;
}

bool Node::verified() const {
  HandlerContext& h = context("signed");
  if (h.state == HandlerContext::Verification::kUnchecked) {
    bool ok = false;
    if (h.env->signature && h.env->origin == Origin::kNetwork && cfg_.keys) {
      const_cast<NodeMetrics&>(metrics_).mac_verifications++;
      ok = verify(*cfg_.keys, h.env->sender, cfg_.address, h.env->sender, h.env->payload, *h.env->signature);
    }
    h.state = ok ? HandlerContext::Verification::kValid : HandlerContext::Verification::kInvalid;
  }
  return h.state == HandlerContext::Verification::kValid;
}

bool Node::do_send(CallContext& ctx, const Term& dest_in, const Term& message, bool sign) {
  Term dest = ctx.deref(dest_in);
  if (!dest.is_atom()) throw EngineError(ErrorKind::kType, "send destination must be an atom address");
  const std::string& to = dest.name();
  Envelope env;
  env.sender = cfg_.address;
  env.payload = serialize(ctx.resolve(message));
  if (sign) {
    try {
      if (!cfg_.keys) throw MissingKeyError("no key store configured");
      env.signature = dahl::sign(*cfg_.keys, cfg_.address, to, env.sender, env.payload);
    } catch (const MissingKeyError& e) {
      metrics_.missing_keys++;
      switch (cfg_.policy) {
        case SendPolicy::kFail: return false;
        case SendPolicy::kIgnore: return true;
        case SendPolicy::kThrow: throw EngineError(ErrorKind::kKey, e.what());
      }
    }
  }
  SendRecord rec{to, env.payload, sign, false};
  SendStatus st = services_.send(to, std::move(env));
  rec.accepted = st == SendStatus::kAccepted;
  if (current_) current_->sends->push_back(rec);
  if (rec.accepted) {
    metrics_.sends_ok++;
    return true;
  }
  metrics_.sends_failed++;
  switch (cfg_.policy) {
    case SendPolicy::kFail: return false;
    case SendPolicy::kIgnore: return true;
    case SendPolicy::kThrow: throw EngineError(ErrorKind::kSend, "cannot send to " + to);
  }
  return false;
}

void Node::install_builtins() {
  auto add = [this](std::string name, std::size_t arity, Builtin fn) {
    builtins_[std::move(name)].emplace_back(arity, std::move(fn));
  };

  add("this_node", 1, [this](CallContext& c, std::span<const Term> a) {
    return c.unify(a[0], Term::atom(cfg_.address));
  });
  add("sender", 1, [this](CallContext& c, std::span<const Term> a) {
    return c.unify(a[0], Term::atom(context("sender/1").env->sender));
  });

  auto send_one = [this](bool sign) {
    return [this, sign](CallContext& c, std::span<const Term> a) { return do_send(c, a[0], a[1], sign); };
  };
  add("send", 2, send_one(false));
  add("send_signed", 2, send_one(true));

  auto send_all = [this](bool sign) {
    return [this, sign](CallContext& c, std::span<const Term> a) {
      // Every generator solution first, then the sends.
      std::vector<Term> pairs = c.find_all(Term::compound("-", {a[0], a[2]}), a[1]);
      for (const Term& p : pairs) {
        if (!do_send(c, p.arg(0), p.arg(1), sign)) return false;
      }
      return true;
    };
  };
  add("sendall", 3, send_all(false));
  add("sendall_signed", 3, send_all(true));

  add("alarm", 2, [this](CallContext& c, std::span<const Term> a) {
    Term ms = c.deref(a[1]);
    if (!ms.is_int() || ms.int_value() < 0) {
      throw EngineError(ErrorKind::kType, "alarm/2 delay must be a non-negative integer");
    }
    Envelope env;
    env.sender = cfg_.address;
    env.payload = serialize(c.resolve(a[0]));
    env.origin = Origin::kAlarm;
    services_.schedule_alarm(ms.int_value(), std::move(env));
    return true;
  });

  add("signed", 0, [this](CallContext&, std::span<const Term>) { return verified(); });
  add("signed_by", 1, [this](CallContext& c, std::span<const Term> a) {
    return verified() && c.unify(a[0], Term::atom(current_->env->sender));
  });
  add("signed_by", 2, [this](CallContext& c, std::span<const Term> a) {
    if (!verified()) return false;
    const Mac& mac = *current_->env->signature;
    Term sig = Term::compound("mac", {Term::atom(std::string(mac_algorithm_name(mac.algorithm))),
                                      Term::atom(to_hex(mac.bytes))});
    return c.unify(a[0], Term::atom(current_->env->sender)) && c.unify(a[1], sig);
  });

  // digest_id(Name, Bits, Id): identifier from the digest of an atom's text
  // (or of the canonical form of any other term).
  add("digest_id", 3, [](CallContext& c, std::span<const Term> a) {
    Term x = c.resolve(a[0]);
    Term bits = c.deref(a[1]);
    if (!bits.is_int() || bits.int_value() < 1 || bits.int_value() > 62) {
      throw EngineError(ErrorKind::kType, "digest_id/3 width must be an integer in 1..62");
    }
    std::string text = x.is_atom() ? x.name() : serialize(x);
    auto id = digest_id(text, static_cast<unsigned>(bits.int_value()));
    return c.unify(a[2], Term::integer(static_cast<std::int64_t>(id)));
  });
}

bool Node::dump(const Term& request) {
  const Term& spec = request.arg(0);
  const Term& reply_to = request.arg(1);
  if (!spec.is_compound("/", 2) || !spec.arg(0).is_atom() || !spec.arg(1).is_int() || spec.arg(1).int_value() < 0 ||
      !reply_to.is_atom()) {
    return false;
  }
  PredicateIndicator ind{spec.arg(0).name(), static_cast<std::size_t>(spec.arg(1).int_value())};
  std::vector<Term> items;
  for (const Clause& c : db_.clauses(ind)) items.push_back(c.to_term());
  Envelope env;
  env.sender = cfg_.address;
  env.payload = serialize(Term::compound(std::string(kDumpReply), {spec, make_list(std::move(items))}));
  return services_.send(reply_to.name(), std::move(env)) == SendStatus::kAccepted;
}

DispatchRecord Node::dispatch(const Envelope& env) {
  DispatchRecord rec;
  rec.node = cfg_.address;
  rec.sender = env.sender;
  rec.origin = env.origin;
  rec.payload = env.payload;
  metrics_.dispatched++;

  Term message;
  try {
    message = deserialize(env.payload);
  } catch (const DecodeError& e) {
    metrics_.decode_errors++;
    rec.outcome = DispatchRecord::Outcome::kDecodeError;
    rec.error = e.what();
    return rec;
  }

  if (cfg_.debug_endpoint && env.origin == Origin::kNetwork && message.is_compound(kDumpRequest, 2)) {
    rec.outcome = DispatchRecord::Outcome::kDebug;
    if (!dump(message)) rec.error = "malformed or undeliverable dump request";
    return rec;
  }

  auto ind = indicator_of(message);
  PredicateFlags flags = ind ? db_.flags(*ind) : PredicateFlags{};
  bool allowed = env.origin == Origin::kNetwork ? flags.event : (flags.event || flags.alarm);
  if (!allowed) {
    metrics_.discarded++;
    rec.outcome = DispatchRecord::Outcome::kDiscarded;
    return rec;
  }

  HandlerContext ctx{&env, HandlerContext::Verification::kUnchecked, &rec.sends};
  current_ = &ctx;
  SolveOutcome out = solve_first(message, db_, cfg_.limits, this);
  current_ = nullptr;
  rec.steps = out.steps;
  switch (out.status) {
    case SolveOutcome::Status::kSuccess:
      metrics_.handled_ok++;
      rec.outcome = DispatchRecord::Outcome::kOk;
      break;
    case SolveOutcome::Status::kFailure:
      metrics_.failures++;
      rec.outcome = DispatchRecord::Outcome::kFailure;
      if (log_) log_(cfg_.address + ": handler failed: " + format_term(message));
      break;
    case SolveOutcome::Status::kError:
      metrics_.errors++;
      rec.outcome = DispatchRecord::Outcome::kError;
      rec.error = std::string(error_kind_name(out.error->kind())) + ": " + out.error->what();
      if (log_) log_(cfg_.address + ": handler error (" + rec.error + "): " + format_term(message));
      break;
  }
  return rec;
}

}  // namespace dahl
