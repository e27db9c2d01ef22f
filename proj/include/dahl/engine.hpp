#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dahl/database.hpp"
#include "dahl/term.hpp"
#include "dahl/unify.hpp"

namespace dahl {

enum class ErrorKind {
  kStepLimit,
  kType,
  kArith,
  kPermission,
  kSend,     // transport failure under the throw policy
  kKey,      // missing signing key under the throw policy
  kContext,  // handler-only builtin called outside a handler
};

std::string_view error_kind_name(ErrorKind k);

class EngineError : public std::runtime_error {
 public:
  EngineError(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct SolveLimits {
  std::uint64_t max_steps = 10'000'000;
  bool occurs_check = false;
};

// Services the solver lends to host builtins for the duration of a call.
class CallContext {
 public:
  virtual ~CallContext() = default;
  // Top-level binding of t.
  virtual Term deref(const Term& t) const = 0;
  // t with all current bindings applied.
  virtual Term resolve(const Term& t) const = 0;
  virtual bool unify(const Term& a, const Term& b) = 0;
  // Instances of templ for every solution of goal, in order. Bindings made
  // by goal are undone; unbound variables in the results are fresh.
  virtual std::vector<Term> find_all(const Term& templ, const Term& goal) = 0;
  virtual Database& database() = 0;
};

using Builtin = std::function<bool(CallContext&, std::span<const Term>)>;

// Supplies builtins beyond the core set (networking, authentication).
// Host builtins are deterministic: they succeed once or fail.
class BuiltinHost {
 public:
  virtual ~BuiltinHost() = default;
  virtual const Builtin* find_builtin(std::string_view name, std::size_t arity) const = 0;
};

struct SolveOutcome {
  enum class Status { kSuccess, kFailure, kError };
  Status status = Status::kFailure;
  // Bindings of the goal's variables (success only).
  Substitution bindings;
  std::optional<EngineError> error;
  std::uint64_t steps = 0;

  bool ok() const { return status == Status::kSuccess; }
};

// Depth-first, left-to-right, clause-order search stopping at the first
// solution. Database updates made during the search persist.
SolveOutcome solve_first(const Term& goal, Database& db, const SolveLimits& limits = {},
                         const BuiltinHost* host = nullptr);

// Every solution in standard order. Throws EngineError on engine errors.
std::vector<Substitution> solve_all(const Term& goal, Database& db, const SolveLimits& limits = {},
                                    const BuiltinHost* host = nullptr);

// True when name/arity is handled by the core engine (control constructs,
// term and arithmetic builtins, database builtins or the library).
bool is_core_builtin(std::string_view name, std::size_t arity);

}  // namespace dahl
