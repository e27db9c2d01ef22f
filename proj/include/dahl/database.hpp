#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dahl/term.hpp"

namespace dahl {

// A program clause. Facts have body `true`.
struct Clause {
  Term head;
  Term body;

  static Clause fact(Term head);
  // Splits `H :- B` or a bare head.
  static Clause from_term(const Term& t);
  Term to_term() const;
};

// Stored clause: variables renumbered 0..var_count-1.
struct ClauseRec {
  Term head;
  Term body;
  std::uint32_t var_count = 0;
  bool erased = false;

  // First-argument key used to skip clauses that cannot match.
  Term::Kind first_kind = Term::Kind::kVar;  // kVar: matches anything
  std::string first_name;
  std::size_t first_arity = 0;
  std::int64_t first_int = 0;
};

using ClauseRef = std::shared_ptr<ClauseRec>;
using ClauseList = std::vector<ClauseRef>;

struct PredicateFlags {
  bool dynamic = false;
  bool event = false;
  bool alarm = false;
};

class PermissionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Predicate {
 public:
  explicit Predicate(PredicateIndicator ind) : indicator_(std::move(ind)) {}

  const PredicateIndicator& indicator() const { return indicator_; }
  PredicateFlags& flags() { return flags_; }
  const PredicateFlags& flags() const { return flags_; }

  // O(1) view of the current clause list; later updates are not visible
  // through it.
  std::shared_ptr<const ClauseList> snapshot() const { return clauses_; }
  std::size_t size() const { return clauses_->size(); }
  bool empty() const { return clauses_->empty(); }

  void add_back(ClauseRef c);
  void add_front(ClauseRef c);
  void erase(const ClauseRec* c);

 private:
  ClauseList& mutable_list();

  PredicateIndicator indicator_;
  PredicateFlags flags_;
  std::shared_ptr<ClauseList> clauses_ = std::make_shared<ClauseList>();
};

ClauseRef compile_clause(const Clause& c);

// Per-node clause store. Predicates are kept in creation order.
class Database {
 public:
  Database() = default;
  Database(const Database&) = delete;
  Database& operator=(const Database&) = delete;
  Database(Database&&) = default;
  Database& operator=(Database&&) = default;

  Predicate* find(std::string_view name, std::size_t arity);
  const Predicate* find(std::string_view name, std::size_t arity) const;
  Predicate* find(const PredicateIndicator& ind) { return find(ind.name, ind.arity); }
  const Predicate* find(const PredicateIndicator& ind) const { return find(ind.name, ind.arity); }
  Predicate& ensure(const PredicateIndicator& ind);

  void declare_dynamic(const PredicateIndicator& ind) { ensure(ind).flags().dynamic = true; }
  void declare_event(const PredicateIndicator& ind) { ensure(ind).flags().event = true; }
  void declare_alarm(const PredicateIndicator& ind) { ensure(ind).flags().alarm = true; }
  PredicateFlags flags(const PredicateIndicator& ind) const;

  // Program-text load: no permission checks.
  void consult(const Clause& c);

  // Runtime updates. Throw PermissionError on static predicates; an
  // undeclared predicate becomes dynamic on first assert.
  void assertz(const Clause& c);
  void asserta(const Clause& c);
  // Removes the first clause whose head and body unify with the template.
  bool retract_first(const Clause& pattern);

  std::vector<Clause> clauses(const PredicateIndicator& ind) const;
  std::vector<PredicateIndicator> indicators() const;

  // Throws PermissionError when ind names a static predicate with clauses.
  void check_modifiable(const PredicateIndicator& ind) const;

 private:
  std::vector<std::unique_ptr<Predicate>> order_;
  // Keys view the names owned by order_.
  std::unordered_map<std::string_view, std::vector<Predicate*>> by_name_;
};

}  // namespace dahl
