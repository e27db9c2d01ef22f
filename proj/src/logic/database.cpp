#include "dahl/database.hpp"

#include <algorithm>

#include "dahl/unify.hpp"

namespace dahl {

Clause Clause::fact(Term head) { return Clause{std::move(head), Term::atom("true")}; }

Clause Clause::from_term(const Term& t) {
  if (t.is_compound(":-", 2)) return Clause{t.arg(0), t.arg(1)};
  return fact(t);
}

Term Clause::to_term() const {
  if (body.is_atom("true")) return head;
  return Term::compound(":-", {head, body});
}

void Predicate::add_back(ClauseRef c) { mutable_list().push_back(std::move(c)); }

void Predicate::add_front(ClauseRef c) {
  auto& list = mutable_list();
  list.insert(list.begin(), std::move(c));
}

void Predicate::erase(const ClauseRec* c) {
  auto& list = mutable_list();
  auto it = std::find_if(list.begin(), list.end(), [c](const ClauseRef& r) { return r.get() == c; });
  if (it != list.end()) {
    (*it)->erased = true;
    list.erase(it);
  }
}

ClauseList& Predicate::mutable_list() {
  // Copy on write: an outstanding snapshot keeps the old list.
  if (clauses_.use_count() > 1) clauses_ = std::make_shared<ClauseList>(*clauses_);
  return *clauses_;
}

ClauseRef compile_clause(const Clause& c) {
  auto rec = std::make_shared<ClauseRec>();
  std::int64_t n = 0;
  Term whole = renumber_vars(Term::compound(":-", {c.head, c.body}), &n);
  rec->head = whole.arg(0);
  rec->body = whole.arg(1);
  rec->var_count = static_cast<std::uint32_t>(n);
  if (rec->head.is_compound()) {
    const Term& a = rec->head.arg(0);
    rec->first_kind = a.kind();
    if (a.is_atom() || a.is_compound()) rec->first_name = a.name();
    rec->first_arity = a.arity();
    if (a.is_int()) rec->first_int = a.int_value();
  }
  return rec;
}

Predicate* Database::find(std::string_view name, std::size_t arity) {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) return nullptr;
  for (Predicate* p : it->second) {
    if (p->indicator().arity == arity) return p;
  }
  return nullptr;
}

const Predicate* Database::find(std::string_view name, std::size_t arity) const {
  return const_cast<Database*>(this)->find(name, arity);
}

Predicate& Database::ensure(const PredicateIndicator& ind) {
  if (Predicate* p = find(ind)) return *p;
  order_.push_back(std::make_unique<Predicate>(ind));
  Predicate* p = order_.back().get();
  by_name_[std::string_view(p->indicator().name)].push_back(p);
  return *p;
}

PredicateFlags Database::flags(const PredicateIndicator& ind) const {
  const Predicate* p = find(ind);
  return p ? p->flags() : PredicateFlags{};
}

void Database::consult(const Clause& c) {
  auto ind = indicator_of(c.head);
  if (!ind) throw std::invalid_argument("clause head is not callable");
  ensure(*ind).add_back(compile_clause(c));
}

void Database::check_modifiable(const PredicateIndicator& ind) const {
  const Predicate* p = find(ind);
  if (p && !p->flags().dynamic && !p->empty()) {
    throw PermissionError("cannot modify static procedure " + ind.str());
  }
}

void Database::assertz(const Clause& c) {
  auto ind = indicator_of(c.head);
  if (!ind) throw std::invalid_argument("clause head is not callable");
  check_modifiable(*ind);
  Predicate& p = ensure(*ind);
  p.flags().dynamic = true;
  p.add_back(compile_clause(c));
}

void Database::asserta(const Clause& c) {
  auto ind = indicator_of(c.head);
  if (!ind) throw std::invalid_argument("clause head is not callable");
  check_modifiable(*ind);
  Predicate& p = ensure(*ind);
  p.flags().dynamic = true;
  p.add_front(compile_clause(c));
}

bool Database::retract_first(const Clause& pattern) {
  auto ind = indicator_of(pattern.head);
  if (!ind) throw std::invalid_argument("clause head is not callable");
  Predicate* p = find(*ind);
  if (!p) return false;
  check_modifiable(*ind);
  // Pattern variables must not collide with stored clause numbering.
  std::int64_t offset = 0;
  for_each_var(pattern.to_term(), [&](const Term& v) { offset = std::max(offset, v.var_id() + 1); });
  auto snap = p->snapshot();
  for (const ClauseRef& rec : *snap) {
    Substitution rename;
    for (std::uint32_t i = 0; i < rec->var_count; ++i) rename[i] = Term::var(offset + i);
    Term head = dahl::apply(rename, rec->head);
    Term body = dahl::apply(rename, rec->body);
    auto s = unify(pattern.head, head);
    if (s) s = unify(pattern.body, body, *s);
    if (s) {
      p->erase(rec.get());
      return true;
    }
  }
  return false;
}

std::vector<Clause> Database::clauses(const PredicateIndicator& ind) const {
  std::vector<Clause> out;
  const Predicate* p = find(ind);
  if (!p) return out;
  for (const ClauseRef& rec : *p->snapshot()) out.push_back(Clause{rec->head, rec->body});
  return out;
}

std::vector<PredicateIndicator> Database::indicators() const {
  std::vector<PredicateIndicator> out;
  out.reserve(order_.size());
  for (const auto& p : order_) out.push_back(p->indicator());
  return out;
}

}  // namespace dahl
