#include "dahl/unify.hpp"

#include <utility>
#include <vector>

namespace dahl {

Term walk(const Term& t, const Substitution& s) {
  Term cur = t;
  while (cur.is_var()) {
    auto it = s.find(cur.var_id());
    if (it == s.end()) break;
    cur = it->second;
  }
  return cur;
}

Term apply(const Substitution& s, const Term& t) {
  Term w = walk(t, s);
  if (!w.is_compound() || w.is_ground()) return w;
  std::vector<Term> args;
  args.reserve(w.arity());
  for (const Term& a : w.args()) args.push_back(dahl::apply(s, a));
  return Term::compound(w.name(), std::move(args));
}

namespace {
bool occurs(std::int64_t id, const Term& t, const Substitution& s) {
  Term w = walk(t, s);
  if (w.is_var()) return w.var_id() == id;
  if (!w.is_compound() || w.is_ground()) return false;
  for (const Term& a : w.args()) {
    if (occurs(id, a, s)) return true;
  }
  return false;
}
}  // namespace

std::optional<Substitution> unify(const Term& a, const Term& b, const Substitution& s,
                                  bool occurs_check) {
  Substitution out = s;
  std::vector<std::pair<Term, Term>> work{{a, b}};
  while (!work.empty()) {
    auto [x0, y0] = std::move(work.back());
    work.pop_back();
    Term x = walk(x0, out);
    Term y = walk(y0, out);
    if (x.is_var() && y.is_var() && x.var_id() == y.var_id()) continue;
    if (x.is_var()) {
      if (occurs_check && occurs(x.var_id(), y, out)) return std::nullopt;
      out[x.var_id()] = y;
      continue;
    }
    if (y.is_var()) {
      if (occurs_check && occurs(y.var_id(), x, out)) return std::nullopt;
      out[y.var_id()] = x;
      continue;
    }
    if (x.kind() != y.kind()) return std::nullopt;
    switch (x.kind()) {
      case Term::Kind::kInt:
        if (x.int_value() != y.int_value()) return std::nullopt;
        break;
      case Term::Kind::kAtom:
        if (x.name() != y.name()) return std::nullopt;
        break;
      case Term::Kind::kCompound:
        if (x.arity() != y.arity() || x.name() != y.name()) return std::nullopt;
        for (std::size_t i = x.arity(); i-- > 0;) work.emplace_back(x.arg(i), y.arg(i));
        break;
      case Term::Kind::kVar:
        break;
    }
  }
  return out;
}

}  // namespace dahl
