#include "dahl/term.hpp"

#include <cassert>
#include <map>

namespace dahl {

namespace detail {

TermBody::~TermBody() {
  std::vector<std::shared_ptr<const TermBody>> pending;
  auto harvest = [&pending](std::vector<Term>& args) {
    for (Term& a : args) {
      if (a.body_ && a.body_.use_count() == 1) pending.push_back(std::move(a.body_));
    }
  };
  harvest(args);
  while (!pending.empty()) {
    std::shared_ptr<const TermBody> b = std::move(pending.back());
    pending.pop_back();
    // Sole owner: detach the children before b goes away.
    harvest(const_cast<TermBody&>(*b).args);
  }
}

}  // namespace detail

namespace {
const std::string kEmpty;

int cmp_kind_rank(Term::Kind k) {
  switch (k) {
    case Term::Kind::kVar: return 0;
    case Term::Kind::kInt: return 1;
    case Term::Kind::kAtom: return 2;
    case Term::Kind::kCompound: return 3;
  }
  return 4;
}
}  // namespace

Term::Term() : kind_(Kind::kInt), num_(0) {}

Term Term::var(std::int64_t id) {
  Term t;
  t.kind_ = Kind::kVar;
  t.num_ = id;
  return t;
}

Term Term::var(std::int64_t id, std::string name) {
  Term t = var(id);
  if (!name.empty()) {
    auto body = std::make_shared<detail::TermBody>();
    body->name = std::move(name);
    body->ground = false;
    t.body_ = std::move(body);
  }
  return t;
}

Term Term::atom(std::string name) {
  Term t;
  t.kind_ = Kind::kAtom;
  auto body = std::make_shared<detail::TermBody>();
  body->name = std::move(name);
  t.body_ = std::move(body);
  return t;
}

Term Term::integer(std::int64_t value) {
  Term t;
  t.num_ = value;
  return t;
}

Term Term::compound(std::string functor, std::vector<Term> args) {
  assert(!args.empty());
  Term t;
  t.kind_ = Kind::kCompound;
  auto body = std::make_shared<detail::TermBody>();
  body->name = std::move(functor);
  bool ground = true;
  for (const Term& a : args) {
    if (!a.is_ground()) {
      ground = false;
      break;
    }
  }
  body->args = std::move(args);
  body->ground = ground;
  t.body_ = std::move(body);
  return t;
}

bool Term::is_atom(std::string_view name) const {
  return kind_ == Kind::kAtom && body_->name == name;
}

bool Term::is_compound(std::string_view functor, std::size_t arity) const {
  return kind_ == Kind::kCompound && body_->args.size() == arity && body_->name == functor;
}

const std::string& Term::name() const {
  if (kind_ == Kind::kAtom || kind_ == Kind::kCompound) return body_->name;
  return kEmpty;
}

const std::string& Term::var_name() const {
  if (kind_ == Kind::kVar && body_) return body_->name;
  return kEmpty;
}

std::size_t Term::arity() const {
  return kind_ == Kind::kCompound ? body_->args.size() : 0;
}

std::span<const Term> Term::args() const {
  if (kind_ != Kind::kCompound) return {};
  return body_->args;
}

bool Term::is_ground() const {
  switch (kind_) {
    case Kind::kVar: return false;
    case Kind::kCompound: return body_->ground;
    default: return true;
  }
}

bool operator==(const Term& a, const Term& b) {
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case Term::Kind::kVar: return a.var_id() == b.var_id();
    case Term::Kind::kInt: return a.int_value() == b.int_value();
    case Term::Kind::kAtom: return a.name() == b.name();
    case Term::Kind::kCompound: {
      if (a.arity() != b.arity() || a.name() != b.name()) return false;
      auto aa = a.args();
      auto ba = b.args();
      for (std::size_t i = 0; i < aa.size(); ++i) {
        if (!(aa[i] == ba[i])) return false;
      }
      return true;
    }
  }
  return false;
}

int compare_terms(const Term& a, const Term& b) {
  int ra = cmp_kind_rank(a.kind());
  int rb = cmp_kind_rank(b.kind());
  if (ra != rb) return ra < rb ? -1 : 1;
  switch (a.kind()) {
    case Term::Kind::kVar:
      return a.var_id() < b.var_id() ? -1 : (a.var_id() > b.var_id() ? 1 : 0);
    case Term::Kind::kInt:
      return a.int_value() < b.int_value() ? -1 : (a.int_value() > b.int_value() ? 1 : 0);
    case Term::Kind::kAtom: {
      int c = a.name().compare(b.name());
      return c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    case Term::Kind::kCompound: {
      if (a.arity() != b.arity()) return a.arity() < b.arity() ? -1 : 1;
      int c = a.name().compare(b.name());
      if (c != 0) return c < 0 ? -1 : 1;
      for (std::size_t i = 0; i < a.arity(); ++i) {
        int r = compare_terms(a.arg(i), b.arg(i));
        if (r != 0) return r;
      }
      return 0;
    }
  }
  return 0;
}

namespace {
bool variant_rec(const Term& a, const Term& b, std::map<std::int64_t, std::int64_t>& ab,
                 std::map<std::int64_t, std::int64_t>& ba) {
  if (a.kind() != b.kind()) return false;
  switch (a.kind()) {
    case Term::Kind::kVar: {
      auto [ia, inserted_a] = ab.emplace(a.var_id(), b.var_id());
      auto [ib, inserted_b] = ba.emplace(b.var_id(), a.var_id());
      return ia->second == b.var_id() && ib->second == a.var_id();
    }
    case Term::Kind::kCompound:
      if (a.arity() != b.arity() || a.name() != b.name()) return false;
      for (std::size_t i = 0; i < a.arity(); ++i) {
        if (!variant_rec(a.arg(i), b.arg(i), ab, ba)) return false;
      }
      return true;
    default:
      return a == b;
  }
}
}  // namespace

bool variant(const Term& a, const Term& b) {
  std::map<std::int64_t, std::int64_t> ab;
  std::map<std::int64_t, std::int64_t> ba;
  return variant_rec(a, b, ab, ba);
}

std::string PredicateIndicator::str() const { return name + "/" + std::to_string(arity); }

std::size_t PredicateIndicatorHash::operator()(const PredicateIndicator& p) const {
  return std::hash<std::string>{}(p.name) * 31 + p.arity;
}

std::optional<PredicateIndicator> indicator_of(const Term& t) {
  if (t.is_atom()) return PredicateIndicator{t.name(), 0};
  if (t.is_compound()) return PredicateIndicator{t.name(), t.arity()};
  return std::nullopt;
}

Term nil() { return Term::atom(kNil); }

Term make_list(std::vector<Term> items, Term tail) {
  Term out = std::move(tail);
  for (auto it = items.rbegin(); it != items.rend(); ++it) {
    out = Term::compound(".", {std::move(*it), std::move(out)});
  }
  return out;
}

std::optional<std::vector<Term>> list_items(const Term& t) {
  std::vector<Term> items;
  const Term* cur = &t;
  while (cur->is_compound(".", 2)) {
    items.push_back(cur->arg(0));
    cur = &cur->arg(1);
  }
  if (!cur->is_atom(kNil)) return std::nullopt;
  return items;
}

Term make_tuple(std::vector<Term> items) {
  assert(!items.empty());
  Term out = std::move(items.back());
  for (std::size_t i = items.size() - 1; i-- > 0;) {
    out = Term::compound(",", {std::move(items[i]), std::move(out)});
  }
  return out;
}

void for_each_var(const Term& t, const std::function<void(const Term&)>& fn) {
  if (t.is_var()) {
    fn(t);
  } else if (t.is_compound() && !t.is_ground()) {
    for (const Term& a : t.args()) for_each_var(a, fn);
  }
}

namespace {
Term renumber_rec(const Term& t, std::map<std::int64_t, std::int64_t>& map) {
  if (t.is_var()) {
    auto [it, inserted] = map.emplace(t.var_id(), static_cast<std::int64_t>(map.size()));
    return Term::var(it->second, t.var_name());
  }
  if (!t.is_compound() || t.is_ground()) return t;
  std::vector<Term> args;
  args.reserve(t.arity());
  for (const Term& a : t.args()) args.push_back(renumber_rec(a, map));
  return Term::compound(t.name(), std::move(args));
}
}  // namespace

Term renumber_vars(const Term& t, std::int64_t* count) {
  std::map<std::int64_t, std::int64_t> map;
  Term out = renumber_rec(t, map);
  if (count) *count = static_cast<std::int64_t>(map.size());
  return out;
}

}  // namespace dahl
