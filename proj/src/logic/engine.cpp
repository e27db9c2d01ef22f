#include "dahl/engine.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <unordered_map>

namespace dahl {

std::string_view error_kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kStepLimit: return "step_limit";
    case ErrorKind::kType: return "type";
    case ErrorKind::kArith: return "arith";
    case ErrorKind::kPermission: return "permission";
    case ErrorKind::kSend: return "send";
    case ErrorKind::kKey: return "key";
    case ErrorKind::kContext: return "context";
  }
  return "unknown";
}

namespace {

enum class Op {
  kTrue, kFail, kConj, kDisj, kIfThen, kCut, kNot, kCall,
  kUnify, kNotUnify, kEq, kNotEq,
  kVar, kNonVar, kAtom, kInteger, kAtomic, kCompound, kCallable, kIsList,
  kIs, kArEq, kArNe, kLt, kGt, kLe, kGe,
  kFindall, kCount, kForall,
  kAssertz, kAsserta, kRetract, kRetractAll,
  kLength, kReverse, kMsort, kSort, kKeysort, kCopyTerm, kMemberchk,
};

struct OpEntry {
  std::size_t arity;
  Op op;
};

const std::unordered_map<std::string_view, std::vector<OpEntry>>& op_table() {
  static const auto* table = new std::unordered_map<std::string_view, std::vector<OpEntry>>{
      {"true", {{0, Op::kTrue}}},
      {"fail", {{0, Op::kFail}}},
      {"false", {{0, Op::kFail}}},
      {",", {{2, Op::kConj}}},
      {";", {{2, Op::kDisj}}},
      {"->", {{2, Op::kIfThen}}},
      {"!", {{0, Op::kCut}}},
      {"\\+", {{1, Op::kNot}}},
      {"not", {{1, Op::kNot}}},
      {"call", {{1, Op::kCall}}},
      {"=", {{2, Op::kUnify}}},
      {"\\=", {{2, Op::kNotUnify}}},
      {"==", {{2, Op::kEq}}},
      {"\\==", {{2, Op::kNotEq}}},
      {"var", {{1, Op::kVar}}},
      {"nonvar", {{1, Op::kNonVar}}},
      {"atom", {{1, Op::kAtom}}},
      {"integer", {{1, Op::kInteger}}},
      {"atomic", {{1, Op::kAtomic}}},
      {"compound", {{1, Op::kCompound}}},
      {"callable", {{1, Op::kCallable}}},
      {"is_list", {{1, Op::kIsList}}},
      {"is", {{2, Op::kIs}}},
      {"=:=", {{2, Op::kArEq}}},
      {"=\\=", {{2, Op::kArNe}}},
      {"<", {{2, Op::kLt}}},
      {">", {{2, Op::kGt}}},
      {"=<", {{2, Op::kLe}}},
      {">=", {{2, Op::kGe}}},
      {"findall", {{3, Op::kFindall}}},
      {"count", {{2, Op::kCount}}},
      {"forall", {{2, Op::kForall}}},
      {"assert", {{1, Op::kAssertz}}},
      {"assertz", {{1, Op::kAssertz}}},
      {"asserta", {{1, Op::kAsserta}}},
      {"retract", {{1, Op::kRetract}}},
      {"retractall", {{1, Op::kRetractAll}}},
      {"length", {{2, Op::kLength}}},
      {"reverse", {{2, Op::kReverse}}},
      {"msort", {{2, Op::kMsort}}},
      {"sort", {{2, Op::kSort}}},
      {"keysort", {{2, Op::kKeysort}}},
      {"copy_term", {{2, Op::kCopyTerm}}},
      {"memberchk", {{2, Op::kMemberchk}}},
  };
  return *table;
}

std::optional<Op> find_op(std::string_view name, std::size_t arity) {
  const auto& t = op_table();
  auto it = t.find(name);
  if (it == t.end()) return std::nullopt;
  for (const OpEntry& e : it->second) {
    if (e.arity == arity) return e.op;
  }
  return std::nullopt;
}

Term v(std::int64_t id) { return Term::var(id); }
Term c(const char* f, std::vector<Term> args) { return Term::compound(f, std::move(args)); }

// Library predicates written as clauses.
const Database& library() {
  static const Database* lib = [] {
    auto* db = new Database();
    // member(X, [X|_]).  member(X, [_|T]) :- member(X, T).
    db->consult(Clause::fact(c("member", {v(0), c(".", {v(0), v(1)})})));
    db->consult(Clause{c("member", {v(0), c(".", {v(1), v(2)})}), c("member", {v(0), v(2)})});
    // append([], L, L).  append([H|T], L, [H|R]) :- append(T, L, R).
    db->consult(Clause::fact(c("append", {nil(), v(0), v(0)})));
    db->consult(Clause{c("append", {c(".", {v(0), v(1)}), v(2), c(".", {v(0), v(3)})}),
                       c("append", {v(1), v(2), v(3)})});
    // between(L, H, L) :- L =< H.
    // between(L, H, X) :- L < H, L1 is L + 1, between(L1, H, X).
    db->consult(Clause{c("between", {v(0), v(1), v(0)}), c("=<", {v(0), v(1)})});
    db->consult(Clause{c("between", {v(0), v(1), v(2)}),
                       c(",", {c("<", {v(0), v(1)}),
                               c(",", {c("is", {v(3), c("+", {v(0), Term::integer(1)})}),
                                       c("between", {v(3), v(1), v(2)})})})});
    // nth1(1, [X|_], X) / nth1(N, [_|T], X) :- N > 1, M is N - 1, nth1(M, T, X).
    db->consult(Clause::fact(c("nth1", {Term::integer(1), c(".", {v(0), v(1)}), v(0)})));
    db->consult(Clause{c("nth1", {v(0), c(".", {v(1), v(2)}), v(3)}),
                       c(",", {c(">", {v(0), Term::integer(1)}),
                               c(",", {c("is", {v(4), c("-", {v(0), Term::integer(1)})}),
                                       c("nth1", {v(4), v(2), v(3)})})})});
    return db;
  }();
  return *lib;
}

struct Frame;
using Cont = std::shared_ptr<const Frame>;

struct Frame {
  enum class Kind : std::uint8_t { kGoal, kCutTo };
  Kind kind;
  Term goal;
  std::size_t barrier;
  Cont next;
};

Cont goal_frame(Term goal, std::size_t barrier, Cont next) {
  return std::make_shared<const Frame>(Frame{Frame::Kind::kGoal, std::move(goal), barrier, std::move(next)});
}

Cont cut_frame(std::size_t barrier, Cont next) {
  return std::make_shared<const Frame>(Frame{Frame::Kind::kCutTo, Term(), barrier, std::move(next)});
}

struct ChoicePoint {
  enum class Kind : std::uint8_t { kAlternative, kClauses, kRetract };
  Kind kind;
  std::size_t trail_mark;
  Cont cont;
  Term goal;  // clause goal, or retract head pattern
  Term body;  // retract body pattern
  std::shared_ptr<const ClauseList> clauses;
  std::size_t next = 0;
  Predicate* pred = nullptr;
};

EngineError type_error(const std::string& what) { return EngineError(ErrorKind::kType, what); }
EngineError arith_error(const std::string& what) { return EngineError(ErrorKind::kArith, what); }

class Solver final : public CallContext {
 public:
  Solver(Database& db, const SolveLimits& limits, const BuiltinHost* host)
      : db_(db), limits_(limits), host_(host) {}

  // Copies an external term into the store; returns the id map.
  Term import(const Term& t, std::map<std::int64_t, std::int64_t>& ids) {
    if (t.is_var()) {
      auto it = ids.find(t.var_id());
      if (it == ids.end()) it = ids.emplace(t.var_id(), fresh_block(1)).first;
      return Term::var(it->second, t.var_name());
    }
    if (!t.is_compound() || t.is_ground()) return t;
    std::vector<Term> args;
    args.reserve(t.arity());
    for (const Term& x : t.args()) args.push_back(import(x, ids));
    return Term::compound(t.name(), std::move(args));
  }

  void start(const Term& goal) { cont_ = goal_frame(goal, 0, nullptr); }

  // Runs until the continuation is empty (a solution) or choice points
  // above base are exhausted.
  bool run(std::size_t base) {
    for (;;) {
      if (!cont_) return true;
      Cont f = cont_;
      cont_ = f->next;
      if (f->kind == Frame::Kind::kCutTo) {
        cut_to(f->barrier);
        continue;
      }
      if (++steps_ > limits_.max_steps) {
        throw EngineError(ErrorKind::kStepLimit,
                          "resolution step budget of " + std::to_string(limits_.max_steps) + " exhausted");
      }
      if (!step(f->goal, f->barrier)) {
        if (!backtrack(base)) return false;
      }
    }
  }

  bool backtrack(std::size_t base) {
    while (cps_.size() > base) {
      ChoicePoint cp = std::move(cps_.back());
      cps_.pop_back();
      undo(cp.trail_mark);
      switch (cp.kind) {
        case ChoicePoint::Kind::kAlternative:
          cont_ = std::move(cp.cont);
          return true;
        case ChoicePoint::Kind::kClauses:
          if (try_clauses(cp.goal, std::move(cp.clauses), cp.next, std::move(cp.cont))) return true;
          break;
        case ChoicePoint::Kind::kRetract:
          if (try_retract(cp.goal, cp.body, cp.pred, std::move(cp.clauses), cp.next, std::move(cp.cont)))
            return true;
          break;
      }
    }
    return false;
  }

  std::uint64_t steps() const { return steps_; }

  // CallContext

  Term deref(const Term& t) const override {
    Term cur = t;
    while (cur.is_var() && bound_[static_cast<std::size_t>(cur.var_id())]) {
      cur = cells_[static_cast<std::size_t>(cur.var_id())];
    }
    return cur;
  }

  Term resolve(const Term& t) const override {
    Term w = deref(t);
    if (!w.is_compound() || w.is_ground()) return w;
    std::vector<Term> args;
    args.reserve(w.arity());
    for (const Term& x : w.args()) args.push_back(resolve(x));
    return Term::compound(w.name(), std::move(args));
  }

  bool unify(const Term& x, const Term& y) override {
    Term a = deref(x);
    Term b = deref(y);
    for (;;) {
      if (a.is_var()) {
        if (b.is_var() && a.var_id() == b.var_id()) return true;
        return bind_checked(a.var_id(), b);
      }
      if (b.is_var()) return bind_checked(b.var_id(), a);
      if (a.kind() != b.kind()) return false;
      switch (a.kind()) {
        case Term::Kind::kInt: return a.int_value() == b.int_value();
        case Term::Kind::kAtom: return a.name() == b.name();
        case Term::Kind::kCompound: {
          if (a.arity() != b.arity() || a.name() != b.name()) return false;
          std::size_t n = a.arity();
          for (std::size_t i = 0; i + 1 < n; ++i) {
            if (!unify(a.arg(i), b.arg(i))) return false;
          }
          // Loop on the last argument so long lists do not recurse.
          Term na = deref(a.arg(n - 1));
          Term nb = deref(b.arg(n - 1));
          a = std::move(na);
          b = std::move(nb);
          continue;
        }
        case Term::Kind::kVar: return false;
      }
    }
  }

  std::vector<Term> find_all(const Term& templ, const Term& goal) override {
    std::vector<Term> results;
    std::size_t mark = trail_.size();
    sub_solve(goal, [&] {
      results.push_back(copy_fresh(templ));
      return true;
    });
    undo(mark);
    return results;
  }

  Database& database() override { return db_; }

 private:
  std::int64_t fresh_block(std::size_t n) {
    auto base = static_cast<std::int64_t>(cells_.size());
    cells_.resize(cells_.size() + n);
    bound_.resize(bound_.size() + n, 0);
    return base;
  }

  void bind(std::int64_t id, Term t) {
    auto i = static_cast<std::size_t>(id);
    cells_[i] = std::move(t);
    bound_[i] = 1;
    trail_.push_back(id);
  }

  bool occurs(std::int64_t id, const Term& t) const {
    Term w = deref(t);
    if (w.is_var()) return w.var_id() == id;
    if (!w.is_compound() || w.is_ground()) return false;
    for (const Term& x : w.args()) {
      if (occurs(id, x)) return true;
    }
    return false;
  }

  bool bind_checked(std::int64_t id, const Term& t) {
    if (limits_.occurs_check && occurs(id, t)) return false;
    bind(id, t);
    return true;
  }

  void undo(std::size_t mark) {
    while (trail_.size() > mark) {
      auto i = static_cast<std::size_t>(trail_.back());
      trail_.pop_back();
      bound_[i] = 0;
      cells_[i] = Term();
    }
  }

  void cut_to(std::size_t barrier) {
    if (cps_.size() > barrier) cps_.resize(barrier);
  }

  // Clause-local term with variables offset by base.
  static Term rename(const Term& t, std::int64_t base) {
    if (t.is_var()) return Term::var(base + t.var_id());
    if (!t.is_compound() || t.is_ground()) return t;
    std::vector<Term> args;
    args.reserve(t.arity());
    for (const Term& x : t.args()) args.push_back(rename(x, base));
    return Term::compound(t.name(), std::move(args));
  }

  // Unifies a clause-local term (variables offset by base) with a store term
  // without first building the renamed copy.
  bool unify_clause(const Term& ct, std::int64_t base, const Term& st) {
    if (ct.is_var()) return unify(Term::var(base + ct.var_id()), st);
    if (ct.is_ground()) return unify(ct, st);
    Term s = deref(st);
    if (s.is_var()) return bind_checked(s.var_id(), rename(ct, base));
    if (!s.is_compound() || s.arity() != ct.arity() || s.name() != ct.name()) return false;
    for (std::size_t i = 0; i < ct.arity(); ++i) {
      if (!unify_clause(ct.arg(i), base, s.arg(i))) return false;
    }
    return true;
  }

  Term copy_fresh_rec(const Term& t, std::map<std::int64_t, std::int64_t>& ids) {
    Term w = deref(t);
    if (w.is_var()) {
      auto it = ids.find(w.var_id());
      if (it == ids.end()) it = ids.emplace(w.var_id(), fresh_block(1)).first;
      return Term::var(it->second);
    }
    if (!w.is_compound() || w.is_ground()) return w;
    std::vector<Term> args;
    args.reserve(w.arity());
    for (const Term& x : w.args()) args.push_back(copy_fresh_rec(x, ids));
    return Term::compound(w.name(), std::move(args));
  }

  Term copy_fresh(const Term& t) {
    std::map<std::int64_t, std::int64_t> ids;
    return copy_fresh_rec(t, ids);
  }

  template <typename F>
  void sub_solve(const Term& goal, F&& on_solution) {
    Cont saved = cont_;
    std::size_t base = cps_.size();
    cont_ = goal_frame(goal, base, nullptr);
    bool found = run(base);
    while (found) {
      if (!on_solution()) break;
      found = backtrack(base) && run(base);
    }
    cut_to(base);
    cont_ = std::move(saved);
  }

  bool has_solution(const Term& goal) {
    bool found = false;
    std::size_t mark = trail_.size();
    sub_solve(goal, [&] {
      found = true;
      return false;
    });
    undo(mark);
    return found;
  }

  // Next clause index >= i whose first argument can match goal's.
  std::size_t next_candidate(const Term& goal, const ClauseList& list, std::size_t i) const {
    if (!goal.is_compound()) return i;
    Term first = deref(goal.arg(0));
    if (first.is_var()) return i;
    for (; i < list.size(); ++i) {
      const ClauseRec& r = *list[i];
      if (r.first_kind == Term::Kind::kVar) return i;
      if (r.first_kind != first.kind()) continue;
      switch (first.kind()) {
        case Term::Kind::kInt:
          if (r.first_int == first.int_value()) return i;
          break;
        case Term::Kind::kAtom:
          if (r.first_name == first.name()) return i;
          break;
        case Term::Kind::kCompound:
          if (r.first_arity == first.arity() && r.first_name == first.name()) return i;
          break;
        case Term::Kind::kVar:
          return i;
      }
    }
    return i;
  }

  bool try_clauses(const Term& goal, std::shared_ptr<const ClauseList> list, std::size_t i, Cont cont) {
    const std::size_t n = list->size();
    i = next_candidate(goal, *list, i);
    while (i < n) {
      std::size_t j = next_candidate(goal, *list, i + 1);
      std::size_t barrier = cps_.size();
      std::size_t mark = trail_.size();
      const ClauseRef rec = (*list)[i];
      if (j < n) {
        cps_.push_back(ChoicePoint{ChoicePoint::Kind::kClauses, mark, cont, goal, Term(), list, j, nullptr});
      }
      std::int64_t base = fresh_block(rec->var_count);
      if (unify_clause(rec->head, base, goal)) {
        cont_ = std::move(cont);
        if (!rec->body.is_atom("true")) cont_ = goal_frame(rename(rec->body, base), barrier, cont_);
        return true;
      }
      if (j < n) cps_.pop_back();
      undo(mark);
      i = j;
    }
    return false;
  }

  bool try_retract(const Term& head, const Term& body, Predicate* pred,
                   std::shared_ptr<const ClauseList> list, std::size_t i, Cont cont) {
    for (; i < list->size(); ++i) {
      const ClauseRef rec = (*list)[i];
      if (rec->erased) continue;
      std::size_t mark = trail_.size();
      std::int64_t base = fresh_block(rec->var_count);
      if (unify_clause(rec->head, base, head) && unify_clause(rec->body, base, body)) {
        pred->erase(rec.get());
        if (i + 1 < list->size()) {
          cps_.push_back(
              ChoicePoint{ChoicePoint::Kind::kRetract, mark, cont, head, body, list, i + 1, pred});
        }
        cont_ = std::move(cont);
        return true;
      }
      undo(mark);
    }
    return false;
  }

  std::int64_t eval(const Term& t) {
    Term w = deref(t);
    if (w.is_int()) return w.int_value();
    if (w.is_var()) throw type_error("arithmetic on an unbound variable");
    if (w.is_atom()) throw type_error("not an evaluable: " + w.name() + "/0");
    const std::string& f = w.name();
    if (w.arity() == 1) {
      std::int64_t x = eval(w.arg(0));
      if (f == "-") {
        if (x == std::numeric_limits<std::int64_t>::min()) throw arith_error("integer overflow");
        return -x;
      }
      if (f == "+") return x;
      if (f == "abs") {
        if (x == std::numeric_limits<std::int64_t>::min()) throw arith_error("integer overflow");
        return x < 0 ? -x : x;
      }
      if (f == "sign") return (x > 0) - (x < 0);
      if (f == "\\") return ~x;
    } else if (w.arity() == 2) {
      std::int64_t x = eval(w.arg(0));
      std::int64_t y = eval(w.arg(1));
      std::int64_t r = 0;
      if (f == "+") {
        if (__builtin_add_overflow(x, y, &r)) throw arith_error("integer overflow");
        return r;
      }
      if (f == "-") {
        if (__builtin_sub_overflow(x, y, &r)) throw arith_error("integer overflow");
        return r;
      }
      if (f == "*") {
        if (__builtin_mul_overflow(x, y, &r)) throw arith_error("integer overflow");
        return r;
      }
      if (f == "//" || f == "mod" || f == "rem") {
        if (y == 0) throw arith_error("division by zero");
        if (x == std::numeric_limits<std::int64_t>::min() && y == -1) {
          if (f == "//") throw arith_error("integer overflow");
          return 0;
        }
        if (f == "//") return x / y;
        if (f == "rem") return x % y;
        std::int64_t m = x % y;
        if (m != 0 && ((m < 0) != (y < 0))) m += y;
        return m;
      }
      if (f == "min") return std::min(x, y);
      if (f == "max") return std::max(x, y);
      if (f == "pow" || f == "**" || f == "^") {
        if (y < 0) throw arith_error("negative exponent");
        std::int64_t acc = 1;
        for (std::int64_t k = 0; k < y; ++k) {
          if (__builtin_mul_overflow(acc, x, &acc)) throw arith_error("integer overflow");
        }
        return acc;
      }
      if (f == ">>") return y >= 64 ? (x < 0 ? -1 : 0) : x >> y;
      if (f == "<<") {
        if (y < 0 || y >= 63 || (x != 0 && (x > (std::numeric_limits<std::int64_t>::max() >> y) ||
                                             x < (std::numeric_limits<std::int64_t>::min() >> y)))) {
          throw arith_error("integer overflow");
        }
        return x << y;
      }
      if (f == "/\\") return x & y;
      if (f == "\\/") return x | y;
      if (f == "xor") return x ^ y;
    }
    throw type_error("not an evaluable: " + f + "/" + std::to_string(w.arity()));
  }

  Term checked_callable(const Term& t) const {
    Term w = deref(t);
    if (w.is_var()) throw type_error("goal is an unbound variable");
    if (!w.is_callable()) throw type_error("goal is not callable");
    return w;
  }

  std::vector<Term> proper_list(const Term& t, const char* who) const {
    auto items = list_items(resolve(t));
    if (!items) throw type_error(std::string(who) + ": expected a proper list");
    return *items;
  }

  bool do_assert(const Term& arg, bool front) {
    Term t = resolve(arg);
    if (t.is_var()) throw type_error("assert: unbound clause");
    Clause cl = Clause::from_term(t);
    if (cl.head.is_var()) throw type_error("assert: unbound clause head");
    if (!cl.head.is_callable()) throw type_error("assert: clause head is not callable");
    try {
      if (front) {
        db_.asserta(cl);
      } else {
        db_.assertz(cl);
      }
    } catch (const PermissionError& e) {
      throw EngineError(ErrorKind::kPermission, e.what());
    }
    return true;
  }

  void split_clause(const Term& arg, Term& head, Term& body) const {
    Term t = deref(arg);
    if (t.is_compound(":-", 2)) {
      head = deref(t.arg(0));
      body = t.arg(1);
    } else {
      head = t;
      body = Term::atom("true");
    }
    if (head.is_var()) throw type_error("retract: unbound clause head");
    if (!head.is_callable()) throw type_error("retract: clause head is not callable");
  }

  bool do_retract(const Term& arg) {
    Term head;
    Term body;
    split_clause(arg, head, body);
    Predicate* pred = db_.find(head.name(), head.arity());
    if (!pred) return false;
    if (!pred->flags().dynamic && !pred->empty()) {
      throw EngineError(ErrorKind::kPermission,
                        "cannot modify static procedure " + pred->indicator().str());
    }
    return try_retract(head, body, pred, pred->snapshot(), 0, cont_);
  }

  bool do_retract_all(const Term& arg) {
    Term head = deref(arg);
    if (head.is_var()) throw type_error("retractall: unbound head");
    if (!head.is_callable()) throw type_error("retractall: head is not callable");
    auto ind = *indicator_of(head);
    try {
      db_.check_modifiable(ind);
    } catch (const PermissionError& e) {
      throw EngineError(ErrorKind::kPermission, e.what());
    }
    Predicate& pred = db_.ensure(ind);
    pred.flags().dynamic = true;
    auto list = pred.snapshot();
    for (const ClauseRef& rec : *list) {
      if (rec->erased) continue;
      std::size_t mark = trail_.size();
      std::int64_t base = fresh_block(rec->var_count);
      if (unify_clause(rec->head, base, head)) pred.erase(rec.get());
      undo(mark);
    }
    return true;
  }

  bool step(const Term& goal_in, std::size_t barrier) {
    Term goal = checked_callable(goal_in);
    const std::string& name = goal.name();
    const std::size_t arity = goal.arity();
    if (auto op = find_op(name, arity)) return exec(*op, goal, barrier);
    if (host_) {
      if (const Builtin* b = host_->find_builtin(name, arity)) return (*b)(*this, goal.args());
    }
    const Predicate* pred = db_.find(name, arity);
    if (!pred) pred = library().find(name, arity);
    if (!pred || pred->empty()) return false;
    return try_clauses(goal, pred->snapshot(), 0, cont_);
  }

  bool exec(Op op, const Term& g, std::size_t barrier) {
    switch (op) {
      case Op::kTrue: return true;
      case Op::kFail: return false;
      case Op::kConj:
        cont_ = goal_frame(g.arg(1), barrier, cont_);
        cont_ = goal_frame(g.arg(0), barrier, cont_);
        return true;
      case Op::kDisj: {
        Term left = deref(g.arg(0));
        if (left.is_compound("->", 2)) return if_then_else(left.arg(0), left.arg(1), g.arg(1), barrier);
        cps_.push_back(ChoicePoint{ChoicePoint::Kind::kAlternative, trail_.size(),
                                   goal_frame(g.arg(1), barrier, cont_), Term(), Term(), nullptr, 0, nullptr});
        cont_ = goal_frame(left, barrier, cont_);
        return true;
      }
      case Op::kIfThen: return if_then_else(g.arg(0), g.arg(1), Term::atom("fail"), barrier);
      case Op::kCut: cut_to(barrier); return true;
      case Op::kNot: return !has_solution(g.arg(0));
      case Op::kCall: cont_ = goal_frame(g.arg(0), cps_.size(), cont_); return true;
      case Op::kUnify: return unify(g.arg(0), g.arg(1));
      case Op::kNotUnify: {
        std::size_t mark = trail_.size();
        bool ok = unify(g.arg(0), g.arg(1));
        undo(mark);
        return !ok;
      }
      case Op::kEq: return resolve(g.arg(0)) == resolve(g.arg(1));
      case Op::kNotEq: return !(resolve(g.arg(0)) == resolve(g.arg(1)));
      case Op::kVar: return deref(g.arg(0)).is_var();
      case Op::kNonVar: return !deref(g.arg(0)).is_var();
      case Op::kAtom: return deref(g.arg(0)).is_atom();
      case Op::kInteger: return deref(g.arg(0)).is_int();
      case Op::kAtomic: return deref(g.arg(0)).is_atomic();
      case Op::kCompound: return deref(g.arg(0)).is_compound();
      case Op::kCallable: return deref(g.arg(0)).is_callable();
      case Op::kIsList: return list_items(resolve(g.arg(0))).has_value();
      case Op::kIs: return unify(g.arg(0), Term::integer(eval(g.arg(1))));
      case Op::kArEq: return eval(g.arg(0)) == eval(g.arg(1));
      case Op::kArNe: return eval(g.arg(0)) != eval(g.arg(1));
      case Op::kLt: return eval(g.arg(0)) < eval(g.arg(1));
      case Op::kGt: return eval(g.arg(0)) > eval(g.arg(1));
      case Op::kLe: return eval(g.arg(0)) <= eval(g.arg(1));
      case Op::kGe: return eval(g.arg(0)) >= eval(g.arg(1));
      case Op::kFindall: return unify(g.arg(2), make_list(find_all(g.arg(0), g.arg(1))));
      case Op::kCount: {
        std::int64_t n = 0;
        std::size_t mark = trail_.size();
        sub_solve(g.arg(0), [&] {
          ++n;
          return true;
        });
        undo(mark);
        return unify(g.arg(1), Term::integer(n));
      }
      case Op::kForall:
        return !has_solution(Term::compound(",", {g.arg(0), Term::compound("\\+", {g.arg(1)})}));
      case Op::kAssertz: return do_assert(g.arg(0), false);
      case Op::kAsserta: return do_assert(g.arg(0), true);
      case Op::kRetract: return do_retract(g.arg(0));
      case Op::kRetractAll: return do_retract_all(g.arg(0));
      case Op::kLength: {
        Term l = resolve(g.arg(0));
        if (auto items = list_items(l)) return unify(g.arg(1), Term::integer(static_cast<std::int64_t>(items->size())));
        Term n = deref(g.arg(1));
        if (l.is_var() && n.is_int() && n.int_value() >= 0) {
          std::vector<Term> vars;
          for (std::int64_t i = 0; i < n.int_value(); ++i) vars.push_back(Term::var(fresh_block(1)));
          return unify(l, make_list(std::move(vars)));
        }
        throw type_error("length: expected a proper list");
      }
      case Op::kReverse: {
        auto items = proper_list(g.arg(0), "reverse");
        std::reverse(items.begin(), items.end());
        return unify(g.arg(1), make_list(std::move(items)));
      }
      case Op::kMsort:
      case Op::kSort: {
        auto items = proper_list(g.arg(0), op == Op::kSort ? "sort" : "msort");
        std::stable_sort(items.begin(), items.end(),
                         [](const Term& x, const Term& y) { return compare_terms(x, y) < 0; });
        if (op == Op::kSort) {
          items.erase(std::unique(items.begin(), items.end(),
                                  [](const Term& x, const Term& y) { return compare_terms(x, y) == 0; }),
                      items.end());
        }
        return unify(g.arg(1), make_list(std::move(items)));
      }
      case Op::kKeysort: {
        auto items = proper_list(g.arg(0), "keysort");
        for (const Term& p : items) {
          if (!p.is_compound("-", 2)) throw type_error("keysort: expected Key-Value pairs");
        }
        std::stable_sort(items.begin(), items.end(), [](const Term& x, const Term& y) {
          return compare_terms(x.arg(0), y.arg(0)) < 0;
        });
        return unify(g.arg(1), make_list(std::move(items)));
      }
      case Op::kCopyTerm: return unify(g.arg(1), copy_fresh(g.arg(0)));
      case Op::kMemberchk:
        return if_then_else(Term::compound("member", {g.arg(0), g.arg(1)}), Term::atom("true"),
                            Term::atom("fail"), barrier);
    }
    return false;
  }

  // (C -> T ; E): commit to the first solution of C.
  bool if_then_else(const Term& cond, const Term& then, const Term& otherwise, std::size_t barrier) {
    std::size_t b = cps_.size();
    cps_.push_back(ChoicePoint{ChoicePoint::Kind::kAlternative, trail_.size(),
                               goal_frame(otherwise, barrier, cont_), Term(), Term(), nullptr, 0, nullptr});
    cont_ = goal_frame(then, barrier, cont_);
    cont_ = cut_frame(b, cont_);
    cont_ = goal_frame(cond, b + 1, cont_);
    return true;
  }

  Database& db_;
  SolveLimits limits_;
  const BuiltinHost* host_;
  std::vector<Term> cells_;
  std::vector<std::uint8_t> bound_;
  std::vector<std::int64_t> trail_;
  std::vector<ChoicePoint> cps_;
  Cont cont_;
  std::uint64_t steps_ = 0;

  friend Substitution export_bindings(const Solver&, const std::map<std::int64_t, std::int64_t>&);
};

Substitution export_bindings(const Solver& s, const std::map<std::int64_t, std::int64_t>& ids) {
  // Store variables that are images of goal variables map back to them;
  // every other free variable is shifted past the goal's ids.
  std::int64_t shift = 0;
  std::map<std::int64_t, std::int64_t> back;
  for (const auto& [orig, store] : ids) {
    shift = std::max(shift, orig + 1);
    back.emplace(store, orig);
  }
  std::function<Term(const Term&)> rename_out = [&](const Term& t) -> Term {
    if (t.is_var()) {
      auto it = back.find(t.var_id());
      return Term::var(it != back.end() ? it->second : shift + t.var_id());
    }
    if (!t.is_compound() || t.is_ground()) return t;
    std::vector<Term> args;
    for (const Term& x : t.args()) args.push_back(rename_out(x));
    return Term::compound(t.name(), std::move(args));
  };
  Substitution out;
  for (const auto& [orig, store] : ids) {
    Term r = s.resolve(Term::var(store));
    if (r.is_var() && r.var_id() == store) continue;
    out.emplace(orig, rename_out(r));
  }
  return out;
}

}  // namespace

SolveOutcome solve_first(const Term& goal, Database& db, const SolveLimits& limits, const BuiltinHost* host) {
  SolveOutcome out;
  Solver s(db, limits, host);
  std::map<std::int64_t, std::int64_t> ids;
  try {
    s.start(s.import(goal, ids));
    if (s.run(0)) {
      out.status = SolveOutcome::Status::kSuccess;
      out.bindings = export_bindings(s, ids);
    } else {
      out.status = SolveOutcome::Status::kFailure;
    }
  } catch (const EngineError& e) {
    out.status = SolveOutcome::Status::kError;
    out.error = e;
  }
  out.steps = s.steps();
  return out;
}

std::vector<Substitution> solve_all(const Term& goal, Database& db, const SolveLimits& limits,
                                    const BuiltinHost* host) {
  std::vector<Substitution> out;
  Solver s(db, limits, host);
  std::map<std::int64_t, std::int64_t> ids;
  s.start(s.import(goal, ids));
  bool found = s.run(0);
  while (found) {
    out.push_back(export_bindings(s, ids));
    found = s.backtrack(0) && s.run(0);
  }
  return out;
}

bool is_core_builtin(std::string_view name, std::size_t arity) {
  return find_op(name, arity).has_value() || library().find(name, arity) != nullptr;
}

}  // namespace dahl
