#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dahl {

namespace detail {
struct TermBody;
}

// Immutable logic term. Copies share structure; a Term is safe to hand
// between threads once built.
class Term {
 public:
  enum class Kind : std::uint8_t { kVar, kAtom, kInt, kCompound };

  Term();  // the integer 0

  static Term var(std::int64_t id);
  static Term var(std::int64_t id, std::string name);
  static Term atom(std::string name);
  static Term integer(std::int64_t value);
  static Term compound(std::string functor, std::vector<Term> args);

  Kind kind() const { return kind_; }
  bool is_var() const { return kind_ == Kind::kVar; }
  bool is_atom() const { return kind_ == Kind::kAtom; }
  bool is_int() const { return kind_ == Kind::kInt; }
  bool is_compound() const { return kind_ == Kind::kCompound; }
  bool is_atomic() const { return kind_ == Kind::kAtom || kind_ == Kind::kInt; }
  bool is_callable() const { return kind_ == Kind::kAtom || kind_ == Kind::kCompound; }

  bool is_atom(std::string_view name) const;
  bool is_compound(std::string_view functor, std::size_t arity) const;

  std::int64_t var_id() const { return num_; }
  std::int64_t int_value() const { return num_; }

  // Atom name or compound functor.
  const std::string& name() const;
  // Source name of a variable; empty for generated variables.
  const std::string& var_name() const;

  std::size_t arity() const;
  std::span<const Term> args() const;
  const Term& arg(std::size_t i) const { return args()[i]; }

  // True when no variable occurs in the term. Cached for compounds.
  bool is_ground() const;

 private:
  friend struct detail::TermBody;

  Kind kind_;
  std::int64_t num_ = 0;
  std::shared_ptr<const detail::TermBody> body_;
};

namespace detail {
struct TermBody {
  std::string name;
  std::vector<Term> args;
  bool ground = true;

  TermBody() = default;
  TermBody(const TermBody&) = delete;
  TermBody& operator=(const TermBody&) = delete;
  ~TermBody();  // iterative, so long lists do not exhaust the stack
};
}  // namespace detail

// Structural equality: variables are equal iff they have the same id.
bool operator==(const Term& a, const Term& b);

// Standard order of terms: Var < Int < Atom < Compound; compounds by arity,
// then functor, then arguments left to right.
int compare_terms(const Term& a, const Term& b);

// True when a and b are equal up to a consistent renaming of variables.
bool variant(const Term& a, const Term& b);

struct PredicateIndicator {
  std::string name;
  std::size_t arity = 0;

  std::string str() const;  // "name/arity"
  auto operator<=>(const PredicateIndicator&) const = default;
};

struct PredicateIndicatorHash {
  using is_transparent = void;
  std::size_t operator()(const PredicateIndicator& p) const;
};

std::optional<PredicateIndicator> indicator_of(const Term& t);

inline const char* const kNil = "[]";

Term nil();
Term make_list(std::vector<Term> items, Term tail = nil());
// Items of a proper list, or nullopt.
std::optional<std::vector<Term>> list_items(const Term& t);
// Right-nested ','/2 chain; a single item is returned as is.
Term make_tuple(std::vector<Term> items);

// Calls fn on every variable occurrence, left to right.
void for_each_var(const Term& t, const std::function<void(const Term&)>& fn);

// Renumbers variables to 0..n-1 by first occurrence. Returns the count.
Term renumber_vars(const Term& t, std::int64_t* count = nullptr);

}  // namespace dahl

template <>
struct std::hash<dahl::PredicateIndicator> {
  std::size_t operator()(const dahl::PredicateIndicator& p) const {
    return dahl::PredicateIndicatorHash{}(p);
  }
};
