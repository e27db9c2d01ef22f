#pragma once

#include <cstdint>
#include <map>
#include <optional>

#include "dahl/term.hpp"

namespace dahl {

// Finite map from variable id to term. Bindings may chain through other
// variables; apply() resolves them fully.
using Substitution = std::map<std::int64_t, Term>;

// Most general unifier of a and b extending s, or nullopt. Inputs are not
// modified. With occurs_check, binding X to a term containing X fails.
std::optional<Substitution> unify(const Term& a, const Term& b, const Substitution& s = {},
                                  bool occurs_check = false);

// Follows variable bindings at the top of t.
Term walk(const Term& t, const Substitution& s);

// Applies s to every variable in t, recursively.
Term apply(const Substitution& s, const Term& t);

}  // namespace dahl
