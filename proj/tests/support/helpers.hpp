#pragma once

#include <string>
#include <string_view>

#include "dahl/database.hpp"
#include "dahl/engine.hpp"
#include "dahl/reader.hpp"
#include "dahl/term.hpp"

namespace dahl::testing {

inline Database db_of(std::string_view text) {
  Database db;
  load_program(db, parse_program(text));
  return db;
}

inline Term t(std::string_view text) { return parse_term(text); }

// Binding of the goal variable named `name` in `out`, resolved.
inline Term binding(const Term& goal, const Substitution& s, std::string_view name) {
  Term found;
  bool ok = false;
  for_each_var(goal, [&](const Term& v) {
    if (!ok && v.var_name() == name) {
      found = v;
      ok = true;
    }
  });
  if (!ok) throw std::invalid_argument("no variable " + std::string(name));
  return dahl::apply(s, found);
}

}  // namespace dahl::testing

#include <memory>

#include "dahl/assets.hpp"
#include "dahl/node.hpp"
#include "dahl/sim.hpp"

namespace dahl::testing {

inline NodeConfig config(std::string address, std::string_view program, std::string_view facts = "",
                         std::shared_ptr<const KeyStore> keys = nullptr) {
  NodeConfig cfg;
  cfg.address = std::move(address);
  cfg.program = parse_program(program);
  for (const Clause& c : parse_program(facts).clauses) cfg.facts.push_back(c);
  cfg.keys = std::move(keys);
  return cfg;
}

inline std::string asset_text(std::string_view name) {
  auto a = find_asset(name);
  if (!a) throw std::invalid_argument("no asset " + std::string(name));
  return std::string(*a);
}

inline Envelope msg(std::string sender, std::string_view term) {
  return Envelope{std::move(sender), serialize(parse_term(term)), std::nullopt, Origin::kNetwork};
}

inline bool holds(Node& n, std::string_view goal) {
  return solve_first(parse_term(goal), n.database()).ok();
}

inline std::size_t count_of(Node& n, std::string_view goal) {
  return solve_all(parse_term(goal), n.database()).size();
}

}  // namespace dahl::testing
