#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dahl/database.hpp"
#include "dahl/term.hpp"

namespace dahl {

class SyntaxError : public std::runtime_error {
 public:
  SyntaxError(const std::string& msg, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }
  const std::string& message() const { return message_; }

 private:
  std::string message_;
  int line_;
  int column_;
};

// Malformed wire payload.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Directive {
  enum class Kind { kEvent, kAlarm, kDynamic };
  Kind kind;
  std::vector<PredicateIndicator> indicators;
};

struct Program {
  std::vector<Directive> directives;
  std::vector<Clause> clauses;

  // Appends another program (directives and clauses in order).
  void append(const Program& other);
};

// Clauses and `:- event/alarm/dynamic` directives in source order.
Program parse_program(std::string_view text);

// A single term followed by `.` or end of input. Variables are numbered
// from 0 in order of first occurrence; each `_` is fresh.
Term parse_term(std::string_view text);

// Applies directives and consults clauses.
void load_program(Database& db, const Program& p);

// Directives and clauses reproducing the database's current contents.
Program dump_program(const Database& db);

// Canonical wire text: functional notation for every operator, atoms
// quoted unless they match [a-z][a-zA-Z0-9_]*, lists in bracket notation,
// variables renamed _G0, _G1, ... by first occurrence.
std::string serialize(const Term& t);

// Inverse of serialize. Throws DecodeError on malformed input or trailing
// garbage.
Term deserialize(std::string_view payload);

// Human-readable form using operators where the parser reads them back.
std::string format_term(const Term& t);
std::string format_clause(const Clause& c);

}  // namespace dahl
