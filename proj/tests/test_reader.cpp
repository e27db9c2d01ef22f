#include <random>

#include "dahl/reader.hpp"
#include "dahl/term.hpp"
#include "doctest.h"
#include "support/helpers.hpp"
#include "support/properties.hpp"

using namespace dahl;
using dahl::testing::t;
using dahl::testing::random_term;

TEST_CASE("parse_program: directives") {
  Program p = parse_program(":- event span_tree/2.");
  REQUIRE(p.directives.size() == 1);
  CHECK(p.directives[0].kind == Directive::Kind::kEvent);
  REQUIRE(p.directives[0].indicators.size() == 1);
  CHECK(p.directives[0].indicators[0] == PredicateIndicator{"span_tree", 2});
  CHECK(p.clauses.empty());

  Program q = parse_program(":- dynamic seqno/1, pending/3, cache/4.\n:- alarm tick/0.");
  REQUIRE(q.directives.size() == 2);
  CHECK(q.directives[0].kind == Directive::Kind::kDynamic);
  CHECK(q.directives[0].indicators.size() == 3);
  CHECK(q.directives[0].indicators[2].str() == "cache/4");
  CHECK(q.directives[1].kind == Directive::Kind::kAlarm);
}

TEST_CASE("parse_program: clause with negation") {
  Program p = parse_program("p(X) :- q(X), \\+ r(X).");
  REQUIRE(p.clauses.size() == 1);
  const Clause& c = p.clauses[0];
  CHECK(c.head.is_compound("p", 1));
  REQUIRE(c.body.is_compound(",", 2));
  CHECK(c.body.arg(0).is_compound("q", 1));
  REQUIRE(c.body.arg(1).is_compound("\\+", 1));
  CHECK(c.body.arg(1).arg(0).is_compound("r", 1));
  // Shared variable across head and body.
  CHECK(c.head.arg(0) == c.body.arg(0).arg(0));
}

TEST_CASE("parse errors carry line and column") {
  try {
    parse_program("p(");
    FAIL("expected a syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 1);
    CHECK(e.column() == 3);
  }
  try {
    parse_program("a.\nb :- .\n");
    FAIL("expected a syntax error");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 2);
    CHECK(e.column() == 6);
  }
  CHECK_THROWS_AS(parse_program(":- include(foo)."), SyntaxError);
  CHECK_THROWS_AS(parse_program("p(1)"), SyntaxError);
  CHECK_THROWS_AS(parse_program("p :- 'unterminated."), SyntaxError);
  CHECK_THROWS_AS(parse_program("3."), SyntaxError);
}

TEST_CASE("parse_term") {
  Term a = t("span_tree(r, r)");
  CHECK(a.is_compound("span_tree", 2));

  Term l = t("[1,2|T]");
  REQUIRE(l.is_compound(".", 2));
  CHECK(l.arg(0) == Term::integer(1));
  CHECK(l.arg(1).arg(0) == Term::integer(2));
  CHECK(l.arg(1).arg(1).is_var());
  CHECK(l.arg(1).arg(1).var_name() == "T");

  Term tup = t("(1, 'c:1', req)");
  REQUIRE(tup.is_compound(",", 2));
  CHECK(tup.arg(0) == Term::integer(1));
  CHECK(tup.arg(1).is_compound(",", 2));
  CHECK(tup.arg(1).arg(0) == Term::atom("c:1"));
  CHECK(tup.arg(1).arg(1) == Term::atom("req"));

  CHECK(t("foo.") == Term::atom("foo"));
  CHECK_THROWS_AS(t("foo bar"), SyntaxError);
}

TEST_CASE("operators: priority and associativity") {
  CHECK(t("a :- b, c ; d -> e") ==
        Term::compound(":-", {Term::atom("a"),
                              Term::compound(";", {Term::compound(",", {Term::atom("b"), Term::atom("c")}),
                                                   Term::compound("->", {Term::atom("d"), Term::atom("e")})})}));
  CHECK(t("1 - 2 - 3") == t("-(-(1, 2), 3)"));
  CHECK(t("1 + 2 * 3") == t("+(1, *(2, 3))"));
  CHECK(t("X is N mod 4 // 2") == t("is(X, //(mod(N, 4), 2))"));
  CHECK(t("Seq-Id") == t("-(Seq, Id)"));
  CHECK(t("- 1") == t("-(1)"));
  CHECK(t("-1") == Term::integer(-1));
  CHECK(t("a - -1") == t("-(a, -1)"));
  CHECK(t("f(a, (b, c))").arity() == 2);
  CHECK(t("- (1)") == t("-(1)"));
  CHECK(t("'-'(1)") == t("-(1)"));
  CHECK(t("\\+ \\+ a") == t("\\+(\\+(a))"));
  CHECK(t("[a|b]") == t("'.'(a, b)"));
  CHECK(t("[]") == Term::atom("[]"));
  CHECK(t("f(-)") == Term::compound("f", {Term::atom("-")}));
  CHECK(t("f(- , a)") == Term::compound("f", {Term::atom("-"), Term::atom("a")}));
  CHECK(t("{a}") == Term::compound("{}", {Term::atom("a")}));
  CHECK_THROWS_AS(t("a = b = c"), SyntaxError);
}

TEST_CASE("lexing: comments, quoting, anonymous variables") {
  Program p = parse_program("% header\np(X, _, _) :- /* inline */ q('it''s', 'a\\nb', '\\\\').\n");
  REQUIRE(p.clauses.size() == 1);
  const Term& h = p.clauses[0].head;
  CHECK(h.arg(0).var_id() != h.arg(1).var_id());
  CHECK(h.arg(1).var_id() != h.arg(2).var_id());
  const Term& b = p.clauses[0].body;
  CHECK(b.arg(0) == Term::atom("it's"));
  CHECK(b.arg(1) == Term::atom("a\nb"));
  CHECK(b.arg(2) == Term::atom("\\"));
  CHECK(parse_program("p :- true.% trailing").clauses.size() == 1);
  CHECK(t("'hello world'") == Term::atom("hello world"));
  CHECK(t("'is'") == Term::atom("is"));
  CHECK(t("\xc3\xa9t\xc3\xa9") == Term::atom("\xc3\xa9t\xc3\xa9"));
}

TEST_CASE("serialize: canonical form") {
  CHECK(serialize(Term::atom("ping")) == "ping");
  CHECK(serialize(t("a :- b, c")) == "':-'(a,','(b,c))");
  CHECK(serialize(t("[1, 2 | T]")) == "[1,2|_G0]");
  CHECK(serialize(t("f(X, Y, X)")) == "f(_G0,_G1,_G0)");
  CHECK(serialize(t("'10.0.0.1:4000'")) == "'10.0.0.1:4000'");
  CHECK(serialize(t("'Abc'")) == "'Abc'");
  CHECK(serialize(t("'it''s'")) == "'it\\'s'");
  CHECK(serialize(Term::integer(-5)) == "-5");
  CHECK(serialize(t("1 - -5")) == "'-'(1,-5)");
  CHECK(serialize(Term::atom("[]")) == "[]");
  CHECK(serialize(Term::compound("[]", {Term::atom("a")})) == "'[]'(a)");
  CHECK(serialize(Term::atom("")) == "''");
  CHECK(serialize(Term::atom("a\tb\n")) == "'a\\tb\\n'");
}

TEST_CASE("serialize/deserialize round trip and decode errors") {
  Term m = t("process([(1,'c:1',hello)], 7)");
  CHECK(deserialize(serialize(m)) == m);
  CHECK_THROWS_AS(deserialize("f("), DecodeError);
  CHECK_THROWS_AS(deserialize("f(a) g"), DecodeError);
  CHECK_THROWS_AS(deserialize("f(a)."), DecodeError);
  CHECK_THROWS_AS(deserialize(""), DecodeError);
  // Variables decode fresh and consistently renamed.
  Term v = deserialize("f(_G0,_G1,_G0)");
  CHECK(v.arg(0) == v.arg(2));
  CHECK_FALSE(v.arg(0) == v.arg(1));
}

TEST_CASE("property: round trip over random terms") {
  CHECK(dahl::testing::round_trip_failures(2024, 10'000) == 0);
}

TEST_CASE("format_term reads back") {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 2000; ++i) {
    Term x = random_term(rng, 4);
    std::string s = format_term(x);
    Term y;
    try {
      y = parse_term(s);
    } catch (const SyntaxError& e) {
      FAIL(std::string(s + " :: " + e.what()));
    }
    CHECK_MESSAGE(variant(x, y), s);
  }
  CHECK(format_term(t("a :- b, \\+ c")) == "a :- b, \\+ c");
  CHECK(format_term(t("X is (1 + 2) * 3")) == "X is (1 + 2) * 3");
}

TEST_CASE("load then dump reproduces the program") {
  const char* text =
      ":- dynamic seqno/1, pending/3.\n:- event request/1.\n:- alarm tick/0.\n"
      "seqno(1).\nrequest(R) :- assert(pending(1, s, R)).\ntick.\n";
  Program p = parse_program(text);
  Database db;
  load_program(db, p);
  Program d = dump_program(db);
  Database db2;
  load_program(db2, d);
  CHECK(db2.flags({"seqno", 1}).dynamic);
  CHECK(db2.flags({"pending", 3}).dynamic);
  CHECK(db2.flags({"request", 1}).event);
  CHECK(db2.flags({"tick", 0}).alarm);
  REQUIRE(d.clauses.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(variant(d.clauses[i].to_term(), p.clauses[i].to_term()));
  std::string out;
  for (const Clause& c : d.clauses) out += format_clause(c) + "\n";
  CHECK(out.find("request(") != std::string::npos);
}
