#include "dahl/reader.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <unordered_map>

namespace dahl {

SyntaxError::SyntaxError(const std::string& msg, int line, int column)
    : std::runtime_error("syntax error at line " + std::to_string(line) + ", col " + std::to_string(column) +
                         ": " + msg),
      message_(msg),
      line_(line),
      column_(column) {}

void Program::append(const Program& other) {
  directives.insert(directives.end(), other.directives.begin(), other.directives.end());
  clauses.insert(clauses.end(), other.clauses.begin(), other.clauses.end());
}

namespace {

enum class Tok { kName, kVar, kInt, kPunct, kEnd, kEof };

struct Token {
  Tok kind = Tok::kEof;
  std::string text;
  std::uint64_t magnitude = 0;  // kInt
  bool quoted = false;
  bool layout_before = false;
  int line = 1;
  int col = 1;
};

bool is_symbol_char(char c) {
  switch (c) {
    case '+': case '-': case '*': case '/': case '\\': case '^': case '<': case '>':
    case '=': case '~': case ':': case '.': case '?': case '@': case '#': case '&': case '$':
      return true;
    default:
      return false;
  }
}

bool is_alnum(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
         (static_cast<unsigned char>(c) & 0x80);
}

bool is_ascii_alnum(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    Token t;
    t.layout_before = skip_layout();
    t.line = line_;
    t.col = col_;
    if (pos_ >= src_.size()) {
      t.kind = Tok::kEof;
      return t;
    }
    char ch = src_[pos_];
    if (ch >= '0' && ch <= '9') {
      t.kind = Tok::kInt;
      std::uint64_t v = 0;
      while (pos_ < src_.size() && src_[pos_] >= '0' && src_[pos_] <= '9') {
        std::uint64_t d = static_cast<std::uint64_t>(src_[pos_] - '0');
        if (v > (std::numeric_limits<std::uint64_t>::max() - d) / 10) {
          throw SyntaxError("integer literal out of range", t.line, t.col);
        }
        v = v * 10 + d;
        t.text.push_back(src_[pos_]);
        advance();
      }
      t.magnitude = v;
      return t;
    }
    if (ch == '_' || (ch >= 'A' && ch <= 'Z')) {
      t.kind = Tok::kVar;
      while (pos_ < src_.size() && is_alnum(src_[pos_])) {
        t.text.push_back(src_[pos_]);
        advance();
      }
      return t;
    }
    // Non-ASCII bytes read as lowercase letters.
    if ((ch >= 'a' && ch <= 'z') || (static_cast<unsigned char>(ch) & 0x80)) {
      t.kind = Tok::kName;
      while (pos_ < src_.size() && is_alnum(src_[pos_])) {
        t.text.push_back(src_[pos_]);
        advance();
      }
      return t;
    }
    if (ch == '\'') {
      t.kind = Tok::kName;
      t.quoted = true;
      advance();
      for (;;) {
        if (pos_ >= src_.size()) throw SyntaxError("unterminated quoted atom", t.line, t.col);
        char q = src_[pos_];
        if (q == '\'') {
          if (pos_ + 1 < src_.size() && src_[pos_ + 1] == '\'') {
            t.text.push_back('\'');
            advance();
            advance();
            continue;
          }
          advance();
          break;
        }
        if (q == '\\') {
          if (pos_ + 1 >= src_.size()) throw SyntaxError("unterminated escape", line_, col_);
          char e = src_[pos_ + 1];
          switch (e) {
            case '\\': t.text.push_back('\\'); break;
            case '\'': t.text.push_back('\''); break;
            case 'n': t.text.push_back('\n'); break;
            case 't': t.text.push_back('\t'); break;
            default: throw SyntaxError(std::string("unknown escape \\") + e, line_, col_);
          }
          advance();
          advance();
          continue;
        }
        t.text.push_back(q);
        advance();
      }
      return t;
    }
    if (ch == '(' || ch == ')' || ch == '[' || ch == ']' || ch == '{' || ch == '}' || ch == ',' ||
        ch == '|') {
      t.kind = Tok::kPunct;
      t.text.push_back(ch);
      advance();
      return t;
    }
    if (ch == '!' || ch == ';') {
      t.kind = Tok::kName;
      t.text.push_back(ch);
      advance();
      return t;
    }
    if (is_symbol_char(ch)) {
      // A lone '.' followed by layout or end of input ends a clause.
      if (ch == '.' && (pos_ + 1 >= src_.size() || is_layout(src_[pos_ + 1]) || src_[pos_ + 1] == '%')) {
        t.kind = Tok::kEnd;
        t.text = ".";
        advance();
        return t;
      }
      t.kind = Tok::kName;
      while (pos_ < src_.size() && is_symbol_char(src_[pos_])) {
        t.text.push_back(src_[pos_]);
        advance();
      }
      return t;
    }
    throw SyntaxError(std::string("unexpected character '") + ch + "'", t.line, t.col);
  }

 private:
  static bool is_layout(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

  void advance() {
    if (src_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else if ((static_cast<unsigned char>(src_[pos_]) & 0xC0) != 0x80) {
      ++col_;
    }
    ++pos_;
  }

  bool skip_layout() {
    bool any = false;
    while (pos_ < src_.size()) {
      char ch = src_[pos_];
      if (is_layout(ch)) {
        advance();
        any = true;
      } else if (ch == '%') {
        while (pos_ < src_.size() && src_[pos_] != '\n') advance();
        any = true;
      } else if (ch == '/' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '*') {
        int l = line_;
        int c = col_;
        advance();
        advance();
        while (pos_ + 1 < src_.size() && !(src_[pos_] == '*' && src_[pos_ + 1] == '/')) advance();
        if (pos_ + 1 >= src_.size()) throw SyntaxError("unterminated block comment", l, c);
        advance();
        advance();
        any = true;
      } else {
        break;
      }
    }
    return any;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
};

enum class OpType { kXfx, kXfy, kYfx, kFy, kFx };

struct OpDef {
  int priority;
  OpType type;
};

const std::unordered_map<std::string, OpDef>& infix_ops() {
  static const auto* ops = new std::unordered_map<std::string, OpDef>{
      {":-", {1200, OpType::kXfx}}, {";", {1100, OpType::kXfy}},   {"->", {1050, OpType::kXfy}},
      {",", {1000, OpType::kXfy}},  {"=", {700, OpType::kXfx}},    {"\\=", {700, OpType::kXfx}},
      {"==", {700, OpType::kXfx}},  {"\\==", {700, OpType::kXfx}}, {"=:=", {700, OpType::kXfx}},
      {"=\\=", {700, OpType::kXfx}}, {"is", {700, OpType::kXfx}},  {"<", {700, OpType::kXfx}},
      {">", {700, OpType::kXfx}},   {"=<", {700, OpType::kXfx}},   {">=", {700, OpType::kXfx}},
      {"@<", {700, OpType::kXfx}},  {"@>", {700, OpType::kXfx}},   {"@=<", {700, OpType::kXfx}},
      {"@>=", {700, OpType::kXfx}}, {"+", {500, OpType::kYfx}},    {"-", {500, OpType::kYfx}},
      {"/\\", {500, OpType::kYfx}}, {"\\/", {500, OpType::kYfx}},  {"*", {400, OpType::kYfx}},
      {"/", {400, OpType::kYfx}},   {"//", {400, OpType::kYfx}},   {"mod", {400, OpType::kYfx}},
      {"rem", {400, OpType::kYfx}}, {"<<", {400, OpType::kYfx}},   {">>", {400, OpType::kYfx}},
      {"xor", {400, OpType::kYfx}}, {"**", {200, OpType::kXfx}},   {"^", {200, OpType::kXfy}},
  };
  return *ops;
}

const std::unordered_map<std::string, OpDef>& prefix_ops() {
  static const auto* ops = new std::unordered_map<std::string, OpDef>{
      {":-", {1200, OpType::kFx}},     {"?-", {1200, OpType::kFx}},    {"dynamic", {1150, OpType::kFx}},
      {"event", {1150, OpType::kFx}},  {"alarm", {1150, OpType::kFx}}, {"\\+", {900, OpType::kFy}},
      {"-", {200, OpType::kFy}},       {"+", {200, OpType::kFy}},      {"\\", {200, OpType::kFy}},
  };
  return *ops;
}

const OpDef* find_infix(const Token& t) {
  if (t.kind == Tok::kPunct && t.text == ",") return &infix_ops().at(",");
  if (t.kind != Tok::kName || t.quoted) return nullptr;
  auto it = infix_ops().find(t.text);
  return it == infix_ops().end() ? nullptr : &it->second;
}

const OpDef* find_prefix(const Token& t) {
  if (t.kind != Tok::kName || t.quoted) return nullptr;
  auto it = prefix_ops().find(t.text);
  return it == prefix_ops().end() ? nullptr : &it->second;
}

class Parser {
 public:
  explicit Parser(std::string_view src) : lex_(src) {
    cur_ = lex_.next();
    peek_ = lex_.next();
  }

  bool at_eof() const { return cur_.kind == Tok::kEof; }
  const Token& current() const { return cur_; }

  void begin_clause() {
    var_ids_.clear();
    next_var_ = 0;
  }

  Term read_clause_term() {
    Term t = parse(1200).term;
    if (cur_.kind != Tok::kEnd) fail_at(cur_, "expected '.' after clause");
    advance();
    return t;
  }

  Term read_single_term(bool allow_end) {
    Term t = parse(1200).term;
    if (allow_end && cur_.kind == Tok::kEnd) advance();
    if (cur_.kind != Tok::kEof) fail_at(cur_, "unexpected trailing input");
    return t;
  }

  [[noreturn]] void fail_at(const Token& t, const std::string& msg) const {
    if (t.kind == Tok::kEof) throw SyntaxError("unexpected end of input", t.line, t.col);
    throw SyntaxError(msg + " near '" + t.text + "'", t.line, t.col);
  }

 private:
  struct Parsed {
    Term term;
    int priority;
  };

  void advance() {
    cur_ = std::move(peek_);
    peek_ = lex_.next();
  }

  bool is_punct(const Token& t, char ch) const { return t.kind == Tok::kPunct && t.text.size() == 1 && t.text[0] == ch; }

  void expect_punct(char ch) {
    if (!is_punct(cur_, ch)) fail_at(cur_, std::string("expected '") + ch + "'");
    advance();
  }

  Term make_var(const std::string& name) {
    if (name == "_") return Term::var(next_var_++, "_");
    auto it = var_ids_.find(name);
    if (it == var_ids_.end()) it = var_ids_.emplace(name, next_var_++).first;
    return Term::var(it->second, name);
  }

  // Can `t` begin a term (so a preceding prefix operator applies to it)?
  bool starts_term(const Token& t) const {
    switch (t.kind) {
      case Tok::kInt:
      case Tok::kVar:
        return true;
      case Tok::kPunct:
        return t.text == "(" || t.text == "[" || t.text == "{";
      case Tok::kName:
        if (t.quoted) return true;
        return !(find_infix(t) && !find_prefix(t));
      default:
        return false;
    }
  }

  std::vector<Term> parse_args() {
    std::vector<Term> args;
    args.push_back(parse(999).term);
    while (is_punct(cur_, ',')) {
      advance();
      args.push_back(parse(999).term);
    }
    expect_punct(')');
    return args;
  }

  Parsed parse_primary(int max_priority) {
    Token t = cur_;
    switch (t.kind) {
      case Tok::kInt: {
        advance();
        if (t.magnitude > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max())) {
          throw SyntaxError("integer literal out of range", t.line, t.col);
        }
        return {Term::integer(static_cast<std::int64_t>(t.magnitude)), 0};
      }
      case Tok::kVar:
        advance();
        return {make_var(t.text), 0};
      case Tok::kPunct: {
        if (t.text == "(") {
          advance();
          Term inner = parse(1200).term;
          expect_punct(')');
          return {inner, 0};
        }
        if (t.text == "[") {
          advance();
          if (is_punct(cur_, ']')) {
            advance();
            return named_primary(kNil, t, max_priority);
          }
          std::vector<Term> items;
          items.push_back(parse(999).term);
          while (is_punct(cur_, ',')) {
            advance();
            items.push_back(parse(999).term);
          }
          Term tail = nil();
          if (is_punct(cur_, '|')) {
            advance();
            tail = parse(999).term;
          }
          expect_punct(']');
          return {make_list(std::move(items), std::move(tail)), 0};
        }
        if (t.text == "{") {
          advance();
          if (is_punct(cur_, '}')) {
            advance();
            return named_primary("{}", t, max_priority);
          }
          Term inner = parse(1200).term;
          expect_punct('}');
          return {Term::compound("{}", {inner}), 0};
        }
        fail_at(t, "unexpected token");
      }
      case Tok::kName: {
        advance();
        if (!t.quoted && t.text == "-" && cur_.kind == Tok::kInt && !cur_.layout_before) {
          Token n = cur_;
          advance();
          constexpr std::uint64_t kMinMag = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()) + 1;
          if (n.magnitude > kMinMag) throw SyntaxError("integer literal out of range", n.line, n.col);
          std::int64_t v = n.magnitude == kMinMag ? std::numeric_limits<std::int64_t>::min()
                                                  : -static_cast<std::int64_t>(n.magnitude);
          return {Term::integer(v), 0};
        }
        return named_primary(t.text, t, max_priority);
      }
      case Tok::kEnd:
      case Tok::kEof:
        fail_at(t, "unexpected end of clause");
    }
    fail_at(t, "unexpected token");
  }

  // Atom, compound in functional notation, or prefix operator application.
  // The name token has already been consumed.
  Parsed named_primary(const std::string& name, const Token& t, int max_priority) {
    if (is_punct(cur_, '(') && !cur_.layout_before) {
      advance();
      return {Term::compound(name, parse_args()), 0};
    }
    if (const OpDef* op = find_prefix(t); op && t.kind == Tok::kName && starts_term(cur_)) {
      int p = op->priority;
      if (p > max_priority) p = 999;
      int arg_max = op->type == OpType::kFy ? p : p - 1;
      Term arg = parse(arg_max).term;
      return {Term::compound(name, {arg}), p};
    }
    return {Term::atom(name), 0};
  }

  Parsed parse(int max_priority) {
    Parsed left = parse_primary(max_priority);
    for (;;) {
      const OpDef* op = find_infix(cur_);
      if (!op) break;
      int p = op->priority;
      if (p > max_priority) break;
      int left_max = op->type == OpType::kYfx ? p : p - 1;
      if (left.priority > left_max) break;
      int right_max = op->type == OpType::kXfy ? p : p - 1;
      std::string name = cur_.text;
      advance();
      Term right = parse(right_max).term;
      left = {Term::compound(name, {left.term, right}), p};
    }
    return left;
  }

  Lexer lex_;
  Token cur_;
  Token peek_;
  std::unordered_map<std::string, std::int64_t> var_ids_;
  std::int64_t next_var_ = 0;
};

void collect_specs(const Term& t, std::vector<PredicateIndicator>& out, const Token& at) {
  if (t.is_compound(",", 2)) {
    collect_specs(t.arg(0), out, at);
    collect_specs(t.arg(1), out, at);
    return;
  }
  if (t.is_compound("/", 2) && t.arg(0).is_atom() && t.arg(1).is_int() && t.arg(1).int_value() >= 0) {
    out.push_back({t.arg(0).name(), static_cast<std::size_t>(t.arg(1).int_value())});
    return;
  }
  throw SyntaxError("malformed predicate specification", at.line, at.col);
}

}  // namespace

Program parse_program(std::string_view text) {
  Program prog;
  Parser parser(text);
  while (!parser.at_eof()) {
    parser.begin_clause();
    Token start = parser.current();
    Term t = parser.read_clause_term();
    if (t.is_compound(":-", 1)) {
      const Term& d = t.arg(0);
      Directive dir{};
      if (d.is_compound("event", 1)) {
        dir.kind = Directive::Kind::kEvent;
      } else if (d.is_compound("alarm", 1)) {
        dir.kind = Directive::Kind::kAlarm;
      } else if (d.is_compound("dynamic", 1)) {
        dir.kind = Directive::Kind::kDynamic;
      } else {
        std::string what = d.is_callable() ? d.name() : "?";
        throw SyntaxError("unknown directive '" + what + "'", start.line, start.col);
      }
      collect_specs(d.arg(0), dir.indicators, start);
      prog.directives.push_back(std::move(dir));
      continue;
    }
    Clause c = Clause::from_term(t);
    if (!c.head.is_callable()) throw SyntaxError("clause head is not callable", start.line, start.col);
    if (c.body.is_int()) throw SyntaxError("clause body is not callable", start.line, start.col);
    prog.clauses.push_back(std::move(c));
  }
  return prog;
}

Term parse_term(std::string_view text) {
  Parser parser(text);
  parser.begin_clause();
  return parser.read_single_term(true);
}

void load_program(Database& db, const Program& p) {
  for (const Directive& d : p.directives) {
    for (const PredicateIndicator& ind : d.indicators) {
      switch (d.kind) {
        case Directive::Kind::kEvent: db.declare_event(ind); break;
        case Directive::Kind::kAlarm: db.declare_alarm(ind); break;
        case Directive::Kind::kDynamic: db.declare_dynamic(ind); break;
      }
    }
  }
  for (const Clause& c : p.clauses) db.consult(c);
}

Program dump_program(const Database& db) {
  Program p;
  Directive ev{Directive::Kind::kEvent, {}};
  Directive al{Directive::Kind::kAlarm, {}};
  Directive dy{Directive::Kind::kDynamic, {}};
  for (const PredicateIndicator& ind : db.indicators()) {
    PredicateFlags f = db.flags(ind);
    if (f.dynamic) dy.indicators.push_back(ind);
    if (f.event) ev.indicators.push_back(ind);
    if (f.alarm) al.indicators.push_back(ind);
    for (Clause& c : db.clauses(ind)) p.clauses.push_back(std::move(c));
  }
  for (Directive* d : {&dy, &ev, &al}) {
    if (!d->indicators.empty()) p.directives.push_back(std::move(*d));
  }
  return p;
}

// --- canonical serialization ---

namespace {

bool is_bare_atom(const std::string& s) {
  if (s.empty() || !(s[0] >= 'a' && s[0] <= 'z')) return false;
  for (char ch : s) {
    if (!is_ascii_alnum(ch)) return false;
  }
  return true;
}

void write_atom(const std::string& name, std::string& out) {
  if (name == kNil) {
    out += "[]";
    return;
  }
  if (is_bare_atom(name)) {
    out += name;
    return;
  }
  out.push_back('\'');
  for (char ch : name) {
    switch (ch) {
      case '\\': out += "\\\\"; break;
      case '\'': out += "\\'"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default: out.push_back(ch);
    }
  }
  out.push_back('\'');
}

void write_canonical(const Term& t, std::string& out, std::unordered_map<std::int64_t, std::int64_t>& vars) {
  switch (t.kind()) {
    case Term::Kind::kVar: {
      auto [it, inserted] = vars.emplace(t.var_id(), static_cast<std::int64_t>(vars.size()));
      out += "_G";
      out += std::to_string(it->second);
      return;
    }
    case Term::Kind::kInt:
      out += std::to_string(t.int_value());
      return;
    case Term::Kind::kAtom:
      write_atom(t.name(), out);
      return;
    case Term::Kind::kCompound:
      break;
  }
  if (t.is_compound(".", 2)) {
    out.push_back('[');
    const Term* cur = &t;
    bool first = true;
    while (cur->is_compound(".", 2)) {
      if (!first) out.push_back(',');
      first = false;
      write_canonical(cur->arg(0), out, vars);
      cur = &cur->arg(1);
    }
    if (!cur->is_atom(kNil)) {
      out.push_back('|');
      write_canonical(*cur, out, vars);
    }
    out.push_back(']');
    return;
  }
  if (t.name() == kNil) {
    out += "'[]'";
  } else {
    write_atom(t.name(), out);
  }
  out.push_back('(');
  for (std::size_t i = 0; i < t.arity(); ++i) {
    if (i) out.push_back(',');
    write_canonical(t.arg(i), out, vars);
  }
  out.push_back(')');
}

}  // namespace

std::string serialize(const Term& t) {
  std::string out;
  std::unordered_map<std::int64_t, std::int64_t> vars;
  write_canonical(t, out, vars);
  return out;
}

Term deserialize(std::string_view payload) {
  try {
    Parser parser(payload);
    parser.begin_clause();
    return parser.read_single_term(false);
  } catch (const SyntaxError& e) {
    throw DecodeError(std::string("malformed payload: ") + e.what());
  }
}

// --- human-readable formatting ---

namespace {

void write_readable(const Term& t, int max_priority, std::string& out,
                    std::unordered_map<std::int64_t, std::int64_t>& vars);

void write_readable_arg(const Term& t, std::string& out, std::unordered_map<std::int64_t, std::int64_t>& vars) {
  write_readable(t, 999, out, vars);
}

void write_readable(const Term& t, int max_priority, std::string& out,
                    std::unordered_map<std::int64_t, std::int64_t>& vars) {
  if (t.is_var()) {
    if (!t.var_name().empty() && t.var_name() != "_") {
      out += t.var_name();
    } else {
      auto [it, inserted] = vars.emplace(t.var_id(), static_cast<std::int64_t>(vars.size()));
      out += "_G" + std::to_string(it->second);
    }
    return;
  }
  if (!t.is_compound()) {
    std::unordered_map<std::int64_t, std::int64_t> none;
    write_canonical(t, out, none);
    return;
  }
  if (t.is_compound(".", 2)) {
    out.push_back('[');
    const Term* cur = &t;
    bool first = true;
    while (cur->is_compound(".", 2)) {
      if (!first) out += ", ";
      first = false;
      write_readable_arg(cur->arg(0), out, vars);
      cur = &cur->arg(1);
    }
    if (!cur->is_atom(kNil)) {
      out += "|";
      write_readable_arg(*cur, out, vars);
    }
    out.push_back(']');
    return;
  }
  if (t.arity() == 2) {
    auto it = infix_ops().find(t.name());
    if (it != infix_ops().end()) {
      const OpDef& op = it->second;
      int p = op.priority;
      int lmax = op.type == OpType::kYfx ? p : p - 1;
      int rmax = op.type == OpType::kXfy ? p : p - 1;
      bool paren = p > max_priority;
      if (paren) out.push_back('(');
      write_readable(t.arg(0), lmax, out, vars);
      if (t.name() == ",") {
        out += ", ";
      } else {
        out += " " + t.name() + " ";
      }
      write_readable(t.arg(1), rmax, out, vars);
      if (paren) out.push_back(')');
      return;
    }
  }
  if (t.arity() == 1) {
    auto it = prefix_ops().find(t.name());
    const Term& operand = t.arg(0);
    bool operand_is_op = operand.is_atom() && (infix_ops().count(operand.name()) || prefix_ops().count(operand.name()));
    if (it != prefix_ops().end() && t.name() != "-" && t.name() != "+" && !operand_is_op) {
      const OpDef& op = it->second;
      int p = op.priority;
      bool paren = p > max_priority;
      if (paren) out.push_back('(');
      out += t.name();
      out.push_back(' ');
      write_readable(t.arg(0), op.type == OpType::kFy ? p : p - 1, out, vars);
      if (paren) out.push_back(')');
      return;
    }
  }
  if (t.name() == kNil) {
    out += "'[]'";
  } else {
    write_atom(t.name(), out);
  }
  out.push_back('(');
  for (std::size_t i = 0; i < t.arity(); ++i) {
    if (i) out += ", ";
    write_readable_arg(t.arg(i), out, vars);
  }
  out.push_back(')');
}

}  // namespace

std::string format_term(const Term& t) {
  std::string out;
  std::unordered_map<std::int64_t, std::int64_t> vars;
  write_readable(t, 1200, out, vars);
  return out;
}

std::string format_clause(const Clause& c) { return format_term(c.to_term()) + "."; }

}  // namespace dahl
