#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "dahl/assets.hpp"
#include "dahl/harness.hpp"

namespace dahl {

namespace fs = std::filesystem;

ScenarioError::ScenarioError(int line, const std::string& msg)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}

SimTime parse_duration(std::string_view text) {
  std::size_t i = 0;
  while (i < text.size() && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.')) ++i;
  if (i == 0) throw std::invalid_argument("bad duration: " + std::string(text));
  double v;
  try {
    v = std::stod(std::string(text.substr(0, i)));
  } catch (const std::exception&) {
    throw std::invalid_argument("bad duration: " + std::string(text));
  }
  std::string_view unit = text.substr(i);
  double scale;
  if (unit.empty() || unit == "ms")
    scale = kMs;
  else if (unit == "us")
    scale = 1;
  else if (unit == "s")
    scale = 1000 * kMs;
  else
    throw std::invalid_argument("bad duration unit: " + std::string(text));
  return static_cast<SimTime>(std::llround(v * scale));
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Words of a line with their offsets.
std::vector<std::pair<std::size_t, std::string>> split_words(const std::string& line) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i >= line.size()) break;
    std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    out.emplace_back(start, line.substr(start, i - start));
  }
  return out;
}

bool compare(double a, const std::string& op, double b) {
  if (op == "==") return a == b;
  if (op == "!=") return a != b;
  if (op == "<") return a < b;
  if (op == "<=") return a <= b;
  if (op == ">") return a > b;
  if (op == ">=") return a >= b;
  throw std::invalid_argument("unknown comparison " + op);
}

bool is_comparison(const std::string& op) {
  static const std::set<std::string> ops{"==", "!=", "<", "<=", ">", ">="};
  return ops.count(op) > 0;
}

std::map<std::string, double> metric_values(const SimNetwork& net) {
  const SimMetrics& s = net.metrics();
  NodeMetrics n = net.node_metrics();
  return {
      {"time_ms", static_cast<double>(net.now()) / kMs},
      {"accepted", double(s.accepted)},
      {"delivered", double(s.delivered)},
      {"dropped", double(s.dropped)},
      {"dead_letters", double(s.dead_letters)},
      {"link_errors", double(s.link_errors)},
      {"alarms", double(s.alarms)},
      {"dispatched", double(n.dispatched)},
      {"handled_ok", double(n.handled_ok)},
      {"failures", double(n.failures)},
      {"errors", double(n.errors)},
      {"discarded", double(n.discarded)},
      {"decode_errors", double(n.decode_errors)},
      {"sends_ok", double(n.sends_ok)},
      {"sends_failed", double(n.sends_failed)},
      {"missing_keys", double(n.missing_keys)},
      {"mac_verifications", double(n.mac_verifications)},
  };
}

using Pair = std::pair<std::string, std::string>;

struct NodeDecl {
  int line;
  NodeConfig cfg;
};

class Runner {
 public:
  Runner(const std::string& base, std::uint64_t seed) : base_(base), net_(seed) {
    net_.links().latency = [this](const std::string& a, const std::string& b, std::mt19937_64&) {
      auto it = latency_.find({a, b});
      return it != latency_.end() ? it->second : default_latency_;
    };
    net_.links().drop = [this](const std::string& a, const std::string& b) {
      auto it = drop_.find({a, b});
      return it != drop_.end() ? it->second : default_drop_;
    };
  }

  SimNetwork& net() { return net_; }
  ScenarioResult& result() { return result_; }

  void exec(const Scenario::Statement& st);
  void finish() {
    start_nodes();
    result_.end = net_.now();
    result_.sim = net_.metrics();
    result_.nodes = net_.node_metrics();
  }

 private:
  std::string path(const std::string& p) const { return fs::path(p).is_absolute() ? p : (fs::path(base_) / p).string(); }

  Program load_programs(int line, const std::string& spec) {
    Program out;
    std::size_t start = 0;
    while (start <= spec.size()) {
      std::size_t plus = spec.find('+', start);
      std::string part = spec.substr(start, plus == std::string::npos ? std::string::npos : plus - start);
      if (auto asset = find_asset(part)) {
        out.append(parse_program(*asset));
      } else if (fs::exists(path(part))) {
        out.append(parse_program(read_file(path(part))));
      } else {
        throw ScenarioError(line, "unknown program " + part);
      }
      if (plus == std::string::npos) break;
      start = plus + 1;
    }
    return out;
  }

  std::shared_ptr<const KeyStore> load_keys(int line, const std::string& file) {
    auto it = key_files_.find(file);
    if (it != key_files_.end()) return it->second;
    try {
      auto ks = std::make_shared<const KeyStore>(KeyStore::load(path(file)));
      key_files_[file] = ks;
      return ks;
    } catch (const std::exception& e) {
      throw ScenarioError(line, e.what());
    }
  }

  void start_nodes() {
    for (NodeDecl& d : pending_) {
      if (!d.cfg.keys) d.cfg.keys = global_keys_;
      try {
        net_.add_node(std::move(d.cfg));
      } catch (const std::invalid_argument& e) {
        throw ScenarioError(d.line, e.what());
      }
    }
    pending_.clear();
  }

  NodeConfig* find_pending(const std::string& name) {
    for (NodeDecl& d : pending_)
      if (d.cfg.address == name) return &d.cfg;
    return nullptr;
  }

  Node& node(int line, const std::string& name) {
    start_nodes();
    Node* n = net_.node(name);
    if (!n) throw ScenarioError(line, "unknown node " + name);
    return *n;
  }

  void fail(const Scenario::Statement& st, std::string detail) {
    result_.failures.push_back({st.line, st.text, std::move(detail)});
  }

  void check(const Scenario::Statement& st);

  std::string base_;
  SimNetwork net_;
  ScenarioResult result_;
  std::vector<NodeDecl> pending_;
  std::map<std::string, std::shared_ptr<const KeyStore>> key_files_;
  std::map<std::string, std::shared_ptr<const KeyStore>> node_keys_;
  std::shared_ptr<const KeyStore> global_keys_;
  std::map<Pair, SimTime> latency_;
  std::map<Pair, double> drop_;
  std::map<Pair, std::string> tamper_;
  SimTime default_latency_ = kMs;
  double default_drop_ = 0;
};

void Runner::exec(const Scenario::Statement& st) {
  const auto& w = st.words;
  const std::string& kw = w[0];
  auto need = [&](std::size_t n) {
    if (w.size() != n) throw ScenarioError(st.line, "wrong number of arguments for " + kw);
  };
  try {
    if (kw == "seed") {
      // Handled at parse time.
    } else if (kw == "keys") {
      need(2);
      global_keys_ = load_keys(st.line, w[1]);
    } else if (kw == "node") {
      if (w.size() < 3) throw ScenarioError(st.line, "node needs a name and program=");
      NodeDecl d{st.line, {}};
      d.cfg.address = w[1];
      bool has_program = false;
      for (std::size_t i = 2; i < w.size(); ++i) {
        const std::string& o = w[i];
        auto eq = o.find('=');
        std::string key = o.substr(0, eq), val = eq == std::string::npos ? "" : o.substr(eq + 1);
        if (key == "program") {
          d.cfg.program = load_programs(st.line, val);
          has_program = true;
        } else if (key == "facts") {
          Program facts = parse_program(read_file(path(val)));
          for (const Clause& c : facts.clauses) d.cfg.facts.push_back(c);
        } else if (key == "keys") {
          d.cfg.keys = load_keys(st.line, val);
        } else if (key == "policy") {
          d.cfg.policy = parse_send_policy(val);
        } else if (key == "debug" && eq == std::string::npos) {
          d.cfg.debug_endpoint = true;
        } else {
          throw ScenarioError(st.line, "unknown node option " + o);
        }
      }
      if (!has_program) throw ScenarioError(st.line, "node needs program=");
      if (d.cfg.keys) node_keys_[d.cfg.address] = d.cfg.keys;
      pending_.push_back(std::move(d));
    } else if (kw == "fact") {
      need(2);
      NodeConfig* cfg = find_pending(w[1]);
      if (!cfg) throw ScenarioError(st.line, "fact for a node that is not declared or already started: " + w[1]);
      cfg->facts.push_back(Clause::from_term(parse_term(st.rest)));
    } else if (kw == "latency" || kw == "drop") {
      if (w.size() != 2 && w.size() != 4) throw ScenarioError(st.line, "usage: " + kw + " [FROM TO] VALUE");
      const std::string& v = w.back();
      if (kw == "latency") {
        SimTime d = parse_duration(v);
        if (w.size() == 2) default_latency_ = d;
        else latency_[{w[1], w[2]}] = d;
      } else {
        double p = std::stod(v);
        if (p < 0 || p > 1) throw ScenarioError(st.line, "drop probability must be in [0, 1]");
        if (w.size() == 2) default_drop_ = p;
        else drop_[{w[1], w[2]}] = p;
      }
    } else if (kw == "tamper") {
      if (w.size() != 3 && w.size() != 4) throw ScenarioError(st.line, "usage: tamper FROM TO [mac|payload]");
      std::string mode = w.size() == 4 ? w[3] : "mac";
      if (mode != "mac" && mode != "payload") throw ScenarioError(st.line, "tamper mode must be mac or payload");
      tamper_[{w[1], w[2]}] = mode;
      net_.links().corrupt = [this](const std::string& a, const std::string& b, std::string& frame) {
        auto it = tamper_.find({a, b});
        if (it == tamper_.end()) return;
        if (it->second == "mac") flip_mac_byte(frame);
        else if (frame.size() > 5) frame.back() = static_cast<char>(frame.back() ^ 1);
      };
    } else if (kw == "inject") {
      if (w.size() < 3) throw ScenarioError(st.line, "usage: inject AT NODE [from=S] [signed] TERM");
      SimTime at = parse_duration(w[1]);
      std::string from = "driver";
      bool sign_it = false;
      for (std::size_t i = 3; i < w.size(); ++i) {
        if (w[i].starts_with("from=")) from = w[i].substr(5);
        else if (w[i] == "signed") sign_it = true;
      }
      start_nodes();
      if (!net_.has_node(w[2])) throw ScenarioError(st.line, "unknown node " + w[2]);
      Envelope env{from, serialize(parse_term(st.rest)), std::nullopt, Origin::kNetwork};
      if (sign_it) {
        auto it = node_keys_.find(from);
        auto ks = it != node_keys_.end() ? it->second : global_keys_;
        if (!ks) throw ScenarioError(st.line, "no keys to sign as " + from);
        try {
          env.signature = sign(*ks, from, w[2], from, env.payload);
        } catch (const MissingKeyError& e) {
          throw ScenarioError(st.line, e.what());
        }
      }
      net_.inject(w[2], std::move(env), std::max(at, net_.now()));
    } else if (kw == "run") {
      start_nodes();
      if (w.size() == 1) {
        net_.run_to_quiescence();
      } else {
        need(2);
        net_.run_until(std::max(parse_duration(w[1]), net_.now()));
      }
    } else if (kw == "advance") {
      need(2);
      start_nodes();
      net_.run_until(net_.now() + parse_duration(w[1]));
    } else if (kw == "assert") {
      start_nodes();
      ++result_.assertions;
      check(st);
    } else if (kw == "print") {
      start_nodes();
      if (w.size() == 2 && w[1] == "metrics" && st.rest.empty()) {
        for (const auto& [k, v] : metric_values(net_)) {
          std::ostringstream line;
          line << k << " " << v;
          result_.output.push_back(line.str());
        }
      } else {
        need(2);
        Node& n = node(st.line, w[1]);
        Term goal = parse_term(st.rest);
        for (const Substitution& s : solve_all(goal, n.database(), {}, &n))
          result_.output.push_back(w[1] + ": " + format_term(dahl::apply(s, goal)));
      }
    } else {
      throw ScenarioError(st.line, "unknown statement " + kw);
    }
  } catch (const ScenarioError&) {
    throw;
  } catch (const SyntaxError& e) {
    throw ScenarioError(st.line, e.what());
  } catch (const std::exception& e) {
    throw ScenarioError(st.line, e.what());
  }
}

void Runner::check(const Scenario::Statement& st) {
  const auto& w = st.words;
  if (w.size() < 2) throw ScenarioError(st.line, "empty assertion");
  const std::string& kind = w[1];
  if (kind == "holds" || kind == "absent") {
    if (w.size() != 3) throw ScenarioError(st.line, "usage: assert " + kind + " NODE GOAL");
    Node& n = node(st.line, w[2]);
    SolveOutcome out = solve_first(parse_term(st.rest), n.database(), {}, &n);
    if (out.status == SolveOutcome::Status::kError)
      fail(st, std::string("goal raised ") + out.error->what());
    else if (out.ok() != (kind == "holds"))
      fail(st, kind == "holds" ? "goal has no solution at " + w[2] : "goal has a solution at " + w[2]);
  } else if (kind == "count") {
    if (w.size() != 5 || !is_comparison(w[3])) throw ScenarioError(st.line, "usage: assert count NODE OP N GOAL");
    Node& n = node(st.line, w[2]);
    std::size_t got = solve_all(parse_term(st.rest), n.database(), {}, &n).size();
    if (!compare(double(got), w[3], std::stod(w[4]))) fail(st, "count is " + std::to_string(got));
  } else if (kind == "metric") {
    if (w.size() != 5 || !is_comparison(w[3])) throw ScenarioError(st.line, "usage: assert metric NAME OP VALUE");
    auto values = metric_values(net_);
    auto it = values.find(w[2]);
    if (it == values.end()) throw ScenarioError(st.line, "unknown metric " + w[2]);
    if (!compare(it->second, w[3], std::stod(w[4]))) {
      std::ostringstream d;
      d << w[2] << " is " << it->second;
      fail(st, d.str());
    }
  } else if (kind == "spanning_tree") {
    if (w.size() != 3) throw ScenarioError(st.line, "usage: assert spanning_tree ROOT");
    Graph g;
    for (const std::string& a : net_.addresses()) {
      g[a];
      for (const Clause& c : net_.node(a)->database().clauses({"neighbor", 1}))
        if (c.head.arg(0).is_atom()) {
          g[a].insert(c.head.arg(0).name());
          g[c.head.arg(0).name()].insert(a);
        }
    }
    std::vector<std::string> dups;
    auto parents = extract_tree(net_, w[2], &dups);
    if (!dups.empty()) fail(st, "several tree facts at " + dups.front());
    else if (auto bad = check_spanning_tree(g, w[2], parents)) fail(st, *bad);
  } else {
    throw ScenarioError(st.line, "unknown assertion " + kind);
  }
}

// Number of leading words before the trailing term, or npos when the
// statement has no term.
std::size_t fixed_words(const std::vector<std::pair<std::size_t, std::string>>& w) {
  const std::string& kw = w[0].second;
  if (kw == "fact") return 2;
  if (kw == "inject") {
    std::size_t n = std::min<std::size_t>(3, w.size());
    while (n < w.size() && (w[n].second.starts_with("from=") || w[n].second == "signed")) ++n;
    return n;
  }
  if (kw == "assert" && w.size() >= 2) {
    if (w[1].second == "holds" || w[1].second == "absent") return 3;
    if (w[1].second == "count") return 5;
  }
  if (kw == "print" && w.size() >= 2 && w[1].second != "metrics") return 2;
  return std::string::npos;
}

}  // namespace

Scenario Scenario::parse(std::string_view text, std::string base_dir) {
  Scenario sc;
  sc.base_dir_ = std::move(base_dir);
  std::istringstream in{std::string(text)};
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto words = split_words(line);
    if (words.empty() || words[0].second.starts_with('#') || words[0].second.starts_with('%')) continue;
    Statement st;
    st.line = no;
    st.text = line.substr(words[0].first);
    std::size_t n = fixed_words(words);
    if (n != std::string::npos && n < words.size()) {
      for (std::size_t i = 0; i < n; ++i) st.words.push_back(words[i].second);
      st.rest = line.substr(words[n].first);
      // Validate the term now so errors surface before running.
      try {
        parse_term(st.rest);
      } catch (const SyntaxError& e) {
        throw ScenarioError(no, e.what());
      }
    } else if (n != std::string::npos) {
      throw ScenarioError(no, "missing term");
    } else {
      for (const auto& [_, word] : words) st.words.push_back(word);
    }
    static const std::set<std::string> keywords = {"seed", "keys",  "node",    "fact",   "latency", "drop", "tamper",
                                                   "inject", "run", "advance", "assert", "print"};
    if (!keywords.count(st.words[0])) throw ScenarioError(no, "unknown statement " + st.words[0]);
    if (st.words[0] == "seed") {
      if (st.words.size() != 2) throw ScenarioError(no, "usage: seed N");
      try {
        sc.seed_ = std::stoull(st.words[1]);
      } catch (const std::exception&) {
        throw ScenarioError(no, "bad seed");
      }
    }
    sc.statements_.push_back(std::move(st));
  }
  return sc;
}

Scenario Scenario::load(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ScenarioError(0, e.what());
  }
  return parse(text, fs::path(path).parent_path().string());
}

ScenarioResult Scenario::run(std::optional<std::uint64_t> seed, std::function<void(const TraceRecord&)> trace) const {
  Runner r(base_dir_.empty() ? "." : base_dir_, seed.value_or(seed_));
  if (trace) r.net().set_trace_sink(std::move(trace));
  for (const Statement& st : statements_) r.exec(st);
  r.finish();
  return r.result();
}

void write_metrics_csv(std::ostream& out, const ScenarioResult& r) {
  const SimMetrics& s = r.sim;
  const NodeMetrics& n = r.nodes;
  out << "metric,value\n"
      << "schema_version,1\n"
      << "end_time_ms," << static_cast<double>(r.end) / kMs << "\n"
      << "assertions," << r.assertions << "\n"
      << "assertion_failures," << r.failures.size() << "\n"
      << "accepted," << s.accepted << "\n"
      << "delivered," << s.delivered << "\n"
      << "dropped," << s.dropped << "\n"
      << "dead_letters," << s.dead_letters << "\n"
      << "link_errors," << s.link_errors << "\n"
      << "alarms," << s.alarms << "\n"
      << "dispatched," << n.dispatched << "\n"
      << "handled_ok," << n.handled_ok << "\n"
      << "handler_failures," << n.failures << "\n"
      << "handler_errors," << n.errors << "\n"
      << "discarded," << n.discarded << "\n"
      << "decode_errors," << n.decode_errors << "\n"
      << "sends_ok," << n.sends_ok << "\n"
      << "sends_failed," << n.sends_failed << "\n"
      << "missing_keys," << n.missing_keys << "\n"
      << "mac_verifications," << n.mac_verifications << "\n";
}

}  // namespace dahl
