// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
// and exits nonzero when any fails. Artifacts go to the directory given as
// the first argument (default: acceptance_out).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "dahl/harness.hpp"
#include "dahl/protocols.hpp"
#include "support/properties.hpp"

using namespace dahl;
namespace fs = std::filesystem;

namespace {

// Pinned thresholds.
constexpr int kDatalogPrograms = 200;
constexpr double kDatalogBudgetS = 30;
constexpr int kTreeGraphs = 50;
constexpr int kTreeMaxNodes = 100;
constexpr double kTreeBudgetS = 10;
constexpr int kChordLookups = 1000;
constexpr double kChordStaticBudgetS = 120;
constexpr int kChurnNodes = 64;
constexpr SimTime kChurnSession = 250'000 * kMs;  // 50 stabilization periods
constexpr double kChurnConsistency = 0.90;
constexpr double kChurnBudgetS = 120;
constexpr int kZyzzyvaRequests = 100;
constexpr double kZyzzyvaBudgetS = 60;
constexpr int kFuzzTerms = 10'000;
constexpr int kSignCases = 1000;
constexpr double kPropertyBudgetS = 30;
constexpr double kBenchSeconds = 10;
constexpr int kBenchConnections = 4;
constexpr double kBenchFloor = 1000;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome engine_oracle() {
  auto t0 = std::chrono::steady_clock::now();
  auto r = dahl::testing::check_datalog(20241, kDatalogPrograms);
  double s = seconds_since(t0);
  return {r.programs == kDatalogPrograms && r.set_mismatches == 0 && r.order_mismatches == 0 && s < kDatalogBudgetS,
          fmt("%d programs, %d queries, %d set mismatches, %d order mismatches, %.1fs (limit %.0fs)", r.programs,
              r.queries, r.set_mismatches, r.order_mismatches, s, kDatalogBudgetS)};
}

Outcome spanning_tree() {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(77);
  int bad = 0, dup_bad = 0, largest = 0;
  std::string first;
  for (int i = 0; i < kTreeGraphs; ++i) {
    int n = std::uniform_int_distribution<int>(1, kTreeMaxNodes)(rng);
    int extra = std::uniform_int_distribution<int>(0, n)(rng);
    largest = std::max(largest, n);
    Graph g = random_connected_graph(rng, n, extra);
    auto run = [&](int kicks) {
      SimNetwork net(1000 + i);
      add_spanning_tree_nodes(net, g);
      for (int k = 0; k < kicks; ++k)
        net.inject("n0", Envelope{"n0", serialize(parse_term("span_tree(n0, n0)")), std::nullopt, Origin::kNetwork});
      net.run_to_quiescence();
      std::vector<std::string> dups;
      auto parents = extract_tree(net, "n0", &dups);
      if (!dups.empty()) parents.clear();  // fails the checker below
      return parents;
    };
    auto once = run(1);
    if (auto why = check_spanning_tree(g, "n0", once)) {
      ++bad;
      if (first.empty()) first = *why;
    }
    if (run(2) != once) ++dup_bad;
  }
  double s = seconds_since(t0);
  return {bad == 0 && dup_bad == 0 && s < kTreeBudgetS,
          fmt("%d graphs (largest %d nodes), %d invalid trees, %d duplicate-kickoff differences, %.1fs (limit %.0fs)%s",
              kTreeGraphs, largest, bad, dup_bad, s, kTreeBudgetS, first.empty() ? "" : ("; " + first).c_str())};
}

Outcome chord_static(const fs::path& out) {
  auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  for (int n : {16, 64, 128}) {
    ChordExperimentOptions opt;
    opt.nodes = n;
    opt.lookups = kChordLookups;
    opt.seed = static_cast<std::uint64_t>(n);
    ChordExperimentResult r = run_chord_experiment(opt);
    write_chord_csvs((out / ("chord_n" + std::to_string(n))).string(), opt, r);
    bool cdf = fs::exists(out / ("chord_n" + std::to_string(n)) / "latency_cdf.csv");
    bool pass = r.quiesced && r.agreement == 1.0 && r.max_hops <= r.hop_bound && cdf;
    ok = ok && pass;
    detail += fmt("N=%d agreement %.4f max hops %lld (bound %lld)%s; ", n, r.agreement,
                  static_cast<long long>(r.max_hops), static_cast<long long>(r.hop_bound), r.quiesced ? "" : " not quiesced");
  }
  double s = seconds_since(t0);
  return {ok && s < kChordStaticBudgetS, detail + fmt("%.1fs (limit %.0fs), CDFs in %s", s, kChordStaticBudgetS, out.c_str())};
}

Outcome chord_churn(const fs::path& out) {
  auto t0 = std::chrono::steady_clock::now();
  ChordExperimentOptions opt;
  opt.nodes = kChurnNodes;
  opt.lookups = 0;
  opt.seed = 64;
  opt.churn = ChurnOptions{.mean_session = kChurnSession};
  ChordExperimentResult r = run_chord_experiment(opt);
  write_chord_csvs((out / "chord_churn").string(), opt, r);
  double c = r.churn->consistency();
  double s = seconds_since(t0);
  return {r.quiesced && c >= kChurnConsistency && s < kChurnBudgetS,
          fmt("N=%d session %.0fs: consistency %.4f (floor %.2f) over %zu lookups, %zu abandoned, %zu kills, %.1fs "
              "(limit %.0fs)",
              kChurnNodes, static_cast<double>(kChurnSession) / 1e6, c, kChurnConsistency, r.churn->lookups.size(),
              r.churn->abandoned, r.churn->kills, s, kChurnBudgetS)};
}

Outcome zyzzyva() {
  auto t0 = std::chrono::steady_clock::now();
  bool ok = true;
  std::string detail;
  auto request = [](int i) { return parse_term("op(" + std::to_string(i) + ")"); };
  for (int batch : {1, 4}) {
    SimNetwork net(static_cast<std::uint64_t>(batch));
    ZyzzyvaCluster z(net, ZyzzyvaOptions{.batch_size = batch});
    for (int i = 0; i < kZyzzyvaRequests; ++i) z.submit(request(i));
    z.run();
    int committed = 0;
    for (int i = 0; i < kZyzzyvaRequests; ++i) {
      auto st = z.status(request(i));
      committed += st.committed && st.best_match == 4 && !st.conflicting && st.output && *st.output == request(i);
    }
    std::int64_t before = 0, after = 0;
    for (const auto& r : z.replicas()) before += z.computations(r);
    z.replay_process_envelopes();
    z.run();
    for (const auto& r : z.replicas()) after += z.computations(r);

    SimNetwork tnet(static_cast<std::uint64_t>(batch));
    ZyzzyvaCluster tz(tnet, ZyzzyvaOptions{.batch_size = batch, .tampered_replica = 3});
    for (int i = 0; i < kZyzzyvaRequests; ++i) tz.submit(request(i));
    tz.run();
    int tampered_commits = 0, wrong = 0;
    for (int i = 0; i < kZyzzyvaRequests; ++i) {
      auto st = tz.status(request(i));
      tampered_commits += st.committed;
      wrong += st.committed && !(st.output && *st.output == request(i));
    }
    bool pass = committed == kZyzzyvaRequests && before == 4 * kZyzzyvaRequests && after == before &&
                tampered_commits == 0 && wrong == 0;
    ok = ok && pass;
    detail += fmt("batch %d: %d/%d committed with 4 matching, recomputations on replay %lld, tampered commits %d, "
                  "wrong commits %d; ",
                  batch, committed, kZyzzyvaRequests, static_cast<long long>(after - before), tampered_commits, wrong);
  }
  double s = seconds_since(t0);
  return {ok && s < kZyzzyvaBudgetS, detail + fmt("%.1fs (limit %.0fs)", s, kZyzzyvaBudgetS)};
}

Outcome properties() {
  auto t0 = std::chrono::steady_clock::now();
  int rt = dahl::testing::round_trip_failures(99, kFuzzTerms);
  int sv = dahl::testing::sign_verify_failures(99, kSignCases);
  double s = seconds_since(t0);
  return {rt == 0 && sv == 0 && s < kPropertyBudgetS,
          fmt("%d round trips with %d failures, %d sign/verify cases with %d failures, %.1fs (limit %.0fs)", kFuzzTerms,
              rt, kSignCases, sv, s, kPropertyBudgetS)};
}

Outcome determinism(const fs::path& out) {
  bool ok = true;
  std::string detail;
  for (const char* name : {"spanning_tree", "zyzzyva"}) {
    Scenario sc = Scenario::load(std::string(DAHL_SOURCE_DIR) + "/scenarios/" + name + ".scn");
    std::string texts[2];
    for (int k = 0; k < 2; ++k) {
      fs::path p = out / (std::string(name) + ".trace" + std::to_string(k));
      {
        std::ofstream f(p, std::ios::binary);
        sc.run(std::nullopt, [&](const TraceRecord& r) { f << trace_line(r) << '\n'; });
      }
      std::ifstream f(p, std::ios::binary);
      std::ostringstream ss;
      ss << f.rdbuf();
      texts[k] = ss.str();
    }
    bool same = !texts[0].empty() && texts[0] == texts[1];
    ok = ok && same;
    detail += fmt("%s: %zu bytes %s; ", name, texts[0].size(), same ? "identical" : "DIFFER");
  }
  return {ok, detail};
}

Outcome bench() {
  BenchReport r = bench_loopback(kBenchConnections, kBenchSeconds);
  return {r.requests_per_second >= kBenchFloor && r.protocol_errors == 0,
          fmt("%.0f req/s over %.1fs (floor %.0f), %llu protocol errors, %llu lost", r.requests_per_second, r.seconds,
              kBenchFloor, static_cast<unsigned long long>(r.protocol_errors), static_cast<unsigned long long>(r.lost))};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = argc > 1 ? argv[1] : "acceptance_out";
  fs::create_directories(out);
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {1, "engine matches fixpoint and depth-first reference", engine_oracle},
      {2, "spanning tree invariants and idempotence", spanning_tree},
      {3, "chord static lookups", [&] { return chord_static(out); }},
      {4, "chord lookup consistency under churn", [&] { return chord_churn(out); }},
      {5, "zyzzyva single-phase commit, cache and tamper", zyzzyva},
      {6, "serialization and MAC properties", properties},
      {7, "deterministic scenario traces", [&] { return determinism(out); }},
      {8, "loopback ping-pong throughput", bench},
  };
  int failed = 0;
  for (const Criterion& c : all) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
