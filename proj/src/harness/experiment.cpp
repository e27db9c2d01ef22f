#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "dahl/harness.hpp"

namespace dahl {

ChurnOptions parse_churn_spec(std::string_view spec) {
  ChurnOptions opt;
  std::size_t start = 0;
  while (start < spec.size()) {
    std::size_t comma = spec.find(',', start);
    std::string_view part = spec.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    auto eq = part.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument("churn spec entries are key=value: " + std::string(part));
    std::string_view key = part.substr(0, eq);
    SimTime v = parse_duration(part.substr(eq + 1));
    if (v <= 0) throw std::invalid_argument("churn durations must be positive");
    if (key == "session")
      opt.mean_session = v;
    else if (key == "duration")
      opt.duration = v;
    else if (key == "every")
      opt.lookup_every = v;
    else
      throw std::invalid_argument("unknown churn key " + std::string(key));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return opt;
}

ChordExperimentResult run_chord_experiment(const ChordExperimentOptions& opt) {
  if (opt.nodes < 1) throw std::invalid_argument("need at least one node");
  ChordExperimentResult res;
  SimNetwork net(opt.seed);
  ChordRing ring(net, opt.chord);
  res.quiesced = build_ring(ring, opt.nodes, opt.join_every, opt.max_settle);
  res.ring_consistent = ring.ring_consistent();
  res.hop_bound = opt.nodes <= 1 ? 0 : static_cast<std::int64_t>(std::ceil(std::log2(static_cast<double>(opt.nodes))));

  // Queries come from the harness RNG, separate from the network's.
  std::mt19937_64 rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::uint64_t> any_key(0, (std::uint64_t{1} << opt.chord.bits) - 1);
  std::vector<std::string> live = ring.live();
  std::uniform_int_distribution<std::size_t> pick(0, live.size() - 1);
  std::size_t agree = 0;
  for (int i = 0; i < opt.lookups; ++i) {
    std::string from = live[pick(rng)];
    LookupResult r = ring.lookup(from, any_key(rng));
    agree += r.consistent;
    res.max_hops = std::max(res.max_hops, r.hops);
    res.lookups.push_back(std::move(r));
  }
  res.agreement = opt.lookups > 0 ? static_cast<double>(agree) / opt.lookups : 1.0;
  if (opt.churn) res.churn = run_churn(ring, *opt.churn);
  return res;
}

namespace {

void write_lookup_rows(std::ostream& out, const std::string& phase, const std::vector<LookupResult>& ls) {
  for (const LookupResult& r : ls)
    out << phase << ',' << r.query << ',' << r.from << ',' << r.key << ',' << (r.answered ? r.owner : "") << ','
        << r.expected << ',' << r.hops << ',' << static_cast<double>(r.latency) / kMs << ',' << (r.answered ? 1 : 0)
        << ',' << (r.consistent ? 1 : 0) << '\n';
}

}  // namespace

void write_chord_csvs(const std::string& dir, const ChordExperimentOptions& opt, const ChordExperimentResult& r) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(fs::path(dir) / name);
    if (!f) throw std::runtime_error("cannot write " + (fs::path(dir) / name).string());
    return f;
  };

  {
    auto f = open("lookups.csv");
    f << "phase,query,from,key,owner,expected,hops,latency_ms,answered,consistent\n";
    write_lookup_rows(f, "static", r.lookups);
    if (r.churn) write_lookup_rows(f, "churn", r.churn->lookups);
  }
  {
    // Empirical CDF of answered static lookup latency.
    std::vector<double> lat;
    for (const LookupResult& l : r.lookups)
      if (l.answered) lat.push_back(static_cast<double>(l.latency) / kMs);
    std::sort(lat.begin(), lat.end());
    auto f = open("latency_cdf.csv");
    f << "latency_ms,fraction\n";
    for (std::size_t i = 0; i < lat.size(); ++i)
      if (i + 1 == lat.size() || lat[i + 1] != lat[i]) f << lat[i] << ',' << static_cast<double>(i + 1) / lat.size() << '\n';
  }
  {
    std::map<std::int64_t, std::size_t> hist;
    for (const LookupResult& l : r.lookups)
      if (l.answered) ++hist[l.hops];
    auto f = open("hops.csv");
    f << "hops,count\n";
    for (std::int64_t h = 0; h <= std::max<std::int64_t>(r.max_hops, 0); ++h) f << h << ',' << hist[h] << '\n';
  }
  {
    auto f = open("summary.csv");
    f << "metric,value\n"
      << "schema_version,1\n"
      << "nodes," << opt.nodes << "\n"
      << "seed," << opt.seed << "\n"
      << "quiesced," << (r.quiesced ? 1 : 0) << "\n"
      << "ring_consistent," << (r.ring_consistent ? 1 : 0) << "\n"
      << "lookups," << r.lookups.size() << "\n"
      << "agreement," << r.agreement << "\n"
      << "max_hops," << r.max_hops << "\n"
      << "hop_bound," << r.hop_bound << "\n";
    if (r.churn) {
      f << "churn_lookups," << r.churn->lookups.size() << "\n"
        << "churn_abandoned," << r.churn->abandoned << "\n"
        << "churn_kills," << r.churn->kills << "\n"
        << "churn_joins," << r.churn->joins << "\n"
        << "consistency," << r.churn->consistency() << "\n";
    } else {
      f << "consistency," << r.agreement << "\n";
    }
  }
}

}  // namespace dahl
