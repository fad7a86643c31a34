#include "hvsto/leakage.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "hvsto/types.hpp"
#include "json.hpp"

namespace hvsto {

void LeakageScenario::validate() const {
  if (N == 0 || n == 0 || n > N) {
    throw Error(ErrorCode::kInvalidArgument,
                fmt::format("need 1 <= n <= N, got n={} N={}", n, N));
  }
  if (s == 0) throw Error(ErrorCode::kInvalidArgument, "block size must be at least 1 byte");
}

std::uint64_t required_blocks(std::uint64_t l, std::uint64_t s) {
  if (l == 0 || s == 0) {
    throw Error(ErrorCode::kInvalidArgument, "file and block sizes must be at least 1 byte");
  }
  return (l + s - 1) / s;
}

double leak_probability(std::uint64_t l, std::uint64_t s, std::uint64_t n, std::uint64_t N) {
  LeakageScenario{N, n, s, std::nullopt}.validate();
  const auto k = required_blocks(l, s);
  if (n == N) return 1.0;
  return std::pow(static_cast<double>(n) / static_cast<double>(N), static_cast<double>(k));
}

std::uint64_t total_bytes(const std::vector<TraceRecord>& trace) {
  std::uint64_t sum = 0;
  for (const auto& r : trace) sum += r.size;
  return sum;
}

LeakageReport expected_leakage(const std::vector<TraceRecord>& trace,
                               const LeakageScenario& scenario, bool per_record) {
  scenario.validate();
  if (trace.empty()) throw Error(ErrorCode::kInvalidArgument, "trace is empty");
  LeakageReport rep;
  rep.scenario = scenario;
  if (per_record) rep.p.reserve(trace.size());
  // Files of equal block count share p; summing per count keeps the sum exact
  // in integers until the final multiply.
  std::map<std::uint64_t, std::uint64_t> bytes_by_blocks;
  for (const auto& r : trace) {
    const auto k = required_blocks(r.size, scenario.s);
    bytes_by_blocks[k] += r.size;
    rep.total_bytes += r.size;
    if (per_record) rep.p.push_back(leak_probability(r.size, scenario.s, scenario.n, scenario.N));
  }
  double p_total = 0.0;
  for (const auto& [k, bytes] : bytes_by_blocks) {
    const double p = scenario.n == scenario.N
                         ? 1.0
                         : std::pow(static_cast<double>(scenario.n) /
                                        static_cast<double>(scenario.N),
                                    static_cast<double>(k));
    p_total += p * static_cast<double>(bytes);
  }
  rep.expected_bytes = p_total;
  rep.ratio = p_total / static_cast<double>(rep.total_bytes);
  return rep;
}

std::string LeakageReport::to_json() const {
  nlohmann::json j;
  j["scenario"] = {{"N", scenario.N}, {"n", scenario.n}, {"s", scenario.s}};
  if (scenario.M) j["scenario"]["M"] = *scenario.M;
  j["expected_bytes"] = expected_bytes;
  j["total_bytes"] = total_bytes;
  j["ratio"] = ratio;
  if (!p.empty()) j["p"] = p;
  return j.dump();
}

namespace {

struct TrialSums {
  unsigned __int128 sum = 0;
  unsigned __int128 sum_sq = 0;
};

void run_trials(const std::vector<TraceRecord>& trace, const std::vector<std::uint64_t>& blocks,
                const LeakageScenario& sc, std::uint64_t first, std::uint64_t last,
                std::uint64_t seed, TrialSums& out) {
  std::vector<std::uint64_t> nodes(sc.N);
  std::vector<std::uint8_t> compromised(sc.N);
  for (std::uint64_t t = first; t < last; ++t) {
    std::mt19937_64 rng(mix64(seed ^ mix64(t)));
    // Partial Fisher-Yates picks n distinct compromised nodes.
    std::iota(nodes.begin(), nodes.end(), 0);
    std::fill(compromised.begin(), compromised.end(), 0);
    for (std::uint64_t i = 0; i < sc.n; ++i) {
      const auto j = i + static_cast<std::uint64_t>(
                             (static_cast<unsigned __int128>(rng()) * (sc.N - i)) >> 64);
      std::swap(nodes[i], nodes[j]);
      compromised[nodes[i]] = 1;
    }
    std::uint64_t leaked = 0;
    for (std::size_t f = 0; f < trace.size(); ++f) {
      bool all = true;
      if (sc.n < sc.N) {
        for (std::uint64_t b = 0; b < blocks[f]; ++b) {
          const auto node =
              static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * sc.N) >> 64);
          if (!compromised[node]) {
            all = false;
            break;
          }
        }
      }
      if (all) leaked += trace[f].size;
    }
    out.sum += leaked;
    out.sum_sq += static_cast<unsigned __int128>(leaked) * leaked;
  }
}

}  // namespace

MonteCarloEstimate monte_carlo_leakage(const std::vector<TraceRecord>& trace,
                                       const LeakageScenario& scenario, std::uint64_t trials,
                                       std::uint64_t seed, unsigned threads) {
  scenario.validate();
  if (trace.empty()) throw Error(ErrorCode::kInvalidArgument, "trace is empty");
  if (trials == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one trial");
  std::vector<std::uint64_t> blocks;
  blocks.reserve(trace.size());
  for (const auto& r : trace) blocks.push_back(required_blocks(r.size, scenario.s));

  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(trials)));
  std::vector<TrialSums> sums(threads);
  if (threads == 1) {
    run_trials(trace, blocks, scenario, 0, trials, seed, sums[0]);
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) {
      const auto first = trials * i / threads;
      const auto last = trials * (i + 1) / threads;
      pool.emplace_back(run_trials, std::cref(trace), std::cref(blocks), std::cref(scenario),
                        first, last, seed, std::ref(sums[i]));
    }
    for (auto& t : pool) t.join();
  }
  TrialSums all;
  for (const auto& s : sums) {
    all.sum += s.sum;
    all.sum_sq += s.sum_sq;
  }
  MonteCarloEstimate est;
  est.trials = trials;
  est.total_bytes = total_bytes(trace);
  const double T = static_cast<double>(trials);
  est.mean_bytes = static_cast<double>(all.sum) / T;
  if (trials > 1) {
    // Sample variance from exact integer moments.
    const auto num = static_cast<double>(all.sum_sq * trials - all.sum * all.sum);
    const double var = num / (T * (T - 1.0));
    est.stderr_bytes = std::sqrt(std::max(0.0, var) / T);
  }
  est.ratio = est.mean_bytes / static_cast<double>(est.total_bytes);
  return est;
}

std::vector<TraceRecord> parse_trace(const std::string& text) {
  std::vector<TraceRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw Error(ErrorCode::kParse, fmt::format("line {}: expected name,size_bytes", lineno));
    }
    const std::string_view field(line.data() + comma + 1, line.size() - comma - 1);
    std::uint64_t size = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), size);
    if (ec != std::errc() || ptr != field.data() + field.size() || field.empty()) {
      throw Error(ErrorCode::kParse,
                  fmt::format("line {}: size '{}' is not a non-negative integer", lineno, field));
    }
    if (size == 0) {
      throw Error(ErrorCode::kParse, fmt::format("line {}: size must be at least 1", lineno));
    }
    out.push_back(TraceRecord{line.substr(0, comma), size});
  }
  if (out.empty()) throw Error(ErrorCode::kInvalidArgument, "trace is empty");
  return out;
}

std::vector<TraceRecord> load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, fmt::format("cannot open {}", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trace(buf.str());
}

namespace {

class SizeSampler {
 public:
  explicit SizeSampler(const SyntheticTraceOptions& opt)
      : rng_(opt.seed), dist_(opt.log_mean, opt.log_sigma), max_(opt.max_size) {}
  std::uint64_t next() {
    const double x = std::round(dist_(rng_));
    if (!(x >= 1.0)) return 1;
    if (x >= static_cast<double>(max_)) return max_;
    return static_cast<std::uint64_t>(x);
  }

 private:
  std::mt19937_64 rng_;
  std::lognormal_distribution<double> dist_;
  std::uint64_t max_;
};

}  // namespace

std::vector<TraceRecord> synthetic_trace(std::size_t count, const SyntheticTraceOptions& opt) {
  SizeSampler sampler(opt);
  std::vector<TraceRecord> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(TraceRecord{fmt::format("file{:06}", i), sampler.next()});
  }
  return out;
}

std::vector<TraceRecord> synthetic_trace_total(std::uint64_t total, const SyntheticTraceOptions& opt) {
  if (total == 0) throw Error(ErrorCode::kInvalidArgument, "target total must be positive");
  SizeSampler sampler(opt);
  std::vector<TraceRecord> out;
  std::uint64_t sum = 0;
  while (sum < total) {
    const auto size = std::min(sampler.next(), total - sum);
    out.push_back(TraceRecord{fmt::format("file{:06}", out.size()), size});
    sum += size;
  }
  return out;
}

}  // namespace hvsto
