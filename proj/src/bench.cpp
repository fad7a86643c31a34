#include "hvsto/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <memory>
#include <ostream>
#include <random>

#include <fmt/format.h>

#include "byte_io.hpp"
#include "hvsto/appliance.hpp"
#include "hvsto/mapping.hpp"

namespace hvsto {

std::string to_csv_line(const ResultRow& row) {
  return fmt::format("{},{},{},{},{},{}", row.experiment, row.param, row.metric, row.value,
                     row.unit, row.seed);
}

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kCsvHeader << '\n';
  for (const auto& r : rows) out << to_csv_line(r) << '\n';
}

std::vector<std::uint64_t> parse_range(const std::string& text) {
  auto number = [&](std::string_view s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw Error(ErrorCode::kParse, fmt::format("'{}' is not a number", s));
    }
    return v;
  };
  std::vector<std::uint64_t> out;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = number(std::string_view(text).substr(0, dots));
    const auto hi = number(std::string_view(text).substr(dots + 2));
    if (lo > hi) throw Error(ErrorCode::kParse, fmt::format("empty range '{}'", text));
    for (auto v = lo; v <= hi; ++v) out.push_back(v);
    return out;
  }
  std::string_view rest(text);
  while (true) {
    const auto comma = rest.find(',');
    out.push_back(number(rest.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    rest.remove_prefix(comma + 1);
  }
  return out;
}

namespace {

Bytes pattern_block(std::size_t block_size, std::uint64_t tag) {
  Bytes b(block_size);
  std::uint64_t x = tag;
  for (std::size_t i = 0; i + 8 <= block_size; i += 8) {
    x = mix64(x);
    std::memcpy(b.data() + i, &x, 8);
  }
  return b;
}

CostModel default_cost() { return CostModel{}; }

}  // namespace

// ---------------------------------------------------------------- baseline

// Table block: count u32 | (vblock u64, node_id u32, local_id u64) * count
ChainBaseline::ChainBaseline(Cluster& cluster, std::uint64_t capacity_blocks, ImageId label)
    : cluster_(cluster),
      capacity_(capacity_blocks),
      label_(label),
      per_block_((cluster.block_size() - 4) / 20),
      layers_(1) {}

void ChainBaseline::write(IoContext& ctx, std::uint64_t vblock, Bytes block) {
  if (vblock >= capacity_) throw Error(ErrorCode::kRange, "vblock beyond capacity");
  auto& top = layers_.back();
  const PlacementKey key{label_, layers_.size() - 1, BlockKind::kData, vblock, serial_++};
  const auto addr = cluster_.allocate(key, ctx);
  cluster_.write(addr, std::move(block), ctx);
  if (auto it = top.table.find(vblock); it != top.table.end()) {
    cluster_.release(it->second, ctx);
  }
  top.table[vblock] = addr;
}

void ChainBaseline::snapshot(IoContext& ctx) {
  auto& top = layers_.back();
  const auto chunks = (capacity_ + per_block_ - 1) / per_block_;
  std::vector<PlacementKey> keys;
  for (std::uint64_t c = 0; c < chunks; ++c) {
    keys.push_back(PlacementKey{label_, layers_.size() - 1, BlockKind::kChainTable, c, serial_++});
  }
  top.table_blocks = cluster_.allocate_batch(keys, ctx);
  std::vector<std::pair<BlockAddress, Bytes>> blocks;
  for (std::uint64_t c = 0; c < chunks; ++c) {
    Bytes b;
    const auto lo = top.table.lower_bound(c * per_block_);
    const auto hi = top.table.lower_bound((c + 1) * per_block_);
    detail::put_le<std::uint32_t>(b, static_cast<std::uint32_t>(std::distance(lo, hi)));
    for (auto it = lo; it != hi; ++it) {
      detail::put_le<std::uint64_t>(b, it->first);
      detail::put_le<std::uint32_t>(b, it->second.node_id);
      detail::put_le<std::uint64_t>(b, it->second.local_id);
    }
    b.resize(cluster_.block_size());
    blocks.emplace_back(top.table_blocks[c], std::move(b));
  }
  cluster_.write_batch(std::move(blocks), ctx);
  layers_.emplace_back();
}

Bytes ChainBaseline::read(IoContext& ctx, std::uint64_t vblock, unsigned* hops) {
  if (vblock >= capacity_) throw Error(ErrorCode::kRange, "vblock beyond capacity");
  unsigned walked = 0;
  std::optional<BlockAddress> found;
  if (auto it = layers_.back().table.find(vblock); it != layers_.back().table.end()) {
    found = it->second;
  }
  for (auto layer = layers_.rbegin() + 1; !found && layer != layers_.rend(); ++layer) {
    ++walked;
    const Bytes table = cluster_.read(layer->table_blocks[vblock / per_block_], ctx);
    const auto count = detail::get_le<std::uint32_t>(table, 0);
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::size_t off = 4 + std::size_t{i} * 20;
      if (detail::get_le<std::uint64_t>(table, off) == vblock) {
        found = BlockAddress{detail::get_le<std::uint32_t>(table, off + 8),
                             detail::get_le<std::uint64_t>(table, off + 12)};
        break;
      }
    }
  }
  if (hops) *hops = walked;
  if (!found) return Bytes(cluster_.block_size(), std::byte{0});
  return cluster_.read(*found, ctx);
}

// -------------------------------------------------------- snapshot latency

std::vector<SnapshotLatencyPoint> run_snapshot_latency(const SnapshotLatencyOptions& opt) {
  if (opt.max_depth < 1) throw Error(ErrorCode::kInvalidArgument, "need a depth of at least 1");
  constexpr std::size_t kBlock = 4096;
  const std::uint64_t region = opt.read_bytes / kBlock;
  if (region == 0 || region >= opt.capacity_blocks) {
    throw Error(ErrorCode::kInvalidArgument, "read region must fit inside the image");
  }
  std::vector<SnapshotLatencyPoint> out;
  for (unsigned depth = 0; depth <= opt.max_depth; ++depth) {
    std::mt19937_64 rng(mix64(opt.seed ^ depth));
    std::uniform_int_distribution<std::uint64_t> pick(region, opt.capacity_blocks - 1);
    std::vector<std::vector<std::uint64_t>> extra(depth);
    for (auto& e : extra) {
      for (std::uint64_t i = 0; i < opt.writes_per_snapshot; ++i) e.push_back(pick(rng));
    }
    SnapshotLatencyPoint p;
    p.depth = depth;

    {
      Cluster cluster(NodeRegistry::uniform(opt.nodes, 1 << 20, opt.seed), kBlock, default_cost());
      MappingStore mapping(cluster);
      const auto [image, v0] = mapping.create_image(kBlock, opt.capacity_blocks);
      {
        Appliance writer(cluster, mapping);
        auto& s = writer.attach("writer", image);
        for (std::uint64_t v = 0; v < region; ++v) writer.write_block(s, v, pattern_block(kBlock, v));
        for (unsigned k = 0; k < depth; ++k) {
          for (const auto v : extra[k]) writer.write_block(s, v, pattern_block(kBlock, v + k + 1));
          writer.snapshot(s);
        }
        writer.save_or_migrate(s);
      }
      CacheConfig cfg;
      cfg.image_enabled = false;
      cfg.active_read_enabled = false;
      cfg.prefetch_enabled = false;
      Appliance reader(cluster, mapping, cfg);
      cluster.reset_timing();
      auto& s = reader.attach("reader", image);
      double total = 0;
      std::uint64_t fetches = 0;
      for (unsigned r = 0; r < opt.repetitions; ++r) {
        const auto t0 = s.clock();
        const auto f0 = s.ctx().index_fetches;
        reader.read(s, 0, region * kBlock);
        total += static_cast<double>(s.clock() - t0);
        fetches += s.ctx().index_fetches - f0;
      }
      p.hvsto_latency_us = total / opt.repetitions;
      p.hvsto_fetches_per_block =
          static_cast<double>(fetches) / static_cast<double>(region * opt.repetitions);
    }

    {
      Cluster cluster(NodeRegistry::uniform(opt.nodes, 1 << 20, opt.seed), kBlock, default_cost());
      ChainBaseline chain(cluster, opt.capacity_blocks, ImageId{1});
      IoContext ctx;
      for (std::uint64_t v = 0; v < region; ++v) chain.write(ctx, v, pattern_block(kBlock, v));
      for (unsigned k = 0; k < depth; ++k) {
        for (const auto v : extra[k]) chain.write(ctx, v, pattern_block(kBlock, v + k + 1));
        chain.snapshot(ctx);
      }
      cluster.reset_timing();
      IoContext rctx;
      double total = 0;
      std::uint64_t hops = 0;
      for (unsigned r = 0; r < opt.repetitions; ++r) {
        const auto t0 = rctx.clock;
        for (std::uint64_t v = 0; v < region; ++v) {
          unsigned h = 0;
          chain.read(rctx, v, &h);
          hops += h;
        }
        total += static_cast<double>(rctx.clock - t0);
      }
      p.chain_latency_us = total / opt.repetitions;
      p.chain_hops_per_block =
          static_cast<double>(hops) / static_cast<double>(region * opt.repetitions);
    }
    out.push_back(p);
  }
  return out;
}

std::vector<ResultRow> snapshot_latency_rows(const std::vector<SnapshotLatencyPoint>& points,
                                             std::uint64_t seed) {
  std::vector<ResultRow> rows;
  for (const auto& p : points) {
    const auto param = fmt::format("depth={}", p.depth);
    rows.push_back({"snapshot-latency", param, "hvsto_latency", p.hvsto_latency_us, "us", seed});
    rows.push_back({"snapshot-latency", param, "chain_latency", p.chain_latency_us, "us", seed});
    rows.push_back({"snapshot-latency", param, "hvsto_index_fetches_per_block",
                    p.hvsto_fetches_per_block, "fetches", seed});
    rows.push_back({"snapshot-latency", param, "chain_hops_per_block", p.chain_hops_per_block,
                    "fetches", seed});
  }
  return rows;
}

// --------------------------------------------------------------- bootstorm

const char* to_string(BootMode mode) {
  switch (mode) {
    case BootMode::kMultiCache: return "multi-cache";
    case BootMode::kMultiNoCache: return "multi-nocache";
    case BootMode::kSingleNoCache: return "nfs-like";
  }
  return "?";
}

namespace {

void append_runs(std::vector<std::uint64_t>& out, std::size_t count, std::uint64_t capacity,
                 std::mt19937_64& rng) {
  std::uniform_int_distribution<std::uint64_t> len_dist(16, 128);
  const std::size_t target = out.size() + count;
  while (out.size() < target) {
    const auto len = std::min<std::uint64_t>(len_dist(rng), target - out.size());
    std::uniform_int_distribution<std::uint64_t> start_dist(0, capacity - len);
    const auto start = start_dist(rng);
    for (std::uint64_t i = 0; i < len; ++i) out.push_back(start + i);
  }
}

/// Runs sessions one block operation at a time, always advancing the session
/// whose clock is furthest behind. `step` returns false once a session is done.
template <typename Step>
void run_discrete(std::vector<VDiskSession*>& sessions, Step step) {
  std::vector<bool> done(sessions.size(), false);
  std::size_t remaining = sessions.size();
  while (remaining > 0) {
    std::size_t best = sessions.size();
    for (std::size_t i = 0; i < sessions.size(); ++i) {
      if (done[i]) continue;
      if (best == sessions.size() || sessions[i]->clock() < sessions[best]->clock()) best = i;
    }
    if (!step(best)) {
      done[best] = true;
      --remaining;
    }
  }
}

}  // namespace

std::vector<std::uint64_t> boot_script(const BootstormOptions& opt, unsigned vm) {
  const std::uint64_t capacity = opt.image_bytes / 4096;
  const auto shared = static_cast<std::size_t>(
      std::llround(static_cast<double>(opt.reads_per_vm) * opt.shared_fraction));
  std::vector<std::uint64_t> out;
  out.reserve(opt.reads_per_vm);
  std::mt19937_64 shared_rng(mix64(opt.seed));
  append_runs(out, shared, capacity, shared_rng);
  std::mt19937_64 own_rng(mix64(opt.seed ^ mix64(vm + 1)));
  append_runs(out, opt.reads_per_vm - shared, capacity, own_rng);
  return out;
}

std::vector<BootstormPoint> run_bootstorm(const BootstormOptions& opt) {
  constexpr std::size_t kBlock = 4096;
  const std::uint64_t capacity = opt.image_bytes / kBlock;
  if (capacity < 129) throw Error(ErrorCode::kInvalidArgument, "golden image too small");
  std::vector<BootstormPoint> out;
  for (const auto mode : opt.modes) {
    const std::size_t nodes = mode == BootMode::kSingleNoCache ? 1 : opt.nodes;
    CostModel cost;
    cost.remote_sequential_media_us = opt.sequential_media_us;
    Cluster cluster(NodeRegistry::uniform(nodes, 1 << 22, opt.seed), kBlock, cost);
    MappingStore mapping(cluster);

    const auto [base, v0] = mapping.create_image(kBlock, capacity);
    VersionId golden;
    {
      CacheConfig admin;
      admin.write_buffer_bytes = 4ULL << 20;
      Appliance app(cluster, mapping, admin);
      auto& s = app.attach("admin", base);
      for (std::uint64_t v = 0; v < capacity; ++v) app.write_block(s, v, pattern_block(kBlock, v));
      app.save_or_migrate(s);
      IoContext ctx;
      golden = mapping.freeze_golden(ctx, base);
    }

    CacheConfig cfg;
    cfg.capacity_bytes = opt.cache_bytes;
    if (mode != BootMode::kMultiCache) {
      cfg.image_enabled = false;
      cfg.active_read_enabled = false;
      cfg.prefetch_enabled = false;
    }
    for (const auto vms : opt.vm_counts) {
      std::vector<ImageId> clones;
      IoContext setup;
      for (unsigned i = 0; i < vms; ++i) clones.push_back(mapping.clone_image(setup, golden).first);
      cluster.reset_timing();

      Appliance app(cluster, mapping, cfg);
      std::vector<VDiskSession*> sessions;
      std::vector<std::vector<std::uint64_t>> scripts;
      for (unsigned i = 0; i < vms; ++i) {
        sessions.push_back(&app.attach(fmt::format("vm{}", i), clones[i]));
        scripts.push_back(boot_script(opt, i));
      }
      std::vector<std::size_t> next(vms, 0);
      run_discrete(sessions, [&](std::size_t i) {
        if (next[i] == scripts[i].size()) return false;
        app.read_block(*sessions[i], scripts[i][next[i]++]);
        return true;
      });
      SimTime makespan = 0;
      for (auto* s : sessions) makespan = std::max(makespan, s->clock());
      out.push_back(BootstormPoint{mode, vms, static_cast<double>(makespan)});
    }
  }
  return out;
}

std::vector<ResultRow> bootstorm_rows(const std::vector<BootstormPoint>& points,
                                      std::uint64_t seed) {
  std::vector<ResultRow> rows;
  for (const auto& p : points) {
    rows.push_back({"bootstorm", fmt::format("mode={};vms={}", to_string(p.mode), p.vms),
                    "makespan", p.makespan_us, "us", seed});
  }
  return rows;
}

// ------------------------------------------------------------- scalability

namespace {

struct VmWorkload {
  std::vector<std::uint64_t> size;  // current bytes of each file
  std::mt19937_64 rng;
  std::size_t done = 0;
  std::uint64_t slot_bytes = 0;
};

}  // namespace

std::vector<ScalePoint> run_scalability(const ScaleOptions& opt) {
  constexpr std::size_t kBlock = 4096;
  if (opt.min_file_bytes == 0 || opt.min_file_bytes > opt.max_file_bytes) {
    throw Error(ErrorCode::kInvalidArgument, "invalid file size range");
  }
  const std::uint64_t slot_blocks = (2 * opt.max_file_bytes + kBlock - 1) / kBlock;
  const std::uint64_t slot_bytes = slot_blocks * kBlock;
  const std::uint64_t capacity = opt.files_per_vm * slot_blocks;

  std::vector<ScalePoint> out;
  for (const auto nodes : opt.node_counts) {
    for (const auto servers : opt.server_counts) {
      CostModel cost;
      cost.remote_media_us = opt.media_us;
      Cluster cluster(NodeRegistry::uniform(nodes, 1 << 22, opt.seed), kBlock, cost);
      MappingStore mapping(cluster);
      const unsigned vm_total = servers * opt.vms_per_server;

      std::vector<ImageId> images;
      std::vector<VmWorkload> work(vm_total);
      {
        CacheConfig admin;
        admin.write_buffer_bytes = 4ULL << 20;
        Appliance app(cluster, mapping, admin);
        for (unsigned vm = 0; vm < vm_total; ++vm) {
          images.push_back(mapping.create_image(kBlock, capacity).first);
          auto& w = work[vm];
          w.rng.seed(mix64(opt.seed ^ mix64(vm + 1)));
          w.slot_bytes = slot_bytes;
          std::uniform_int_distribution<std::uint64_t> size_dist(opt.min_file_bytes,
                                                                 opt.max_file_bytes);
          auto& s = app.attach("setup", images.back());
          for (std::size_t f = 0; f < opt.files_per_vm; ++f) {
            const auto size = size_dist(w.rng);
            w.size.push_back(size);
            const Bytes content = pattern_block(size + (8 - size % 8), mix64(vm * 7919 + f));
            app.write(s, f * slot_bytes, std::span(content).first(size));
          }
          app.save_or_migrate(s);
        }
      }
      cluster.reset_timing();

      CacheConfig cfg;
      cfg.capacity_bytes = opt.cache_bytes;
      cfg.write_buffer_bytes = opt.write_buffer_bytes;
      std::vector<std::unique_ptr<Appliance>> apps;
      for (unsigned i = 0; i < servers; ++i) {
        apps.push_back(std::make_unique<Appliance>(cluster, mapping, cfg));
      }
      std::vector<VDiskSession*> sessions;
      for (unsigned vm = 0; vm < vm_total; ++vm) {
        sessions.push_back(
            &apps[vm / opt.vms_per_server]->attach(fmt::format("vm{}", vm), images[vm]));
      }

      run_discrete(sessions, [&](std::size_t vm) {
        auto& w = work[vm];
        if (w.done == opt.transactions_per_vm) return false;
        auto& app = *apps[vm / opt.vms_per_server];
        auto& s = *sessions[vm];
        std::uniform_int_distribution<std::size_t> file_dist(0, opt.files_per_vm - 1);
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        const auto f = file_dist(w.rng);
        const auto base = f * w.slot_bytes;
        if (coin(w.rng) < opt.read_fraction) {
          app.read(s, base, w.size[f]);
        } else {
          std::uniform_int_distribution<std::uint64_t> add_dist(opt.min_file_bytes,
                                                                opt.max_file_bytes);
          const auto add = add_dist(w.rng);
          const Bytes content = pattern_block(add + (8 - add % 8), w.rng());
          // A file that would overflow its slot is deleted and recreated.
          if (w.size[f] + add > w.slot_bytes) w.size[f] = 0;
          app.write(s, base + w.size[f], std::span(content).first(add));
          w.size[f] += add;
        }
        ++w.done;
        return true;
      });

      ScalePoint p;
      p.nodes = nodes;
      p.servers = servers;
      for (unsigned srv = 0; srv < servers; ++srv) {
        SimTime makespan = 0;
        std::uint64_t txns = 0;
        for (unsigned k = 0; k < opt.vms_per_server; ++k) {
          const auto vm = srv * opt.vms_per_server + k;
          makespan = std::max(makespan, sessions[vm]->clock());
          txns += work[vm].done;
        }
        const double tps = makespan == 0 ? 0.0 : static_cast<double>(txns) * 1e6 /
                                                     static_cast<double>(makespan);
        p.aggregate_tps += tps;
        p.transactions += txns;
      }
      p.per_server_tps = p.aggregate_tps / servers;
      out.push_back(p);
    }
  }
  return out;
}

std::vector<ResultRow> scalability_rows(const std::vector<ScalePoint>& points, std::uint64_t seed) {
  std::vector<ResultRow> rows;
  for (const auto& p : points) {
    const auto param = fmt::format("nodes={};servers={}", p.nodes, p.servers);
    rows.push_back({"scale", param, "per_server_throughput", p.per_server_tps, "txn/s", seed});
    rows.push_back({"scale", param, "aggregate_throughput", p.aggregate_tps, "txn/s", seed});
  }
  return rows;
}

// ----------------------------------------------------------------- leakage

std::vector<ResultRow> run_leakage_sweep(const std::vector<TraceRecord>& trace,
                                         const LeakageSweepOptions& opt) {
  std::vector<ResultRow> rows;
  for (const auto s : opt.block_sizes) {
    for (auto n = opt.n_min; n <= opt.n_max; ++n) {
      const LeakageScenario sc{opt.N, n, s, std::nullopt};
      const auto rep = expected_leakage(trace, sc);
      const auto param = fmt::format("N={};n={};s={}", opt.N, n, s);
      rows.push_back({"leakage", param, "ratio", rep.ratio, "ratio", opt.seed});
      rows.push_back({"leakage", param, "expected_bytes", rep.expected_bytes, "bytes", opt.seed});
      if (opt.monte_carlo_trials > 0) {
        const auto mc = monte_carlo_leakage(trace, sc, opt.monte_carlo_trials, opt.seed,
                                            opt.threads);
        rows.push_back({"leakage", param, "mc_ratio", mc.ratio, "ratio", opt.seed});
        rows.push_back({"leakage", param, "mc_stderr_bytes", mc.stderr_bytes, "bytes", opt.seed});
      }
    }
  }
  return rows;
}

}  // namespace hvsto
