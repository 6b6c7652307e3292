#include "echo/report.hpp"

#include <cstdio>
#include <sstream>

namespace echo {

namespace {

using json = nlohmann::ordered_json;

// null when the denominator is zero
json ratio(std::int64_t num, std::int64_t den)
{
    if (den == 0) return nullptr;
    return static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt_ratio(const json& r)
{
    if (r.is_null()) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", r.get<double>());
    return buf;
}

json config_json(const StrategyConfig& c, std::int64_t mult)
{
    return json{{"weight_multiplier", mult},
                {"dead_node", c.dead_node},
                {"binarization", c.binarization},
                {"compute_heavy", c.compute_heavy},
                {"binarizable", c.binarizable},
                {"max_subgraph_nodes", c.max_subgraph_nodes}};
}

json memory_json(const MemoryReport& m)
{
    json tags = json::object();
    for (const auto& [t, b] : m.by_tag) tags[t] = b;
    return json{{"peak_bytes", m.peak_bytes},
                {"peak_step", m.peak_step},
                {"stashed_feature_map_bytes", m.stashed_feature_map_bytes},
                {"by_category",
                 {{"feature_maps", m.by_category.feature_maps},
                  {"weights", m.by_category.weights},
                  {"workspace", m.by_category.workspace}}},
                {"by_tag", tags}};
}

json cost_json(const CostReport& c)
{
    return json{{"forward_flops", c.forward_flops},
                {"backward_flops", c.backward_flops},
                {"recompute_flops", c.recompute_flops},
                {"encode_decode_flops", c.encode_decode_flops},
                {"overhead_ratio", c.overhead_ratio}};
}

}  // namespace

PlanSummary summarize(const RecomputePlan& plan)
{
    PlanSummary s;
    s.mirrored = plan.mirrored.size();
    for (const auto& sp : plan.subgraphs) s.removed += sp.removed.size();
    s.dead = plan.dead_mirrors.size();
    s.binarized = plan.binarized.size();
    return s;
}

std::size_t count_edges(const Graph& g)
{
    std::size_t n = 0;
    for (auto id : g.node_ids()) n += g.node(id).inputs.size();
    return n;
}

Analysis analyze(const Graph& forward, std::string input, const StrategyConfig& cfg, std::int64_t weight_multiplier)
{
    Analysis a{std::move(input), cfg, weight_multiplier, run_pipeline(forward, cfg, weight_multiplier), {}};
    auto base = cfg;
    base.strategy = Strategy::baseline;
    a.baseline = cfg.strategy == Strategy::baseline ? a.result : run_pipeline(forward, base, weight_multiplier);
    return a;
}

nlohmann::ordered_json to_json(const Analysis& a)
{
    const auto& r = a.result;
    const auto p = summarize(r.plan);
    return json{
        {"schema", analyze_schema},
        {"input", a.input},
        {"strategy", to_string(a.config.strategy)},
        {"config", config_json(a.config, a.weight_multiplier)},
        {"graph",
         {{"forward_nodes", r.gradient_graph.size() - r.info.grad_nodes.size()},
          {"nodes", r.final_graph.size()},
          {"edges", count_edges(r.final_graph)},
          {"subgraphs", r.subgraph_count}}},
        {"memory", memory_json(r.memory)},
        {"cost", cost_json(r.cost)},
        {"plan",
         {{"mirrored", p.mirrored},
          {"removed", p.removed},
          {"dead", p.dead},
          {"binarized", p.binarized},
          {"guard_reverted", r.plan.guard_reverted}}},
        {"baseline",
         {{"peak_bytes", a.baseline.memory.peak_bytes},
          {"stashed_feature_map_bytes", a.baseline.memory.stashed_feature_map_bytes}}},
        {"feature_map_reduction",
         ratio(a.baseline.memory.stashed_feature_map_bytes, r.memory.stashed_feature_map_bytes)},
        {"peak_reduction", ratio(a.baseline.memory.peak_bytes, r.memory.peak_bytes)},
    };
}

std::string to_table(const Analysis& a)
{
    const auto& r = a.result;
    const auto& m = r.memory;
    const auto p = summarize(r.plan);
    std::ostringstream os;
    os << "input        " << a.input << "\n"
       << "strategy     " << to_string(a.config.strategy) << "\n"
       << "nodes        " << r.final_graph.size() << " (" << count_edges(r.final_graph) << " edges, "
       << r.subgraph_count << " subgraphs)\n"
       << "plan         " << p.mirrored << " mirrored, " << p.removed << " removed, " << p.dead << " dead, "
       << p.binarized << " binarized\n\n";
    auto row = [&](const char* name, std::int64_t v) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "  %-12s %12lld\n", name, static_cast<long long>(v));
        os << buf;
    };
    os << "memory                bytes\n";
    row("peak", m.peak_bytes);
    row("feature maps", m.by_category.feature_maps);
    row("weights", m.by_category.weights);
    row("workspace", m.by_category.workspace);
    row("stashed", m.stashed_feature_map_bytes);
    os << "  by tag at peak\n";
    for (const auto& [tag, b] : m.by_tag) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "    %-10s %12lld\n", tag.c_str(), static_cast<long long>(b));
        os << buf;
    }
    os << "\ncost                  flops\n";
    row("forward", r.cost.forward_flops);
    row("backward", r.cost.backward_flops);
    row("recompute", r.cost.recompute_flops);
    row("enc/dec", r.cost.encode_decode_flops);
    os << "  overhead     " << fmt_ratio(r.cost.overhead_ratio) << "\n\n"
       << "vs baseline   stash " << a.baseline.memory.stashed_feature_map_bytes << " -> "
       << m.stashed_feature_map_bytes << " (reduction "
       << fmt_ratio(ratio(a.baseline.memory.stashed_feature_map_bytes, m.stashed_feature_map_bytes)) << ")\n";
    return os.str();
}

nlohmann::ordered_json compare_json(std::span<const Analysis> rows)
{
    json out{{"schema", compare_schema}, {"input", rows.empty() ? std::string() : rows.front().input}};
    json list = json::array();
    for (const auto& a : rows) {
        const auto& first = rows.front().result;
        const auto& r = a.result;
        list.push_back(json{
            {"strategy", to_string(a.config.strategy)},
            {"peak_bytes", r.memory.peak_bytes},
            {"stashed_feature_map_bytes", r.memory.stashed_feature_map_bytes},
            {"recompute_flops", r.cost.recompute_flops},
            {"overhead_ratio", r.cost.overhead_ratio},
            {"peak_ratio", ratio(r.memory.peak_bytes, first.memory.peak_bytes)},
            {"stash_ratio", ratio(r.memory.stashed_feature_map_bytes, first.memory.stashed_feature_map_bytes)},
        });
    }
    out["rows"] = std::move(list);
    return out;
}

std::string compare_table(std::span<const Analysis> rows)
{
    const auto doc = compare_json(rows);
    std::ostringstream os;
    os << "input " << doc["input"].get<std::string>() << "\n";
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-9s %14s %14s %14s %9s %8s %8s\n", "strategy", "peak", "stashed", "recompute",
                  "overhead", "peak x", "stash x");
    os << buf;
    for (const auto& r : doc["rows"]) {
        std::snprintf(buf, sizeof buf, "%-9s %14lld %14lld %14lld %9s %8s %8s\n",
                      r["strategy"].get<std::string>().c_str(), r["peak_bytes"].get<long long>(),
                      r["stashed_feature_map_bytes"].get<long long>(), r["recompute_flops"].get<long long>(),
                      fmt_ratio(r["overhead_ratio"]).c_str(), fmt_ratio(r["peak_ratio"]).c_str(),
                      fmt_ratio(r["stash_ratio"]).c_str());
        os << buf;
    }
    return os.str();
}

}  // namespace echo
