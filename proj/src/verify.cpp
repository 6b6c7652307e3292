#include "echo/verify.hpp"

#include "echo/interpreter.hpp"
#include "echo/pipeline.hpp"

namespace echo {

namespace {

std::int64_t largest(const Graph& g, const ShapeMap& shapes)
{
    std::int64_t m = 0;
    for (auto id : g.node_ids())
        for (const auto& t : shapes.outputs_of(id)) m = std::max(m, t.shape.numel());
    return m;
}

}  // namespace

VerifyResult verify(const Graph& forward, const StrategyConfig& cfg, const VerifyOptions& opt)
{
    auto base_cfg = cfg;
    base_cfg.strategy = Strategy::baseline;
    const auto base = run_pipeline(forward, base_cfg, opt.weight_multiplier);
    auto got = run_pipeline(forward, cfg, opt.weight_multiplier);

    VerifyResult v;
    v.largest_tensor = std::max(largest(base.final_graph, base.shapes), largest(got.final_graph, got.shapes));
    if (v.largest_tensor > opt.max_elements)
        throw CapExceeded("largest tensor has " + std::to_string(v.largest_tensor) + " elements; cap is " +
                          std::to_string(opt.max_elements));

    if (opt.corrupt_plan && !got.memory.timeline.empty()) got.memory.timeline[got.memory.peak_step] += 1;

    const auto env = random_env(forward, opt.seed);
    const auto want = execute(base.final_graph, env, base.schedule, opt.weight_multiplier);
    const auto have = execute(got.final_graph, env, got.schedule, opt.weight_multiplier);

    v.outputs_match = want.outputs == have.outputs;
    if (!v.outputs_match) v.mismatches.push_back("graph outputs differ");

    v.gradients_match = true;
    for (const auto& [id, t] : want.gradients) {
        if (!forward.node(id).is_trainable()) continue;
        auto it = have.gradients.find(id);
        if (it == have.gradients.end() || it->second != t) {
            v.gradients_match = false;
            v.mismatches.push_back("gradient of placeholder " + std::to_string(id) + " (" +
                                   forward.node(id).placeholder->name + ") differs");
        }
    }

    v.live_bytes_match = have.live_bytes == got.memory.timeline;
    if (!v.live_bytes_match) {
        std::size_t step = 0;
        while (step < have.live_bytes.size() && step < got.memory.timeline.size() &&
               have.live_bytes[step] == got.memory.timeline[step])
            ++step;
        v.mismatches.push_back("planned live bytes differ from measured at step " + std::to_string(step));
    }
    return v;
}

}  // namespace echo
