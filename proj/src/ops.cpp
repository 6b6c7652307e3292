#include "echo/ops.hpp"

#include <algorithm>
#include <climits>
#include <cstdint>
#include <numeric>

namespace echo {

GradContext::GradContext(Graph& g, const Node& fwd, std::span<const TensorType> in_types,
                         std::span<const TensorType> out_types, std::optional<EdgeRef> dy)
    : g_(g), fwd_(fwd), in_types_(in_types), out_types_(out_types), dy_(dy)
{
}

EdgeRef GradContext::dy()
{
    if (!dy_) {
        const auto& t = out_types_[0];
        auto id = emit("ones", {}, {{"shape", t.shape.dims()}, {"dtype", std::string(to_string(t.dtype))}});
        dy_ = EdgeRef{id, 0};
    }
    return *dy_;
}

NodeId GradContext::emit(std::string_view op, std::vector<EdgeRef> inputs, Attrs attrs)
{
    auto id = g_.add_node(op, std::move(inputs), std::move(attrs), fwd_.tag, NodeKind::gradient);
    emitted_.push_back(id);
    return id;
}

void Registry::add(OpDef def)
{
    if (ops_.contains(def.name)) throw GraphError("op '" + def.name + "' already registered");
    auto name = def.name;
    ops_.emplace(std::move(name), std::move(def));
}

const OpDef* Registry::find(std::string_view name) const
{
    auto it = ops_.find(name);
    return it == ops_.end() ? nullptr : &it->second;
}

const OpDef& Registry::lookup(std::string_view name) const
{
    if (auto p = find(name)) return *p;
    throw GraphError("unknown op '" + std::string(name) + "'");
}

std::vector<std::string> Registry::names() const
{
    std::vector<std::string> out;
    for (const auto& [k, v] : ops_) out.push_back(k);
    return out;
}

std::vector<std::string> Registry::shipped() const
{
    std::vector<std::string> out;
    for (const auto& [k, v] : ops_)
        if (!v.auxiliary) out.push_back(k);
    return out;
}

const GradDeps& Registry::grad_deps(std::string_view name) const
{
    const auto& def = lookup(name);
    if (!def.differentiable()) throw GraphError("op '" + std::string(name) + "' is not differentiable");
    return def.grad_deps;
}

std::vector<TensorType> Registry::infer_shape(std::string_view name, std::span<const TensorType> in,
                                              const Attrs& attrs) const
{
    const auto& def = lookup(name);
    if (!def.shape_fn) throw ShapeError("op '" + std::string(name) + "' has no shape rule");
    if (in.size() < def.min_arity || in.size() > def.max_arity)
        throw ShapeError("arity mismatch for '" + std::string(name) + "'");
    return def.shape_fn(in, attrs);
}

const Registry& Registry::global()
{
    static const Registry r = make_default();
    return r;
}

// ---------------------------------------------------------------------------

namespace {

using Types = std::span<const TensorType>;
using Dims = std::vector<std::int64_t>;

[[noreturn]] void shape_fail(std::string_view op, const std::string& what)
{
    throw ShapeError(std::string(op) + ": " + what);
}

void require_rank(std::string_view op, const TensorType& t, std::size_t rank)
{
    if (t.shape.rank() != rank)
        shape_fail(op, "expected rank " + std::to_string(rank) + ", got " + to_string(t.shape));
}

std::int64_t numel_sum(Types ts)
{
    std::int64_t n = 0;
    for (const auto& t : ts) n += t.shape.numel();
    return n;
}

std::int64_t out_numel(Types, Types out, const Attrs&) { return numel_sum(out); }

NumOutputsFn fixed_outputs(std::size_t k)
{
    return [k](const Attrs&, std::size_t) { return k; };
}

std::size_t normalize_axis(std::string_view op, std::int64_t axis, std::size_t rank)
{
    if (axis < 0) axis += static_cast<std::int64_t>(rank);
    if (axis < 0 || static_cast<std::size_t>(axis) >= rank)
        shape_fail(op, "axis " + std::to_string(axis) + " out of range");
    return static_cast<std::size_t>(axis);
}

Dims drop_axis(const Dims& d, std::size_t axis)
{
    Dims out = d;
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
    return out;
}

OpDef base(std::string name, std::size_t lo, std::size_t hi, std::size_t outs = 1)
{
    OpDef d;
    d.name = std::move(name);
    d.min_arity = lo;
    d.max_arity = hi;
    d.num_outputs = fixed_outputs(outs);
    d.cost_fn = out_numel;
    return d;
}

// Elementwise op whose inputs must agree in shape.
ShapeFn same_shape(std::string name)
{
    return [name](Types in, const Attrs&) {
        for (const auto& t : in)
            if (t.shape != in[0].shape)
                shape_fail(name, "shape mismatch " + to_string(in[0].shape) + " vs " + to_string(t.shape));
        return std::vector<TensorType>{in[0]};
    };
}

// Output takes the shape of input 0; other inputs are not checked beyond arity.
std::vector<TensorType> like_first(Types in, const Attrs&) { return {in[0]}; }

TensorType with_shape(const TensorType& t, Dims d) { return {Shape(std::move(d)), t.dtype}; }

// Gradient of a unary op that reads its forward output.
OpDef unary_needing_output(std::string name, std::string grad_op)
{
    OpDef d = base(name, 1, 1);
    d.shape_fn = like_first;
    d.grad_deps = {{}, {0}, true};
    d.grad_fn = [grad_op](GradContext& c) -> std::vector<std::optional<EdgeRef>> {
        auto g = c.emit(grad_op, {c.dy(), c.out(0)});
        return {EdgeRef{g, 0}};
    };
    return d;
}

OpDef aux(std::string name, std::size_t lo, std::size_t hi, ShapeFn fn, std::size_t outs = 1)
{
    OpDef d = base(std::move(name), lo, hi, outs);
    d.shape_fn = std::move(fn);
    d.auxiliary = true;
    return d;
}

// Shape rules for the compute-heavy ops, shared with their gradients.
TensorType fc_out(Types in, const Attrs& a)
{
    require_rank("fully_connected", in[0], 2);
    require_rank("fully_connected", in[1], 2);
    const auto units = in[1].shape[0];
    if (in[1].shape[1] != in[0].shape[1])
        shape_fail("fully_connected", "weight " + to_string(in[1].shape) + " incompatible with input " +
                                          to_string(in[0].shape));
    if (in.size() == 3 && in[2].shape != Shape{units})
        shape_fail("fully_connected", "bias shape " + to_string(in[2].shape));
    if (has_attr(a, "units") && attr_int(a, "units") != units)
        shape_fail("fully_connected", "units attribute disagrees with weight");
    return with_shape(in[0], {in[0].shape[0], units});
}

TensorType matmul_out(Types in)
{
    require_rank("matmul", in[0], 2);
    require_rank("matmul", in[1], 2);
    if (in[0].shape[1] != in[1].shape[0]) shape_fail("matmul", "inner dimensions differ");
    return with_shape(in[0], {in[0].shape[0], in[1].shape[1]});
}

TensorType bdot_out(Types in)
{
    require_rank("batched_dot", in[0], 3);
    require_rank("batched_dot", in[1], 3);
    if (in[0].shape[0] != in[1].shape[0]) shape_fail("batched_dot", "batch dimensions differ");
    if (in[0].shape[2] != in[1].shape[1]) shape_fail("batched_dot", "inner dimensions differ");
    return with_shape(in[0], {in[0].shape[0], in[0].shape[1], in[1].shape[2]});
}

TensorType conv_out(Types in, const Attrs& a)
{
    require_rank("conv2d", in[0], 4);
    require_rank("conv2d", in[1], 4);
    const auto& x = in[0].shape;
    const auto& k = in[1].shape;
    if (x[1] != k[1]) shape_fail("conv2d", "channel mismatch");
    if (k[2] != k[3]) shape_fail("conv2d", "kernel must be square");
    const auto pad = attr_int(a, "pad", 0);
    const auto ho = x[2] + 2 * pad - k[2] + 1;
    const auto wo = x[3] + 2 * pad - k[3] + 1;
    if (ho < 1 || wo < 1) shape_fail("conv2d", "kernel larger than padded input");
    return with_shape(in[0], {x[0], k[0], ho, wo});
}

std::int64_t fc_flops(Types in)
{
    return 2 * in[0].shape[0] * in[0].shape[1] * in[1].shape[0];
}

std::int64_t matmul_flops(Types in) { return 2 * in[0].shape[0] * in[0].shape[1] * in[1].shape[1]; }

std::int64_t bdot_flops(Types in)
{
    return 2 * in[0].shape[0] * in[0].shape[1] * in[0].shape[2] * in[1].shape[2];
}

std::int64_t conv_flops(Types in, const TensorType& out)
{
    const auto& k = in[1].shape;
    const auto& o = out.shape;
    return 2 * k[2] * k[3] * k[1] * k[0] * o[2] * o[3] * o[0];
}

std::int64_t conv_workspace(Types in, const TensorType& out)
{
    const auto& k = in[1].shape;
    const auto& o = out.shape;
    return byte_size(o[0] * k[1] * k[2] * k[3] * o[2] * o[3], in[0].dtype);
}

TensorType concat_out(Types in, const Attrs& a)
{
    const bool stack = attr_int(a, "new_axis", 0) != 0;
    const auto& first = in[0].shape;
    if (stack) {
        for (const auto& t : in)
            if (t.shape != first) shape_fail("concat", "stacked inputs must share a shape");
        auto axis = normalize_axis("concat", attr_int(a, "axis", 0), first.rank() + 1);
        Dims d = first.dims();
        d.insert(d.begin() + static_cast<std::ptrdiff_t>(axis), static_cast<std::int64_t>(in.size()));
        return with_shape(in[0], d);
    }
    auto axis = normalize_axis("concat", attr_int(a, "axis", 0), first.rank());
    Dims d = first.dims();
    d[axis] = 0;
    for (const auto& t : in) {
        if (t.shape.rank() != first.rank()) shape_fail("concat", "rank mismatch");
        for (std::size_t i = 0; i < first.rank(); ++i)
            if (i != axis && t.shape[i] != first[i])
                shape_fail("concat", "dimension mismatch " + to_string(t.shape) + " vs " + to_string(first));
        d[axis] += t.shape[axis];
    }
    return with_shape(in[0], d);
}

// Which operand of broadcast_add is the lower-rank one; -1 when ranks are equal.
int broadcast_low(Types in, const Attrs& a)
{
    const auto r0 = in[0].shape.rank();
    const auto r1 = in[1].shape.rank();
    if (r0 == r1) {
        if (in[0].shape != in[1].shape) shape_fail("broadcast_add", "equal-rank operands must match");
        return -1;
    }
    const int lo = r0 < r1 ? 0 : 1;
    const auto& low = in[static_cast<std::size_t>(lo)].shape;
    const auto& high = in[static_cast<std::size_t>(1 - lo)].shape;
    if (high.rank() != low.rank() + 1)
        shape_fail("broadcast_add", "operands differ by more than one rank");
    auto axis = normalize_axis("broadcast_add", attr_int(a, "axis", 0), high.rank());
    if (drop_axis(high.dims(), axis) != low.dims())
        shape_fail("broadcast_add", "cannot broadcast " + to_string(low) + " into " + to_string(high));
    return lo;
}

void register_forward(Registry& r)
{
    {
        OpDef d = base("placeholder", 0, 0);
        d.cost_fn = [](Types, Types, const Attrs&) { return std::int64_t{0}; };
        r.add(std::move(d));
    }
    {
        OpDef d = base("fully_connected", 2, 3);
        d.shape_fn = [](Types in, const Attrs& a) { return std::vector<TensorType>{fc_out(in, a)}; };
        d.cost_fn = [](Types in, Types, const Attrs&) { return fc_flops(in); };
        d.compute_heavy = true;
        d.grad_deps = {{0, 1}, {}, true};
        d.grad_fn = [](GradContext& c) -> std::vector<std::optional<EdgeRef>> {
            const bool bias = c.forward().inputs.size() == 3;
            auto g = c.emit("fully_connected_grad", {c.dy(), c.in(0), c.in(1)},
                            {{"has_bias", std::int64_t{bias}}});
            std::vector<std::optional<EdgeRef>> out{EdgeRef{g, 0}, EdgeRef{g, 1}};
            if (bias) out.push_back(EdgeRef{g, 2});
            return out;
        };
        r.add(std::move(d));
    }
    {
        OpDef d = base("matmul", 2, 2);
        d.shape_fn = [](Types in, const Attrs&) { return std::vector<TensorType>{matmul_out(in)}; };
        d.cost_fn = [](Types in, Types, const Attrs&) { return matmul_flops(in); };
        d.compute_heavy = true;
        d.grad_deps = {{0, 1}, {}, true};
        d.grad_fn = [](GradContext& c) -> std::vector<std::optional<EdgeRef>> {
            auto g = c.emit("matmul_grad", {c.dy(), c.in(0), c.in(1)});
            return {EdgeRef{g, 0}, EdgeRef{g, 1}};
        };
        r.add(std::move(d));
    }
    {
        OpDef d = base("batched_dot", 2, 2);
        d.shape_fn = [](Types in, const Attrs&) { return std::vector<TensorType>{bdot_out(in)}; };
        d.cost_fn = [](Types in, Types, const Attrs&) { return bdot_flops(in); };
        d.compute_heavy = true;
        d.grad_deps = {{0, 1}, {}, true};
        d.grad_fn = [](GradContext& c) -> std::vector<std::optional<EdgeRef>> {
            auto g = c.emit("batched_dot_grad", {c.dy(), c.in(0), c.in(1)});
            return {EdgeRef{g, 0}, EdgeRef{g, 1}};
        };
        r.add(std::move(d));
    }
    {
        OpDef d = base("conv2d", 2, 2);
        d.shape_fn = [](Types in, const Attrs& a) { return std::vector<TensorType>{conv_out(in, a)}; };
        d.cost_fn = [](Types in, Types out, const Attrs&) { return conv_flops(in, out[0]); };
        d.workspace_fn = [](Types in, Types out, const Attrs&) { return conv_workspace(in, out[0]); };
        d.compute_heavy = true;
        d.grad_deps = {{0, 1}, {}, true};
        d.grad_fn = [](GradContext& c) -> std::vector<std::optional<EdgeRef>> {
            auto g = c.emit("conv2d_grad", {c.dy(), c.in(0), c.in(1)},
                            {{"pad", attr_int(c.forward().attrs, "pad", 0)}});
            return {EdgeRef{g, 0}, EdgeRef{g, 1}};
        };
        r.add(std::move(d));
    }
    {
        OpDef d = base("add", 2, 2);
        d.shape_fn = same_shape("add");
        d.grad_deps = {{}, {}, true};
        d.grad_fn = [](GradContext& c) -> std::vector<std::optional<EdgeRef>> {
            auto dy = c.dy();
            return {dy, dy};
        };
        r.add(std::move(d));
    }
    {
        OpDef d = base("mul", 2, 2);
        d.shape_fn = same_shape("mul");
        d.grad_deps = {{0, 1}, {}, true};
        d.grad_fn = [](GradContext& c) -> std::vector<std::optional<EdgeRef>> {
            auto dy = c.dy();
            auto ga = c.emit("mul", {dy, c.in(1)});
            auto gb = c.emit("mul", {dy, c.in(0)});
            return {EdgeRef{ga, 0}, EdgeRef{gb, 0}};
        };
        r.add(std::move(d));
    }
    r.add(unary_needing_output("tanh", "tanh_grad"));
    r.add(unary_needing_output("sigmoid", "sigmoid_grad"));
    {
        OpDef d = unary_needing_output("relu", "relu_grad");
        d.binarizable = true;
        r.add(std::move(d));
    }
    {
        OpDef d = base("dropout", 1, 1, 2);
        d.shape_fn = [](Types in, const Attrs& a) {
            const double rate = attr_double(a, "rate", 0.5);
            if (rate < 0.0 || rate >= 1.0) shape_fail("dropout", "rate must lie in [0, 1)");
            return std::vector<TensorType>{in[0], in[0]};
        };
        d.cost_fn = [](Types in, Types, const Attrs&) { return 2 * in[0].shape.numel(); };
        d.binarizable = true;
        d.grad_deps = {{}, {1}, true};
        d.grad_fn = [](GradContext& c) -> std::vector<std::optional<EdgeRef>> {
            auto g = c.emit("dropout_grad", {c.dy(), c.out(1)},
                            {{"rate", attr_double(c.forward().attrs, "rate", 0.5)}});
            return {EdgeRef{g, 0}};
        };
        r.add(std::move(d));
    }
    {
        OpDef d = base("broadcast_add", 2, 2);
        d.shape_fn = [](Types in, const Attrs& a) {
            const int lo = broadcast_low(in, a);
            return std::vector<TensorType>{lo == 0 ? in[1] : in[0]};
        };
        d.grad_deps = {{}, {}, true};
        d.grad_fn = [](GradContext& c) -> std::vector<std::optional<EdgeRef>> {
            std::vector<TensorType> in{c.in_type(0), c.in_type(1)};
            const int lo = broadcast_low(in, c.forward().attrs);
            auto dy = c.dy();
            if (lo < 0) return {dy, dy};
            auto red = c.emit("reduce_axis", {dy}, {{"axis", attr_int(c.forward().attrs, "axis", 0)}});
            std::vector<std::optional<EdgeRef>> out{dy, dy};
            out[static_cast<std::size_t>(lo)] = EdgeRef{red, 0};
            return out;
        };
        r.add(std::move(d));
    }
    {
        OpDef d = base("concat", 1, SIZE_MAX);
        d.shape_fn = [](Types in, const Attrs& a) { return std::vector<TensorType>{concat_out(in, a)}; };
        d.grad_deps = {{}, {}, true};
        d.grad_fn = [](GradContext& c) -> std::vector<std::optional<EdgeRef>> {
            const auto& a = c.forward().attrs;
            const bool stack = attr_int(a, "new_axis", 0) != 0;
            const auto n = c.forward().inputs.size();
            IntList sizes;
            for (std::size_t i = 0; i < n; ++i) {
                if (stack) {
                    sizes.push_back(1);
                } else {
                    auto axis = normalize_axis("concat", attr_int(a, "axis", 0), c.in_type(i).shape.rank());
                    sizes.push_back(c.in_type(i).shape[axis]);
                }
            }
            auto g = c.emit("concat_grad", {c.dy()},
                            {{"axis", attr_int(a, "axis", 0)},
                             {"new_axis", std::int64_t{stack}},
                             {"sizes", sizes}});
            std::vector<std::optional<EdgeRef>> out;
            for (std::uint32_t i = 0; i < n; ++i) out.push_back(EdgeRef{g, i});
            return out;
        };
        r.add(std::move(d));
    }
    {
        OpDef d = base("slice", 1, 1);
        d.shape_fn = [](Types in, const Attrs& a) {
            auto axis = normalize_axis("slice", attr_int(a, "axis", 0), in[0].shape.rank());
            const auto begin = attr_int(a, "begin");
            const auto end = attr_int(a, "end");
            if (begin < 0 || end > in[0].shape[axis] || begin >= end)
                shape_fail("slice", "range [" + std::to_string(begin) + "," + std::to_string(end) +
                                        ") invalid for " + to_string(in[0].shape));
            Dims dims = in[0].shape.dims();
            dims[axis] = end - begin;
            return std::vector<TensorType>{with_shape(in[0], dims)};
        };
        d.grad_deps = {{}, {}, true};
        d.grad_fn = [](GradContext& c) -> std::vector<std::optional<EdgeRef>> {
            const auto& a = c.forward().attrs;
            auto axis = normalize_axis("slice", attr_int(a, "axis", 0), c.in_type(0).shape.rank());
            auto g = c.emit("slice_grad", {c.dy()},
                            {{"axis", static_cast<std::int64_t>(axis)},
                             {"begin", attr_int(a, "begin")},
                             {"end", attr_int(a, "end")},
                             {"dim", c.in_type(0).shape[axis]}});
            return {EdgeRef{g, 0}};
        };
        r.add(std::move(d));
    }
    {
        OpDef d = base("softmax_ce_loss", 2, 2);
        d.shape_fn = [](Types in, const Attrs&) {
            require_rank("softmax_ce_loss", in[0], 2);
            if (in[0].shape != in[1].shape) shape_fail("softmax_ce_loss", "labels must match logits");
            return std::vector<TensorType>{with_shape(in[0], {})};
        };
        d.cost_fn = [](Types in, Types, const Attrs&) { return in[0].shape.numel(); };
        d.grad_deps = {{0, 1}, {}, true};
        d.grad_fn = [](GradContext& c) -> std::vector<std::optional<EdgeRef>> {
            auto g = c.emit("softmax_ce_loss_grad", {c.dy(), c.in(0), c.in(1)});
            return {EdgeRef{g, 0}, std::nullopt};
        };
        r.add(std::move(d));
    }
    {
        OpDef d = base("sum_reduce", 1, 1);
        d.shape_fn = [](Types in, const Attrs& a) {
            if (!has_attr(a, "axis")) return std::vector<TensorType>{with_shape(in[0], {})};
            auto axis = normalize_axis("sum_reduce", attr_int(a, "axis"), in[0].shape.rank());
            return std::vector<TensorType>{with_shape(in[0], drop_axis(in[0].shape.dims(), axis))};
        };
        d.grad_deps = {{}, {}, true};
        d.grad_fn = [](GradContext& c) -> std::vector<std::optional<EdgeRef>> {
            const auto& a = c.forward().attrs;
            const auto& x = c.in_type(0);
            if (c.dy_is_seed() && !has_attr(a, "axis")) {
                auto g = c.emit("ones", {}, {{"shape", x.shape.dims()},
                                             {"dtype", std::string(to_string(x.dtype))}});
                return {EdgeRef{g, 0}};
            }
            std::int64_t axis = -1;
            if (has_attr(a, "axis"))
                axis = static_cast<std::int64_t>(normalize_axis("sum_reduce", attr_int(a, "axis"), x.shape.rank()));
            auto g = c.emit("broadcast_to", {c.dy()}, {{"shape", x.shape.dims()}, {"axis", axis}});
            return {EdgeRef{g, 0}};
        };
        r.add(std::move(d));
    }
}

void register_auxiliary(Registry& r)
{
    {
        OpDef d = aux("fully_connected_grad", 3, 3, [](Types in, const Attrs& a) {
            std::vector<TensorType> out{in[1], in[2]};
            if (attr_int(a, "has_bias", 1) != 0) out.push_back(with_shape(in[2], {in[2].shape[0]}));
            return out;
        });
        d.num_outputs = [](const Attrs& a, std::size_t) -> std::size_t {
            return attr_int(a, "has_bias", 1) != 0 ? 3 : 2;
        };
        d.cost_fn = [](Types in, Types, const Attrs&) { return 2 * fc_flops(in.subspan(1)); };
        r.add(std::move(d));
    }
    {
        OpDef d = aux("matmul_grad", 3, 3, [](Types in, const Attrs&) {
            return std::vector<TensorType>{in[1], in[2]};
        }, 2);
        d.cost_fn = [](Types in, Types, const Attrs&) { return 2 * matmul_flops(in.subspan(1)); };
        r.add(std::move(d));
    }
    {
        OpDef d = aux("batched_dot_grad", 3, 3, [](Types in, const Attrs&) {
            return std::vector<TensorType>{in[1], in[2]};
        }, 2);
        d.cost_fn = [](Types in, Types, const Attrs&) { return 2 * bdot_flops(in.subspan(1)); };
        r.add(std::move(d));
    }
    {
        OpDef d = aux("conv2d_grad", 3, 3, [](Types in, const Attrs&) {
            return std::vector<TensorType>{in[1], in[2]};
        }, 2);
        d.cost_fn = [](Types in, Types, const Attrs&) { return 2 * conv_flops(in.subspan(1), in[0]); };
        d.workspace_fn = [](Types in, Types, const Attrs&) { return conv_workspace(in.subspan(1), in[0]); };
        r.add(std::move(d));
    }
    for (auto name : {"tanh_grad", "sigmoid_grad", "relu_grad", "dropout_grad"})
        r.add(aux(name, 2, 2, same_shape(name)));
    r.add(aux("reduce_axis", 1, 1, [](Types in, const Attrs& a) {
        auto axis = normalize_axis("reduce_axis", attr_int(a, "axis", 0), in[0].shape.rank());
        return std::vector<TensorType>{with_shape(in[0], drop_axis(in[0].shape.dims(), axis))};
    }));
    {
        OpDef d = aux("concat_grad", 1, 1, [](Types in, const Attrs& a) {
            const bool stack = attr_int(a, "new_axis", 0) != 0;
            const auto sizes = attr_ints(a, "sizes");
            const auto& y = in[0].shape;
            auto axis = normalize_axis("concat_grad", attr_int(a, "axis", 0), y.rank());
            std::vector<TensorType> out;
            for (auto s : sizes) {
                Dims dims = y.dims();
                if (stack) dims = drop_axis(dims, axis);
                else dims[axis] = s;
                out.push_back(with_shape(in[0], dims));
            }
            return out;
        });
        d.num_outputs = [](const Attrs& a, std::size_t) { return attr_ints(a, "sizes").size(); };
        d.cost_fn = [](Types in, Types, const Attrs&) { return in[0].shape.numel(); };
        r.add(std::move(d));
    }
    r.add(aux("slice_grad", 1, 1, [](Types in, const Attrs& a) {
        auto axis = normalize_axis("slice_grad", attr_int(a, "axis", 0), in[0].shape.rank());
        Dims dims = in[0].shape.dims();
        dims[axis] = attr_int(a, "dim");
        return std::vector<TensorType>{with_shape(in[0], dims)};
    }));
    {
        OpDef d = aux("softmax_ce_loss_grad", 3, 3, [](Types in, const Attrs&) {
            return std::vector<TensorType>{in[1]};
        });
        r.add(std::move(d));
    }
    r.add(aux("broadcast_to", 1, 1, [](Types in, const Attrs& a) {
        return std::vector<TensorType>{with_shape(in[0], attr_ints(a, "shape"))};
    }));
    {
        OpDef d = aux("ones", 0, 0, [](Types, const Attrs& a) {
            auto it = a.find("dtype");
            Dtype dt = Dtype::f32;
            if (it != a.end()) dt = dtype_from_string(std::get<std::string>(it->second));
            return std::vector<TensorType>{TensorType{Shape(attr_ints(a, "shape")), dt}};
        });
        d.cost_fn = [](Types, Types, const Attrs&) { return std::int64_t{0}; };
        r.add(std::move(d));
    }
    r.add(aux("sum_n", 1, SIZE_MAX, same_shape("sum_n")));
    r.add(aux("encode", 1, 1, [](Types in, const Attrs&) {
        return std::vector<TensorType>{TensorType{in[0].shape, Dtype::bit}};
    }));
    r.add(aux("decode", 1, 1, [](Types in, const Attrs& a) {
        auto it = a.find("dtype");
        Dtype dt = Dtype::f32;
        if (it != a.end()) dt = dtype_from_string(std::get<std::string>(it->second));
        return std::vector<TensorType>{TensorType{in[0].shape, dt}};
    }));
}

}  // namespace

Registry Registry::make_default()
{
    Registry r;
    register_forward(r);
    register_auxiliary(r);
    return r;
}

GradDeps probe_grad_deps(std::string_view op, std::span<const TensorType> in_types, const Attrs& attrs)
{
    const auto& def = registry().lookup(op);
    if (!def.differentiable()) throw GraphError("op '" + std::string(op) + "' is not differentiable");
    Graph g;
    std::vector<EdgeRef> ins;
    for (std::size_t i = 0; i < in_types.size(); ++i)
        ins.push_back({g.add_placeholder("in" + std::to_string(i), in_types[i].shape, in_types[i].dtype), 0});
    auto out_types = def.shape_fn(in_types, attrs);
    auto fwd = g.add_node(op, ins, attrs);
    auto dy = g.add_placeholder("dy", out_types[0].shape, out_types[0].dtype);
    GradContext ctx(g, g.node(fwd), in_types, out_types, EdgeRef{dy, 0});
    (void)def.grad_fn(ctx);

    GradDeps deps;
    deps.needs_output_grad = false;
    for (auto id : ctx.emitted())
        for (auto e : g.node(id).inputs) {
            if (e.node == fwd) deps.outputs.insert(e.index);
            else if (e.node == dy) deps.needs_output_grad = true;
            else
                for (std::size_t i = 0; i < ins.size(); ++i)
                    if (ins[i] == e) deps.inputs.insert(i);
        }
    return deps;
}

}  // namespace echo
