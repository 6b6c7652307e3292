#include "echo/interpreter.hpp"

#include "echo/ops.hpp"
#include "echo/passes.hpp"

#include <cmath>
#include <functional>
#include <set>
#include <unordered_map>

namespace echo {

Tensor Tensor::zeros(TensorType t)
{
    Tensor x;
    x.type = std::move(t);
    const auto n = static_cast<std::size_t>(x.type.shape.numel());
    if (x.type.dtype == Dtype::bit) x.bits.assign((n + 7) / 8, 0);
    else x.values.assign(n, 0.0);
    return x;
}

std::int64_t Tensor::bytes() const
{
    if (type.dtype == Dtype::bit) return static_cast<std::int64_t>(bits.size());
    return byte_size(static_cast<std::int64_t>(values.size()), type.dtype);
}

namespace {

std::uint64_t splitmix(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

}  // namespace

bool dropout_keep(std::uint64_t seed, NodeId node, std::int64_t i, double rate)
{
    auto h = splitmix(splitmix(seed ^ (std::uint64_t{node} << 32)) + static_cast<std::uint64_t>(i));
    return unit(h) >= rate;
}

ExecEnv random_env(const Graph& g, std::uint64_t seed)
{
    ExecEnv env;
    env.seed = seed;
    for (auto id : g.placeholders()) {
        Tensor t = Tensor::zeros(g.node(id).placeholder->type);
        for (std::size_t i = 0; i < t.values.size(); ++i)
            t.values[i] = 2.0 * unit(splitmix(splitmix(seed + 0x51ed27ULL * (id + 1)) + i)) - 1.0;
        env.bindings.emplace(id, std::move(t));
    }
    return env;
}

namespace {

using Inputs = std::vector<const Tensor*>;
using Kernel = std::function<std::vector<Tensor>(const Node&, const Inputs&, const std::vector<TensorType>&,
                                                 std::uint64_t)>;

struct Split {
    std::int64_t outer = 1, mid = 1, inner = 1;
};

Split split_at(const Shape& s, std::size_t axis)
{
    Split r;
    for (std::size_t i = 0; i < s.rank(); ++i) {
        if (i < axis) r.outer *= s[i];
        else if (i == axis) r.mid = s[i];
        else r.inner *= s[i];
    }
    return r;
}

std::size_t norm_axis(std::int64_t axis, std::size_t rank)
{
    return static_cast<std::size_t>(axis < 0 ? axis + static_cast<std::int64_t>(rank) : axis);
}

std::size_t ix(std::int64_t i) { return static_cast<std::size_t>(i); }

template <class F>
std::vector<Tensor> unary(const Inputs& in, const std::vector<TensorType>& out, F f)
{
    Tensor y = Tensor::zeros(out[0]);
    for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] = f(in[0]->values[i]);
    return {std::move(y)};
}

template <class F>
std::vector<Tensor> binary(const Inputs& in, const std::vector<TensorType>& out, F f)
{
    Tensor y = Tensor::zeros(out[0]);
    for (std::size_t i = 0; i < y.values.size(); ++i) y.values[i] = f(in[0]->values[i], in[1]->values[i]);
    return {std::move(y)};
}

// C[m,n] (+)= sum_k A[m,k] B[k,n] with optional transposes, fixed loop order.
void gemm(const double* a, const double* b, double* c, std::int64_t m, std::int64_t k, std::int64_t n,
          bool ta, bool tb)
{
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::int64_t p = 0; p < k; ++p) {
                const double av = ta ? a[p * m + i] : a[i * k + p];
                const double bv = tb ? b[j * k + p] : b[p * n + j];
                acc += av * bv;
            }
            c[i * n + j] = acc;
        }
}

int broadcast_low_operand(const Inputs& in)
{
    const auto r0 = in[0]->type.shape.rank();
    const auto r1 = in[1]->type.shape.rank();
    if (r0 == r1) return -1;
    return r0 < r1 ? 0 : 1;
}

std::vector<Tensor> concat_blocks(const std::vector<const Tensor*>& parts, const std::vector<std::int64_t>& sizes,
                                  const TensorType& out, std::size_t axis)
{
    Tensor y = Tensor::zeros(out);
    const auto sp = split_at(out.shape, axis);
    std::int64_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto sz = sizes[p];
        for (std::int64_t o = 0; o < sp.outer; ++o)
            for (std::int64_t m = 0; m < sz; ++m)
                for (std::int64_t i = 0; i < sp.inner; ++i)
                    y.values[ix((o * sp.mid + offset + m) * sp.inner + i)] =
                        parts[p]->values[ix((o * sz + m) * sp.inner + i)];
        offset += sz;
    }
    return {std::move(y)};
}

const std::unordered_map<std::string, Kernel>& kernels()
{
    static const std::unordered_map<std::string, Kernel> table = [] {
        std::unordered_map<std::string, Kernel> k;
        k["add"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            return binary(in, out, [](double a, double b) { return a + b; });
        };
        k["mul"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            return binary(in, out, [](double a, double b) { return a * b; });
        };
        k["tanh"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            return unary(in, out, [](double x) { return std::tanh(x); });
        };
        k["sigmoid"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            return unary(in, out, [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
        };
        k["relu"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            return unary(in, out, [](double x) { return x > 0.0 ? x : 0.0; });
        };
        k["tanh_grad"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            return binary(in, out, [](double dy, double y) { return dy * (1.0 - y * y); });
        };
        k["sigmoid_grad"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            return binary(in, out, [](double dy, double y) { return dy * y * (1.0 - y); });
        };
        k["relu_grad"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            return binary(in, out, [](double dy, double y) { return y > 0.0 ? dy : 0.0; });
        };
        k["dropout"] = [](const Node& n, const Inputs& in, const auto& out, std::uint64_t seed) {
            const double rate = attr_double(n.attrs, "rate", 0.5);
            const NodeId origin = n.mirror_of.value_or(n.id);
            Tensor y = Tensor::zeros(out[0]);
            Tensor mask = Tensor::zeros(out[1]);
            for (std::size_t i = 0; i < y.values.size(); ++i) {
                const double m = dropout_keep(seed, origin, static_cast<std::int64_t>(i), rate) ? 1.0 : 0.0;
                mask.values[i] = m;
                y.values[i] = in[0]->values[i] * m / (1.0 - rate);
            }
            return std::vector<Tensor>{std::move(y), std::move(mask)};
        };
        k["dropout_grad"] = [](const Node& n, const Inputs& in, const auto& out, std::uint64_t) {
            const double scale = 1.0 / (1.0 - attr_double(n.attrs, "rate", 0.5));
            return binary(in, out, [scale](double dy, double m) { return dy * m * scale; });
        };
        k["fully_connected"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            const auto& xs = in[0]->type.shape;
            const auto b = xs[0], i = xs[1], o = in[1]->type.shape[0];
            Tensor y = Tensor::zeros(out[0]);
            gemm(in[0]->values.data(), in[1]->values.data(), y.values.data(), b, i, o, false, true);
            if (in.size() == 3)
                for (std::int64_t r = 0; r < b; ++r)
                    for (std::int64_t c = 0; c < o; ++c) y.values[ix(r * o + c)] += in[2]->values[ix(c)];
            return std::vector<Tensor>{std::move(y)};
        };
        k["fully_connected_grad"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            const auto& dy = *in[0];
            const auto b = in[1]->type.shape[0], i = in[1]->type.shape[1], o = in[2]->type.shape[0];
            std::vector<Tensor> r;
            for (const auto& t : out) r.push_back(Tensor::zeros(t));
            gemm(dy.values.data(), in[2]->values.data(), r[0].values.data(), b, o, i, false, false);
            gemm(dy.values.data(), in[1]->values.data(), r[1].values.data(), o, b, i, true, false);
            if (r.size() == 3)
                for (std::int64_t c = 0; c < o; ++c) {
                    double acc = 0.0;
                    for (std::int64_t row = 0; row < b; ++row) acc += dy.values[ix(row * o + c)];
                    r[2].values[ix(c)] = acc;
                }
            return r;
        };
        k["matmul"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            const auto m = in[0]->type.shape[0], kk = in[0]->type.shape[1], n = in[1]->type.shape[1];
            Tensor y = Tensor::zeros(out[0]);
            gemm(in[0]->values.data(), in[1]->values.data(), y.values.data(), m, kk, n, false, false);
            return std::vector<Tensor>{std::move(y)};
        };
        k["matmul_grad"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            const auto m = in[1]->type.shape[0], kk = in[1]->type.shape[1], n = in[2]->type.shape[1];
            Tensor da = Tensor::zeros(out[0]), db = Tensor::zeros(out[1]);
            gemm(in[0]->values.data(), in[2]->values.data(), da.values.data(), m, n, kk, false, true);
            gemm(in[1]->values.data(), in[0]->values.data(), db.values.data(), kk, m, n, true, false);
            return std::vector<Tensor>{std::move(da), std::move(db)};
        };
        k["batched_dot"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            const auto& a = in[0]->type.shape;
            const auto bs = a[0], m = a[1], kk = a[2], n = in[1]->type.shape[2];
            Tensor y = Tensor::zeros(out[0]);
            for (std::int64_t b = 0; b < bs; ++b)
                gemm(in[0]->values.data() + b * m * kk, in[1]->values.data() + b * kk * n,
                     y.values.data() + b * m * n, m, kk, n, false, false);
            return std::vector<Tensor>{std::move(y)};
        };
        k["batched_dot_grad"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            const auto& a = in[1]->type.shape;
            const auto bs = a[0], m = a[1], kk = a[2], n = in[2]->type.shape[2];
            Tensor da = Tensor::zeros(out[0]), db = Tensor::zeros(out[1]);
            for (std::int64_t b = 0; b < bs; ++b) {
                gemm(in[0]->values.data() + b * m * n, in[2]->values.data() + b * kk * n,
                     da.values.data() + b * m * kk, m, n, kk, false, true);
                gemm(in[1]->values.data() + b * m * kk, in[0]->values.data() + b * m * n,
                     db.values.data() + b * kk * n, kk, m, n, true, false);
            }
            return std::vector<Tensor>{std::move(da), std::move(db)};
        };
        k["conv2d"] = [](const Node& node, const Inputs& in, const auto& out, std::uint64_t) {
            const auto pad = attr_int(node.attrs, "pad", 0);
            const auto& xs = in[0]->type.shape;
            const auto& ks = in[1]->type.shape;
            const auto& ys = out[0].shape;
            Tensor y = Tensor::zeros(out[0]);
            const auto B = xs[0], Ci = xs[1], H = xs[2], W = xs[3], Co = ks[0], K = ks[2];
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t co = 0; co < Co; ++co)
                    for (std::int64_t i = 0; i < ys[2]; ++i)
                        for (std::int64_t j = 0; j < ys[3]; ++j) {
                            double acc = 0.0;
                            for (std::int64_t ci = 0; ci < Ci; ++ci)
                                for (std::int64_t p = 0; p < K; ++p)
                                    for (std::int64_t q = 0; q < K; ++q) {
                                        const auto r = i + p - pad, c = j + q - pad;
                                        if (r < 0 || r >= H || c < 0 || c >= W) continue;
                                        acc += in[0]->values[ix(((b * Ci + ci) * H + r) * W + c)] *
                                               in[1]->values[ix(((co * Ci + ci) * K + p) * K + q)];
                                    }
                            y.values[ix(((b * Co + co) * ys[2] + i) * ys[3] + j)] = acc;
                        }
            return std::vector<Tensor>{std::move(y)};
        };
        k["conv2d_grad"] = [](const Node& node, const Inputs& in, const auto& out, std::uint64_t) {
            const auto pad = attr_int(node.attrs, "pad", 0);
            const auto& dy = *in[0];
            const auto& xs = in[1]->type.shape;
            const auto& ks = in[2]->type.shape;
            const auto& ys = dy.type.shape;
            Tensor dx = Tensor::zeros(out[0]), dk = Tensor::zeros(out[1]);
            const auto B = xs[0], Ci = xs[1], H = xs[2], W = xs[3], Co = ks[0], K = ks[2];
            for (std::int64_t b = 0; b < B; ++b)
                for (std::int64_t co = 0; co < Co; ++co)
                    for (std::int64_t i = 0; i < ys[2]; ++i)
                        for (std::int64_t j = 0; j < ys[3]; ++j) {
                            const double g = dy.values[ix(((b * Co + co) * ys[2] + i) * ys[3] + j)];
                            for (std::int64_t ci = 0; ci < Ci; ++ci)
                                for (std::int64_t p = 0; p < K; ++p)
                                    for (std::int64_t q = 0; q < K; ++q) {
                                        const auto r = i + p - pad, c = j + q - pad;
                                        if (r < 0 || r >= H || c < 0 || c >= W) continue;
                                        const auto xi = ix(((b * Ci + ci) * H + r) * W + c);
                                        const auto ki = ix(((co * Ci + ci) * K + p) * K + q);
                                        dx.values[xi] += g * in[2]->values[ki];
                                        dk.values[ki] += g * in[1]->values[xi];
                                    }
                        }
            return std::vector<Tensor>{std::move(dx), std::move(dk)};
        };
        k["broadcast_add"] = [](const Node& n, const Inputs& in, const auto& out, std::uint64_t) {
            const int lo = broadcast_low_operand(in);
            if (lo < 0) return binary(in, out, [](double a, double b) { return a + b; });
            const auto& high = *in[static_cast<std::size_t>(1 - lo)];
            const auto& low = *in[static_cast<std::size_t>(lo)];
            const auto axis = norm_axis(attr_int(n.attrs, "axis", 0), high.type.shape.rank());
            const auto sp = split_at(high.type.shape, axis);
            Tensor y = Tensor::zeros(out[0]);
            for (std::int64_t o = 0; o < sp.outer; ++o)
                for (std::int64_t m = 0; m < sp.mid; ++m)
                    for (std::int64_t i = 0; i < sp.inner; ++i) {
                        const auto hi = ix((o * sp.mid + m) * sp.inner + i);
                        const auto li = ix(o * sp.inner + i);
                        // Operand order is kept so a + b rounds the same either way.
                        y.values[hi] = lo == 0 ? low.values[li] + high.values[hi] : high.values[hi] + low.values[li];
                    }
            return std::vector<Tensor>{std::move(y)};
        };
        k["reduce_axis"] = [](const Node& n, const Inputs& in, const auto& out, std::uint64_t) {
            const auto axis = norm_axis(attr_int(n.attrs, "axis", 0), in[0]->type.shape.rank());
            const auto sp = split_at(in[0]->type.shape, axis);
            Tensor y = Tensor::zeros(out[0]);
            for (std::int64_t o = 0; o < sp.outer; ++o)
                for (std::int64_t i = 0; i < sp.inner; ++i) {
                    double acc = 0.0;
                    for (std::int64_t m = 0; m < sp.mid; ++m) acc += in[0]->values[ix((o * sp.mid + m) * sp.inner + i)];
                    y.values[ix(o * sp.inner + i)] = acc;
                }
            return std::vector<Tensor>{std::move(y)};
        };
        k["sum_reduce"] = [](const Node& n, const Inputs& in, const auto& out, std::uint64_t) {
            Tensor y = Tensor::zeros(out[0]);
            if (!has_attr(n.attrs, "axis")) {
                double acc = 0.0;
                for (double v : in[0]->values) acc += v;
                y.values[0] = acc;
                return std::vector<Tensor>{std::move(y)};
            }
            const auto axis = norm_axis(attr_int(n.attrs, "axis"), in[0]->type.shape.rank());
            const auto sp = split_at(in[0]->type.shape, axis);
            for (std::int64_t o = 0; o < sp.outer; ++o)
                for (std::int64_t i = 0; i < sp.inner; ++i) {
                    double acc = 0.0;
                    for (std::int64_t m = 0; m < sp.mid; ++m) acc += in[0]->values[ix((o * sp.mid + m) * sp.inner + i)];
                    y.values[ix(o * sp.inner + i)] = acc;
                }
            return std::vector<Tensor>{std::move(y)};
        };
        k["broadcast_to"] = [](const Node& n, const Inputs& in, const auto& out, std::uint64_t) {
            Tensor y = Tensor::zeros(out[0]);
            const auto axis = attr_int(n.attrs, "axis", -1);
            if (axis < 0) {
                for (auto& v : y.values) v = in[0]->values[0];
                return std::vector<Tensor>{std::move(y)};
            }
            const auto sp = split_at(out[0].shape, static_cast<std::size_t>(axis));
            for (std::int64_t o = 0; o < sp.outer; ++o)
                for (std::int64_t m = 0; m < sp.mid; ++m)
                    for (std::int64_t i = 0; i < sp.inner; ++i)
                        y.values[ix((o * sp.mid + m) * sp.inner + i)] = in[0]->values[ix(o * sp.inner + i)];
            return std::vector<Tensor>{std::move(y)};
        };
        k["concat"] = [](const Node& n, const Inputs& in, const auto& out, std::uint64_t) {
            const bool stack = attr_int(n.attrs, "new_axis", 0) != 0;
            const auto axis = norm_axis(attr_int(n.attrs, "axis", 0), out[0].shape.rank());
            std::vector<std::int64_t> sizes;
            for (auto* t : in) sizes.push_back(stack ? 1 : t->type.shape[axis]);
            return concat_blocks(in, sizes, out[0], axis);
        };
        k["concat_grad"] = [](const Node& n, const Inputs& in, const auto& out, std::uint64_t) {
            const auto sizes = attr_ints(n.attrs, "sizes");
            const auto axis = norm_axis(attr_int(n.attrs, "axis", 0), in[0]->type.shape.rank());
            const auto sp = split_at(in[0]->type.shape, axis);
            std::vector<Tensor> r;
            std::int64_t offset = 0;
            for (std::size_t p = 0; p < sizes.size(); ++p) {
                Tensor t = Tensor::zeros(out[p]);
                const auto sz = sizes[p];
                for (std::int64_t o = 0; o < sp.outer; ++o)
                    for (std::int64_t m = 0; m < sz; ++m)
                        for (std::int64_t i = 0; i < sp.inner; ++i)
                            t.values[ix((o * sz + m) * sp.inner + i)] =
                                in[0]->values[ix((o * sp.mid + offset + m) * sp.inner + i)];
                offset += sz;
                r.push_back(std::move(t));
            }
            return r;
        };
        k["slice"] = [](const Node& n, const Inputs& in, const auto& out, std::uint64_t) {
            const auto axis = norm_axis(attr_int(n.attrs, "axis", 0), in[0]->type.shape.rank());
            const auto begin = attr_int(n.attrs, "begin");
            const auto sp = split_at(in[0]->type.shape, axis);
            const auto len = out[0].shape[axis];
            Tensor y = Tensor::zeros(out[0]);
            for (std::int64_t o = 0; o < sp.outer; ++o)
                for (std::int64_t m = 0; m < len; ++m)
                    for (std::int64_t i = 0; i < sp.inner; ++i)
                        y.values[ix((o * len + m) * sp.inner + i)] =
                            in[0]->values[ix((o * sp.mid + begin + m) * sp.inner + i)];
            return std::vector<Tensor>{std::move(y)};
        };
        k["slice_grad"] = [](const Node& n, const Inputs& in, const auto& out, std::uint64_t) {
            const auto axis = norm_axis(attr_int(n.attrs, "axis", 0), out[0].shape.rank());
            const auto begin = attr_int(n.attrs, "begin");
            const auto sp = split_at(out[0].shape, axis);
            const auto len = in[0]->type.shape[axis];
            Tensor y = Tensor::zeros(out[0]);
            for (std::int64_t o = 0; o < sp.outer; ++o)
                for (std::int64_t m = 0; m < len; ++m)
                    for (std::int64_t i = 0; i < sp.inner; ++i)
                        y.values[ix((o * sp.mid + begin + m) * sp.inner + i)] =
                            in[0]->values[ix((o * len + m) * sp.inner + i)];
            return std::vector<Tensor>{std::move(y)};
        };
        k["softmax_ce_loss"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            const auto rows = in[0]->type.shape[0], cols = in[0]->type.shape[1];
            double loss = 0.0;
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* x = in[0]->values.data() + r * cols;
                const double* l = in[1]->values.data() + r * cols;
                double mx = x[0];
                for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
                double s = 0.0;
                for (std::int64_t c = 0; c < cols; ++c) s += std::exp(x[c] - mx);
                const double lse = mx + std::log(s);
                for (std::int64_t c = 0; c < cols; ++c) loss -= l[c] * (x[c] - lse);
            }
            Tensor y = Tensor::zeros(out[0]);
            y.values[0] = loss;
            return std::vector<Tensor>{std::move(y)};
        };
        k["softmax_ce_loss_grad"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            const double dy = in[0]->values[0];
            const auto rows = in[1]->type.shape[0], cols = in[1]->type.shape[1];
            Tensor g = Tensor::zeros(out[0]);
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* x = in[1]->values.data() + r * cols;
                const double* l = in[2]->values.data() + r * cols;
                double mx = x[0];
                for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
                double s = 0.0, lsum = 0.0;
                for (std::int64_t c = 0; c < cols; ++c) {
                    s += std::exp(x[c] - mx);
                    lsum += l[c];
                }
                for (std::int64_t c = 0; c < cols; ++c)
                    g.values[ix(r * cols + c)] = dy * (std::exp(x[c] - mx) / s * lsum - l[c]);
            }
            return std::vector<Tensor>{std::move(g)};
        };
        k["ones"] = [](const Node&, const Inputs&, const auto& out, std::uint64_t) {
            Tensor y = Tensor::zeros(out[0]);
            for (auto& v : y.values) v = 1.0;
            return std::vector<Tensor>{std::move(y)};
        };
        k["sum_n"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            Tensor y = Tensor::zeros(out[0]);
            for (std::size_t i = 0; i < y.values.size(); ++i) {
                double acc = in[0]->values[i];
                for (std::size_t p = 1; p < in.size(); ++p) acc += in[p]->values[i];
                y.values[i] = acc;
            }
            return std::vector<Tensor>{std::move(y)};
        };
        k["encode"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            Tensor y = Tensor::zeros(out[0]);
            for (std::size_t i = 0; i < in[0]->values.size(); ++i)
                if (in[0]->values[i] > 0.0) y.bits[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
            return std::vector<Tensor>{std::move(y)};
        };
        k["decode"] = [](const Node&, const Inputs& in, const auto& out, std::uint64_t) {
            Tensor y = Tensor::zeros(out[0]);
            for (std::size_t i = 0; i < y.values.size(); ++i)
                y.values[i] = in[0]->bit(static_cast<std::int64_t>(i)) ? 1.0 : 0.0;
            return std::vector<Tensor>{std::move(y)};
        };
        return k;
    }();
    return table;
}

std::vector<Tensor> run_node(const Node& n, const Inputs& in, std::uint64_t seed)
{
    std::vector<TensorType> in_types;
    for (auto* t : in) in_types.push_back(t->type);
    auto out_types = registry().infer_shape(n.op, in_types, n.attrs);
    auto it = kernels().find(n.op);
    if (it == kernels().end()) throw ExecError("no kernel for op '" + n.op + "'");
    return it->second(n, in, out_types, seed);
}

const Tensor& bound_value(const Graph& g, const ExecEnv& env, NodeId id)
{
    auto it = env.bindings.find(id);
    if (it == env.bindings.end())
        throw ExecError("placeholder " + std::to_string(id) + " (" + g.node(id).placeholder->name + ") is unbound");
    if (it->second.type != g.node(id).placeholder->type)
        throw ExecError("binding for placeholder " + std::to_string(id) + " has the wrong shape");
    return it->second;
}

}  // namespace

ExecResult execute(const Graph& g, const ExecEnv& env, std::int64_t weight_multiplier)
{
    return execute(g, env, build_schedule(g), weight_multiplier);
}

ExecResult execute(const Graph& g, const ExecEnv& env, const Schedule& s, std::int64_t weight_multiplier)
{
    const ShapeMap shapes = infer_shapes(g);
    std::set<EdgeRef> outs(g.outputs().begin(), g.outputs().end());
    std::set<EdgeRef> weight_grads;
    for (const auto& t : g.grad_targets())
        if (g.node(t.placeholder).is_trainable()) weight_grads.insert(t.grad);
    std::set<EdgeRef> keep = outs;
    for (const auto& t : g.grad_targets()) keep.insert(t.grad);

    std::map<EdgeRef, std::size_t> remaining;
    for (auto id : s.steps)
        for (auto e : g.node(id).inputs) ++remaining[e];

    std::int64_t weights = 0;
    for (auto id : g.placeholders())
        if (g.node(id).is_trainable()) weights += bound_value(g, env, id).bytes() * weight_multiplier;

    ExecResult r;
    std::map<EdgeRef, Tensor> held;
    std::map<EdgeRef, Tensor> kept;
    for (auto id : s.steps) {
        const Node& n = g.node(id);
        std::vector<Tensor> produced;
        if (n.is_placeholder()) {
            produced.push_back(bound_value(g, env, id));
        } else {
            Inputs in;
            for (auto e : n.inputs) {
                auto it = held.find(e);
                if (it == held.end()) throw ExecError("node " + std::to_string(id) + " reads a released buffer");
                in.push_back(&it->second);
            }
            produced = run_node(n, in, env.seed);
        }
        for (std::uint32_t k = 0; k < produced.size(); ++k) held[{id, k}] = std::move(produced[k]);

        std::int64_t bytes = weights + node_workspace(g, shapes, id);
        for (const auto& [e, t] : held)
            if (!g.node(e.node).is_trainable() && !weight_grads.contains(e)) bytes += t.bytes();
        r.live_bytes.push_back(bytes);

        auto release = [&](EdgeRef e) {
            if (remaining[e] != 0 || outs.contains(e)) return;
            auto it = held.find(e);
            if (it == held.end()) return;
            if (keep.contains(e)) kept[e] = it->second;
            held.erase(it);
        };
        for (auto e : n.inputs) {
            --remaining[e];
            release(e);
        }
        for (std::uint32_t k = 0; k < g.num_outputs(id); ++k) release({id, k});
    }
    for (auto e : g.outputs()) r.outputs.push_back(held.at(e));
    for (const auto& t : g.grad_targets()) {
        auto it = held.find(t.grad);
        r.gradients[t.placeholder] = it != held.end() ? it->second : kept.at(t.grad);
    }
    return r;
}

std::vector<std::int64_t> measure_live_bytes(const Graph& g, const ExecEnv& env, const Schedule& s,
                                             std::int64_t weight_multiplier)
{
    return execute(g, env, s, weight_multiplier).live_bytes;
}

Tensor evaluate(const Graph& g, const ExecEnv& env, EdgeRef target)
{
    std::vector<bool> need(g.id_bound(), false);
    need[target.node] = true;
    const auto order = topo_order(g);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if (need[*it])
            for (auto e : g.node(*it).inputs) need[e.node] = true;
    std::map<EdgeRef, Tensor> vals;
    for (auto id : order) {
        if (!need[id]) continue;
        const Node& n = g.node(id);
        if (n.is_placeholder()) {
            vals[{id, 0}] = bound_value(g, env, id);
            continue;
        }
        Inputs in;
        for (auto e : n.inputs) in.push_back(&vals.at(e));
        auto produced = run_node(n, in, env.seed);
        for (std::uint32_t k = 0; k < produced.size(); ++k) vals[{id, k}] = std::move(produced[k]);
    }
    return vals.at(target);
}

std::map<NodeId, std::vector<Probe>> finite_diff(const Graph& g, const ExecEnv& env, EdgeRef loss, double eps,
                                                 std::size_t max_per_placeholder)
{
    std::map<NodeId, std::vector<Probe>> out;
    for (auto id : g.placeholders()) {
        const auto n = g.node(id).placeholder->type.shape.numel();
        std::vector<std::int64_t> idx;
        if (max_per_placeholder == 0 || static_cast<std::size_t>(n) <= max_per_placeholder) {
            for (std::int64_t i = 0; i < n; ++i) idx.push_back(i);
        } else {
            for (std::size_t k = 0; k < max_per_placeholder; ++k)
                idx.push_back(static_cast<std::int64_t>(k) * n / static_cast<std::int64_t>(max_per_placeholder));
        }
        ExecEnv probe = env;
        auto& vals = probe.bindings.at(id).values;
        for (auto i : idx) {
            const double x = vals[ix(i)];
            const double h = eps * std::max(1.0, std::abs(x));
            vals[ix(i)] = x + h;
            const double up = evaluate(g, probe, loss).values[0];
            vals[ix(i)] = x - h;
            const double down = evaluate(g, probe, loss).values[0];
            vals[ix(i)] = x;
            out[id].push_back({i, (up - down) / (2.0 * h)});
        }
    }
    return out;
}

}  // namespace echo
