#include "echo/zoo.hpp"

#include <charconv>
#include <stdexcept>

namespace echo::zoo {

namespace {

EdgeRef out0(NodeId id) { return {id, 0}; }

void require_positive(const std::map<std::string, std::int64_t>& p)
{
    for (const auto& [k, v] : p)
        if (v < 1) throw std::invalid_argument("zoo parameter " + k + " must be positive");
}

const std::map<std::string, std::map<std::string, std::int64_t>>& defaults_table()
{
    static const std::map<std::string, std::map<std::string, std::int64_t>> table{
        {"add_tanh", {{"N", 1024}}},
        {"broadcast_attn", {{"T", 64}, {"N", 256}}},
        {"lstm_cell", {{"B", 2}, {"H", 3}}},
        {"lstm_rnn", {{"B", 2}, {"T", 4}, {"H", 8}, {"layers", 2}}},
        {"nmt_like", {{"B", 4}, {"T", 16}, {"H", 32}, {"enc", 1}, {"dec", 1}}},
        {"mlp_chain", {{"B", 8}, {"H", 128}, {"depth", 3}}},
        {"conv_chain", {{"B", 2}, {"C", 4}, {"HW", 8}, {"depth", 3}}},
        {"tanh_fc", {{"B", 4}, {"H", 16}}},
    };
    return table;
}

}  // namespace

std::vector<std::string> model_names()
{
    std::vector<std::string> out;
    for (const auto& [k, v] : defaults_table()) out.push_back(k);
    return out;
}

std::map<std::string, std::int64_t> default_params(std::string_view model)
{
    auto it = defaults_table().find(std::string(model));
    if (it == defaults_table().end()) throw std::invalid_argument("unknown zoo model '" + std::string(model) + "'");
    return it->second;
}

ZooSpec parse_spec(std::string_view text)
{
    ZooSpec spec;
    auto colon = text.find(':');
    spec.model = std::string(text.substr(0, colon));
    spec.params = default_params(spec.model);
    if (colon == std::string_view::npos) return spec;
    auto rest = text.substr(colon + 1);
    while (!rest.empty()) {
        auto comma = rest.find(',');
        auto item = rest.substr(0, comma);
        auto eq = item.find('=');
        if (eq == std::string_view::npos) throw std::invalid_argument("bad zoo parameter '" + std::string(item) + "'");
        auto key = std::string(item.substr(0, eq));
        auto val = item.substr(eq + 1);
        if (key == "dtype") {
            spec.dtype = dtype_from_string(val);
        } else {
            if (!spec.params.contains(key))
                throw std::invalid_argument("model " + spec.model + " has no parameter '" + key + "'");
            std::int64_t v = 0;
            auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), v);
            if (ec != std::errc{} || ptr != val.data() + val.size())
                throw std::invalid_argument("bad value for zoo parameter " + key);
            spec.params[key] = v;
        }
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return spec;
}

std::string to_string(const ZooSpec& spec)
{
    std::string out = spec.model;
    char sep = ':';
    for (const auto& [k, v] : spec.params) {
        out += sep + k + "=" + std::to_string(v);
        sep = ',';
    }
    if (spec.dtype != Dtype::f32) out += std::string(1, sep) + "dtype=" + std::string(echo::to_string(spec.dtype));
    return out;
}

Graph build(const ZooSpec& spec)
{
    require_positive(spec.params);
    auto p = [&](const char* k) { return spec.params.at(k); };
    const auto& m = spec.model;
    if (m == "add_tanh") return add_tanh(p("N"), spec.dtype);
    if (m == "broadcast_attn") return broadcast_attn(p("T"), p("N"), spec.dtype);
    if (m == "lstm_cell") return lstm_cell(p("B"), p("H"), spec.dtype);
    if (m == "lstm_rnn") return lstm_rnn(p("B"), p("T"), p("H"), p("layers"), spec.dtype);
    if (m == "nmt_like") return nmt_like(p("B"), p("T"), p("H"), p("enc"), p("dec"), spec.dtype);
    if (m == "mlp_chain") return mlp_chain(p("B"), p("H"), p("depth"), spec.dtype);
    if (m == "conv_chain") return conv_chain(p("B"), p("C"), p("HW"), p("depth"), spec.dtype);
    if (m == "tanh_fc") return tanh_fc(p("B"), p("H"), spec.dtype);
    throw std::invalid_argument("unknown zoo model '" + m + "'");
}

Graph add_tanh(std::int64_t n, Dtype dt)
{
    Graph g;
    auto x = g.add_placeholder("X", {n}, dt);
    auto y = g.add_placeholder("Y", {n}, dt);
    auto s = g.add_node("add", {out0(x), out0(y)});
    auto z = g.add_node("tanh", {out0(s)});
    auto loss = g.add_node("sum_reduce", {out0(z)}, {}, "output");
    g.add_output(out0(loss));
    return g;
}

Graph broadcast_attn(std::int64_t t, std::int64_t n, Dtype dt)
{
    Graph g;
    auto keys = g.add_placeholder("keys", {t, n}, dt, false, "attention");
    std::vector<EdgeRef> acts;
    for (std::int64_t i = 0; i < t; ++i) {
        auto q = g.add_placeholder("q" + std::to_string(i), {n}, dt, false, "attention");
        auto a = g.add_node("broadcast_add", {out0(q), out0(keys)}, {{"axis", std::int64_t{0}}}, "attention");
        acts.push_back(out0(g.add_node("tanh", {out0(a)}, {}, "attention")));
    }
    auto cat = g.add_node("concat", acts, {{"axis", std::int64_t{0}}}, "output");
    auto loss = g.add_node("sum_reduce", {out0(cat)}, {}, "output");
    g.add_output(out0(loss));
    return g;
}

LstmCellEdges lstm_cell_block(Graph& g, EdgeRef x, EdgeRef h_prev, EdgeRef c_prev, const LstmWeights& w,
                              std::int64_t hidden, const std::string& tag)
{
    auto gx = out0(g.add_node("fully_connected", {x, w.wx, w.bias}, {{"units", 4 * hidden}}, tag));
    auto gh = out0(g.add_node("fully_connected", {h_prev, w.wh}, {{"units", 4 * hidden}}, tag));
    auto gates = out0(g.add_node("add", {gx, gh}, {}, tag));
    auto part = [&](std::int64_t k) {
        return out0(g.add_node("slice", {gates},
                               {{"axis", std::int64_t{1}}, {"begin", k * hidden}, {"end", (k + 1) * hidden}}, tag));
    };
    auto i = out0(g.add_node("sigmoid", {part(0)}, {}, tag));
    auto f = out0(g.add_node("sigmoid", {part(1)}, {}, tag));
    auto o = out0(g.add_node("sigmoid", {part(2)}, {}, tag));
    auto cand = out0(g.add_node("tanh", {part(3)}, {}, tag));
    auto keep = out0(g.add_node("mul", {f, c_prev}, {}, tag));
    auto write = out0(g.add_node("mul", {i, cand}, {}, tag));
    auto c = out0(g.add_node("add", {keep, write}, {}, tag));
    auto tc = out0(g.add_node("tanh", {c}, {}, tag));
    auto h = out0(g.add_node("mul", {o, tc}, {}, tag));
    return {h, c, {gx, gh, c_prev}};
}

namespace {

LstmWeights lstm_weights(Graph& g, std::int64_t in, std::int64_t hidden, Dtype dt, const std::string& prefix,
                         const std::string& tag)
{
    return {out0(g.add_placeholder(prefix + "Wx", {4 * hidden, in}, dt, true, tag)),
            out0(g.add_placeholder(prefix + "Wh", {4 * hidden, hidden}, dt, true, tag)),
            out0(g.add_placeholder(prefix + "b", {4 * hidden}, dt, true, tag))};
}

// Stacked, unrolled LSTM over the given per-step inputs; returns the top layer's hidden states.
std::vector<EdgeRef> lstm_stack(Graph& g, const std::vector<EdgeRef>& inputs, std::int64_t b, std::int64_t hidden,
                                std::int64_t layers, Dtype dt, const std::string& prefix, const std::string& tag,
                                std::vector<EdgeRef>* last_c = nullptr)
{
    std::vector<EdgeRef> seq = inputs;
    for (std::int64_t l = 0; l < layers; ++l) {
        const auto name = prefix + "l" + std::to_string(l) + "_";
        auto w = lstm_weights(g, hidden, hidden, dt, name, tag);
        auto h = out0(g.add_placeholder(name + "h0", {b, hidden}, dt, false, tag));
        auto c = out0(g.add_placeholder(name + "c0", {b, hidden}, dt, false, tag));
        std::vector<EdgeRef> next;
        for (auto x : seq) {
            auto cell = lstm_cell_block(g, x, h, c, w, hidden, tag);
            h = cell.h;
            c = cell.c;
            next.push_back(h);
        }
        if (last_c) last_c->push_back(c);
        seq = std::move(next);
    }
    return seq;
}

}  // namespace

Graph lstm_cell(std::int64_t b, std::int64_t h, Dtype dt)
{
    Graph g;
    auto x = out0(g.add_placeholder("x", {b, h}, dt, false, "rnn"));
    auto hp = out0(g.add_placeholder("h_prev", {b, h}, dt, false, "rnn"));
    auto cp = out0(g.add_placeholder("c_prev", {b, h}, dt, false, "rnn"));
    auto w = lstm_weights(g, h, h, dt, "", "rnn");
    auto cell = lstm_cell_block(g, x, hp, cp, w, h, "rnn");
    auto sh = out0(g.add_node("sum_reduce", {cell.h}, {}, "output"));
    auto sc = out0(g.add_node("sum_reduce", {cell.c}, {}, "output"));
    auto loss = g.add_node("add", {sh, sc}, {}, "output");
    g.add_output(out0(loss));
    return g;
}

Graph lstm_rnn(std::int64_t b, std::int64_t t, std::int64_t h, std::int64_t layers, Dtype dt)
{
    Graph g;
    std::vector<EdgeRef> xs;
    for (std::int64_t i = 0; i < t; ++i)
        xs.push_back(out0(g.add_placeholder("x" + std::to_string(i), {b, h}, dt, false, "rnn")));
    auto hs = lstm_stack(g, xs, b, h, layers, dt, "", "rnn");
    auto cat = out0(g.add_node("concat", hs, {{"axis", std::int64_t{0}}}, "output"));
    auto loss = g.add_node("sum_reduce", {cat}, {}, "output");
    g.add_output(out0(loss));
    return g;
}

Graph nmt_like(std::int64_t b, std::int64_t t, std::int64_t h, std::int64_t enc_layers, std::int64_t dec_layers,
               Dtype dt)
{
    Graph g;
    const auto vocab = h;
    auto src_embed = out0(g.add_placeholder("src_embed", {h, vocab}, dt, true, "encoder"));
    std::vector<EdgeRef> src;
    for (std::int64_t i = 0; i < t; ++i) {
        auto tok = out0(g.add_placeholder("src" + std::to_string(i), {b, vocab}, dt, false, "encoder"));
        src.push_back(out0(g.add_node("fully_connected", {tok, src_embed}, {{"units", h}}, "encoder")));
    }
    auto enc = lstm_stack(g, src, b, h, enc_layers, dt, "enc_", "encoder");
    // Encoder hidden states [B,T,H], reused by every decoder step.
    auto states = out0(g.add_node("concat", enc, {{"axis", std::int64_t{1}}, {"new_axis", std::int64_t{1}}},
                                  "attention"));

    auto tgt_embed = out0(g.add_placeholder("tgt_embed", {h, vocab}, dt, true, "decoder"));
    auto attn_w = out0(g.add_placeholder("attn_W", {h, 2 * h}, dt, true, "attention"));
    auto out_w = out0(g.add_placeholder("out_W", {vocab, h}, dt, true, "output"));
    auto out_b = out0(g.add_placeholder("out_b", {vocab}, dt, true, "output"));

    std::vector<LstmWeights> dec_w;
    std::vector<EdgeRef> dec_h, dec_c;
    for (std::int64_t l = 0; l < dec_layers; ++l) {
        const auto name = "dec_l" + std::to_string(l) + "_";
        dec_w.push_back(lstm_weights(g, h, h, dt, name, "decoder"));
        dec_h.push_back(out0(g.add_placeholder(name + "h0", {b, h}, dt, false, "decoder")));
        dec_c.push_back(out0(g.add_placeholder(name + "c0", {b, h}, dt, false, "decoder")));
    }
    auto attn = out0(g.add_placeholder("attn0", {b, h}, dt, false, "decoder"));

    std::vector<EdgeRef> logits;
    for (std::int64_t i = 0; i < t; ++i) {
        auto tok = out0(g.add_placeholder("tgt" + std::to_string(i), {b, vocab}, dt, false, "decoder"));
        auto emb = out0(g.add_node("fully_connected", {tok, tgt_embed}, {{"units", h}}, "decoder"));
        auto x = out0(g.add_node("add", {emb, attn}, {}, "decoder"));
        for (std::int64_t l = 0; l < dec_layers; ++l) {
            auto cell = lstm_cell_block(g, x, dec_h[l], dec_c[l], dec_w[l], h, "decoder");
            dec_h[l] = cell.h;
            dec_c[l] = cell.c;
            x = cell.h;
        }
        // Scoring: tanh(q + H_s) with q broadcast over source positions.
        auto score = out0(g.add_node("broadcast_add", {x, states}, {{"axis", std::int64_t{1}}}, "attention"));
        auto act = out0(g.add_node("tanh", {score}, {}, "attention"));
        auto weighted = out0(g.add_node("mul", {act, states}, {}, "attention"));
        auto ctx = out0(g.add_node("sum_reduce", {weighted}, {{"axis", std::int64_t{1}}}, "attention"));
        auto joined = out0(g.add_node("concat", {x, ctx}, {{"axis", std::int64_t{1}}}, "attention"));
        auto proj = out0(g.add_node("fully_connected", {joined, attn_w}, {{"units", h}}, "attention"));
        attn = out0(g.add_node("tanh", {proj}, {}, "attention"));
        logits.push_back(out0(g.add_node("fully_connected", {attn, out_w, out_b}, {{"units", vocab}}, "output")));
    }
    auto all = out0(g.add_node("concat", logits, {{"axis", std::int64_t{0}}}, "output"));
    auto labels = out0(g.add_placeholder("labels", {t * b, vocab}, dt, false, "output"));
    auto loss = g.add_node("softmax_ce_loss", {all, labels}, {}, "output");
    g.add_output(out0(loss));
    return g;
}

Graph mlp_chain(std::int64_t b, std::int64_t h, std::int64_t depth, Dtype dt)
{
    Graph g;
    auto x = out0(g.add_placeholder("x", {b, h}, dt, false, "mlp"));
    for (std::int64_t l = 0; l < depth; ++l) {
        const auto name = "l" + std::to_string(l) + "_";
        auto w = out0(g.add_placeholder(name + "W", {h, h}, dt, true, "mlp"));
        auto bias = out0(g.add_placeholder(name + "b", {h}, dt, true, "mlp"));
        auto fc = out0(g.add_node("fully_connected", {x, w, bias}, {{"units", h}}, "mlp"));
        auto act = out0(g.add_node("relu", {fc}, {}, "mlp"));
        x = out0(g.add_node("dropout", {act}, {{"rate", 0.25}}, "mlp"));
    }
    auto w = out0(g.add_placeholder("out_W", {h, h}, dt, true, "output"));
    auto logits = out0(g.add_node("fully_connected", {x, w}, {{"units", h}}, "output"));
    auto labels = out0(g.add_placeholder("labels", {b, h}, dt, false, "output"));
    auto loss = g.add_node("softmax_ce_loss", {logits, labels}, {}, "output");
    g.add_output(out0(loss));
    return g;
}

Graph conv_chain(std::int64_t b, std::int64_t c, std::int64_t hw, std::int64_t depth, Dtype dt)
{
    Graph g;
    auto x = out0(g.add_placeholder("x", {b, c, hw, hw}, dt, false, "conv"));
    for (std::int64_t l = 0; l < depth; ++l) {
        auto k = out0(g.add_placeholder("K" + std::to_string(l), {c, c, 3, 3}, dt, true, "conv"));
        auto conv = out0(g.add_node("conv2d", {x, k}, {{"pad", std::int64_t{1}}}, "conv"));
        x = out0(g.add_node("relu", {conv}, {}, "conv"));
    }
    auto loss = g.add_node("sum_reduce", {x}, {}, "output");
    g.add_output(out0(loss));
    return g;
}

Graph tanh_fc(std::int64_t b, std::int64_t h, Dtype dt)
{
    Graph g;
    auto x = out0(g.add_placeholder("x", {b, h}, dt, true, "hidden"));
    auto act = out0(g.add_node("tanh", {x}, {}, "hidden"));
    auto w = out0(g.add_placeholder("W", {h, h}, dt, true, "hidden"));
    auto bias = out0(g.add_placeholder("b", {h}, dt, true, "hidden"));
    auto fc = out0(g.add_node("fully_connected", {act, w, bias}, {{"units", h}}, "hidden"));
    auto loss = g.add_node("sum_reduce", {fc}, {}, "output");
    g.add_output(out0(loss));
    return g;
}

}  // namespace echo::zoo
