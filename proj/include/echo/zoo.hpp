#pragma once

#include "echo/graph.hpp"

#include <map>
#include <string>
#include <vector>

namespace echo::zoo {

struct ZooSpec {
    std::string model;
    std::map<std::string, std::int64_t> params;
    Dtype dtype = Dtype::f32;
};

// "broadcast_attn:T=64,N=256" style. Missing parameters take the model's defaults.
ZooSpec parse_spec(std::string_view text);
std::string to_string(const ZooSpec& spec);
std::vector<std::string> model_names();
std::map<std::string, std::int64_t> default_params(std::string_view model);

Graph build(const ZooSpec& spec);

Graph add_tanh(std::int64_t n, Dtype dt = Dtype::f32);
Graph broadcast_attn(std::int64_t t, std::int64_t n, Dtype dt = Dtype::f32);
Graph lstm_cell(std::int64_t b, std::int64_t h, Dtype dt = Dtype::f32);
Graph lstm_rnn(std::int64_t b, std::int64_t t, std::int64_t h, std::int64_t layers, Dtype dt = Dtype::f32);
Graph nmt_like(std::int64_t b, std::int64_t t, std::int64_t h, std::int64_t enc_layers,
               std::int64_t dec_layers, Dtype dt = Dtype::f32);
Graph mlp_chain(std::int64_t b, std::int64_t h, std::int64_t depth, Dtype dt = Dtype::f32);
Graph conv_chain(std::int64_t b, std::int64_t c, std::int64_t hw, std::int64_t depth, Dtype dt = Dtype::f32);

// tanh(x) feeding a fully-connected layer and a sum loss. x is a parameter, so the only
// activation the FC gradient needs is the tanh output.
Graph tanh_fc(std::int64_t b, std::int64_t h, Dtype dt = Dtype::f32);

struct LstmWeights {
    EdgeRef wx, wh, bias;
};

struct LstmCellEdges {
    EdgeRef h, c;
    std::vector<EdgeRef> block_inputs;  // what enters the slicing/elementwise block
};

LstmCellEdges lstm_cell_block(Graph& g, EdgeRef x, EdgeRef h_prev, EdgeRef c_prev, const LstmWeights& w,
                              std::int64_t hidden, const std::string& tag);

}  // namespace echo::zoo
