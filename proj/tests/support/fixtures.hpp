#pragma once

#include "echo/zoo.hpp"

#include <string>
#include <vector>

namespace echo::testing {

struct ZooCase {
    std::string name;
    Graph graph;
};

// Every zoo model at its default size, f64.
inline std::vector<ZooCase> zoo_cases()
{
    std::vector<ZooCase> out;
    for (const auto& m : zoo::model_names()) {
        auto spec = zoo::parse_spec(m);
        spec.dtype = Dtype::f64;
        out.push_back({m, zoo::build(spec)});
    }
    return out;
}

// Small enough to interpret and finite-difference quickly.
inline std::vector<ZooCase> small_zoo_cases()
{
    std::vector<ZooCase> out;
    for (const auto* s : {"add_tanh:N=16", "broadcast_attn:T=4,N=6", "lstm_cell", "lstm_rnn:B=2,T=3,H=4",
                          "nmt_like:B=2,T=3,H=4", "mlp_chain:B=3,H=5,depth=2", "conv_chain:B=1,C=2,HW=4,depth=2",
                          "tanh_fc:B=2,H=3"}) {
        auto spec = zoo::parse_spec(s);
        spec.dtype = Dtype::f64;
        out.push_back({s, zoo::build(spec)});
    }
    return out;
}

}  // namespace echo::testing
