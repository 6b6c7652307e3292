#include "echo/dot.hpp"
#include "echo/ops.hpp"
#include "echo/report.hpp"
#include "echo/verify.hpp"
#include "echo/zoo.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

namespace py = pybind11;
using namespace echo;

namespace {

// Graph document text (starts with '{') or a zoo spec.
Graph load(const std::string& input)
{
    const auto first = input.find_first_not_of(" \t\r\n");
    Graph g = first != std::string::npos && input[first] == '{' ? deserialize(input)
                                                                : zoo::build(zoo::parse_spec(input));
    g.validate();
    return g;
}

StrategyConfig config(const std::string& strategy, bool dead_node, bool binarization,
                      const std::optional<std::vector<std::string>>& compute_heavy)
{
    auto cfg = StrategyConfig::defaults(strategy_from_string(strategy));
    cfg.dead_node = dead_node;
    cfg.binarization = binarization;
    if (compute_heavy) {
        cfg.compute_heavy.clear();
        for (const auto& op : *compute_heavy) {
            if (!registry().contains(op)) throw std::invalid_argument("unknown op '" + op + "'");
            cfg.compute_heavy.insert(op);
        }
    }
    return cfg;
}

py::object to_py(const nlohmann::ordered_json& doc)
{
    return py::module_::import("json").attr("loads")(doc.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "Recompute planning for training graphs.";

    py::register_exception<CapExceeded>(m, "CapExceeded", PyExc_RuntimeError);

    m.def("model_names", &zoo::model_names, "Names of the built-in models.");

    m.def("build_model", [](const std::string& spec) { return serialize(zoo::build(zoo::parse_spec(spec))); },
          py::arg("spec"), "Graph document (JSON text) for a zoo spec such as 'nmt_like:T=8'.");

    m.def(
        "analyze",
        [](const std::string& input, const std::string& strategy, std::int64_t weight_multiplier, bool dead_node,
           bool binarization, std::optional<std::vector<std::string>> compute_heavy) {
            const auto g = load(input);
            const auto cfg = config(strategy, dead_node, binarization, compute_heavy);
            return to_py(to_json(analyze(g, input, cfg, weight_multiplier)));
        },
        py::arg("input"), py::arg("strategy") = "echo", py::arg("weight_multiplier") = default_weight_multiplier,
        py::arg("dead_node") = true, py::arg("binarization") = true, py::arg("compute_heavy") = py::none(),
        "Runs the pipeline on a zoo spec or graph document and returns the analyze report as a dict.");

    m.def(
        "compare",
        [](const std::string& input, const std::vector<std::string>& strategies, std::int64_t weight_multiplier,
           bool dead_node, bool binarization) {
            if (strategies.size() < 2) throw std::invalid_argument("compare needs at least two strategies");
            const auto g = load(input);
            std::vector<Analysis> rows;
            for (const auto& s : strategies)
                rows.push_back(analyze(g, input, config(s, dead_node, binarization, std::nullopt), weight_multiplier));
            return to_py(compare_json(rows));
        },
        py::arg("input"), py::arg("strategies"), py::arg("weight_multiplier") = default_weight_multiplier,
        py::arg("dead_node") = true, py::arg("binarization") = true);

    m.def(
        "verify",
        [](const std::string& input, const std::string& strategy, std::uint64_t seed, std::int64_t max_elements) {
            VerifyOptions opt;
            opt.seed = seed;
            opt.max_elements = max_elements;
            const auto v = verify(load(input), config(strategy, true, true, std::nullopt), opt);
            py::dict d;
            d["ok"] = v.ok();
            d["outputs_match"] = v.outputs_match;
            d["gradients_match"] = v.gradients_match;
            d["live_bytes_match"] = v.live_bytes_match;
            d["largest_tensor"] = v.largest_tensor;
            d["mismatches"] = v.mismatches;
            return d;
        },
        py::arg("input"), py::arg("strategy") = "echo", py::arg("seed") = 0, py::arg("max_elements") = 100000,
        "Interprets baseline and transformed graphs and compares results bitwise.");

    m.def(
        "export_dot",
        [](const std::string& input, const std::string& strategy) {
            const auto r = run_pipeline(load(input), StrategyConfig::defaults(strategy_from_string(strategy)));
            return export_dot(r.final_graph, &r.plan);
        },
        py::arg("input"), py::arg("strategy") = "echo");
}
