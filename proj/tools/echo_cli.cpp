#include "echo/dot.hpp"
#include "echo/ops.hpp"
#include "echo/report.hpp"
#include "echo/verify.hpp"
#include "echo/zoo.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

using namespace echo;

namespace {

enum Exit : int { ok = 0, bad_input = 1, pipeline_failed = 2, cap_exceeded = 3, verify_failed = 4 };

// Failures while reading the command line, config or input graph.
class InputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Options {
    std::string strategy = "echo";
    std::int64_t weight_multiplier = default_weight_multiplier;
    bool no_dead_node = false;
    bool no_binarization = false;
    std::string compute_heavy;
    bool json = false;
    std::uint64_t seed = 0;
    std::string out;

    std::string input;
    std::vector<std::string> strategies;
    std::int64_t max_elements = 100000;
    bool corrupt_plan = false;
};

std::string read_stream(std::istream& in)
{
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// A path to a graph document, "-" for stdin, or a zoo spec such as "nmt_like:T=8".
Graph load_input(const std::string& arg)
{
    Graph g;
    try {
        if (arg == "-") {
            g = deserialize(read_stream(std::cin));
        } else if (std::filesystem::is_regular_file(arg)) {
            std::ifstream f(arg);
            if (!f) throw InputError("cannot open " + arg);
            g = deserialize(read_stream(f));
        } else if (arg.ends_with(".json")) {
            throw InputError("no such file: " + arg);
        } else {
            g = zoo::build(zoo::parse_spec(arg));
        }
        g.validate();
        infer_shapes(g);
    } catch (const InputError&) {
        throw;
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
    return g;
}

Strategy parse_strategy(const std::string& s)
{
    try {
        return strategy_from_string(s);
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
}

StrategyConfig make_config(const Options& o, Strategy s)
{
    auto cfg = StrategyConfig::defaults(s);
    cfg.dead_node = !o.no_dead_node;
    cfg.binarization = !o.no_binarization;
    if (!o.compute_heavy.empty()) {
        cfg.compute_heavy.clear();
        std::istringstream in(o.compute_heavy);
        for (std::string name; std::getline(in, name, ',');) {
            if (name.empty()) continue;
            if (!registry().contains(name)) throw InputError("unknown op '" + name + "' in --compute-heavy");
            cfg.compute_heavy.insert(name);
        }
    }
    return cfg;
}

void emit(const Options& o, const std::string& text)
{
    if (o.out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream f(o.out);
    if (!f) throw InputError("cannot write " + o.out);
    f << text;
}

int cmd_analyze(const Options& o)
{
    const auto g = load_input(o.input);
    const auto cfg = make_config(o, parse_strategy(o.strategy));
    const auto a = analyze(g, o.input, cfg, o.weight_multiplier);
    emit(o, o.json ? to_json(a).dump(2) + "\n" : to_table(a));
    return ok;
}

int cmd_compare(const Options& o)
{
    if (o.strategies.size() < 2) throw InputError("compare needs at least two strategies");
    const auto g = load_input(o.input);
    std::vector<Analysis> rows;
    for (const auto& s : o.strategies) {
        const auto cfg = make_config(o, parse_strategy(s));
        rows.push_back(analyze(g, o.input, cfg, o.weight_multiplier));
    }
    emit(o, o.json ? compare_json(rows).dump(2) + "\n" : compare_table(rows));
    return ok;
}

int cmd_verify(const Options& o)
{
    const auto g = load_input(o.input);
    const auto cfg = make_config(o, parse_strategy(o.strategy));
    VerifyOptions vo;
    vo.seed = o.seed;
    vo.max_elements = o.max_elements;
    vo.weight_multiplier = o.weight_multiplier;
    vo.corrupt_plan = o.corrupt_plan;
    const auto v = verify(g, cfg, vo);

    if (o.json) {
        nlohmann::ordered_json doc{{"schema", verify_schema},
                                   {"input", o.input},
                                   {"strategy", to_string(cfg.strategy)},
                                   {"seed", o.seed},
                                   {"largest_tensor", v.largest_tensor},
                                   {"outputs_match", v.outputs_match},
                                   {"gradients_match", v.gradients_match},
                                   {"live_bytes_match", v.live_bytes_match},
                                   {"mismatches", v.mismatches},
                                   {"result", v.ok() ? "pass" : "fail"}};
        emit(o, doc.dump(2) + "\n");
    } else {
        std::string text = "verify " + o.input + " (" + std::string(to_string(cfg.strategy)) + ", seed " +
                           std::to_string(o.seed) + "): " + (v.ok() ? "PASS" : "FAIL") + "\n";
        for (const auto& m : v.mismatches) text += "  " + m + "\n";
        emit(o, text);
    }
    return v.ok() ? ok : verify_failed;
}

int cmd_build_model(const Options& o)
{
    Graph g;
    try {
        g = zoo::build(zoo::parse_spec(o.input));
    } catch (const std::exception& e) {
        throw InputError(e.what());
    }
    emit(o, serialize(g) + "\n");
    return ok;
}

int cmd_export_dot(const Options& o)
{
    const auto g = load_input(o.input);
    const auto cfg = make_config(o, parse_strategy(o.strategy));
    const auto r = run_pipeline(g, cfg, o.weight_multiplier);
    emit(o, export_dot(r.final_graph, &r.plan));
    return ok;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Recompute planning for training graphs: analyze, compare and verify memory plans."};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "Read options from a TOML file; command-line flags take precedence");

    Options o;
    app.add_option("--strategy", o.strategy, "baseline, mirror or echo")->capture_default_str();
    app.add_option("--weight-multiplier", o.weight_multiplier, "Bytes charged per weight byte")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app.add_flag("--no-dead-node", o.no_dead_node, "Disable dead-node handling of compute-heavy ops");
    app.add_flag("--no-binarization", o.no_binarization, "Disable 1-bit stashing of relu/dropout outputs");
    app.add_option("--compute-heavy", o.compute_heavy, "Comma-separated op names treated as compute-heavy");
    app.add_flag("--json", o.json, "Machine-readable output");
    app.add_option("--seed", o.seed, "Seed for interpreter bindings")->capture_default_str();
    app.add_option("--out", o.out, "Write output to this file instead of stdout");

    const char* input_help = "Graph JSON file, '-' for stdin, or zoo spec (e.g. broadcast_attn:T=8,N=32)";
    auto* analyze = app.add_subcommand("analyze", "Run the pipeline and report memory and cost");
    analyze->add_option("input", o.input, input_help)->required();

    auto* compare = app.add_subcommand("compare", "Side-by-side table for two or more strategies");
    compare->add_option("input", o.input, input_help)->required();
    compare->add_option("strategies", o.strategies, "Strategies to compare, first is the reference")->required();

    auto* verify_cmd = app.add_subcommand("verify", "Check transformed graphs against baseline in the interpreter");
    verify_cmd->add_option("input", o.input, input_help)->required();
    verify_cmd->add_option("--max-elements", o.max_elements, "Largest tensor the interpreter accepts")
        ->capture_default_str();
    verify_cmd->add_flag("--corrupt-plan", o.corrupt_plan)->group("");

    auto* build = app.add_subcommand("build-model", "Emit the graph document for a zoo spec");
    build->add_option("spec", o.input, "Zoo spec, e.g. nmt_like:B=4,T=16")->required();

    auto* dot = app.add_subcommand("export-dot", "Graphviz rendering of the transformed graph");
    dot->add_option("input", o.input, input_help)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return bad_input;
    }

    try {
        if (*analyze) return cmd_analyze(o);
        if (*compare) return cmd_compare(o);
        if (*verify_cmd) return cmd_verify(o);
        if (*build) return cmd_build_model(o);
        if (*dot) return cmd_export_dot(o);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return bad_input;
    } catch (const CapExceeded& e) {
        std::cerr << "error: " << e.what() << "\n";
        return cap_exceeded;
    } catch (const std::exception& e) {
        std::cerr << "pipeline error: " << e.what() << "\n";
        return pipeline_failed;
    }
    return ok;
}
