#include "echo/dot.hpp"

#include <set>
#include <sstream>

namespace echo {

namespace {

std::string escape(std::string_view s)
{
    std::string r;
    for (char c : s) {
        if (c == '"' || c == '\\') r.push_back('\\');
        r.push_back(c);
    }
    return r;
}

std::string_view node_style(NodeKind k)
{
    switch (k) {
    case NodeKind::forward: return "shape=box";
    case NodeKind::gradient: return "shape=box,color=gray40";
    case NodeKind::mirror: return "shape=box,style=dashed,color=blue";
    case NodeKind::dead_mirror: return "shape=box,style=dotted,color=gray70";
    case NodeKind::encode:
    case NodeKind::decode: return "shape=diamond,color=darkgreen";
    }
    return "shape=box";
}

}  // namespace

std::string export_dot(const Graph& g, const RecomputePlan* plan)
{
    if (g.size() == 0) return "digraph { }\n";
    std::set<EdgeRef> stashed;
    if (plan) stashed.insert(plan->stashed_edges.begin(), plan->stashed_edges.end());

    std::ostringstream os;
    os << "digraph {\n  rankdir=TB;\n";
    for (auto id : topo_order(g)) {
        const Node& n = g.node(id);
        std::string label = escape(n.is_placeholder() ? n.placeholder->name : n.op);
        label += "\\n#" + std::to_string(id);
        if (!n.tag.empty()) label += " " + escape(n.tag);
        os << "  n" << id << " [label=\"" << label << "\","
           << (n.is_placeholder() ? std::string_view{"shape=ellipse"} : node_style(n.kind)) << "];\n";
    }
    for (auto id : g.node_ids()) {
        const Node& n = g.node(id);
        for (auto e : n.inputs) {
            os << "  n" << e.node << " -> n" << id;
            std::string attrs;
            if (g.num_outputs(e.node) > 1) attrs += "label=\"" + std::to_string(e.index) + "\"";
            if (stashed.contains(e)) attrs += std::string(attrs.empty() ? "" : ",") + "color=red,penwidth=2";
            if (!attrs.empty()) os << " [" << attrs << "]";
            os << ";\n";
        }
    }
    os << "}\n";
    return os.str();
}

}  // namespace echo
