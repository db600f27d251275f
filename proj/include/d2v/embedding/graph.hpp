#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "d2v/core/error.hpp"

namespace d2v::embed {

struct GraphEdge {
    int src = 0;  // dense index
    int dst = 0;
    double distance = 0;
};

struct GraphNode {
    int domain_id = -1;
    int64_t sample_count = 0;
    int degree = 0;  // in-degree + out-degree in the directed k-NN graph
};

/// Directed k-nearest-neighbor graph over the domain distance matrix.
struct KnowledgeGraph {
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
    int k = 5;

    nlohmann::json to_json(const std::vector<std::string>& labels = {}) const {
        nlohmann::json j;
        j["k"] = k;
        j["nodes"] = nlohmann::json::array();
        for (size_t i = 0; i < nodes.size(); ++i) {
            nlohmann::json nj{{"domain_id", nodes[i].domain_id},
                              {"sample_count", nodes[i].sample_count},
                              {"degree", nodes[i].degree}};
            if (i < labels.size()) nj["label"] = labels[i];
            j["nodes"].push_back(nj);
        }
        j["edges"] = nlohmann::json::array();
        for (const auto& e : edges)
            j["edges"].push_back({{"src", e.src}, {"dst", e.dst}, {"distance", e.distance}});
        return j;
    }

    static KnowledgeGraph from_json(const nlohmann::json& j) {
        KnowledgeGraph g;
        g.k = j.at("k").get<int>();
        for (const auto& nj : j.at("nodes")) {
            GraphNode n;
            n.domain_id = nj.at("domain_id").get<int>();
            n.sample_count = nj.at("sample_count").get<int64_t>();
            n.degree = nj.at("degree").get<int>();
            g.nodes.push_back(n);
        }
        for (const auto& ej : j.at("edges"))
            g.edges.push_back({ej.at("src").get<int>(), ej.at("dst").get<int>(),
                               ej.at("distance").get<double>()});
        return g;
    }

    /// Graphviz-compatible rendering; byte-deterministic for fixed inputs.
    std::string to_dot(const std::vector<std::string>& labels = {}) const {
        std::string out = "digraph domains {\n  node [shape=circle];\n";
        char buf[160];
        for (size_t i = 0; i < nodes.size(); ++i) {
            std::string label = i < labels.size() ? labels[i] : std::to_string(nodes[i].domain_id);
            std::snprintf(buf, sizeof(buf), "  n%d [label=\"%s\", samples=%lld, degree=%d];\n",
                          int(i), label.c_str(), (long long)nodes[i].sample_count, nodes[i].degree);
            out += buf;
        }
        for (const auto& e : edges) {
            std::snprintf(buf, sizeof(buf), "  n%d -> n%d [weight=%.6f, label=\"%.4f\"];\n", e.src,
                          e.dst, e.distance, e.distance);
            out += buf;
        }
        out += "}\n";
        return out;
    }
};

/// Builds the k-NN graph: each node gets edges to its k closest others (all
/// of them when N <= k). Ties break toward the lower index.
inline KnowledgeGraph knn_graph(const Eigen::MatrixXd& distances, int k = 5,
                                const std::vector<int>& domain_ids = {},
                                const std::vector<int64_t>& sample_counts = {}) {
    const int n = int(distances.rows());
    require(n >= 2, "knn_graph needs at least two nodes");
    require(distances.cols() == n, "knn_graph: matrix must be square");
    for (int i = 0; i < n; ++i) {
        require(distances(i, i) == 0.0, "knn_graph: diagonal must be zero");
        for (int j = 0; j < n; ++j) {
            require(distances(i, j) >= 0.0, "knn_graph: distances must be non-negative");
            require(distances(i, j) == distances(j, i), "knn_graph: matrix must be symmetric");
        }
    }

    KnowledgeGraph g;
    g.k = k;
    g.nodes.resize(n);
    for (int i = 0; i < n; ++i) {
        g.nodes[i].domain_id = i < int(domain_ids.size()) ? domain_ids[i] : i;
        g.nodes[i].sample_count = i < int(sample_counts.size()) ? sample_counts[i] : 0;
    }

    std::vector<int> in_degree(n, 0), out_degree(n, 0);
    for (int i = 0; i < n; ++i) {
        std::vector<int> cand;
        for (int j = 0; j < n; ++j)
            if (j != i) cand.push_back(j);
        std::sort(cand.begin(), cand.end(), [&](int a, int b) {
            if (distances(i, a) != distances(i, b)) return distances(i, a) < distances(i, b);
            return a < b;
        });
        int take = std::min<int>(k, int(cand.size()));
        for (int t = 0; t < take; ++t) {
            g.edges.push_back({i, cand[t], distances(i, cand[t])});
            ++out_degree[i];
            ++in_degree[cand[t]];
        }
    }
    for (int i = 0; i < n; ++i) g.nodes[i].degree = in_degree[i] + out_degree[i];
    return g;
}

} // namespace d2v::embed
