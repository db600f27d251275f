#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "d2v/eval/harness.hpp"

namespace d2v::eval {

namespace detail {

inline std::string fmt(double v, int prec = 4) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}

inline const char* palette(int i) {
    static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                   "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    return colors[i % 10];
}

struct SvgCanvas {
    std::string body;
    int w, h;

    SvgCanvas(int w, int h) : w(w), h(h) {}

    void line(double x1, double y1, double x2, double y2, const char* color, double width,
              double opacity = 1.0) {
        char buf[256];
        std::snprintf(buf, sizeof(buf),
                      "<line x1='%.2f' y1='%.2f' x2='%.2f' y2='%.2f' stroke='%s' "
                      "stroke-width='%.2f' opacity='%.2f'/>\n",
                      x1, y1, x2, y2, color, width, opacity);
        body += buf;
    }
    void circle(double x, double y, double r, const char* color) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "<circle cx='%.2f' cy='%.2f' r='%.2f' fill='%s'/>\n", x, y,
                      r, color);
        body += buf;
    }
    void text(double x, double y, const std::string& s, int size = 11,
              const char* color = "#333333") {
        char buf[320];
        std::snprintf(buf, sizeof(buf),
                      "<text x='%.2f' y='%.2f' font-size='%d' fill='%s' "
                      "font-family='sans-serif'>%s</text>\n",
                      x, y, size, color, s.c_str());
        body += buf;
    }

    std::string finish() const {
        char head[160];
        std::snprintf(head, sizeof(head),
                      "<svg xmlns='http://www.w3.org/2000/svg' width='%d' height='%d' "
                      "viewBox='0 0 %d %d'>\n",
                      w, h, w, h);
        return std::string(head) + "<rect width='100%' height='100%' fill='white'/>\n" + body +
               "</svg>\n";
    }
};

} // namespace detail

/// Accuracy-vs-distance scatter with the least-squares fit and the PCC.
inline std::string svg_accuracy_scatter(const Eigen::MatrixXd& accuracy,
                                        const Eigen::MatrixXd& distances, double pcc) {
    std::vector<double> xs, ys;
    for (int i = 0; i < accuracy.rows(); ++i)
        for (int j = 0; j < accuracy.cols(); ++j) {
            if (i == j || std::isnan(accuracy(i, j))) continue;
            xs.push_back(distances(i, j));
            ys.push_back(accuracy(i, j));
        }
    const int W = 480, H = 360, M = 48;
    detail::SvgCanvas svg(W, H);
    double xmin = 1e300, xmax = -1e300;
    for (double x : xs) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
    }
    if (xmax <= xmin) xmax = xmin + 1;
    auto px = [&](double x) { return M + (x - xmin) / (xmax - xmin) * (W - 2 * M); };
    auto py = [&](double y) { return H - M - y * (H - 2 * M); };

    svg.line(M, H - M, W - M, H - M, "#888888", 1.0);
    svg.line(M, M, M, H - M, "#888888", 1.0);
    svg.text(W / 2 - 40, H - 12, "embedding distance");
    svg.text(8, M - 10, "accuracy");

    // least-squares fit
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= xs.size();
    my /= ys.size();
    double sxy = 0, sxx = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    if (sxx > 0) {
        double slope = sxy / sxx, icpt = my - slope * mx;
        svg.line(px(xmin), py(slope * xmin + icpt), px(xmax), py(slope * xmax + icpt), "#d62728",
                 1.5, 0.9);
    }
    for (size_t i = 0; i < xs.size(); ++i)
        svg.circle(px(xs[i]), py(std::min(1.0, std::max(0.0, ys[i]))), 3.0, "#1f77b4");
    svg.text(W - 170, M, std::string("PCC = ") + detail::fmt(pcc), 13, "#d62728");
    return svg.finish();
}

/// Reduced-coordinate scatter of the domain embeddings.
inline std::string svg_embedding_scatter(const Eigen::MatrixXd& coords,
                                         const std::vector<std::string>& labels) {
    require(coords.cols() >= 2, "embedding scatter needs 2-D coordinates");
    const int W = 480, H = 420, M = 40;
    detail::SvgCanvas svg(W, H);
    double xmin = coords.col(0).minCoeff(), xmax = coords.col(0).maxCoeff();
    double ymin = coords.col(1).minCoeff(), ymax = coords.col(1).maxCoeff();
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    auto px = [&](double x) { return M + (x - xmin) / (xmax - xmin) * (W - 2 * M); };
    auto py = [&](double y) { return H - M - (y - ymin) / (ymax - ymin) * (H - 2 * M); };
    for (int i = 0; i < coords.rows(); ++i) {
        svg.circle(px(coords(i, 0)), py(coords(i, 1)), 5.0, detail::palette(i));
        if (i < int(labels.size()))
            svg.text(px(coords(i, 0)) + 7, py(coords(i, 1)) + 4, labels[i], 9);
    }
    return svg.finish();
}

/// Knowledge-graph rendering: nodes at the reduced coordinates, edges drawn
/// with width inversely related to distance, node size by sample count.
inline std::string svg_knowledge_graph(const embed::KnowledgeGraph& graph,
                                       const Eigen::MatrixXd& coords,
                                       const std::vector<std::string>& labels) {
    require(int(graph.nodes.size()) == coords.rows(), "graph/coords size mismatch");
    const int W = 520, H = 460, M = 50;
    detail::SvgCanvas svg(W, H);
    double xmin = coords.col(0).minCoeff(), xmax = coords.col(0).maxCoeff();
    double ymin = coords.col(1).minCoeff(), ymax = coords.col(1).maxCoeff();
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    auto px = [&](double x) { return M + (x - xmin) / (xmax - xmin) * (W - 2 * M); };
    auto py = [&](double y) { return H - M - (y - ymin) / (ymax - ymin) * (H - 2 * M); };

    double dmax = 1e-12;
    for (const auto& e : graph.edges) dmax = std::max(dmax, e.distance);
    for (const auto& e : graph.edges)
        svg.line(px(coords(e.src, 0)), py(coords(e.src, 1)), px(coords(e.dst, 0)),
                 py(coords(e.dst, 1)), "#999999", 0.5 + 2.5 * (1.0 - e.distance / dmax), 0.6);

    int64_t cmax = 1;
    for (const auto& n : graph.nodes) cmax = std::max(cmax, n.sample_count);
    for (size_t i = 0; i < graph.nodes.size(); ++i) {
        double r = 4.0 + 6.0 * double(graph.nodes[i].sample_count) / double(cmax);
        svg.circle(px(coords(i, 0)), py(coords(i, 1)), r, detail::palette(graph.nodes[i].degree));
        if (i < labels.size()) svg.text(px(coords(i, 0)) + r + 2, py(coords(i, 1)) + 4, labels[i], 9);
    }
    return svg.finish();
}

/// Renders report.md plus the SVG figures into `out_dir`. Pure over its
/// inputs: identical artifacts give byte-identical files.
inline void write_report(const TransferReport& report, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    {
        std::ofstream f(out_dir + "/accuracy_vs_distance.svg");
        f << svg_accuracy_scatter(report.accuracy, report.distances, report.pcc);
    }
    {
        std::ofstream f(out_dir + "/embedding_scatter.svg");
        f << svg_embedding_scatter(report.reduced, report.domain_labels);
    }
    {
        std::ofstream f(out_dir + "/knowledge_graph.svg");
        f << svg_knowledge_graph(report.graph, report.reduced, report.domain_labels);
    }

    std::ofstream md(out_dir + "/report.md");
    if (!md) throw IoError("cannot write report", out_dir + "/report.md");
    md << "# Transfer analysis report\n\n";
    md << "- ablation: `" << report.ablation_tag << "`\n";
    md << "- seed: " << report.seed << "\n";
    md << "- domains: " << report.domain_ids.size() << "\n";
    md << "- accuracy/distance PCC (off-diagonal): **" << detail::fmt(report.pcc) << "**\n\n";

    md << "![accuracy vs distance](accuracy_vs_distance.svg)\n";
    md << "![embedding scatter](embedding_scatter.svg)\n";
    md << "![knowledge graph](knowledge_graph.svg)\n\n";

    auto table = [&](const Eigen::MatrixXd& m, const std::string& title, int prec) {
        md << "## " << title << "\n\n|  |";
        for (size_t j = 0; j < report.domain_labels.size(); ++j)
            md << " " << report.domain_labels[j] << " |";
        md << "\n|--|";
        for (size_t j = 0; j < report.domain_labels.size(); ++j) md << "--|";
        md << "\n";
        for (int i = 0; i < m.rows(); ++i) {
            md << "| **" << report.domain_labels[i] << "** |";
            for (int j = 0; j < m.cols(); ++j)
                md << " " << (std::isnan(m(i, j)) ? std::string("-") : detail::fmt(m(i, j), prec))
                   << " |";
            md << "\n";
        }
        md << "\n";
    };
    table(report.accuracy, "Cross-domain accuracy (rows = source)", 3);
    table(report.distances, "Embedding distances", 3);

    md << "## Knowledge graph\n\nSee `graph.dot` / `graph.json` beside this report.\n";
}

} // namespace d2v::eval
