#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "d2v/embedding/graph.hpp"
#include "d2v/embedding/reduce.hpp"
#include "d2v/eval/metrics.hpp"
#include "d2v/msda/msda.hpp"
#include "d2v/training/trainer.hpp"

namespace d2v::eval {

/// Ablation switches of the pipeline: the full model, prototype-only
/// embeddings, or training without the mutual-information term.
enum class AblationTag { full, no_gram, no_mi };

inline AblationTag ablation_from_string(const std::string& s) {
    if (s == "full") return AblationTag::full;
    if (s == "no-gram") return AblationTag::no_gram;
    if (s == "no-mi") return AblationTag::no_mi;
    throw PreconditionError("unknown ablation tag: " + s);
}

inline const char* to_string(AblationTag t) {
    switch (t) {
        case AblationTag::full: return "full";
        case AblationTag::no_gram: return "no-gram";
        case AblationTag::no_mi: return "no-mi";
    }
    return "?";
}

struct EvalConfig {
    train::TrainConfig disentangle;  // joint model training
    train::TrainConfig cell;         // per-source classifier training
    int embed_max_examples = 0;      // 0 = all
    std::string metric = "cosine";
    int knn_k = 5;
    int pca_dim = 16;
    int final_dim = 2;
    bool last_layer_only = false;
    int workers = 2;
    std::optional<model::ModelDims> custom_dims;  // tests; not serialized

    nlohmann::json to_json() const {
        return {{"disentangle", disentangle.to_json()},
                {"cell", cell.to_json()},
                {"embed_max_examples", embed_max_examples},
                {"metric", metric},
                {"knn_k", knn_k},
                {"pca_dim", pca_dim},
                {"final_dim", final_dim},
                {"last_layer_only", last_layer_only},
                {"workers", workers}};
    }
    static EvalConfig from_json(const nlohmann::json& j) {
        EvalConfig c;
        if (j.contains("disentangle")) c.disentangle = train::TrainConfig::from_json(j.at("disentangle"));
        if (j.contains("cell")) c.cell = train::TrainConfig::from_json(j.at("cell"));
        c.embed_max_examples = j.value("embed_max_examples", 0);
        c.metric = j.value("metric", "cosine");
        c.knn_k = j.value("knn_k", 5);
        c.pca_dim = j.value("pca_dim", 16);
        c.final_dim = j.value("final_dim", 2);
        c.last_layer_only = j.value("last_layer_only", false);
        c.workers = j.value("workers", 2);
        return c;
    }
};

/// Everything the analysis produces for one (config, tag, seed) run.
struct TransferReport {
    std::vector<int> domain_ids;
    std::vector<std::string> domain_labels;
    Eigen::MatrixXd accuracy;   // [source][target]; NaN marks a failed cell
    Eigen::MatrixXd distances;  // embedding distances, same ordering
    Eigen::MatrixXd reduced;    // N x final_dim coordinates
    embed::KnowledgeGraph graph;
    double pcc = 0;
    std::string ablation_tag = "full";
    uint64_t seed = 0;

    nlohmann::json meta_json() const {
        return {{"pcc", pcc},
                {"ablation", ablation_tag},
                {"seed", seed},
                {"domain_ids", domain_ids},
                {"domain_labels", domain_labels}};
    }
};

inline void save_matrix_csv(const Eigen::MatrixXd& m, const std::vector<int>& ids,
                            const std::string& path, const char* corner) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write matrix", path);
    out << corner;
    for (int id : ids) out << "," << id;
    out << "\n";
    out.precision(17);
    for (int i = 0; i < m.rows(); ++i) {
        out << ids[i];
        for (int j = 0; j < m.cols(); ++j) out << "," << m(i, j);
        out << "\n";
    }
}

inline Eigen::MatrixXd load_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read matrix", path);
    std::string line;
    require(bool(std::getline(in, line)), "empty matrix csv");
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> vals;
        size_t pos = line.find(',');  // skip the row-label column
        require(pos != std::string::npos, "malformed matrix csv row");
        while (pos != std::string::npos) {
            size_t next = line.find(',', pos + 1);
            std::string tok = line.substr(pos + 1, next == std::string::npos ? std::string::npos
                                                                             : next - pos - 1);
            vals.push_back(tok == "nan" || tok == "-nan" ? std::nan("") : std::stod(tok));
            pos = next;
        }
        rows.push_back(std::move(vals));
    }
    require(!rows.empty(), "matrix csv has no data rows");
    Eigen::MatrixXd m(rows.size(), rows[0].size());
    for (size_t i = 0; i < rows.size(); ++i) {
        require(rows[i].size() == rows[0].size(), "ragged matrix csv");
        for (size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    }
    return m;
}

/// PCC between off-diagonal accuracies and embedding distances (diagonal
/// cells are excluded; NaN cells are skipped).
inline double accuracy_distance_pcc(const Eigen::MatrixXd& accuracy,
                                    const Eigen::MatrixXd& distances) {
    require(accuracy.rows() == distances.rows() && accuracy.cols() == distances.cols(),
            "matrices must share the domain ordering");
    std::vector<double> acc, dist;
    for (int i = 0; i < accuracy.rows(); ++i)
        for (int j = 0; j < accuracy.cols(); ++j) {
            if (i == j || std::isnan(accuracy(i, j))) continue;
            acc.push_back(accuracy(i, j));
            dist.push_back(distances(i, j));
        }
    return pearson_cc(acc, dist);
}

// ---------------------------------------------------------------------------

/// Trains one classifier per source domain and fills A[i][j] with the
/// accuracy of source-i's model on target-j's held-out split. Cells run on a
/// small worker pool; a failed cell marks its row NaN and the sweep
/// continues.
inline Eigen::MatrixXd cross_domain_matrix_impl(
    const datagen::DatasetManifest& manifest, const std::vector<int>& domain_ids,
    const train::TrainConfig& cell_cfg, const std::optional<model::ModelDims>& custom_dims,
    const std::string& out_dir, int workers, std::vector<std::string>* errors_out = nullptr) {
    require(domain_ids.size() >= 2, "cross-domain matrix needs at least two domains");
    const int n = int(domain_ids.size());
    Eigen::MatrixXd acc = Eigen::MatrixXd::Constant(n, n, std::nan(""));
    std::vector<std::string> errors(n);

    // shared read-only evaluation view over all requested domains
    train::TensorCorpus<float> eval_view(manifest, domain_ids);

    auto run_cell_row = [&](int i) {
        try {
            train::TensorCorpus<float> cell_data(manifest, {domain_ids[i]});
            train::TrainConfig cfg = cell_cfg;
            cfg.seed = Rng::mix(cell_cfg.seed, uint64_t(domain_ids[i]));
            cfg.weights.w2 = 0;
            cfg.weights.w3 = 0;
            cfg.weights.w4 = 0;
            cfg.weights.alpha = 0;
            cfg.checkpoint_each_epoch = false;
            model::ModelDims dims = custom_dims ? *custom_dims : cfg.dims_for(1, 1);
            dims.num_classes = cell_data.num_classes();
            dims.num_domains = 1;
            model::Net<float> net(dims, cfg.seed);
            std::string cell_dir = out_dir + "/cells/src" + std::to_string(domain_ids[i]);
            train::fit(net, cell_data, cfg, cell_dir);
            for (int j = 0; j < n; ++j) acc(i, j) = train::evaluate_accuracy(net, eval_view, j);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };

    workers = std::max(1, workers);
    if (workers == 1) {
        for (int i = 0; i < n; ++i) run_cell_row(i);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t)
            pool.emplace_back([&] {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) run_cell_row(i);
            });
        for (auto& th : pool) th.join();
    }
    if (errors_out) *errors_out = errors;
    return acc;
}

/// Spec surface: accuracy matrix over all domains of the manifest.
inline Eigen::MatrixXd cross_domain_matrix(const datagen::DatasetManifest& manifest,
                                           const EvalConfig& cfg, const std::string& out_dir) {
    std::vector<int> ids;
    for (int d = 0; d < manifest.num_domains(); ++d) ids.push_back(d);
    return cross_domain_matrix_impl(manifest, ids, cfg.cell, cfg.custom_dims, out_dir, cfg.workers);
}

// ---------------------------------------------------------------------------

/// Artifacts of a full-pipeline run that ablations can reuse: no-gram shares
/// the trained checkpoint and the accuracy matrix with the full run.
struct PipelineReuse {
    std::string checkpoint_path;
    Eigen::MatrixXd accuracy;
    bool has_accuracy = false;
};

/// Runs the whole analysis pipeline for one ablation tag:
/// train (unless reused) -> embed -> distances -> accuracy matrix (unless
/// reused) -> PCC -> reduction -> graph -> persisted artifacts.
inline TransferReport run_ablation(const datagen::DatasetManifest& manifest, const EvalConfig& cfg,
                                   AblationTag tag, const std::string& out_dir,
                                   const PipelineReuse* reuse = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    {
        std::ofstream cfg_out(out_dir + "/resolved_config.json");
        nlohmann::json cj = cfg.to_json();
        cj["ablation"] = to_string(tag);
        cfg_out << cj.dump(2) << "\n";
    }

    TransferReport report;
    report.ablation_tag = to_string(tag);
    report.seed = cfg.disentangle.seed;
    for (int d = 0; d < manifest.num_domains(); ++d) {
        report.domain_ids.push_back(d);
        report.domain_labels.push_back(manifest.domain(d).label());
    }

    // 1) the disentanglement model
    std::string ckpt_path;
    if (reuse && !reuse->checkpoint_path.empty() && tag != AblationTag::no_mi) {
        ckpt_path = reuse->checkpoint_path;
    } else {
        train::TrainConfig tcfg = cfg.disentangle;
        if (tag == AblationTag::no_mi) tcfg.weights.w4 = 0;
        train::TensorCorpus<float> data(manifest);
        model::ModelDims dims =
            cfg.custom_dims ? *cfg.custom_dims : tcfg.dims_for(data.num_classes(), data.num_domains());
        dims.num_classes = data.num_classes();
        dims.num_domains = data.num_domains();
        model::Net<float> net(dims, tcfg.seed);
        auto fit_res = train::fit(net, data, tcfg, out_dir + "/disentangle");
        ckpt_path = fit_res.checkpoint_path;
    }

    // 2) embeddings (no-gram drops the Gram block, prototype only)
    embed::EmbeddingSet embeddings;
    {
        auto net = model::load_net<float>(ckpt_path);
        train::TensorCorpus<float> data(manifest);
        embeddings = embed::embed_all_domains(*net, data, cfg.embed_max_examples,
                                              tag != AblationTag::no_gram, cfg.last_layer_only);
        embeddings.checkpoint_path = ckpt_path;
    }
    embeddings.save_csv(out_dir + "/embeddings.csv");
    {
        std::ofstream meta(out_dir + "/embeddings_meta.json");
        meta << embeddings.meta_json().dump(2) << "\n";
    }

    auto metric = embed::metric_from_string(cfg.metric);
    report.distances = embed::distance_matrix(embeddings, metric);
    embed::save_distance_csv(report.distances, report.domain_ids, out_dir + "/distances.csv");

    // 3) cross-domain accuracy matrix
    if (reuse && reuse->has_accuracy) {
        report.accuracy = reuse->accuracy;
    } else {
        report.accuracy = cross_domain_matrix(manifest, cfg, out_dir);
    }
    save_matrix_csv(report.accuracy, report.domain_ids, out_dir + "/accuracy.csv", "src\\tgt");

    // 4) correlation, reduction, graph
    report.pcc = accuracy_distance_pcc(report.accuracy, report.distances);

    Eigen::MatrixXd raw(embeddings.domains.size(), embeddings.dim());
    for (size_t i = 0; i < embeddings.domains.size(); ++i)
        raw.row(i) = embeddings.domains[i].standardized.transpose();
    report.reduced = embed::reduce_dims(raw, cfg.pca_dim, cfg.final_dim, cfg.disentangle.seed);
    save_matrix_csv(report.reduced, report.domain_ids, out_dir + "/reduced_coords.csv", "domain");

    std::vector<int64_t> counts;
    for (const auto& e : embeddings.domains) counts.push_back(e.sample_count);
    report.graph = embed::knn_graph(report.distances, cfg.knn_k, report.domain_ids, counts);
    {
        std::ofstream gj(out_dir + "/graph.json");
        gj << report.graph.to_json(report.domain_labels).dump(2) << "\n";
        std::ofstream gd(out_dir + "/graph.dot");
        gd << report.graph.to_dot(report.domain_labels);
    }
    {
        std::ofstream meta(out_dir + "/report.json");
        meta << report.meta_json().dump(2) << "\n";
    }
    return report;
}

/// Rebuilds a TransferReport from the artifacts run_ablation persisted.
inline TransferReport load_report(const std::string& dir) {
    TransferReport r;
    std::ifstream meta(dir + "/report.json");
    if (!meta) throw IoError("cannot read report metadata", dir + "/report.json");
    nlohmann::json j;
    meta >> j;
    r.pcc = j.at("pcc").get<double>();
    r.ablation_tag = j.at("ablation").get<std::string>();
    r.seed = j.at("seed").get<uint64_t>();
    r.domain_ids = j.at("domain_ids").get<std::vector<int>>();
    r.domain_labels = j.at("domain_labels").get<std::vector<std::string>>();
    r.accuracy = load_matrix_csv(dir + "/accuracy.csv");
    r.distances = load_matrix_csv(dir + "/distances.csv");
    r.reduced = load_matrix_csv(dir + "/reduced_coords.csv");
    std::ifstream gj(dir + "/graph.json");
    if (!gj) throw IoError("cannot read graph", dir + "/graph.json");
    nlohmann::json gjson;
    gj >> gjson;
    r.graph = embed::KnowledgeGraph::from_json(gjson);
    return r;
}

} // namespace d2v::eval
