#pragma once

#include <Eigen/Dense>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "d2v/core/error.hpp"
#include "d2v/embedding/gram.hpp"
#include "d2v/model/network.hpp"
#include "d2v/training/data.hpp"

namespace d2v::embed {

/// Mean of the domain-specific features over a domain's examples.
struct DomainPrototype {
    Eigen::VectorXd vector;
    int64_t sample_count = 0;
};

template <class Iterable>
DomainPrototype domain_prototype(const Iterable& latents) {
    DomainPrototype p;
    for (const auto& v : latents) {
        if (p.sample_count == 0)
            p.vector = v.template cast<double>();
        else
            p.vector += v.template cast<double>();
        ++p.sample_count;
    }
    require(p.sample_count > 0, "domain_prototype: empty latent list");
    p.vector /= double(p.sample_count);
    return p;
}

enum class DistanceMetric { cosine, euclidean };

inline DistanceMetric metric_from_string(const std::string& s) {
    if (s == "cosine") return DistanceMetric::cosine;
    if (s == "euclidean") return DistanceMetric::euclidean;
    throw PreconditionError("unknown distance metric: " + s);
}

/// One domain's embedding: prototype of f_ds concatenated with the per-layer
/// Gram tri-diagonals, plus its standardized form once the corpus-level
/// standardization ran.
struct DomainEmbedding {
    int domain_id = -1;  // manifest id
    Eigen::VectorXd raw;
    Eigen::VectorXd standardized;
    int64_t sample_count = 0;
};

struct EmbeddingSet {
    std::vector<DomainEmbedding> domains;
    std::vector<int> dropped_dims;  // constant raw dims removed by standardization
    bool include_gram = true;
    std::string checkpoint_path;

    int raw_dim() const { return domains.empty() ? 0 : int(domains[0].raw.size()); }
    int dim() const { return domains.empty() ? 0 : int(domains[0].standardized.size()); }

    /// Per-dimension zero-mean unit-variance scaling across domains
    /// (population statistics, so the result is exact). Constant dimensions
    /// are dropped and recorded.
    void standardize() {
        require(domains.size() >= 2, "standardization needs at least two domains");
        const int d = raw_dim();
        const int n = int(domains.size());
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
        for (const auto& e : domains) mean += e.raw;
        mean /= double(n);
        Eigen::VectorXd var = Eigen::VectorXd::Zero(d);
        for (const auto& e : domains) var += (e.raw - mean).cwiseAbs2();
        var /= double(n);

        dropped_dims.clear();
        std::vector<int> keep;
        for (int j = 0; j < d; ++j) {
            if (std::sqrt(var[j]) < 1e-12 * std::max(1.0, std::abs(mean[j])))
                dropped_dims.push_back(j);
            else
                keep.push_back(j);
        }
        require(!keep.empty(), "all embedding dimensions are constant");
        for (auto& e : domains) {
            e.standardized.resize(keep.size());
            for (size_t k = 0; k < keep.size(); ++k)
                e.standardized[k] = (e.raw[keep[k]] - mean[keep[k]]) / std::sqrt(var[keep[k]]);
        }
    }

    void save_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("cannot write embeddings", path);
        out << "domain_id";
        for (int j = 0; j < raw_dim(); ++j) out << ",d" << j;
        out << "\n";
        out.precision(17);
        for (const auto& e : domains) {
            out << e.domain_id;
            for (int j = 0; j < e.raw.size(); ++j) out << "," << e.raw[j];
            out << "\n";
        }
    }

    static EmbeddingSet load_csv(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot read embeddings", path);
        EmbeddingSet set;
        std::string line;
        require(bool(std::getline(in, line)), "empty embeddings csv");
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            DomainEmbedding e;
            std::vector<double> vals;
            size_t pos = 0;
            bool first = true;
            while (pos <= line.size()) {
                size_t comma = line.find(',', pos);
                std::string tok = line.substr(pos, comma == std::string::npos ? std::string::npos
                                                                              : comma - pos);
                if (first) {
                    e.domain_id = std::stoi(tok);
                    first = false;
                } else {
                    vals.push_back(std::stod(tok));
                }
                if (comma == std::string::npos) break;
                pos = comma + 1;
            }
            e.raw = Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size());
            set.domains.push_back(std::move(e));
        }
        return set;
    }

    nlohmann::json meta_json() const {
        return {{"num_domains", domains.size()},
                {"raw_dim", raw_dim()},
                {"standardized_dim", dim()},
                {"dropped_dims", dropped_dims},
                {"include_gram", include_gram},
                {"checkpoint", checkpoint_path}};
    }
};

/// Extracts one domain's embedding with a trained model: prototype of f_ds
/// plus example-averaged Gram tri-diagonals of every captured conv layer.
/// Deterministic for a fixed checkpoint and data order.
template <class S>
DomainEmbedding embed_domain(model::Net<S>& net, const train::TensorCorpus<S>& data,
                             int dense_domain, int max_examples = 0, bool include_gram = true,
                             bool last_layer_only = false, int batch_size = 128) {
    std::vector<int> rows;
    for (int split = 0; split < 2; ++split) {
        auto part = split == 0 ? data.train_indices_of(dense_domain) : data.eval_indices(dense_domain);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    std::sort(rows.begin(), rows.end());
    require(!rows.empty(), "embed_domain: domain has no examples");
    if (max_examples > 0 && int(rows.size()) > max_examples) rows.resize(max_examples);

    const auto channels = net.gram_channels();
    std::vector<GramAccumulator> gram(channels.size());
    Eigen::VectorXd proto_sum;

    for (size_t start = 0; start < rows.size(); start += batch_size) {
        size_t end = std::min(rows.size(), start + batch_size);
        nn::Mat<S> x(end - start, data.images().cols());
        for (size_t i = start; i < end; ++i)
            x.row(Eigen::Index(i - start)) = data.images().row(rows[i]);

        std::vector<nn::Mat<S>> acts;
        nn::Mat<S> f_G = include_gram
                             ? net.G.forward_captured(x, nn::Mode::eval,
                                                      model::Net<S>::gram_capture_points(), acts)
                             : net.G.forward(x, nn::Mode::eval);
        nn::Mat<S> f_ds = net.Dds.forward(f_G, nn::Mode::eval);

        if (proto_sum.size() == 0) proto_sum = Eigen::VectorXd::Zero(f_ds.cols());
        for (Eigen::Index r = 0; r < f_ds.rows(); ++r)
            proto_sum += f_ds.row(r).template cast<double>();

        if (include_gram) {
            for (size_t layer = 0; layer < acts.size(); ++layer) {
                if (last_layer_only && layer + 1 < acts.size()) continue;
                int spatial = int(acts[layer].cols()) / channels[layer];
                for (Eigen::Index r = 0; r < acts[layer].rows(); ++r)
                    gram[layer].add(gram_tridiagonal(acts[layer].row(r), channels[layer], spatial));
            }
        }
    }

    DomainEmbedding e;
    e.domain_id = data.manifest_ids()[dense_domain];
    e.sample_count = int64_t(rows.size());
    Eigen::VectorXd proto = proto_sum / double(rows.size());
    std::vector<Eigen::VectorXd> parts{proto};
    if (include_gram)
        for (size_t layer = 0; layer < gram.size(); ++layer)
            if (!last_layer_only || layer + 1 == gram.size()) parts.push_back(gram[layer].mean().flatten());
    int total = 0;
    for (const auto& p : parts) total += int(p.size());
    e.raw.resize(total);
    int off = 0;
    for (const auto& p : parts) {
        e.raw.segment(off, p.size()) = p;
        off += int(p.size());
    }
    return e;
}

/// Embeds every domain of the corpus view and standardizes across domains.
template <class S>
EmbeddingSet embed_all_domains(model::Net<S>& net, const train::TensorCorpus<S>& data,
                               int max_examples_per_domain = 0, bool include_gram = true,
                               bool last_layer_only = false) {
    EmbeddingSet set;
    set.include_gram = include_gram;
    for (int d = 0; d < data.num_domains(); ++d)
        set.domains.push_back(embed_domain(net, data, d, max_examples_per_domain, include_gram,
                                           last_layer_only));
    set.standardize();
    return set;
}

// ---------------------------------------------------------------------------

/// Distance between two standardized embeddings. Cosine (1 - cos) is the
/// default; euclidean is available for comparison.
inline double domain_distance(const DomainEmbedding& a, const DomainEmbedding& b,
                              DistanceMetric metric = DistanceMetric::cosine) {
    require(a.standardized.size() == b.standardized.size() && a.standardized.size() > 0,
            "domain_distance: embeddings must share a standardization basis");
    if ((a.standardized.array() == b.standardized.array()).all()) return 0.0;
    if (metric == DistanceMetric::euclidean) return (a.standardized - b.standardized).norm();
    double na = a.standardized.norm(), nb = b.standardized.norm();
    require(na > 0 && nb > 0, "cosine distance undefined for zero vectors");
    double c = a.standardized.dot(b.standardized) / (na * nb);
    return 1.0 - std::min(1.0, std::max(-1.0, c));
}

inline Eigen::MatrixXd distance_matrix(const EmbeddingSet& set,
                                       DistanceMetric metric = DistanceMetric::cosine) {
    const int n = int(set.domains.size());
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double v = domain_distance(set.domains[i], set.domains[j], metric);
            d(i, j) = v;
            d(j, i) = v;
        }
    return d;
}

inline void save_distance_csv(const Eigen::MatrixXd& d, const std::vector<int>& domain_ids,
                              const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write distance matrix", path);
    out << "domain_id";
    for (int id : domain_ids) out << "," << id;
    out << "\n";
    out.precision(17);
    for (int i = 0; i < d.rows(); ++i) {
        out << domain_ids[i];
        for (int j = 0; j < d.cols(); ++j) out << "," << d(i, j);
        out << "\n";
    }
}

} // namespace d2v::embed
