#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "d2v/embedding/embed.hpp"
#include "d2v/training/trainer.hpp"

namespace d2v::msda {

using nn::Mat;
using nn::Mode;

/// Multi-source adaptation task: labeled sources, one unlabeled target.
struct TransferTask {
    std::vector<int> source_domain_ids;  // manifest ids
    int target_domain_id = -1;

    void validate() const {
        require(!source_domain_ids.empty(), "task needs at least one source domain");
        for (int s : source_domain_ids)
            require(s != target_domain_id, "target domain must not be a source");
    }

    std::string label() const {
        std::string s = "src";
        for (size_t i = 0; i < source_domain_ids.size(); ++i)
            s += (i ? "+" : "") + std::to_string(source_domain_ids[i]);
        return s + "->tgt" + std::to_string(target_domain_id);
    }

    nlohmann::json to_json() const {
        return {{"sources", source_domain_ids}, {"target", target_domain_id}};
    }
    static TransferTask from_json(const nlohmann::json& j) {
        TransferTask t;
        t.source_domain_ids = j.at("sources").get<std::vector<int>>();
        t.target_domain_id = j.at("target").get<int>();
        t.validate();
        return t;
    }
};

struct SourceWeights {
    std::vector<double> weights;  // >= 0, sums to 1
    double temperature = 1.0;

    void validate() const {
        double sum = 0;
        for (double w : weights) {
            require(w >= 0, "source weights must be non-negative");
            sum += w;
        }
        require(std::abs(sum - 1.0) < 1e-9, "source weights must sum to 1");
    }
};

/// Softmax over negative distances: w_i = exp(-d_i / tau) / sum_j exp(-d_j / tau).
/// Max-shifted, so equal distances give exactly equal weights.
inline SourceWeights distance_to_weights(const std::vector<double>& distances, double tau = 1.0) {
    require(!distances.empty(), "distance_to_weights: empty distance list");
    require(tau > 0, "temperature must be positive");
    for (double d : distances) require(d >= 0, "distances must be non-negative");
    double dmin = *std::min_element(distances.begin(), distances.end());
    SourceWeights out;
    out.temperature = tau;
    double z = 0;
    for (double d : distances) {
        out.weights.push_back(std::exp((dmin - d) / tau));
        z += out.weights.back();
    }
    for (double& w : out.weights) w /= z;
    return out;
}

inline SourceWeights uniform_weights(size_t n) {
    return distance_to_weights(std::vector<double>(n, 0.0));
}

enum class Variant { alpha, beta, uniform_alpha, uniform_beta, source_only };

inline Variant variant_from_string(const std::string& s) {
    if (s == "alpha") return Variant::alpha;
    if (s == "beta") return Variant::beta;
    if (s == "uniform-alpha") return Variant::uniform_alpha;
    if (s == "uniform-beta") return Variant::uniform_beta;
    if (s == "source-only") return Variant::source_only;
    throw PreconditionError("unknown msda variant: " + s);
}

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::alpha: return "alpha";
        case Variant::beta: return "beta";
        case Variant::uniform_alpha: return "uniform-alpha";
        case Variant::uniform_beta: return "uniform-beta";
        case Variant::source_only: return "source-only";
    }
    return "?";
}

struct MsdaConfig {
    train::TrainConfig base;      // optimizer, lr, epochs, seed, scale
    double tau = 1.0;
    double align_weight = 1.0;    // scale of the moment / adversarial terms
    bool source_source_moments = false;
    int rows_per_domain = 16;     // per-domain rows in each step's batch
    int disc_hidden = 32;
    std::optional<model::ModelDims> custom_dims;  // tests / sweeps; not serialized

    nlohmann::json to_json() const {
        return {{"base", base.to_json()},
                {"tau", tau},
                {"align_weight", align_weight},
                {"source_source_moments", source_source_moments},
                {"rows_per_domain", rows_per_domain},
                {"disc_hidden", disc_hidden}};
    }
    static MsdaConfig from_json(const nlohmann::json& j) {
        MsdaConfig c;
        if (j.contains("base")) c.base = train::TrainConfig::from_json(j.at("base"));
        c.tau = j.value("tau", 1.0);
        c.align_weight = j.value("align_weight", 1.0);
        c.source_source_moments = j.value("source_source_moments", false);
        c.rows_per_domain = j.value("rows_per_domain", 16);
        c.disc_hidden = j.value("disc_hidden", 32);
        return c;
    }
};

// ---------------------------------------------------------------------------
// First/second-moment alignment between two feature blocks.

template <class S>
struct MomentLoss {
    double value = 0;
    Mat<S> grad_a, grad_b;  // per-row gradients
};

template <class S>
MomentLoss<S> moment_distance(const Mat<S>& a, const Mat<S>& b) {
    MomentLoss<S> out;
    require(a.rows() >= 2 && b.rows() >= 2, "moment_distance needs >= 2 rows per block");
    const double na = double(a.rows()), nb = double(b.rows());
    Eigen::RowVectorXd mu_a = a.template cast<double>().colwise().mean();
    Eigen::RowVectorXd mu_b = b.template cast<double>().colwise().mean();
    Eigen::RowVectorXd va = (a.template cast<double>().rowwise() - mu_a).array().square().colwise().sum() / na;
    Eigen::RowVectorXd vb = (b.template cast<double>().rowwise() - mu_b).array().square().colwise().sum() / nb;

    Eigen::RowVectorXd dmu = mu_a - mu_b;
    Eigen::RowVectorXd dv = va - vb;
    out.value = dmu.squaredNorm() + dv.squaredNorm();

    out.grad_a.resize(a.rows(), a.cols());
    out.grad_b.resize(b.rows(), b.cols());
    for (Eigen::Index r = 0; r < a.rows(); ++r)
        out.grad_a.row(r) =
            ((2.0 / na) * dmu + (4.0 / na) * dv.cwiseProduct(a.row(r).template cast<double>() - mu_a))
                .template cast<S>();
    for (Eigen::Index r = 0; r < b.rows(); ++r)
        out.grad_b.row(r) =
            (-(2.0 / nb) * dmu - (4.0 / nb) * dv.cwiseProduct(b.row(r).template cast<double>() - mu_b))
                .template cast<S>();
    return out;
}

// ---------------------------------------------------------------------------

struct MsdaResult {
    std::string task;
    std::string variant;
    uint64_t seed = 0;
    double target_accuracy = 0;
    SourceWeights weights;
    std::string checkpoint_path;
    std::vector<double> source_distances;

    nlohmann::json to_json() const {
        return {{"task", task},
                {"variant", variant},
                {"seed", seed},
                {"target_accuracy", target_accuracy},
                {"weights", weights.weights},
                {"distances", source_distances},
                {"checkpoint", checkpoint_path}};
    }
};

inline void append_report_row(const std::string& csv_path, const MsdaResult& r) {
    bool fresh = !std::filesystem::exists(csv_path);
    std::ofstream out(csv_path, std::ios::app);
    if (!out) throw IoError("cannot append msda report", csv_path);
    if (fresh) out << "task,variant,seed,accuracy\n";
    out.precision(10);
    out << r.task << "," << r.variant << "," << r.seed << "," << r.target_accuracy << "\n";
}

/// Distance-weighted multi-source adaptation. One call = one adaptation run.
/// All variants share the batch schedule and RNG streams, so runs differ only
/// through the weights and alignment terms.
template <class S>
class Adapter {
public:
    Adapter(const datagen::DatasetManifest& manifest, const TransferTask& task,
            const MsdaConfig& cfg)
        : manifest_(manifest), task_(task), cfg_(cfg) {
        task_.validate();
        std::vector<int> ids = task.source_domain_ids;
        ids.push_back(task.target_domain_id);
        data_ = std::make_unique<train::TensorCorpus<S>>(manifest, ids);
        target_dense_ = data_->num_domains() - 1;
        data_->mark_unlabeled(target_dense_);
    }

    /// Target-to-source distances read from a standardized embedding set.
    std::vector<double> source_distances(const embed::EmbeddingSet& set,
                                         embed::DistanceMetric metric) const {
        auto find = [&](int id) -> const embed::DomainEmbedding& {
            for (const auto& e : set.domains)
                if (e.domain_id == id) return e;
            throw PreconditionError("embedding set lacks domain " + std::to_string(id));
        };
        std::vector<double> d;
        for (int s : task_.source_domain_ids)
            d.push_back(embed::domain_distance(find(s), find(task_.target_domain_id), metric));
        return d;
    }

    MsdaResult run(Variant variant, const SourceWeights& weights, const std::string& out_dir) {
        const size_t ns = task_.source_domain_ids.size();
        require(weights.weights.size() == ns, "one weight per source required");
        weights.validate();
        const bool use_target = variant != Variant::source_only;
        const bool adversarial = variant == Variant::beta || variant == Variant::uniform_beta;
        const bool moments = variant == Variant::alpha || variant == Variant::uniform_alpha;

        model::ModelDims dims = cfg_.custom_dims
                                     ? *cfg_.custom_dims
                                     : cfg_.base.dims_for(data_->num_classes(), data_->num_domains());
        dims.num_classes = data_->num_classes();
        dims.num_domains = data_->num_domains();
        net_ = std::make_unique<model::Net<S>>(dims, cfg_.base.seed);

        auto mk_opt = [&](std::vector<nn::ParamRef<S>> p) {
            return nn::Optimizer<S>(std::move(p), cfg_.base.optimizer, cfg_.base.lr,
                                    cfg_.base.momentum, cfg_.base.beta1, cfg_.base.beta2);
        };
        auto opt_G = mk_opt(net_->params_G());
        auto opt_Dcs = mk_opt(net_->params_Dcs());
        auto opt_C = mk_opt(net_->params_C());

        // per-source binary discriminators (used by the beta variants)
        std::vector<nn::Sequential<S>> discs(adversarial ? ns : 0);
        std::vector<nn::Optimizer<S>> disc_opts;
        if (adversarial) {
            Rng disc_rng = Rng::derive(cfg_.base.seed, 0xD15C);
            for (size_t i = 0; i < ns; ++i) {
                discs[i].template add<nn::Linear<S>>(dims.latent, cfg_.disc_hidden, disc_rng);
                discs[i].template add<nn::LeakyReLU<S>>(dims.leaky_slope);
                discs[i].template add<nn::Linear<S>>(cfg_.disc_hidden, 1, disc_rng);
                disc_opts.push_back(mk_opt(discs[i].params("disc" + std::to_string(i))));
            }
        }

        std::vector<std::vector<int>> src_rows;
        for (size_t i = 0; i < ns; ++i) src_rows.push_back(data_->train_indices_of(int(i)));
        std::vector<int> tgt_rows = data_->train_indices_of(target_dense_);
        for (const auto& rows : src_rows)
            require(int(rows.size()) >= 2, "each source needs at least two training rows");

        Rng batch_rng = Rng::derive(cfg_.base.seed, 0xBA7C4);
        const int rpd = cfg_.rows_per_domain;
        const int steps_per_epoch =
            std::max<int>(1, int(src_rows[0].size()) / std::max(1, rpd));

        std::ofstream log(out_dir + "/msda_log.jsonl", std::ios::trunc);

        for (int epoch = 0; epoch < cfg_.base.epochs; ++epoch) {
            for (int step = 0; step < steps_per_epoch; ++step) {
                // assemble the per-domain blocks: sources first, target last
                std::vector<int> pick;
                std::vector<std::pair<int, int>> spans;  // row ranges per block
                for (size_t i = 0; i < ns; ++i) {
                    int begin = int(pick.size());
                    for (int r = 0; r < rpd; ++r)
                        pick.push_back(src_rows[i][batch_rng.below(src_rows[i].size())]);
                    spans.push_back({begin, int(pick.size())});
                }
                if (use_target) {
                    int begin = int(pick.size());
                    for (int r = 0; r < rpd; ++r)
                        pick.push_back(tgt_rows[batch_rng.below(tgt_rows.size())]);
                    spans.push_back({begin, int(pick.size())});
                }

                train::Batch<S> batch = train::gather_batch(*data_, pick);
                net_->zero_all_grads();
                for (auto& o : disc_opts) o.zero_grad();

                Mat<S> f_G = net_->G.forward(batch.x, Mode::train);
                Mat<S> f_cs = net_->Dcs.forward(f_G, Mode::train);
                Mat<S> d_cs = Mat<S>::Zero(f_cs.rows(), f_cs.cols());

                nlohmann::json line{{"epoch", epoch}, {"step", step}};

                // weighted classification loss over the source rows
                double ce_total = 0;
                {
                    std::vector<int> rows, labels;
                    std::vector<double> row_w;
                    for (size_t i = 0; i < ns; ++i)
                        for (int r = spans[i].first; r < spans[i].second; ++r) {
                            rows.push_back(r);
                            labels.push_back(batch.class_labels[r]);
                            row_w.push_back(weights.weights[i]);
                        }
                    Mat<S> f_lab(rows.size(), f_cs.cols());
                    for (size_t i = 0; i < rows.size(); ++i) f_lab.row(i) = f_cs.row(rows[i]);
                    Mat<S> probs = net_->C.forward(f_lab, Mode::train);
                    // per-row weighted cross entropy
                    Mat<S> dprobs = Mat<S>::Zero(probs.rows(), probs.cols());
                    for (size_t i = 0; i < rows.size(); ++i) {
                        double p = std::max(double(probs(i, labels[i])), losses::kProbEps);
                        ce_total += -std::log(p) * row_w[i] / double(rpd);
                        dprobs(i, labels[i]) = S(-row_w[i] / (p * double(rpd)));
                    }
                    Mat<S> d_lab = net_->C.backward(dprobs);
                    for (size_t i = 0; i < rows.size(); ++i) d_cs.row(rows[i]) += d_lab.row(i);
                }
                line["ce"] = ce_total;

                // moment alignment (alpha family)
                if (moments && use_target) {
                    auto tgt_span = spans.back();
                    Mat<S> f_t = f_cs.middleRows(tgt_span.first, tgt_span.second - tgt_span.first);
                    double moment_total = 0;
                    for (size_t i = 0; i < ns; ++i) {
                        int n_i = spans[i].second - spans[i].first;
                        if (n_i < 2) continue;  // degenerate source batch: skip its term
                        Mat<S> f_i = f_cs.middleRows(spans[i].first, n_i);
                        auto ml = moment_distance(f_i, f_t);
                        double scale = cfg_.align_weight * weights.weights[i];
                        moment_total += scale * ml.value;
                        d_cs.middleRows(spans[i].first, n_i) += S(scale) * ml.grad_a;
                        d_cs.middleRows(tgt_span.first, f_t.rows()) += S(scale) * ml.grad_b;
                    }
                    if (cfg_.source_source_moments) {
                        for (size_t i = 0; i < ns; ++i)
                            for (size_t j = i + 1; j < ns; ++j) {
                                Mat<S> f_i = f_cs.middleRows(spans[i].first, rpd);
                                Mat<S> f_j = f_cs.middleRows(spans[j].first, rpd);
                                auto ml = moment_distance(f_i, f_j);
                                double scale = cfg_.align_weight *
                                               0.5 * (weights.weights[i] + weights.weights[j]);
                                moment_total += scale * ml.value;
                                d_cs.middleRows(spans[i].first, rpd) += S(scale) * ml.grad_a;
                                d_cs.middleRows(spans[j].first, rpd) += S(scale) * ml.grad_b;
                            }
                    }
                    line["moment"] = moment_total;
                }

                // adversarial confusion (beta family): per-source binary
                // discriminator vs the target, gradient-reversed into f_cs
                if (adversarial && use_target) {
                    auto tgt_span = spans.back();
                    double adv_total = 0;
                    for (size_t i = 0; i < ns; ++i) {
                        int n_i = spans[i].second - spans[i].first;
                        int n_t = tgt_span.second - tgt_span.first;
                        Mat<S> both(n_i + n_t, f_cs.cols());
                        both.topRows(n_i) = f_cs.middleRows(spans[i].first, n_i);
                        both.bottomRows(n_t) = f_cs.middleRows(tgt_span.first, n_t);
                        Mat<S> logit = discs[i].forward(both, Mode::train);
                        // BCE with logits; labels: source 1, target 0
                        Mat<S> dz(logit.rows(), 1);
                        double bce = 0;
                        const double inv_n = 1.0 / double(logit.rows());
                        for (Eigen::Index r = 0; r < logit.rows(); ++r) {
                            double z = double(logit(r, 0));
                            double t = r < n_i ? 1.0 : 0.0;
                            bce += (std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)))) * inv_n;
                            double sig = 1.0 / (1.0 + std::exp(-z));
                            dz(r, 0) = S((sig - t) * inv_n);
                        }
                        adv_total += weights.weights[i] * bce;
                        Mat<S> dins = discs[i].backward(dz);
                        double lambda = cfg_.align_weight * weights.weights[i];
                        d_cs.middleRows(spans[i].first, n_i) -= S(lambda) * dins.topRows(n_i);
                        d_cs.middleRows(tgt_span.first, n_t) -= S(lambda) * dins.bottomRows(n_t);
                    }
                    line["adv"] = adv_total;
                }

                if (!std::isfinite(ce_total))
                    throw NumericError("non-finite msda classification loss");

                net_->G.backward(net_->Dcs.backward(d_cs));
                opt_G.step();
                opt_Dcs.step();
                opt_C.step();
                for (auto& o : disc_opts) o.step();
                if (log) log << line.dump() << "\n";
            }
        }

        // evaluate on the target's held-out split with an unmasked view
        train::TensorCorpus<S> eval_view(manifest_, {task_.target_domain_id});
        double acc = train::evaluate_accuracy(*net_, eval_view, 0);

        MsdaResult result;
        result.task = task_.label();
        result.variant = to_string(variant);
        result.seed = cfg_.base.seed;
        result.target_accuracy = acc;
        result.weights = weights;
        std::filesystem::create_directories(out_dir);
        model::Checkpoint<S> ck = model::snapshot(*net_, {{"msda", result.to_json()}});
        result.checkpoint_path = out_dir + "/msda_checkpoint.ckpt";
        ck.save(result.checkpoint_path);
        return result;
    }

    model::Net<S>* net() { return net_.get(); }

private:
    const datagen::DatasetManifest& manifest_;
    TransferTask task_;
    MsdaConfig cfg_;
    std::unique_ptr<train::TensorCorpus<S>> data_;
    std::unique_ptr<model::Net<S>> net_;
    int target_dense_ = -1;
};

/// Runs one variant end to end. alpha/beta take their weights from the
/// embedding distances; the uniform ablations and source-only use equal
/// weights by construction.
template <class S>
MsdaResult run_msda(const datagen::DatasetManifest& manifest, const TransferTask& task,
                    Variant variant, const MsdaConfig& cfg, const embed::EmbeddingSet* embeddings,
                    const std::string& out_dir,
                    embed::DistanceMetric metric = embed::DistanceMetric::cosine) {
    Adapter<S> adapter(manifest, task, cfg);
    SourceWeights w;
    std::vector<double> dists;
    if (variant == Variant::alpha || variant == Variant::beta) {
        require(embeddings != nullptr,
                "distance-weighted variants need a trained embedding set");
        dists = adapter.source_distances(*embeddings, metric);
        w = distance_to_weights(dists, cfg.tau);
    } else {
        w = uniform_weights(task.source_domain_ids.size());
    }
    MsdaResult r = adapter.run(variant, w, out_dir);
    r.source_distances = dists;
    append_report_row(out_dir + "/msda_report.csv", r);
    return r;
}

} // namespace d2v::msda
