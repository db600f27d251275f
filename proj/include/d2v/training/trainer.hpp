#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "d2v/losses/losses.hpp"
#include "d2v/model/checkpoint.hpp"
#include "d2v/model/network.hpp"
#include "d2v/nn/optim.hpp"
#include "d2v/training/data.hpp"

namespace d2v::train {

using losses::LossBreakdown;
using losses::LossWeights;
using model::Net;
using nn::Mode;

struct TrainConfig {
    LossWeights weights;
    nn::OptimKind optimizer = nn::OptimKind::adam;
    double lr = 1e-4;
    double momentum = 0.9;
    double beta1 = 0.9, beta2 = 0.999;
    double mine_lr = 1e-4;
    int mine_inner_steps = 1;
    int batch_size = 64;
    int epochs = 10;
    uint64_t seed = 0;
    std::vector<int> labeled_domain_ids;  // manifest ids; empty = all labeled
    std::string scale = "desk";           // {desk, reference}
    bool checkpoint_each_epoch = true;

    void validate() const {
        weights.validate();
        require(lr > 0, "learning rate must be positive");
        require(batch_size >= 2, "batch size must be >= 2 (MINE needs a shuffle partner)");
        require(epochs >= 0, "epochs must be non-negative");
        require(scale == "desk" || scale == "reference", "scale must be desk or reference");
    }

    nlohmann::json to_json() const {
        return {{"weights", weights.to_json()},
                {"optimizer", optimizer == nn::OptimKind::adam ? "adam" : "sgd"},
                {"lr", lr},
                {"momentum", momentum},
                {"beta1", beta1},
                {"beta2", beta2},
                {"mine_lr", mine_lr},
                {"mine_inner_steps", mine_inner_steps},
                {"batch_size", batch_size},
                {"epochs", epochs},
                {"seed", seed},
                {"labeled_domain_ids", labeled_domain_ids},
                {"scale", scale},
                {"checkpoint_each_epoch", checkpoint_each_epoch}};
    }

    static TrainConfig from_json(const nlohmann::json& j) {
        TrainConfig c;
        if (j.contains("weights")) c.weights = LossWeights::from_json(j.at("weights"));
        c.optimizer = nn::optim_kind_from_string(j.value("optimizer", "adam"));
        c.lr = j.value("lr", 1e-4);
        c.momentum = j.value("momentum", 0.9);
        c.beta1 = j.value("beta1", 0.9);
        c.beta2 = j.value("beta2", 0.999);
        c.mine_lr = j.value("mine_lr", 1e-4);
        c.mine_inner_steps = j.value("mine_inner_steps", 1);
        c.batch_size = j.value("batch_size", 64);
        c.epochs = j.value("epochs", 10);
        c.seed = j.value("seed", uint64_t(0));
        c.labeled_domain_ids = j.value("labeled_domain_ids", std::vector<int>{});
        c.scale = j.value("scale", "desk");
        c.checkpoint_each_epoch = j.value("checkpoint_each_epoch", true);
        c.validate();
        return c;
    }

    model::ModelDims dims_for(int num_classes, int num_domains) const {
        return scale == "reference" ? model::ModelDims::reference(num_classes, num_domains)
                                    : model::ModelDims::desk(num_classes, num_domains);
    }
};

/// Runs the per-batch schedule:
///   phase 1 (supervised): classification, domain classification and
///     reconstruction losses; steps G, both disentanglers, C, DC, R.
///   phase 2 (adversarial): entropy losses against the frozen C / DC;
///     steps only the disentangler heads.
///   phase 3 (mutual information): the statistic network ascends the MI
///     estimate, then the heads descend it.
template <class S>
class Trainer {
public:
    Trainer(Net<S>& net, const TrainConfig& cfg)
        : net_(net), cfg_(cfg), rng_(Rng::mix(cfg.seed, 0x7124163Bull)) {
        cfg_.validate();
        auto mk = [&](std::vector<nn::ParamRef<S>> p) {
            return nn::Optimizer<S>(std::move(p), cfg.optimizer, cfg.lr, cfg.momentum, cfg.beta1,
                                    cfg.beta2);
        };
        opt_G_ = mk(net.params_G());
        opt_Dds_ = mk(net.params_Dds());
        opt_Dcs_ = mk(net.params_Dcs());
        opt_C_ = mk(net.params_C());
        opt_DC_ = mk(net.params_DC());
        opt_R_ = mk(net.params_R());
        opt_T_ = nn::Optimizer<S>(net.params_T(), cfg.optimizer, cfg.mine_lr, cfg.momentum,
                                  cfg.beta1, cfg.beta2);
    }

    /// Executes all three phases on one batch and returns the measured
    /// component losses composed with the configured weights.
    LossBreakdown train_step(const Batch<S>& batch) {
        LossBreakdown b;
        phase_supervised(batch, b);
        phase_adversarial(batch, b);
        phase_mine(batch, b);
        b.compose(cfg_.weights);
        if (const char* name = b.first_non_finite())
            throw NumericError(std::string("non-finite loss component '") + name + "' at step " +
                               std::to_string(step_));
        ++step_;
        return b;
    }

    /// Phase 1. Updates G, D_ds, D_cs, C, DC, R from the weighted sum of the
    /// class/domain cross-entropies and the reconstruction objective. The
    /// reconstruction target f_G is treated as a constant; its gradient
    /// reaches R directly and the heads through R's input and the KL term.
    void phase_supervised(const Batch<S>& batch, LossBreakdown& b) {
        const auto& w = cfg_.weights;
        if (w.w1 == 0 && w.w2 == 0 && w.w3 == 0) return;
        net_.zero_all_grads();

        const Mat<S> f_G = net_.G.forward(batch.x, Mode::train);
        const Mat<S> f_cs = net_.Dcs.forward(f_G, Mode::train);
        const bool need_ds = w.w2 > 0 || w.w3 > 0;
        Mat<S> f_ds;
        if (need_ds) f_ds = net_.Dds.forward(f_G, Mode::train);

        Mat<S> d_cs = Mat<S>::Zero(f_cs.rows(), f_cs.cols());
        Mat<S> d_ds;
        if (need_ds) d_ds = Mat<S>::Zero(f_ds.rows(), f_ds.cols());

        // Eq. 1 on the labeled rows
        std::vector<int> lab_rows, lab_labels;
        for (int i = 0; i < batch.size(); ++i)
            if (batch.class_labels[i] >= 0) {
                lab_rows.push_back(i);
                lab_labels.push_back(batch.class_labels[i]);
            }
        if (w.w1 > 0 && int(lab_rows.size()) >= 2) {
            Mat<S> f_cs_lab(lab_rows.size(), f_cs.cols());
            for (size_t i = 0; i < lab_rows.size(); ++i) f_cs_lab.row(i) = f_cs.row(lab_rows[i]);
            Mat<S> probs = net_.C.forward(f_cs_lab, Mode::train);
            b.ce_class = losses::cross_entropy(probs, lab_labels);
            Mat<S> dprobs = S(w.w1) * losses::cross_entropy_grad(probs, lab_labels);
            Mat<S> d_lab = net_.C.backward(dprobs);
            for (size_t i = 0; i < lab_rows.size(); ++i) d_cs.row(lab_rows[i]) += d_lab.row(i);
        }

        // Eq. 3 on all rows
        if (w.w2 > 0) {
            Mat<S> probs = net_.DC.forward(f_ds, Mode::train);
            b.ce_domain = losses::cross_entropy(probs, batch.domain_labels);
            Mat<S> dprobs = S(w.w2) * losses::cross_entropy_grad(probs, batch.domain_labels);
            d_ds += net_.DC.backward(dprobs);
        }

        // Eq. 5
        if (w.w3 > 0) {
            Mat<S> cat(f_ds.rows(), f_ds.cols() + f_cs.cols());
            cat << f_ds, f_cs;
            Mat<S> recon = net_.R.forward(cat, Mode::train);
            auto [rec, kl] = losses::rec_kl(f_G, recon, cat);
            b.rec = rec;
            b.kl = kl;
            Mat<S> dcat = net_.R.backward(S(w.w3) * losses::rec_grad_wrt_recon(f_G, recon));
            dcat += S(w.w3) * losses::kl_grad_wrt_means(cat);
            d_ds += dcat.leftCols(f_ds.cols());
            d_cs += dcat.rightCols(f_cs.cols());
        }

        Mat<S> d_fG = net_.Dcs.backward(d_cs);
        if (need_ds) d_fG += net_.Dds.backward(d_ds);
        net_.G.backward(d_fG);

        opt_G_.step();
        opt_Dcs_.step();
        if (need_ds) opt_Dds_.step();
        if (w.w1 > 0) opt_C_.step();
        if (w.w2 > 0) opt_DC_.step();
        if (w.w3 > 0) opt_R_.step();
    }

    /// Phase 2. With DC frozen, D_cs descends the Eq. 2 entropy term; with C
    /// frozen, D_ds descends the Eq. 4 term. The frozen adversaries run in
    /// eval mode and their optimizers never step here.
    void phase_adversarial(const Batch<S>& batch, LossBreakdown& b) {
        const auto& w = cfg_.weights;
        const bool do_cs = w.w1 > 0 && w.alpha > 0;
        const bool do_ds = w.w2 > 0 && w.alpha > 0;
        if (!do_cs && !do_ds) return;
        net_.zero_all_grads();

        phase2_fG_ = net_.G.forward(batch.x, Mode::train);
        have_phase2_fG_ = true;

        if (do_cs) {
            Mat<S> f_cs = net_.Dcs.forward(phase2_fG_, Mode::train);
            Mat<S> probs = net_.DC.forward(f_cs, Mode::eval);
            b.ent_class = losses::neg_entropy(probs);
            Mat<S> d = S(w.w1 * w.alpha) * losses::neg_entropy_grad(probs);
            net_.Dcs.backward(net_.DC.backward(d));
        }
        if (do_ds) {
            Mat<S> f_ds = net_.Dds.forward(phase2_fG_, Mode::train);
            Mat<S> probs = net_.C.forward(f_ds, Mode::eval);
            b.ent_domain = losses::neg_entropy(probs);
            Mat<S> d = S(w.w2 * w.alpha) * losses::neg_entropy_grad(probs);
            net_.Dds.backward(net_.C.backward(d));
        }
        if (do_cs) opt_Dcs_.step();
        if (do_ds) opt_Dds_.step();
    }

    /// Phase 3. k inner ascent steps on the statistic network, then one
    /// descent step on the heads, both on the Eq. 7 Monte-Carlo estimate.
    void phase_mine(const Batch<S>& batch, LossBreakdown& b) {
        const auto& w = cfg_.weights;
        if (w.w4 == 0) return;
        net_.zero_all_grads();

        // G was last stepped in phase 1; reuse the phase-2 features when the
        // adversarial phase ran on this batch, otherwise recompute.
        Mat<S> f_G;
        if (have_phase2_fG_)
            f_G = phase2_fG_;
        else
            f_G = net_.G.forward(batch.x, Mode::train);
        have_phase2_fG_ = false;
        phase2_fG_.resize(0, 0);

        Mat<S> f_ds = net_.Dds.forward(f_G, Mode::train);
        Mat<S> f_cs = net_.Dcs.forward(f_G, Mode::train);
        const Eigen::Index n = f_ds.rows();

        auto shuffled = [&](const Mat<S>& q, std::vector<int>& perm_out) {
            perm_out = rng_.permutation(int(n));
            Mat<S> qp(n, q.cols());
            for (Eigen::Index i = 0; i < n; ++i) qp.row(i) = q.row(perm_out[i]);
            return qp;
        };

        // (a) statistic network ascends
        for (int it = 0; it < cfg_.mine_inner_steps; ++it) {
            std::vector<int> perm;
            Mat<S> q_marg = shuffled(f_cs, perm);
            typename model::MineNet<S>::Cache cj, cm;
            Mat<S> tj = net_.T.forward(f_ds, f_cs, cj);
            Mat<S> tm = net_.T.forward(f_ds, q_marg, cm);
            auto [dj, dm] = losses::mine_mi_grad(tj, tm);
            opt_T_.zero_grad();
            net_.T.backward(cj, dj, nullptr, nullptr);
            net_.T.backward(cm, dm, nullptr, nullptr);
            opt_T_.step_ascend();
        }

        // (b) heads descend w4 * I, but only while the estimator detects
        // dependence: descending a negative estimate just exploits the
        // statistic network's lag instead of reducing mutual information
        std::vector<int> perm;
        Mat<S> q_marg = shuffled(f_cs, perm);
        typename model::MineNet<S>::Cache cj, cm;
        Mat<S> tj = net_.T.forward(f_ds, f_cs, cj);
        Mat<S> tm = net_.T.forward(f_ds, q_marg, cm);
        b.mi = losses::mine_mi(tj, tm);
        if (b.mi <= 0) return;
        auto [dj, dm] = losses::mine_mi_grad(tj, tm);
        Mat<S> dp_j, dq_j, dp_m, dq_m;
        opt_T_.zero_grad();
        net_.T.backward(cj, (S(w.w4) * dj).eval(), &dp_j, &dq_j);
        net_.T.backward(cm, (S(w.w4) * dm).eval(), &dp_m, &dq_m);
        Mat<S> d_ds = dp_j + dp_m;
        Mat<S> d_cs = dq_j;
        for (Eigen::Index i = 0; i < n; ++i) d_cs.row(perm[i]) += dq_m.row(i);
        // discard the gradient toward G: only the heads descend the estimate
        net_.Dds.backward(d_ds);
        net_.Dcs.backward(d_cs);
        opt_Dds_.step();
        opt_Dcs_.step();
    }

    Rng& rng() { return rng_; }
    int64_t step() const { return step_; }
    const TrainConfig& config() const { return cfg_; }

    /// Everything needed to resume bit-exactly: optimizer slots + counters.
    void save_state(model::Checkpoint<S>& ck) {
        auto dump = [&](nn::Optimizer<S>& o, const std::string& name) {
            for (auto& bref : o.state_buffers("opt." + name)) ck.add(bref.name, *bref.value);
            ck.header["opt_t"][name] = o.steps_taken();
        };
        dump(opt_G_, "G");
        dump(opt_Dds_, "Dds");
        dump(opt_Dcs_, "Dcs");
        dump(opt_C_, "C");
        dump(opt_DC_, "DC");
        dump(opt_R_, "R");
        dump(opt_T_, "T");
        ck.header["trainer_rng"] = rng_.state();
        ck.header["trainer_step"] = step_;
    }

    void load_state(const model::Checkpoint<S>& ck) {
        auto fill = [&](nn::Optimizer<S>& o, const std::string& name) {
            for (auto& bref : o.state_buffers("opt." + name)) {
                const Mat<S>* m = ck.find(bref.name);
                require(m != nullptr, "train state missing " + bref.name);
                *bref.value = *m;
            }
            o.t_ = ck.header.at("opt_t").at(name).template get<int64_t>();
        };
        fill(opt_G_, "G");
        fill(opt_Dds_, "Dds");
        fill(opt_Dcs_, "Dcs");
        fill(opt_C_, "C");
        fill(opt_DC_, "DC");
        fill(opt_R_, "R");
        fill(opt_T_, "T");
        rng_.set_state(ck.header.at("trainer_rng").template get<uint64_t>());
        step_ = ck.header.at("trainer_step").template get<int64_t>();
    }

private:
    Net<S>& net_;
    TrainConfig cfg_;
    Rng rng_;
    int64_t step_ = 0;
    Mat<S> phase2_fG_;
    bool have_phase2_fG_ = false;
    nn::Optimizer<S> opt_G_, opt_Dds_, opt_Dcs_, opt_C_, opt_DC_, opt_R_, opt_T_;
};

// ---------------------------------------------------------------------------

/// Top-1 accuracy of C(D_cs(G(x))) on a domain's held-out split.
template <class S>
double evaluate_accuracy(Net<S>& net, const TensorCorpus<S>& data, int dense_domain,
                         int batch_size = 256) {
    auto rows = data.eval_indices(dense_domain);
    require(!rows.empty(), "no held-out examples for domain");
    int correct = 0;
    for (size_t start = 0; start < rows.size(); start += batch_size) {
        size_t end = std::min(rows.size(), start + batch_size);
        Mat<S> x(end - start, data.images().cols());
        for (size_t i = start; i < end; ++i) x.row(Eigen::Index(i - start)) = data.images().row(rows[i]);
        Mat<S> f_cs = net.Dcs.forward(net.G.forward(x, Mode::eval), Mode::eval);
        Mat<S> probs = net.C.forward(f_cs, Mode::eval);
        for (size_t i = start; i < end; ++i) {
            Eigen::Index arg;
            probs.row(Eigen::Index(i - start)).maxCoeff(&arg);
            correct += int(arg) == data.class_label(rows[i]);
        }
    }
    return double(correct) / double(rows.size());
}

struct FitResult {
    std::string checkpoint_path;
    std::string log_path;
    double first_window_total = 0;  // smoothed total over the first 100 steps
    double last_window_total = 0;   // smoothed total over the last 100 steps
    int64_t steps = 0;
};

/// End-to-end training loop with a JSON-lines log and per-epoch checkpoints.
/// `resume_from` restarts bit-exactly from a saved training state.
template <class S>
FitResult fit(Net<S>& net, TensorCorpus<S>& data, const TrainConfig& cfg,
              const std::string& out_dir, const std::string& resume_from = "") {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    if (!cfg.labeled_domain_ids.empty()) {
        for (int dense = 0; dense < data.num_domains(); ++dense) {
            int manifest_id = data.manifest_ids()[dense];
            bool labeled = false;
            for (int id : cfg.labeled_domain_ids) labeled |= id == manifest_id;
            if (!labeled) data.mark_unlabeled(dense);
        }
    }
    Trainer<S> trainer(net, cfg);

    int start_epoch = 0;
    if (!resume_from.empty()) {
        model::Checkpoint<S> ck = model::Checkpoint<S>::load(resume_from);
        model::restore(net, ck);
        trainer.load_state(ck);
        start_epoch = ck.header.at("meta").value("epoch", 0);
    }

    // the epoch shuffle stream is separate from the trainer's so that
    // train-time randomness is stable under resume
    std::ofstream log(out_dir + "/train_log.jsonl", start_epoch > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open training log", out_dir + "/train_log.jsonl");

    std::vector<int> train_rows = data.train_indices();
    require(int(train_rows.size()) >= cfg.batch_size, "not enough training rows for one batch");

    FitResult result;
    std::vector<double> totals;
    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng = Rng::derive(cfg.seed, 0xE90C4u + uint64_t(epoch));
        std::vector<int> order = train_rows;
        shuffle_rng.shuffle(order);
        for (size_t start = 0; start + 1 < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            if (end - start < 2) break;
            std::vector<int> rows(order.begin() + start, order.begin() + end);
            Batch<S> batch = gather_batch(data, rows);
            LossBreakdown b = trainer.train_step(batch);
            totals.push_back(b.total);
            nlohmann::json line = b.to_json();
            line["step"] = trainer.step() - 1;
            line["epoch"] = epoch;
            log << line.dump() << "\n";
        }
        if (cfg.checkpoint_each_epoch) {
            model::Checkpoint<S> ck =
                model::snapshot(net, {{"epoch", epoch + 1}, {"config", cfg.to_json()}});
            trainer.save_state(ck);
            ck.save(out_dir + "/train_state.ckpt");
        }
    }
    log.flush();

    model::Checkpoint<S> final_ck =
        model::snapshot(net, {{"epochs", cfg.epochs}, {"config", cfg.to_json()}});
    result.checkpoint_path = out_dir + "/checkpoint.ckpt";
    final_ck.save(result.checkpoint_path);
    result.log_path = out_dir + "/train_log.jsonl";
    result.steps = int64_t(totals.size());

    const size_t w = std::min<size_t>(100, totals.size());
    if (w > 0) {
        double a = 0, z = 0;
        for (size_t i = 0; i < w; ++i) {
            a += totals[i];
            z += totals[totals.size() - 1 - i];
        }
        result.first_window_total = a / double(w);
        result.last_window_total = z / double(w);
    }
    return result;
}

} // namespace d2v::train
