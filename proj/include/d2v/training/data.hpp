#pragma once

#include <set>
#include <string>
#include <vector>

#include "d2v/core/error.hpp"
#include "d2v/datagen/corpus.hpp"
#include "d2v/nn/layers.hpp"

namespace d2v::train {

using nn::Mat;

/// In-memory normalized view of (a subset of) a corpus. Rows are examples;
/// pixel values are mapped to (p/255 - mean_c) / std_c with the manifest's
/// channel statistics. Domain labels are re-indexed densely over the loaded
/// subset (0..D-1, in the order given).
template <class S>
class TensorCorpus {
public:
    TensorCorpus(const datagen::DatasetManifest& manifest, std::vector<int> domain_ids = {}) {
        if (domain_ids.empty())
            for (int d = 0; d < manifest.num_domains(); ++d) domain_ids.push_back(d);
        require(!domain_ids.empty(), "corpus view needs at least one domain");
        manifest_ids_ = domain_ids;
        num_classes_ = manifest.domain(domain_ids[0]).num_classes;

        int total = 0;
        for (int id : domain_ids) {
            require(manifest.domain(id).num_classes == num_classes_,
                    "all loaded domains must share one class count");
            total += manifest.domain(id).count;
        }
        const int feat = 3 * 32 * 32;
        x_.resize(total, feat);
        class_labels_.reserve(total);
        domain_labels_.reserve(total);
        eval_mask_.reserve(total);

        int row = 0;
        for (size_t dense = 0; dense < domain_ids.size(); ++dense) {
            int id = domain_ids[dense];
            auto items = datagen::load_domain(manifest, id);
            for (size_t i = 0; i < items.size(); ++i) {
                const auto& img = items[i].image;
                require(img.h == 32 && img.w == 32 && img.c == 3, "corpus images must be 32x32x3");
                S* dst = x_.row(row).data();
                for (int ch = 0; ch < 3; ++ch) {
                    const S mean = S(manifest.channel_mean[ch]);
                    const S inv_std = S(1.0 / manifest.channel_std[ch]);
                    for (int y = 0; y < 32; ++y)
                        for (int xp = 0; xp < 32; ++xp)
                            dst[(ch * 32 + y) * 32 + xp] =
                                (S(img.at(y, xp, ch)) / S(255) - mean) * inv_std;
                }
                class_labels_.push_back(items[i].class_label);
                domain_labels_.push_back(int(dense));
                eval_mask_.push_back(datagen::is_eval_example(manifest.seed, id, int(i)));
                ++row;
            }
        }
    }

    int num_examples() const { return int(class_labels_.size()); }
    int num_classes() const { return num_classes_; }
    int num_domains() const { return int(manifest_ids_.size()); }
    const std::vector<int>& manifest_ids() const { return manifest_ids_; }

    const Mat<S>& images() const { return x_; }

    int class_label(int i) const {
        if (unlabeled_.count(domain_labels_[i]))
            throw PreconditionError("label access refused: domain " +
                                    std::to_string(manifest_ids_[domain_labels_[i]]) +
                                    " is unlabeled in this view");
        return class_labels_[i];
    }

    int domain_label(int i) const { return domain_labels_[i]; }
    bool is_eval(int i) const { return eval_mask_[i]; }
    bool is_labeled_domain(int dense_id) const { return !unlabeled_.count(dense_id); }

    /// Marks a (dense) domain as unlabeled: class_label() refuses access.
    void mark_unlabeled(int dense_id) {
        require(dense_id >= 0 && dense_id < num_domains(), "bad dense domain id");
        unlabeled_.insert(dense_id);
    }

    std::vector<int> train_indices() const { return indices(false, -1); }
    std::vector<int> eval_indices(int dense_domain = -1) const { return indices(true, dense_domain); }
    std::vector<int> train_indices_of(int dense_domain) const { return indices(false, dense_domain); }

private:
    std::vector<int> indices(bool eval, int dense_domain) const {
        std::vector<int> out;
        for (int i = 0; i < num_examples(); ++i)
            if (eval_mask_[i] == eval && (dense_domain < 0 || domain_labels_[i] == dense_domain))
                out.push_back(i);
        return out;
    }

    Mat<S> x_;
    std::vector<int> class_labels_, domain_labels_;
    std::vector<bool> eval_mask_;
    std::vector<int> manifest_ids_;
    std::set<int> unlabeled_;
    int num_classes_ = 0;
};

/// One minibatch. class_labels holds -1 for rows whose domain is unlabeled.
template <class S>
struct Batch {
    Mat<S> x;
    std::vector<int> class_labels;
    std::vector<int> domain_labels;

    int size() const { return int(class_labels.size()); }
};

template <class S>
Batch<S> gather_batch(const TensorCorpus<S>& data, const std::vector<int>& rows) {
    Batch<S> b;
    b.x.resize(rows.size(), data.images().cols());
    b.class_labels.reserve(rows.size());
    b.domain_labels.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        b.x.row(Eigen::Index(i)) = data.images().row(rows[i]);
        int dense = data.domain_label(rows[i]);
        b.class_labels.push_back(data.is_labeled_domain(dense) ? data.class_label(rows[i]) : -1);
        b.domain_labels.push_back(dense);
    }
    return b;
}

} // namespace d2v::train
