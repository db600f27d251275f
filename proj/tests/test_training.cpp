#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "d2v/training/trainer.hpp"

using namespace d2v;
using namespace d2v::train;
using model::ModelDims;
using model::Net;

namespace fs = std::filesystem;
using MF = nn::Mat<float>;

namespace {

// Small-but-real dims on 32x32 inputs, cheap enough for unit tests.
ModelDims test_dims(int num_classes, int num_domains) {
    ModelDims d;
    d.conv1 = 6;
    d.conv2 = 6;
    d.conv3 = 12;
    d.disent_hidden = 128;
    d.latent = 32;
    d.dc_hidden = 16;
    d.mine_hidden = 24;
    d.num_classes = num_classes;
    d.num_domains = num_domains;
    return d;
}

const datagen::DatasetManifest& shared_corpus() {
    static datagen::DatasetManifest manifest = [] {
        datagen::GenerateConfig cfg;
        cfg.foregrounds = {"strokes-a"};
        cfg.backgrounds = {"synthetic-texture-A"};
        cfg.modes = {datagen::RenderMode::BB, datagen::RenderMode::Cr};
        cfg.include_original = false;
        cfg.count_per_domain = 250;
        cfg.seed = 99;
        cfg.write_png = false;
        std::string dir = (fs::temp_directory_path() / "d2v_train_test_corpus").string();
        fs::remove_all(dir);
        return datagen::build_corpus(cfg, dir);
    }();
    return manifest;
}

std::vector<MF> snapshot_params(Net<float>& net) {
    std::vector<MF> out;
    for (auto& p : net.all_params()) out.push_back(*p.value);
    return out;
}

std::vector<std::string> changed_components(Net<float>& net, const std::vector<MF>& before) {
    std::vector<std::string> changed;
    auto params = net.all_params();
    for (size_t i = 0; i < params.size(); ++i)
        if ((before[i] - *params[i].value).cwiseAbs().maxCoeff() != 0.0f) {
            std::string comp = params[i].name.substr(0, params[i].name.find('.'));
            if (changed.empty() || changed.back() != comp) changed.push_back(comp);
        }
    std::sort(changed.begin(), changed.end());
    changed.erase(std::unique(changed.begin(), changed.end()), changed.end());
    return changed;
}

Batch<float> first_batch(const TensorCorpus<float>& data, int n) {
    auto rows = data.train_indices();
    rows.resize(n);
    return gather_batch(data, rows);
}

} // namespace

TEST_CASE("gradient flow isolation: only C, D_cs, G move when only w1 is active") {
    TensorCorpus<float> data(shared_corpus());
    Net<float> net(test_dims(10, 2), 5);
    TrainConfig cfg;
    cfg.weights.w1 = 1.0;
    cfg.weights.w2 = cfg.weights.w3 = cfg.weights.w4 = 0.0;
    cfg.weights.alpha = 0.0;
    cfg.lr = 1e-3;
    cfg.batch_size = 16;
    Trainer<float> trainer(net, cfg);

    auto before = snapshot_params(net);
    trainer.train_step(first_batch(data, 16));
    auto changed = changed_components(net, before);
    CHECK(changed == std::vector<std::string>{"C", "Dcs", "G"});
}

TEST_CASE("identical config and seed give identical step-0 loss breakdowns") {
    TensorCorpus<float> data(shared_corpus());
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch_size = 16;
    cfg.seed = 77;

    auto run = [&] {
        Net<float> net(test_dims(10, 2), 31);
        Trainer<float> trainer(net, cfg);
        return trainer.train_step(first_batch(data, 16));
    };
    auto a = run(), b = run();
    CHECK(a.ce_class == b.ce_class);
    CHECK(a.ce_domain == b.ce_domain);
    CHECK(a.ent_class == b.ent_class);
    CHECK(a.rec == b.rec);
    CHECK(a.mi == b.mi);
    CHECK(a.total == b.total);
}

TEST_CASE("freeze contract: DC and C are bit-identical across the adversarial phase") {
    TensorCorpus<float> data(shared_corpus());
    Net<float> net(test_dims(10, 2), 13);
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch_size = 16;
    Trainer<float> trainer(net, cfg);
    Batch<float> batch = first_batch(data, 16);

    // run a full step first so optimizers are warm
    trainer.train_step(batch);

    auto dc_before = net.params_DC();
    auto c_before = net.params_C();
    std::vector<MF> dc_vals, c_vals;
    for (auto& p : dc_before) dc_vals.push_back(*p.value);
    for (auto& p : c_before) c_vals.push_back(*p.value);

    losses::LossBreakdown b;
    trainer.phase_adversarial(batch, b);
    CHECK(b.ent_class < 0.0);  // entropy terms were actually computed
    CHECK(b.ent_domain < 0.0);

    for (size_t i = 0; i < dc_before.size(); ++i)
        CHECK((dc_vals[i] - *dc_before[i].value).cwiseAbs().maxCoeff() == 0.0f);
    for (size_t i = 0; i < c_before.size(); ++i)
        CHECK((c_vals[i] - *c_before[i].value).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("classification loss falls below half its chance level within 50 steps") {
    TensorCorpus<float> data(shared_corpus());
    Net<float> net(test_dims(10, 2), 1);
    TrainConfig cfg;
    cfg.lr = 2e-3;
    cfg.batch_size = 32;
    cfg.weights = {1.0, 1.0, 1e-3, 0.1, 0.1};
    Trainer<float> trainer(net, cfg);

    auto rows = data.train_indices();
    Rng rng(3);
    double first = 0, last = 0;
    for (int step = 0; step < 50; ++step) {
        std::vector<int> pick;
        for (int i = 0; i < 32; ++i) pick.push_back(rows[rng.below(rows.size())]);
        auto b = trainer.train_step(gather_batch(data, pick));
        if (step == 0) first = b.ce_class;
        last = b.ce_class;
    }
    CHECK(first > 0.8 * std::log(10.0));  // starts near chance
    CHECK(last < 0.5 * std::log(10.0));
}

TEST_CASE("untrained model evaluates at chance and matches a per-example argmax loop") {
    TensorCorpus<float> data(shared_corpus());
    Net<float> net(test_dims(10, 2), 11);
    double acc = evaluate_accuracy(net, data, 0);
    CHECK(acc > 0.02);
    CHECK(acc < 0.25);

    // scalar oracle: one example at a time
    auto rows = data.eval_indices(0);
    int correct = 0;
    for (int r : rows) {
        MF x = data.images().row(r);
        auto f = net.forward(x, nn::Mode::eval);
        Eigen::Index arg;
        f.class_probs_cs.row(0).maxCoeff(&arg);
        correct += int(arg) == data.class_label(r);
    }
    CHECK_THAT(acc, Catch::Matchers::WithinAbs(double(correct) / rows.size(), 1e-12));
}

TEST_CASE("fit writes logs and checkpoints; loss decreases; resume is exact") {
    TensorCorpus<float> data(shared_corpus());
    TrainConfig cfg;
    cfg.lr = 1e-3;
    cfg.batch_size = 25;
    cfg.epochs = 4;
    cfg.seed = 42;

    std::string dir_a = (fs::temp_directory_path() / "d2v_fit_a").string();
    std::string dir_b = (fs::temp_directory_path() / "d2v_fit_b").string();
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);

    Net<float> net_a(test_dims(10, 2), 21);
    FitResult res_a = fit(net_a, data, cfg, dir_a);
    CHECK(fs::exists(res_a.checkpoint_path));
    CHECK(fs::exists(res_a.log_path));
    CHECK(res_a.last_window_total < res_a.first_window_total);

    // two epochs, then resume for two more: identical final parameters
    TrainConfig cfg2 = cfg;
    cfg2.epochs = 2;
    Net<float> net_b(test_dims(10, 2), 21);
    fit(net_b, data, cfg2, dir_b);
    TrainConfig cfg4 = cfg;
    cfg4.epochs = 4;
    FitResult res_b = fit(net_b, data, cfg4, dir_b, dir_b + "/train_state.ckpt");

    auto pa = net_a.all_params();
    auto pb = net_b.all_params();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i)
        CHECK((*pa[i].value - *pb[i].value).cwiseAbs().maxCoeff() == 0.0f);

    // log lines parse and contain the breakdown fields
    std::ifstream log(res_a.log_path);
    std::string line;
    REQUIRE(std::getline(log, line));
    auto j = nlohmann::json::parse(line);
    CHECK(j.contains("ce_class"));
    CHECK(j.contains("total"));
    CHECK(j.contains("step"));

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("non-finite input aborts with the offending component named") {
    TensorCorpus<float> data(shared_corpus());
    Net<float> net(test_dims(10, 2), 9);
    TrainConfig cfg;
    cfg.batch_size = 8;
    Trainer<float> trainer(net, cfg);
    Batch<float> batch = first_batch(data, 8);
    batch.x(0, 0) = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(trainer.train_step(batch), NumericError);
}

TEST_CASE("unlabeled domains refuse label access but still train domain losses") {
    TensorCorpus<float> data(shared_corpus());
    data.mark_unlabeled(1);
    CHECK_THROWS_AS(data.class_label(data.train_indices_of(1)[0]), PreconditionError);

    auto rows_l = data.train_indices_of(0);
    auto rows_u = data.train_indices_of(1);
    std::vector<int> pick(rows_l.begin(), rows_l.begin() + 8);
    pick.insert(pick.end(), rows_u.begin(), rows_u.begin() + 8);
    Batch<float> batch = gather_batch(data, pick);
    for (int i = 0; i < 8; ++i) CHECK(batch.class_labels[i] >= 0);
    for (int i = 8; i < 16; ++i) CHECK(batch.class_labels[i] == -1);

    Net<float> net(test_dims(10, 2), 2);
    TrainConfig cfg;
    cfg.batch_size = 16;
    Trainer<float> trainer(net, cfg);
    auto b = trainer.train_step(batch);
    CHECK(b.ce_class > 0.0);
    CHECK(b.ce_domain > 0.0);
}
