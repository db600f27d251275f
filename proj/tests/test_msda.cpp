#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "d2v/msda/msda.hpp"

using namespace d2v;
using namespace d2v::msda;
namespace fs = std::filesystem;

namespace {

model::ModelDims small_dims() {
    model::ModelDims d;
    d.conv1 = 6;
    d.conv2 = 6;
    d.conv3 = 12;
    d.disent_hidden = 128;
    d.latent = 32;
    d.dc_hidden = 16;
    d.mine_hidden = 24;
    return d;
}

const datagen::DatasetManifest& msda_corpus() {
    static datagen::DatasetManifest manifest = [] {
        datagen::GenerateConfig cfg;
        cfg.foregrounds = {"strokes-a"};
        cfg.backgrounds = {"synthetic-texture-A"};
        cfg.modes = {datagen::RenderMode::BB, datagen::RenderMode::Cr, datagen::RenderMode::GS};
        cfg.include_original = false;
        cfg.count_per_domain = 150;
        cfg.seed = 17;
        cfg.write_png = false;
        std::string dir = (fs::temp_directory_path() / "d2v_msda_corpus").string();
        fs::remove_all(dir);
        return datagen::build_corpus(cfg, dir);
    }();
    return manifest;
}

} // namespace

TEST_CASE("distance_to_weights: equal distances give exactly uniform weights") {
    for (double c : {0.0, 1.0, 7.5}) {
        auto w = distance_to_weights({c, c, c}, 1.0);
        for (double wi : w.weights) CHECK(wi == 1.0 / 3.0);
    }
    auto u = uniform_weights(3);
    auto e = distance_to_weights({2.0, 2.0, 2.0});
    for (int i = 0; i < 3; ++i) CHECK(u.weights[i] == e.weights[i]);
}

TEST_CASE("distance_to_weights: small temperature concentrates on the closest source") {
    double gap = 0.4;
    auto w = distance_to_weights({0.1, 0.1 + gap, 0.1 + 2 * gap}, gap / 20.0);
    CHECK(w.weights[0] > 0.99);
}

TEST_CASE("distance_to_weights: closed-form softmax case") {
    double tau = 0.7;
    auto w = distance_to_weights({0.0, std::log(2.0) * tau}, tau);
    CHECK_THAT(w.weights[0], Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-9));
    CHECK_THAT(w.weights[1], Catch::Matchers::WithinAbs(1.0 / 3.0, 1e-9));
}

TEST_CASE("softmax monotonicity: argmax weight is argmin distance") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> d;
        for (int i = 0; i < 5; ++i) d.push_back(rng.uniform(0.0, 3.0));
        auto w = distance_to_weights(d, rng.uniform(0.05, 2.0));
        int amax = int(std::max_element(w.weights.begin(), w.weights.end()) - w.weights.begin());
        int amin = int(std::min_element(d.begin(), d.end()) - d.begin());
        CHECK(amax == amin);
        double sum = 0;
        for (double wi : w.weights) sum += wi;
        CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
    CHECK_THROWS_AS(distance_to_weights({1.0}, 0.0), PreconditionError);
    CHECK_THROWS_AS(distance_to_weights({-0.1}, 1.0), PreconditionError);
    CHECK(distance_to_weights({0.5}).weights == std::vector<double>{1.0});
}

TEST_CASE("moment distance is zero for identical blocks and gradients match FD") {
    Rng rng(7);
    nn::Mat<double> a(5, 6), b(4, 6);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 6; ++j) a(i, j) = rng.normal();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 6; ++j) b(i, j) = rng.normal();

    auto same = moment_distance(a, a);
    CHECK_THAT(same.value, Catch::Matchers::WithinAbs(0.0, 1e-15));

    auto ml = moment_distance(a, b);
    CHECK(ml.value > 0.0);
    const double h = 1e-6;
    for (int trial = 0; trial < 15; ++trial) {
        int i = rng.randint(5), j = rng.randint(6);
        nn::Mat<double> ap = a, am = a;
        ap(i, j) += h;
        am(i, j) -= h;
        double fd = (moment_distance(ap, b).value - moment_distance(am, b).value) / (2 * h);
        CHECK(std::abs(fd - ml.grad_a(i, j)) < 1e-5 * std::max(1.0, std::abs(fd)));

        int ib = rng.randint(4);
        nn::Mat<double> bp = b, bm = b;
        bp(ib, j) += h;
        bm(ib, j) -= h;
        double fdb = (moment_distance(a, bp).value - moment_distance(a, bm).value) / (2 * h);
        CHECK(std::abs(fdb - ml.grad_b(ib, j)) < 1e-5 * std::max(1.0, std::abs(fdb)));
    }
}

TEST_CASE("task validation") {
    TransferTask t;
    t.source_domain_ids = {0, 1};
    t.target_domain_id = 1;
    CHECK_THROWS_AS(t.validate(), PreconditionError);
    t.target_domain_id = 2;
    t.validate();
    CHECK(t.label() == "src0+1->tgt2");
    CHECK(TransferTask::from_json(t.to_json()).label() == t.label());
}

TEST_CASE("weighted run with equal distances is bit-identical to the uniform ablation") {
    const auto& manifest = msda_corpus();
    TransferTask task;
    task.source_domain_ids = {0, 1};
    task.target_domain_id = 2;

    MsdaConfig cfg;
    cfg.base.lr = 1e-3;
    cfg.base.epochs = 2;
    cfg.base.seed = 9;
    cfg.custom_dims = small_dims();
    cfg.rows_per_domain = 8;

    std::string dir_a = (fs::temp_directory_path() / "d2v_msda_a").string();
    std::string dir_b = (fs::temp_directory_path() / "d2v_msda_b").string();
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    fs::create_directories(dir_a);
    fs::create_directories(dir_b);

    Adapter<float> ad_a(manifest, task, cfg);
    auto res_a = ad_a.run(Variant::beta, distance_to_weights({1.5, 1.5}, cfg.tau), dir_a);

    Adapter<float> ad_b(manifest, task, cfg);
    auto res_b = ad_b.run(Variant::uniform_beta, uniform_weights(2), dir_b);

    CHECK(res_a.target_accuracy == res_b.target_accuracy);
    auto pa = ad_a.net()->all_params();
    auto pb = ad_b.net()->all_params();
    for (size_t i = 0; i < pa.size(); ++i)
        CHECK((*pa[i].value - *pb[i].value).cwiseAbs().maxCoeff() == 0.0f);

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("source-only ignores the target and all variants produce sane accuracy") {
    const auto& manifest = msda_corpus();
    TransferTask task;
    task.source_domain_ids = {0, 1};
    task.target_domain_id = 2;

    MsdaConfig cfg;
    cfg.base.lr = 1e-3;
    cfg.base.epochs = 2;
    cfg.base.seed = 4;
    cfg.custom_dims = small_dims();
    cfg.rows_per_domain = 8;

    std::string dir = (fs::temp_directory_path() / "d2v_msda_c").string();
    fs::remove_all(dir);
    fs::create_directories(dir);

    for (auto variant : {Variant::source_only, Variant::uniform_alpha}) {
        auto res = run_msda<float>(manifest, task, variant, cfg, nullptr, dir);
        CHECK(res.target_accuracy >= 0.0);
        CHECK(res.target_accuracy <= 1.0);
    }
    // report rows were appended with a header
    std::ifstream in(dir + "/msda_report.csv");
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == "task,variant,seed,accuracy");
    int rows = 0;
    while (std::getline(in, line)) rows += !line.empty();
    CHECK(rows == 2);
    fs::remove_all(dir);
}

TEST_CASE("distance-weighted variants require an embedding set") {
    const auto& manifest = msda_corpus();
    TransferTask task;
    task.source_domain_ids = {0};
    task.target_domain_id = 2;
    MsdaConfig cfg;
    cfg.custom_dims = small_dims();
    CHECK_THROWS_AS(run_msda<float>(manifest, task, Variant::alpha, cfg, nullptr, "/tmp"),
                    PreconditionError);
}
