#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "d2v/embedding/embed.hpp"

using namespace d2v;
using namespace d2v::embed;
namespace fs = std::filesystem;

namespace {

Eigen::VectorXd random_vec(Rng& rng, int n) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.normal();
    return v;
}

} // namespace

TEST_CASE("gram tridiagonal: zero activations give zero diagonals") {
    Eigen::VectorXd zeros = Eigen::VectorXd::Zero(3 * 4);
    GramDiagonals g = gram_tridiagonal(zeros, 3, 4);
    CHECK(g.main.cwiseAbs().maxCoeff() == 0.0);
    CHECK(g.upper.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gram tridiagonal: single all-ones 2x2 map has main diagonal [4]") {
    Eigen::VectorXd ones = Eigen::VectorXd::Ones(4);
    GramDiagonals g = gram_tridiagonal(ones, 1, 4);
    REQUIRE(g.main.size() == 1);
    CHECK(g.main[0] == 4.0);
    CHECK(g.upper.size() == 0);
    CHECK(g.flatten().size() == 1);
}

TEST_CASE("gram tridiagonal matches the brute-force full Gram restricted to its band") {
    Rng rng(3);
    for (int trial = 0; trial < 40; ++trial) {
        int c = 2 + rng.randint(6), h = 1 + rng.randint(4), w = 1 + rng.randint(4);
        int spatial = h * w;
        Eigen::VectorXd row = random_vec(rng, c * spatial);
        GramDiagonals g = gram_tridiagonal(row, c, spatial);

        // brute force F * F^T with a double loop
        Eigen::MatrixXd f(c, spatial);
        for (int i = 0; i < c; ++i)
            for (int k = 0; k < spatial; ++k) f(i, k) = row[i * spatial + k];
        Eigen::MatrixXd full = Eigen::MatrixXd::Zero(c, c);
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < c; ++j)
                for (int k = 0; k < spatial; ++k) full(i, j) += f(i, k) * f(j, k);

        for (int i = 0; i < c; ++i) {
            CHECK_THAT(g.main[i], Catch::Matchers::WithinRel(full(i, i), 1e-5));
            CHECK(g.main[i] >= 0.0);
        }
        for (int i = 0; i + 1 < c; ++i) {
            CHECK_THAT(g.upper[i], Catch::Matchers::WithinAbs(full(i, i + 1), 1e-5 * std::max(1.0, std::abs(full(i, i + 1)))));
            // symmetry: super == sub
            CHECK(full(i, i + 1) == full(i + 1, i));
        }
    }
}

TEST_CASE("gram accumulator mean equals averaging the diagonals") {
    Rng rng(5);
    GramAccumulator acc;
    Eigen::VectorXd sum_main = Eigen::VectorXd::Zero(3);
    for (int i = 0; i < 10; ++i) {
        Eigen::VectorXd row = random_vec(rng, 3 * 5);
        GramDiagonals g = gram_tridiagonal(row, 3, 5);
        sum_main += g.main;
        acc.add(g);
    }
    CHECK((acc.mean().main - sum_main / 10.0).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("domain prototype: single vector, symmetric pair, loop oracle") {
    Rng rng(7);
    Eigen::VectorXd v = random_vec(rng, 16);
    std::vector<Eigen::VectorXd> one{v};
    CHECK((domain_prototype(one).vector - v).cwiseAbs().maxCoeff() == 0.0);

    std::vector<Eigen::VectorXd> sym{v, -v};
    CHECK(domain_prototype(sym).vector.cwiseAbs().maxCoeff() < 1e-15);

    std::vector<Eigen::VectorXd> many;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(16);
    for (int i = 0; i < 100; ++i) {
        many.push_back(random_vec(rng, 16));
        acc += many.back();
    }
    CHECK((domain_prototype(many).vector - acc / 100.0).cwiseAbs().maxCoeff() < 1e-6);

    std::vector<Eigen::VectorXd> empty;
    CHECK_THROWS_AS(domain_prototype(empty), PreconditionError);
}

TEST_CASE("standardization gives exact zero mean and unit variance, dropping constants") {
    Rng rng(9);
    EmbeddingSet set;
    for (int i = 0; i < 8; ++i) {
        DomainEmbedding e;
        e.domain_id = i;
        e.raw = random_vec(rng, 20);
        e.raw[7] = 3.25;  // constant dim
        set.domains.push_back(e);
    }
    set.standardize();
    CHECK(set.dropped_dims == std::vector<int>{7});
    CHECK(set.dim() == 19);
    for (int j = 0; j < set.dim(); ++j) {
        double mean = 0, var = 0;
        for (const auto& e : set.domains) mean += e.standardized[j];
        mean /= 8;
        for (const auto& e : set.domains) var += std::pow(e.standardized[j] - mean, 2);
        var /= 8;
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
    }
}

TEST_CASE("domain distances: identity, symmetry, orthogonality, loop oracle") {
    Rng rng(11);
    EmbeddingSet set;
    for (int i = 0; i < 6; ++i) {
        DomainEmbedding e;
        e.domain_id = i;
        e.raw = random_vec(rng, 12);
        set.domains.push_back(e);
    }
    set.standardize();

    for (const auto& e : set.domains)
        CHECK(domain_distance(e, e, DistanceMetric::cosine) == 0.0);

    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
            double dij = domain_distance(set.domains[i], set.domains[j]);
            double dji = domain_distance(set.domains[j], set.domains[i]);
            CHECK(dij == dji);
            CHECK(dij >= 0.0);
            CHECK(dij <= 2.0);

            double loop = 0;
            for (int k = 0; k < set.dim(); ++k)
                loop += std::pow(set.domains[i].standardized[k] - set.domains[j].standardized[k], 2);
            CHECK_THAT(domain_distance(set.domains[i], set.domains[j], DistanceMetric::euclidean),
                       Catch::Matchers::WithinAbs(std::sqrt(loop), 1e-6));
        }

    // orthogonal standardized vectors have cosine distance exactly 1
    DomainEmbedding a, b;
    a.standardized = Eigen::VectorXd::Zero(4);
    b.standardized = Eigen::VectorXd::Zero(4);
    a.standardized[0] = 2.0;
    b.standardized[1] = -3.0;
    CHECK_THAT(domain_distance(a, b, DistanceMetric::cosine), Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("embedding csv round-trips raw vectors") {
    Rng rng(13);
    EmbeddingSet set;
    for (int i = 0; i < 3; ++i) {
        DomainEmbedding e;
        e.domain_id = i * 2;
        e.raw = random_vec(rng, 9);
        set.domains.push_back(e);
    }
    auto path = (fs::temp_directory_path() / "d2v_embed_test.csv").string();
    set.save_csv(path);
    EmbeddingSet loaded = EmbeddingSet::load_csv(path);
    REQUIRE(loaded.domains.size() == 3);
    for (int i = 0; i < 3; ++i) {
        CHECK(loaded.domains[i].domain_id == set.domains[i].domain_id);
        CHECK((loaded.domains[i].raw - set.domains[i].raw).cwiseAbs().maxCoeff() == 0.0);
    }
    fs::remove(path);
}

TEST_CASE("embed_domain produces the documented dimension and is deterministic") {
    datagen::GenerateConfig cfg;
    cfg.foregrounds = {"strokes-a"};
    cfg.backgrounds = {"synthetic-texture-A"};
    cfg.modes = {datagen::RenderMode::BB, datagen::RenderMode::Cr};
    cfg.include_original = false;
    cfg.count_per_domain = 40;
    cfg.seed = 5;
    cfg.write_png = false;
    std::string dir = (fs::temp_directory_path() / "d2v_embed_corpus").string();
    fs::remove_all(dir);
    auto manifest = datagen::build_corpus(cfg, dir);
    train::TensorCorpus<float> data(manifest);

    model::ModelDims dims = model::ModelDims::desk(10, 2);
    model::Net<float> net(dims, 3);

    EmbeddingSet set = embed_all_domains(net, data);
    // latent + (3c-2) per conv layer: 256 + 46 + 46 + 94
    CHECK(set.raw_dim() == 256 + (3 * 16 - 2) + (3 * 16 - 2) + (3 * 32 - 2));

    DomainEmbedding again = embed_domain(net, data, 0);
    CHECK((again.raw - set.domains[0].raw).cwiseAbs().maxCoeff() == 0.0);

    // prototype-only variant drops the gram block
    EmbeddingSet nogram = embed_all_domains(net, data, 0, false);
    CHECK(nogram.raw_dim() == 256);

    CHECK_THROWS_AS(embed_domain(net, data, 5), PreconditionError);
    fs::remove_all(dir);
}
