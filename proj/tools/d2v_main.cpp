// Command-line surface for the domain-embedding pipeline:
//   generate | train | embed | graph | msda | eval | report
// Exit codes: 0 success, 2 precondition violation, 3 numeric failure.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "d2v/datagen/corpus.hpp"
#include "d2v/eval/harness.hpp"
#include "d2v/eval/report.hpp"
#include "d2v/msda/msda.hpp"

using namespace d2v;

namespace {

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config", path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("config parse error: ") + e.what(), path);
    }
    return j;
}

void write_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write", path);
    out << j.dump(2) << "\n";
}

struct SeedOpt {
    uint64_t value = 0;
    bool set = false;
};

void add_seed(CLI::App* cmd, SeedOpt& seed) {
    cmd->add_option_function<uint64_t>(
        "--seed", [&seed](uint64_t v) { seed.value = v; seed.set = true; },
        "Override the config seed");
}

int cmd_generate(const std::string& config_path, const std::string& out, SeedOpt seed,
                 const std::string& scale, int foregrounds, int count, bool no_png) {
    datagen::GenerateConfig cfg;
    if (!config_path.empty()) {
        cfg = datagen::GenerateConfig::from_json(load_json(config_path));
    } else if (scale == "full") {
        cfg = datagen::GenerateConfig::full_default(seed.value);
    } else {
        cfg = datagen::GenerateConfig::desk_default(seed.value);
    }
    if (foregrounds > 0) {
        datagen::GenerateConfig grid = datagen::GenerateConfig::grid(
            foregrounds, cfg.count_per_domain, cfg.seed);
        cfg.foregrounds = grid.foregrounds;
    }
    if (count > 0) {
        cfg.count_per_domain = count;
        cfg.count_original = std::max(1, count / 2);
    }
    if (seed.set) cfg.seed = seed.value;
    if (no_png) cfg.write_png = false;

    datagen::DatasetManifest manifest = datagen::build_corpus(cfg, out);
    write_json(cfg.to_json(), out + "/resolved_config.json");
    std::cout << "generated " << manifest.num_domains() << " domains under " << out << "\n";
    return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& config_path,
              const std::string& out, SeedOpt seed, const std::string& resume) {
    auto manifest = datagen::DatasetManifest::load(manifest_path);
    train::TrainConfig cfg =
        config_path.empty() ? train::TrainConfig{} : train::TrainConfig::from_json(load_json(config_path));
    if (seed.set) cfg.seed = seed.value;
    cfg.validate();

    train::TensorCorpus<float> data(manifest);
    model::ModelDims dims = cfg.dims_for(data.num_classes(), data.num_domains());
    model::Net<float> net(dims, cfg.seed);
    std::filesystem::create_directories(out);
    write_json(cfg.to_json(), out + "/resolved_config.json");
    auto res = train::fit(net, data, cfg, out, resume);
    std::cout << "trained " << res.steps << " steps; checkpoint at " << res.checkpoint_path << "\n";
    return 0;
}

int cmd_embed(const std::string& manifest_path, const std::string& checkpoint,
              const std::string& out, bool no_gram, bool last_layer_only, int max_examples) {
    auto manifest = datagen::DatasetManifest::load(manifest_path);
    auto net = model::load_net<float>(checkpoint);
    train::TensorCorpus<float> data(manifest);
    embed::EmbeddingSet set =
        embed::embed_all_domains(*net, data, max_examples, !no_gram, last_layer_only);
    set.checkpoint_path = checkpoint;
    std::filesystem::create_directories(out);
    set.save_csv(out + "/embeddings.csv");
    write_json(set.meta_json(), out + "/embeddings_meta.json");
    std::cout << "embedded " << set.domains.size() << " domains (raw dim " << set.raw_dim()
              << ") under " << out << "\n";
    return 0;
}

int cmd_graph(const std::string& embeddings_csv, const std::string& out, int k,
              const std::string& metric_name) {
    embed::EmbeddingSet set = embed::EmbeddingSet::load_csv(embeddings_csv);
    set.standardize();
    Eigen::MatrixXd d = embed::distance_matrix(set, embed::metric_from_string(metric_name));
    std::vector<int> ids;
    std::vector<int64_t> counts;
    for (const auto& e : set.domains) {
        ids.push_back(e.domain_id);
        counts.push_back(e.sample_count);
    }
    embed::KnowledgeGraph g = embed::knn_graph(d, k, ids, counts);
    std::filesystem::create_directories(out);
    embed::save_distance_csv(d, ids, out + "/distances.csv");
    write_json(g.to_json(), out + "/graph.json");
    std::ofstream dot(out + "/graph.dot");
    dot << g.to_dot();
    std::cout << "graph over " << ids.size() << " domains written under " << out << "\n";
    return 0;
}

int cmd_msda(const std::string& manifest_path, const std::string& task_path,
             const std::string& variant_name, const std::string& config_path,
             const std::string& embeddings_csv, const std::string& out, SeedOpt seed) {
    auto manifest = datagen::DatasetManifest::load(manifest_path);
    msda::TransferTask task = msda::TransferTask::from_json(load_json(task_path));
    msda::Variant variant = msda::variant_from_string(variant_name);
    msda::MsdaConfig cfg =
        config_path.empty() ? msda::MsdaConfig{} : msda::MsdaConfig::from_json(load_json(config_path));
    if (seed.set) cfg.base.seed = seed.value;

    embed::EmbeddingSet set;
    const embed::EmbeddingSet* set_ptr = nullptr;
    if (!embeddings_csv.empty()) {
        set = embed::EmbeddingSet::load_csv(embeddings_csv);
        set.standardize();
        set_ptr = &set;
    }
    std::filesystem::create_directories(out);
    write_json(cfg.to_json(), out + "/resolved_config.json");
    msda::MsdaResult res = msda::run_msda<float>(manifest, task, variant, cfg, set_ptr, out);
    write_json(res.to_json(), out + "/result.json");
    std::cout << res.task << " " << res.variant << " target accuracy " << res.target_accuracy
              << "\n";
    return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& config_path,
             const std::string& tag_name, const std::string& out, SeedOpt seed,
             const std::string& reuse_checkpoint, const std::string& reuse_accuracy) {
    auto manifest = datagen::DatasetManifest::load(manifest_path);
    eval::EvalConfig cfg =
        config_path.empty() ? eval::EvalConfig{} : eval::EvalConfig::from_json(load_json(config_path));
    if (seed.set) {
        cfg.disentangle.seed = seed.value;
        cfg.cell.seed = seed.value;
    }
    eval::AblationTag tag = eval::ablation_from_string(tag_name);
    eval::PipelineReuse reuse;
    const eval::PipelineReuse* reuse_ptr = nullptr;
    if (!reuse_checkpoint.empty() || !reuse_accuracy.empty()) {
        reuse.checkpoint_path = reuse_checkpoint;
        if (!reuse_accuracy.empty()) {
            reuse.accuracy = eval::load_matrix_csv(reuse_accuracy);
            reuse.has_accuracy = true;
        }
        reuse_ptr = &reuse;
    }
    eval::TransferReport report = eval::run_ablation(manifest, cfg, tag, out, reuse_ptr);
    std::cout << "eval[" << report.ablation_tag << "] PCC " << report.pcc << "; artifacts under "
              << out << "\n";
    return 0;
}

int cmd_report(const std::string& in_dir, const std::string& out) {
    eval::TransferReport report = eval::load_report(in_dir);
    eval::write_report(report, out);
    std::cout << "report rendered under " << out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Domain embeddings from disentangled features: corpus generation, training, "
                 "embedding, transfer analysis and multi-source adaptation"};
    app.require_subcommand(1);

    // generate
    std::string g_config, g_out = "corpus", g_scale = "desk";
    SeedOpt g_seed;
    int g_fg = 0, g_count = 0;
    bool g_no_png = false;
    auto* gen = app.add_subcommand("generate", "Render the synthetic multi-domain corpus");
    gen->add_option("--config", g_config, "Generation config JSON");
    gen->add_option("--out", g_out, "Output directory")->required();
    gen->add_option("--scale", g_scale, "desk | full")->check(CLI::IsMember({"desk", "full"}));
    gen->add_option("--foregrounds", g_fg, "Number of glyph families (1..6)");
    gen->add_option("--count", g_count, "Examples per backgrounded domain");
    gen->add_flag("--no-png", g_no_png, "Skip PNG emission (shards only)");
    add_seed(gen, g_seed);

    // train
    std::string t_manifest, t_config, t_out = "run", t_resume;
    SeedOpt t_seed;
    auto* tr = app.add_subcommand("train", "Train the disentanglement model");
    tr->add_option("--manifest", t_manifest, "Corpus manifest path")->required();
    tr->add_option("--config", t_config, "Training config JSON");
    tr->add_option("--out", t_out, "Output directory")->required();
    tr->add_option("--resume", t_resume, "Training-state checkpoint to resume from");
    add_seed(tr, t_seed);

    // embed
    std::string e_manifest, e_checkpoint, e_out = "embeddings";
    bool e_no_gram = false, e_last_only = false;
    int e_max = 0;
    auto* em = app.add_subcommand("embed", "Extract per-domain embeddings");
    em->add_option("--manifest", e_manifest)->required();
    em->add_option("--checkpoint", e_checkpoint)->required();
    em->add_option("--out", e_out)->required();
    em->add_flag("--no-gram", e_no_gram, "Prototype-only embeddings");
    em->add_flag("--last-layer-only", e_last_only, "Gram from the last conv layer only");
    em->add_option("--max-examples", e_max, "Cap examples per domain (0 = all)");

    // graph
    std::string gr_embeddings, gr_out = "graph", gr_metric = "cosine";
    int gr_k = 5;
    auto* gr = app.add_subcommand("graph", "Distances and k-NN knowledge graph from embeddings");
    gr->add_option("--embeddings", gr_embeddings, "embeddings.csv")->required();
    gr->add_option("--out", gr_out)->required();
    gr->add_option("--k", gr_k, "Neighbors per node");
    gr->add_option("--metric", gr_metric)->check(CLI::IsMember({"cosine", "euclidean"}));

    // msda
    std::string m_manifest, m_task, m_variant, m_config, m_embeddings, m_out = "msda";
    SeedOpt m_seed;
    auto* ms = app.add_subcommand("msda", "Distance-weighted multi-source adaptation");
    ms->add_option("--manifest", m_manifest)->required();
    ms->add_option("--task", m_task, "Task JSON: {sources:[...], target:id}")->required();
    ms->add_option("--variant", m_variant)
        ->required()
        ->check(CLI::IsMember({"alpha", "beta", "uniform-alpha", "uniform-beta", "source-only"}));
    ms->add_option("--config", m_config, "MSDA config JSON");
    ms->add_option("--embeddings", m_embeddings, "embeddings.csv for distance weights");
    ms->add_option("--out", m_out)->required();
    add_seed(ms, m_seed);

    // eval
    std::string v_manifest, v_config, v_tag = "full", v_out = "eval", v_reuse_ck, v_reuse_acc;
    SeedOpt v_seed;
    auto* ev = app.add_subcommand("eval", "Cross-domain matrix, PCC and analysis artifacts");
    ev->add_option("--manifest", v_manifest)->required();
    ev->add_option("--config", v_config, "Eval config JSON");
    ev->add_option("--tag", v_tag)->check(CLI::IsMember({"full", "no-gram", "no-mi"}));
    ev->add_option("--out", v_out)->required();
    ev->add_option("--reuse-checkpoint", v_reuse_ck, "Reuse a trained checkpoint");
    ev->add_option("--reuse-accuracy", v_reuse_acc, "Reuse an accuracy.csv");
    add_seed(ev, v_seed);

    // report
    std::string r_in, r_out = "report";
    auto* rp = app.add_subcommand("report", "Render markdown + SVG report from eval artifacts");
    rp->add_option("--in", r_in, "Eval output directory")->required();
    rp->add_option("--out", r_out)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate(g_config, g_out, g_seed, g_scale, g_fg, g_count, g_no_png);
        if (tr->parsed()) return cmd_train(t_manifest, t_config, t_out, t_seed, t_resume);
        if (em->parsed()) return cmd_embed(e_manifest, e_checkpoint, e_out, e_no_gram, e_last_only, e_max);
        if (gr->parsed()) return cmd_graph(gr_embeddings, gr_out, gr_k, gr_metric);
        if (ms->parsed()) return cmd_msda(m_manifest, m_task, m_variant, m_config, m_embeddings, m_out, m_seed);
        if (ev->parsed()) return cmd_eval(v_manifest, v_config, v_tag, v_out, v_seed, v_reuse_ck, v_reuse_acc);
        if (rp->parsed()) return cmd_report(r_in, r_out);
    } catch (const PreconditionError& e) {
        std::cerr << "precondition error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
