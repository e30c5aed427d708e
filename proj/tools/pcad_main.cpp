// pcad: synth / train / eval / score / ablate pipeline driver.
// Exit codes: 0 success, 2 usage error, 3 I/O error, 4 numerical abort.

#include "pcad/checkpoint.hpp"
#include "pcad/common.hpp"
#include "pcad/data.hpp"
#include "pcad/eval.hpp"
#include "pcad/rng.hpp"
#include "pcad/scoring.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pcad;

namespace {

struct RunConfig {
    // data
    std::vector<std::string> classes = synthetic_classes();
    int per_class = 100;
    int n = 2048;
    double noise_sigma = 0.02;
    double holdout = 0.2;
    // model + training
    TrainConfig train;
    // scoring
    bool deterministic_z = false;
};

json to_json(const RunConfig& c) {
    json j;
    j["classes"] = c.classes;
    j["per_class"] = c.per_class;
    j["n"] = c.n;
    j["noise_sigma"] = c.noise_sigma;
    j["holdout"] = c.holdout;
    j["seed"] = c.train.seed;
    j["epochs"] = c.train.epochs;
    j["batch_size"] = c.train.batch_size;
    j["learning_rate"] = c.train.learning_rate;
    j["beta1"] = c.train.beta1;
    j["beta2"] = c.train.beta2;
    j["adam_eps"] = c.train.adam_eps;
    j["k"] = c.train.k;
    j["m"] = c.train.m;
    j["d"] = c.train.model.latent_dim;
    j["kl_rec"] = c.train.kl_rec_enabled;
    j["threads"] = c.train.threads;
    j["enc_widths"] = c.train.model.enc_widths;
    j["graph_a_width"] = c.train.model.graph_a_width;
    j["graph_b_width"] = c.train.model.graph_b_width;
    j["bottleneck_width"] = c.train.model.bottleneck_width;
    j["fold_widths"] = c.train.model.fold_widths;
    j["deterministic_z"] = c.deterministic_z;
    return j;
}

void from_json_file(const std::string& path, RunConfig& c) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw io_error("malformed config " + path + ": " + e.what());
    }
    auto get = [&](const char* key, auto& into) {
        if (j.contains(key)) into = j.at(key).get<std::decay_t<decltype(into)>>();
    };
    get("classes", c.classes);
    get("per_class", c.per_class);
    get("n", c.n);
    get("noise_sigma", c.noise_sigma);
    get("holdout", c.holdout);
    get("seed", c.train.seed);
    get("epochs", c.train.epochs);
    get("batch_size", c.train.batch_size);
    get("learning_rate", c.train.learning_rate);
    get("beta1", c.train.beta1);
    get("beta2", c.train.beta2);
    get("adam_eps", c.train.adam_eps);
    get("k", c.train.k);
    get("m", c.train.m);
    get("d", c.train.model.latent_dim);
    get("kl_rec", c.train.kl_rec_enabled);
    get("threads", c.train.threads);
    get("enc_widths", c.train.model.enc_widths);
    get("graph_a_width", c.train.model.graph_a_width);
    get("graph_b_width", c.train.model.graph_b_width);
    get("bottleneck_width", c.train.model.bottleneck_width);
    get("fold_widths", c.train.model.fold_widths);
    get("deterministic_z", c.deterministic_z);
}

std::uint64_t file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot hash file: " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fnv1a64(bytes.data(), bytes.size());
}

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

// Every run directory gets a manifest sufficient to reproduce its outputs.
void write_run_manifest(const std::string& dir, const std::string& command, const RunConfig& cfg,
                        const json& extra) {
    json j;
    j["tool"] = "pcad";
    j["format_version"] = 1;
    j["command"] = command;
    j["config"] = to_json(cfg);
    for (const auto& [key, value] : extra.items()) j[key] = value;
    std::ofstream out(fs::path(dir) / "run_manifest.json");
    if (!out) throw io_error("cannot write run manifest in " + dir);
    out << j.dump(2) << "\n";
}

ScoreOptions score_options(const RunConfig& cfg) {
    ScoreOptions o;
    o.deterministic_z = cfg.deterministic_z;
    o.threads = cfg.train.threads;
    return o;
}

std::vector<ScoreVariant> parse_variants(const std::string& name) {
    if (name == "all")
        return {kAllScoreVariants.begin(), kAllScoreVariants.end()};
    return {parse_variant(name)};
}

int cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
    LabeledDataset ds =
        synth_generate(cfg.classes, cfg.per_class, cfg.n, cfg.noise_sigma, cfg.train.seed);
    fs::create_directories(out_dir);
    std::string manifest = export_dataset(out_dir, ds);
    write_run_manifest(out_dir, "synth",
                       cfg, {{"outputs", {"manifest.json"}}, {"records", ds.size()}});
    std::printf("wrote %d clouds to %s\n", ds.size(), manifest.c_str());
    return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& manifest, const std::string& anomaly_class,
              const std::string& out_dir) {
    LabeledDataset ds = load_manifest(manifest, cfg.n, cfg.train.seed);
    CategorySplit split = category_out_split(ds, anomaly_class, cfg.holdout, cfg.train.seed);
    std::vector<PointCloud> clouds;
    for (const auto& r : split.train.records) clouds.push_back(r.cloud);
    FitResult fr = fit(clouds, cfg.train);

    fs::create_directories(out_dir);
    std::string ckpt = (fs::path(out_dir) / "checkpoint.bin").string();
    save_checkpoint(ckpt, fr.params, cfg.train);
    write_loss_csv((fs::path(out_dir) / "loss.csv").string(), fr.log);
    write_run_manifest(out_dir, "train", cfg,
                       {{"manifest", manifest},
                        {"anomaly_class", anomaly_class},
                        {"train_samples", static_cast<int>(clouds.size())},
                        {"checkpoint_hash", hex64(file_hash(ckpt))},
                        {"outputs", {"checkpoint.bin", "loss.csv"}}});
    std::printf("trained on %zu clouds; final mean loss %s\n", clouds.size(),
                format_g17(fr.log.back().total).c_str());
    return 0;
}

// Rebuilds the category split a checkpoint was trained with.
CategorySplit split_for_checkpoint(const RunConfig& cfg, const std::string& manifest,
                                   const std::string& anomaly_class) {
    LabeledDataset ds = load_manifest(manifest, cfg.n, cfg.train.seed);
    for (const auto& r : ds.records)
        if (r.cloud.size() <= cfg.train.k)
            throw std::invalid_argument("checkpoint k is too large for these clouds");
    return category_out_split(ds, anomaly_class, cfg.holdout, cfg.train.seed);
}

int cmd_eval(RunConfig cfg, const std::string& checkpoint, const std::string& manifest,
             const std::string& anomaly_class, const std::string& out_dir,
             const std::string& variant_arg, int seeds, std::vector<int> points,
             bool seed_given, std::uint64_t score_seed) {
    Checkpoint ck = load_checkpoint(checkpoint);
    cfg.train = ck.config;
    if (!seed_given) score_seed = ck.config.seed;
    CategorySplit split = split_for_checkpoint(cfg, manifest, anomaly_class);

    fs::create_directories(out_dir);
    std::vector<ExperimentResult> results;
    for (ScoreVariant v : parse_variants(variant_arg)) {
        ExperimentResult r = evaluate_split(ck.params, split, anomaly_class, v, score_seed,
                                            cfg.train, score_options(cfg));
        write_roc_csv((fs::path(out_dir) / ("roc_" + variant_name(v) + ".csv")).string(), r.roc);
        std::printf("%s  auc=%.4f\n", variant_name(v).c_str(), r.auc);
        results.push_back(std::move(r));
    }
    write_experiment_csv((fs::path(out_dir) / "auc_report.csv").string(), results);

    if (seeds > 1) {
        SeedSweepResult sw = seed_sweep_scored(ck.params, split, parse_variants(variant_arg)[0],
                                               cfg.train, seeds, score_options(cfg));
        std::FILE* f = std::fopen((fs::path(out_dir) / "seed_aucs.csv").string().c_str(), "w");
        if (!f) throw io_error("cannot write seed_aucs.csv");
        std::fprintf(f, "sweep_index,auc\n");
        for (std::size_t i = 0; i < sw.aucs.size(); ++i)
            std::fprintf(f, "%zu,%s\n", i, format_g17(sw.aucs[i]).c_str());
        std::fclose(f);
        f = std::fopen((fs::path(out_dir) / "roc_mean.csv").string().c_str(), "w");
        if (!f) throw io_error("cannot write roc_mean.csv");
        std::fprintf(f, "fpr,tpr_mean,tpr_var\n");
        for (std::size_t i = 0; i < sw.fpr_grid.size(); ++i)
            std::fprintf(f, "%s,%s,%s\n", format_g17(sw.fpr_grid[i]).c_str(),
                         format_g17(sw.tpr_mean[i]).c_str(), format_g17(sw.tpr_var[i]).c_str());
        std::fclose(f);
        std::printf("seed sweep: mean auc %.4f over %d seeds\n", sw.mean_auc, seeds);
    }

    if (!points.empty()) {
        // same checkpoint, different decode grid sizes
        std::FILE* f = std::fopen((fs::path(out_dir) / "points_report.csv").string().c_str(), "w");
        if (!f) throw io_error("cannot write points_report.csv");
        std::fprintf(f, "m,auc\n");
        for (int m : points) {
            TrainConfig tc = cfg.train;
            tc.m = m;
            ExperimentResult r = evaluate_split(ck.params, split, anomaly_class,
                                                parse_variants(variant_arg)[0], score_seed, tc,
                                                score_options(cfg));
            std::fprintf(f, "%d,%s\n", m, format_g17(r.auc).c_str());
        }
        std::fclose(f);
    }

    write_run_manifest(out_dir, "eval", cfg,
                       {{"manifest", manifest},
                        {"anomaly_class", anomaly_class},
                        {"checkpoint", checkpoint},
                        {"checkpoint_hash", hex64(file_hash(checkpoint))},
                        {"variant", variant_arg},
                        {"seeds", seeds},
                        {"score_seed", score_seed},
                        {"points", points}});
    return 0;
}

int cmd_score(RunConfig cfg, const std::string& checkpoint, const std::string& manifest,
              const std::string& anomaly_class, const std::string& out_dir,
              const std::string& variant_arg, bool seed_given, std::uint64_t score_seed) {
    Checkpoint ck = load_checkpoint(checkpoint);
    cfg.train = ck.config;
    if (!seed_given) score_seed = ck.config.seed;
    CategorySplit split = split_for_checkpoint(cfg, manifest, anomaly_class);
    ScoreVariant variant = parse_variant(variant_arg);

    SphereGrid grid = fibonacci_sphere(cfg.train.m);
    std::vector<PointCloud> clouds;
    for (const auto& r : split.test.records) clouds.push_back(r.cloud);
    TestsetScores ts = score_testset_detailed(ck.params, grid, clouds, variant, score_seed,
                                              cfg.train.k, score_options(cfg));

    std::vector<ScoreCsvRow> rows(clouds.size());
    for (std::size_t i = 0; i < clouds.size(); ++i) {
        rows[i].id = split.test.records[i].id;
        rows[i].label = split.test.records[i].label;
        rows[i].is_anomaly = split.test_is_anomaly[i] != 0;
        rows[i].score = ts.samples[i];
        rows[i].final_score = ts.final_scores[i];
    }
    fs::create_directories(out_dir);
    write_scores_csv((fs::path(out_dir) / "scores.csv").string(), rows);
    write_run_manifest(out_dir, "score", cfg,
                       {{"manifest", manifest},
                        {"anomaly_class", anomaly_class},
                        {"checkpoint", checkpoint},
                        {"checkpoint_hash", hex64(file_hash(checkpoint))},
                        {"variant", variant_arg},
                        {"score_seed", score_seed},
                        {"outputs", {"scores.csv"}}});
    std::printf("wrote %zu scores\n", rows.size());
    return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& manifest, const std::string& out_dir) {
    LabeledDataset ds = load_manifest(manifest, cfg.n, cfg.train.seed);
    AblationTables tables = ablation_tables(ds, cfg.train, score_options(cfg), cfg.holdout);
    fs::create_directories(out_dir);
    write_ablation_csvs(out_dir, tables);
    write_run_manifest(out_dir, "ablate", cfg,
                       {{"manifest", manifest},
                        {"outputs",
                         {"loss_ablation.csv", "score_ablation.csv", "points_ablation.csv"}}});
    std::printf("wrote ablation tables for %zu classes\n", tables.classes.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"point-cloud anomaly detection toolkit"};
    app.require_subcommand(1);

    RunConfig cfg;
    std::string config_path, out_dir, manifest, anomaly_class, checkpoint;
    std::string variant_arg = "cd";
    int seeds = 1;
    std::vector<int> points;
    std::uint64_t score_seed = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON config file (flags win over it)");
        sub->add_option("--seed", cfg.train.seed, "run seed");
        sub->add_option("--threads", cfg.train.threads, "worker threads (1 = serial)");
        sub->add_option("--n", cfg.n, "points per cloud");
    };
    auto add_model = [&](CLI::App* sub) {
        sub->add_option("--k", cfg.train.k, "encoder neighborhood size");
        sub->add_option("--m", cfg.train.m, "decoder output points");
        sub->add_option("--d", cfg.train.model.latent_dim, "latent dimension");
        sub->add_option("--enc-widths", cfg.train.model.enc_widths, "encoder MLP widths")
            ->delimiter(',');
        sub->add_option("--graph-a-width", cfg.train.model.graph_a_width, "first graph layer");
        sub->add_option("--graph-b-width", cfg.train.model.graph_b_width, "second graph layer");
        sub->add_option("--bottleneck-width", cfg.train.model.bottleneck_width,
                        "bottleneck layer");
        sub->add_option("--fold-widths", cfg.train.model.fold_widths, "fold MLP widths")
            ->delimiter(',');
        sub->add_option("--holdout", cfg.holdout, "held-out fraction per normal class");
    };
    auto add_train = [&](CLI::App* sub) {
        sub->add_option("--epochs", cfg.train.epochs, "training epochs");
        sub->add_option("--batch-size", cfg.train.batch_size, "batch size");
        sub->add_option("--lr", cfg.train.learning_rate, "learning rate");
        sub->add_flag("--kl-rec,!--no-kl-rec", cfg.train.kl_rec_enabled,
                      "include the re-encoding KL loss term");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--classes", cfg.classes, "shape classes")->delimiter(',');
    synth->add_option("--per-class", cfg.per_class, "samples per class");
    synth->add_option("--noise-sigma", cfg.noise_sigma, "jitter sigma");
    add_common(synth);

    CLI::App* train = app.add_subcommand("train", "train on a category-out split");
    train->add_option("--manifest", manifest, "dataset manifest")->required();
    train->add_option("--anomaly-class", anomaly_class, "held-out class")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    add_common(train);
    add_model(train);
    add_train(train);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint (AUC / ROC)");
    eval_cmd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    eval_cmd->add_option("--manifest", manifest, "dataset manifest")->required();
    eval_cmd->add_option("--anomaly-class", anomaly_class, "held-out class")->required();
    eval_cmd->add_option("--out", out_dir, "output directory")->required();
    eval_cmd->add_option("--variant", variant_arg, "score variant or 'all'");
    eval_cmd->add_option("--seeds", seeds, "scoring-noise seed sweep size");
    eval_cmd->add_option("--points", points, "decode-grid sizes to compare")->delimiter(',');
    eval_cmd->add_flag("--deterministic-z", cfg.deterministic_z, "score with z = mu");
    auto* eval_seed = eval_cmd->add_option("--score-seed", score_seed,
                                           "scoring seed (default: checkpoint seed)");
    add_common(eval_cmd);

    CLI::App* score = app.add_subcommand("score", "per-sample anomaly scores");
    score->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    score->add_option("--manifest", manifest, "dataset manifest")->required();
    score->add_option("--anomaly-class", anomaly_class, "held-out class")->required();
    score->add_option("--out", out_dir, "output directory")->required();
    score->add_option("--variant", variant_arg, "score variant");
    score->add_flag("--deterministic-z", cfg.deterministic_z, "score with z = mu");
    auto* score_seed_opt = score->add_option("--score-seed", score_seed,
                                             "scoring seed (default: checkpoint seed)");
    add_common(score);

    CLI::App* ablate = app.add_subcommand("ablate", "loss / score / output-size ablations");
    ablate->add_option("--manifest", manifest, "dataset manifest")->required();
    ablate->add_option("--out", out_dir, "output directory")->required();
    add_common(ablate);
    add_model(ablate);
    add_train(ablate);

    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
            int code = app.exit(e);
            return code == 0 ? 0 : 2;
        }

        // JSON config fills everything a flag did not set explicitly.
        if (!config_path.empty()) {
            RunConfig file_cfg;
            from_json_file(config_path, file_cfg);
            CLI::App* sub = app.get_subcommands().front();
            RunConfig flag_cfg = cfg;
            cfg = file_cfg;
            // scalar-by-scalar: flags win over the config file
            auto has = [&](const std::string& f) {
                return sub->get_option_no_throw(f) != nullptr && sub->count(f) > 0;
            };
            if (has("--seed")) cfg.train.seed = flag_cfg.train.seed;
            if (has("--threads")) cfg.train.threads = flag_cfg.train.threads;
            if (has("--n")) cfg.n = flag_cfg.n;
            if (has("--k")) cfg.train.k = flag_cfg.train.k;
            if (has("--m")) cfg.train.m = flag_cfg.train.m;
            if (has("--d")) cfg.train.model.latent_dim = flag_cfg.train.model.latent_dim;
            if (has("--enc-widths")) cfg.train.model.enc_widths = flag_cfg.train.model.enc_widths;
            if (has("--graph-a-width"))
                cfg.train.model.graph_a_width = flag_cfg.train.model.graph_a_width;
            if (has("--graph-b-width"))
                cfg.train.model.graph_b_width = flag_cfg.train.model.graph_b_width;
            if (has("--bottleneck-width"))
                cfg.train.model.bottleneck_width = flag_cfg.train.model.bottleneck_width;
            if (has("--fold-widths"))
                cfg.train.model.fold_widths = flag_cfg.train.model.fold_widths;
            if (has("--holdout")) cfg.holdout = flag_cfg.holdout;
            if (has("--epochs")) cfg.train.epochs = flag_cfg.train.epochs;
            if (has("--batch-size")) cfg.train.batch_size = flag_cfg.train.batch_size;
            if (has("--lr")) cfg.train.learning_rate = flag_cfg.train.learning_rate;
            if (has("--kl-rec") || has("--no-kl-rec"))
                cfg.train.kl_rec_enabled = flag_cfg.train.kl_rec_enabled;
            if (has("--classes")) cfg.classes = flag_cfg.classes;
            if (has("--per-class")) cfg.per_class = flag_cfg.per_class;
            if (has("--noise-sigma")) cfg.noise_sigma = flag_cfg.noise_sigma;
            if (has("--deterministic-z")) cfg.deterministic_z = flag_cfg.deterministic_z;
        }

        if (synth->parsed()) return cmd_synth(cfg, out_dir);
        if (train->parsed()) return cmd_train(cfg, manifest, anomaly_class, out_dir);
        if (eval_cmd->parsed())
            return cmd_eval(cfg, checkpoint, manifest, anomaly_class, out_dir, variant_arg, seeds,
                            points, eval_seed->count() > 0, score_seed);
        if (score->parsed())
            return cmd_score(cfg, checkpoint, manifest, anomaly_class, out_dir, variant_arg,
                             score_seed_opt->count() > 0, score_seed);
        if (ablate->parsed()) return cmd_ablate(cfg, manifest, out_dir);
        return 2;
    } catch (const io_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 3;
    } catch (const numerical_error& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return 4;
    } catch (const std::invalid_argument& e) {
        std::cerr << "invalid arguments: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
