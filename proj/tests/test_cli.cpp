#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string(PCAD_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / "pcad_cli_test" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const std::string kTinyModel =
    " --k 4 --m 24 --d 8 --enc-widths 8,8,8 --graph-a-width 8 --graph-b-width 16"
    " --bottleneck-width 16 --fold-widths 16,16";

} // namespace

TEST_CASE("synth writes a reproducible dataset") {
    fs::path a = fresh_dir("synth_a");
    fs::path b = fresh_dir("synth_b");
    std::string flags = " --classes sphere,cube --per-class 4 --n 48 --noise-sigma 0.02 --seed 5";
    REQUIRE(run_cli("synth --out " + a.string() + flags) == 0);
    REQUIRE(run_cli("synth --out " + b.string() + flags) == 0);
    CHECK(fs::exists(a / "manifest.json"));
    CHECK(slurp(a / "manifest.json") == slurp(b / "manifest.json"));
    CHECK(slurp(a / "sphere" / "sphere_000.xyz") == slurp(b / "sphere" / "sphere_000.xyz"));
    CHECK(fs::exists(a / "run_manifest.json"));
}

TEST_CASE("synth refuses per_class below two") {
    fs::path dir = fresh_dir("synth_bad");
    CHECK(run_cli("synth --out " + dir.string() + " --per-class 1 --n 32") == 2);
}

TEST_CASE("train, eval, score pipeline on a tiny model") {
    fs::path data = fresh_dir("pipeline_data");
    REQUIRE(run_cli("synth --out " + data.string() +
                    " --classes sphere,cube,helix --per-class 5 --n 24 --seed 9") == 0);
    std::string manifest = (data / "manifest.json").string();

    fs::path run = fresh_dir("pipeline_run");
    std::string train_flags = "train --manifest " + manifest + " --anomaly-class cube --out " +
                              run.string() + kTinyModel +
                              " --n 24 --epochs 2 --batch-size 8 --seed 3 --threads 1";
    REQUIRE(run_cli(train_flags) == 0);
    CHECK(fs::exists(run / "checkpoint.bin"));
    CHECK(fs::exists(run / "loss.csv"));
    CHECK(fs::exists(run / "run_manifest.json"));

    // --no-kl-rec zeroes the kl_rec column
    fs::path run2 = fresh_dir("pipeline_run2");
    REQUIRE(run_cli("train --manifest " + manifest + " --anomaly-class cube --out " +
                    run2.string() + kTinyModel +
                    " --n 24 --epochs 2 --batch-size 8 --seed 3 --threads 1 --no-kl-rec") == 0);
    std::ifstream loss(run2 / "loss.csv");
    std::string line;
    std::getline(loss, line); // header
    while (std::getline(loss, line)) {
        if (line.empty()) continue;
        // epoch,mean_lrec,mean_kl_ori,mean_kl_rec,mean_total
        std::size_t p1 = line.find(',');
        std::size_t p2 = line.find(',', p1 + 1);
        std::size_t p3 = line.find(',', p2 + 1);
        std::size_t p4 = line.find(',', p3 + 1);
        CHECK(line.substr(p3 + 1, p4 - p3 - 1) == "0");
    }

    fs::path eval_out = fresh_dir("pipeline_eval");
    REQUIRE(run_cli("eval --checkpoint " + (run / "checkpoint.bin").string() + " --manifest " +
                    manifest + " --anomaly-class cube --out " + eval_out.string() +
                    " --variant all --n 24") == 0);
    std::ifstream report(eval_out / "auc_report.csv");
    int rows = 0;
    std::getline(report, line);
    CHECK(line == "anomaly_class,variant,m,seed,auc");
    while (std::getline(report, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 6); // one row per score variant

    fs::path score_out = fresh_dir("pipeline_score");
    REQUIRE(run_cli("score --checkpoint " + (run / "checkpoint.bin").string() + " --manifest " +
                    manifest + " --anomaly-class cube --out " + score_out.string() +
                    " --variant cd --n 24") == 0);
    std::ifstream scores(score_out / "scores.csv");
    std::getline(scores, line);
    CHECK(line == "id,label,is_anomaly,variant,raw_distance,raw_kl,final_score");
}

TEST_CASE("eval writes seed sweep and grid-size reports") {
    fs::path data = fresh_dir("sweep_data");
    REQUIRE(run_cli("synth --out " + data.string() +
                    " --classes sphere,torus --per-class 5 --n 24 --seed 2") == 0);
    fs::path run = fresh_dir("sweep_run");
    REQUIRE(run_cli("train --manifest " + (data / "manifest.json").string() +
                    " --anomaly-class torus --out " + run.string() + kTinyModel +
                    " --n 24 --epochs 2 --batch-size 8 --seed 4 --threads 1") == 0);
    fs::path out = fresh_dir("sweep_eval");
    REQUIRE(run_cli("eval --checkpoint " + (run / "checkpoint.bin").string() + " --manifest " +
                    (data / "manifest.json").string() + " --anomaly-class torus --out " +
                    out.string() + " --variant cd --seeds 5 --points 12,24,48 --n 24") == 0);
    std::ifstream aucs(out / "seed_aucs.csv");
    std::string line;
    std::getline(aucs, line);
    int rows = 0;
    while (std::getline(aucs, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 5);
    CHECK(fs::exists(out / "roc_mean.csv"));

    std::ifstream pts(out / "points_report.csv");
    std::getline(pts, line);
    CHECK(line == "m,auc");
    rows = 0;
    while (std::getline(pts, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);
}

TEST_CASE("exit codes distinguish usage, io, and numerical failures") {
    CHECK(run_cli("train --manifest /nonexistent/manifest.json --anomaly-class cube --out /tmp/x" +
                  kTinyModel) == 3);
    CHECK(run_cli("bogus-subcommand") == 2);
    CHECK(run_cli("train") == 2); // missing required flags

    // a huge learning rate makes the loss blow up -> numerical abort
    fs::path data = fresh_dir("abort_data");
    REQUIRE(run_cli("synth --out " + data.string() +
                    " --classes sphere,cube --per-class 4 --n 24 --seed 1") == 0);
    fs::path run = fresh_dir("abort_run");
    CHECK(run_cli("train --manifest " + (data / "manifest.json").string() +
                  " --anomaly-class cube --out " + run.string() + kTinyModel +
                  " --n 24 --epochs 60 --batch-size 4 --lr 1e12 --seed 1 --threads 1") == 4);
}

TEST_CASE("config file values are overridden by flags") {
    fs::path dir = fresh_dir("config");
    fs::path cfg = dir / "cfg.json";
    {
        std::ofstream out(cfg);
        out << R"({"per_class": 3, "n": 24, "classes": ["sphere", "cube"], "seed": 8})";
    }
    fs::path out_a = fresh_dir("config_a");
    REQUIRE(run_cli("synth --out " + out_a.string() + " --config " + cfg.string()) == 0);
    std::string manifest = slurp(out_a / "manifest.json");
    CHECK(manifest.find("sphere_002") != std::string::npos);
    CHECK(manifest.find("sphere_003") == std::string::npos); // per_class 3 from config

    fs::path out_b = fresh_dir("config_b");
    REQUIRE(run_cli("synth --out " + out_b.string() + " --config " + cfg.string() +
                    " --per-class 4") == 0);
    std::string manifest_b = slurp(out_b / "manifest.json");
    CHECK(manifest_b.find("sphere_003") != std::string::npos); // flag wins
}
