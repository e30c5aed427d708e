#include "pcad/eval.hpp"

#include "pcad/common.hpp"
#include "pcad/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <stdexcept>

namespace pcad {

namespace {

struct RocCounts {
    long positives = 0;
    long negatives = 0;
    std::vector<RocPoint> points;
    double area_counts = 0.0; // in units of tp*fp counts
};

RocCounts sweep_roc(const LabeledScores& data) {
    if (data.score.size() != data.is_anomaly.size())
        throw std::invalid_argument("auc: score/label length mismatch");
    RocCounts rc;
    for (char a : data.is_anomaly) (a ? rc.positives : rc.negatives)++;
    if (rc.positives == 0 || rc.negatives == 0)
        throw std::invalid_argument("auc: need at least one sample of each label");

    std::vector<int> order(data.score.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (data.score[a] != data.score[b]) return data.score[a] > data.score[b];
        return a < b;
    });

    rc.points.push_back({0.0, 0.0});
    long tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        // one threshold step per group of tied scores
        std::size_t j = i;
        long dtp = 0, dfp = 0;
        while (j < order.size() && data.score[order[j]] == data.score[order[i]]) {
            (data.is_anomaly[order[j]] ? dtp : dfp)++;
            ++j;
        }
        rc.area_counts += static_cast<double>(dfp) * (static_cast<double>(tp) + tp + dtp) / 2.0;
        tp += dtp;
        fp += dfp;
        rc.points.push_back({static_cast<double>(fp) / rc.negatives,
                             static_cast<double>(tp) / rc.positives});
        i = j;
    }
    return rc;
}

std::vector<PointCloud> clouds_of(const LabeledDataset& ds) {
    std::vector<PointCloud> out;
    out.reserve(ds.records.size());
    for (const auto& r : ds.records) out.push_back(r.cloud);
    return out;
}

double tpr_at(const std::vector<RocPoint>& roc, double fpr) {
    double best = 0.0;
    for (const auto& p : roc)
        if (p.fpr <= fpr) best = std::max(best, p.tpr);
    return best;
}

int common_cloud_size(const LabeledDataset& dataset) {
    int n = dataset.records.front().cloud.size();
    for (const auto& r : dataset.records)
        if (r.cloud.size() != n)
            throw std::invalid_argument(
                "ablation_tables: clouds must share one size for the m = n score table");
    return n;
}

} // namespace

double auc(const LabeledScores& data) {
    RocCounts rc = sweep_roc(data);
    return rc.area_counts / (static_cast<double>(rc.positives) * rc.negatives);
}

std::vector<RocPoint> roc_curve(const LabeledScores& data) { return sweep_roc(data).points; }

CategoryModel train_category_model(const LabeledDataset& dataset,
                                   const std::string& anomaly_class, const TrainConfig& config,
                                   double holdout_fraction) {
    CategoryModel cm;
    cm.split = category_out_split(dataset, anomaly_class, holdout_fraction, config.seed);
    FitResult fr = fit(clouds_of(cm.split.train), config);
    cm.params = std::move(fr.params);
    return cm;
}

ExperimentResult evaluate_split(const ModelParams& params, const CategorySplit& split,
                                const std::string& anomaly_class, ScoreVariant variant,
                                std::uint64_t score_seed, const TrainConfig& config,
                                const ScoreOptions& options) {
    ScoreOptions opts = options;
    if (opts.threads == 0) opts.threads = config.threads;
    SphereGrid grid = fibonacci_sphere(config.m);
    LabeledScores ls;
    ls.score = score_testset(params, grid, clouds_of(split.test), variant, score_seed, config.k,
                             opts);
    ls.is_anomaly = split.test_is_anomaly;

    ExperimentResult r;
    r.anomaly_class = anomaly_class;
    r.variant = variant;
    r.m = config.m;
    r.seed = score_seed;
    r.auc = auc(ls);
    r.roc = roc_curve(ls);
    return r;
}

ExperimentResult category_out(const LabeledDataset& dataset, const std::string& anomaly_class,
                              const TrainConfig& config, ScoreVariant variant,
                              const ScoreOptions& options, double holdout_fraction) {
    CategoryModel cm = train_category_model(dataset, anomaly_class, config, holdout_fraction);
    return evaluate_split(cm.params, cm.split, anomaly_class, variant, config.seed, config,
                          options);
}

SeedSweepResult seed_sweep_scored(const ModelParams& params, const CategorySplit& split,
                                  ScoreVariant variant, const TrainConfig& config, int n_seeds,
                                  const ScoreOptions& options) {
    if (n_seeds < 2) throw std::invalid_argument("seed_sweep: n_seeds must be >= 2");
    SeedSweepResult out;
    const int grid_points = 51;
    out.fpr_grid.resize(grid_points);
    for (int i = 0; i < grid_points; ++i) out.fpr_grid[i] = i / static_cast<double>(grid_points - 1);
    out.tpr_mean.assign(grid_points, 0.0);
    out.tpr_var.assign(grid_points, 0.0);

    std::vector<std::vector<double>> tprs(n_seeds, std::vector<double>(grid_points));
    for (int s = 0; s < n_seeds; ++s) {
        std::uint64_t seed = derive_seed(config.seed, Stream::SeedSweep, s);
        ExperimentResult r = evaluate_split(params, split, "", variant, seed, config, options);
        out.aucs.push_back(r.auc);
        for (int i = 0; i < grid_points; ++i) tprs[s][i] = tpr_at(r.roc, out.fpr_grid[i]);
    }

    out.mean_auc = std::accumulate(out.aucs.begin(), out.aucs.end(), 0.0) / n_seeds;
    for (double a : out.aucs) out.var_auc += (a - out.mean_auc) * (a - out.mean_auc);
    out.var_auc /= n_seeds;
    for (int i = 0; i < grid_points; ++i) {
        double mean = 0.0;
        for (int s = 0; s < n_seeds; ++s) mean += tprs[s][i];
        mean /= n_seeds;
        double var = 0.0;
        for (int s = 0; s < n_seeds; ++s) var += (tprs[s][i] - mean) * (tprs[s][i] - mean);
        out.tpr_mean[i] = mean;
        out.tpr_var[i] = var / n_seeds;
    }
    return out;
}

SeedSweepResult seed_sweep(const LabeledDataset& dataset, const std::string& anomaly_class,
                           const TrainConfig& config, ScoreVariant variant, int n_seeds,
                           const ScoreOptions& options) {
    CategoryModel cm = train_category_model(dataset, anomaly_class, config, 0.2);
    return seed_sweep_scored(cm.params, cm.split, variant, config, n_seeds, options);
}

AblationTables ablation_tables(const LabeledDataset& dataset, const TrainConfig& config,
                               const ScoreOptions& options, double holdout_fraction) {
    AblationTables t;
    t.classes = dataset.class_names();
    const int n = common_cloud_size(dataset);

    for (auto& column : t.score_table) column.resize(t.classes.size());
    for (std::size_t ci = 0; ci < t.classes.size(); ++ci) {
        const std::string& cls = t.classes[ci];

        // loss ablation at the configured m
        std::array<double, 2> loss_aucs{};
        for (int mode = 0; mode < 2; ++mode) {
            TrainConfig cfg = config;
            cfg.kl_rec_enabled = mode == 1;
            loss_aucs[mode] =
                category_out(dataset, cls, cfg, ScoreVariant::Cd, options, holdout_fraction).auc;
        }
        t.loss_table.push_back(loss_aucs);

        // score ablation: one model at m = n, six scores
        {
            TrainConfig cfg = config;
            cfg.m = n;
            CategoryModel cm = train_category_model(dataset, cls, cfg, holdout_fraction);
            for (std::size_t vi = 0; vi < kAllScoreVariants.size(); ++vi)
                t.score_table[vi][ci] = evaluate_split(cm.params, cm.split, cls,
                                                       kAllScoreVariants[vi], cfg.seed, cfg,
                                                       options)
                                            .auc;
        }

        // output-size ablation, one model per m
        std::array<double, 5> point_aucs{};
        for (std::size_t mi = 0; mi < kAblationPointCounts.size(); ++mi) {
            TrainConfig cfg = config;
            cfg.m = kAblationPointCounts[mi];
            point_aucs[mi] =
                category_out(dataset, cls, cfg, ScoreVariant::Cd, options, holdout_fraction).auc;
        }
        t.points_table.push_back(point_aucs);
    }
    return t;
}

namespace {

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

} // namespace

void write_ablation_csvs(const std::string& dir, const AblationTables& t) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::size_t nc = t.classes.size();

    {
        std::FILE* f = std::fopen((fs::path(dir) / "loss_ablation.csv").string().c_str(), "w");
        if (!f) throw io_error("cannot write loss_ablation.csv");
        std::fprintf(f, "class,without_kl_rec,with_kl_rec\n");
        double s0 = 0, s1 = 0;
        for (std::size_t i = 0; i < nc; ++i) {
            std::fprintf(f, "%s,%s,%s\n", t.classes[i].c_str(),
                         format_g17(t.loss_table[i][0]).c_str(),
                         format_g17(t.loss_table[i][1]).c_str());
            s0 += t.loss_table[i][0];
            s1 += t.loss_table[i][1];
        }
        std::fprintf(f, "average,%s,%s\n", format_g17(s0 / nc).c_str(),
                     format_g17(s1 / nc).c_str());
        std::fclose(f);
    }
    {
        std::FILE* f = std::fopen((fs::path(dir) / "score_ablation.csv").string().c_str(), "w");
        if (!f) throw io_error("cannot write score_ablation.csv");
        std::fprintf(f, "variant");
        for (const auto& c : t.classes) std::fprintf(f, ",%s", c.c_str());
        std::fprintf(f, ",average\n");
        for (std::size_t vi = 0; vi < kAllScoreVariants.size(); ++vi) {
            std::fprintf(f, "%s", variant_name(kAllScoreVariants[vi]).c_str());
            for (double v : t.score_table[vi]) std::fprintf(f, ",%s", format_g17(v).c_str());
            std::fprintf(f, ",%s\n", format_g17(mean_of(t.score_table[vi])).c_str());
        }
        std::fclose(f);
    }
    {
        std::FILE* f = std::fopen((fs::path(dir) / "points_ablation.csv").string().c_str(), "w");
        if (!f) throw io_error("cannot write points_ablation.csv");
        std::fprintf(f, "class");
        for (int m : kAblationPointCounts) std::fprintf(f, ",%d", m);
        std::fprintf(f, "\n");
        std::array<double, 5> sums{};
        for (std::size_t i = 0; i < nc; ++i) {
            std::fprintf(f, "%s", t.classes[i].c_str());
            for (std::size_t mi = 0; mi < sums.size(); ++mi) {
                std::fprintf(f, ",%s", format_g17(t.points_table[i][mi]).c_str());
                sums[mi] += t.points_table[i][mi];
            }
            std::fprintf(f, "\n");
        }
        std::fprintf(f, "average");
        for (double s : sums) std::fprintf(f, ",%s", format_g17(s / nc).c_str());
        std::fprintf(f, "\n");
        std::fclose(f);
    }
}

void write_experiment_csv(const std::string& path, const std::vector<ExperimentResult>& results) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw io_error("cannot write experiment csv: " + path);
    std::fprintf(f, "anomaly_class,variant,m,seed,auc\n");
    for (const auto& r : results)
        std::fprintf(f, "%s,%s,%d,%llu,%s\n", r.anomaly_class.c_str(),
                     variant_name(r.variant).c_str(), r.m,
                     static_cast<unsigned long long>(r.seed), format_g17(r.auc).c_str());
    std::fclose(f);
}

void write_roc_csv(const std::string& path, const std::vector<RocPoint>& roc) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw io_error("cannot write roc csv: " + path);
    std::fprintf(f, "fpr,tpr\n");
    for (const auto& p : roc)
        std::fprintf(f, "%s,%s\n", format_g17(p.fpr).c_str(), format_g17(p.tpr).c_str());
    std::fclose(f);
}

} // namespace pcad
