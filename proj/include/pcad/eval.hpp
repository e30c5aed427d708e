#pragma once

#include "pcad/data.hpp"
#include "pcad/scoring.hpp"
#include "pcad/training.hpp"

#include <array>
#include <string>
#include <vector>

namespace pcad {

struct LabeledScores {
    std::vector<double> score;
    std::vector<char> is_anomaly; // parallel to score
};

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

/// Trapezoidal area under the ROC over all distinct thresholds. With ties
/// this equals the Mann-Whitney statistic P(anom > norm) + P(equal)/2.
/// Requires both labels present; an all-equal score vector yields 0.5.
double auc(const LabeledScores& data);

/// ROC staircase from (0,0) to (1,1), one point per distinct threshold.
std::vector<RocPoint> roc_curve(const LabeledScores& data);

struct ExperimentResult {
    std::string anomaly_class;
    ScoreVariant variant = ScoreVariant::Cd;
    int m = 0;
    std::uint64_t seed = 0;
    double auc = 0.0;
    std::vector<RocPoint> roc;
};

/// Trained model plus the split it was trained on.
struct CategoryModel {
    ModelParams params;
    CategorySplit split;
};

/// Train on every class except anomaly_class (holdout_fraction of each
/// normal class is reserved for testing).
CategoryModel train_category_model(const LabeledDataset& dataset,
                                   const std::string& anomaly_class, const TrainConfig& config,
                                   double holdout_fraction = 0.2);

/// Score a category split with given params and compute the AUC.
ExperimentResult evaluate_split(const ModelParams& params, const CategorySplit& split,
                                const std::string& anomaly_class, ScoreVariant variant,
                                std::uint64_t score_seed, const TrainConfig& config,
                                const ScoreOptions& options = {});

/// Full category-out experiment: split, train, score, AUC.
ExperimentResult category_out(const LabeledDataset& dataset, const std::string& anomaly_class,
                              const TrainConfig& config, ScoreVariant variant,
                              const ScoreOptions& options = {}, double holdout_fraction = 0.2);

struct SeedSweepResult {
    std::vector<double> aucs;
    double mean_auc = 0.0;
    double var_auc = 0.0;
    std::vector<double> fpr_grid;
    std::vector<double> tpr_mean;
    std::vector<double> tpr_var;
};

/// Re-scores a fixed trained model under n_seeds scoring-noise seeds and
/// aggregates the ROC on a fixed false-positive-rate grid.
SeedSweepResult seed_sweep_scored(const ModelParams& params, const CategorySplit& split,
                                  ScoreVariant variant, const TrainConfig& config, int n_seeds,
                                  const ScoreOptions& options = {});

/// Trains once, then sweeps the scoring seed.
SeedSweepResult seed_sweep(const LabeledDataset& dataset, const std::string& anomaly_class,
                           const TrainConfig& config, ScoreVariant variant, int n_seeds,
                           const ScoreOptions& options = {});

/// The output-point counts compared by the reconstruction-size ablation.
constexpr std::array<int, 5> kAblationPointCounts = {1024, 2048, 3072, 4096, 5120};

struct AblationTables {
    std::vector<std::string> classes;
    // loss ablation: per class, AUC without and with the re-encoding KL term
    std::vector<std::array<double, 2>> loss_table;
    // score ablation: per variant (table order), per class, at m = n
    std::array<std::vector<double>, 6> score_table;
    // output-size ablation: per class, per kAblationPointCounts entry
    std::vector<std::array<double, 5>> points_table;
};

/// Runs the three ablation grids, training one model per cell (per class
/// and loss mode, per class at m = n, per class and output size).
AblationTables ablation_tables(const LabeledDataset& dataset, const TrainConfig& config,
                               const ScoreOptions& options = {}, double holdout_fraction = 0.2);

void write_ablation_csvs(const std::string& dir, const AblationTables& tables);
void write_experiment_csv(const std::string& path, const std::vector<ExperimentResult>& results);
void write_roc_csv(const std::string& path, const std::vector<RocPoint>& roc);

} // namespace pcad
