#pragma once

#include "pcad/model.hpp"
#include "pcad/setdist.hpp"

#include <array>
#include <string>
#include <vector>

namespace pcad {

/// The six anomaly-score variants, in ablation-table order.
enum class ScoreVariant {
    LatentL2,        // || (mu + eps*sigma) - (mu^ + eps^*sigma^) ||_2
    Kl,              // KL(N(mu, sigma^2) || N(0,1))
    EmdPlusKlScaled, // N_scale(EMD) + N_scale(KL)
    Emd,             // EMD(S, S^)
    CdPlusKlScaled,  // N_scale(CD) + N_scale(KL)
    Cd,              // CD(S, S^)  (the default anomaly score)
};

constexpr std::array<ScoreVariant, 6> kAllScoreVariants = {
    ScoreVariant::LatentL2, ScoreVariant::Kl,             ScoreVariant::EmdPlusKlScaled,
    ScoreVariant::Emd,      ScoreVariant::CdPlusKlScaled, ScoreVariant::Cd,
};

bool is_composite(ScoreVariant v);
std::string variant_name(ScoreVariant v);
ScoreVariant parse_variant(const std::string& name);

struct ScoreOptions {
    bool deterministic_z = false; // use z = mu instead of a sampled z
    int emd_exact_limit = 1024;   // above this, EMD falls back to the auction solver
    int threads = 0;              // for test-set scoring; 0 = hardware
};

/// Raw score of one sample. Simple variants fill `value`; composite variants
/// fill the two components and leave `value` NaN until the test-set scaling
/// combines them.
struct SampleScore {
    ScoreVariant variant = ScoreVariant::Cd;
    double value = 0.0;
    double distance_component = 0.0;
    double kl_component = 0.0;
};

/// Variant formulas over precomputed forward products, so reconstruction can
/// be substituted in tests. latent_rec/z_rec may be null for every variant
/// except latent_l2.
SampleScore score_reconstruction(const PointCloud& cloud, const PointCloud& recon,
                                 const LatentGaussian& latent, const Eigen::VectorXd& z,
                                 const LatentGaussian* latent_rec, const Eigen::VectorXd* z_rec,
                                 ScoreVariant variant, const ScoreOptions& options = {});

SampleScore score_sample(const ModelParams& params, const SphereGrid& grid,
                         const PointCloud& cloud, ScoreVariant variant, std::uint64_t seed,
                         int k, const ScoreOptions& options = {});

/// Min-max scaling to [0, 1]; requires >= 2 values that are not all equal.
std::vector<double> n_scale(const std::vector<double>& raw);

struct TestsetScores {
    std::vector<SampleScore> samples;
    std::vector<double> final_scores;
};

/// Scores every cloud with a per-sample seed derived from run_seed and the
/// sample index. Composite variants are combined transductively:
/// n_scale(distance components) + n_scale(KL components) over this set.
TestsetScores score_testset_detailed(const ModelParams& params, const SphereGrid& grid,
                                     const std::vector<PointCloud>& clouds, ScoreVariant variant,
                                     std::uint64_t run_seed, int k,
                                     const ScoreOptions& options = {});

std::vector<double> score_testset(const ModelParams& params, const SphereGrid& grid,
                                  const std::vector<PointCloud>& clouds, ScoreVariant variant,
                                  std::uint64_t run_seed, int k, const ScoreOptions& options = {});

struct ScoreCsvRow {
    std::string id;
    std::string label;
    bool is_anomaly = false;
    SampleScore score;
    double final_score = 0.0;
};

void write_scores_csv(const std::string& path, const std::vector<ScoreCsvRow>& rows);

} // namespace pcad
