#include "pcad/scoring.hpp"

#include "pcad/common.hpp"
#include "pcad/rng.hpp"
#include "pcad/training.hpp"

#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace pcad {

bool is_composite(ScoreVariant v) {
    return v == ScoreVariant::EmdPlusKlScaled || v == ScoreVariant::CdPlusKlScaled;
}

std::string variant_name(ScoreVariant v) {
    switch (v) {
        case ScoreVariant::LatentL2: return "latent_l2";
        case ScoreVariant::Kl: return "kl";
        case ScoreVariant::EmdPlusKlScaled: return "emd_kl";
        case ScoreVariant::Emd: return "emd";
        case ScoreVariant::CdPlusKlScaled: return "cd_kl";
        case ScoreVariant::Cd: return "cd";
    }
    throw std::invalid_argument("variant_name: bad variant");
}

ScoreVariant parse_variant(const std::string& name) {
    for (ScoreVariant v : kAllScoreVariants)
        if (variant_name(v) == name) return v;
    throw std::invalid_argument("unknown score variant '" + name +
                                "' (latent_l2, kl, emd_kl, emd, cd_kl, cd)");
}

namespace {

double mean_nn_distance(const PointCloud& cloud) {
    if (cloud.size() < 2) return 0.0;
    double sum = 0.0;
    for (int i = 0; i < cloud.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (int j = 0; j < cloud.size(); ++j) {
            if (j == i) continue;
            best = std::min(best, (cloud.pts[i] - cloud.pts[j]).norm());
        }
        sum += best;
    }
    return sum / cloud.size();
}

double emd_value(const PointCloud& S, const PointCloud& T, const ScoreOptions& options) {
    if (S.size() <= options.emd_exact_limit) return emd_exact(S, T).value;
    double eps = std::max(1e-12, 1e-3 * mean_nn_distance(S));
    return emd_approx(S, T, eps).value;
}

} // namespace

SampleScore score_reconstruction(const PointCloud& cloud, const PointCloud& recon,
                                 const LatentGaussian& latent, const Eigen::VectorXd& z,
                                 const LatentGaussian* latent_rec, const Eigen::VectorXd* z_rec,
                                 ScoreVariant variant, const ScoreOptions& options) {
    auto require_bijection = [&]() {
        if (cloud.size() != recon.size())
            throw std::invalid_argument("EMD score needs m == n, got n=" +
                                        std::to_string(cloud.size()) + " and m=" +
                                        std::to_string(recon.size()));
    };

    SampleScore s;
    s.variant = variant;
    switch (variant) {
        case ScoreVariant::Cd:
            s.value = chamfer(cloud, recon).value;
            break;
        case ScoreVariant::Emd:
            require_bijection();
            s.value = emd_value(cloud, recon, options);
            break;
        case ScoreVariant::Kl:
            s.value = kl_unit_gaussian(latent);
            break;
        case ScoreVariant::LatentL2:
            if (!latent_rec || !z_rec)
                throw std::invalid_argument("latent_l2 needs the reconstruction's latent");
            (void)latent_rec;
            s.value = (z - *z_rec).norm();
            break;
        case ScoreVariant::CdPlusKlScaled:
            s.value = std::numeric_limits<double>::quiet_NaN();
            s.distance_component = chamfer(cloud, recon).value;
            s.kl_component = kl_unit_gaussian(latent);
            break;
        case ScoreVariant::EmdPlusKlScaled:
            require_bijection();
            s.value = std::numeric_limits<double>::quiet_NaN();
            s.distance_component = emd_value(cloud, recon, options);
            s.kl_component = kl_unit_gaussian(latent);
            break;
    }
    return s;
}

SampleScore score_sample(const ModelParams& params, const SphereGrid& grid,
                         const PointCloud& cloud, ScoreVariant variant, std::uint64_t seed,
                         int k, const ScoreOptions& options) {
    const int d = params.config.latent_dim;
    LatentGaussian lat = encode(params, cloud, k);

    NoiseDraw eps = draw_noise(d, derive_seed(seed, Stream::ScoreEps, 0));
    if (options.deterministic_z) eps.eps.setZero();
    Eigen::VectorXd z = reparameterize(lat, eps);
    PointCloud recon = decode(params, z, grid);

    if (variant == ScoreVariant::LatentL2) {
        LatentGaussian lat_rec = encode(params, recon, k);
        NoiseDraw eps_rec = draw_noise(d, derive_seed(seed, Stream::ScoreEps, 1));
        if (options.deterministic_z) eps_rec.eps.setZero();
        Eigen::VectorXd z_rec = reparameterize(lat_rec, eps_rec);
        return score_reconstruction(cloud, recon, lat, z, &lat_rec, &z_rec, variant, options);
    }
    return score_reconstruction(cloud, recon, lat, z, nullptr, nullptr, variant, options);
}

std::vector<double> n_scale(const std::vector<double>& raw) {
    if (raw.size() < 2) throw std::invalid_argument("n_scale: need at least 2 values");
    auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    if (*lo == *hi)
        throw std::invalid_argument("n_scale: all values equal, zero denominator");
    std::vector<double> out(raw.size());
    double span = *hi - *lo;
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - *lo) / span;
    return out;
}

TestsetScores score_testset_detailed(const ModelParams& params, const SphereGrid& grid,
                                     const std::vector<PointCloud>& clouds, ScoreVariant variant,
                                     std::uint64_t run_seed, int k, const ScoreOptions& options) {
    if (clouds.size() < 2)
        throw std::invalid_argument("score_testset: need at least 2 clouds");
    TestsetScores out;
    out.samples.resize(clouds.size());
    detail::parallel_for(static_cast<int>(clouds.size()), options.threads, [&](int i) {
        out.samples[i] = score_sample(params, grid, clouds[i], variant,
                                      derive_seed(run_seed, Stream::ScoreNoise, i), k, options);
    });

    if (is_composite(variant)) {
        std::vector<double> dist(clouds.size()), kl(clouds.size());
        for (std::size_t i = 0; i < clouds.size(); ++i) {
            dist[i] = out.samples[i].distance_component;
            kl[i] = out.samples[i].kl_component;
        }
        std::vector<double> sd = n_scale(dist);
        std::vector<double> sk = n_scale(kl);
        out.final_scores.resize(clouds.size());
        for (std::size_t i = 0; i < clouds.size(); ++i) out.final_scores[i] = sd[i] + sk[i];
    } else {
        out.final_scores.reserve(clouds.size());
        for (const auto& s : out.samples) out.final_scores.push_back(s.value);
    }
    return out;
}

std::vector<double> score_testset(const ModelParams& params, const SphereGrid& grid,
                                  const std::vector<PointCloud>& clouds, ScoreVariant variant,
                                  std::uint64_t run_seed, int k, const ScoreOptions& options) {
    return score_testset_detailed(params, grid, clouds, variant, run_seed, k, options)
        .final_scores;
}

void write_scores_csv(const std::string& path, const std::vector<ScoreCsvRow>& rows) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw io_error("cannot write scores csv: " + path);
    std::fprintf(f, "id,label,is_anomaly,variant,raw_distance,raw_kl,final_score\n");
    for (const auto& r : rows) {
        bool comp = is_composite(r.score.variant);
        std::fprintf(f, "%s,%s,%d,%s,%s,%s,%s\n", r.id.c_str(), r.label.c_str(),
                     r.is_anomaly ? 1 : 0, variant_name(r.score.variant).c_str(),
                     format_g17(comp ? r.score.distance_component : r.score.value).c_str(),
                     format_g17(comp ? r.score.kl_component : 0.0).c_str(),
                     format_g17(r.final_score).c_str());
    }
    std::fclose(f);
}

} // namespace pcad
