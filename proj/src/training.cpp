#include "pcad/training.hpp"

#include "pcad/common.hpp"
#include "pcad/rng.hpp"

#include "parallel.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace pcad {

double kl_unit_gaussian(const LatentGaussian& latent) {
    if (latent.mu.size() != latent.logvar.size())
        throw std::invalid_argument("kl_unit_gaussian: dimension mismatch");
    // 0.5 * sum(mu^2 + exp(lv) - 1 - lv), with expm1 so the per-dimension
    // terms stay nonnegative under rounding.
    double sum = 0.0;
    for (Eigen::Index i = 0; i < latent.mu.size(); ++i) {
        double mu = latent.mu[i];
        double lv = latent.logvar[i];
        sum += 0.5 * (mu * mu + (std::expm1(lv) - lv));
    }
    return sum;
}

LossBreakdown compute_loss(const ModelParams& params, const PointCloud& cloud,
                           const NoiseDraw& noise, const NoiseDraw& /*noise_rec*/,
                           const SphereGrid& grid, const TrainConfig& config) {
    LossSpec spec{true, true, config.kl_rec_enabled};
    LossValues v = forward_loss(params, cloud, noise, grid, config.k, spec);
    LossBreakdown b;
    b.lrec = v.rec;
    b.kl_ori = v.kl_ori;
    b.kl_rec = v.kl_rec;
    b.total = b.lrec + b.kl_ori + b.kl_rec;
    return b;
}

namespace {

void validate_fit_inputs(const std::vector<PointCloud>& train, const TrainConfig& cfg) {
    if (train.empty()) throw std::invalid_argument("fit: empty dataset");
    if (cfg.epochs < 1) throw std::invalid_argument("fit: epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("fit: batch_size must be >= 1");
    if (cfg.learning_rate < 0.0) throw std::invalid_argument("fit: negative learning rate");
    if (cfg.m < 1) throw std::invalid_argument("fit: m must be >= 1");
    for (std::size_t i = 0; i < train.size(); ++i)
        if (train[i].size() <= cfg.k)
            throw std::invalid_argument("fit: cloud " + std::to_string(i) + " has " +
                                        std::to_string(train[i].size()) +
                                        " points, need more than k=" + std::to_string(cfg.k));
}

} // namespace

FitResult fit(const std::vector<PointCloud>& train, const TrainConfig& cfg) {
    validate_fit_inputs(train, cfg);
    const int n_samples = static_cast<int>(train.size());
    const int d = cfg.d();
    const LossSpec spec{true, true, cfg.kl_rec_enabled};

    ModelParams params = init_params(cfg.model, derive_seed(cfg.seed, Stream::ParamInit));
    SphereGrid grid = fibonacci_sphere(cfg.m);

    Eigen::VectorXd flat = params.flatten();
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(flat.size());
    Eigen::VectorXd m2 = Eigen::VectorXd::Zero(flat.size());
    std::int64_t step = 0;

    std::vector<EpochLog> log;
    log.reserve(cfg.epochs);

    std::vector<int> order(n_samples);
    std::vector<Eigen::VectorXd> grads(std::min(cfg.batch_size, n_samples));
    std::vector<LossValues> values(grads.size());

    // the input-side graph and covariance features never change
    std::vector<EncoderInputs> inputs(n_samples);
    detail::parallel_for(n_samples, cfg.threads,
                         [&](int i) { inputs[i] = make_encoder_inputs(train[i], cfg.k); });

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(cfg.seed, Stream::Shuffle, epoch));
        shuffle_rng.shuffle(order);

        double sum_rec = 0.0, sum_ko = 0.0, sum_kr = 0.0;
        for (int start = 0; start < n_samples; start += cfg.batch_size) {
            const int batch = std::min(cfg.batch_size, n_samples - start);
            detail::parallel_for(batch, cfg.threads, [&](int b) {
                int si = order[start + b];
                NoiseDraw noise = draw_noise(
                    d, derive_seed(cfg.seed, Stream::TrainNoise,
                                   static_cast<std::uint64_t>(epoch) * n_samples + si));
                grads[b] = param_gradients(params, train[si], noise, grid, cfg.k, spec,
                                           &values[b], &inputs[si]);
            });

            // fixed-order reduction keeps results independent of scheduling
            Eigen::VectorXd gsum = Eigen::VectorXd::Zero(flat.size());
            for (int b = 0; b < batch; ++b) {
                const LossValues& v = values[b];
                double total = v.rec + v.kl_ori + v.kl_rec;
                if (!std::isfinite(total))
                    throw numerical_error(
                        "fit: non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                        std::to_string(order[start + b]) + " (lrec=" + format_g17(v.rec) +
                        ", kl_ori=" + format_g17(v.kl_ori) + ", kl_rec=" + format_g17(v.kl_rec) +
                        ")");
                sum_rec += v.rec;
                sum_ko += v.kl_ori;
                sum_kr += v.kl_rec;
                gsum += grads[b];
            }
            gsum /= static_cast<double>(batch);
            if (!gsum.allFinite())
                throw numerical_error("fit: non-finite gradient at epoch " +
                                      std::to_string(epoch));

            ++step;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * gsum;
            m2 = (cfg.beta2 * m2.array() + (1.0 - cfg.beta2) * gsum.array().square()).matrix();
            flat.array() -=
                cfg.learning_rate * (m1.array() / bc1) / ((m2.array() / bc2).sqrt() + cfg.adam_eps);
            params.unflatten(flat);
        }

        EpochLog el;
        el.epoch = epoch;
        el.lrec = sum_rec / n_samples;
        el.kl_ori = sum_ko / n_samples;
        el.kl_rec = sum_kr / n_samples;
        el.total = el.lrec + el.kl_ori + el.kl_rec;
        log.push_back(el);
    }
    return {std::move(params), std::move(log)};
}

void write_loss_csv(const std::string& path, const std::vector<EpochLog>& log) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw io_error("cannot write loss log: " + path);
    std::fprintf(f, "epoch,mean_lrec,mean_kl_ori,mean_kl_rec,mean_total\n");
    for (const auto& e : log)
        std::fprintf(f, "%d,%s,%s,%s,%s\n", e.epoch, format_g17(e.lrec).c_str(),
                     format_g17(e.kl_ori).c_str(), format_g17(e.kl_rec).c_str(),
                     format_g17(e.total).c_str());
    std::fclose(f);
}

} // namespace pcad
