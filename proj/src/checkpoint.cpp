#include "pcad/checkpoint.hpp"

#include "pcad/common.hpp"

#include <cstdio>
#include <cstring>
#include <memory>

namespace pcad {

namespace {

constexpr char kMagic[8] = {'P', 'C', 'A', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

template <typename T>
void put(std::FILE* f, const T& v) {
    if (std::fwrite(&v, sizeof(T), 1, f) != 1) throw io_error("checkpoint: short write");
}

template <typename T>
T get(std::FILE* f, const std::string& path) {
    T v;
    if (std::fread(&v, sizeof(T), 1, f) != 1)
        throw io_error("checkpoint: truncated file: " + path);
    return v;
}

} // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const TrainConfig& config) {
    if (params.config != config.model)
        throw std::invalid_argument("save_checkpoint: params/config model mismatch");
    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw io_error("cannot write checkpoint: " + path);

    std::fwrite(kMagic, 1, sizeof(kMagic), f.get());
    put(f.get(), kVersion);

    const ModelConfig& mc = config.model;
    put<std::int32_t>(f.get(), mc.latent_dim);
    for (int w : mc.enc_widths) put<std::int32_t>(f.get(), w);
    put<std::int32_t>(f.get(), mc.graph_a_width);
    put<std::int32_t>(f.get(), mc.graph_b_width);
    put<std::int32_t>(f.get(), mc.bottleneck_width);
    for (int w : mc.fold_widths) put<std::int32_t>(f.get(), w);

    put(f.get(), config.learning_rate);
    put(f.get(), config.beta1);
    put(f.get(), config.beta2);
    put(f.get(), config.adam_eps);
    put<std::int32_t>(f.get(), config.batch_size);
    put<std::int32_t>(f.get(), config.epochs);
    put<std::uint64_t>(f.get(), config.seed);
    put<std::int32_t>(f.get(), config.k);
    put<std::int32_t>(f.get(), config.m);
    put<std::uint8_t>(f.get(), config.kl_rec_enabled ? 1 : 0);

    Eigen::VectorXd flat = params.flatten();
    put<std::int64_t>(f.get(), flat.size());
    if (std::fwrite(flat.data(), sizeof(double), flat.size(), f.get()) !=
        static_cast<std::size_t>(flat.size()))
        throw io_error("checkpoint: short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw io_error("cannot open checkpoint: " + path);

    char magic[8];
    if (std::fread(magic, 1, sizeof(magic), f.get()) != sizeof(magic) ||
        std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw io_error("not a checkpoint file: " + path);
    auto version = get<std::uint32_t>(f.get(), path);
    if (version != kVersion)
        throw io_error("unsupported checkpoint version " + std::to_string(version) + ": " + path);

    Checkpoint ck;
    ModelConfig& mc = ck.config.model;
    mc.latent_dim = get<std::int32_t>(f.get(), path);
    for (int& w : mc.enc_widths) w = get<std::int32_t>(f.get(), path);
    mc.graph_a_width = get<std::int32_t>(f.get(), path);
    mc.graph_b_width = get<std::int32_t>(f.get(), path);
    mc.bottleneck_width = get<std::int32_t>(f.get(), path);
    for (int& w : mc.fold_widths) w = get<std::int32_t>(f.get(), path);

    ck.config.learning_rate = get<double>(f.get(), path);
    ck.config.beta1 = get<double>(f.get(), path);
    ck.config.beta2 = get<double>(f.get(), path);
    ck.config.adam_eps = get<double>(f.get(), path);
    ck.config.batch_size = get<std::int32_t>(f.get(), path);
    ck.config.epochs = get<std::int32_t>(f.get(), path);
    ck.config.seed = get<std::uint64_t>(f.get(), path);
    ck.config.k = get<std::int32_t>(f.get(), path);
    ck.config.m = get<std::int32_t>(f.get(), path);
    ck.config.kl_rec_enabled = get<std::uint8_t>(f.get(), path) != 0;

    auto count = get<std::int64_t>(f.get(), path);
    ck.params = zeros_like(init_params(mc, 0));
    if (count != ck.params.parameter_count())
        throw io_error("checkpoint parameter count mismatch: " + path);
    Eigen::VectorXd flat(count);
    if (std::fread(flat.data(), sizeof(double), count, f.get()) !=
        static_cast<std::size_t>(count))
        throw io_error("checkpoint: truncated parameters: " + path);
    ck.params.unflatten(flat);
    return ck;
}

} // namespace pcad
