#include "pcad/model.hpp"

#include "pcad/rng.hpp"
#include "pcad/setdist.hpp"
#include "pcad/common.hpp"
#include "pcad/training.hpp"

#include <cmath>
#include <stdexcept>

namespace pcad {

namespace {

void configure_shapes(ModelParams& p) {
    const ModelConfig& c = p.config;
    const int d = c.latent_dim;
    auto shape = [](DenseLayer& l, int in, int out) {
        l.w.resize(in, out);
        l.b.resize(out);
    };
    shape(p.enc1, 12, c.enc_widths[0]);
    shape(p.enc2, c.enc_widths[0], c.enc_widths[1]);
    shape(p.enc3, c.enc_widths[1], c.enc_widths[2]);
    shape(p.graph_a, c.enc_widths[2], c.graph_a_width);
    shape(p.graph_b, c.graph_a_width, c.graph_b_width);
    shape(p.bottleneck, c.skip_width(), c.bottleneck_width);
    shape(p.mu_head, c.bottleneck_width, d);
    shape(p.logvar_head, c.bottleneck_width, d);
    for (auto* fold : {&p.fold1, &p.fold2}) {
        shape((*fold)[0], d + 3, c.fold_widths[0]);
        shape((*fold)[1], c.fold_widths[0], c.fold_widths[1]);
        shape((*fold)[2], c.fold_widths[1], 3);
    }
}

void validate_config(const ModelConfig& c) {
    bool ok = c.latent_dim > 0 && c.graph_a_width > 0 && c.graph_b_width > 0 &&
              c.bottleneck_width > 0;
    for (int w : c.enc_widths) ok = ok && w > 0;
    for (int w : c.fold_widths) ok = ok && w > 0;
    if (!ok) throw std::invalid_argument("ModelConfig: all dimensions must be positive");
}

Eigen::MatrixXd dense_relu(const Eigen::MatrixXd& x, const DenseLayer& l) {
    Eigen::MatrixXd y = x * l.w;
    y.rowwise() += l.b.transpose();
    return y.cwiseMax(0.0);
}

Eigen::MatrixXd dense_linear(const Eigen::MatrixXd& x, const DenseLayer& l) {
    Eigen::MatrixXd y = x * l.w;
    y.rowwise() += l.b.transpose();
    return y;
}

// y = relu(x*w + b). Accumulates layer gradients into g, returns dx.
Eigen::MatrixXd relu_backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                              const DenseLayer& l, const Eigen::MatrixXd& dy, DenseLayer& g) {
    Eigen::MatrixXd dpre = dy.cwiseProduct((y.array() > 0.0).cast<double>().matrix());
    g.w.noalias() += x.transpose() * dpre;
    g.b.noalias() += dpre.colwise().sum().transpose();
    return dpre * l.w.transpose();
}

Eigen::MatrixXd linear_backward(const Eigen::MatrixXd& x, const DenseLayer& l,
                                const Eigen::MatrixXd& dy, DenseLayer& g) {
    g.w.noalias() += x.transpose() * dy;
    g.b.noalias() += dy.colwise().sum().transpose();
    return dy * l.w.transpose();
}

// Elementwise max over each point's k neighbors; arg records the winning
// point index (first neighbor in (distance, index) order wins ties).
// Channel-outer loops keep the accesses inside one column.
Eigen::MatrixXd graph_max_pool(const Eigen::MatrixXd& x, const NeighborGraph& g,
                               Eigen::MatrixXi& arg) {
    const int n = static_cast<int>(x.rows());
    const int c = static_cast<int>(x.cols());
    Eigen::MatrixXd out(n, c);
    arg.resize(n, c);
    for (int ch = 0; ch < c; ++ch) {
        const double* col = x.col(ch).data();
        double* out_col = out.col(ch).data();
        int* arg_col = arg.col(ch).data();
        for (int i = 0; i < n; ++i) {
            const std::int32_t* row = g.idx.data() + static_cast<std::size_t>(i) * g.k;
            double best = col[row[0]];
            int best_j = row[0];
            for (int jj = 1; jj < g.k; ++jj) {
                double v = col[row[jj]];
                if (v > best) {
                    best = v;
                    best_j = row[jj];
                }
            }
            out_col[i] = best;
            arg_col[i] = best_j;
        }
    }
    return out;
}

Eigen::RowVectorXd column_max(const Eigen::MatrixXd& x, Eigen::VectorXi& arg) {
    const int c = static_cast<int>(x.cols());
    Eigen::RowVectorXd out(c);
    arg.resize(c);
    for (int ch = 0; ch < c; ++ch) {
        Eigen::Index row;
        out[ch] = x.col(ch).maxCoeff(&row); // first maximal row wins ties
        arg[ch] = static_cast<int>(row);
    }
    return out;
}

struct EncoderTrace {
    NeighborGraph graph;
    Eigen::MatrixXd input; // n x 12: xyz | row-major local covariance
    Eigen::MatrixXd h1, h2, h3;
    Eigen::MatrixXd pa, a, pb, b;
    Eigen::MatrixXi pa_arg, pb_arg;
    Eigen::VectorXi g3_arg, ga_arg, gb_arg;
    Eigen::MatrixXd skip; // 1 x skip_width
    Eigen::MatrixXd e;    // 1 x bottleneck
    Eigen::VectorXd mu, logvar;
};

EncoderTrace encode_trace(const ModelParams& p, const PointCloud& cloud, int k,
                          const EncoderInputs* inputs = nullptr) {
    const ModelConfig& c = p.config;
    const int n = cloud.size();
    EncoderTrace t;
    if (inputs) {
        if (inputs->graph.n != n || inputs->graph.k != k)
            throw std::invalid_argument("encode: precomputed inputs do not match the cloud");
        t.graph = inputs->graph;
        t.input = inputs->features;
    } else {
        t.graph = knn_graph(cloud, k);
        t.input.resize(n, 12);
        for (int i = 0; i < n; ++i) t.input.block<1, 3>(i, 0) = cloud.pts[i].transpose();
        t.input.rightCols<9>() = local_covariance(cloud, t.graph);
    }

    t.h1 = dense_relu(t.input, p.enc1);
    t.h2 = dense_relu(t.h1, p.enc2);
    t.h3 = dense_relu(t.h2, p.enc3);
    t.pa = graph_max_pool(t.h3, t.graph, t.pa_arg);
    t.a = dense_relu(t.pa, p.graph_a);
    t.pb = graph_max_pool(t.a, t.graph, t.pb_arg);
    t.b = dense_relu(t.pb, p.graph_b);

    t.skip.resize(1, c.skip_width());
    t.skip.row(0).segment(0, c.enc_widths[2]) = column_max(t.h3, t.g3_arg);
    t.skip.row(0).segment(c.enc_widths[2], c.graph_a_width) = column_max(t.a, t.ga_arg);
    t.skip.row(0).segment(c.enc_widths[2] + c.graph_a_width, c.graph_b_width) =
        column_max(t.b, t.gb_arg);

    t.e = dense_relu(t.skip, p.bottleneck);
    t.mu = dense_linear(t.e, p.mu_head).row(0).transpose();
    t.logvar = dense_linear(t.e, p.logvar_head).row(0).transpose();
    return t;
}

// Backpropagates (dmu, dlogvar) through one encoder pass. When
// want_input_grad is set, also returns the gradient with respect to the
// input coordinates, including the chain through the covariance features
// (neighbor selection held fixed).
Eigen::MatrixXd encoder_backward(const EncoderTrace& t, const PointCloud& cloud,
                                 const ModelParams& p, const Eigen::VectorXd& dmu,
                                 const Eigen::VectorXd& dlv, ModelParams& g,
                                 bool want_input_grad) {
    const ModelConfig& c = p.config;
    const int n = cloud.size();
    const int w3 = c.enc_widths[2];
    const int wa = c.graph_a_width;
    const int wb = c.graph_b_width;

    Eigen::MatrixXd de = linear_backward(t.e, p.mu_head, dmu.transpose(), g.mu_head) +
                         linear_backward(t.e, p.logvar_head, dlv.transpose(), g.logvar_head);
    Eigen::MatrixXd dskip = relu_backward(t.skip, t.e, p.bottleneck, de, g.bottleneck);

    Eigen::MatrixXd db = Eigen::MatrixXd::Zero(n, wb);
    for (int ch = 0; ch < wb; ++ch) db(t.gb_arg[ch], ch) += dskip(0, w3 + wa + ch);
    Eigen::MatrixXd dpb = relu_backward(t.pb, t.b, p.graph_b, db, g.graph_b);

    Eigen::MatrixXd da = Eigen::MatrixXd::Zero(n, wa);
    for (int ch = 0; ch < wa; ++ch) {
        double* da_col = da.col(ch).data();
        const double* dpb_col = dpb.col(ch).data();
        const int* arg_col = t.pb_arg.col(ch).data();
        for (int i = 0; i < n; ++i) da_col[arg_col[i]] += dpb_col[i];
    }
    for (int ch = 0; ch < wa; ++ch) da(t.ga_arg[ch], ch) += dskip(0, w3 + ch);
    Eigen::MatrixXd dpa = relu_backward(t.pa, t.a, p.graph_a, da, g.graph_a);

    Eigen::MatrixXd dh3 = Eigen::MatrixXd::Zero(n, w3);
    for (int ch = 0; ch < w3; ++ch) {
        double* dh3_col = dh3.col(ch).data();
        const double* dpa_col = dpa.col(ch).data();
        const int* arg_col = t.pa_arg.col(ch).data();
        for (int i = 0; i < n; ++i) dh3_col[arg_col[i]] += dpa_col[i];
    }
    for (int ch = 0; ch < w3; ++ch) dh3(t.g3_arg[ch], ch) += dskip(0, ch);

    Eigen::MatrixXd dh2 = relu_backward(t.h2, t.h3, p.enc3, dh3, g.enc3);
    Eigen::MatrixXd dh1 = relu_backward(t.h1, t.h2, p.enc2, dh2, g.enc2);
    Eigen::MatrixXd dinput = relu_backward(t.input, t.h1, p.enc1, dh1, g.enc1);

    if (!want_input_grad) return {};

    Eigen::MatrixXd dx = dinput.leftCols<3>();
    const int k = t.graph.k;
    for (int i = 0; i < n; ++i) {
        Eigen::Matrix3d gamma;
        for (int r = 0; r < 3; ++r)
            for (int cc = 0; cc < 3; ++cc) gamma(r, cc) = dinput(i, 3 + 3 * r + cc);
        Eigen::Matrix3d sym = gamma + gamma.transpose();
        Eigen::Vector3d mean = Eigen::Vector3d::Zero();
        for (int j = 0; j < k; ++j) mean += cloud.pts[t.graph.at(i, j)];
        mean /= static_cast<double>(k);
        // d cov_i / d x_j routed through (1/k) sum (x_j - mean)(x_j - mean)^T
        for (int j = 0; j < k; ++j) {
            int pj = t.graph.at(i, j);
            dx.row(pj) +=
                ((sym * (cloud.pts[pj] - mean)) / static_cast<double>(k)).transpose();
        }
    }
    return dx;
}

struct FoldTrace {
    Eigen::MatrixXd in, h1, h2, out;
};

FoldTrace fold_forward(const std::array<DenseLayer, 3>& fold, const Eigen::VectorXd& z,
                       const Eigen::MatrixXd& base) {
    const int m = static_cast<int>(base.rows());
    const int d = static_cast<int>(z.size());
    FoldTrace f;
    f.in.resize(m, d + 3);
    f.in.leftCols(d) = z.transpose().replicate(m, 1);
    f.in.rightCols<3>() = base;
    f.h1 = dense_relu(f.in, fold[0]);
    f.h2 = dense_relu(f.h1, fold[1]);
    f.out = dense_linear(f.h2, fold[2]);
    return f;
}

// Returns the gradient w.r.t. the base points; z contributions accumulate.
Eigen::MatrixXd fold_backward(const FoldTrace& f, const std::array<DenseLayer, 3>& fold,
                              std::array<DenseLayer, 3>& g, const Eigen::MatrixXd& dout,
                              Eigen::VectorXd& dz) {
    const int d = static_cast<int>(dz.size());
    Eigen::MatrixXd dh2 = linear_backward(f.h2, fold[2], dout, g[2]);
    Eigen::MatrixXd dh1 = relu_backward(f.h1, f.h2, fold[1], dh2, g[1]);
    Eigen::MatrixXd din = relu_backward(f.in, f.h1, fold[0], dh1, g[0]);
    dz += din.leftCols(d).colwise().sum().transpose();
    return din.rightCols<3>();
}

// The training objective's reconstruction term is the sum-reduced chamfer:
// summed nearest-neighbor distances in both directions, unsquared, with the
// same lower-index tie handling as the averaged scoring metric. The sum
// reduction keeps the term commensurate with the dimension-summed KL terms;
// the averaged form (a fraction of a model unit on normalized clouds) is
// outweighed by the KL cost of any informative latent and trains into
// posterior collapse.
double chamfer_sum_value(const PointCloud& S, const PointCloud& T, const DistanceReport& m) {
    double sum = 0.0;
    for (int i = 0; i < S.size(); ++i) sum += (S.pts[i] - T.pts[m.forward[i]]).norm();
    for (int j = 0; j < T.size(); ++j) sum += (T.pts[j] - S.pts[m.backward[j]]).norm();
    return sum;
}

// d chamfer_sum / d T, matchings fixed; coincident pairs contribute zero.
Eigen::MatrixXd chamfer_sum_grad(const PointCloud& S, const PointCloud& T,
                                 const DistanceReport& m) {
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(T.size(), 3);
    for (int i = 0; i < S.size(); ++i) {
        int j = m.forward[i];
        Eigen::Vector3d d = T.pts[j] - S.pts[i];
        double norm = d.norm();
        if (norm > 0.0) grad.row(j) += (d / norm).transpose();
    }
    for (int j = 0; j < T.size(); ++j) {
        Eigen::Vector3d d = T.pts[j] - S.pts[m.backward[j]];
        double norm = d.norm();
        if (norm > 0.0) grad.row(j) += (d / norm).transpose();
    }
    return grad;
}

struct FullTrace {
    EncoderTrace enc1t;
    Eigen::VectorXd z, sigma;
    FoldTrace f1, f2;
    PointCloud recon;
    DistanceReport matches;
    bool decoded = false;
    bool has_enc2 = false;
    EncoderTrace enc2t;
    LossValues values;
};

Eigen::MatrixXd grid_matrix(const SphereGrid& grid) {
    Eigen::MatrixXd m(grid.size(), 3);
    for (int i = 0; i < grid.size(); ++i) m.row(i) = grid.pts[i].transpose();
    return m;
}

FullTrace loss_forward_trace(const ModelParams& p, const PointCloud& cloud,
                             const NoiseDraw& noise, const SphereGrid& grid, int k,
                             const LossSpec& spec, const EncoderInputs* inputs = nullptr) {
    const int d = p.config.latent_dim;
    if (noise.eps.size() != d)
        throw std::invalid_argument("loss forward: noise dimension " +
                                    std::to_string(noise.eps.size()) + " != latent dim " +
                                    std::to_string(d));
    FullTrace t;
    t.enc1t = encode_trace(p, cloud, k, inputs);
    if (spec.kl_ori)
        t.values.kl_ori = kl_unit_gaussian({t.enc1t.mu, t.enc1t.logvar});

    if (spec.rec || spec.kl_rec) {
        if (grid.size() < 1) throw std::invalid_argument("loss forward: empty grid");
        t.decoded = true;
        t.sigma = (t.enc1t.logvar.array() / 2.0).exp().matrix();
        t.z = t.enc1t.mu + noise.eps.cwiseProduct(t.sigma);
        t.f1 = fold_forward(p.fold1, t.z, grid_matrix(grid));
        t.f2 = fold_forward(p.fold2, t.z, t.f1.out);
        t.recon.pts.resize(grid.size());
        for (int i = 0; i < grid.size(); ++i) t.recon.pts[i] = t.f2.out.row(i).transpose();
        if (!t.f2.out.allFinite())
            throw numerical_error("loss forward: non-finite reconstruction");
        if (spec.rec) {
            t.matches = chamfer(cloud, t.recon);
            t.values.rec = chamfer_sum_value(cloud, t.recon, t.matches);
        }
        if (spec.kl_rec) {
            t.enc2t = encode_trace(p, t.recon, k);
            t.has_enc2 = true;
            t.values.kl_rec = kl_unit_gaussian({t.enc2t.mu, t.enc2t.logvar});
        }
    }
    return t;
}

} // namespace

NoiseDraw draw_noise(int dim, std::uint64_t seed) {
    if (dim < 1) throw std::invalid_argument("draw_noise: dim must be >= 1");
    NoiseDraw n;
    n.seed = seed;
    n.eps.resize(dim);
    Rng rng(seed);
    for (int i = 0; i < dim; ++i) n.eps[i] = rng.normal();
    return n;
}

std::int64_t ModelParams::parameter_count() const {
    std::int64_t count = 0;
    for_each_layer([&](const DenseLayer& l) { count += l.w.size() + l.b.size(); });
    return count;
}

Eigen::VectorXd ModelParams::flatten() const {
    Eigen::VectorXd flat(parameter_count());
    std::int64_t at = 0;
    for_each_layer([&](const DenseLayer& l) {
        flat.segment(at, l.w.size()) = Eigen::Map<const Eigen::VectorXd>(l.w.data(), l.w.size());
        at += l.w.size();
        flat.segment(at, l.b.size()) = l.b;
        at += l.b.size();
    });
    return flat;
}

void ModelParams::unflatten(const Eigen::VectorXd& flat) {
    if (flat.size() != parameter_count())
        throw std::invalid_argument("unflatten: expected " + std::to_string(parameter_count()) +
                                    " values, got " + std::to_string(flat.size()));
    std::int64_t at = 0;
    for_each_layer([&](DenseLayer& l) {
        Eigen::Map<Eigen::VectorXd>(l.w.data(), l.w.size()) = flat.segment(at, l.w.size());
        at += l.w.size();
        l.b = flat.segment(at, l.b.size());
        at += l.b.size();
    });
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    validate_config(config);
    ModelParams p;
    p.config = config;
    configure_shapes(p);
    Rng rng(seed);
    p.for_each_layer([&](DenseLayer& l) {
        double bound = 1.0 / std::sqrt(static_cast<double>(l.w.rows()));
        for (std::int64_t i = 0; i < l.w.size(); ++i)
            l.w.data()[i] = rng.uniform(-bound, bound);
        l.b.setZero();
    });
    return p;
}

ModelParams zeros_like(const ModelParams& params) {
    ModelParams g;
    g.config = params.config;
    configure_shapes(g);
    g.for_each_layer([](DenseLayer& l) {
        l.w.setZero();
        l.b.setZero();
    });
    return g;
}

LatentGaussian encode(const ModelParams& params, const PointCloud& cloud, int k) {
    EncoderTrace t = encode_trace(params, cloud, k);
    return {t.mu, t.logvar};
}

Eigen::VectorXd reparameterize(const LatentGaussian& latent, const NoiseDraw& noise) {
    if (latent.mu.size() != latent.logvar.size() || latent.mu.size() != noise.eps.size())
        throw std::invalid_argument("reparameterize: dimension mismatch");
    return latent.mu +
           noise.eps.cwiseProduct((latent.logvar.array() / 2.0).exp().matrix());
}

PointCloud decode(const ModelParams& params, const Eigen::VectorXd& z, const SphereGrid& grid) {
    if (z.size() != params.config.latent_dim)
        throw std::invalid_argument("decode: z dimension mismatch");
    if (grid.size() < 1) throw std::invalid_argument("decode: empty grid");
    FoldTrace f1 = fold_forward(params.fold1, z, grid_matrix(grid));
    FoldTrace f2 = fold_forward(params.fold2, z, f1.out);
    PointCloud out;
    out.pts.resize(grid.size());
    for (int i = 0; i < grid.size(); ++i) out.pts[i] = f2.out.row(i).transpose();
    return out;
}

LossValues forward_loss(const ModelParams& params, const PointCloud& cloud,
                        const NoiseDraw& noise, const SphereGrid& grid, int k,
                        const LossSpec& spec, const EncoderInputs* inputs) {
    return loss_forward_trace(params, cloud, noise, grid, k, spec, inputs).values;
}

EncoderInputs make_encoder_inputs(const PointCloud& cloud, int k) {
    EncoderInputs in;
    in.graph = knn_graph(cloud, k);
    in.features.resize(cloud.size(), 12);
    for (int i = 0; i < cloud.size(); ++i)
        in.features.block<1, 3>(i, 0) = cloud.pts[i].transpose();
    in.features.rightCols<9>() = local_covariance(cloud, in.graph);
    return in;
}

Eigen::VectorXd param_gradients(const ModelParams& params, const PointCloud& cloud,
                                const NoiseDraw& noise, const SphereGrid& grid, int k,
                                const LossSpec& spec, LossValues* values_out,
                                const EncoderInputs* inputs) {
    FullTrace t = loss_forward_trace(params, cloud, noise, grid, k, spec, inputs);
    if (values_out) *values_out = t.values;

    const int d = params.config.latent_dim;
    ModelParams g = zeros_like(params);

    Eigen::VectorXd dmu = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd dlv = Eigen::VectorXd::Zero(d);
    if (spec.kl_ori) {
        dmu += t.enc1t.mu;
        dlv += (0.5 * t.enc1t.logvar.array().expm1()).matrix();
    }

    if (t.decoded) {
        const int m = static_cast<int>(t.f2.out.rows());
        Eigen::MatrixXd drecon = Eigen::MatrixXd::Zero(m, 3);
        if (spec.rec) drecon += chamfer_sum_grad(cloud, t.recon, t.matches);
        if (spec.kl_rec) {
            Eigen::VectorXd dmu2 = t.enc2t.mu;
            Eigen::VectorXd dlv2 = (0.5 * t.enc2t.logvar.array().expm1()).matrix();
            drecon += encoder_backward(t.enc2t, t.recon, params, dmu2, dlv2, g, true);
        }
        Eigen::VectorXd dz = Eigen::VectorXd::Zero(d);
        Eigen::MatrixXd dfold1 = fold_backward(t.f2, params.fold2, g.fold2, drecon, dz);
        fold_backward(t.f1, params.fold1, g.fold1, dfold1, dz); // grid grad discarded
        dmu += dz;
        dlv += (0.5 * dz.array() * noise.eps.array() * t.sigma.array()).matrix();
    }

    encoder_backward(t.enc1t, cloud, params, dmu, dlv, g, false);
    return g.flatten();
}

} // namespace pcad
