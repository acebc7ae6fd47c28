#include "jamlab/net.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace jamlab {

namespace {

using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// (rows, cols) of W[i] for i = 0..L.
inline std::pair<Eigen::Index, Eigen::Index> layer_shape(const NetworkArch& arch, int i) {
    const Eigen::Index h = arch.width;
    if (i == 0) return {h, arch.input_dim};
    if (i == arch.depth) return {1, h};
    return {h, h};
}

inline double layer_prefactor(const NetworkArch& arch, int i) {
    return i == 0 ? 1.0 / std::sqrt(static_cast<double>(arch.input_dim))
                  : 1.0 / std::sqrt(static_cast<double>(arch.width));
}

}  // namespace

std::int64_t param_count(const NetworkArch& arch) {
    arch.validate();
    const std::int64_t d = arch.input_dim, h = arch.width, L = arch.depth;
    std::int64_t n = h * d + h;              // input layer
    n += (L - 1) * (h * h + h);              // hidden-to-hidden layers
    n += h + 1;                              // output layer
    return n;
}

double activation_value(const NetworkArch& arch, double z) {
    if (arch.activation == Activation::Relu) return z > 0 ? z : 0.0;
    const double b = arch.softplus_beta;
    const double bz = b * z;
    // log1p form on both branches keeps exp() arguments non-positive.
    return bz > 0 ? z + std::log1p(std::exp(-bz)) / b : std::log1p(std::exp(bz)) / b;
}

double activation_derivative(const NetworkArch& arch, double z) {
    // ReLU'(0) = 0 by convention: a sample sitting exactly on the kink
    // contributes nothing.
    if (arch.activation == Activation::Relu) return z > 0 ? 1.0 : 0.0;
    const double bz = arch.softplus_beta * z;
    return bz > 0 ? 1.0 / (1.0 + std::exp(-bz)) : std::exp(bz) / (1.0 + std::exp(bz));
}

ParamBlocks ParamBlocks::zeros(const NetworkArch& arch) {
    arch.validate();
    ParamBlocks p;
    p.W.reserve(arch.depth + 1);
    p.B.reserve(arch.depth + 1);
    for (int i = 0; i <= arch.depth; ++i) {
        auto [r, c] = layer_shape(arch, i);
        p.W.emplace_back(Eigen::MatrixXd::Zero(r, c));
        p.B.emplace_back(Eigen::VectorXd::Zero(r));
    }
    return p;
}

void ParamBlocks::set_zero() {
    for (auto& w : W) w.setZero();
    for (auto& b : B) b.setZero();
}

void ParamBlocks::axpy(double c, const ParamBlocks& other) {
    for (std::size_t i = 0; i < W.size(); ++i) {
        W[i].noalias() += c * other.W[i];
        B[i].noalias() += c * other.B[i];
    }
}

void ParamBlocks::assign_axpy(const ParamBlocks& a, double c, const ParamBlocks& b) {
    for (std::size_t i = 0; i < W.size(); ++i) {
        W[i] = a.W[i] + c * b.W[i];
        B[i] = a.B[i] + c * b.B[i];
    }
}

double ParamBlocks::squared_norm() const {
    double s = 0;
    for (const auto& w : W) s += w.squaredNorm();
    for (const auto& b : B) s += b.squaredNorm();
    return s;
}

double ParamBlocks::dot(const ParamBlocks& other) const {
    double s = 0;
    for (std::size_t i = 0; i < W.size(); ++i) {
        s += W[i].cwiseProduct(other.W[i]).sum();
        s += B[i].dot(other.B[i]);
    }
    return s;
}

Eigen::VectorXd NetworkState::flatten() const {
    Eigen::VectorXd theta(param_count());
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < params.W.size(); ++i) {
        const auto& w = params.W[i];
        RowMajorMap(theta.data() + off, w.rows(), w.cols()) = w;
        off += w.size();
        theta.segment(off, params.B[i].size()) = params.B[i];
        off += params.B[i].size();
    }
    return theta;
}

NetworkState NetworkState::unflatten(const NetworkArch& arch, const Eigen::VectorXd& theta,
                                     std::uint64_t seed) {
    if (theta.size() != jamlab::param_count(arch))
        throw std::invalid_argument("unflatten: theta length does not match architecture");
    NetworkState net;
    net.arch = arch;
    net.seed = seed;
    net.params = ParamBlocks::zeros(arch);
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < net.params.W.size(); ++i) {
        auto& w = net.params.W[i];
        w = ConstRowMajorMap(theta.data() + off, w.rows(), w.cols());
        off += w.size();
        net.params.B[i] = theta.segment(off, net.params.B[i].size());
        off += net.params.B[i].size();
    }
    return net;
}

NetworkState init_network(const NetworkArch& arch, std::uint64_t seed) {
    arch.validate();
    NetworkState net;
    net.arch = arch;
    net.seed = seed;
    net.params = ParamBlocks::zeros(arch);
    Rng rng(seed);
    // Fixed draw order: layer by layer, W in row-major order, biases stay
    // zero. Changing this order silently changes every seeded experiment.
    for (int i = 0; i <= arch.depth; ++i) {
        auto& w = net.params.W[i];
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = draw_normal(rng);
    }
    return net;
}

double forward(const NetworkState& net, const Eigen::VectorXd& x, ForwardCache* cache) {
    const auto& arch = net.arch;
    if (x.size() != arch.input_dim) throw std::invalid_argument("forward: bad input dimension");
    if (cache) cache->preacts.assign(arch.depth + 1, Eigen::VectorXd());
    Eigen::VectorXd a = layer_prefactor(arch, 0) * (net.params.W[0] * x) + net.params.B[0];
    if (cache) cache->preacts[0] = a;
    for (int i = 1; i <= arch.depth; ++i) {
        Eigen::VectorXd act(a.size());
        for (Eigen::Index j = 0; j < a.size(); ++j) act[j] = activation_value(arch, a[j]);
        a = layer_prefactor(arch, i) * (net.params.W[i] * act) + net.params.B[i];
        if (cache) cache->preacts[i] = a;
    }
    return a[0];
}

Eigen::VectorXd grad_output(const NetworkState& net, const Eigen::VectorXd& x) {
    const auto& arch = net.arch;
    ForwardCache cache;
    forward(net, x, &cache);

    ParamBlocks g = ParamBlocks::zeros(arch);
    // delta[i] = d f~ / d a^(i+1), seeded at the scalar output.
    Eigen::VectorXd delta = Eigen::VectorXd::Ones(1);
    for (int i = arch.depth; i >= 0; --i) {
        const double s = layer_prefactor(arch, i);
        Eigen::VectorXd input;  // activations feeding layer i
        if (i == 0) {
            input = x;
        } else {
            const auto& pre = cache.preacts[i - 1];
            input.resize(pre.size());
            for (Eigen::Index j = 0; j < pre.size(); ++j)
                input[j] = activation_value(arch, pre[j]);
        }
        g.W[i].noalias() = s * delta * input.transpose();
        g.B[i] = delta;
        if (i > 0) {
            Eigen::VectorXd back = s * (net.params.W[i].transpose() * delta);
            const auto& pre = cache.preacts[i - 1];
            delta.resize(pre.size());
            for (Eigen::Index j = 0; j < pre.size(); ++j)
                delta[j] = activation_derivative(arch, pre[j]) * back[j];
        }
    }

    NetworkState holder;
    holder.arch = arch;
    holder.params = std::move(g);
    return holder.flatten();
}

void forward_batch(const NetworkState& net, const Eigen::MatrixXd& X, BatchCache& cache) {
    const auto& arch = net.arch;
    if (X.cols() != arch.input_dim)
        throw std::invalid_argument("forward_batch: bad input dimension");
    const Eigen::Index P = X.rows();
    cache.preacts.assign(arch.depth + 1, Eigen::MatrixXd());
    cache.preacts[0].noalias() = layer_prefactor(arch, 0) * (X * net.params.W[0].transpose());
    cache.preacts[0].rowwise() += net.params.B[0].transpose();
    Eigen::MatrixXd act;
    for (int i = 1; i <= arch.depth; ++i) {
        const auto& pre = cache.preacts[i - 1];
        act.resize(P, pre.cols());
        const double* src = pre.data();
        double* dst = act.data();
        const Eigen::Index n = pre.size();
        if (arch.activation == Activation::Relu) {
            for (Eigen::Index k = 0; k < n; ++k) dst[k] = src[k] > 0 ? src[k] : 0.0;
        } else {
            for (Eigen::Index k = 0; k < n; ++k) dst[k] = activation_value(arch, src[k]);
        }
        cache.preacts[i].noalias() = layer_prefactor(arch, i) * (act * net.params.W[i].transpose());
        cache.preacts[i].rowwise() += net.params.B[i].transpose();
    }
}

void accumulate_weighted_gradients(const NetworkState& net, const Eigen::MatrixXd& X,
                                   const BatchCache& cache, const Eigen::VectorXd& coef,
                                   ParamBlocks& out) {
    const auto& arch = net.arch;
    const Eigen::Index P = X.rows();
    if (coef.size() != P)
        throw std::invalid_argument("accumulate_weighted_gradients: coef length mismatch");

    // delta is P x (layer width): row mu holds coef[mu] * d f~(x_mu)/d a^(i+1).
    Eigen::MatrixXd delta = coef;
    Eigen::MatrixXd act;
    for (int i = arch.depth; i >= 0; --i) {
        const double s = layer_prefactor(arch, i);
        const Eigen::MatrixXd* input;
        if (i == 0) {
            input = &X;
        } else {
            const auto& pre = cache.preacts[i - 1];
            act.resize(P, pre.cols());
            const double* src = pre.data();
            double* dst = act.data();
            const Eigen::Index n = pre.size();
            if (arch.activation == Activation::Relu) {
                for (Eigen::Index k = 0; k < n; ++k) dst[k] = src[k] > 0 ? src[k] : 0.0;
            } else {
                for (Eigen::Index k = 0; k < n; ++k) dst[k] = activation_value(arch, src[k]);
            }
            input = &act;
        }
        out.W[i].noalias() += s * (delta.transpose() * (*input));
        out.B[i].noalias() += delta.colwise().sum().transpose();
        if (i > 0) {
            Eigen::MatrixXd back = s * (delta * net.params.W[i]);
            const auto& pre = cache.preacts[i - 1];
            delta.resize(P, pre.cols());
            const double* zp = pre.data();
            const double* bp = back.data();
            double* dp = delta.data();
            const Eigen::Index n = pre.size();
            if (arch.activation == Activation::Relu) {
                for (Eigen::Index k = 0; k < n; ++k) dp[k] = zp[k] > 0 ? bp[k] : 0.0;
            } else {
                for (Eigen::Index k = 0; k < n; ++k)
                    dp[k] = activation_derivative(arch, zp[k]) * bp[k];
            }
        }
    }
}

void gradient_rows(const NetworkState& net, const Eigen::MatrixXd& X, Eigen::MatrixXd& G) {
    const Eigen::Index P = X.rows();
    const Eigen::Index N = param_count(net.arch);
    if (G.rows() != P || G.cols() != N)
        throw std::invalid_argument("gradient_rows: G must be preallocated P x N");
    // Rows are independent; each iteration writes only its own row.
#pragma omp parallel for schedule(dynamic, 8)
    for (Eigen::Index mu = 0; mu < P; ++mu) {
        G.row(mu) = grad_output(net, X.row(mu).transpose()).transpose();
    }
}

}  // namespace jamlab
