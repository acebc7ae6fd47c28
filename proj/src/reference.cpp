#include "jamlab/reference.hpp"

#include <cmath>

namespace jamlab::ref {

namespace {

double act(const NetworkArch& arch, double z) { return activation_value(arch, z); }
double dact(const NetworkArch& arch, double z) { return activation_derivative(arch, z); }

double prefactor(const NetworkArch& arch, int layer) {
    return layer == 0 ? 1.0 / std::sqrt(static_cast<double>(arch.input_dim))
                      : 1.0 / std::sqrt(static_cast<double>(arch.width));
}

}  // namespace

double forward(const NetworkState& net, const Eigen::VectorXd& x,
               std::vector<Eigen::VectorXd>* preacts) {
    const auto& arch = net.arch;
    if (preacts) preacts->assign(arch.depth + 1, Eigen::VectorXd());
    Eigen::VectorXd cur = x;
    for (int i = 0; i <= arch.depth; ++i) {
        const auto& W = net.params.W[i];
        const auto& B = net.params.B[i];
        const double s = prefactor(arch, i);
        Eigen::VectorXd pre(W.rows());
        for (Eigen::Index r = 0; r < W.rows(); ++r) {
            double acc = 0;
            for (Eigen::Index c = 0; c < W.cols(); ++c) acc += W(r, c) * cur[c];
            pre[r] = s * acc + B[r];
        }
        if (preacts) (*preacts)[i] = pre;
        if (i < arch.depth) {
            cur.resize(pre.size());
            for (Eigen::Index r = 0; r < pre.size(); ++r) cur[r] = act(arch, pre[r]);
        } else {
            return pre[0];
        }
    }
    return 0;  // unreachable
}

Eigen::VectorXd grad_output(const NetworkState& net, const Eigen::VectorXd& x) {
    const auto& arch = net.arch;
    std::vector<Eigen::VectorXd> preacts;
    forward(net, x, &preacts);

    // activations[i] feeds layer i.
    std::vector<Eigen::VectorXd> activations(arch.depth + 1);
    activations[0] = x;
    for (int i = 1; i <= arch.depth; ++i) {
        const auto& pre = preacts[i - 1];
        activations[i].resize(pre.size());
        for (Eigen::Index r = 0; r < pre.size(); ++r) activations[i][r] = act(arch, pre[r]);
    }

    ParamBlocks g = ParamBlocks::zeros(arch);
    Eigen::VectorXd delta(1);
    delta[0] = 1.0;
    for (int i = arch.depth; i >= 0; --i) {
        const double s = prefactor(arch, i);
        for (Eigen::Index r = 0; r < g.W[i].rows(); ++r) {
            for (Eigen::Index c = 0; c < g.W[i].cols(); ++c)
                g.W[i](r, c) = s * delta[r] * activations[i][c];
            g.B[i][r] = delta[r];
        }
        if (i > 0) {
            const auto& pre = preacts[i - 1];
            Eigen::VectorXd next(pre.size());
            for (Eigen::Index c = 0; c < pre.size(); ++c) {
                double acc = 0;
                for (Eigen::Index r = 0; r < delta.size(); ++r)
                    acc += net.params.W[i](r, c) * delta[r];
                next[c] = dact(arch, pre[c]) * s * acc;
            }
            delta = next;
        }
    }

    NetworkState holder;
    holder.arch = arch;
    holder.params = std::move(g);
    return holder.flatten();
}

void forward_batch(const NetworkState& net, const Eigen::MatrixXd& X, BatchCache& cache) {
    const auto& arch = net.arch;
    const Eigen::Index P = X.rows();
    cache.preacts.assign(arch.depth + 1, Eigen::MatrixXd());
    for (int i = 0; i <= arch.depth; ++i)
        cache.preacts[i].resize(P, net.params.W[i].rows());
    std::vector<Eigen::VectorXd> pre;
    for (Eigen::Index mu = 0; mu < P; ++mu) {
        forward(net, X.row(mu).transpose(), &pre);
        for (int i = 0; i <= arch.depth; ++i) cache.preacts[i].row(mu) = pre[i].transpose();
    }
}

void accumulate_weighted_gradients(const NetworkState& net, const Eigen::MatrixXd& X,
                                   const Eigen::VectorXd& coef, ParamBlocks& out) {
    for (Eigen::Index mu = 0; mu < X.rows(); ++mu) {
        const Eigen::VectorXd g = ref::grad_output(net, X.row(mu).transpose());
        NetworkState blocks = NetworkState::unflatten(net.arch, g);
        out.axpy(coef[mu], blocks.params);
    }
}

void gradient_rows(const NetworkState& net, const Eigen::MatrixXd& X, Eigen::MatrixXd& G) {
    for (Eigen::Index mu = 0; mu < X.rows(); ++mu)
        G.row(mu) = ref::grad_output(net, X.row(mu).transpose()).transpose();
}

Eigen::MatrixXd gram_matrix(const NetworkState& net, const Eigen::MatrixXd& X) {
    const Eigen::Index P = X.rows();
    Eigen::MatrixXd G(P, param_count(net.arch));
    ref::gradient_rows(net, X, G);
    Eigen::MatrixXd K(P, P);
    for (Eigen::Index a = 0; a < P; ++a)
        for (Eigen::Index b = 0; b < P; ++b) {
            double acc = 0;
            for (Eigen::Index k = 0; k < G.cols(); ++k) acc += G(a, k) * G(b, k);
            K(a, b) = acc;
        }
    return K;
}

}  // namespace jamlab::ref
