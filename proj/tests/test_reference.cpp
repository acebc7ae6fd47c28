#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "jamlab/data.hpp"
#include "jamlab/net.hpp"
#include "jamlab/ntk.hpp"
#include "jamlab/reference.hpp"

using namespace jamlab;

namespace {

// Fast kernels use GEMM and OpenMP; the reference uses plain loops. Summation
// order differs, so agreement is checked to a scale-aware tolerance rather
// than bitwise.
double max_rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    const double scale = std::max(1.0, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
    return (a - b).cwiseAbs().maxCoeff() / scale;
}

std::vector<NetworkArch> probe_archs() {
    std::vector<NetworkArch> out;
    for (const Activation act : {Activation::Relu, Activation::Softplus}) {
        NetworkArch a;
        a.activation = act;
        a.input_dim = 4;
        a.depth = 1;
        a.width = 7;
        out.push_back(a);
        a.input_dim = 3;
        a.depth = 2;
        a.width = 9;
        out.push_back(a);
        a.input_dim = 5;
        a.depth = 3;
        a.width = 6;
        out.push_back(a);
    }
    return out;
}

Eigen::MatrixXd random_inputs(Eigen::Index P, int d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    Eigen::MatrixXd X(P, d);
    for (Eigen::Index i = 0; i < P; ++i)
        for (int j = 0; j < d; ++j) X(i, j) = dist(rng);
    return X;
}

}  // namespace

TEST_CASE("fast kernels agree with the straight-loop reference") {
    const Eigen::Index P = 11;
    std::uint64_t seed = 900;

    for (const NetworkArch& arch : probe_archs()) {
        CAPTURE(arch.input_dim);
        CAPTURE(arch.depth);
        CAPTURE(static_cast<int>(arch.activation));

        const NetworkState net = init_network(arch, ++seed);
        const Eigen::MatrixXd X = random_inputs(P, arch.input_dim, ++seed);

        SUBCASE("forward and per-sample gradient") {
            for (Eigen::Index mu = 0; mu < P; ++mu) {
                const Eigen::VectorXd x = X.row(mu).transpose();
                const double fast = forward(net, x);
                const double slow = ref::forward(net, x);
                CHECK(std::abs(fast - slow) <= 1e-12 * std::max(1.0, std::abs(slow)));

                const Eigen::VectorXd gf = grad_output(net, x);
                const Eigen::VectorXd gs = ref::grad_output(net, x);
                REQUIRE(gf.size() == gs.size());
                CHECK(max_rel_diff(gf, gs) < 1e-12);
            }
        }

        SUBCASE("batched preactivations") {
            BatchCache fast_cache, slow_cache;
            forward_batch(net, X, fast_cache);
            ref::forward_batch(net, X, slow_cache);
            REQUIRE(fast_cache.preacts.size() == slow_cache.preacts.size());
            for (std::size_t i = 0; i < fast_cache.preacts.size(); ++i)
                CHECK(max_rel_diff(fast_cache.preacts[i], slow_cache.preacts[i]) < 1e-12);
            for (Eigen::Index mu = 0; mu < P; ++mu) {
                const double slow = ref::forward(net, X.row(mu).transpose());
                CHECK(std::abs(fast_cache.outputs()[mu] - slow) <=
                      1e-12 * std::max(1.0, std::abs(slow)));
            }
        }

        SUBCASE("weighted gradient accumulation") {
            Eigen::VectorXd coef(P);
            std::mt19937_64 rng(seed + 17);
            std::normal_distribution<double> dist;
            for (Eigen::Index mu = 0; mu < P; ++mu) coef[mu] = dist(rng);

            BatchCache cache;
            forward_batch(net, X, cache);
            ParamBlocks fast_acc = ParamBlocks::zeros(arch);
            accumulate_weighted_gradients(net, X, cache, coef, fast_acc);
            ParamBlocks slow_acc = ParamBlocks::zeros(arch);
            ref::accumulate_weighted_gradients(net, X, coef, slow_acc);

            NetworkState fa, sa;
            fa.arch = arch;
            fa.params = std::move(fast_acc);
            sa.arch = arch;
            sa.params = std::move(slow_acc);
            CHECK(max_rel_diff(fa.flatten(), sa.flatten()) < 1e-10);
        }

        SUBCASE("gradient rows and gram") {
            const Eigen::Index N = param_count(arch);
            Eigen::MatrixXd Gf(P, N), Gs(P, N);
            gradient_rows(net, X, Gf);
            ref::gradient_rows(net, X, Gs);
            CHECK(max_rel_diff(Gf, Gs) < 1e-12);

            Dataset ds;
            ds.X = X;
            ds.y = Eigen::VectorXd::Ones(P);
            ds.d_parallel = 0;
            rehash(ds);
            const GramMatrix fast_gram = gram(net, ds, GramSource::AtInit);
            const Eigen::MatrixXd slow_gram = ref::gram_matrix(net, X);
            CHECK(max_rel_diff(fast_gram.values, slow_gram) < 1e-10);
        }
    }
}
