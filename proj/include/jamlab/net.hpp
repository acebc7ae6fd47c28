#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "jamlab/rng.hpp"

namespace jamlab {

enum class Activation { Relu, Softplus };

/// Fully-connected architecture: d inputs, L hidden layers of width h,
/// scalar output. Weight matrices are W[0]: h x d, W[1..L-1]: h x h,
/// W[L]: 1 x h; every layer also carries a bias vector.
struct NetworkArch {
    int input_dim = 1;   // d
    int depth = 1;       // L, number of hidden layers
    int width = 1;       // h
    Activation activation = Activation::Relu;
    double softplus_beta = 5.0;

    void validate() const {
        if (input_dim < 1 || depth < 1 || width < 1)
            throw std::invalid_argument("NetworkArch: d, L, h must all be >= 1");
        if (activation == Activation::Softplus && softplus_beta <= 0)
            throw std::invalid_argument("NetworkArch: softplus_beta must be > 0");
    }

    bool operator==(const NetworkArch&) const = default;
};

/// Exact parameter count including biases.
std::int64_t param_count(const NetworkArch& arch);

/// Parameter blocks shaped like a network; also used for gradients and
/// flow-integrator scratch.
struct ParamBlocks {
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> B;

    static ParamBlocks zeros(const NetworkArch& arch);

    void set_zero();
    // this += c * other
    void axpy(double c, const ParamBlocks& other);
    // this = a + c * b (shapes must already match)
    void assign_axpy(const ParamBlocks& a, double c, const ParamBlocks& b);
    double squared_norm() const;
    double dot(const ParamBlocks& other) const;
};

struct NetworkState {
    NetworkArch arch;
    std::uint64_t seed = 0;
    ParamBlocks params;

    std::int64_t param_count() const { return jamlab::param_count(arch); }

    /// Canonical flat layout: for each layer i = 0..L, the rows of W[i]
    /// (each row is one output neuron's incoming weights) followed by B[i].
    Eigen::VectorXd flatten() const;
    static NetworkState unflatten(const NetworkArch& arch, const Eigen::VectorXd& theta,
                                  std::uint64_t seed = 0);
};

/// Standard-normal weights drawn in a fixed order, biases zero. The 1/sqrt(h)
/// and 1/sqrt(d) prefactors live in the forward pass, not in the stored
/// weights.
NetworkState init_network(const NetworkArch& arch, std::uint64_t seed);

/// Preactivations a^(1..L+1) for one input; retained for backprop.
struct ForwardCache {
    std::vector<Eigen::VectorXd> preacts;
};

/// Scalar output f~(x). Fills `cache` when non-null.
double forward(const NetworkState& net, const Eigen::VectorXd& x, ForwardCache* cache = nullptr);

/// Exact reverse-mode gradient of f~(x) w.r.t. the flat parameter vector.
Eigen::VectorXd grad_output(const NetworkState& net, const Eigen::VectorXd& x);

/// Batch preactivations, one dataset row per matrix row: preacts[i] is P x h
/// (P x 1 for the output layer).
struct BatchCache {
    std::vector<Eigen::MatrixXd> preacts;
    Eigen::Index rows() const { return preacts.empty() ? 0 : preacts.front().rows(); }
    const Eigen::VectorXd outputs() const { return preacts.back().col(0); }
};

/// Forward pass over all rows of X (P x d).
void forward_batch(const NetworkState& net, const Eigen::MatrixXd& X, BatchCache& cache);

/// Accumulates sum_mu coef[mu] * grad_theta f~(x_mu) into `out` (+=),
/// reusing the preactivations stored in `cache`.
void accumulate_weighted_gradients(const NetworkState& net, const Eigen::MatrixXd& X,
                                   const BatchCache& cache, const Eigen::VectorXd& coef,
                                   ParamBlocks& out);

/// Per-sample gradient rows: G(mu, :) = grad_theta f~(x_mu) in flat layout.
/// G must be preallocated P x N. Rows are independent and computed in
/// parallel.
void gradient_rows(const NetworkState& net, const Eigen::MatrixXd& X, Eigen::MatrixXd& G);

double activation_value(const NetworkArch& arch, double z);
double activation_derivative(const NetworkArch& arch, double z);

}  // namespace jamlab
