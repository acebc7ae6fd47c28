#pragma once

#include "jamlab/net.hpp"

namespace jamlab::ref {

/// Straight-loop implementations of the hot kernels. No GEMM, no OpenMP,
/// no clever memory reuse. They exist so the fast paths in net.cpp and
/// ntk.cpp have an independent answer to be checked against, and as the
/// baseline side of the kernel benchmark.

double forward(const NetworkState& net, const Eigen::VectorXd& x,
               std::vector<Eigen::VectorXd>* preacts = nullptr);

Eigen::VectorXd grad_output(const NetworkState& net, const Eigen::VectorXd& x);

void forward_batch(const NetworkState& net, const Eigen::MatrixXd& X, BatchCache& cache);

void accumulate_weighted_gradients(const NetworkState& net, const Eigen::MatrixXd& X,
                                   const Eigen::VectorXd& coef, ParamBlocks& out);

void gradient_rows(const NetworkState& net, const Eigen::MatrixXd& X, Eigen::MatrixXd& G);

/// Gram(mu, nu) = grad f~(x_mu) . grad f~(x_nu), built row by row from
/// explicit per-sample gradients.
Eigen::MatrixXd gram_matrix(const NetworkState& net, const Eigen::MatrixXd& X);

}  // namespace jamlab::ref
