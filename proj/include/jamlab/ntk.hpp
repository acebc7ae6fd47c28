#pragma once

#include <optional>
#include <string>

#include "jamlab/data.hpp"
#include "jamlab/net.hpp"

namespace jamlab {

enum class GramSource { AtInit, AtTime, PostTraining };

struct GramMatrix {
    Eigen::MatrixXd values;  // P x P, symmetric
    GramSource source = GramSource::AtInit;
    double time = 0;         // flow time, meaningful for AtTime
    std::string dataset_id;

    Eigen::Index size() const { return values.rows(); }
    double trace() const { return values.trace(); }
    double frobenius() const { return values.norm(); }
};

/// Theta(x, y) = grad_theta f~(x) . grad_theta f~(y).
double ntk_entry(const NetworkState& net, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// All pairwise kernel entries on a dataset. Uses the explicit P x N
/// per-sample gradient matrix when P*N <= gram_dense_budget doubles;
/// otherwise streams row blocks so no more than ~2 blocks of gradients are
/// alive at once.
GramMatrix gram(const NetworkState& net, const Dataset& data, GramSource source = GramSource::AtInit,
                double time = 0, double gram_dense_budget = 1e8);

/// Theta(x_test, x_train) rectangular block under one net.
Eigen::MatrixXd gram_cross(const NetworkState& net, const Eigen::MatrixXd& X_test,
                           const Eigen::MatrixXd& X_train);

/// |Theta(t) - Theta(0)|_F / |Theta(0)|_F. Throws on mismatched dataset ids.
double kernel_change_ratio(const GramMatrix& gram_t, const GramMatrix& gram_0);

struct KernelPcaResult {
    Eigen::VectorXd eigenvalues;    // descending
    Eigen::MatrixXd eigenvectors;   // columns, same order
    Eigen::VectorXd label_projections;  // omega_lambda = (v . y)^2 / |y|^2
    Eigen::VectorXd mi_estimates;   // binned MI per eigenvector, diagnostic only

    double top_k_alignment(Eigen::Index k) const;
};

/// Eigendecomposition of the raw (uncentered) Gram by default; `center`
/// double-centers it first for sensitivity checks. MI is a plug-in estimate
/// over a 16-bin equal-width histogram of eigenvector entries split by label
/// class.
KernelPcaResult kernel_pca(const GramMatrix& gram, const Eigen::VectorXd& labels,
                           bool center = false, bool with_mi = true);

/// Kernel ridge regression on +-1 labels: solve (K + ridge I) c = y, predict
/// gram_cross * c. ridge < 0 selects the default 1e-8 * trace(K) / P.
/// ridge = 0 is accepted only if K is numerically invertible.
Eigen::VectorXd kernel_predict(const GramMatrix& gram_train, const Eigen::MatrixXd& gram_cross,
                               const Eigen::VectorXd& labels, double ridge = -1.0);

void write_jlgm(const std::string& path, const GramMatrix& gram);
GramMatrix read_jlgm(const std::string& path);
void write_gram_csv(const std::string& path, const GramMatrix& gram);
void write_pca_csv(const std::string& path, const KernelPcaResult& pca);

}  // namespace jamlab
