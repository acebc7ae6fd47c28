#include "jamlab/ntk.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace jamlab {

double ntk_entry(const NetworkState& net, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    return grad_output(net, x).dot(grad_output(net, y));
}

GramMatrix gram(const NetworkState& net, const Dataset& data, GramSource source, double time,
                double gram_dense_budget) {
    const Eigen::Index P = data.size();
    const Eigen::Index N = param_count(net.arch);
    GramMatrix out;
    out.source = source;
    out.time = time;
    out.dataset_id = data.id;
    out.values.resize(P, P);

    if (static_cast<double>(P) * static_cast<double>(N) <= gram_dense_budget) {
        Eigen::MatrixXd G(P, N);
        gradient_rows(net, data.X, G);
        out.values.noalias() = G * G.transpose();
    } else {
        // Row-block streaming: K_IJ = G_I G_J^T with at most two blocks of
        // gradients alive. Blocks are recomputed across the J sweep, an
        // acceptable overcompute for the rare beyond-budget case.
        const Eigen::Index B =
            std::max<Eigen::Index>(1, static_cast<Eigen::Index>(gram_dense_budget / (2.0 * N)));
        Eigen::MatrixXd GI, GJ;
        for (Eigen::Index i0 = 0; i0 < P; i0 += B) {
            const Eigen::Index bi = std::min(B, P - i0);
            GI.resize(bi, N);
            gradient_rows(net, data.X.middleRows(i0, bi), GI);
            out.values.block(i0, i0, bi, bi).noalias() = GI * GI.transpose();
            for (Eigen::Index j0 = i0 + bi; j0 < P; j0 += B) {
                const Eigen::Index bj = std::min(B, P - j0);
                GJ.resize(bj, N);
                gradient_rows(net, data.X.middleRows(j0, bj), GJ);
                out.values.block(i0, j0, bi, bj).noalias() = GI * GJ.transpose();
                out.values.block(j0, i0, bj, bi) = out.values.block(i0, j0, bi, bj).transpose();
            }
        }
    }
    // Exact symmetry, independent of accumulation path.
    out.values = ((out.values + out.values.transpose()) / 2.0).eval();
    return out;
}

Eigen::MatrixXd gram_cross(const NetworkState& net, const Eigen::MatrixXd& X_test,
                           const Eigen::MatrixXd& X_train) {
    const Eigen::Index N = param_count(net.arch);
    Eigen::MatrixXd Gtest(X_test.rows(), N), Gtrain(X_train.rows(), N);
    gradient_rows(net, X_test, Gtest);
    gradient_rows(net, X_train, Gtrain);
    return Gtest * Gtrain.transpose();
}

double kernel_change_ratio(const GramMatrix& gram_t, const GramMatrix& gram_0) {
    if (gram_t.dataset_id != gram_0.dataset_id)
        throw std::invalid_argument("kernel_change_ratio: Grams from different datasets");
    const double base = gram_0.frobenius();
    if (base == 0) throw std::invalid_argument("kernel_change_ratio: zero initial kernel");
    return (gram_t.values - gram_0.values).norm() / base;
}

namespace {

/// Plug-in mutual information between a 16-bin discretization of v's entries
/// and the +-1 labels, in nats.
double binned_mi(const Eigen::VectorXd& v, const Eigen::VectorXd& labels) {
    constexpr int kBins = 16;
    const Eigen::Index P = v.size();
    const double lo = v.minCoeff(), hi = v.maxCoeff();
    const double w = hi > lo ? (hi - lo) / kBins : 1.0;
    double joint[kBins][2] = {};
    double pclass[2] = {};
    for (Eigen::Index i = 0; i < P; ++i) {
        int b = static_cast<int>((v[i] - lo) / w);
        if (b >= kBins) b = kBins - 1;
        if (b < 0) b = 0;
        const int c = labels[i] > 0 ? 1 : 0;
        joint[b][c] += 1.0;
        pclass[c] += 1.0;
    }
    double mi = 0;
    for (int b = 0; b < kBins; ++b) {
        const double pb = (joint[b][0] + joint[b][1]) / P;
        if (pb == 0) continue;
        for (int c = 0; c < 2; ++c) {
            const double pbc = joint[b][c] / P;
            if (pbc == 0) continue;
            mi += pbc * std::log(pbc / (pb * (pclass[c] / P)));
        }
    }
    return mi;
}

}  // namespace

double KernelPcaResult::top_k_alignment(Eigen::Index k) const {
    k = std::min(k, label_projections.size());
    return label_projections.head(k).sum();
}

KernelPcaResult kernel_pca(const GramMatrix& gram, const Eigen::VectorXd& labels, bool center,
                           bool with_mi) {
    const Eigen::Index P = gram.size();
    if (labels.size() != P) throw std::invalid_argument("kernel_pca: label length mismatch");
    Eigen::MatrixXd K = gram.values;
    if (center) {
        const Eigen::VectorXd rowmean = K.rowwise().mean();
        const double allmean = K.mean();
        K.colwise() -= rowmean;
        K.rowwise() -= rowmean.transpose();
        K.array() += allmean;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    if (es.info() != Eigen::Success) throw std::runtime_error("kernel_pca: eigensolver failed");

    KernelPcaResult out;
    out.eigenvalues.resize(P);
    out.eigenvectors.resize(P, P);
    out.label_projections.resize(P);
    if (with_mi) out.mi_estimates.resize(P);
    const double y2 = labels.squaredNorm();
    for (Eigen::Index i = 0; i < P; ++i) {
        const Eigen::Index src = P - 1 - i;  // descending
        out.eigenvalues[i] = es.eigenvalues()[src];
        out.eigenvectors.col(i) = es.eigenvectors().col(src);
        const double proj = out.eigenvectors.col(i).dot(labels);
        out.label_projections[i] = proj * proj / y2;
        if (with_mi) out.mi_estimates[i] = binned_mi(out.eigenvectors.col(i), labels);
    }
    return out;
}

Eigen::VectorXd kernel_predict(const GramMatrix& gram_train, const Eigen::MatrixXd& gram_cross,
                               const Eigen::VectorXd& labels, double ridge) {
    const Eigen::Index P = gram_train.size();
    if (labels.size() != P) throw std::invalid_argument("kernel_predict: label length mismatch");
    if (gram_cross.cols() != P)
        throw std::invalid_argument("kernel_predict: cross-Gram column count mismatch");
    if (ridge < 0) ridge = 1e-8 * gram_train.trace() / static_cast<double>(P);
    Eigen::MatrixXd K = gram_train.values;
    K.diagonal().array() += ridge;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(K);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("kernel_predict: factorization failed (singular without ridge?)");
    const Eigen::VectorXd c = ldlt.solve(labels);
    if ((K * c - labels).norm() > 1e-6 * std::max(1.0, labels.norm()) && ridge == 0)
        throw std::runtime_error("kernel_predict: singular system without ridge");
    return gram_cross * c;
}

namespace {

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("jlgm: truncated file");
    return v;
}

}  // namespace

void write_jlgm(const std::string& path, const GramMatrix& gram) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_jlgm: cannot open " + path);
    f.write("JLGM", 4);
    put<std::uint32_t>(f, 1);
    put<std::uint64_t>(f, static_cast<std::uint64_t>(gram.size()));
    put<std::uint32_t>(f, static_cast<std::uint32_t>(gram.source));
    put<double>(f, gram.time);
    const std::uint64_t idlen = gram.dataset_id.size();
    put<std::uint64_t>(f, idlen);
    f.write(gram.dataset_id.data(), static_cast<std::streamsize>(idlen));
    for (Eigen::Index i = 0; i < gram.size(); ++i)
        for (Eigen::Index j = 0; j < gram.size(); ++j) put<double>(f, gram.values(i, j));
}

GramMatrix read_jlgm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_jlgm: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "JLGM", 4) != 0)
        throw std::runtime_error("read_jlgm: bad magic in " + path);
    if (get<std::uint32_t>(f) != 1) throw std::runtime_error("read_jlgm: unsupported version");
    GramMatrix g;
    const auto P = static_cast<Eigen::Index>(get<std::uint64_t>(f));
    g.source = static_cast<GramSource>(get<std::uint32_t>(f));
    g.time = get<double>(f);
    const auto idlen = get<std::uint64_t>(f);
    g.dataset_id.resize(idlen);
    f.read(g.dataset_id.data(), static_cast<std::streamsize>(idlen));
    if (!f) throw std::runtime_error("read_jlgm: truncated id");
    g.values.resize(P, P);
    for (Eigen::Index i = 0; i < P; ++i)
        for (Eigen::Index j = 0; j < P; ++j) g.values(i, j) = get<double>(f);
    return g;
}

void write_gram_csv(const std::string& path, const GramMatrix& gram) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_gram_csv: cannot open " + path);
    f.precision(17);
    for (Eigen::Index i = 0; i < gram.size(); ++i) {
        for (Eigen::Index j = 0; j < gram.size(); ++j)
            f << gram.values(i, j) << (j + 1 < gram.size() ? "," : "");
        f << "\n";
    }
}

void write_pca_csv(const std::string& path, const KernelPcaResult& pca) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_pca_csv: cannot open " + path);
    f << "rank,eigenvalue,omega,mi\n";
    f.precision(17);
    for (Eigen::Index i = 0; i < pca.eigenvalues.size(); ++i) {
        f << (i + 1) << "," << pca.eigenvalues[i] << "," << pca.label_projections[i] << ",";
        if (pca.mi_estimates.size() > i)
            f << pca.mi_estimates[i];
        f << "\n";
    }
}

}  // namespace jamlab
