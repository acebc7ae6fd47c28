#include "jamlab/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "jamlab/rng.hpp"

namespace jamlab {

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
}

std::uint32_t read_be_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("idx: truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
           std::uint32_t(b[3]);
}

}  // namespace

std::string dataset_content_id(const Dataset& ds) {
    std::uint64_t h = kFnvOffset;
    const std::int64_t P = ds.X.rows(), d = ds.X.cols();
    fnv_bytes(h, &P, sizeof P);
    fnv_bytes(h, &d, sizeof d);
    fnv_bytes(h, ds.X.data(), sizeof(double) * static_cast<std::size_t>(ds.X.size()));
    fnv_bytes(h, ds.y.data(), sizeof(double) * static_cast<std::size_t>(ds.y.size()));
    fnv_bytes(h, &ds.d_parallel, sizeof ds.d_parallel);
    for (double b : ds.boundaries) fnv_bytes(h, &b, sizeof b);
    const int prov = static_cast<int>(ds.provenance), split = static_cast<int>(ds.split);
    fnv_bytes(h, &prov, sizeof prov);
    fnv_bytes(h, &split, sizeof split);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void rehash(Dataset& ds) { ds.id = dataset_content_id(ds); }

Eigen::VectorXd stripe_labels(const Eigen::MatrixXd& X, const std::vector<double>& boundaries) {
    if (boundaries.empty()) throw std::invalid_argument("stripe_labels: boundaries empty");
    Eigen::VectorXd y(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double x1 = X(i, 0);
        int k = 0;
        for (double b : boundaries)
            if (b < x1) ++k;
        y[i] = (k % 2 == 1) ? 1.0 : -1.0;
    }
    return y;
}

Dataset gen_stripe(Eigen::Index P, int d, int d_parallel, const std::vector<double>& boundaries,
                   std::uint64_t seed) {
    if (P < 1) throw std::invalid_argument("gen_stripe: P must be >= 1");
    if (d < 1 || d_parallel < 1 || d_parallel > d)
        throw std::invalid_argument("gen_stripe: need 1 <= d_parallel <= d");
    if (boundaries.empty()) throw std::invalid_argument("gen_stripe: boundaries empty");
    if (!std::is_sorted(boundaries.begin(), boundaries.end()))
        throw std::invalid_argument("gen_stripe: boundaries must be sorted");
    Dataset ds;
    ds.X.resize(P, d);
    Rng rng(seed);
    for (Eigen::Index i = 0; i < P; ++i)
        for (int j = 0; j < d; ++j) ds.X(i, j) = draw_normal(rng);
    ds.y = stripe_labels(ds.X, boundaries);
    ds.d_parallel = d_parallel;
    ds.boundaries = boundaries;
    ds.provenance = Provenance::Stripe;
    ds.seed = seed;
    rehash(ds);
    return ds;
}

Dataset gen_random_labels(Eigen::Index P, int d, std::uint64_t seed) {
    if (P < 1 || d < 1) throw std::invalid_argument("gen_random_labels: P, d must be >= 1");
    Dataset ds;
    ds.X.resize(P, d);
    Rng rng(seed);
    for (Eigen::Index i = 0; i < P; ++i)
        for (int j = 0; j < d; ++j) ds.X(i, j) = draw_normal(rng);
    ds.y.resize(P);
    for (Eigen::Index i = 0; i < P; ++i) ds.y[i] = (rng() & 1ULL) ? 1.0 : -1.0;
    ds.d_parallel = 0;
    ds.provenance = Provenance::RandomLabels;
    ds.seed = seed;
    rehash(ds);
    return ds;
}

RawImageData load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw std::runtime_error("idx: cannot open " + images_path);
    if (read_be_u32(img) != 0x00000803u)
        throw std::runtime_error("idx: bad image magic in " + images_path);
    const std::uint32_t n = read_be_u32(img);
    const std::uint32_t rows = read_be_u32(img);
    const std::uint32_t cols = read_be_u32(img);
    std::vector<unsigned char> pix(static_cast<std::size_t>(n) * rows * cols);
    img.read(reinterpret_cast<char*>(pix.data()), static_cast<std::streamsize>(pix.size()));
    if (static_cast<std::size_t>(img.gcount()) != pix.size())
        throw std::runtime_error("idx: truncated image payload in " + images_path);

    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw std::runtime_error("idx: cannot open " + labels_path);
    if (read_be_u32(lab) != 0x00000801u)
        throw std::runtime_error("idx: bad label magic in " + labels_path);
    const std::uint32_t nl = read_be_u32(lab);
    if (nl != n) throw std::runtime_error("idx: image/label count mismatch");
    std::vector<unsigned char> rawlab(nl);
    lab.read(reinterpret_cast<char*>(rawlab.data()), static_cast<std::streamsize>(rawlab.size()));
    if (static_cast<std::size_t>(lab.gcount()) != rawlab.size())
        throw std::runtime_error("idx: truncated label payload in " + labels_path);

    RawImageData out;
    out.rows = static_cast<int>(rows);
    out.cols = static_cast<int>(cols);
    out.images.resize(n, static_cast<Eigen::Index>(rows) * cols);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t j = 0; j < rows * cols; ++j)
            out.images(i, j) = pix[static_cast<std::size_t>(i) * rows * cols + j] / 255.0;
    out.labels.assign(rawlab.begin(), rawlab.end());
    return out;
}

Eigen::VectorXd parity_labels(const std::vector<int>& raw_labels) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(raw_labels.size()));
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
        if (raw_labels[i] < 0 || raw_labels[i] > 9)
            throw std::invalid_argument("parity_labels: label outside 0..9");
        y[static_cast<Eigen::Index>(i)] = (raw_labels[i] % 2 == 1) ? 1.0 : -1.0;
    }
    return y;
}

Dataset make_image_dataset(const RawImageData& raw, std::uint64_t seed) {
    Dataset ds;
    ds.X = raw.images;
    ds.y = parity_labels(raw.labels);
    ds.d_parallel = 0;
    ds.provenance = Provenance::Image;
    ds.seed = seed;
    rehash(ds);
    return ds;
}

SplitDataset split_dataset(const Dataset& ds, Eigen::Index n_train, std::uint64_t seed) {
    const Eigen::Index P = ds.size();
    if (n_train < 1 || n_train >= P)
        throw std::invalid_argument("split_dataset: need 1 <= n_train < P");
    std::vector<Eigen::Index> idx(P);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    Rng rng(derive_seed(seed, 0x51u));
    // Fisher-Yates; std::shuffle is not specified bit-exactly across
    // standard libraries, this is.
    for (Eigen::Index i = P - 1; i > 0; --i) {
        const Eigen::Index j = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(idx[i], idx[j]);
    }
    auto take = [&](Eigen::Index lo, Eigen::Index hi, Split tag) {
        Dataset out;
        out.X.resize(hi - lo, ds.dim());
        out.y.resize(hi - lo);
        for (Eigen::Index r = lo; r < hi; ++r) {
            out.X.row(r - lo) = ds.X.row(idx[static_cast<std::size_t>(r)]);
            out.y[r - lo] = ds.y[idx[static_cast<std::size_t>(r)]];
        }
        out.d_parallel = ds.d_parallel;
        out.boundaries = ds.boundaries;
        out.provenance = ds.provenance;
        out.split = tag;
        out.seed = seed;
        rehash(out);
        return out;
    };
    return {take(0, n_train, Split::Train), take(n_train, P, Split::Test)};
}

PcaProjection fit_pca(const Eigen::MatrixXd& X, int k, bool rescale) {
    const Eigen::Index P = X.rows(), d = X.cols();
    if (k < 1 || k > d) throw std::invalid_argument("fit_pca: need 1 <= k <= d");
    if (P < 2) throw std::invalid_argument("fit_pca: need at least 2 rows");
    PcaProjection proj;
    proj.mean = X.colwise().mean();
    Eigen::MatrixXd C = X.rowwise() - proj.mean.transpose();
    Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(P - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw std::runtime_error("fit_pca: eigensolver failed");
    // Eigen sorts ascending; take the top k from the back.
    const Eigen::VectorXd& evals = es.eigenvalues();
    const double rank_tol = 1e-12 * std::max(evals.cwiseAbs().maxCoeff(), 1.0);
    int rank = 0;
    for (Eigen::Index i = 0; i < d; ++i)
        if (evals[i] > rank_tol) ++rank;
    if (k > rank) throw std::invalid_argument("fit_pca: k exceeds covariance rank");
    proj.components.resize(d, k);
    proj.explained_variance.resize(k);
    proj.scales.resize(k);
    for (int j = 0; j < k; ++j) {
        Eigen::VectorXd v = es.eigenvectors().col(d - 1 - j);
        Eigen::Index imax;
        v.cwiseAbs().maxCoeff(&imax);
        if (v[imax] < 0) v = -v;  // sign convention: largest loading positive
        proj.components.col(j) = v;
        const double lam = evals[d - 1 - j];
        proj.explained_variance[j] = lam;
        proj.scales[j] = rescale ? std::sqrt(lam) : 1.0;
    }
    return proj;
}

Eigen::MatrixXd apply_pca(const PcaProjection& proj, const Eigen::MatrixXd& X) {
    if (X.cols() != proj.mean.size())
        throw std::invalid_argument("apply_pca: dimension mismatch");
    Eigen::MatrixXd Z = (X.rowwise() - proj.mean.transpose()) * proj.components;
    for (Eigen::Index j = 0; j < Z.cols(); ++j) Z.col(j) /= proj.scales[j];
    return Z;
}

SplitDataset pca_reduce(const SplitDataset& ds, int k, bool rescale) {
    PcaProjection proj = fit_pca(ds.train.X, k, rescale);
    SplitDataset out = ds;
    out.train.X = apply_pca(proj, ds.train.X);
    out.test.X = apply_pca(proj, ds.test.X);
    out.train.d_parallel = 0;  // coordinates are mixed; informative dims lost
    out.test.d_parallel = 0;
    rehash(out.train);
    rehash(out.test);
    return out;
}

Dataset compress(const Dataset& ds, double Lambda) {
    if (ds.d_parallel < 1)
        throw std::invalid_argument("compress: dataset has no d_parallel metadata");
    if (!(Lambda > 0)) throw std::invalid_argument("compress: Lambda must be > 0");
    Dataset out = ds;
    out.X.rightCols(out.dim() - ds.d_parallel) /= Lambda;
    rehash(out);
    return out;
}

void write_dataset_csv(const std::string& path, const Dataset& ds) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_dataset_csv: cannot open " + path);
    for (Eigen::Index j = 0; j < ds.dim(); ++j) f << "x" << (j + 1) << ",";
    f << "y\n";
    f.precision(17);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        for (Eigen::Index j = 0; j < ds.dim(); ++j) f << ds.X(i, j) << ",";
        f << ds.y[i] << "\n";
    }
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
    if (!in) throw std::runtime_error("jlds: truncated file");
    return v;
}

}  // namespace

void write_jlds(const std::string& path, const Dataset& ds) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_jlds: cannot open " + path);
    f.write("JLDS", 4);
    put<std::uint32_t>(f, 1);  // version
    put<std::uint64_t>(f, static_cast<std::uint64_t>(ds.size()));
    put<std::uint64_t>(f, static_cast<std::uint64_t>(ds.dim()));
    put<std::int64_t>(f, ds.d_parallel);
    put<std::uint32_t>(f, static_cast<std::uint32_t>(ds.provenance));
    put<std::uint32_t>(f, static_cast<std::uint32_t>(ds.split));
    put<std::uint64_t>(f, ds.seed);
    put<std::uint64_t>(f, static_cast<std::uint64_t>(ds.boundaries.size()));
    for (double b : ds.boundaries) put<double>(f, b);
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        for (Eigen::Index j = 0; j < ds.dim(); ++j) put<double>(f, ds.X(i, j));
    for (Eigen::Index i = 0; i < ds.size(); ++i) put<double>(f, ds.y[i]);
}

Dataset read_jlds(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_jlds: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "JLDS", 4) != 0)
        throw std::runtime_error("read_jlds: bad magic in " + path);
    const auto version = get<std::uint32_t>(f);
    if (version != 1) throw std::runtime_error("read_jlds: unsupported version");
    Dataset ds;
    const auto P = static_cast<Eigen::Index>(get<std::uint64_t>(f));
    const auto d = static_cast<Eigen::Index>(get<std::uint64_t>(f));
    ds.d_parallel = static_cast<int>(get<std::int64_t>(f));
    ds.provenance = static_cast<Provenance>(get<std::uint32_t>(f));
    ds.split = static_cast<Split>(get<std::uint32_t>(f));
    ds.seed = get<std::uint64_t>(f);
    const auto nb = get<std::uint64_t>(f);
    ds.boundaries.resize(nb);
    for (auto& b : ds.boundaries) b = get<double>(f);
    ds.X.resize(P, d);
    for (Eigen::Index i = 0; i < P; ++i)
        for (Eigen::Index j = 0; j < d; ++j) ds.X(i, j) = get<double>(f);
    ds.y.resize(P);
    for (Eigen::Index i = 0; i < P; ++i) ds.y[i] = get<double>(f);
    rehash(ds);
    return ds;
}

}  // namespace jamlab
