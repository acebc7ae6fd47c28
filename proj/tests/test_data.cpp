#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "jamlab/data.hpp"
#include "jamlab/rng.hpp"

using namespace jamlab;

namespace {

// Minimal IDX writer for synthetic fixtures.
void write_be_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_idx_pair(const std::string& img_path, const std::string& lab_path,
                    const std::vector<unsigned char>& pixels, const std::vector<unsigned char>& labels,
                    int rows, int cols, std::uint32_t img_magic = 0x803, std::uint32_t lab_magic = 0x801,
                    int label_count_override = -1) {
    {
        std::ofstream f(img_path, std::ios::binary);
        write_be_u32(f, img_magic);
        write_be_u32(f, static_cast<std::uint32_t>(pixels.size() / (rows * cols)));
        write_be_u32(f, static_cast<std::uint32_t>(rows));
        write_be_u32(f, static_cast<std::uint32_t>(cols));
        f.write(reinterpret_cast<const char*>(pixels.data()),
                static_cast<std::streamsize>(pixels.size()));
    }
    {
        std::ofstream f(lab_path, std::ios::binary);
        write_be_u32(f, lab_magic);
        const auto n = label_count_override >= 0 ? static_cast<std::uint32_t>(label_count_override)
                                                 : static_cast<std::uint32_t>(labels.size());
        write_be_u32(f, n);
        f.write(reinterpret_cast<const char*>(labels.data()),
                static_cast<std::streamsize>(labels.size()));
    }
}

}  // namespace

TEST_CASE("stripe labels: sign convention and multi-boundary alternation") {
    Eigen::MatrixXd X(3, 2);
    X << 2.0, 9.9, -1.0, -9.9, 0.0, 0.0;
    Eigen::VectorXd y = stripe_labels(X, {0.0});
    CHECK(y[0] == 1.0);   // x1 = 2 -> +1
    CHECK(y[1] == -1.0);  // x1 = -1 -> -1
    CHECK(y[2] == -1.0);  // boundary itself is not strictly below x1

    // Two boundaries: the middle stripe flips sign, the outer ones match.
    Eigen::MatrixXd X2(3, 1);
    X2 << -2.0, 0.0, 2.0;
    Eigen::VectorXd y2 = stripe_labels(X2, {-1.0, 1.0});
    CHECK(y2[0] == -1.0);  // zero boundaries below
    CHECK(y2[1] == 1.0);   // one below
    CHECK(y2[2] == -1.0);  // two below

    CHECK_THROWS_AS(stripe_labels(X2, {}), std::invalid_argument);
}

TEST_CASE("gen_stripe: invariance, balance, determinism, validation") {
    Dataset ds = gen_stripe(4000, 5, 1, {0.0}, 12);
    CHECK(ds.size() == 4000);
    CHECK(ds.dim() == 5);
    CHECK(ds.d_parallel == 1);
    CHECK(ds.provenance == Provenance::Stripe);

    // Labels exactly recomputable from inputs and boundaries.
    CHECK(stripe_labels(ds.X, ds.boundaries) == ds.y);

    // Perturbing coordinates 2..d never changes a label.
    Eigen::MatrixXd X = ds.X;
    X.rightCols(4).array() += 17.3;
    CHECK(stripe_labels(X, ds.boundaries) == ds.y);

    // Class balance: binomial 3-sigma band around 1/2.
    const double frac_pos = (ds.y.array() > 0).count() / 4000.0;
    CHECK(std::abs(frac_pos - 0.5) < 3.0 * 0.5 / std::sqrt(4000.0));

    CHECK(gen_stripe(10, 3, 1, {0.0}, 5).id == gen_stripe(10, 3, 1, {0.0}, 5).id);
    CHECK(gen_stripe(10, 3, 1, {0.0}, 5).id != gen_stripe(10, 3, 1, {0.0}, 6).id);

    CHECK_THROWS_AS(gen_stripe(10, 3, 0, {0.0}, 5), std::invalid_argument);
    CHECK_THROWS_AS(gen_stripe(10, 3, 1, {}, 5), std::invalid_argument);
    CHECK_THROWS_AS(gen_stripe(10, 3, 1, {1.0, -1.0}, 5), std::invalid_argument);
    CHECK_THROWS_AS(gen_stripe(0, 3, 1, {0.0}, 5), std::invalid_argument);
}

TEST_CASE("gen_random_labels: balance, seed independence, label-input independence") {
    Dataset a = gen_random_labels(4000, 4, 3);
    const double frac_pos = (a.y.array() > 0).count() / 4000.0;
    CHECK(std::abs(frac_pos - 0.5) < 3.0 * 0.5 / std::sqrt(4000.0));

    Dataset b = gen_random_labels(4000, 4, 4);
    CHECK(a.y != b.y);

    // Correlation of labels with every input coordinate is binomially small.
    for (int j = 0; j < 4; ++j) {
        const double corr = (a.X.col(j).array() * a.y.array()).mean();
        CHECK(std::abs(corr) < 4.0 / std::sqrt(4000.0));
    }
}

TEST_CASE("idx ingestion: round trip, bad magic, truncation, count mismatch") {
    const std::string img = "test_images.idx", lab = "test_labels.idx";
    std::vector<unsigned char> pixels(8 * 4);
    for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<unsigned char>(i * 8);
    std::vector<unsigned char> labels = {0, 1, 2, 3, 4, 5, 8, 9};

    write_idx_pair(img, lab, pixels, labels, 2, 2);
    RawImageData raw = load_idx(img, lab);
    CHECK(raw.images.rows() == 8);
    CHECK(raw.images.cols() == 4);
    CHECK(raw.rows == 2);
    CHECK(raw.cols == 2);
    CHECK(raw.images.minCoeff() >= 0.0);
    CHECK(raw.images.maxCoeff() <= 1.0);
    CHECK(raw.images(1, 0) == doctest::Approx(32.0 / 255.0));
    CHECK(raw.labels == std::vector<int>({0, 1, 2, 3, 4, 5, 8, 9}));

    write_idx_pair(img, lab, pixels, labels, 2, 2, /*img_magic=*/0x802);
    CHECK_THROWS_AS(load_idx(img, lab), std::runtime_error);

    write_idx_pair(img, lab, pixels, labels, 2, 2, 0x803, /*lab_magic=*/0x802);
    CHECK_THROWS_AS(load_idx(img, lab), std::runtime_error);

    // Truncated image payload: header claims 8 images, file carries fewer.
    {
        std::vector<unsigned char> short_pixels(pixels.begin(), pixels.end() - 5);
        std::ofstream f(img, std::ios::binary);
        write_be_u32(f, 0x803);
        write_be_u32(f, 8);
        write_be_u32(f, 2);
        write_be_u32(f, 2);
        f.write(reinterpret_cast<const char*>(short_pixels.data()),
                static_cast<std::streamsize>(short_pixels.size()));
    }
    write_idx_pair("unused.idx", lab, pixels, labels, 2, 2);
    CHECK_THROWS_AS(load_idx(img, lab), std::runtime_error);

    // Image/label count mismatch.
    write_idx_pair(img, lab, pixels, labels, 2, 2, 0x803, 0x801, /*label_count_override=*/7);
    CHECK_THROWS_AS(load_idx(img, lab), std::runtime_error);

    std::remove(img.c_str());
    std::remove(lab.c_str());
    std::remove("unused.idx");
}

TEST_CASE("parity labels") {
    const Eigen::VectorXd y = parity_labels({3, 0, 8, 7});
    CHECK(y[0] == 1.0);
    CHECK(y[1] == -1.0);
    CHECK(y[2] == -1.0);
    CHECK(y[3] == 1.0);
    CHECK_THROWS_AS(parity_labels({10}), std::invalid_argument);
    CHECK_THROWS_AS(parity_labels({-1}), std::invalid_argument);
}

TEST_CASE("split_dataset: sizes, determinism, content preservation") {
    Dataset ds = gen_stripe(50, 3, 1, {0.0}, 77);
    SplitDataset sp = split_dataset(ds, 30, 5);
    CHECK(sp.train.size() == 30);
    CHECK(sp.test.size() == 20);
    CHECK(sp.train.split == Split::Train);
    CHECK(sp.test.split == Split::Test);
    CHECK(sp.train.boundaries == ds.boundaries);

    SplitDataset sp2 = split_dataset(ds, 30, 5);
    CHECK(sp.train.X == sp2.train.X);
    CHECK(sp.train.id == sp2.train.id);

    // Every original row appears exactly once across the two splits.
    std::map<double, int> seen;  // keyed by x1 (continuous draws are distinct)
    for (Eigen::Index i = 0; i < ds.size(); ++i) seen[ds.X(i, 0)] += 1;
    for (Eigen::Index i = 0; i < sp.train.size(); ++i) seen[sp.train.X(i, 0)] -= 1;
    for (Eigen::Index i = 0; i < sp.test.size(); ++i) seen[sp.test.X(i, 0)] -= 1;
    for (const auto& [k, v] : seen) CHECK(v == 0);

    CHECK_THROWS_AS(split_dataset(ds, 0, 5), std::invalid_argument);
    CHECK_THROWS_AS(split_dataset(ds, 50, 5), std::invalid_argument);
}

TEST_CASE("pca: unit train variance, oracle eigenvalues, reconstruction, rank guard") {
    Rng rng(8);
    const Eigen::Index P = 200;
    const int d = 6;
    // Anisotropic data: distinct planted scales per coordinate, then a dense
    // rotation by a random orthogonal factor.
    Eigen::MatrixXd Z(P, d);
    for (Eigen::Index i = 0; i < Z.size(); ++i) Z.data()[i] = draw_normal(rng);
    Eigen::VectorXd scales(d);
    scales << 5.0, 3.0, 2.0, 1.0, 0.5, 0.25;
    Eigen::MatrixXd A(d, d);
    for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = draw_normal(rng);
    const Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ();
    const Eigen::MatrixXd X = (Z * scales.asDiagonal()) * Q.transpose();

    const int k = 3;
    PcaProjection proj = fit_pca(X, k);
    const Eigen::MatrixXd Zk = apply_pca(proj, X);
    for (int j = 0; j < k; ++j) {
        const Eigen::VectorXd c = Zk.col(j).array() - Zk.col(j).mean();
        const double var = c.squaredNorm() / static_cast<double>(P - 1);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-10));
    }

    // Independent eigenvalue oracle: power iteration with deflation on the
    // sample covariance, no shared code with fit_pca.
    Eigen::MatrixXd C = X.rowwise() - X.colwise().mean();
    Eigen::MatrixXd cov = (C.transpose() * C) / static_cast<double>(P - 1);
    for (int j = 0; j < k; ++j) {
        Eigen::VectorXd v = Eigen::VectorXd::Ones(d).normalized();
        double lam = 0;
        for (int it = 0; it < 3000; ++it) {
            v = (cov * v).normalized();
            lam = v.dot(cov * v);
        }
        CHECK(proj.explained_variance[j] == doctest::Approx(lam).epsilon(1e-6));
        cov -= lam * v * v.transpose();  // deflate
    }

    // k = d: orthonormal components reconstruct X exactly.
    PcaProjection full = fit_pca(X, d);
    const Eigen::MatrixXd Zfull = apply_pca(full, X);
    Eigen::MatrixXd Xhat =
        (Zfull * full.scales.asDiagonal()) * full.components.transpose();
    Xhat.rowwise() += full.mean.transpose();
    CHECK((Xhat - X).cwiseAbs().maxCoeff() < 1e-9 * X.cwiseAbs().maxCoeff());

    // Sign convention: the largest-magnitude loading of each component is
    // positive, so the fit is deterministic.
    for (int j = 0; j < k; ++j) {
        Eigen::Index imax;
        proj.components.col(j).cwiseAbs().maxCoeff(&imax);
        CHECK(proj.components(imax, j) > 0.0);
    }

    // Rank guard: 3 rows span at most a 2-dimensional centered subspace.
    Eigen::MatrixXd tiny(3, 5);
    for (Eigen::Index i = 0; i < tiny.size(); ++i) tiny.data()[i] = draw_normal(rng);
    CHECK_THROWS_AS(fit_pca(tiny, 3), std::invalid_argument);
}

TEST_CASE("pca_reduce uses the train projection for both splits") {
    Dataset ds = gen_stripe(120, 6, 1, {0.0}, 21);
    SplitDataset sp = split_dataset(ds, 80, 9);
    SplitDataset red = pca_reduce(sp, 4);
    CHECK(red.train.dim() == 4);
    CHECK(red.test.dim() == 4);
    CHECK(red.train.size() == 80);
    CHECK(red.test.size() == 40);
    CHECK(red.train.y == sp.train.y);  // labels untouched
    // Unit variance holds on the train split only (the contract).
    for (int j = 0; j < 4; ++j) {
        const Eigen::VectorXd c = red.train.X.col(j).array() - red.train.X.col(j).mean();
        CHECK(c.squaredNorm() / 79.0 == doctest::Approx(1.0).epsilon(1e-10));
    }
    CHECK(red.train.d_parallel == 0);  // mixing destroys the stripe direction
}

TEST_CASE("compress: identity, large-Lambda limit, label invariance") {
    Dataset ds = gen_stripe(40, 4, 1, {0.0}, 31);
    Dataset same = compress(ds, 1.0);
    CHECK(same.X == ds.X);
    CHECK(same.y == ds.y);

    Dataset squeezed = compress(ds, 1e12);
    CHECK(squeezed.X.col(0) == ds.X.col(0));
    CHECK(squeezed.X.rightCols(3).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(squeezed.y == ds.y);

    for (double L : {0.5, 2.0, 100.0}) {
        Dataset c = compress(ds, L);
        CHECK(stripe_labels(c.X, c.boundaries) == ds.y);
        CHECK(c.id != ds.id);  // content hash tracks the transform
    }

    Dataset noinfo = gen_random_labels(10, 3, 1);
    CHECK_THROWS_AS(compress(noinfo, 2.0), std::invalid_argument);
    CHECK_THROWS_AS(compress(ds, 0.0), std::invalid_argument);
}

TEST_CASE("dataset blob and csv round trips") {
    Dataset ds = gen_stripe(15, 3, 1, {-0.5, 0.5}, 41);
    const std::string blob = "test_dataset.jlds";
    write_jlds(blob, ds);
    Dataset back = read_jlds(blob);
    CHECK(back.X == ds.X);
    CHECK(back.y == ds.y);
    CHECK(back.d_parallel == ds.d_parallel);
    CHECK(back.boundaries == ds.boundaries);
    CHECK(back.provenance == ds.provenance);
    CHECK(back.seed == ds.seed);
    CHECK(back.id == ds.id);

    {
        std::ofstream f(blob, std::ios::binary);
        f.write("XXXX", 4);
    }
    CHECK_THROWS_AS(read_jlds(blob), std::runtime_error);
    std::remove(blob.c_str());

    const std::string csv = "test_dataset.csv";
    write_dataset_csv(csv, ds);
    std::ifstream f(csv);
    std::string header;
    std::getline(f, header);
    CHECK(header == "x1,x2,x3,y");
    int lines = 0;
    std::string line;
    while (std::getline(f, line)) ++lines;
    CHECK(lines == 15);
    f.close();
    std::remove(csv.c_str());
}
