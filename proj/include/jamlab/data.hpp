#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace jamlab {

enum class Provenance { Stripe, RandomLabels, Image };
enum class Split { None, Train, Test };

/// Immutable after construction. `id` is a content hash of inputs, labels and
/// metadata; downstream caches (predictor init outputs, Gram bookkeeping) key
/// on it, so any mutation must go through a function that rehashes.
struct Dataset {
    Eigen::MatrixXd X;       // P x d
    Eigen::VectorXd y;       // entries in {-1, +1}
    int d_parallel = 0;      // informative leading coordinates; 0 = unknown
    std::vector<double> boundaries;  // stripe interfaces, empty otherwise
    Provenance provenance = Provenance::Stripe;
    Split split = Split::None;
    std::uint64_t seed = 0;
    std::string id;

    Eigen::Index size() const { return X.rows(); }
    Eigen::Index dim() const { return X.cols(); }
};

struct SplitDataset {
    Dataset train;
    Dataset test;
};

/// FNV-1a over the raw bytes of X, y and the metadata fields.
std::string dataset_content_id(const Dataset& ds);

/// Recomputes the content id; call after any in-place edit.
void rehash(Dataset& ds);

/// Gaussian inputs; label +1 iff an odd number of boundaries lies strictly
/// below x_1 (so boundaries = {0} gives label = sign(x_1)). Labels depend on
/// the first coordinate only; d_parallel records how many coordinates the
/// rule is allowed to use.
Dataset gen_stripe(Eigen::Index P, int d, int d_parallel, const std::vector<double>& boundaries,
                   std::uint64_t seed);

/// Recompute stripe labels from inputs and boundaries (round-trip check and
/// label invariance tests).
Eigen::VectorXd stripe_labels(const Eigen::MatrixXd& X, const std::vector<double>& boundaries);

/// Gaussian inputs, labels i.i.d. uniform on {-1, +1}, independent of inputs.
Dataset gen_random_labels(Eigen::Index P, int d, std::uint64_t seed);

/// Raw image data as loaded from IDX files, before any label rule.
struct RawImageData {
    Eigen::MatrixXd images;        // P x (rows*cols), scaled to [0, 1]
    std::vector<int> labels;       // 0..9
    int rows = 0, cols = 0;
};

/// IDX ingestion: big-endian magic 0x00000803 (u8 images, 3 extra dims) and
/// 0x00000801 (u8 labels). Throws std::runtime_error on bad magic, truncated
/// payload, or image/label count mismatch.
RawImageData load_idx(const std::string& images_path, const std::string& labels_path);

/// Odd digit -> +1, even -> -1. Throws on labels outside 0..9.
Eigen::VectorXd parity_labels(const std::vector<int>& raw_labels);

Dataset make_image_dataset(const RawImageData& raw, std::uint64_t seed);

/// Seeded shuffle, then leading indices become the train split.
SplitDataset split_dataset(const Dataset& ds, Eigen::Index n_train, std::uint64_t seed);

/// PCA projection fitted on the train split only: mean-centered, top-k
/// components of the train covariance, each retained component rescaled to
/// unit sample variance (ddof = 1) unless rescale = false. Sign convention:
/// the largest-magnitude loading of each component is positive.
struct PcaProjection {
    Eigen::VectorXd mean;        // d
    Eigen::MatrixXd components;  // d x k, columns are principal directions
    Eigen::VectorXd scales;      // k, divisor per retained component
    Eigen::VectorXd explained_variance;  // k, covariance eigenvalues (ddof 1)
};

PcaProjection fit_pca(const Eigen::MatrixXd& X, int k, bool rescale = true);
Eigen::MatrixXd apply_pca(const PcaProjection& proj, const Eigen::MatrixXd& X);

/// Applies a train-split-fitted projection to both splits. Throws if k
/// exceeds the numerical rank of the train covariance.
SplitDataset pca_reduce(const SplitDataset& ds, int k, bool rescale = true);

/// Divides coordinates beyond d_parallel by Lambda; labels untouched.
/// Requires d_parallel >= 1 on the input dataset.
Dataset compress(const Dataset& ds, double Lambda);

/// CSV export (x_1..x_d, y) with a header row.
void write_dataset_csv(const std::string& path, const Dataset& ds);

/// Binary blob, magic "JLDS".
void write_jlds(const std::string& path, const Dataset& ds);
Dataset read_jlds(const std::string& path);

}  // namespace jamlab
