#pragma once

#include <functional>
#include <string>
#include <vector>

#include "jamlab/flow.hpp"
#include "jamlab/landscape.hpp"
#include "jamlab/ntk.hpp"

namespace jamlab {

/// Fraction of sign(f) != y. sign(0) counts as an error (a predictor that
/// says nothing is wrong). Throws on an empty test set.
double test_error(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels);

/// Pointwise mean of raw outputs (not signs) over the ensemble.
double ensemble_predict(const std::vector<PredictorModel>& models, const Eigen::VectorXd& x);

struct PowerLawFit {
    // Decay convention: data following y ~ x^(-beta) yields exponent = beta,
    // positive for decaying data. The raw log-log slope is -exponent.
    double exponent = 0;
    double intercept = 0;  // log-space intercept of the OLS line
    double stderr_exponent = 0;
    double x_min = 0, x_max = 0;
    int n_points = 0;

    double slope() const { return -exponent; }
};

/// OLS on (log x, log y). Requires >= 4 strictly positive points.
PowerLawFit fit_power_law(const std::vector<double>& xs, const std::vector<double>& ys);

/// Settings shared by every ensemble-of-seeds experiment.
struct RunPlan {
    int depth = 2;
    double alpha_tilde = 1.0;
    LossSpec spec;
    FlowConfig cfg;
    std::uint64_t base_seed = 0;
};

/// One (h, alpha_tilde) cell trained over M independent initializations.
struct EnsembleOutcome {
    int h = 0;
    double alpha_tilde = 1.0;
    int M = 0;
    double mean_individual_error = 0;
    double ensemble_error = 0;
    double mean_final_loss = 0;       // rescaled loss
    double jammed_fraction = 0;       // runs that did not reach zero
    double mean_kernel_change_ratio = 0;  // 0 unless Grams requested
    double mean_n_delta_frac = 0;
    double mean_flow_time = 0;
    bool flagged = false;             // some run ended in a stiffness error
    Eigen::MatrixXd test_predictions;  // M x P_test
    Eigen::VectorXd ensemble_prediction;
    std::vector<NetworkState> final_states;
    std::vector<bool> reached_zero;
};

/// Trains M seeds of width h, evaluates on the test set, optionally measures
/// the init-to-final NTK change on the train set. Seeds are
/// derive_seed(plan.base_seed, m); runs execute in parallel and results are
/// ordered by m, so output is independent of the worker count.
EnsembleOutcome run_ensemble(int h, const Dataset& train, const Dataset& test,
                             const RunPlan& plan, int M, bool with_grams = false);

/// A SweepRecord is an EnsembleOutcome stripped of its heavy members; one CSV
/// row of the phase diagram.
struct SweepRecord {
    int h = 0;
    double alpha_tilde = 0;
    Eigen::Index P = 0;
    int M = 0;
    double mean_individual_error = 0;
    double ensemble_error = 0;
    double mean_final_loss = 0;
    double jammed_fraction = 0;
    double mean_kernel_change_ratio = 0;
    double mean_n_delta_frac = 0;
    double mean_flow_time = 0;
    bool flagged = false;
};

SweepRecord to_record(const EnsembleOutcome& outcome, Eigen::Index P);

/// Full (h, alpha_tilde) grid. Stiffness failures flag their record; the
/// sweep never aborts. Progress lines go to stderr when verbose.
std::vector<SweepRecord> sweep_phase_diagram(const std::vector<int>& h_grid,
                                             const std::vector<double>& alpha_grid,
                                             const Dataset& train, const Dataset& test,
                                             const RunPlan& plan, int M, bool with_grams = true,
                                             bool verbose = false);

struct DoubleDescentPoint {
    int h = 0;
    std::int64_t N = 0;
    double mean_individual_error = 0;
    double ensemble_error = 0;
    double jammed_fraction = 0;
    bool flagged = false;
};

std::vector<DoubleDescentPoint> double_descent_curve(const std::vector<int>& h_grid,
                                                     const Dataset& train, const Dataset& test,
                                                     const RunPlan& plan, int M,
                                                     bool verbose = false);

struct FluctuationPoint {
    int h = 0;
    std::int64_t N = 0;
    double fluctuation = 0;  // RMS over test inputs and seeds of f_m - <f>
    bool valid = false;      // all M runs reached zero (over-parametrized)
};

struct FluctuationResult {
    std::vector<FluctuationPoint> points;
    PowerLawFit fit;  // vs N over valid points; exponent ~ +0.25 expected
};

/// Requires M >= 4. Widths whose runs fail to fit are flagged invalid and
/// excluded from the fit.
FluctuationResult measure_fluctuations(const std::vector<int>& h_list, int M,
                                       const Dataset& train, const Dataset& test,
                                       const RunPlan& plan, bool verbose = false);

struct LearningCurvePoint {
    Eigen::Index P = 0;
    int h = 0;
    double ensemble_error = 0;
    double mean_individual_error = 0;
    bool flagged = false;  // a jammed or stiff run invalidates the point
};

struct LearningCurveResult {
    std::vector<LearningCurvePoint> points;
    PowerLawFit fit;  // ensemble error vs P; exponent = beta
};

/// Fresh train set per P (generator(P, seed)), one fixed test set. The width
/// schedule h(P) = max(64, ceil(4 sqrt(P))) keeps runs over-parametrized.
LearningCurveResult learning_curve(const std::vector<Eigen::Index>& P_list,
                                   const std::function<Dataset(Eigen::Index, std::uint64_t)>& gen,
                                   const Dataset& test, const RunPlan& plan, int M,
                                   bool verbose = false);

int learning_curve_width(Eigen::Index P);

/// Lambda = RMS of first-layer weights along coordinates 1..d_parallel over
/// RMS along the rest. One hidden layer only.
double measure_compression(const NetworkState& net, int d_parallel);

struct CompressionPoint {
    Eigen::Index P = 0;
    double lambda = 0;   // mean over seeds of measure_compression
    bool flagged = false;
};

struct CompressionResult {
    std::vector<CompressionPoint> points;
    PowerLawFit fit;  // Lambda vs P; slope() ~ +0.5 expected in feature regime
};

/// Feature-regime (or any regime, per plan) compression growth across P.
/// Uses depth = 1 regardless of plan.depth.
CompressionResult compression_curve(const std::vector<Eigen::Index>& P_list,
                                    const std::function<Dataset(Eigen::Index, std::uint64_t)>& gen,
                                    const Dataset& test, const RunPlan& plan, int M,
                                    bool verbose = false);

struct EquivalenceResult {
    double feature_error_raw = 0;     // (a) feature regime on raw data
    double lazy_error_compressed = 0; // (b) lazy regime on compress(data, Lambda)
    double lazy_error_raw = 0;        // baseline lazy on raw data
    double lambda = 0;                // compression measured from the feature runs
};

/// Feature learning on raw data vs lazy training on pre-compressed data,
/// with Lambda taken from the feature runs' own first layers (depth 1).
EquivalenceResult compression_equivalence(const Dataset& train, const Dataset& test,
                                          const RunPlan& feature_plan, const RunPlan& lazy_plan,
                                          int M, bool verbose = false);

void write_sweep_csv(const std::string& path, const std::vector<SweepRecord>& records);
void write_double_descent_csv(const std::string& path,
                              const std::vector<DoubleDescentPoint>& points);
void write_fluctuations_csv(const std::string& path, const FluctuationResult& result);
void write_learning_curve_csv(const std::string& path, const LearningCurveResult& result);
void write_compression_csv(const std::string& path, const CompressionResult& result);

}  // namespace jamlab
