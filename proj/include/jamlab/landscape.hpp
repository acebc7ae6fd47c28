#pragma once

#include <functional>
#include <optional>

#include "jamlab/flow.hpp"
#include "jamlab/loss.hpp"
#include "jamlab/predictor.hpp"

namespace jamlab {

/// Energy convention for all landscape analysis: U = (1/2) sum_{Delta>0}
/// Delta^2, no 1/P. Rank and zero-mode structure are invariant under
/// positive rescaling, and this makes H0 = sum grad Delta x grad Delta exact.
double landscape_energy(const PredictorModel& model, const Dataset& data);

/// grad U at theta, active set and margins recomputed there.
Eigen::VectorXd landscape_gradient(const PredictorModel& model, const Dataset& data);

struct HessianParts {
    Eigen::MatrixXd H0;  // sum over unsatisfied data of grad Delta outer grad Delta; PSD
    Eigen::MatrixXd Hp;  // sum Delta * Hess Delta, via central FD, symmetrized
};

/// Dense assembly; throws beyond dense_limit advising the hvp path.
/// FD step for Hp columns is eps = 1e-4 on each flat coordinate, with the
/// margins and the active set frozen at theta (the decomposition's weights,
/// not the true Hessian of U, which additionally moves the active set).
HessianParts hessian_parts(const PredictorModel& model, const Dataset& data,
                           Eigen::Index dense_limit = 4000);

/// True Hessian-vector product of U by central differences of the exact
/// gradient: (grad U(theta + eps v) - grad U(theta - eps v)) / (2 eps),
/// eps = 1e-5 * |theta| / |v|. Rejects v = 0.
Eigen::VectorXd hvp(const PredictorModel& model, const Dataset& data, const Eigen::VectorXd& v);

struct SpectrumSummary {
    Eigen::VectorXd spectrum;  // ascending
    Eigen::Index zero_mode_count = 0;
    double spectral_gap = 0;   // smallest eigenvalue above the zero cluster
    bool has_gap = false;      // false when nothing sits above the cluster
    double lambda_max = 0;     // largest |eigenvalue|
    bool converged = true;     // false for a flagged partial iterative result
};

/// Dense symmetric eigendecomposition. Zero modes: |lambda| < 1e-8 * lambda_max.
SpectrumSummary spectrum_summary(const Eigen::MatrixXd& H);

/// 200-step Lanczos with full reorthogonalization on a matrix-free operator.
/// Ritz values only resolve edges of the spectrum; zero_mode_count from this
/// path is a lower bound and the summary is flagged converged = false if the
/// residual check fails.
SpectrumSummary lanczos_spectrum(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& op,
                                 Eigen::Index n, int steps = 200, std::uint64_t seed = 0);

struct LandscapeReport {
    Eigen::Index n_delta = 0;
    Eigen::Index n_params = 0;
    double n_delta_frac = 0;  // N_Delta / N
    Eigen::Index h0_rank = 0;
    Eigen::Index zero_mode_count = 0;
    double spectral_gap = 0;
    bool has_gap = false;
    double zero_threshold = 0;  // 1e-8 * lambda_max used for the cluster
    Eigen::VectorXd spectrum;   // full Hessian H0 + Hp, ascending
    Eigen::Index hp_negative_count = 0;  // N^- of the decomposition's Hp
    double predictor_norm = 0;  // RMS of f over test inputs, 0 if none given
};

/// Full dense analysis at the model's current parameters.
LandscapeReport analyze_landscape(const PredictorModel& model, const Dataset& data,
                                  const Eigen::MatrixXd* test_inputs = nullptr,
                                  Eigen::Index dense_limit = 4000);

struct BoundsCheck {
    bool upper = false;  // N_Delta <= N
    bool lower = false;  // N_Delta >= N^-
};

BoundsCheck check_bounds(const LandscapeReport& report);

/// RMS of the predictor over a set of inputs (needs the frozen init copy).
double predictor_norm(const PredictorModel& model, const Eigen::MatrixXd& X);

struct JammingProbe {
    int h = 0;
    int fit_votes = 0;     // of R seeds, how many reached zero
    bool jammed = false;   // majority failed to fit
};

/// One training run inside a jamming scan; maps 1:1 onto a scan CSV row.
struct JammingRunRecord {
    Eigen::Index P = 0;
    int h = 0;
    std::int64_t N = 0;
    int seed_index = 0;
    bool reached_zero = false;
    Eigen::Index n_delta = 0;
    double n_delta_frac = 0;  // N_Delta / N
    double flow_time = 0;
    StopReason stop_reason = StopReason::TimeBudget;
};

struct JammingResult {
    bool conclusive = false;
    int h_star = 0;          // smallest width whose majority fits
    std::int64_t n_star = 0; // param_count at h_star
    int h_jammed = 0;        // largest probed width below h_star (jammed side)
    std::vector<JammingProbe> probes;
    std::vector<JammingRunRecord> runs;
    // Reports at representative final states on each side of the transition.
    // The jammed-side report is absent when nothing jams in the scanned range.
    std::optional<LandscapeReport> report_jammed;
    std::optional<LandscapeReport> report_fitting;
    std::string note;
};

struct JammingScanConfig {
    int h_lo = 1;
    int h_hi = 64;
    int h_cap = 4096;      // upward bracket search stops here
    int repeats = 5;       // R seeds per width, majority vote
    std::uint64_t base_seed = 0;
    double alpha_tilde = 1.0;
    int depth = 1;
    bool analyze_sides = true;  // dense landscape reports on both sides
    Eigen::Index dense_limit = 4000;
};

/// Bisects the fit/no-fit boundary in width. A width is jammed when the
/// majority of R seeded runs fails to reach zero loss within cfg's budget.
/// Brackets are grown automatically from [h_lo, h_hi]; running out of the
/// scan range returns an inconclusive result carrying the probes done so far.
JammingResult locate_jamming(const Dataset& data, const LossSpec& spec, const FlowConfig& cfg,
                             const JammingScanConfig& scan);

/// One majority-vote probe at a fixed width; building block of locate_jamming,
/// exposed for exhaustive scans. Appends its per-run records to `runs`.
JammingProbe jamming_probe(const Dataset& data, const LossSpec& spec, const FlowConfig& cfg,
                           const JammingScanConfig& scan, int h,
                           std::vector<JammingRunRecord>* runs = nullptr);

void write_spectrum_csv(const std::string& path, const Eigen::VectorXd& spectrum);
void write_jamming_csv(const std::string& path, const std::vector<JammingRunRecord>& runs);

}  // namespace jamlab
