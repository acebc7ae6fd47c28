#pragma once

#include <map>
#include <optional>
#include <string>

#include "jamlab/data.hpp"
#include "jamlab/net.hpp"

namespace jamlab {

/// The alpha-scaled predictor f(x) = alpha * (f~_theta(x) - f~_theta0(x)).
/// By construction f is exactly zero everywhere at initialization.
///
/// The initial outputs f~_theta0 are cached per dataset, keyed by the
/// dataset's content id. Off-dataset evaluation needs the frozen copy of the
/// initial state (keep_init_copy); without it, an unknown input is a
/// cache-miss error rather than a silent recompute with the wrong theta0.
struct PredictorModel {
    NetworkState net;
    double alpha = 1.0;
    double alpha_tilde = 1.0;  // alpha * sqrt(h)
    std::map<std::string, Eigen::VectorXd> init_output_cache;
    std::optional<NetworkState> init_copy;
};

/// alpha = alpha_tilde / sqrt(h).
PredictorModel make_predictor(NetworkState net, double alpha_tilde, bool keep_init_copy = true);

/// Computes and caches f~_theta0 on ds. Must be called while net is still at
/// its initial state unless a frozen copy exists. No-op if already cached.
void attach_dataset(PredictorModel& model, const Dataset& ds);

/// alpha * (f~_theta(x) - f~_theta0(x)); needs the frozen init copy.
double predict(const PredictorModel& model, const Eigen::VectorXd& x);

/// Batch predictions on a dataset whose init outputs are cached (or
/// computable from the frozen copy). Throws a cache-miss error otherwise.
Eigen::VectorXd predict_batch(const PredictorModel& model, const Dataset& ds);

/// Same, reusing an already-computed forward pass over ds.
Eigen::VectorXd predict_from_cache(const PredictorModel& model, const Dataset& ds,
                                   const BatchCache& cache);

/// The cached init outputs for ds (computing them from the frozen copy on a
/// miss, without mutating the model).
Eigen::VectorXd init_outputs_for(const PredictorModel& model, const Dataset& ds);

}  // namespace jamlab
