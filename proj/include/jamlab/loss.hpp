#pragma once

#include "jamlab/data.hpp"
#include "jamlab/predictor.hpp"

namespace jamlab {

enum class LossKind { Hinge, CrossEntropy };

struct LossSpec {
    LossKind kind = LossKind::Hinge;
    int gamma = 2;               // hinge exponent, 1 or 2
    double margin = 1.0;
    bool normalize_by_P = true;

    void validate() const;
};

/// Delta_mu = margin - y_mu * f(x_mu). A datum is fitted when Delta_mu <= 0.
Eigen::VectorXd margins(const PredictorModel& model, const Dataset& ds);
Eigen::VectorXd margins_from_outputs(const Eigen::VectorXd& f, const Eigen::VectorXd& y,
                                     double margin);

/// Hinge: (1/P) sum max(0, Delta)^gamma (the 1/P iff normalize_by_P).
/// Cross-entropy: (1/P) sum log(1 + exp(-y f)); Delta is then y*f passed
/// through margins with margin 0, i.e. loss() expects raw Delta either way.
double loss(const Eigen::VectorXd& delta, const LossSpec& spec);

/// Number of strictly positive margins.
Eigen::Index count_unsatisfied(const Eigen::VectorXd& delta);

/// Per-sample weights c_mu such that grad_theta L~ = sum_mu c_mu grad f~(x_mu)
/// for the rescaled loss L~ = L / alpha^2. Hinge:
/// c_mu = (gamma / (alpha P)) * max(0, Delta_mu)^(gamma-1) * (-y_mu), zero on
/// satisfied data.
Eigen::VectorXd rescaled_loss_coefficients(const Eigen::VectorXd& delta, const Eigen::VectorXd& y,
                                           double alpha, const LossSpec& spec);

/// Full gradient of L~ in flat layout (used by tests and small landscapes;
/// the trainer accumulates in blocks and never flattens).
Eigen::VectorXd loss_gradient(const PredictorModel& model, const Dataset& ds,
                              const LossSpec& spec);

/// L~ = loss / alpha^2, evaluated from predictions.
double rescaled_loss(const PredictorModel& model, const Dataset& ds, const LossSpec& spec);

}  // namespace jamlab
