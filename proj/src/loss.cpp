#include "jamlab/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace jamlab {

void LossSpec::validate() const {
    if (kind == LossKind::Hinge && gamma != 1 && gamma != 2)
        throw std::invalid_argument("LossSpec: hinge gamma must be 1 or 2");
    if (!(margin > 0)) throw std::invalid_argument("LossSpec: margin must be > 0");
}

Eigen::VectorXd margins_from_outputs(const Eigen::VectorXd& f, const Eigen::VectorXd& y,
                                     double margin) {
    return Eigen::VectorXd::Constant(f.size(), margin) - y.cwiseProduct(f);
}

Eigen::VectorXd margins(const PredictorModel& model, const Dataset& ds) {
    return margins_from_outputs(predict_batch(model, ds), ds.y, 1.0);
}

double loss(const Eigen::VectorXd& delta, const LossSpec& spec) {
    spec.validate();
    const Eigen::Index P = delta.size();
    double s = 0;
    if (spec.kind == LossKind::Hinge) {
        for (Eigen::Index i = 0; i < P; ++i) {
            const double d = delta[i];
            if (d > 0) s += spec.gamma == 2 ? d * d : d;
        }
    } else {
        // delta - margin = -y f regardless of the margin constant.
        for (Eigen::Index i = 0; i < P; ++i) {
            const double z = delta[i] - spec.margin;
            s += z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        }
    }
    return spec.normalize_by_P ? s / static_cast<double>(P) : s;
}

Eigen::Index count_unsatisfied(const Eigen::VectorXd& delta) {
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < delta.size(); ++i)
        if (delta[i] > 0) ++n;
    return n;
}

Eigen::VectorXd rescaled_loss_coefficients(const Eigen::VectorXd& delta, const Eigen::VectorXd& y,
                                           double alpha, const LossSpec& spec) {
    spec.validate();
    const Eigen::Index P = delta.size();
    const double norm = spec.normalize_by_P ? static_cast<double>(P) : 1.0;
    Eigen::VectorXd c = Eigen::VectorXd::Zero(P);
    if (spec.kind == LossKind::Hinge) {
        const double pref = spec.gamma / (alpha * norm);
        for (Eigen::Index i = 0; i < P; ++i) {
            if (delta[i] > 0)
                c[i] = pref * (spec.gamma == 2 ? delta[i] : 1.0) * (-y[i]);
        }
    } else {
        for (Eigen::Index i = 0; i < P; ++i) {
            const double z = delta[i] - spec.margin;  // = -y f
            const double sig = z > 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
            c[i] = sig * (-y[i]) / (alpha * norm);
        }
    }
    return c;
}

Eigen::VectorXd loss_gradient(const PredictorModel& model, const Dataset& ds,
                              const LossSpec& spec) {
    BatchCache cache;
    forward_batch(model.net, ds.X, cache);
    const Eigen::VectorXd f = predict_from_cache(model, ds, cache);
    const Eigen::VectorXd delta = margins_from_outputs(f, ds.y, spec.margin);
    const Eigen::VectorXd coef = rescaled_loss_coefficients(delta, ds.y, model.alpha, spec);
    ParamBlocks g = ParamBlocks::zeros(model.net.arch);
    accumulate_weighted_gradients(model.net, ds.X, cache, coef, g);
    NetworkState holder;
    holder.arch = model.net.arch;
    holder.params = std::move(g);
    return holder.flatten();
}

double rescaled_loss(const PredictorModel& model, const Dataset& ds, const LossSpec& spec) {
    const Eigen::VectorXd delta = margins_from_outputs(predict_batch(model, ds), ds.y, spec.margin);
    return loss(delta, spec) / (model.alpha * model.alpha);
}

}  // namespace jamlab
