#include "jamlab/predictor.hpp"

#include <cmath>
#include <stdexcept>

namespace jamlab {

PredictorModel make_predictor(NetworkState net, double alpha_tilde, bool keep_init_copy) {
    if (!(alpha_tilde > 0)) throw std::invalid_argument("make_predictor: alpha_tilde must be > 0");
    PredictorModel model;
    model.alpha_tilde = alpha_tilde;
    model.alpha = alpha_tilde / std::sqrt(static_cast<double>(net.arch.width));
    if (keep_init_copy) model.init_copy = net;
    model.net = std::move(net);
    return model;
}

void attach_dataset(PredictorModel& model, const Dataset& ds) {
    if (model.init_output_cache.count(ds.id)) return;
    const NetworkState& init = model.init_copy ? *model.init_copy : model.net;
    BatchCache cache;
    forward_batch(init, ds.X, cache);
    model.init_output_cache.emplace(ds.id, cache.outputs());
}

double predict(const PredictorModel& model, const Eigen::VectorXd& x) {
    if (!model.init_copy)
        throw std::runtime_error(
            "predict: off-dataset evaluation requires the frozen init copy (cache miss)");
    return model.alpha * (forward(model.net, x) - forward(*model.init_copy, x));
}

Eigen::VectorXd init_outputs_for(const PredictorModel& model, const Dataset& ds) {
    auto it = model.init_output_cache.find(ds.id);
    if (it != model.init_output_cache.end()) return it->second;
    if (!model.init_copy)
        throw std::runtime_error("predictor: dataset " + ds.id +
                                 " not cached and no frozen init copy (cache miss)");
    BatchCache cache;
    forward_batch(*model.init_copy, ds.X, cache);
    return cache.outputs();
}

Eigen::VectorXd predict_batch(const PredictorModel& model, const Dataset& ds) {
    BatchCache cache;
    forward_batch(model.net, ds.X, cache);
    return predict_from_cache(model, ds, cache);
}

Eigen::VectorXd predict_from_cache(const PredictorModel& model, const Dataset& ds,
                                   const BatchCache& cache) {
    return model.alpha * (cache.outputs() - init_outputs_for(model, ds));
}

}  // namespace jamlab
