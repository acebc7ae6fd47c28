#pragma once

#include <stdexcept>
#include <vector>

#include "jamlab/loss.hpp"
#include "jamlab/predictor.hpp"

namespace jamlab {

struct FlowConfig {
    double dt0 = 1e-3;
    double dt_max = 1.0;
    double growth = 1.1;             // dt multiplier on acceptance
    double shrink = 0.5;             // dt multiplier on rejection
    double loss_increase_tol = 0.0;  // accept iff new <= old * (1 + tol)
    double t_max = 1e6;              // flow-time budget
    std::vector<double> checkpoint_times;  // sorted; states recorded exactly

    // Deterministic work budget. Unlike a wall-clock budget it keeps runs
    // bit-reproducible across machines and worker counts.
    long long max_steps = 4'000'000;

    // Plateau stop: after stall_window accepted steps, stop if the loss has
    // dropped by less than stall_rel_drop relative over that window.
    // stall_window = 0 disables. Used by jamming-adjacent runs where the
    // decay becomes exponentially slow on the jammed side.
    long long stall_window = 0;
    double stall_rel_drop = 1e-3;

    long long history_stride = 1;  // record every k-th accepted step

    void validate() const {
        if (!(dt0 > 0) || !(dt0 <= dt_max)) throw std::invalid_argument("FlowConfig: need 0 < dt0 <= dt_max");
        if (!(growth > 1) || !(shrink > 0) || !(shrink < 1))
            throw std::invalid_argument("FlowConfig: need growth > 1, shrink in (0,1)");
        if (loss_increase_tol < 0 || t_max < 0)
            throw std::invalid_argument("FlowConfig: negative tolerance or budget");
        for (std::size_t i = 1; i < checkpoint_times.size(); ++i)
            if (checkpoint_times[i] < checkpoint_times[i - 1])
                throw std::invalid_argument("FlowConfig: checkpoints must be sorted");
    }
};

enum class StopReason { ZeroLoss, TimeBudget, StepBudget, Stalled, Stiff };

struct HistoryRow {
    long long step;
    double flow_time;
    double dt;
    double loss;      // rescaled loss L~ = L / alpha^2
    Eigen::Index n_delta;
};

struct Checkpoint {
    double flow_time;
    NetworkState state;
};

struct TrainResult {
    NetworkState final_state;
    double flow_time = 0;
    double final_loss = 0;  // rescaled
    bool reached_zero = false;
    long long steps_taken = 0;
    StopReason stop_reason = StopReason::TimeBudget;
    std::vector<HistoryRow> history;
    std::vector<Checkpoint> checkpoints;

    std::vector<double> loss_history() const;
    std::vector<Eigen::Index> n_delta_history() const;
};

/// dt underflowed below 1e-14; the partial result is everything integrated
/// so far.
class StiffnessError : public std::runtime_error {
  public:
    StiffnessError(std::string msg, TrainResult partial)
        : std::runtime_error(std::move(msg)), partial_result(std::move(partial)) {}
    TrainResult partial_result;
};

/// Gradient flow on the rescaled loss: theta' = -grad L~, integrated by
/// accept/reject Euler steps. A step is accepted iff the new loss is at most
/// old * (1 + loss_increase_tol); accepted steps grow dt by `growth` (capped
/// at dt_max), rejected ones shrink it by `shrink` and retry. Terminates on
/// exact zero hinge loss (every margin <= 0), on the flow-time budget, on the
/// step budget, or on a plateau when enabled. Before a plateau or step-budget
/// stop is reported for a hinge loss, the current descent direction is
/// retried with geometrically larger steps within the flow-time budget; the
/// continuous flow exits the satisfaction region in finite time, and such a
/// step ends at exactly zero loss when the constraints are satisfiable.
/// Steps are clamped to land exactly on each checkpoint time. Mutates
/// model.net in place; the result holds its own copy of the final state.
TrainResult train(PredictorModel& model, const Dataset& data, const LossSpec& spec,
                  const FlowConfig& cfg);

/// RMS preactivation shift between two parameter states of the same arch,
/// per layer (a^(1)..a^(L+1)) and aggregated over hidden layers. The lazy
/// regime is diagnosed by aggregate << 1 at the end of training.
struct PreactShift {
    std::vector<double> per_layer;
    double aggregate = 0;
};

PreactShift preactivation_shift(const NetworkState& state_t, const NetworkState& state_0,
                                const Dataset& data);

void write_history_csv(const std::string& path, const TrainResult& result);

}  // namespace jamlab
