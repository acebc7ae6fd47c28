#include "jamlab/flow.hpp"

#include <cmath>
#include <fstream>

namespace jamlab {

std::vector<double> TrainResult::loss_history() const {
    std::vector<double> v;
    v.reserve(history.size());
    for (const auto& r : history) v.push_back(r.loss);
    return v;
}

std::vector<Eigen::Index> TrainResult::n_delta_history() const {
    std::vector<Eigen::Index> v;
    v.reserve(history.size());
    for (const auto& r : history) v.push_back(r.n_delta);
    return v;
}

TrainResult train(PredictorModel& model, const Dataset& data, const LossSpec& spec,
                  const FlowConfig& cfg) {
    cfg.validate();
    spec.validate();
    attach_dataset(model, data);
    const Eigen::VectorXd init_out = init_outputs_for(model, data);
    const double alpha2 = model.alpha * model.alpha;

    NetworkState& net = model.net;
    BatchCache cache;
    forward_batch(net, data.X, cache);
    Eigen::VectorXd f = model.alpha * (cache.outputs() - init_out);
    Eigen::VectorXd delta = margins_from_outputs(f, data.y, spec.margin);
    double cur_loss = loss(delta, spec) / alpha2;

    TrainResult res;
    res.history.push_back({0, 0.0, cfg.dt0, cur_loss, count_unsatisfied(delta)});

    ParamBlocks grad = ParamBlocks::zeros(net.arch);
    NetworkState trial = net;
    BatchCache trial_cache;
    Eigen::VectorXd trial_f, trial_delta;

    double t = 0;
    double dt = cfg.dt0;
    long long steps = 0;
    std::size_t next_ckpt = 0;
    // Ring buffer of accepted losses for the plateau stop.
    std::vector<double> recent;
    if (cfg.stall_window > 0) recent.reserve(static_cast<std::size_t>(cfg.stall_window) + 1);

    StopReason reason = StopReason::TimeBudget;
    bool stop = false;

    auto zero_loss = [&]() { return (delta.array() <= 0.0).all(); };

    // Near the satisfaction boundary the Euler update dt*grad underflows
    // parameter precision and the loss freezes at an ulp-scale plateau even
    // though the continuous flow exits through the boundary in finite time.
    // Before a plateau or budget stop is declared, two exits are tried. A
    // trial that lands every margin at <= 0 has exactly zero hinge loss and
    // passes the monotone acceptance rule like any other step; frustrated
    // constraint sets (the jammed phase) admit no such step and keep their
    // stop reason.
    auto commit_trial = [&](double jump) {
        std::swap(net.params, trial.params);
        std::swap(cache, trial_cache);
        delta.swap(trial_delta);
        cur_loss = loss(delta, spec) / alpha2;
        t += jump;
        ++steps;
        while (next_ckpt < cfg.checkpoint_times.size() &&
               t >= cfg.checkpoint_times[next_ckpt]) {
            res.checkpoints.push_back({t, net});
            ++next_ckpt;
        }
        res.history.push_back({steps, t, jump, cur_loss, count_unsatisfied(delta)});
    };

    auto trial_satisfied = [&]() {
        forward_batch(trial, data.X, trial_cache);
        trial_f = model.alpha * (trial_cache.outputs() - init_out);
        trial_delta = margins_from_outputs(trial_f, data.y, spec.margin);
        return (trial_delta.array() <= 0.0).all();
    };

    auto satisfaction_jump = [&]() -> bool {
        if (spec.kind != LossKind::Hinge) return false;

        // Exit 1: the current descent direction with geometrically larger
        // steps. Succeeds whenever the active margins all move down along
        // the gradient, which is the generic case.
        const Eigen::VectorXd coef =
            rescaled_loss_coefficients(delta, data.y, model.alpha, spec);
        grad.set_zero();
        accumulate_weighted_gradients(net, data.X, cache, coef, grad);
        double jump = dt * 2;
        for (int k = 0; k < 64 && t + jump <= cfg.t_max; ++k, jump *= 2) {
            trial.params.assign_axpy(net.params, -jump, grad);
            if (trial_satisfied()) {
                commit_trial(jump);
                return true;
            }
        }

        // Exit 2: the gradient direction can be frustrated at ulp scale (the
        // active coupling pushes one margin up while the rest go down) even
        // when a strictly satisfied point sits nearby. Newton-iterate on a
        // private working copy: solve the active-set kernel system for a
        // displacement landing every near-boundary margin at -kappa*dmax,
        // where the overshoot ladder clears the rounding noise of the margin
        // evaluation (which can exceed dmax) and the near cut scales with
        // the overshoot so margins the step could push back over the
        // boundary join the solve. A ReLU unit parked on its kink breaks a
        // linearization two ways: the landing is off by the flipped slope,
        // and rows at the current point describe the wrong side of the step.
        // So each failed trial is re-solved once with rows from where it
        // landed, and progress across rounds is lexicographic (fewer
        // violated margins, then a smaller worst margin) because the worst
        // margin can grow on an iterate that still flips a kink the right
        // way. Intermediate iterates may raise the loss; they are never
        // committed. Only a verified full-satisfaction point is committed,
        // as a single zero-loss step, so the accepted trajectory stays
        // monotone. Small systems only: a large active set means the run is
        // genuinely far from satisfaction.
        const Eigen::Index N = param_count(net.arch);
        NetworkState work = net;
        Eigen::VectorXd work_delta = delta;
        auto n_positive = [](const Eigen::VectorXd& d) {
            return (d.array() > 0.0).count();
        };
        // A wedge can park several first-layer units exactly on their kinks,
        // where every one-sided linearization fails at once. For ReLU nets
        // of depth 1 there is an exact escape: a minimum-norm displacement
        // pushing each parked preactivation decisively negative while moving
        // no near margin, built from final-cell rows (the parked units'
        // blocks zeroed for the samples straddling them; deactivating a unit
        // whose preactivation is at rounding scale is exact for a ReLU).
        // The Newton rounds restart from the lifted point, whose cells are
        // clean at the working scale.
        auto lift_kinks = [&](NetworkState& w, Eigen::VectorXd& wd) -> bool {
            if (net.arch.depth != 1 || net.arch.activation != Activation::Relu)
                return false;
            const double dm = wd.maxCoeff();
            if (!(dm > 0)) return false;
            BatchCache lc;
            forward_batch(w, data.X, lc);
            const Eigen::MatrixXd& P1 = lc.preacts.front();
            const double gap = 1e6 * dm;
            const double keepout = 10.0 * gap;
            std::vector<Eigen::Index> near;
            std::vector<char> is_near(static_cast<std::size_t>(wd.size()), 0);
            for (Eigen::Index mu = 0; mu < wd.size(); ++mu)
                if (wd[mu] > -66.0 * dm) {
                    near.push_back(mu);
                    is_near[static_cast<std::size_t>(mu)] = 1;
                }
            // Only the endgame samples matter: a parked unit on a sample with
            // plenty of slack cannot derail the active-set solve.
            std::vector<std::pair<Eigen::Index, Eigen::Index>> pairs;
            for (Eigen::Index i = 0; i < P1.rows(); ++i) {
                if (!is_near[static_cast<std::size_t>(i)]) continue;
                for (Eigen::Index j = 0; j < P1.cols(); ++j)
                    if (std::abs(P1(i, j)) <= keepout) pairs.emplace_back(i, j);
            }
            if (pairs.empty() || pairs.size() > 128) return false;
            const auto A = static_cast<Eigen::Index>(near.size());
            const auto F = static_cast<Eigen::Index>(pairs.size());
            if (A > 64 || (A + F) * N > 20'000'000) return false;

            const Eigen::Index d = data.X.cols();
            const Eigen::Index h1 = w.params.W[0].rows();
            const double pref = 1.0 / std::sqrt(static_cast<double>(d));
            Eigen::MatrixXd M = Eigen::MatrixXd::Zero(A + F, N);
            {
                Eigen::MatrixXd Xa(A, d), Ga(A, N);
                for (Eigen::Index i = 0; i < A; ++i)
                    Xa.row(i) = data.X.row(near[static_cast<std::size_t>(i)]);
                gradient_rows(w, Xa, Ga);
                M.topRows(A) = Ga;
            }
            // Margin rows must describe the cell the lift ends in, not the
            // one it starts in: drop the parked units from the rows of the
            // samples that straddle them.
            for (const auto& [si, j] : pairs) {
                for (Eigen::Index i = 0; i < A; ++i) {
                    if (near[static_cast<std::size_t>(i)] != si) continue;
                    M.block(i, j * d, 1, d).setZero();
                    M(i, h1 * d + j) = 0.0;
                    M(i, h1 * d + h1 + j) = 0.0;
                }
            }
            Eigen::VectorXd b = Eigen::VectorXd::Zero(A + F);
            for (Eigen::Index f = 0; f < F; ++f) {
                const auto& [si, j] = pairs[static_cast<std::size_t>(f)];
                M.block(A + f, j * d, 1, d) = pref * data.X.row(si);
                M(A + f, h1 * d + j) = 1.0;
                b[A + f] = -gap - P1(si, j);
            }
            Eigen::MatrixXd MMt = M * M.transpose();
            MMt.diagonal().array() +=
                1e-12 * MMt.trace() / static_cast<double>(A + F);
            Eigen::LDLT<Eigen::MatrixXd> ldlt(MMt);
            if (ldlt.info() != Eigen::Success) return false;
            const Eigen::VectorXd dtheta = M.transpose() * ldlt.solve(b);
            if (!dtheta.allFinite()) return false;
            NetworkState lifted_state =
                NetworkState::unflatten(net.arch, w.flatten() + dtheta);
            BatchCache lc2;
            forward_batch(lifted_state, data.X, lc2);
            const Eigen::MatrixXd& Q1 = lc2.preacts.front();
            for (const auto& [si, j] : pairs)
                if (!(Q1(si, j) <= -0.5 * gap)) return false;
            Eigen::VectorXd wd2 = margins_from_outputs(
                model.alpha * (lc2.outputs() - init_out), data.y, spec.margin);
            if (wd2.maxCoeff() > keepout) return false;
            w = std::move(lifted_state);
            wd = std::move(wd2);
            return true;
        };
        int lifts = 0;
        for (int round = 0; round < 32; ++round) {
            const double dmax = work_delta.maxCoeff();
            if (!(dmax > 0)) {
                trial = work;
                if (trial_satisfied()) {
                    commit_trial(0.0);
                    return true;
                }
                return false;
            }
            Eigen::Index best_np = n_positive(work_delta);
            double best_max = dmax;
            NetworkState best_net;
            Eigen::VectorXd best_delta;
            bool improved = false;
            for (const double kappa : {1.0, 8.0, 64.0, 512.0, 4096.0}) {
                const double cut = -(kappa + 2.0) * dmax;
                std::vector<Eigen::Index> near;
                for (Eigen::Index mu = 0; mu < work_delta.size(); ++mu)
                    if (work_delta[mu] > cut) near.push_back(mu);
                const auto A = static_cast<Eigen::Index>(near.size());
                if (A > 64 || A * N > 20'000'000) break;

                Eigen::MatrixXd Xa(A, data.X.cols());
                Eigen::VectorXd rhs(A), ya(A);
                for (Eigen::Index i = 0; i < A; ++i) {
                    Xa.row(i) = data.X.row(near[static_cast<std::size_t>(i)]);
                    ya[i] = data.y[near[static_cast<std::size_t>(i)]];
                    rhs[i] = work_delta[near[static_cast<std::size_t>(i)]] + kappa * dmax;
                }
                auto newton_trial = [&](const NetworkState& rows_at) {
                    Eigen::MatrixXd Ga(A, N);
                    gradient_rows(rows_at, Xa, Ga);
                    Eigen::MatrixXd K =
                        (Ga * Ga.transpose()).cwiseProduct(ya * ya.transpose());
                    K *= alpha2;
                    K.diagonal().array() += 1e-12 * K.trace() / static_cast<double>(A);
                    Eigen::LDLT<Eigen::MatrixXd> ldlt(K);
                    if (ldlt.info() != Eigen::Success) return false;
                    const Eigen::VectorXd s = ldlt.solve(rhs);
                    const Eigen::VectorXd dtheta =
                        model.alpha * (Ga.transpose() * s.cwiseProduct(ya));
                    if (!dtheta.allFinite()) return false;
                    trial = NetworkState::unflatten(net.arch, work.flatten() + dtheta);
                    return true;
                };
                auto consider = [&]() {
                    const Eigen::Index cnp = n_positive(trial_delta);
                    const double cmax = trial_delta.maxCoeff();
                    if (cnp < best_np || (cnp == best_np && cmax < best_max)) {
                        best_np = cnp;
                        best_max = cmax;
                        best_net = trial;
                        best_delta = trial_delta;
                        improved = true;
                    }
                };
                if (!newton_trial(work)) continue;
                if (trial_satisfied()) {
                    commit_trial(0.0);
                    return true;
                }
                consider();
                const NetworkState landed = trial;
                if (!newton_trial(landed)) continue;
                if (trial_satisfied()) {
                    commit_trial(0.0);
                    return true;
                }
                consider();
            }
            if (!improved) {
                if (lifts >= 4 || !lift_kinks(work, work_delta)) return false;
                ++lifts;
                continue;
            }
            work = std::move(best_net);
            work_delta = std::move(best_delta);
        }
        return false;
    };

    if (zero_loss()) {
        stop = true;
        reason = StopReason::ZeroLoss;
    }

    while (!stop) {
        if (t >= cfg.t_max) {
            reason = StopReason::TimeBudget;
            break;
        }
        if (steps >= cfg.max_steps) {
            reason = satisfaction_jump() ? StopReason::ZeroLoss : StopReason::StepBudget;
            break;
        }

        const Eigen::VectorXd coef =
            rescaled_loss_coefficients(delta, data.y, model.alpha, spec);
        grad.set_zero();
        accumulate_weighted_gradients(net, data.X, cache, coef, grad);

        bool accepted = false;
        while (!accepted) {
            double dt_eff = std::min(dt, cfg.t_max - t);
            if (next_ckpt < cfg.checkpoint_times.size()) {
                const double to_ckpt = cfg.checkpoint_times[next_ckpt] - t;
                if (to_ckpt > 0) dt_eff = std::min(dt_eff, to_ckpt);
            }

            trial.params.assign_axpy(net.params, -dt_eff, grad);
            forward_batch(trial, data.X, trial_cache);
            trial_f = model.alpha * (trial_cache.outputs() - init_out);
            trial_delta = margins_from_outputs(trial_f, data.y, spec.margin);
            const double new_loss = loss(trial_delta, spec) / alpha2;

            if (new_loss <= cur_loss * (1.0 + cfg.loss_increase_tol)) {
                accepted = true;
                std::swap(net.params, trial.params);
                std::swap(cache, trial_cache);
                delta.swap(trial_delta);
                cur_loss = new_loss;
                t += dt_eff;
                ++steps;
                dt = std::min(dt * cfg.growth, cfg.dt_max);

                while (next_ckpt < cfg.checkpoint_times.size() &&
                       t >= cfg.checkpoint_times[next_ckpt]) {
                    res.checkpoints.push_back({t, net});
                    ++next_ckpt;
                }

                if (steps % cfg.history_stride == 0)
                    res.history.push_back({steps, t, dt_eff, cur_loss, count_unsatisfied(delta)});

                if (cur_loss == 0.0 && zero_loss()) {
                    reason = StopReason::ZeroLoss;
                    stop = true;
                } else if (cfg.stall_window > 0) {
                    recent.push_back(cur_loss);
                    if (static_cast<long long>(recent.size()) > cfg.stall_window) {
                        const double old = recent.front();
                        recent.erase(recent.begin());
                        if (old - cur_loss < cfg.stall_rel_drop * old) {
                            reason = satisfaction_jump() ? StopReason::ZeroLoss
                                                         : StopReason::Stalled;
                            stop = true;
                        }
                    }
                }
            } else {
                dt *= cfg.shrink;
                if (dt < 1e-14) {
                    res.final_state = net;
                    res.flow_time = t;
                    res.final_loss = cur_loss;
                    res.reached_zero = zero_loss();
                    res.steps_taken = steps;
                    res.stop_reason = StopReason::Stiff;
                    if (res.history.empty() || res.history.back().step != steps)
                        res.history.push_back({steps, t, dt, cur_loss, count_unsatisfied(delta)});
                    throw StiffnessError("train: dt underflow (stiff flow)", std::move(res));
                }
            }
        }
    }

    res.final_state = net;
    res.flow_time = t;
    res.final_loss = cur_loss;
    res.reached_zero = zero_loss();
    res.steps_taken = steps;
    res.stop_reason = reason;
    if (res.history.empty() || res.history.back().step != steps)
        res.history.push_back({steps, t, dt, cur_loss, count_unsatisfied(delta)});
    return res;
}

PreactShift preactivation_shift(const NetworkState& state_t, const NetworkState& state_0,
                                const Dataset& data) {
    if (!(state_t.arch == state_0.arch))
        throw std::invalid_argument("preactivation_shift: architectures differ");
    BatchCache ct, c0;
    forward_batch(state_t, data.X, ct);
    forward_batch(state_0, data.X, c0);
    PreactShift out;
    out.per_layer.reserve(ct.preacts.size());
    double hidden_sq = 0;
    Eigen::Index hidden_n = 0;
    for (std::size_t i = 0; i < ct.preacts.size(); ++i) {
        const double sq = (ct.preacts[i] - c0.preacts[i]).squaredNorm();
        const Eigen::Index n = ct.preacts[i].size();
        out.per_layer.push_back(std::sqrt(sq / static_cast<double>(n)));
        if (i + 1 < ct.preacts.size()) {  // hidden layers only
            hidden_sq += sq;
            hidden_n += n;
        }
    }
    out.aggregate = hidden_n > 0 ? std::sqrt(hidden_sq / static_cast<double>(hidden_n)) : 0.0;
    return out;
}

void write_history_csv(const std::string& path, const TrainResult& result) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_history_csv: cannot open " + path);
    f << "step,flow_time,dt,loss,n_delta\n";
    f.precision(17);
    for (const auto& r : result.history)
        f << r.step << "," << r.flow_time << "," << r.dt << "," << r.loss << "," << r.n_delta
          << "\n";
}

}  // namespace jamlab
