#include "jamlab/landscape.hpp"

#include <cmath>
#include <fstream>
#include <map>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace jamlab {

namespace {

// Location of flat coordinate j inside a network's parameter blocks
// (canonical layout: per layer, row-major W then B).
double* flat_entry(NetworkState& net, Eigen::Index j) {
    for (std::size_t i = 0; i < net.params.W.size(); ++i) {
        auto& w = net.params.W[i];
        if (j < w.size()) return &w(j / w.cols(), j % w.cols());
        j -= w.size();
        if (j < net.params.B[i].size()) return &net.params.B[i][j];
        j -= net.params.B[i].size();
    }
    throw std::out_of_range("flat_entry: index beyond parameter count");
}

Eigen::VectorXd active_margins(const PredictorModel& model, const Dataset& data) {
    return margins_from_outputs(predict_batch(model, data), data.y, 1.0);
}

}  // namespace

double landscape_energy(const PredictorModel& model, const Dataset& data) {
    const Eigen::VectorXd delta = active_margins(model, data);
    double u = 0;
    for (Eigen::Index i = 0; i < delta.size(); ++i)
        if (delta[i] > 0) u += delta[i] * delta[i];
    return 0.5 * u;
}

Eigen::VectorXd landscape_gradient(const PredictorModel& model, const Dataset& data) {
    BatchCache cache;
    forward_batch(model.net, data.X, cache);
    const Eigen::VectorXd f = predict_from_cache(model, data, cache);
    const Eigen::VectorXd delta = margins_from_outputs(f, data.y, 1.0);
    Eigen::VectorXd coef = Eigen::VectorXd::Zero(data.size());
    for (Eigen::Index i = 0; i < delta.size(); ++i)
        if (delta[i] > 0) coef[i] = delta[i] * (-data.y[i]) * model.alpha;
    ParamBlocks g = ParamBlocks::zeros(model.net.arch);
    accumulate_weighted_gradients(model.net, data.X, cache, coef, g);
    NetworkState holder;
    holder.arch = model.net.arch;
    holder.params = std::move(g);
    return holder.flatten();
}

HessianParts hessian_parts(const PredictorModel& model, const Dataset& data,
                           Eigen::Index dense_limit) {
    const Eigen::Index N = param_count(model.net.arch);
    if (N > dense_limit)
        throw std::invalid_argument(
            "hessian_parts: N exceeds dense_limit; use hvp with lanczos_spectrum instead");

    const Eigen::VectorXd delta = active_margins(model, data);
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < delta.size(); ++i)
        if (delta[i] > 0) active.push_back(i);

    HessianParts parts;
    parts.H0 = Eigen::MatrixXd::Zero(N, N);
    parts.Hp = Eigen::MatrixXd::Zero(N, N);
    if (active.empty()) return parts;

    const Eigen::Index A = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd Xa(A, data.dim());
    Eigen::VectorXd wa(A);  // frozen FD weights: Delta_mu * (-y_mu) * alpha
    for (Eigen::Index k = 0; k < A; ++k) {
        Xa.row(k) = data.X.row(active[static_cast<std::size_t>(k)]);
        const Eigen::Index mu = active[static_cast<std::size_t>(k)];
        wa[k] = delta[mu] * (-data.y[mu]) * model.alpha;
    }

    // H0 = sum grad Delta outer grad Delta, grad Delta = -y alpha grad f~.
    {
        Eigen::MatrixXd G(A, N);
        gradient_rows(model.net, Xa, G);
        for (Eigen::Index k = 0; k < A; ++k) {
            const Eigen::Index mu = active[static_cast<std::size_t>(k)];
            G.row(k) *= -data.y[mu] * model.alpha;
        }
        parts.H0.noalias() = G.transpose() * G;
    }

    // Hp column j = central FD in flat coordinate j of the frozen-weight
    // gradient sum g_w(theta) = sum_mu w_mu' grad f~(x_mu), w' = wa.
    const double eps = 1e-4;
    // Columns are independent; each thread owns a perturbable copy.
#pragma omp parallel
    {
        NetworkState pert = model.net;
        BatchCache cache;
        ParamBlocks acc = ParamBlocks::zeros(model.net.arch);
        NetworkState holder;
        holder.arch = model.net.arch;

        auto weighted_grad = [&](Eigen::VectorXd& out) {
            forward_batch(pert, Xa, cache);
            acc.set_zero();
            accumulate_weighted_gradients(pert, Xa, cache, wa, acc);
            holder.params = acc;
            out = holder.flatten();
        };

        Eigen::VectorXd gp(N), gm(N);
#pragma omp for schedule(dynamic, 16)
        for (Eigen::Index j = 0; j < N; ++j) {
            double* entry = flat_entry(pert, j);
            const double saved = *entry;
            *entry = saved + eps;
            weighted_grad(gp);
            *entry = saved - eps;
            weighted_grad(gm);
            *entry = saved;
            parts.Hp.col(j) = (gp - gm) / (2 * eps);
        }
    }
    parts.Hp = ((parts.Hp + parts.Hp.transpose()) / 2.0).eval();
    return parts;
}

Eigen::VectorXd hvp(const PredictorModel& model, const Dataset& data, const Eigen::VectorXd& v) {
    const double vnorm = v.norm();
    if (vnorm == 0) throw std::invalid_argument("hvp: zero direction");
    const Eigen::VectorXd theta = model.net.flatten();
    if (v.size() != theta.size()) throw std::invalid_argument("hvp: direction length mismatch");
    const double tnorm = theta.norm();
    const double eps = 1e-5 * (tnorm > 0 ? tnorm : 1.0) / vnorm;

    PredictorModel pert = model;
    pert.net = NetworkState::unflatten(model.net.arch, theta + eps * v, model.net.seed);
    const Eigen::VectorXd gp = landscape_gradient(pert, data);
    pert.net = NetworkState::unflatten(model.net.arch, theta - eps * v, model.net.seed);
    const Eigen::VectorXd gm = landscape_gradient(pert, data);
    return (gp - gm) / (2 * eps);
}

SpectrumSummary spectrum_summary(const Eigen::MatrixXd& H) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("spectrum_summary: eigensolver failed");
    SpectrumSummary s;
    s.spectrum = es.eigenvalues();  // ascending
    s.lambda_max = s.spectrum.size() ? s.spectrum.cwiseAbs().maxCoeff() : 0.0;
    const double thresh = 1e-8 * s.lambda_max;
    s.has_gap = false;
    s.spectral_gap = 0;
    for (Eigen::Index i = 0; i < s.spectrum.size(); ++i) {
        const double lam = s.spectrum[i];
        if (std::abs(lam) < thresh || s.lambda_max == 0) {
            ++s.zero_mode_count;
        } else if (lam > thresh && !s.has_gap) {
            s.spectral_gap = lam;
            s.has_gap = true;
        }
    }
    return s;
}

SpectrumSummary lanczos_spectrum(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& op,
                                 Eigen::Index n, int steps, std::uint64_t seed) {
    const int m = static_cast<int>(std::min<Eigen::Index>(steps, n));
    Eigen::MatrixXd Q(n, m + 1);
    Eigen::VectorXd alpha(m), beta(m);
    Rng rng(derive_seed(seed, 0x1a2cULL));
    Eigen::VectorXd q(n);
    for (Eigen::Index i = 0; i < n; ++i) q[i] = draw_normal(rng);
    q.normalize();
    Q.col(0) = q;

    int k = 0;
    bool breakdown = false;
    for (; k < m; ++k) {
        Eigen::VectorXd w = op(Q.col(k));
        alpha[k] = Q.col(k).dot(w);
        w -= alpha[k] * Q.col(k);
        if (k > 0) w -= beta[k - 1] * Q.col(k - 1);
        // Full reorthogonalization: cheap at m <= 200 and it keeps spurious
        // eigenvalue copies out of the Ritz set.
        w -= Q.leftCols(k + 1) * (Q.leftCols(k + 1).transpose() * w);
        beta[k] = w.norm();
        if (beta[k] < 1e-12 * std::max(1.0, std::abs(alpha[k]))) {
            breakdown = true;  // invariant subspace found: spectrum is exact
            ++k;
            break;
        }
        Q.col(k + 1) = w / beta[k];
    }

    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
    for (int i = 0; i < k; ++i) {
        T(i, i) = alpha[i];
        if (i + 1 < k) T(i, i + 1) = T(i + 1, i) = beta[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    if (es.info() != Eigen::Success) throw std::runtime_error("lanczos_spectrum: solver failed");

    SpectrumSummary s;
    s.spectrum = es.eigenvalues();
    s.lambda_max = s.spectrum.size() ? s.spectrum.cwiseAbs().maxCoeff() : 0.0;
    const double thresh = 1e-8 * s.lambda_max;
    for (Eigen::Index i = 0; i < s.spectrum.size(); ++i) {
        const double lam = s.spectrum[i];
        if (std::abs(lam) < thresh || s.lambda_max == 0) {
            ++s.zero_mode_count;
        } else if (lam > thresh && !s.has_gap) {
            s.spectral_gap = lam;
            s.has_gap = true;
        }
    }
    if (breakdown) {
        s.converged = true;
    } else {
        // Residual of the extremal Ritz pair: |beta_k * last component|.
        Eigen::Index which;
        es.eigenvalues().cwiseAbs().maxCoeff(&which);
        const double resid = std::abs(beta[k - 1] * es.eigenvectors()(k - 1, which));
        s.converged = resid <= 1e-6 * std::max(1.0, s.lambda_max);
    }
    return s;
}

double predictor_norm(const PredictorModel& model, const Eigen::MatrixXd& X) {
    if (!model.init_copy)
        throw std::runtime_error("predictor_norm: requires the frozen init copy");
    BatchCache now, init;
    forward_batch(model.net, X, now);
    forward_batch(*model.init_copy, X, init);
    const Eigen::VectorXd f = model.alpha * (now.outputs() - init.outputs());
    return std::sqrt(f.squaredNorm() / static_cast<double>(f.size()));
}

LandscapeReport analyze_landscape(const PredictorModel& model, const Dataset& data,
                                  const Eigen::MatrixXd* test_inputs, Eigen::Index dense_limit) {
    LandscapeReport rep;
    const Eigen::VectorXd delta = active_margins(model, data);
    rep.n_delta = count_unsatisfied(delta);
    rep.n_params = param_count(model.net.arch);
    rep.n_delta_frac = static_cast<double>(rep.n_delta) / static_cast<double>(rep.n_params);

    HessianParts parts = hessian_parts(model, data, dense_limit);

    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es0(parts.H0);
        if (es0.info() != Eigen::Success)
            throw std::runtime_error("analyze_landscape: H0 eigensolver failed");
        const double lmax0 = es0.eigenvalues().size() ? es0.eigenvalues().cwiseAbs().maxCoeff() : 0.0;
        const double thresh0 = 1e-8 * lmax0;
        for (Eigen::Index i = 0; i < es0.eigenvalues().size(); ++i)
            if (es0.eigenvalues()[i] > thresh0 && lmax0 > 0) ++rep.h0_rank;
    }
    SpectrumSummary s = spectrum_summary(parts.H0 + parts.Hp);
    rep.zero_mode_count = s.zero_mode_count;
    rep.spectral_gap = s.spectral_gap;
    rep.has_gap = s.has_gap;
    rep.zero_threshold = 1e-8 * s.lambda_max;
    rep.spectrum = std::move(s.spectrum);

    {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esp(parts.Hp);
        if (esp.info() != Eigen::Success)
            throw std::runtime_error("analyze_landscape: Hp eigensolver failed");
        // Negative directions are counted at the resolution of the full
        // spectrum. Near satisfaction Hp shrinks with the margins and its
        // entries fall below finite-difference noise; its own largest
        // eigenvalue is then noise too, and thresholding against it would
        // count sign flips of an effectively zero matrix.
        for (Eigen::Index i = 0; i < esp.eigenvalues().size(); ++i)
            if (esp.eigenvalues()[i] < -rep.zero_threshold) ++rep.hp_negative_count;
    }

    if (test_inputs) rep.predictor_norm = predictor_norm(model, *test_inputs);
    return rep;
}

BoundsCheck check_bounds(const LandscapeReport& report) {
    BoundsCheck b;
    b.upper = report.n_delta <= report.n_params;
    b.lower = report.n_delta >= report.hp_negative_count;
    return b;
}

namespace {

struct ProbeDetail {
    JammingProbe summary;
    // (seed_index, final state) of the first run on each side of the vote.
    std::optional<std::pair<int, NetworkState>> first_fit;
    std::optional<std::pair<int, NetworkState>> first_nonfit;
};

NetworkArch arch_for(const Dataset& data, const JammingScanConfig& scan, int h) {
    NetworkArch arch;
    arch.input_dim = static_cast<int>(data.dim());
    arch.depth = scan.depth;
    arch.width = h;
    return arch;
}

ProbeDetail probe_detail(const Dataset& data, const LossSpec& spec, const FlowConfig& cfg,
                         const JammingScanConfig& scan, int h,
                         std::vector<JammingRunRecord>* runs) {
    const NetworkArch arch = arch_for(data, scan, h);
    const int R = scan.repeats;
    std::vector<TrainResult> results(static_cast<std::size_t>(R));
    std::vector<char> ok(static_cast<std::size_t>(R), 0);

    // Seeds are a pure function of (base_seed, h, r): probes are reproducible
    // independent of visit order and worker count.
#pragma omp parallel for schedule(dynamic)
    for (int r = 0; r < R; ++r) {
        NetworkState net = init_network(arch, derive_seed(scan.base_seed, static_cast<std::uint64_t>(h),
                                                          static_cast<std::uint64_t>(r)));
        PredictorModel model = make_predictor(std::move(net), scan.alpha_tilde);
        try {
            results[static_cast<std::size_t>(r)] = train(model, data, spec, cfg);
        } catch (const StiffnessError& e) {
            results[static_cast<std::size_t>(r)] = e.partial_result;
        }
        ok[static_cast<std::size_t>(r)] = 1;
    }

    ProbeDetail out;
    out.summary.h = h;
    for (int r = 0; r < R; ++r) {
        const TrainResult& res = results[static_cast<std::size_t>(r)];
        if (res.reached_zero) {
            ++out.summary.fit_votes;
            if (!out.first_fit) out.first_fit = {r, res.final_state};
        } else if (!out.first_nonfit) {
            out.first_nonfit = {r, res.final_state};
        }
        if (runs) {
            JammingRunRecord rec;
            rec.P = data.size();
            rec.h = h;
            rec.N = param_count(arch);
            rec.seed_index = r;
            rec.reached_zero = res.reached_zero;
            rec.n_delta = res.history.empty() ? 0 : res.history.back().n_delta;
            rec.n_delta_frac = static_cast<double>(rec.n_delta) / static_cast<double>(rec.N);
            rec.flow_time = res.flow_time;
            rec.stop_reason = res.stop_reason;
            runs->push_back(rec);
        }
    }
    out.summary.jammed = 2 * out.summary.fit_votes <= R;
    return out;
}

LandscapeReport analyze_state(const Dataset& data, const JammingScanConfig& scan, int h,
                              int seed_index, const NetworkState& final_state) {
    NetworkState init = init_network(arch_for(data, scan, h),
                                     derive_seed(scan.base_seed, static_cast<std::uint64_t>(h),
                                                 static_cast<std::uint64_t>(seed_index)));
    PredictorModel model = make_predictor(std::move(init), scan.alpha_tilde);
    attach_dataset(model, data);
    model.net = final_state;
    return analyze_landscape(model, data, nullptr, scan.dense_limit);
}

}  // namespace

JammingProbe jamming_probe(const Dataset& data, const LossSpec& spec, const FlowConfig& cfg,
                           const JammingScanConfig& scan, int h,
                           std::vector<JammingRunRecord>* runs) {
    return probe_detail(data, spec, cfg, scan, h, runs).summary;
}

JammingResult locate_jamming(const Dataset& data, const LossSpec& spec, const FlowConfig& cfg,
                             const JammingScanConfig& scan) {
    JammingResult result;
    std::map<int, ProbeDetail> cache;
    auto probe = [&](int h) -> ProbeDetail& {
        auto it = cache.find(h);
        if (it == cache.end()) {
            it = cache.emplace(h, probe_detail(data, spec, cfg, scan, h, &result.runs)).first;
            result.probes.push_back(it->second.summary);
        }
        return it->second;
    };

    int lo = std::max(1, scan.h_lo);
    int hi = std::max(lo, scan.h_hi);

    // Grow the bracket downward until a jammed width is found (or h = 1 fits);
    // every width probed fitting on the way down tightens the upper bracket.
    while (!probe(lo).summary.jammed && lo > 1) {
        hi = lo;
        lo = std::max(1, lo / 2);
    }
    if (!probe(lo).summary.jammed) {
        // Nothing jams in range: the smallest width already fits.
        result.conclusive = true;
        result.h_star = lo;
        result.n_star = param_count(arch_for(data, scan, lo));
        result.h_jammed = 0;
        result.note = "no jammed width in scanned range";
        const auto& d = probe(lo);
        if (scan.analyze_sides && d.first_fit &&
            param_count(arch_for(data, scan, lo)) <= scan.dense_limit)
            result.report_fitting = analyze_state(data, scan, lo, d.first_fit->first,
                                                  d.first_fit->second);
        return result;
    }

    // Grow upward until a fitting width is found.
    if (hi <= lo) hi = lo + 1;
    while (probe(hi).summary.jammed) {
        if (hi >= scan.h_cap) {
            result.conclusive = false;
            result.h_jammed = hi;
            result.note = "bracket not closed: still jammed at h_cap";
            return result;
        }
        hi = std::min(scan.h_cap, hi * 2);
    }

    while (hi - lo > 1) {
        const int mid = lo + (hi - lo) / 2;
        if (probe(mid).summary.jammed)
            lo = mid;
        else
            hi = mid;
    }

    result.conclusive = true;
    result.h_star = hi;
    result.h_jammed = lo;
    result.n_star = param_count(arch_for(data, scan, hi));

    if (scan.analyze_sides) {
        const auto& dj = probe(lo);
        if (dj.first_nonfit && param_count(arch_for(data, scan, lo)) <= scan.dense_limit)
            result.report_jammed =
                analyze_state(data, scan, lo, dj.first_nonfit->first, dj.first_nonfit->second);
        const auto& df = probe(hi);
        if (df.first_fit && param_count(arch_for(data, scan, hi)) <= scan.dense_limit)
            result.report_fitting =
                analyze_state(data, scan, hi, df.first_fit->first, df.first_fit->second);
    }
    return result;
}

void write_spectrum_csv(const std::string& path, const Eigen::VectorXd& spectrum) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_spectrum_csv: cannot open " + path);
    f << "index,eigenvalue\n";
    f.precision(17);
    for (Eigen::Index i = 0; i < spectrum.size(); ++i) f << i << "," << spectrum[i] << "\n";
}

void write_jamming_csv(const std::string& path, const std::vector<JammingRunRecord>& runs) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_jamming_csv: cannot open " + path);
    f << "P,h,N,reached_zero,N_delta,N_delta_over_N,flow_time\n";
    f.precision(17);
    for (const auto& r : runs)
        f << r.P << "," << r.h << "," << r.N << "," << (r.reached_zero ? 1 : 0) << "," << r.n_delta
          << "," << r.n_delta_frac << "," << r.flow_time << "\n";
}

}  // namespace jamlab
