#include "jamlab/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace jamlab {

double test_error(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels) {
    if (predictions.size() == 0) throw std::invalid_argument("test_error: empty test set");
    if (predictions.size() != labels.size())
        throw std::invalid_argument("test_error: length mismatch");
    Eigen::Index wrong = 0;
    for (Eigen::Index i = 0; i < predictions.size(); ++i) {
        const double s = predictions[i] > 0 ? 1.0 : (predictions[i] < 0 ? -1.0 : 0.0);
        if (s != labels[i]) ++wrong;  // sign(0) never matches a +-1 label
    }
    return static_cast<double>(wrong) / static_cast<double>(predictions.size());
}

double ensemble_predict(const std::vector<PredictorModel>& models, const Eigen::VectorXd& x) {
    if (models.empty()) throw std::invalid_argument("ensemble_predict: no models");
    double s = 0;
    for (const auto& m : models) s += predict(m, x);
    return s / static_cast<double>(models.size());
}

PowerLawFit fit_power_law(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("fit_power_law: length mismatch");
    const int n = static_cast<int>(xs.size());
    if (n < 4) throw std::invalid_argument("fit_power_law: need at least 4 points");
    double mx = 0, my = 0;
    std::vector<double> lx(n), ly(n);
    for (int i = 0; i < n; ++i) {
        if (!(xs[i] > 0) || !(ys[i] > 0))
            throw std::invalid_argument("fit_power_law: nonpositive value");
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
        mx += lx[i];
        my += ly[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0, sxy = 0;
    for (int i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (sxx == 0) throw std::invalid_argument("fit_power_law: degenerate x values");
    const double slope = sxy / sxx;
    const double intercept = my - slope * mx;
    double ssr = 0;
    for (int i = 0; i < n; ++i) {
        const double r = ly[i] - (intercept + slope * lx[i]);
        ssr += r * r;
    }
    PowerLawFit fit;
    fit.exponent = -slope;
    fit.intercept = intercept;
    fit.stderr_exponent = std::sqrt(ssr / (n - 2) / sxx);
    fit.x_min = *std::min_element(xs.begin(), xs.end());
    fit.x_max = *std::max_element(xs.begin(), xs.end());
    fit.n_points = n;
    return fit;
}

EnsembleOutcome run_ensemble(int h, const Dataset& train_set, const Dataset& test_set,
                             const RunPlan& plan, int M, bool with_grams) {
    if (M < 1) throw std::invalid_argument("run_ensemble: M must be >= 1");
    NetworkArch arch;
    arch.input_dim = static_cast<int>(train_set.dim());
    arch.depth = plan.depth;
    arch.width = h;
    const std::int64_t N = param_count(arch);

    EnsembleOutcome out;
    out.h = h;
    out.alpha_tilde = plan.alpha_tilde;
    out.M = M;
    out.test_predictions.resize(M, test_set.size());
    out.final_states.resize(static_cast<std::size_t>(M));
    out.reached_zero.assign(static_cast<std::size_t>(M), false);

    std::vector<double> err(M), floss(M), ndfrac(M), ftime(M), kratio(M, 0.0);
    std::vector<char> stiff(M, 0);

    // Independent seeded runs; each writes only its own slot, so the result
    // is identical for any worker count.
#pragma omp parallel for schedule(dynamic)
    for (int m = 0; m < M; ++m) {
        const std::uint64_t seed = derive_seed(plan.base_seed, static_cast<std::uint64_t>(m));
        NetworkState net0 = init_network(arch, seed);
        GramMatrix g0;
        if (with_grams) g0 = gram(net0, train_set, GramSource::AtInit);
        PredictorModel model = make_predictor(std::move(net0), plan.alpha_tilde);
        TrainResult res;
        try {
            res = train(model, train_set, plan.spec, plan.cfg);
        } catch (const StiffnessError& e) {
            res = e.partial_result;
            stiff[m] = 1;
            model.net = res.final_state;
        }
        if (with_grams) {
            const GramMatrix g1 =
                gram(model.net, train_set, GramSource::PostTraining, res.flow_time);
            kratio[m] = kernel_change_ratio(g1, g0);
        }
        attach_dataset(model, test_set);
        const Eigen::VectorXd pred = predict_batch(model, test_set);
        out.test_predictions.row(m) = pred.transpose();
        err[m] = test_error(pred, test_set.y);
        floss[m] = res.final_loss;
        ndfrac[m] = res.history.empty()
                        ? 0.0
                        : static_cast<double>(res.history.back().n_delta) / static_cast<double>(N);
        ftime[m] = res.flow_time;
        out.final_states[static_cast<std::size_t>(m)] = res.final_state;
        out.reached_zero[static_cast<std::size_t>(m)] = res.reached_zero;
    }

    int jammed = 0;
    for (int m = 0; m < M; ++m) {
        out.mean_individual_error += err[m];
        out.mean_final_loss += floss[m];
        out.mean_n_delta_frac += ndfrac[m];
        out.mean_flow_time += ftime[m];
        out.mean_kernel_change_ratio += kratio[m];
        if (!out.reached_zero[static_cast<std::size_t>(m)]) ++jammed;
        if (stiff[m]) out.flagged = true;
    }
    out.mean_individual_error /= M;
    out.mean_final_loss /= M;
    out.mean_n_delta_frac /= M;
    out.mean_flow_time /= M;
    out.mean_kernel_change_ratio /= M;
    out.jammed_fraction = static_cast<double>(jammed) / M;
    out.ensemble_prediction = out.test_predictions.colwise().mean().transpose();
    out.ensemble_error = test_error(out.ensemble_prediction, test_set.y);
    return out;
}

SweepRecord to_record(const EnsembleOutcome& o, Eigen::Index P) {
    SweepRecord r;
    r.h = o.h;
    r.alpha_tilde = o.alpha_tilde;
    r.P = P;
    r.M = o.M;
    r.mean_individual_error = o.mean_individual_error;
    r.ensemble_error = o.ensemble_error;
    r.mean_final_loss = o.mean_final_loss;
    r.jammed_fraction = o.jammed_fraction;
    r.mean_kernel_change_ratio = o.mean_kernel_change_ratio;
    r.mean_n_delta_frac = o.mean_n_delta_frac;
    r.mean_flow_time = o.mean_flow_time;
    r.flagged = o.flagged;
    return r;
}

std::vector<SweepRecord> sweep_phase_diagram(const std::vector<int>& h_grid,
                                             const std::vector<double>& alpha_grid,
                                             const Dataset& train, const Dataset& test,
                                             const RunPlan& plan, int M, bool with_grams,
                                             bool verbose) {
    if (h_grid.empty() || alpha_grid.empty())
        throw std::invalid_argument("sweep_phase_diagram: empty grid");
    std::vector<SweepRecord> records;
    records.reserve(h_grid.size() * alpha_grid.size());
    for (std::size_t i = 0; i < h_grid.size(); ++i) {
        for (std::size_t j = 0; j < alpha_grid.size(); ++j) {
            RunPlan p = plan;
            p.alpha_tilde = alpha_grid[j];
            p.base_seed = derive_seed(plan.base_seed, i, j);
            EnsembleOutcome o = run_ensemble(h_grid[i], train, test, p, M, with_grams);
            records.push_back(to_record(o, train.size()));
            if (verbose) {
                const auto& r = records.back();
                std::fprintf(stderr,
                             "[sweep] h=%d alpha_tilde=%.3g jammed=%.2f dTheta=%.3g eps=%.3f "
                             "eps_ens=%.3f%s\n",
                             r.h, r.alpha_tilde, r.jammed_fraction, r.mean_kernel_change_ratio,
                             r.mean_individual_error, r.ensemble_error,
                             r.flagged ? " [flagged]" : "");
            }
        }
    }
    return records;
}

std::vector<DoubleDescentPoint> double_descent_curve(const std::vector<int>& h_grid,
                                                     const Dataset& train, const Dataset& test,
                                                     const RunPlan& plan, int M, bool verbose) {
    std::vector<DoubleDescentPoint> points;
    points.reserve(h_grid.size());
    for (std::size_t i = 0; i < h_grid.size(); ++i) {
        RunPlan p = plan;
        p.base_seed = derive_seed(plan.base_seed, i, 0xddULL);
        EnsembleOutcome o = run_ensemble(h_grid[i], train, test, p, M, false);
        NetworkArch arch;
        arch.input_dim = static_cast<int>(train.dim());
        arch.depth = plan.depth;
        arch.width = h_grid[i];
        points.push_back({h_grid[i], param_count(arch), o.mean_individual_error, o.ensemble_error,
                          o.jammed_fraction, o.flagged});
        if (verbose)
            std::fprintf(stderr, "[dd] h=%d eps=%.4f eps_ens=%.4f jammed=%.2f\n", h_grid[i],
                         o.mean_individual_error, o.ensemble_error, o.jammed_fraction);
    }
    return points;
}

FluctuationResult measure_fluctuations(const std::vector<int>& h_list, int M,
                                       const Dataset& train, const Dataset& test,
                                       const RunPlan& plan, bool verbose) {
    if (M < 4) throw std::invalid_argument("measure_fluctuations: need M >= 4");
    FluctuationResult result;
    std::vector<double> ns, fl;
    for (std::size_t i = 0; i < h_list.size(); ++i) {
        RunPlan p = plan;
        p.base_seed = derive_seed(plan.base_seed, i, 0xf1ULL);
        EnsembleOutcome o = run_ensemble(h_list[i], train, test, p, M, false);
        NetworkArch arch;
        arch.input_dim = static_cast<int>(train.dim());
        arch.depth = plan.depth;
        arch.width = h_list[i];
        FluctuationPoint pt;
        pt.h = h_list[i];
        pt.N = param_count(arch);
        // RMS over seeds and test inputs of f_m(x) - <f>(x).
        const Eigen::MatrixXd centered =
            o.test_predictions.rowwise() - o.ensemble_prediction.transpose();
        pt.fluctuation = std::sqrt(centered.squaredNorm() /
                                   static_cast<double>(centered.rows() * centered.cols()));
        pt.valid = o.jammed_fraction == 0.0 && !o.flagged;
        if (pt.valid) {
            ns.push_back(static_cast<double>(pt.N));
            fl.push_back(pt.fluctuation);
        }
        result.points.push_back(pt);
        if (verbose)
            std::fprintf(stderr, "[fluct] h=%d N=%lld fluct=%.5g valid=%d\n", pt.h,
                         static_cast<long long>(pt.N), pt.fluctuation, pt.valid ? 1 : 0);
    }
    if (ns.size() >= 4) result.fit = fit_power_law(ns, fl);
    return result;
}

int learning_curve_width(Eigen::Index P) {
    return std::max(64, static_cast<int>(std::ceil(4.0 * std::sqrt(static_cast<double>(P)))));
}

LearningCurveResult learning_curve(const std::vector<Eigen::Index>& P_list,
                                   const std::function<Dataset(Eigen::Index, std::uint64_t)>& gen,
                                   const Dataset& test, const RunPlan& plan, int M, bool verbose) {
    LearningCurveResult result;
    std::vector<double> ps, es;
    for (std::size_t i = 0; i < P_list.size(); ++i) {
        const Eigen::Index P = P_list[i];
        const Dataset train = gen(P, derive_seed(plan.base_seed, static_cast<std::uint64_t>(P), 0x9dULL));
        RunPlan p = plan;
        p.base_seed = derive_seed(plan.base_seed, static_cast<std::uint64_t>(P), 0x1cULL);
        const int h = learning_curve_width(P);
        EnsembleOutcome o = run_ensemble(h, train, test, p, M, false);
        LearningCurvePoint pt;
        pt.P = P;
        pt.h = h;
        pt.ensemble_error = o.ensemble_error;
        pt.mean_individual_error = o.mean_individual_error;
        pt.flagged = o.jammed_fraction > 0.0 || o.flagged;
        if (!pt.flagged && pt.ensemble_error > 0) {
            ps.push_back(static_cast<double>(P));
            es.push_back(pt.ensemble_error);
        }
        result.points.push_back(pt);
        if (verbose)
            std::fprintf(stderr, "[curve] P=%lld h=%d eps_ens=%.5f%s\n", static_cast<long long>(P),
                         h, pt.ensemble_error, pt.flagged ? " [flagged]" : "");
    }
    if (ps.size() >= 4) result.fit = fit_power_law(ps, es);
    return result;
}

double measure_compression(const NetworkState& net, int d_parallel) {
    if (net.arch.depth != 1)
        throw std::invalid_argument("measure_compression: needs exactly one hidden layer");
    const int d = net.arch.input_dim;
    if (d_parallel < 1 || d_parallel >= d)
        throw std::invalid_argument("measure_compression: need 1 <= d_parallel < d");
    const Eigen::MatrixXd& W1 = net.params.W[0];  // h x d
    const double par = W1.leftCols(d_parallel).squaredNorm() /
                       static_cast<double>(W1.rows() * d_parallel);
    const double perp = W1.rightCols(d - d_parallel).squaredNorm() /
                        static_cast<double>(W1.rows() * (d - d_parallel));
    return std::sqrt(par / perp);
}

CompressionResult compression_curve(const std::vector<Eigen::Index>& P_list,
                                    const std::function<Dataset(Eigen::Index, std::uint64_t)>& gen,
                                    const Dataset& test, const RunPlan& plan, int M, bool verbose) {
    CompressionResult result;
    std::vector<double> ps, ls;
    for (std::size_t i = 0; i < P_list.size(); ++i) {
        const Eigen::Index P = P_list[i];
        const Dataset train = gen(P, derive_seed(plan.base_seed, static_cast<std::uint64_t>(P), 0xc0ULL));
        RunPlan p = plan;
        p.depth = 1;
        p.base_seed = derive_seed(plan.base_seed, static_cast<std::uint64_t>(P), 0xc1ULL);
        EnsembleOutcome o = run_ensemble(learning_curve_width(P), train, test, p, M, false);
        CompressionPoint pt;
        pt.P = P;
        double acc = 0;
        for (const auto& st : o.final_states) acc += measure_compression(st, train.d_parallel);
        pt.lambda = acc / static_cast<double>(o.final_states.size());
        pt.flagged = o.jammed_fraction > 0.0 || o.flagged;
        if (!pt.flagged) {
            ps.push_back(static_cast<double>(P));
            ls.push_back(pt.lambda);
        }
        result.points.push_back(pt);
        if (verbose)
            std::fprintf(stderr, "[compress] P=%lld Lambda=%.4f%s\n", static_cast<long long>(P),
                         pt.lambda, pt.flagged ? " [flagged]" : "");
    }
    if (ps.size() >= 4) result.fit = fit_power_law(ps, ls);
    return result;
}

EquivalenceResult compression_equivalence(const Dataset& train, const Dataset& test,
                                          const RunPlan& feature_plan, const RunPlan& lazy_plan,
                                          int M, bool verbose) {
    EquivalenceResult out;
    RunPlan fp = feature_plan;
    fp.depth = 1;
    RunPlan lp = lazy_plan;
    lp.depth = 1;
    const int h = learning_curve_width(train.size());

    EnsembleOutcome feat = run_ensemble(h, train, test, fp, M, false);
    out.feature_error_raw = feat.ensemble_error;
    double acc = 0;
    for (const auto& st : feat.final_states) acc += measure_compression(st, train.d_parallel);
    out.lambda = acc / static_cast<double>(feat.final_states.size());

    EnsembleOutcome lazy_raw = run_ensemble(h, train, test, lp, M, false);
    out.lazy_error_raw = lazy_raw.ensemble_error;

    const Dataset ctrain = compress(train, out.lambda);
    const Dataset ctest = compress(test, out.lambda);
    EnsembleOutcome lazy_c = run_ensemble(h, ctrain, ctest, lp, M, false);
    out.lazy_error_compressed = lazy_c.ensemble_error;

    if (verbose)
        std::fprintf(stderr,
                     "[equiv] Lambda=%.3f feature_raw=%.4f lazy_raw=%.4f lazy_compressed=%.4f\n",
                     out.lambda, out.feature_error_raw, out.lazy_error_raw,
                     out.lazy_error_compressed);
    return out;
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRecord>& records) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_sweep_csv: cannot open " + path);
    f << "h,alpha_tilde,P,M,mean_individual_error,ensemble_error,mean_final_loss,"
         "jammed_fraction,mean_kernel_change_ratio,mean_n_delta_frac,mean_flow_time,flagged\n";
    f.precision(17);
    for (const auto& r : records)
        f << r.h << "," << r.alpha_tilde << "," << r.P << "," << r.M << ","
          << r.mean_individual_error << "," << r.ensemble_error << "," << r.mean_final_loss << ","
          << r.jammed_fraction << "," << r.mean_kernel_change_ratio << "," << r.mean_n_delta_frac
          << "," << r.mean_flow_time << "," << (r.flagged ? 1 : 0) << "\n";
}

void write_double_descent_csv(const std::string& path,
                              const std::vector<DoubleDescentPoint>& points) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_double_descent_csv: cannot open " + path);
    f << "h,N,mean_individual_error,ensemble_error,jammed_fraction,flagged\n";
    f.precision(17);
    for (const auto& p : points)
        f << p.h << "," << p.N << "," << p.mean_individual_error << "," << p.ensemble_error << ","
          << p.jammed_fraction << "," << (p.flagged ? 1 : 0) << "\n";
}

void write_fluctuations_csv(const std::string& path, const FluctuationResult& result) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_fluctuations_csv: cannot open " + path);
    f << "h,N,fluctuation,valid\n";
    f.precision(17);
    for (const auto& p : result.points)
        f << p.h << "," << p.N << "," << p.fluctuation << "," << (p.valid ? 1 : 0) << "\n";
}

void write_learning_curve_csv(const std::string& path, const LearningCurveResult& result) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_learning_curve_csv: cannot open " + path);
    f << "P,h,ensemble_error,mean_individual_error,flagged\n";
    f.precision(17);
    for (const auto& p : result.points)
        f << p.P << "," << p.h << "," << p.ensemble_error << "," << p.mean_individual_error << ","
          << (p.flagged ? 1 : 0) << "\n";
}

void write_compression_csv(const std::string& path, const CompressionResult& result) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_compression_csv: cannot open " + path);
    f << "P,lambda,flagged\n";
    f.precision(17);
    for (const auto& p : result.points)
        f << p.P << "," << p.lambda << "," << (p.flagged ? 1 : 0) << "\n";
}

}  // namespace jamlab
