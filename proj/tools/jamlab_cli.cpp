// Command-line driver: each subcommand materializes datasets and a run plan
// from a JSON config, executes one experiment family, and writes CSV results
// plus a JSON manifest (config hash, build id, wall time) into the output
// directory. Exit codes: 0 clean, 2 finished with flagged/partial records,
// 1 fatal.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "jamlab/config.hpp"
#include "jamlab/experiments.hpp"
#include "jamlab/io.hpp"
#include "jamlab/landscape.hpp"
#include "jamlab/ntk.hpp"
#include "jamlab/plot.hpp"

namespace {

using namespace jamlab;

struct Overrides {
    std::string config_path;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
};

ExperimentConfig load_with_overrides(const Overrides& ov) {
    ExperimentConfig cfg = load_config(ov.config_path);
    if (ov.seed_set) {
        cfg.base_seed = ov.seed;
        cfg.data_seed = derive_seed(ov.seed, 0x5eedULL);
    }
    if (!ov.out.empty()) cfg.out_dir = ov.out;
    if (ov.workers > 0) {
#ifdef _OPENMP
        omp_set_num_threads(ov.workers);
#endif
    }
    std::filesystem::create_directories(cfg.out_dir);
    return cfg;
}

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

std::string fmt_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

void finish(const char* command, const Overrides& ov, const ExperimentConfig& cfg,
            std::chrono::steady_clock::time_point start, int code) {
    RunManifest m;
    m.command = command;
    m.config_path = ov.config_path;
    m.config_hash = file_hash(ov.config_path);
    m.build_id = build_id();
    m.seed = cfg.base_seed;
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    m.exit_code = code;
    m.out_dir = cfg.out_dir;
    write_manifest(join(cfg.out_dir, "manifest.json"), m);
}

std::function<Dataset(Eigen::Index, std::uint64_t)> stripe_generator(const ExperimentConfig& cfg) {
    const int d = cfg.d, dp = cfg.d_parallel;
    const std::vector<double> bnd = cfg.boundaries;
    return [d, dp, bnd](Eigen::Index P, std::uint64_t seed) { return gen_stripe(P, d, dp, bnd, seed); };
}

int cmd_sweep(const Overrides& ov) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig cfg = load_with_overrides(ov);
    SplitDataset data = make_datasets(cfg);
    RunPlan plan = make_plan(cfg);
    std::vector<SweepRecord> records =
        sweep_phase_diagram(cfg.h_grid, cfg.alpha_grid, data.train, data.test, plan, cfg.M, true, true);
    write_sweep_csv(join(cfg.out_dir, "sweep.csv"), records);

    if (cfg.plots) {
        const int rows = static_cast<int>(cfg.alpha_grid.size());
        const int cols = static_cast<int>(cfg.h_grid.size());
        std::vector<double> err(records.size()), ker(records.size());
        // records arrive h-major; the heatmap wants alpha rows bottom-up
        for (std::size_t i = 0; i < cfg.h_grid.size(); ++i)
            for (std::size_t j = 0; j < cfg.alpha_grid.size(); ++j) {
                err[j * cols + i] = records[i * rows + j].ensemble_error;
                ker[j * cols + i] = records[i * rows + j].mean_kernel_change_ratio;
            }
        std::vector<std::string> row_labels, col_labels;
        for (double a : cfg.alpha_grid) row_labels.push_back(fmt_g(a));
        for (int h : cfg.h_grid) col_labels.push_back(std::to_string(h));
        AxesSpec axes;
        axes.xlabel = "h";
        axes.ylabel = "alpha~";
        axes.title = "ensemble test error";
        write_svg_heatmap(join(cfg.out_dir, "sweep_error.svg"), err, rows, cols, row_labels,
                          col_labels, axes);
        axes.title = "kernel change ratio";
        write_svg_heatmap(join(cfg.out_dir, "sweep_kernel.svg"), ker, rows, cols, row_labels,
                          col_labels, axes);
    }

    int code = 0;
    for (const auto& r : records)
        if (r.flagged) code = 2;
    std::printf("sweep: %zu cells, exit %d\n", records.size(), code);
    finish("sweep", ov, cfg, start, code);
    return code;
}

int cmd_jamming(const Overrides& ov) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig cfg = load_with_overrides(ov);
    SplitDataset data = make_datasets(cfg);
    JammingScanConfig scan;
    scan.h_lo = cfg.h_lo;
    scan.h_hi = cfg.h_hi;
    scan.repeats = cfg.repeats;
    scan.base_seed = cfg.base_seed;
    scan.alpha_tilde = cfg.alpha_tilde;
    scan.depth = cfg.depth;
    JammingResult res = locate_jamming(data.train, cfg.loss, cfg.flow, scan);
    write_jamming_csv(join(cfg.out_dir, "jamming_runs.csv"), res.runs);
    if (res.report_jammed)
        write_spectrum_csv(join(cfg.out_dir, "spectrum_jammed.csv"), res.report_jammed->spectrum);
    if (res.report_fitting)
        write_spectrum_csv(join(cfg.out_dir, "spectrum_fitting.csv"), res.report_fitting->spectrum);

    const int code = res.conclusive ? 0 : 2;
    std::printf("jamming: conclusive=%d h*=%d N*=%lld h_jammed=%d (%s)\n", res.conclusive, res.h_star,
                static_cast<long long>(res.n_star), res.h_jammed, res.note.c_str());
    finish("jamming", ov, cfg, start, code);
    return code;
}

int cmd_double_descent(const Overrides& ov) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig cfg = load_with_overrides(ov);
    SplitDataset data = make_datasets(cfg);
    RunPlan plan = make_plan(cfg);
    std::vector<DoubleDescentPoint> pts =
        double_descent_curve(cfg.h_grid, data.train, data.test, plan, cfg.M, true);
    write_double_descent_csv(join(cfg.out_dir, "double_descent.csv"), pts);

    if (cfg.plots) {
        Series ind, ens;
        ind.label = "individual";
        ens.label = "ensemble";
        ens.color = "#d29922";
        for (const auto& p : pts) {
            ind.x.push_back(static_cast<double>(p.N));
            ind.y.push_back(p.mean_individual_error);
            ens.x.push_back(static_cast<double>(p.N));
            ens.y.push_back(p.ensemble_error);
        }
        AxesSpec axes;
        axes.title = "double descent";
        axes.xlabel = "N";
        axes.ylabel = "test error";
        axes.logx = true;
        write_svg_plot(join(cfg.out_dir, "double_descent.svg"), {ind, ens}, axes);
    }

    int code = 0;
    for (const auto& p : pts)
        if (p.flagged) code = 2;
    std::printf("double-descent: %zu widths, exit %d\n", pts.size(), code);
    finish("double-descent", ov, cfg, start, code);
    return code;
}

int cmd_fluctuations(const Overrides& ov) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig cfg = load_with_overrides(ov);
    SplitDataset data = make_datasets(cfg);
    RunPlan plan = make_plan(cfg);
    FluctuationResult res = measure_fluctuations(cfg.h_grid, cfg.M, data.train, data.test, plan, true);
    write_fluctuations_csv(join(cfg.out_dir, "fluctuations.csv"), res);

    if (cfg.plots) {
        Series s;
        s.label = "|f - <f>|";
        for (const auto& p : res.points)
            if (p.valid) {
                s.x.push_back(static_cast<double>(p.N));
                s.y.push_back(p.fluctuation);
            }
        AxesSpec axes;
        axes.title = "ensemble fluctuations";
        axes.xlabel = "N";
        axes.ylabel = "RMS fluctuation";
        axes.logx = axes.logy = true;
        write_svg_plot(join(cfg.out_dir, "fluctuations.svg"), {s}, axes);
    }

    int code = 0;
    for (const auto& p : res.points)
        if (!p.valid) code = 2;
    std::printf("fluctuations: exponent %.4f +- %.4f, exit %d\n", res.fit.exponent,
                res.fit.stderr_exponent, code);
    finish("fluctuations", ov, cfg, start, code);
    return code;
}

int cmd_stripe_curve(const Overrides& ov) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig cfg = load_with_overrides(ov);
    SplitDataset data = make_datasets(cfg);
    RunPlan plan = make_plan(cfg);
    LearningCurveResult res =
        learning_curve(cfg.P_list, stripe_generator(cfg), data.test, plan, cfg.M, true);
    write_learning_curve_csv(join(cfg.out_dir, "learning_curve.csv"), res);

    if (cfg.plots) {
        Series s;
        s.label = "ensemble error";
        for (const auto& p : res.points) {
            s.x.push_back(static_cast<double>(p.P));
            s.y.push_back(p.ensemble_error);
        }
        AxesSpec axes;
        axes.title = "learning curve";
        axes.xlabel = "P";
        axes.ylabel = "test error";
        axes.logx = axes.logy = true;
        write_svg_plot(join(cfg.out_dir, "learning_curve.svg"), {s}, axes);
    }

    int code = 0;
    for (const auto& p : res.points)
        if (p.flagged) code = 2;
    std::printf("stripe-curve: beta %.4f +- %.4f, exit %d\n", res.fit.exponent,
                res.fit.stderr_exponent, code);
    finish("stripe-curve", ov, cfg, start, code);
    return code;
}

int cmd_compression(const Overrides& ov) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig cfg = load_with_overrides(ov);
    SplitDataset data = make_datasets(cfg);
    RunPlan feature_plan = make_plan(cfg);
    CompressionResult res =
        compression_curve(cfg.P_list, stripe_generator(cfg), data.test, feature_plan, cfg.M, true);
    write_compression_csv(join(cfg.out_dir, "compression.csv"), res);

    // Equivalence of feature learning and lazy-on-compressed at the config's
    // own P; the lazy side takes the last alpha in the grid (conventionally
    // the large one).
    RunPlan lazy_plan = feature_plan;
    lazy_plan.alpha_tilde = cfg.alpha_grid.empty() ? 1e2 : cfg.alpha_grid.back();
    EquivalenceResult eq =
        compression_equivalence(data.train, data.test, feature_plan, lazy_plan, cfg.M, true);
    {
        std::FILE* f = std::fopen(join(cfg.out_dir, "equivalence.csv").c_str(), "w");
        if (f) {
            std::fprintf(f, "feature_error_raw,lazy_error_compressed,lazy_error_raw,lambda\n");
            std::fprintf(f, "%.10g,%.10g,%.10g,%.10g\n", eq.feature_error_raw,
                         eq.lazy_error_compressed, eq.lazy_error_raw, eq.lambda);
            std::fclose(f);
        }
    }

    if (cfg.plots) {
        Series s;
        s.label = "Lambda";
        for (const auto& p : res.points) {
            s.x.push_back(static_cast<double>(p.P));
            s.y.push_back(p.lambda);
        }
        AxesSpec axes;
        axes.title = "first-layer compression";
        axes.xlabel = "P";
        axes.ylabel = "Lambda";
        axes.logx = axes.logy = true;
        write_svg_plot(join(cfg.out_dir, "compression.svg"), {s}, axes);
    }

    int code = 0;
    for (const auto& p : res.points)
        if (p.flagged) code = 2;
    std::printf("compression: slope %.4f, equivalence %.4f vs %.4f, exit %d\n", res.fit.slope(),
                eq.feature_error_raw, eq.lazy_error_compressed, code);
    finish("compression", ov, cfg, start, code);
    return code;
}

int cmd_ntk_pca(const Overrides& ov) {
    const auto start = std::chrono::steady_clock::now();
    ExperimentConfig cfg = load_with_overrides(ov);
    SplitDataset data = make_datasets(cfg);
    RunPlan plan = make_plan(cfg);
    const int h = cfg.h_grid.empty() ? 128 : cfg.h_grid.front();

    NetworkArch arch;
    arch.input_dim = static_cast<int>(data.train.dim());
    arch.depth = plan.depth;
    arch.width = h;
    arch.activation = cfg.activation == "softplus" ? Activation::Softplus : Activation::Relu;
    arch.softplus_beta = cfg.softplus_beta;
    NetworkState net0 = init_network(arch, derive_seed(cfg.base_seed, 0xacceULL));
    PredictorModel model = make_predictor(net0, plan.alpha_tilde);
    attach_dataset(model, data.train);

    int code = 0;
    double flow_time = 0;
    try {
        TrainResult tr = train(model, data.train, plan.spec, plan.cfg);
        flow_time = tr.flow_time;
        if (!tr.reached_zero) code = 2;
    } catch (const StiffnessError& e) {
        model.net = e.partial_result.final_state;
        flow_time = e.partial_result.flow_time;
        code = 2;
    }

    GramMatrix g0 = gram(net0, data.train);
    GramMatrix gT = gram(model.net, data.train, GramSource::PostTraining, flow_time);
    write_jlgm(join(cfg.out_dir, "gram_init.jlgm"), g0);
    write_jlgm(join(cfg.out_dir, "gram_final.jlgm"), gT);
    KernelPcaResult p0 = kernel_pca(g0, data.train.y);
    KernelPcaResult pT = kernel_pca(gT, data.train.y);
    write_pca_csv(join(cfg.out_dir, "pca_init.csv"), p0);
    write_pca_csv(join(cfg.out_dir, "pca_final.csv"), pT);

    std::printf("ntk-pca: kernel change %.4g, top-10 alignment %.4f -> %.4f, exit %d\n",
                kernel_change_ratio(gT, g0), p0.top_k_alignment(10), pT.top_k_alignment(10), code);
    finish("ntk-pca", ov, cfg, start, code);
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale phase-diagram laboratory for wide-network training"};
    app.require_subcommand(1);

    Overrides ov;
    std::uint64_t seed_arg = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", ov.config_path, "JSON experiment config")
            ->required()
            ->check(CLI::ExistingFile);
        sub->add_option("--seed", seed_arg, "override the config's base seed")
            ->each([&](const std::string&) { ov.seed_set = true; });
        sub->add_option("--out", ov.out, "override the config's output directory");
        sub->add_option("--workers", ov.workers, "worker thread count (default: all cores)");
    };

    int (*handler)(const Overrides&) = nullptr;
    struct Cmd {
        const char* name;
        const char* help;
        int (*fn)(const Overrides&);
    };
    const std::vector<Cmd> cmds = {
        {"sweep", "(h, alpha~) phase-diagram grid", cmd_sweep},
        {"jamming", "bisect the jamming width h*", cmd_jamming},
        {"double-descent", "test error across the interpolation width", cmd_double_descent},
        {"fluctuations", "ensemble fluctuation scaling vs N", cmd_fluctuations},
        {"stripe-curve", "stripe-model learning curve vs P", cmd_stripe_curve},
        {"compression", "first-layer compression growth and equivalence", cmd_compression},
        {"ntk-pca", "kernel spectra and label alignment before/after training", cmd_ntk_pca},
    };
    for (const Cmd& c : cmds) {
        CLI::App* sub = app.add_subcommand(c.name, c.help);
        add_common(sub);
        sub->callback([&handler, &c]() { handler = c.fn; });
    }

    CLI11_PARSE(app, argc, argv);
    ov.seed = seed_arg;

    try {
        return handler(ov);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "fatal: %s\n", e.what());
        return 1;
    }
}
