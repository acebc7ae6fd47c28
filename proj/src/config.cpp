#include "jamlab/config.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace jamlab {

namespace {

using nlohmann::json;

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_config: cannot open " + path);
    json j;
    try {
        f >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("load_config: " + path + ": " + e.what());
    }

    ExperimentConfig cfg;
    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        maybe(d, "kind", cfg.dataset_kind);
        long long p = cfg.P, pt = cfg.P_test;
        maybe(d, "P", p);
        maybe(d, "P_test", pt);
        cfg.P = p;
        cfg.P_test = pt;
        maybe(d, "d", cfg.d);
        maybe(d, "d_parallel", cfg.d_parallel);
        maybe(d, "boundaries", cfg.boundaries);
        maybe(d, "seed", cfg.data_seed);
        maybe(d, "images", cfg.images_path);
        maybe(d, "labels", cfg.labels_path);
        maybe(d, "pca_k", cfg.pca_k);
    }
    if (j.contains("arch")) {
        const json& a = j["arch"];
        maybe(a, "depth", cfg.depth);
        maybe(a, "activation", cfg.activation);
        maybe(a, "softplus_beta", cfg.softplus_beta);
    }
    if (j.contains("dynamics")) {
        const json& dy = j["dynamics"];
        maybe(dy, "dt0", cfg.flow.dt0);
        maybe(dy, "dt_max", cfg.flow.dt_max);
        maybe(dy, "growth", cfg.flow.growth);
        maybe(dy, "shrink", cfg.flow.shrink);
        maybe(dy, "loss_increase_tol", cfg.flow.loss_increase_tol);
        maybe(dy, "t_max", cfg.flow.t_max);
        maybe(dy, "checkpoint_times", cfg.flow.checkpoint_times);
        maybe(dy, "max_steps", cfg.flow.max_steps);
        maybe(dy, "stall_window", cfg.flow.stall_window);
        maybe(dy, "stall_rel_drop", cfg.flow.stall_rel_drop);
        maybe(dy, "history_stride", cfg.flow.history_stride);
        maybe(dy, "gamma", cfg.loss.gamma);
        maybe(dy, "margin", cfg.loss.margin);
        std::string kind = "hinge";
        maybe(dy, "loss", kind);
        cfg.loss.kind = kind == "cross_entropy" ? LossKind::CrossEntropy : LossKind::Hinge;
    }
    if (j.contains("grid")) {
        const json& g = j["grid"];
        maybe(g, "h", cfg.h_grid);
        maybe(g, "alpha_tilde", cfg.alpha_grid);
        std::vector<long long> pl;
        if (g.contains("P_list")) {
            pl = g.at("P_list").get<std::vector<long long>>();
            cfg.P_list.assign(pl.begin(), pl.end());
        }
        maybe(g, "h_lo", cfg.h_lo);
        maybe(g, "h_hi", cfg.h_hi);
    }
    maybe(j, "alpha_tilde", cfg.alpha_tilde);
    if (j.contains("seeds")) {
        const json& s = j["seeds"];
        maybe(s, "base", cfg.base_seed);
        maybe(s, "M", cfg.M);
        maybe(s, "repeats", cfg.repeats);
    }
    maybe(j, "out", cfg.out_dir);
    maybe(j, "plots", cfg.plots);
    return cfg;
}

RunPlan make_plan(const ExperimentConfig& cfg) {
    RunPlan plan;
    plan.depth = cfg.depth;
    plan.alpha_tilde = cfg.alpha_tilde;
    plan.spec = cfg.loss;
    plan.cfg = cfg.flow;
    plan.base_seed = cfg.base_seed;
    return plan;
}

SplitDataset make_datasets(const ExperimentConfig& cfg) {
    if (cfg.dataset_kind == "stripe") {
        SplitDataset out;
        out.train = gen_stripe(cfg.P, cfg.d, cfg.d_parallel, cfg.boundaries, cfg.data_seed);
        out.train.split = Split::Train;
        rehash(out.train);
        out.test = gen_stripe(cfg.P_test, cfg.d, cfg.d_parallel, cfg.boundaries,
                              derive_seed(cfg.data_seed, 0x7e57ULL));
        out.test.split = Split::Test;
        rehash(out.test);
        return out;
    }
    if (cfg.dataset_kind == "random_labels") {
        SplitDataset out;
        out.train = gen_random_labels(cfg.P, cfg.d, cfg.data_seed);
        out.train.split = Split::Train;
        rehash(out.train);
        out.test = gen_random_labels(cfg.P_test, cfg.d, derive_seed(cfg.data_seed, 0x7e57ULL));
        out.test.split = Split::Test;
        rehash(out.test);
        return out;
    }
    if (cfg.dataset_kind == "image") {
        if (cfg.images_path.empty() || cfg.labels_path.empty())
            throw std::runtime_error("make_datasets: image dataset needs images/labels paths");
        RawImageData raw = load_idx(cfg.images_path, cfg.labels_path);
        Dataset full = make_image_dataset(raw, cfg.data_seed);
        const Eigen::Index n_train = std::min<Eigen::Index>(cfg.P, full.size() - 1);
        SplitDataset split = split_dataset(full, n_train, cfg.data_seed);
        if (split.test.size() > cfg.P_test) {
            Dataset trimmed = split.test;
            trimmed.X = split.test.X.topRows(cfg.P_test).eval();
            trimmed.y = split.test.y.head(cfg.P_test).eval();
            rehash(trimmed);
            split.test = std::move(trimmed);
        }
        if (cfg.pca_k > 0) split = pca_reduce(split, cfg.pca_k);
        return split;
    }
    throw std::runtime_error("make_datasets: unknown dataset kind " + cfg.dataset_kind);
}

}  // namespace jamlab
