#include "poro/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <span>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <CLI11.hpp>
#include <json.hpp>

#include "poro/errors.hpp"
#include "poro/kernels.hpp"
#include "poro/morphology.hpp"
#include "poro/pca.hpp"
#include "poro/rng.hpp"
#include "poro/util.hpp"
#include "poro/vkoga.hpp"
#include "poro/voxelgeom.hpp"

namespace poro {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int resolve_threads(int t) {
    if (t > 0) return t;
    const unsigned hc = std::thread::hardware_concurrency();
    return hc ? static_cast<int>(hc) : 1;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

std::string sample_id(size_t i) {
    char b[16];
    std::snprintf(b, sizeof b, "g%04zu", i);
    return b;
}

json read_json(const fs::path& p, bool as_config) {
    const auto bytes = util::read_file(p);
    try {
        return json::parse(bytes.begin(), bytes.end());
    } catch (const json::exception& e) {
        const std::string msg = p.string() + ": " + e.what();
        if (as_config) throw ConfigError(msg);
        throw ArtifactError(msg);
    }
}

/// Geometry ids of a sample directory: "ok" entries of manifest.json when
/// present, otherwise every *.pvx stem in name order.
std::vector<std::string> list_geometry_ids(const fs::path& dir) {
    std::vector<std::string> ids;
    const fs::path mp = dir / "manifest.json";
    if (fs::exists(mp)) {
        const json m = read_json(mp, false);
        if (m.contains("samples"))
            for (const auto& s : m["samples"])
                if (s.value("status", "") == "ok") ids.push_back(s.at("id").get<std::string>());
    }
    if (ids.empty()) {
        if (!fs::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".pvx") ids.push_back(e.path().stem().string());
        std::sort(ids.begin(), ids.end());
    }
    if (ids.empty()) throw ArtifactError("no geometries found in " + dir.string());
    return ids;
}

std::vector<std::string> read_id_list(const fs::path& p) {
    const auto bytes = util::read_file(p);
    std::vector<std::string> ids;
    std::string line;
    std::istringstream in(std::string(bytes.begin(), bytes.end()));
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) ids.push_back(line);
    }
    if (ids.empty()) throw ConfigError("id list is empty: " + p.string());
    return ids;
}

json geometry_config_json(const GeometryConfig& c) {
    return {{"n_h", c.n_h},
            {"target_washcoat_fraction", c.target_washcoat_fraction},
            {"binder_fraction", c.binder_fraction},
            {"sphere_radius_min", c.sphere_radius_min},
            {"sphere_radius_max", c.sphere_radius_max},
            {"rng_seed", c.rng_seed}};
}

// ---------------------------------------------------------------------------
// gen-geoms

struct GenArgs {
    std::string out;
    int count = 1;
    uint32_t n_h = 24;
    uint64_t seed = 0;
    double wf = 0.3;
    double wf_min = -1; // < 0: use the constant wf
    double wf_max = -1;
    double binder = 0.0;
    double r_min = 0.08;
    double r_max = 0.16;
    int threads = 0;
    bool verbose = false;
};

int run_gen_geoms(const GenArgs& a) {
    if (a.count < 1) throw ConfigError("gen-geoms: count must be >= 1");
    double lo = a.wf, hi = a.wf;
    if (a.wf_min >= 0 || a.wf_max >= 0) {
        lo = a.wf_min >= 0 ? a.wf_min : a.wf;
        hi = a.wf_max >= 0 ? a.wf_max : a.wf;
    }
    std::vector<GeometryConfig> cfgs(static_cast<size_t>(a.count));
    for (size_t i = 0; i < cfgs.size(); ++i) {
        GeometryConfig& c = cfgs[i];
        c.n_h = a.n_h;
        const double t = cfgs.size() > 1 ? double(i) / double(cfgs.size() - 1) : 0.0;
        c.target_washcoat_fraction = lo + (hi - lo) * t;
        c.binder_fraction = a.binder;
        c.sphere_radius_min = a.r_min;
        c.sphere_radius_max = a.r_max;
        c.rng_seed = rng::derive_seed(a.seed, i);
        c.validate();
    }

    fs::create_directories(a.out);
    util::DirLock lock(a.out);

    struct Rec {
        bool ok = false;
        std::string error;
        double wall_ms = 0;
    };
    std::vector<Rec> recs(cfgs.size());
    util::parallel_for(cfgs.size(), resolve_threads(a.threads), [&](size_t i) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const VoxelGeometry g = generate_sample(cfgs[i]);
            save_pvx(fs::path(a.out) / (sample_id(i) + ".pvx"), g);
            recs[i].ok = true;
        } catch (const Error& e) {
            recs[i].error = e.what();
        }
        recs[i].wall_ms = ms_since(t0);
    });

    json manifest;
    manifest["command"] = "gen-geoms";
    manifest["params"] = {{"count", a.count}, {"n_h", a.n_h},       {"seed", a.seed},
                          {"wf_min", lo},     {"wf_max", hi},       {"binder_fraction", a.binder},
                          {"r_min", a.r_min}, {"r_max", a.r_max}};
    json samples = json::array();
    size_t n_ok = 0;
    for (size_t i = 0; i < cfgs.size(); ++i) {
        json s;
        s["id"] = sample_id(i);
        s["config"] = geometry_config_json(cfgs[i]);
        s["status"] = recs[i].ok ? "ok" : "failed";
        if (!recs[i].ok) {
            s["error"] = recs[i].error;
            std::cerr << sample_id(i) << ": " << recs[i].error << "\n";
        } else {
            ++n_ok;
        }
        s["wall_ms"] = recs[i].wall_ms;
        samples.push_back(std::move(s));
    }
    manifest["samples"] = std::move(samples);
    util::write_file(fs::path(a.out) / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "gen-geoms: " << n_ok << "/" << cfgs.size() << " geometries -> " << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// features

struct FeatureArgs {
    std::string in;
    std::string out;
    int threads = 0;
};

int run_features(const FeatureArgs& a) {
    const auto ids = list_geometry_ids(a.in);
    std::vector<MorphFeatures> feats(ids.size());
    util::parallel_for(ids.size(), resolve_threads(a.threads), [&](size_t i) {
        feats[i] = compute_features(load_pvx(fs::path(a.in) / (ids[i] + ".pvx")));
    });
    write_features_csv(a.out, ids, feats);
    std::cout << "features: " << ids.size() << " geometries -> " << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// pca-fit / pca-project

struct PcaFitArgs {
    std::string in;
    std::string ids_file;
    std::string out;
    std::string split_label;
    int n_f = 6;
    bool center = false;
};

std::vector<BitVector> load_flat_geometries(const fs::path& dir,
                                            const std::vector<std::string>& ids) {
    std::vector<BitVector> cols(ids.size());
    size_t dim = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
        cols[i] = flatten(load_pvx(dir / (ids[i] + ".pvx")));
        if (i == 0)
            dim = cols[i].size();
        else if (cols[i].size() != dim)
            throw ArtifactError("geometry size mismatch: " + ids[i]);
    }
    return cols;
}

int run_pca_fit(const PcaFitArgs& a) {
    if (a.n_f < 1) throw ConfigError("pca-fit: n-f must be >= 1");
    const auto ids = a.ids_file.empty() ? list_geometry_ids(a.in) : read_id_list(a.ids_file);
    const auto cols = load_flat_geometries(a.in, ids);
    PcaBasis basis;
    if (a.center) {
        Eigen::MatrixXd Z(static_cast<Eigen::Index>(cols[0].size()),
                          static_cast<Eigen::Index>(cols.size()));
        for (size_t j = 0; j < cols.size(); ++j)
            for (size_t i = 0; i < cols[j].size(); ++i)
                Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                    cols[j][i] ? 1.0 : 0.0;
        basis = fit_pca(Z, a.n_f, true, a.split_label);
    } else {
        basis = fit_pca(std::span<const BitVector>(cols), a.n_f, a.split_label);
    }
    save_pca(a.out, basis);
    std::cout << "pca-fit: n_f=" << a.n_f << " over " << ids.size() << " geometries";
    if (!a.split_label.empty()) std::cout << " label=" << a.split_label;
    std::cout << " -> " << a.out << "\n";
    return 0;
}

struct PcaProjectArgs {
    std::string in;
    std::string basis;
    std::string out;
};

int run_pca_project(const PcaProjectArgs& a) {
    const PcaBasis basis = load_pca(a.basis);
    const auto ids = list_geometry_ids(a.in);
    std::string csv = "id";
    for (int j = 0; j < basis.n_f; ++j) csv += ",p_" + std::to_string(j);
    csv += "\n";
    for (const auto& id : ids) {
        const BitVector z = flatten(load_pvx(fs::path(a.in) / (id + ".pvx")));
        const Eigen::VectorXd p = project(basis, z);
        csv += id;
        for (Eigen::Index j = 0; j < p.size(); ++j) csv += "," + util::format_g17(p(j));
        csv += "\n";
    }
    util::write_file(a.out, csv);
    std::cout << "pca-project: " << ids.size() << " geometries -> " << a.out << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// fom

struct FomArgs {
    std::string in;
    std::string out;
    CdrParams params;
    int threads = 0;
    bool verbose = false;
};

int run_fom(const FomArgs& a) {
    const auto ids = list_geometry_ids(a.in);
    fs::create_directories(a.out);
    util::DirLock lock(a.out);

    struct Rec {
        bool ok = false;
        std::string error;
        double wall_ms = 0;
        CdrRunStats stats;
        Eigen::VectorXd curve;
    };
    std::vector<Rec> recs(ids.size());
    util::parallel_for(ids.size(), resolve_threads(a.threads), [&](size_t i) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const VoxelGeometry g = load_pvx(fs::path(a.in) / (ids[i] + ".pvx"));
            const SolveResult res = solve_breakthrough(g, a.params);
            recs[i].curve = res.curve.values;
            recs[i].stats = res.stats;
            recs[i].ok = true;
        } catch (const Error& e) {
            recs[i].error = e.what();
        }
        recs[i].wall_ms = ms_since(t0);
    });

    std::vector<std::string> ok_ids;
    std::vector<size_t> ok_rows;
    for (size_t i = 0; i < ids.size(); ++i)
        if (recs[i].ok) {
            ok_ids.push_back(ids[i]);
            ok_rows.push_back(i);
        }
    Eigen::MatrixXd curves(static_cast<Eigen::Index>(ok_rows.size()), a.params.n_t);
    for (size_t r = 0; r < ok_rows.size(); ++r)
        curves.row(static_cast<Eigen::Index>(r)) = recs[ok_rows[r]].curve;
    write_curves_csv(fs::path(a.out) / "curves.csv", ok_ids, curves);

    json manifest;
    manifest["command"] = "fom";
    manifest["params"] = {{"pe", a.params.pe},
                          {"da", a.params.da},
                          {"n_t", a.params.n_t},
                          {"t_end", a.params.t_end},
                          {"cfl", a.params.cfl},
                          {"washcoat_diffusivity", a.params.washcoat_diffusivity}};
    json samples = json::array();
    for (size_t i = 0; i < ids.size(); ++i) {
        json s;
        s["id"] = ids[i];
        s["status"] = recs[i].ok ? "ok" : "failed";
        if (!recs[i].ok) {
            s["error"] = recs[i].error;
            std::cerr << ids[i] << ": " << recs[i].error << "\n";
        } else {
            s["solver"] = {{"dt", recs[i].stats.dt},
                           {"steps", recs[i].stats.steps},
                           {"v_max", recs[i].stats.v_max}};
            if (a.verbose)
                std::cerr << ids[i] << ": dt=" << recs[i].stats.dt
                          << " steps=" << recs[i].stats.steps << " v_max=" << recs[i].stats.v_max
                          << "\n";
        }
        s["wall_ms"] = recs[i].wall_ms;
        samples.push_back(std::move(s));
    }
    manifest["samples"] = std::move(samples);
    util::write_file(fs::path(a.out) / "fom_manifest.json", manifest.dump(2) + "\n");
    std::cout << "fom: " << ok_ids.size() << "/" << ids.size() << " samples -> "
              << (fs::path(a.out) / "curves.csv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// shared train/report/sweep machinery

struct LoadedData {
    std::vector<std::string> ids;
    Eigen::MatrixXd morph;  // n x 6
    Eigen::MatrixXd curves; // n x n_t
    std::vector<BitVector> geoms; // flattened, only when PCA features are needed
};

LoadedData load_data(const PipelineConfig& cfg, bool need_geoms) {
    const FeatureTable ft = read_features_csv(cfg.features_path);
    const CurveTable ct = read_curves_csv(cfg.curves_path);
    std::unordered_map<std::string, Eigen::Index> curve_row;
    for (size_t i = 0; i < ct.ids.size(); ++i)
        curve_row.emplace(ct.ids[i], static_cast<Eigen::Index>(i));

    LoadedData d;
    std::vector<size_t> keep;
    for (size_t i = 0; i < ft.ids.size(); ++i)
        if (curve_row.count(ft.ids[i]))
            keep.push_back(i);
        else
            std::cerr << "note: no curve for " << ft.ids[i] << ", sample dropped\n";
    if (keep.empty()) throw ArtifactError("no sample id appears in both feature and curve files");

    const auto n = static_cast<Eigen::Index>(keep.size());
    d.morph.resize(n, 6);
    d.curves.resize(n, ct.curves.cols());
    for (Eigen::Index r = 0; r < n; ++r) {
        const size_t i = keep[static_cast<size_t>(r)];
        d.ids.push_back(ft.ids[i]);
        for (int j = 0; j < 6; ++j) d.morph(r, j) = ft.values[i][static_cast<size_t>(j)];
        d.curves.row(r) = ct.curves.row(curve_row.at(ft.ids[i]));
    }
    if (need_geoms) {
        if (cfg.geoms_dir.empty())
            throw ConfigError("PCA features requested but no geometry directory configured");
        d.geoms = load_flat_geometries(cfg.geoms_dir, d.ids);
    }
    return d;
}

Dataset make_dataset(const std::vector<std::string>& ids, const Eigen::MatrixXd& F,
                     const Eigen::MatrixXd& C, FeatureKind kind) {
    Dataset ds;
    ds.n_t = static_cast<int>(C.cols());
    ds.kind = kind;
    ds.samples.reserve(ids.size());
    for (size_t i = 0; i < ids.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        ds.samples.push_back({ids[i], F.row(r).transpose(), C.row(r).transpose()});
    }
    return ds;
}

std::string model_tag(const std::string& mode, const std::string& depth, size_t split) {
    return mode + "_" + depth + "_split" + std::to_string(split);
}

void write_matrix_csv(const fs::path& p, const Eigen::MatrixXd& m) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out += ",";
            out += util::format_g17(m(i, j));
        }
        out += "\n";
    }
    util::write_file(p, out);
}

void write_loss_csv(const fs::path& p, const std::vector<double>& history) {
    std::string out = "step,loss\n";
    for (size_t i = 0; i < history.size(); ++i)
        out += std::to_string(i) + "," + util::format_g17(history[i]) + "\n";
    util::write_file(p, out);
}

struct FittedModel {
    KernelModel model;
    double e_rel = 0;
    std::string family;
    std::string shape_or_A; // shape value for single-layer, "A" otherwise
    double lambda = 0;
};

/// Hyperparameter search + final greedy fit for one (mode, depth, split) cell.
/// Artifacts (cv table, loss trace, first-layer heat map) land in out_dir
/// unless it is empty (sweep mode).
FittedModel train_one(const TrainSet& tr, const TestSet& te, const std::string& mode,
                      const std::string& depth, size_t split_idx, const PipelineConfig& cfg,
                      const FeatureMapDesc& fdesc, const fs::path& out_dir, int threads) {
    FittedModel fm;
    const std::string tag = model_tag(mode, depth, split_idx);
    if (depth == "1l") {
        const Selection1L sel = loocv_select_1L(tr, cfg.grid, cfg.n_greedy, threads);
        const AnyKernel k = KernelSpec{sel.family, sel.shape};
        fm.model = fit_greedy(tr.x, tr.y, k, sel.lambda, cfg.n_greedy);
        fm.family = kernel_family_name(sel.family);
        fm.shape_or_A = util::format_g17(sel.shape);
        fm.lambda = sel.lambda;
        if (!out_dir.empty()) write_cv_table(out_dir / ("cv_" + tag + ".csv"), sel.table);
    } else if (depth == "2l") {
        const Selection2L sel = loocv_select_2L(tr, cfg.grid.families, cfg.grid.lambdas,
                                                cfg.two_layer, cfg.n_greedy, threads);
        const AnyKernel k = TwoLayerKernelSpec{{sel.family, 1.0}, sel.A};
        fm.model = fit_greedy(tr.x, tr.y, k, sel.lambda, cfg.n_greedy);
        fm.family = kernel_family_name(sel.family);
        fm.shape_or_A = "A";
        fm.lambda = sel.lambda;
        if (!out_dir.empty()) {
            write_cv_table(out_dir / ("cv_" + tag + ".csv"), sel.table);
            write_loss_csv(out_dir / ("loss_" + tag + ".csv"), sel.loss_history);
            write_matrix_csv(out_dir / ("A_" + tag + ".csv"), sel.A);
        }
    } else {
        throw ConfigError("unknown model depth: " + depth);
    }
    fm.model.feature_map = fdesc;
    fm.e_rel = relative_test_error(fm.model, te);
    return fm;
}

// ---------------------------------------------------------------------------
// train

int run_train(const PipelineConfig& cfg, int threads, bool verbose) {
    cfg.validate();
    const bool need_pca = std::find(cfg.feature_modes.begin(), cfg.feature_modes.end(), "pca") !=
                          cfg.feature_modes.end();
    const LoadedData d = load_data(cfg, need_pca);
    fs::create_directories(cfg.out_dir);
    util::DirLock lock(cfg.out_dir);
    const auto t_start = std::chrono::steady_clock::now();

    const Dataset base = make_dataset(d.ids, d.morph, d.curves, FeatureKind::morphological);
    std::vector<SplitIndices> splits;
    json splits_json;
    splits_json["n_samples"] = d.ids.size();
    splits_json["splits"] = json::array();
    for (size_t k = 0; k < cfg.splits.size(); ++k) {
        splits.push_back(split(base, cfg.splits[k].train_count, cfg.splits[k].seed));
        json s;
        s["split"] = k;
        s["seed"] = cfg.splits[k].seed;
        s["train_count"] = cfg.splits[k].train_count;
        json tr = json::array(), te = json::array();
        for (size_t i : splits[k].train) tr.push_back(d.ids[i]);
        for (size_t i : splits[k].test) te.push_back(d.ids[i]);
        s["train_ids"] = std::move(tr);
        s["test_ids"] = std::move(te);
        splits_json["splits"].push_back(std::move(s));
    }
    util::write_file(cfg.out_dir / "splits.json", splits_json.dump(2) + "\n");

    // table rows per (mode, depth): split, rel_err, kernel, shape_or_A, reg_param
    std::map<std::string, std::string> tables;
    std::map<std::string, double> err_sums;
    json timings;

    for (const auto& mode : cfg.feature_modes) {
        for (size_t k = 0; k < splits.size(); ++k) {
            Eigen::MatrixXd F;
            FeatureMapDesc fdesc;
            FeatureKind kind;
            if (mode == "mf") {
                F = d.morph;
                fdesc.kind = "mf";
                kind = FeatureKind::morphological;
            } else if (mode == "pca") {
                std::vector<BitVector> train_geoms;
                train_geoms.reserve(splits[k].train.size());
                for (size_t i : splits[k].train) train_geoms.push_back(d.geoms[i]);
                const PcaBasis basis = fit_pca(std::span<const BitVector>(train_geoms), cfg.n_f,
                                               "split" + std::to_string(k));
                const fs::path bp = cfg.out_dir / ("pca_split" + std::to_string(k) + ".pcab");
                save_pca(bp, basis);
                F.resize(d.morph.rows(), cfg.n_f);
                for (size_t i = 0; i < d.geoms.size(); ++i)
                    F.row(static_cast<Eigen::Index>(i)) = project(basis, d.geoms[i]).transpose();
                fdesc.kind = "pca";
                fdesc.basis_path = bp.filename().string();
                fdesc.basis_sha256 = util::sha256_file(bp);
                kind = FeatureKind::pca;
                if (verbose) std::cerr << "split " << k << ": pca basis fitted\n";
            } else {
                throw ConfigError("unknown feature mode: " + mode);
            }
            const Dataset ds = make_dataset(d.ids, F, d.curves, kind);
            const TrainSet tr = TrainSet::from(ds, splits[k].train);
            const TestSet te = TestSet::from(ds, splits[k].test);

            for (const auto& depth : cfg.depths) {
                const auto t0 = std::chrono::steady_clock::now();
                const FittedModel fm =
                    train_one(tr, te, mode, depth, k, cfg, fdesc, cfg.out_dir, threads);
                save_model(cfg.out_dir / ("model_" + model_tag(mode, depth, k) + ".json"),
                           fm.model);
                const std::string key = mode + "_" + depth;
                tables[key] += std::to_string(k) + "," + util::format_g17(fm.e_rel) + "," +
                               fm.family + "," + fm.shape_or_A + "," +
                               util::format_g17(fm.lambda) + "\n";
                err_sums[key] += fm.e_rel;
                timings[model_tag(mode, depth, k)] = ms_since(t0);
                std::cout << "split " << k << " " << mode << " " << depth
                          << ": family=" << fm.family << " shape=" << fm.shape_or_A
                          << " lambda=" << util::format_g17(fm.lambda)
                          << " e_rel=" << util::format_g17(fm.e_rel) << "\n";
            }
        }
    }

    for (const auto& [key, rows] : tables)
        util::write_file(cfg.out_dir / ("table_" + key + ".csv"),
                         "split,rel_err,kernel,shape_or_A,reg_param\n" + rows);
    for (const auto& [key, sum] : err_sums)
        std::cout << "mean e_rel " << key << " = "
                  << util::format_g17(sum / double(splits.size())) << "\n";
    timings["total"] = ms_since(t_start);
    util::write_file(cfg.out_dir / "train_timings.json", timings.dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------------------
// report

json kernel_report_entry(const KernelModel& m) {
    json e;
    if (std::holds_alternative<KernelSpec>(m.kernel)) {
        const auto& k = std::get<KernelSpec>(m.kernel);
        e["family"] = kernel_family_name(k.family);
        e["shape"] = k.shape;
    } else {
        const auto& k = std::get<TwoLayerKernelSpec>(m.kernel);
        e["family"] = kernel_family_name(k.base.family);
        json sv = json::array();
        const Eigen::VectorXd s = singular_spectrum(k.first_layer).first;
        for (Eigen::Index i = 0; i < s.size(); ++i) sv.push_back(s(i));
        e["first_layer_singular_values"] = std::move(sv);
    }
    e["lambda"] = m.lambda;
    e["n_centers"] = m.centers.rows();
    return e;
}

int run_report(const PipelineConfig& cfg, int threads) {
    cfg.validate();
    (void)threads; // prediction on a handful of test samples is cheap
    const auto t_start = std::chrono::steady_clock::now();
    const bool need_pca = std::find(cfg.feature_modes.begin(), cfg.feature_modes.end(), "pca") !=
                          cfg.feature_modes.end();
    const LoadedData d = load_data(cfg, need_pca);
    std::unordered_map<std::string, size_t> row_of;
    for (size_t i = 0; i < d.ids.size(); ++i) row_of.emplace(d.ids[i], i);

    const fs::path splits_path = cfg.out_dir / "splits.json";
    if (!fs::exists(splits_path))
        throw ArtifactError("missing " + splits_path.string() + " (run train first)");
    const json splits_json = read_json(splits_path, false);

    json report;
    report["n_samples"] = d.ids.size();
    report["n_t"] = d.curves.cols();
    report["feature_modes"] = cfg.feature_modes;
    report["depths"] = cfg.depths;
    report["splits"] = json::array();
    std::map<std::string, double> err_sums;

    for (const auto& sj : splits_json.at("splits")) {
        const auto k = sj.at("split").get<size_t>();
        std::vector<size_t> test_rows;
        for (const auto& id : sj.at("test_ids")) {
            const auto it = row_of.find(id.get<std::string>());
            if (it == row_of.end())
                throw ArtifactError("split test id not present in dataset: " +
                                    id.get<std::string>());
            test_rows.push_back(it->second);
        }
        json entry;
        entry["split"] = k;
        entry["seed"] = sj.at("seed");
        entry["train_count"] = sj.at("train_count");
        entry["test_count"] = test_rows.size();
        entry["models"] = json::array();

        for (const auto& mode : cfg.feature_modes) {
            // Feature rows for the test samples under this model's map.
            Eigen::MatrixXd F;
            if (mode == "mf") {
                F.resize(static_cast<Eigen::Index>(test_rows.size()), d.morph.cols());
                for (size_t r = 0; r < test_rows.size(); ++r)
                    F.row(static_cast<Eigen::Index>(r)) =
                        d.morph.row(static_cast<Eigen::Index>(test_rows[r]));
            }
            for (const auto& depth : cfg.depths) {
                const std::string tag = model_tag(mode, depth, k);
                const fs::path mp = cfg.out_dir / ("model_" + tag + ".json");
                if (!fs::exists(mp)) throw ArtifactError("missing model artifact " + mp.string());
                const KernelModel m = load_model(mp);
                Eigen::MatrixXd X;
                if (mode == "mf") {
                    X = F;
                } else {
                    if (m.feature_map.kind != "pca")
                        throw ArtifactError(mp.string() + ": expected a pca feature map");
                    const fs::path bp = cfg.out_dir / m.feature_map.basis_path;
                    if (util::sha256_file(bp) != m.feature_map.basis_sha256)
                        throw ArtifactError("basis checksum mismatch for " + bp.string());
                    const PcaBasis basis = load_pca(bp);
                    X.resize(static_cast<Eigen::Index>(test_rows.size()), basis.n_f);
                    for (size_t r = 0; r < test_rows.size(); ++r)
                        X.row(static_cast<Eigen::Index>(r)) =
                            project(basis, d.geoms[test_rows[r]]).transpose();
                }
                Eigen::MatrixXd targets(static_cast<Eigen::Index>(test_rows.size()),
                                        d.curves.cols());
                for (size_t r = 0; r < test_rows.size(); ++r)
                    targets.row(static_cast<Eigen::Index>(r)) =
                        d.curves.row(static_cast<Eigen::Index>(test_rows[r]));
                const double e_rel = relative_test_error(targets, predict_batch(m, X));

                json me = kernel_report_entry(m);
                me["feature_mode"] = mode;
                me["depth"] = depth;
                me["e_rel"] = e_rel;
                entry["models"].push_back(std::move(me));
                err_sums[mode + "_" + depth] += e_rel;
            }
        }
        report["splits"].push_back(std::move(entry));
    }

    const auto n_splits = splits_json.at("splits").size();
    json means;
    for (const auto& [key, sum] : err_sums) means[key] = sum / double(n_splits);
    report["mean_e_rel"] = std::move(means);

    util::write_file(cfg.out_dir / "report.json", report.dump(2) + "\n");
    json timings;
    timings["command"] = "report";
    timings["wall_ms"] = ms_since(t_start);
    util::write_file(cfg.out_dir / "report_timings.json", timings.dump(2) + "\n");
    for (const auto& [key, sum] : err_sums)
        std::cout << "mean e_rel " << key << " = " << util::format_g17(sum / double(n_splits))
                  << "\n";
    std::cout << "report -> " << (cfg.out_dir / "report.json").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// sweep-nf

int run_sweep_nf(const PipelineConfig& cfg, int threads, bool verbose) {
    cfg.validate();
    if (cfg.nf_list.empty()) throw ConfigError("sweep-nf: nf_list is empty");
    if (cfg.sweep_out.empty()) throw ConfigError("sweep-nf: no output directory configured");
    for (const auto& depth : cfg.sweep_depths)
        if (depth != "1l" && depth != "2l") throw ConfigError("unknown model depth: " + depth);
    const LoadedData d = load_data(cfg, true);
    fs::create_directories(cfg.sweep_out);
    util::DirLock lock(cfg.sweep_out);

    const Dataset base = make_dataset(d.ids, d.morph, d.curves, FeatureKind::morphological);
    std::vector<SplitIndices> splits;
    for (const auto& spec : cfg.splits) splits.push_back(split(base, spec.train_count, spec.seed));

    std::string csv = "nf,split,depth,family,shape,lambda,train_err,test_err\n";
    for (const int nf : cfg.nf_list) {
        if (nf < 1) throw ConfigError("sweep-nf: n_f values must be >= 1");
        for (size_t k = 0; k < splits.size(); ++k) {
            for (const auto& depth : cfg.sweep_depths) {
                std::string row = std::to_string(nf) + "," + std::to_string(k) + "," + depth;
                try {
                    std::vector<BitVector> train_geoms;
                    for (size_t i : splits[k].train) train_geoms.push_back(d.geoms[i]);
                    const PcaBasis basis = fit_pca(std::span<const BitVector>(train_geoms), nf,
                                                   "split" + std::to_string(k));
                    Eigen::MatrixXd F(d.morph.rows(), nf);
                    for (size_t i = 0; i < d.geoms.size(); ++i)
                        F.row(static_cast<Eigen::Index>(i)) =
                            project(basis, d.geoms[i]).transpose();
                    const Dataset ds = make_dataset(d.ids, F, d.curves, FeatureKind::pca);
                    const TrainSet tr = TrainSet::from(ds, splits[k].train);
                    const TestSet te = TestSet::from(ds, splits[k].test);
                    FeatureMapDesc fdesc;
                    fdesc.kind = "pca";
                    const FittedModel fm =
                        train_one(tr, te, "pca", depth, k, cfg, fdesc, fs::path(), threads);
                    const TestSet on_train{tr.x, tr.y, tr.ids};
                    const double train_err = relative_test_error(fm.model, on_train);
                    row += "," + fm.family + "," +
                           (depth == "1l" ? fm.shape_or_A : std::string("")) + "," +
                           util::format_g17(fm.lambda) + "," + util::format_g17(train_err) + "," +
                           util::format_g17(fm.e_rel);
                } catch (const Error& e) {
                    std::cerr << "sweep nf=" << nf << " split=" << k << " " << depth
                              << " failed: " << e.what() << "\n";
                    row += ",,,,nan,nan";
                }
                csv += row + "\n";
                if (verbose) std::cerr << "sweep nf=" << nf << " split=" << k << " done\n";
            }
        }
    }
    util::write_file(cfg.sweep_out / "sweep_nf.csv", csv);
    std::cout << "sweep-nf -> " << (cfg.sweep_out / "sweep_nf.csv").string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// config plumbing

/// Pre-parse scan for --config so its values can seed flag defaults.
std::string scan_config_path(const std::vector<std::string>& args) {
    for (size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
    }
    return {};
}

json config_section(const json& root, const std::string& command) {
    std::string key = command;
    std::replace(key.begin(), key.end(), '-', '_');
    return root.contains(key) ? root[key] : json::object();
}

template <typename T>
void fill(const json& sec, const char* key, T& var) {
    try {
        if (sec.contains(key)) var = sec[key].get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

} // namespace

void PipelineConfig::validate() const {
    if (features_path.empty()) throw ConfigError("pipeline config: 'features' path missing");
    if (curves_path.empty()) throw ConfigError("pipeline config: 'curves' path missing");
    if (out_dir.empty()) throw ConfigError("pipeline config: 'out' directory missing");
    if (feature_modes.empty()) throw ConfigError("pipeline config: feature_modes is empty");
    for (const auto& m : feature_modes)
        if (m != "mf" && m != "pca") throw ConfigError("unknown feature mode: " + m);
    if (depths.empty()) throw ConfigError("pipeline config: depths is empty");
    for (const auto& dpt : depths)
        if (dpt != "1l" && dpt != "2l") throw ConfigError("unknown model depth: " + dpt);
    if (n_f < 1) throw ConfigError("pipeline config: n_f must be >= 1");
    if (n_greedy < 1) throw ConfigError("pipeline config: n_greedy must be >= 1");
    if (splits.empty()) throw ConfigError("pipeline config: splits is empty");
    for (const auto& s : splits)
        if (s.train_count < 1) throw ConfigError("pipeline config: train_count must be >= 1");
    if (grid.families.empty() || grid.shapes.empty() || grid.lambdas.empty())
        throw ConfigError("pipeline config: hyperparameter grid has an empty axis");
    if (two_layer.batch_size < 2)
        throw ConfigError("pipeline config: two_layer.batch_size must be >= 2");
    if (two_layer.epochs < 1) throw ConfigError("pipeline config: two_layer.epochs must be >= 1");
    if (!(two_layer.learning_rate > 0))
        throw ConfigError("pipeline config: two_layer.learning_rate must be > 0");
}

PipelineConfig load_pipeline_config(const fs::path& p) {
    const json root = read_json(p, true);
    const json& t = root.contains("train") ? root["train"] : root;
    PipelineConfig c;
    try {
        c.geoms_dir = t.value("geoms", std::string());
        c.features_path = t.value("features", std::string());
        c.curves_path = t.value("curves", std::string());
        c.out_dir = t.value("out", std::string());
        fill(t, "feature_modes", c.feature_modes);
        fill(t, "depths", c.depths);
        fill(t, "n_f", c.n_f);
        fill(t, "n_greedy", c.n_greedy);
        if (t.contains("splits")) {
            c.splits.clear();
            for (const auto& s : t["splits"])
                c.splits.push_back(
                    {s.at("seed").get<uint64_t>(), s.at("train_count").get<size_t>()});
        }
        if (t.contains("grid")) {
            const json& g = t["grid"];
            if (g.contains("families")) {
                c.grid.families.clear();
                for (const auto& f : g["families"])
                    c.grid.families.push_back(kernel_family_from_name(f.get<std::string>()));
            }
            fill(g, "shapes", c.grid.shapes);
            fill(g, "lambdas", c.grid.lambdas);
        }
        if (t.contains("two_layer")) {
            const json& tl = t["two_layer"];
            fill(tl, "batch_size", c.two_layer.batch_size);
            fill(tl, "epochs", c.two_layer.epochs);
            fill(tl, "learning_rate", c.two_layer.learning_rate);
            fill(tl, "seed", c.two_layer.seed);
            if (tl.contains("init")) {
                const auto name = tl["init"].get<std::string>();
                if (name == "identity")
                    c.two_layer.init = FirstLayerInit::identity;
                else if (name == "median")
                    c.two_layer.init = FirstLayerInit::median;
                else
                    throw ConfigError("two_layer.init must be 'identity' or 'median'");
            }
        }
        if (root.contains("sweep_nf")) {
            const json& sw = root["sweep_nf"];
            fill(sw, "nf_list", c.nf_list);
            fill(sw, "depths", c.sweep_depths);
            c.sweep_out = sw.value("out", std::string());
        }
    } catch (const json::exception& e) {
        throw ConfigError(p.string() + ": " + e.what());
    }
    return c;
}

namespace {

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"Breakthrough-curve surrogates for voxelized porous media"};
    app.require_subcommand(1);
    std::string config_path;

    GenArgs gen;
    auto* sc_gen = app.add_subcommand("gen-geoms", "Generate random sphere-pile geometries");
    sc_gen->add_option("--out", gen.out, "output directory")->required();
    sc_gen->add_option("--count", gen.count, "number of samples");
    sc_gen->add_option("--n-h", gen.n_h, "voxels per edge");
    sc_gen->add_option("--seed", gen.seed, "base RNG seed");
    sc_gen->add_option("--target-wf", gen.wf, "target washcoat fraction");
    sc_gen->add_option("--wf-min", gen.wf_min, "washcoat fraction at the first sample");
    sc_gen->add_option("--wf-max", gen.wf_max, "washcoat fraction at the last sample");
    sc_gen->add_option("--binder-frac", gen.binder, "binder fraction");
    sc_gen->add_option("--r-min", gen.r_min, "minimum sphere radius");
    sc_gen->add_option("--r-max", gen.r_max, "maximum sphere radius");

    FeatureArgs feat;
    auto* sc_feat = app.add_subcommand("features", "Morphological features of stored geometries");
    sc_feat->add_option("--in", feat.in, "geometry directory")->required();
    sc_feat->add_option("--out", feat.out, "output CSV")->required();

    PcaFitArgs pfit;
    auto* sc_pfit = app.add_subcommand("pca-fit", "Fit a PCA basis over voxel masks");
    sc_pfit->add_option("--in", pfit.in, "geometry directory")->required();
    sc_pfit->add_option("--ids", pfit.ids_file, "file with one geometry id per line");
    sc_pfit->add_option("--n-f", pfit.n_f, "number of components")->required();
    sc_pfit->add_option("--out", pfit.out, "output basis file")->required();
    sc_pfit->add_option("--split-label", pfit.split_label, "split label for bookkeeping");
    sc_pfit->add_flag("--center", pfit.center, "subtract the column mean before fitting");

    PcaProjectArgs pproj;
    auto* sc_pproj = app.add_subcommand("pca-project", "Project geometries onto a PCA basis");
    sc_pproj->add_option("--in", pproj.in, "geometry directory")->required();
    sc_pproj->add_option("--basis", pproj.basis, "basis file")->required();
    sc_pproj->add_option("--out", pproj.out, "output CSV")->required();

    FomArgs fom;
    auto* sc_fom = app.add_subcommand("fom", "Breakthrough curves by direct simulation");
    sc_fom->add_option("--geoms", fom.in, "geometry directory")->required();
    sc_fom->add_option("--out", fom.out, "output directory")->required();
    sc_fom->add_option("--pe", fom.params.pe, "Peclet number");
    sc_fom->add_option("--da", fom.params.da, "Damkoehler number");
    sc_fom->add_option("--nt", fom.params.n_t, "curve samples");
    sc_fom->add_option("--tend", fom.params.t_end, "end time");
    sc_fom->add_option("--cfl", fom.params.cfl, "time step safety factor");
    sc_fom->add_option("--wc-diff", fom.params.washcoat_diffusivity, "washcoat diffusivity");

    auto* sc_train = app.add_subcommand("train", "Select, train and evaluate surrogate models");
    auto* sc_report = app.add_subcommand("report", "Recompute test errors from saved models");
    auto* sc_sweep = app.add_subcommand("sweep-nf", "Train/test error versus PCA dimension");

    int threads = 0;
    bool verbose = false;
    for (auto* sc : {sc_gen, sc_feat, sc_pfit, sc_pproj, sc_fom, sc_train, sc_report, sc_sweep}) {
        sc->add_option("--config", config_path, "JSON config file");
        sc->add_option("--threads", threads, "worker threads (0 = hardware)");
        sc->add_flag("--verbose", verbose, "progress chatter on stderr");
    }
    for (auto* sc : {sc_train, sc_report, sc_sweep})
        sc->get_option("--config")->required();

    // Config values act as defaults, explicit flags win. The file has one
    // section per command ("gen_geoms", "fom", ...); train/report/sweep-nf
    // read the shared "train" (+ "sweep_nf") sections instead.
    const std::string pre_config = scan_config_path(args);
    if (!pre_config.empty() && !args.empty()) {
        const json root = read_json(pre_config, true);
        const json sec = config_section(root, args[0]);
        // A config-supplied value satisfies a required option.
        auto unrequire = [&sec](CLI::App* sc, const char* flag, const char* key) {
            if (sec.contains(key)) sc->get_option(flag)->required(false);
        };
        fill(sec, "threads", threads);
        fill(sec, "verbose", verbose);
        if (args[0] == "gen-geoms") {
            unrequire(sc_gen, "--out", "out");
            fill(sec, "out", gen.out);
            fill(sec, "count", gen.count);
            fill(sec, "n_h", gen.n_h);
            fill(sec, "seed", gen.seed);
            fill(sec, "target_wf", gen.wf);
            fill(sec, "wf_min", gen.wf_min);
            fill(sec, "wf_max", gen.wf_max);
            fill(sec, "binder_frac", gen.binder);
            fill(sec, "r_min", gen.r_min);
            fill(sec, "r_max", gen.r_max);
        } else if (args[0] == "features") {
            unrequire(sc_feat, "--in", "in");
            unrequire(sc_feat, "--out", "out");
            fill(sec, "in", feat.in);
            fill(sec, "out", feat.out);
        } else if (args[0] == "pca-fit") {
            unrequire(sc_pfit, "--in", "in");
            unrequire(sc_pfit, "--n-f", "n_f");
            unrequire(sc_pfit, "--out", "out");
            fill(sec, "in", pfit.in);
            fill(sec, "ids", pfit.ids_file);
            fill(sec, "n_f", pfit.n_f);
            fill(sec, "out", pfit.out);
            fill(sec, "split_label", pfit.split_label);
            fill(sec, "center", pfit.center);
        } else if (args[0] == "pca-project") {
            unrequire(sc_pproj, "--in", "in");
            unrequire(sc_pproj, "--basis", "basis");
            unrequire(sc_pproj, "--out", "out");
            fill(sec, "in", pproj.in);
            fill(sec, "basis", pproj.basis);
            fill(sec, "out", pproj.out);
        } else if (args[0] == "fom") {
            unrequire(sc_fom, "--geoms", "geoms");
            unrequire(sc_fom, "--out", "out");
            fill(sec, "geoms", fom.in);
            fill(sec, "out", fom.out);
            fill(sec, "pe", fom.params.pe);
            fill(sec, "da", fom.params.da);
            fill(sec, "nt", fom.params.n_t);
            fill(sec, "tend", fom.params.t_end);
            fill(sec, "cfl", fom.params.cfl);
            fill(sec, "washcoat_diffusivity", fom.params.washcoat_diffusivity);
        }
    }

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    gen.threads = threads;
    gen.verbose = verbose;
    feat.threads = threads;
    fom.threads = threads;
    fom.verbose = verbose;

    if (sc_gen->parsed()) return run_gen_geoms(gen);
    if (sc_feat->parsed()) return run_features(feat);
    if (sc_pfit->parsed()) return run_pca_fit(pfit);
    if (sc_pproj->parsed()) return run_pca_project(pproj);
    if (sc_fom->parsed()) return run_fom(fom);
    if (sc_train->parsed())
        return run_train(load_pipeline_config(config_path), resolve_threads(threads), verbose);
    if (sc_report->parsed())
        return run_report(load_pipeline_config(config_path), resolve_threads(threads));
    if (sc_sweep->parsed())
        return run_sweep_nf(load_pipeline_config(config_path), resolve_threads(threads), verbose);
    return 2;
}

} // namespace

int cli_main(std::vector<std::string> args) {
    try {
        return dispatch(args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}

int cli_main(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return cli_main(std::move(args));
}

} // namespace poro
