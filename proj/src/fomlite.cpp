#include "poro/fomlite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <queue>

#include <json.hpp>

#include "poro/errors.hpp"
#include "poro/modelselect.hpp"
#include "poro/util.hpp"

namespace poro {

namespace {

/// Sparse SPD system for the pressure potential on a voxel subset, stored as
/// adjacency lists (matrix-free would recompute masks every iteration).
struct PressureSystem {
    std::vector<double> diag;
    std::vector<int> row_ptr;
    std::vector<int> col;
    std::vector<double> weight; // off-diagonal conductances (negated on apply)
    std::vector<double> rhs;

    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        const size_t n = diag.size();
        for (size_t r = 0; r < n; ++r) {
            double acc = diag[r] * x[r];
            for (int k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                acc -= weight[k] * x[col[k]];
            y[r] = acc;
        }
    }
};

/// Jacobi-preconditioned conjugate gradient to ||r||_inf <= tol_abs.
/// Returns the final residual max-norm; throws on iteration-cap overrun.
double pcg(const PressureSystem& sys, std::vector<double>& x, double tol_abs, long max_iter) {
    const size_t n = sys.diag.size();
    std::vector<double> r(n), z(n), p(n), q(n);
    sys.apply(x, q);
    double rmax = 0.0;
    for (size_t i = 0; i < n; ++i) {
        r[i] = sys.rhs[i] - q[i];
        rmax = std::max(rmax, std::abs(r[i]));
    }
    if (rmax <= tol_abs) return rmax;
    double rz = 0.0;
    for (size_t i = 0; i < n; ++i) {
        z[i] = r[i] / sys.diag[i];
        p[i] = z[i];
        rz += r[i] * z[i];
    }
    for (long it = 0; it < max_iter; ++it) {
        sys.apply(p, q);
        double pq = 0.0;
        for (size_t i = 0; i < n; ++i) pq += p[i] * q[i];
        if (!(pq > 0.0)) throw NumericError("potential flow: CG broke down (p^T A p <= 0)");
        double alpha = rz / pq;
        rmax = 0.0;
        for (size_t i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            rmax = std::max(rmax, std::abs(r[i]));
        }
        if (rmax <= tol_abs) return rmax;
        double rz_new = 0.0;
        for (size_t i = 0; i < n; ++i) {
            z[i] = r[i] / sys.diag[i];
            rz_new += r[i] * z[i];
        }
        double beta = rz_new / rz;
        rz = rz_new;
        for (size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    throw NumericError("potential flow: CG did not reach tolerance " +
                       util::format_g17(tol_abs) + " (residual " + util::format_g17(rmax) + ")");
}

} // namespace

FlowField potential_flow(const VoxelGeometry& g, double u_in) {
    const uint32_t n = g.n_h;
    const double h = g.voxel_size();
    const size_t n3 = g.voxel_count();
    const size_t sy = n, sz = size_t(n) * n;
    const auto& free = g.free_mask;

    // Solve domain: free voxels reachable from either Dirichlet face. The
    // inlet component must reach the outlet; pockets touching only one
    // Dirichlet face get a constant potential (zero flow), sealed pockets are
    // excluded so the reduced system stays positive definite.
    std::vector<int> unknown(n3, -1);
    std::vector<uint8_t> from_inlet(n3, 0);
    std::queue<size_t> q;
    for (uint32_t z = 0; z < n; ++z)
        for (uint32_t y = 0; y < n; ++y) {
            size_t idx = g.index(0, y, z);
            if (free[idx]) {
                from_inlet[idx] = 1;
                q.push(idx);
            }
        }
    bool reaches_outlet = false;
    auto bfs = [&](std::vector<uint8_t>& seen) {
        while (!q.empty()) {
            size_t idx = q.front();
            q.pop();
            uint32_t x = idx % n;
            if (x == n - 1) reaches_outlet = true;
            auto visit = [&](size_t nb) {
                if (!seen[nb] && free[nb]) {
                    seen[nb] = 1;
                    q.push(nb);
                }
            };
            if (x > 0) visit(idx - 1);
            if (x + 1 < n) visit(idx + 1);
            uint32_t y = (idx / n) % n, z = idx / sz;
            if (y > 0) visit(idx - sy);
            if (y + 1 < n) visit(idx + sy);
            if (z > 0) visit(idx - sz);
            if (z + 1 < n) visit(idx + sz);
        }
    };
    bfs(from_inlet);
    if (!reaches_outlet)
        throw NumericError("potential flow: pore space disconnected (no inlet-outlet path)");
    std::vector<uint8_t> reached = from_inlet;
    for (uint32_t z = 0; z < n; ++z)
        for (uint32_t y = 0; y < n; ++y) {
            size_t idx = g.index(n - 1, y, z);
            if (free[idx] && !reached[idx]) {
                reached[idx] = 1;
                q.push(idx);
            }
        }
    bfs(reached);

    std::vector<size_t> cells;
    for (size_t idx = 0; idx < n3; ++idx)
        if (reached[idx]) {
            unknown[idx] = static_cast<int>(cells.size());
            cells.push_back(idx);
        }

    // Assemble: conductance h per interior free-free face, 2h per Dirichlet
    // half-cell face at inlet/outlet.
    PressureSystem sys;
    const size_t nc = cells.size();
    sys.diag.assign(nc, 0.0);
    sys.rhs.assign(nc, 0.0);
    sys.row_ptr.assign(nc + 1, 0);
    auto add_neighbors = [&](size_t idx, auto&& fn) {
        uint32_t x = idx % n, y = (idx / n) % n, z = idx / sz;
        if (x > 0) fn(idx - 1);
        if (x + 1 < n) fn(idx + 1);
        if (y > 0) fn(idx - sy);
        if (y + 1 < n) fn(idx + sy);
        if (z > 0) fn(idx - sz);
        if (z + 1 < n) fn(idx + sz);
    };
    for (size_t r = 0; r < nc; ++r) {
        int count = 0;
        add_neighbors(cells[r], [&](size_t nb) { count += unknown[nb] >= 0; });
        sys.row_ptr[r + 1] = sys.row_ptr[r] + count;
    }
    sys.col.resize(sys.row_ptr[nc]);
    sys.weight.resize(sys.row_ptr[nc]);
    for (size_t r = 0; r < nc; ++r) {
        size_t idx = cells[r];
        uint32_t x = idx % n;
        int k = sys.row_ptr[r];
        add_neighbors(idx, [&](size_t nb) {
            if (unknown[nb] < 0) return;
            sys.col[k] = unknown[nb];
            sys.weight[k] = h;
            sys.diag[r] += h;
            ++k;
        });
        if (x == 0) sys.diag[r] += 2.0 * h;            // inlet Dirichlet, p = p_in
        if (x == n - 1) sys.diag[r] += 2.0 * h;        // outlet Dirichlet, p = 0
    }

    // Phase 1: unit pressure drop, moderate tolerance, to learn the scale.
    std::vector<double> p(nc, 0.0);
    for (size_t r = 0; r < nc; ++r)
        if (cells[r] % n == 0) sys.rhs[r] = 2.0 * h;
    const long max_iter = 200000;
    pcg(sys, p, 1e-6 * h * h * h, max_iter);

    size_t inlet_faces = 0;
    double inlet_v_sum = 0.0;
    for (size_t r = 0; r < nc; ++r)
        if (cells[r] % n == 0) {
            ++inlet_faces;
            inlet_v_sum += 2.0 * (1.0 - p[r]) / h;
        }
    for (uint32_t z = 0; z < n; ++z)
        for (uint32_t y = 0; y < n; ++y) {
            size_t idx = g.index(0, y, z);
            if (free[idx] && unknown[idx] < 0) ++inlet_faces; // stagnant inlet pocket, v = 0
        }
    if (!(inlet_v_sum > 0.0))
        throw NumericError("potential flow: no net inlet flow");
    double scale = u_in * static_cast<double>(inlet_faces) / inlet_v_sum;

    // Phase 2: rescale the Dirichlet drop so velocities are O(u_in), warm
    // start, then converge the divergence (in velocity units) below 1e-9.
    for (size_t r = 0; r < nc; ++r) {
        sys.rhs[r] *= scale;
        p[r] *= scale;
    }
    pcg(sys, p, 1e-9 * h * h * h, max_iter);

    // Exact mean-inlet normalization (the phase-2 system is already close).
    inlet_v_sum = 0.0;
    for (size_t r = 0; r < nc; ++r)
        if (cells[r] % n == 0) inlet_v_sum += 2.0 * (scale - p[r]) / h;
    double s2 = u_in * static_cast<double>(inlet_faces) / inlet_v_sum;

    FlowField flow;
    flow.n = n;
    flow.vx.assign((size_t(n) + 1) * n * n, 0.0);
    flow.vy.assign((size_t(n) + 1) * n * n, 0.0);
    flow.vz.assign((size_t(n) + 1) * n * n, 0.0);
    auto pot = [&](size_t idx) { return p[unknown[idx]]; };
    for (uint32_t z = 0; z < n; ++z)
        for (uint32_t y = 0; y < n; ++y)
            for (uint32_t x = 0; x < n; ++x) {
                size_t idx = g.index(x, y, z);
                if (unknown[idx] < 0) continue;
                if (x == 0) flow.vx[flow.fx(0, y, z)] = s2 * 2.0 * (scale - pot(idx)) / h;
                if (x == n - 1) flow.vx[flow.fx(n, y, z)] = s2 * 2.0 * pot(idx) / h;
                if (x + 1 < n && unknown[idx + 1] >= 0)
                    flow.vx[flow.fx(x + 1, y, z)] = s2 * (pot(idx) - pot(idx + 1)) / h;
                if (y + 1 < n && unknown[idx + sy] >= 0)
                    flow.vy[flow.fy(y + 1, x, z)] = s2 * (pot(idx) - pot(idx + sy)) / h;
                if (z + 1 < n && unknown[idx + sz] >= 0)
                    flow.vz[flow.fz(z + 1, x, y)] = s2 * (pot(idx) - pot(idx + sz)) / h;
            }
    return flow;
}

double max_abs_divergence(const VoxelGeometry& g, const FlowField& flow) {
    const uint32_t n = g.n_h;
    const double h = g.voxel_size();
    double worst = 0.0;
    for (uint32_t z = 0; z < n; ++z)
        for (uint32_t y = 0; y < n; ++y)
            for (uint32_t x = 0; x < n; ++x) {
                if (!g.free_mask[g.index(x, y, z)]) continue;
                double net = flow.vx[flow.fx(x + 1, y, z)] - flow.vx[flow.fx(x, y, z)] +
                             flow.vy[flow.fy(y + 1, x, z)] - flow.vy[flow.fy(y, x, z)] +
                             flow.vz[flow.fz(z + 1, x, y)] - flow.vz[flow.fz(z, x, y)];
                worst = std::max(worst, std::abs(net / h));
            }
    return worst;
}

BreakthroughCurve solve_cdr(const VoxelGeometry& g, const FlowField& flow, const CdrParams& p,
                            CdrRunStats* stats, CdrDiagnostics* diag) {
    if (p.n_t < 2) throw ConfigError("solve_cdr: n_t must be at least 2");
    if (!(p.t_end > 0.0)) throw ConfigError("solve_cdr: t_end must be positive");
    if (!(p.cfl > 0.0 && p.cfl <= 1.0)) throw ConfigError("solve_cdr: cfl must lie in (0,1]");
    if (p.da < 0.0 || p.pe < 0.0) throw ConfigError("solve_cdr: pe and da must be non-negative");
    if (!(p.washcoat_diffusivity > 0.0))
        throw ConfigError("solve_cdr: washcoat diffusivity must be positive");
    const uint32_t n = g.n_h;
    if (flow.n != n) throw ConfigError("solve_cdr: flow field resolution mismatch");
    const double h = g.voxel_size();
    const double h2 = h * h, h3 = h * h * h;
    const size_t n3 = g.voxel_count();
    const size_t sy = n, sz = size_t(n) * n;

    auto diffusivity = [&](size_t idx) -> double {
        if (g.free_mask[idx]) return 1.0;
        if (g.washcoat_mask[idx]) return p.washcoat_diffusivity;
        return 0.0;
    };

    // Face conductances (harmonic mean across phase interfaces, 0 at solid)
    // and convective volumetric rates Pe*v*h^2 (free-free and boundary faces
    // only; the flow field is zero elsewhere by construction).
    const size_t fsize = (size_t(n) + 1) * n * n;
    std::vector<double> gx(fsize, 0.0), gy(fsize, 0.0), gz(fsize, 0.0);
    std::vector<double> qx(fsize, 0.0), qy(fsize, 0.0), qz(fsize, 0.0);
    auto face_g = [&](size_t a, size_t b) {
        double da_ = diffusivity(a), db_ = diffusivity(b);
        if (da_ == 0.0 || db_ == 0.0) return 0.0;
        return h * 2.0 * da_ * db_ / (da_ + db_);
    };
    for (uint32_t z = 0; z < n; ++z)
        for (uint32_t y = 0; y < n; ++y)
            for (uint32_t x = 0; x < n; ++x) {
                size_t idx = g.index(x, y, z);
                if (x + 1 < n) {
                    gx[flow.fx(x + 1, y, z)] = face_g(idx, idx + 1);
                    qx[flow.fx(x + 1, y, z)] = p.pe * flow.vx[flow.fx(x + 1, y, z)] * h2;
                }
                if (y + 1 < n) {
                    gy[flow.fy(y + 1, x, z)] = face_g(idx, idx + sy);
                    qy[flow.fy(y + 1, x, z)] = p.pe * flow.vy[flow.fy(y + 1, x, z)] * h2;
                }
                if (z + 1 < n) {
                    gz[flow.fz(z + 1, x, y)] = face_g(idx, idx + sz);
                    qz[flow.fz(z + 1, x, y)] = p.pe * flow.vz[flow.fz(z + 1, x, y)] * h2;
                }
            }

    // Boundary faces: inlet free voxels get a Dirichlet (c=1) half-cell
    // diffusive conductance plus convective influx; outlet free voxels get
    // convective outflux only (zero-Neumann diffusion).
    struct BoundaryFace {
        size_t cell;
        double g_in;
        double q;
    };
    std::vector<BoundaryFace> inlet, outlet;
    for (uint32_t z = 0; z < n; ++z)
        for (uint32_t y = 0; y < n; ++y) {
            size_t lo = g.index(0, y, z);
            if (g.free_mask[lo])
                inlet.push_back({lo, 2.0 * h, p.pe * flow.vx[flow.fx(0, y, z)] * h2});
            size_t hi = g.index(n - 1, y, z);
            if (g.free_mask[hi])
                outlet.push_back({hi, 0.0, p.pe * flow.vx[flow.fx(n, y, z)] * h2});
        }

    double v_max = 0.0;
    for (size_t i = 0; i < fsize; ++i)
        v_max = std::max({v_max, std::abs(flow.vx[i]), std::abs(flow.vy[i]),
                          std::abs(flow.vz[i])});

    const double d_max = std::max(1.0, p.washcoat_diffusivity);
    double dt_bound = h2 / (6.0 * d_max);
    if (p.pe * v_max > 0.0) dt_bound = std::min(dt_bound, h / (p.pe * v_max));
    if (p.da > 0.0) dt_bound = std::min(dt_bound, 1.0 / p.da);
    dt_bound *= p.cfl;

    const double dt_sample = p.t_end / (p.n_t - 1);
    const long substeps = std::max<long>(1, static_cast<long>(std::ceil(dt_sample / dt_bound)));
    const double dt = dt_sample / static_cast<double>(substeps);

    std::vector<double> c(n3, 0.0), acc(n3, 0.0);
    std::vector<uint8_t> active(n3, 0), wash(n3, 0);
    for (size_t idx = 0; idx < n3; ++idx) {
        active[idx] = g.free_mask[idx] || g.washcoat_mask[idx];
        wash[idx] = g.washcoat_mask[idx];
    }

    BreakthroughCurve curve;
    curve.t_end = p.t_end;
    curve.values = Eigen::VectorXd::Zero(p.n_t);
    auto outlet_integral = [&] {
        double a = 0.0;
        for (const auto& f : outlet) a += c[f.cell] * h2;
        return a;
    };
    curve.values(0) = outlet_integral();

    long total_steps = 0;
    for (int k = 1; k < p.n_t; ++k) {
        for (long s = 0; s < substeps; ++s) {
            double influx = 0.0, outflux = 0.0;
            std::fill(acc.begin(), acc.end(), 0.0);
            // Interior faces, upwinded convection.
            for (uint32_t z = 0; z < n; ++z)
                for (uint32_t y = 0; y < n; ++y) {
                    size_t base = g.index(0, y, z);
                    for (uint32_t x = 1; x < n; ++x) {
                        size_t f = flow.fx(x, y, z);
                        if (gx[f] == 0.0 && qx[f] == 0.0) continue;
                        size_t L = base + x - 1, R = base + x;
                        double flux = gx[f] * (c[L] - c[R]) + (qx[f] > 0.0 ? qx[f] * c[L] : qx[f] * c[R]);
                        acc[L] -= flux;
                        acc[R] += flux;
                    }
                }
            for (uint32_t z = 0; z < n; ++z)
                for (uint32_t y = 1; y < n; ++y)
                    for (uint32_t x = 0; x < n; ++x) {
                        size_t f = flow.fy(y, x, z);
                        if (gy[f] == 0.0 && qy[f] == 0.0) continue;
                        size_t L = g.index(x, y - 1, z), R = L + sy;
                        double flux = gy[f] * (c[L] - c[R]) + (qy[f] > 0.0 ? qy[f] * c[L] : qy[f] * c[R]);
                        acc[L] -= flux;
                        acc[R] += flux;
                    }
            for (uint32_t z = 1; z < n; ++z)
                for (uint32_t y = 0; y < n; ++y)
                    for (uint32_t x = 0; x < n; ++x) {
                        size_t f = flow.fz(z, x, y);
                        if (gz[f] == 0.0 && qz[f] == 0.0) continue;
                        size_t L = g.index(x, y, z - 1), R = L + sz;
                        double flux = gz[f] * (c[L] - c[R]) + (qz[f] > 0.0 ? qz[f] * c[L] : qz[f] * c[R]);
                        acc[L] -= flux;
                        acc[R] += flux;
                    }
            for (const auto& f : inlet) {
                double flux = f.g_in * (1.0 - c[f.cell]) + f.q; // upwind carries c_in = 1
                acc[f.cell] += flux;
                if (diag) influx += flux;
            }
            for (const auto& f : outlet) {
                double flux = f.q * c[f.cell];
                acc[f.cell] -= flux;
                if (diag) outflux += flux;
            }
            for (size_t idx = 0; idx < n3; ++idx) {
                if (!active[idx]) continue;
                double react = wash[idx] ? p.da * c[idx] : 0.0;
                c[idx] += dt * (acc[idx] / h3 - react);
            }
            ++total_steps;
            if (diag) {
                double mass_after = 0.0;
                double lo = 1.0, hi = 0.0;
                for (size_t idx = 0; idx < n3; ++idx) {
                    mass_after += c[idx];
                    if (active[idx]) {
                        lo = std::min(lo, c[idx]);
                        hi = std::max(hi, c[idx]);
                    }
                }
                diag->steps.push_back({mass_after * h3, influx, outflux, dt, lo, hi});
            }
        }
        double a = outlet_integral();
        if (!std::isfinite(a))
            throw NumericError("solve_cdr: non-finite solution at step " +
                               std::to_string(total_steps));
        curve.values(k) = a;
    }
    for (size_t idx = 0; idx < n3; ++idx)
        if (!std::isfinite(c[idx]))
            throw NumericError("solve_cdr: non-finite concentration field at end of run");

    if (stats) *stats = {dt, total_steps, v_max};
    return curve;
}

SolveResult solve_breakthrough(const VoxelGeometry& g, const CdrParams& p) {
    FlowField flow = potential_flow(g, 1.0);
    SolveResult out;
    out.curve = solve_cdr(g, flow, p, &out.stats);
    return out;
}

GenerateSummary generate_dataset(const std::vector<GeometryConfig>& configs, const CdrParams& p,
                                 const std::filesystem::path& out_dir, int threads) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    GenerateSummary summary;
    summary.samples.resize(configs.size());
    std::vector<Eigen::VectorXd> curves(configs.size());
    std::vector<VoxelGeometry> geoms(configs.size());

    util::parallel_for(configs.size(), threads, [&](size_t i) {
        char name[16];
        std::snprintf(name, sizeof name, "g%04zu", i);
        SampleRecord& rec = summary.samples[i];
        rec.id = name;
        rec.config = configs[i];
        auto t0 = std::chrono::steady_clock::now();
        try {
            geoms[i] = generate_sample(configs[i]);
            SolveResult res = solve_breakthrough(geoms[i], p);
            curves[i] = res.curve.values;
            rec.stats = res.stats;
            rec.ok = true;
        } catch (const Error& e) {
            rec.error = e.what();
        }
        rec.wall_ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    });

    std::vector<std::string> ok_ids;
    std::vector<Eigen::Index> ok_rows;
    for (size_t i = 0; i < configs.size(); ++i)
        if (summary.samples[i].ok) {
            save_pvx(out_dir / (summary.samples[i].id + ".pvx"), geoms[i]);
            ok_ids.push_back(summary.samples[i].id);
            ok_rows.push_back(static_cast<Eigen::Index>(i));
        }
    Eigen::MatrixXd curve_mat(static_cast<Eigen::Index>(ok_rows.size()), p.n_t);
    for (size_t r = 0; r < ok_rows.size(); ++r)
        curve_mat.row(static_cast<Eigen::Index>(r)) = curves[static_cast<size_t>(ok_rows[r])];
    summary.curves_csv = out_dir / "curves.csv";
    write_curves_csv(summary.curves_csv, ok_ids, curve_mat);

    nlohmann::json manifest;
    manifest["params"] = {{"pe", p.pe},
                          {"da", p.da},
                          {"n_t", p.n_t},
                          {"t_end", p.t_end},
                          {"cfl", p.cfl},
                          {"washcoat_diffusivity", p.washcoat_diffusivity}};
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& rec : summary.samples) {
        nlohmann::json s;
        s["id"] = rec.id;
        s["config"] = {{"n_h", rec.config.n_h},
                       {"target_washcoat_fraction", rec.config.target_washcoat_fraction},
                       {"binder_fraction", rec.config.binder_fraction},
                       {"sphere_radius_min", rec.config.sphere_radius_min},
                       {"sphere_radius_max", rec.config.sphere_radius_max},
                       {"rng_seed", rec.config.rng_seed}};
        s["status"] = rec.ok ? "ok" : "failed";
        if (!rec.ok) s["error"] = rec.error;
        s["wall_ms"] = rec.wall_ms;
        if (rec.ok)
            s["solver"] = {{"dt", rec.stats.dt}, {"steps", rec.stats.steps},
                           {"v_max", rec.stats.v_max}};
        samples.push_back(std::move(s));
    }
    manifest["samples"] = std::move(samples);
    summary.manifest_json = out_dir / "manifest.json";
    util::write_file(summary.manifest_json, manifest.dump(2) + "\n");
    return summary;
}

} // namespace poro
