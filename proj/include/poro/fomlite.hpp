#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "poro/voxelgeom.hpp"

namespace poro {

/// Face-normal velocities on the staggered grid. Faces normal to axis a are
/// indexed with the face coordinate first (0..n inclusive):
///   vx[i + (n+1)*(j + n*k)] sits between voxels (i-1,j,k) and (i,j,k).
/// Velocities are nonzero only on free-free faces and on inlet/outlet faces
/// of free voxels; positive along +axis.
struct FlowField {
    uint32_t n = 0;
    std::vector<double> vx, vy, vz;

    size_t fx(size_t i, size_t j, size_t k) const { return i + (size_t(n) + 1) * (j + size_t(n) * k); }
    size_t fy(size_t j, size_t i, size_t k) const { return j + (size_t(n) + 1) * (i + size_t(n) * k); }
    size_t fz(size_t k, size_t i, size_t j) const { return k + (size_t(n) + 1) * (i + size_t(n) * j); }
};

/// Potential-flow velocity substitute: discrete Laplace problem on the free
/// phase with Dirichlet faces at the inlet (x=0) and outlet (x=1) and
/// zero-flux walls elsewhere; v = -grad p on faces, then scaled so the mean
/// inlet face velocity equals u_in. Free voxels not reachable from either
/// Dirichlet face keep v = 0 (stagnant pockets).
FlowField potential_flow(const VoxelGeometry& g, double u_in = 1.0);

/// Largest |div v| over free voxels, divergence in velocity units (1/h^3 of
/// the net face outflow).
double max_abs_divergence(const VoxelGeometry& g, const FlowField& flow);

struct CdrParams {
    double pe = 5.0;   // convection scaling Pe_L
    double da = 0.1;   // washcoat reaction sink Da_L
    int n_t = 500;     // output samples on the equidistant time grid
    double t_end = 1.0;
    double cfl = 0.2;  // safety factor on the explicit-Euler step bound
    double washcoat_diffusivity = 1.0;
};

struct BreakthroughCurve {
    Eigen::VectorXd values; // n_t samples, values[0] = 0
    double t_end = 1.0;
};

struct CdrRunStats {
    double dt = 0;
    long steps = 0;
    double v_max = 0;
};

/// Per-step conservation diagnostics (mass by full field resummation).
struct CdrStepRecord {
    double mass;
    double influx_rate;  // boundary influx at step start (diffusive + convective inlet)
    double outflux_rate; // convective outlet outflux at step start
    double dt;
    double min_c; // field bounds after the step, over active voxels
    double max_c;
};
struct CdrDiagnostics {
    std::vector<CdrStepRecord> steps;
};

/// Explicit-Euler finite-volume solve of
///   dc/dt - div(D grad c) + Pe div(v c) + Da c*[washcoat] = 0
/// on free+washcoat voxels: unit diffusivity in the free phase, harmonic face
/// averaging at phase interfaces, first-order upwind convection (free phase
/// only), c=1 Dirichlet at inlet free faces, zero Neumann elsewhere.
/// dt <= cfl * min(h^2/(6 D_max), h/(Pe v_max), 1/Da), refined so the n_t
/// equidistant sample times are hit exactly. Curve value = sum of c h^2 over
/// outlet free faces.
BreakthroughCurve solve_cdr(const VoxelGeometry& g, const FlowField& flow, const CdrParams& p,
                            CdrRunStats* stats = nullptr, CdrDiagnostics* diag = nullptr);

struct SolveResult {
    BreakthroughCurve curve;
    CdrRunStats stats;
};
/// potential_flow + solve_cdr with mean inlet speed 1.
SolveResult solve_breakthrough(const VoxelGeometry& g, const CdrParams& p);

struct SampleRecord {
    std::string id;
    GeometryConfig config;
    bool ok = false;
    std::string error;
    double wall_ms = 0;
    CdrRunStats stats;
};

struct GenerateSummary {
    std::vector<SampleRecord> samples;
    std::filesystem::path curves_csv;
    std::filesystem::path manifest_json;
};

/// Full chain per config: generate -> flow -> CDR. Writes <id>.pvx files, a
/// curves CSV (failed samples omitted) and a manifest JSON with per-sample
/// seeds, configs, wall times and solver stats. Per-sample failures are
/// recorded and do not abort the batch.
GenerateSummary generate_dataset(const std::vector<GeometryConfig>& configs, const CdrParams& p,
                                 const std::filesystem::path& out_dir, int threads = 1);

} // namespace poro
