#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "grouptest/hbp.hpp"

namespace gt {

enum class Method { bp, exact, bootstrap, em, hbp };

std::string method_name(Method m);

struct SweepAxis {
    std::string key; // n, m, alpha, ng, rho, p_tp, p_fp
    std::vector<double> values;
};

// Parsed sweep description: a flat key-value file with a version header and
// sweep lines forming a cartesian grid (file order, last axis fastest).
struct Scenario {
    Method method = Method::bp;
    int n = 0;
    int m = 0;           // derived from alpha when 0
    double alpha = -1.0; // tests per patient; used when m is 0
    int ng = 0;
    double rho = 0.0;
    double p_tp = 1.0;
    double p_fp = 0.0;
    int replicates = 1;
    std::uint64_t base_seed = 0;

    double damping = 0.1;
    int max_iter = 1000;
    double tol = 1e-8;
    int n_bootstrap = 1000;
    double boot_z = 1.96;
    int em_rounds = 50;
    int em_inner_iter = 200;
    bool em_update_noise = true;
    double hyper_a = 1.0;
    double hyper_b = 1.0;
    HbpMode hbp_mode = HbpMode::quadrature;
    int quad_nodes = 64;
    int exact_cap = 22;
    bool timing = false; // adds wall_clock_s rows; off keeps output byte-stable

    // NaN = bind to the true value (assumed_*, init_p_*) or alpha/2 (init_rho)
    double assumed_rho, assumed_p_tp, assumed_p_fp;
    double init_rho, init_p_tp, init_p_fp;

    std::vector<SweepAxis> sweeps;

    Scenario();
};

Scenario parse_scenario(std::istream& is);
Scenario parse_scenario_file(const std::string& path);

// One concrete grid point with all bindings resolved.
struct GridPoint {
    int n = 0, m = 0, ng = 0, no = 0;
    double rho = 0, p_tp = 1, p_fp = 0;
    double a_rho = 0, a_p_tp = 1, a_p_fp = 0; // assumed (bp/bootstrap/hbp) or EM init
    double alpha() const { return static_cast<double>(m) / n; }
};

// Expands sweeps and validates pooling divisibility for every point.
std::vector<GridPoint> scenario_grid(const Scenario& s);

struct ResultRow {
    GridPoint point;
    std::string metric;
    double value = 0.0;
    double stderr_ = 0.0;
    int n_samples = 0;
};

struct SweepFailure {
    int grid_index = 0;
    int replicate = 0;
    std::string message;
};

struct SweepResult {
    std::vector<ResultRow> rows;
    std::vector<SweepFailure> failures;
};

// Replicate r of grid point g uses seed mix_seed(base_seed, g, r); stream
// seeds for design/states/noise/decoder derive from it with fixed salts.
// Tasks run in parallel; aggregation order is fixed, so the result does not
// depend on the worker count. Decoder errors are recorded per replicate.
SweepResult run_scenario(const Scenario& s, int workers);

// CSV: rho,alpha,NG,pTP,pFP,metric,value,stderr,n_samples then provenance
// columns (n,m,NO,method,assumed bindings,base_seed,replicates).
void write_sweep_csv(std::ostream& os, const Scenario& s, const SweepResult& result);

void write_failure_manifest(std::ostream& os, const SweepResult& result);

} // namespace gt
