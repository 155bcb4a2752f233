#include "grouptest/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "grouptest/errors.hpp"

namespace gt {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_design(std::ostream& os, const PoolingDesign& d) {
    os << d.n_patients << ' ' << d.n_tests << ' ' << d.group_size << ' '
       << d.overlap << '\n';
    for (const auto& pool : d.patients_of_test) {
        for (std::size_t k = 0; k < pool.size(); ++k)
            os << (k ? " " : "") << pool[k] + 1; // 1-based on disk
        os << '\n';
    }
}

void write_design_file(const std::string& path, const PoolingDesign& d) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_design(os, d);
}

PoolingDesign read_design(std::istream& is) {
    PoolingDesign d;
    if (!(is >> d.n_patients >> d.n_tests >> d.group_size >> d.overlap))
        throw IoError("design: malformed header");
    if (d.n_patients <= 0 || d.n_tests <= 0 || d.group_size <= 0 || d.overlap <= 0)
        throw IoError("design: nonpositive header field");
    d.patients_of_test.resize(static_cast<std::size_t>(d.n_tests));
    for (int mu = 0; mu < d.n_tests; ++mu) {
        auto& pool = d.patients_of_test[static_cast<std::size_t>(mu)];
        pool.resize(static_cast<std::size_t>(d.group_size));
        for (int k = 0; k < d.group_size; ++k) {
            int v = 0;
            if (!(is >> v))
                throw IoError("design: truncated pool line " + std::to_string(mu + 1));
            if (v < 1 || v > d.n_patients)
                throw IoError("design: patient index out of range in pool " +
                              std::to_string(mu + 1));
            pool[static_cast<std::size_t>(k)] = v - 1;
        }
    }
    d.tests_of_patient = tests_from_pools(d.n_patients, d.patients_of_test);
    const ValidationReport report = validate_design(d);
    if (!report.ok) throw IoError("design: " + report.violation);
    return d;
}

PoolingDesign read_design_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_design(is);
}

void write_states(std::ostream& os, const PatientStates& x) {
    os << "patient,state\n";
    for (std::size_t i = 0; i < x.states.size(); ++i)
        os << i + 1 << ',' << int(x.states[i]) << '\n';
}

PatientStates read_states(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("patient,state", 0) != 0)
        throw IoError("states: missing 'patient,state' header");
    PatientStates x;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t idx = 0;
        int state = 0;
        if (std::sscanf(line.c_str(), "%zu,%d", &idx, &state) != 2 ||
            idx != x.states.size() + 1 || (state != 0 && state != 1))
            throw IoError("states: malformed row '" + line + "'");
        x.states.push_back(static_cast<std::uint8_t>(state));
    }
    return x;
}

void write_outcomes(std::ostream& os, const TestOutcomes& y) {
    if (y.true_outcomes) {
        os << "test,y0,y\n";
        for (std::size_t mu = 0; mu < y.outcomes.size(); ++mu)
            os << mu + 1 << ',' << int((*y.true_outcomes)[mu]) << ','
               << int(y.outcomes[mu]) << '\n';
    } else {
        os << "test,y\n";
        for (std::size_t mu = 0; mu < y.outcomes.size(); ++mu)
            os << mu + 1 << ',' << int(y.outcomes[mu]) << '\n';
    }
}

TestOutcomes read_outcomes(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw IoError("outcomes: empty input");
    bool with_truth;
    if (line.rfind("test,y0,y", 0) == 0)
        with_truth = true;
    else if (line.rfind("test,y", 0) == 0)
        with_truth = false;
    else
        throw IoError("outcomes: unrecognized header '" + line + "'");
    TestOutcomes y;
    if (with_truth) y.true_outcomes.emplace();
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t idx = 0;
        int a = 0, b = 0;
        if (with_truth) {
            if (std::sscanf(line.c_str(), "%zu,%d,%d", &idx, &a, &b) != 3)
                throw IoError("outcomes: malformed row '" + line + "'");
            y.true_outcomes->push_back(static_cast<std::uint8_t>(a));
            y.outcomes.push_back(static_cast<std::uint8_t>(b));
        } else {
            if (std::sscanf(line.c_str(), "%zu,%d", &idx, &a) != 2)
                throw IoError("outcomes: malformed row '" + line + "'");
            y.outcomes.push_back(static_cast<std::uint8_t>(a));
        }
        if (idx != y.outcomes.size())
            throw IoError("outcomes: rows out of order at '" + line + "'");
    }
    return y;
}

void write_marginals(std::ostream& os, const MarginalEstimate& est) {
    os << "patient,theta,tau,map\n";
    const auto decisions = map_estimate(est);
    for (std::size_t i = 0; i < est.theta_hat.size(); ++i)
        os << i + 1 << ',' << fmt_double(est.theta_hat[i]) << ','
           << fmt_double(est.tau_hat[i]) << ',' << int(decisions[i]) << '\n';
}

void write_bp_trace(std::ostream& os, const std::vector<TraceRow>& trace) {
    os << "iter,max_delta\n";
    for (const auto& row : trace)
        os << row.iter << ',' << fmt_double(row.max_delta) << '\n';
}

void write_em_trace(std::ostream& os, const EmTrace& trace) {
    os << "round,rho,pTP,pFP,S,f,g\n";
    for (const auto& r : trace.rounds)
        os << r.round << ',' << fmt_double(r.rho) << ',' << fmt_double(r.p_tp) << ','
           << fmt_double(r.p_fp) << ',' << fmt_double(r.bethe_entropy) << ','
           << fmt_double(r.f) << ',' << fmt_double(r.g) << '\n';
}

void write_bootstrap(std::ostream& os, const BootstrapSummary& summary, double z,
                     const std::vector<Interval>* intervals) {
    os << "patient,tau,sigma,ci_lo,ci_hi,map,boot\n";
    for (std::size_t i = 0; i < summary.tau_point.size(); ++i) {
        const double tau = summary.tau_point[i];
        const double sigma = summary.sigma_hat[i];
        const double lo = intervals ? (*intervals)[i].lo : tau - z * sigma;
        const double hi = intervals ? (*intervals)[i].hi : tau + z * sigma;
        os << i + 1 << ',' << fmt_double(tau) << ',' << fmt_double(sigma) << ','
           << fmt_double(lo) << ',' << fmt_double(hi) << ',' << (tau > 0.0 ? 1 : 0)
           << ',' << int(summary.decisions[i]) << '\n';
    }
}

} // namespace gt
