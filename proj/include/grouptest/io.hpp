#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "grouptest/bootstrap.hpp"
#include "grouptest/bp.hpp"
#include "grouptest/em.hpp"
#include "grouptest/pooling.hpp"
#include "grouptest/synth.hpp"

namespace gt {

// Shortest exact decimal form ("%.17g"); deterministic, round-trips.
std::string fmt_double(double v);

// Design file: header "N M NG NO", then M lines of NG 1-based patient ids.
void write_design(std::ostream& os, const PoolingDesign& d);
void write_design_file(const std::string& path, const PoolingDesign& d);
PoolingDesign read_design(std::istream& is);
PoolingDesign read_design_file(const std::string& path);

// CSV "patient,state", 1-based patients.
void write_states(std::ostream& os, const PatientStates& x);
PatientStates read_states(std::istream& is);

// CSV "test,y0,y" (or "test,y" when the truth is absent).
void write_outcomes(std::ostream& os, const TestOutcomes& y);
TestOutcomes read_outcomes(std::istream& is);

// CSV "patient,theta,tau,map".
void write_marginals(std::ostream& os, const MarginalEstimate& est);

// CSV "iter,max_delta".
void write_bp_trace(std::ostream& os, const std::vector<TraceRow>& trace);

// CSV "round,rho,pTP,pFP,S,f,g".
void write_em_trace(std::ostream& os, const EmTrace& trace);

// CSV "patient,tau,sigma,ci_lo,ci_hi,map,boot". Intervals are tau +- z*sigma
// unless explicit percentile intervals are supplied.
void write_bootstrap(std::ostream& os, const BootstrapSummary& summary, double z,
                     const std::vector<Interval>* intervals = nullptr);

} // namespace gt
