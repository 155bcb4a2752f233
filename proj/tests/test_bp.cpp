#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "grouptest/bp.hpp"
#include "grouptest/errors.hpp"
#include "grouptest/exact.hpp"
#include "grouptest/pooling.hpp"
#include "grouptest/synth.hpp"

using namespace gt;

namespace {

PoolingDesign identity_design(int n) {
    PoolingDesign d;
    d.n_patients = n;
    d.n_tests = n;
    d.group_size = 1;
    d.overlap = 1;
    d.patients_of_test.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) d.patients_of_test[static_cast<std::size_t>(i)] = {i};
    d.tests_of_patient = tests_from_pools(n, d.patients_of_test);
    return d;
}

// reference sweep sharing the forward/backward association order but with
// no damping arithmetic at all
void reference_undamped_sweep(const FactorGraph& g, const std::vector<double>& u,
                              const std::vector<double>& w,
                              const std::vector<double>& priors, MessageState& ms) {
    const std::size_t ne = static_cast<std::size_t>(g.n_edges);
    std::vector<double> excl_pool(ne), excl_on(ne), excl_off(ne);
    for (int mu = 0; mu < g.n_tests; ++mu) {
        const int first = g.test_offset[static_cast<std::size_t>(mu)];
        const int last = g.test_offset[static_cast<std::size_t>(mu) + 1];
        double acc = 1.0;
        for (int e = first; e < last; ++e) {
            excl_pool[static_cast<std::size_t>(e)] = acc;
            acc *= 1.0 - ms.theta_to_test[static_cast<std::size_t>(e)];
        }
        acc = 1.0;
        for (int e = last - 1; e >= first; --e) {
            excl_pool[static_cast<std::size_t>(e)] *= acc;
            acc *= 1.0 - ms.theta_to_test[static_cast<std::size_t>(e)];
        }
    }
    for (int i = 0; i < g.n_patients; ++i) {
        const int first = g.patient_offset[static_cast<std::size_t>(i)];
        const int last = g.patient_offset[static_cast<std::size_t>(i) + 1];
        double on = 1.0, off = 1.0;
        for (int k = first; k < last; ++k) {
            const double v = ms.theta_to_patient[static_cast<std::size_t>(
                g.patient_edge[static_cast<std::size_t>(k)])];
            excl_on[static_cast<std::size_t>(k)] = on;
            excl_off[static_cast<std::size_t>(k)] = off;
            on *= v;
            off *= 1.0 - v;
        }
        on = off = 1.0;
        for (int k = last - 1; k >= first; --k) {
            const double v = ms.theta_to_patient[static_cast<std::size_t>(
                g.patient_edge[static_cast<std::size_t>(k)])];
            excl_on[static_cast<std::size_t>(k)] *= on;
            excl_off[static_cast<std::size_t>(k)] *= off;
            on *= v;
            off *= 1.0 - v;
        }
    }
    MessageState next = ms;
    for (int mu = 0; mu < g.n_tests; ++mu)
        for (int e = g.test_offset[static_cast<std::size_t>(mu)];
             e < g.test_offset[static_cast<std::size_t>(mu) + 1]; ++e) {
            const double q = excl_pool[static_cast<std::size_t>(e)];
            next.theta_to_patient[static_cast<std::size_t>(e)] =
                u[static_cast<std::size_t>(mu)] /
                (u[static_cast<std::size_t>(mu)] * (2.0 - q) +
                 w[static_cast<std::size_t>(mu)] * q);
        }
    for (int i = 0; i < g.n_patients; ++i)
        for (int k = g.patient_offset[static_cast<std::size_t>(i)];
             k < g.patient_offset[static_cast<std::size_t>(i) + 1]; ++k) {
            const int e = g.patient_edge[static_cast<std::size_t>(k)];
            const double a =
                priors[static_cast<std::size_t>(i)] * excl_on[static_cast<std::size_t>(k)];
            const double b = (1.0 - priors[static_cast<std::size_t>(i)]) *
                             excl_off[static_cast<std::size_t>(k)];
            next.theta_to_test[static_cast<std::size_t>(e)] = a / (a + b);
        }
    ms = next;
}

} // namespace

TEST_CASE("run_bp: identity design, noiseless, marginals equal outcomes") {
    const int n = 16;
    const PoolingDesign d = identity_design(n);
    TestOutcomes y;
    y.outcomes.assign(static_cast<std::size_t>(n), 0);
    for (int i = 0; i < n; i += 3) y.outcomes[static_cast<std::size_t>(i)] = 1;
    for (double rho : {0.01, 0.3, 0.9}) {
        const AssumedParams params{rho, {1.0, 0.0}};
        // undamped: the empty-product messages hit the fixed point in one
        // sweep, so the marginals are exactly the outcomes
        BpConfig cfg;
        cfg.rng_seed = 7;
        cfg.damping = 1.0;
        const BpResult r = run_bp(y, d, params, cfg);
        for (int i = 0; i < n; ++i)
            CHECK(r.estimate.theta_hat[static_cast<std::size_t>(i)] ==
                  double(y.outcomes[static_cast<std::size_t>(i)]));
        // damped runs approach the same point to iteration tolerance
        cfg.damping = 0.1;
        const BpResult rd = run_bp(y, d, params, cfg);
        for (int i = 0; i < n; ++i)
            CHECK(std::abs(rd.estimate.theta_hat[static_cast<std::size_t>(i)] -
                           double(y.outcomes[static_cast<std::size_t>(i)])) < 1e-4);
        CHECK(map_estimate(rd.estimate) ==
              std::vector<std::uint8_t>(y.outcomes.begin(), y.outcomes.end()));
    }
}

TEST_CASE("run_bp: tracks exact enumeration on a small loopy instance") {
    const PoolingDesign d = generate_design(20, 10, 10, 404);
    const PatientStates x = generate_states(20, 0.1, 405);
    const NoiseModel noise{0.95, 0.02};
    const TestOutcomes y = observe(true_pool_states(d, x), noise, 406);
    const AssumedParams params{0.1, noise};

    BpConfig cfg;
    cfg.rng_seed = 407;
    const BpResult bp = run_bp(y, d, params, cfg);
    const MarginalEstimate oracle = exact_marginals(y, d, params);

    std::vector<double> err(20);
    for (int i = 0; i < 20; ++i)
        err[static_cast<std::size_t>(i)] =
            std::abs(bp.estimate.theta_hat[static_cast<std::size_t>(i)] -
                     oracle.theta_hat[static_cast<std::size_t>(i)]);
    std::sort(err.begin(), err.end());
    const double median = 0.5 * (err[9] + err[10]);
    CHECK(median <= 0.05);
}

TEST_CASE("run_bp: large-rho collapse toward the prior") {
    const PoolingDesign d = generate_design(200, 100, 10, 31);
    const double rho = 0.4;
    const PatientStates x = generate_states(200, rho, 32);
    const NoiseModel noise{0.95, 0.02};
    const TestOutcomes y = observe(true_pool_states(d, x), noise, 33);
    const AssumedParams params{rho, noise};
    BpConfig cfg;
    cfg.rng_seed = 34;
    const BpResult r = run_bp(y, d, params, cfg);
    double mean_abs = 0.0;
    for (double t : r.estimate.theta_hat) mean_abs += std::abs(t - rho);
    mean_abs /= 200.0;
    CHECK(mean_abs < 0.06);
    // messages from tests approach 1/2
    double mean_msg_dev = 0.0;
    for (double v : r.messages.theta_to_patient) mean_msg_dev += std::abs(v - 0.5);
    mean_msg_dev /= static_cast<double>(r.messages.theta_to_patient.size());
    CHECK(mean_msg_dev < 0.05);
    // MAP all-zero in this regime
    const auto dec = map_estimate(r.estimate);
    CHECK(std::count(dec.begin(), dec.end(), 1) == 0);
}

TEST_CASE("bp sweep: messages stay in [0,1] every iteration") {
    const PoolingDesign d = generate_design(30, 15, 6, 77);
    const PatientStates x = generate_states(30, 0.2, 78);
    const NoiseModel noise{0.9, 0.05};
    const TestOutcomes y = observe(true_pool_states(d, x), noise, 79);
    auto [u, w] = test_weights(y, noise);
    std::vector<double> priors(30, 0.2);

    BpRunner runner(d);
    MessageState msgs;
    BpConfig cfg;
    cfg.rng_seed = 80;
    runner.init_messages(cfg, msgs);
    for (int t = 0; t < 50; ++t) {
        runner.sweep(u, w, priors, 0.1, msgs);
        for (double v : msgs.theta_to_test) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
        for (double v : msgs.theta_to_patient) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("bp sweep: damping 1 equals the undamped update bitwise") {
    const PoolingDesign d = generate_design(24, 12, 6, 55);
    const PatientStates x = generate_states(24, 0.25, 56);
    const NoiseModel noise{0.9, 0.08};
    const TestOutcomes y = observe(true_pool_states(d, x), noise, 57);
    auto [u, w] = test_weights(y, noise);
    std::vector<double> priors(24, 0.25);

    BpRunner runner(d);
    MessageState damped, reference;
    BpConfig cfg;
    cfg.rng_seed = 58;
    runner.init_messages(cfg, damped);
    reference = damped;
    for (int t = 0; t < 20; ++t) {
        runner.sweep(u, w, priors, 1.0, damped);
        reference_undamped_sweep(runner.graph(), u, w, priors, reference);
        REQUIRE(damped.theta_to_test == reference.theta_to_test);
        REQUIRE(damped.theta_to_patient == reference.theta_to_patient);
    }
}

TEST_CASE("run_bp: deterministic per seed") {
    const PoolingDesign d = generate_design(50, 25, 10, 91);
    const PatientStates x = generate_states(50, 0.1, 92);
    const NoiseModel noise{0.95, 0.05};
    const TestOutcomes y = observe(true_pool_states(d, x), noise, 93);
    const AssumedParams params{0.1, noise};
    BpConfig cfg;
    cfg.rng_seed = 94;
    const BpResult a = run_bp(y, d, params, cfg);
    const BpResult b = run_bp(y, d, params, cfg);
    CHECK(a.estimate.theta_hat == b.estimate.theta_hat);
    CHECK(a.messages.theta_to_test == b.messages.theta_to_test);
    cfg.rng_seed = 95;
    const BpResult c = run_bp(y, d, params, cfg);
    CHECK(a.estimate.theta_hat != c.estimate.theta_hat);
}

TEST_CASE("bp: trivial fixed point at p_fp = 0") {
    const PoolingDesign d = generate_design(12, 6, 4, 61);
    TestOutcomes y;
    y.outcomes.assign(6, 1);
    const NoiseModel noise{0.9, 0.0};
    auto [u, w] = test_weights(y, noise);
    std::vector<double> priors(12, 0.2);

    BpRunner runner(d);
    MessageState msgs;
    msgs.theta_to_test.assign(static_cast<std::size_t>(runner.graph().n_edges), 0.0);
    msgs.theta_to_patient.assign(static_cast<std::size_t>(runner.graph().n_edges), 0.5);
    runner.sweep(u, w, priors, 1.0, msgs);
    for (double v : msgs.theta_to_patient) CHECK(v == 1.0);
    const MarginalEstimate est = runner.marginals(priors, msgs);
    for (double t : est.theta_hat) CHECK(t == 1.0);
}

TEST_CASE("bp: certain negative pools at p_tp = 1 force zero marginals") {
    const PoolingDesign d = generate_design(20, 10, 4, 71);
    const PatientStates x = generate_states(20, 0.15, 72);
    const NoiseModel noise{1.0, 0.3};
    const TestOutcomes y = observe(true_pool_states(d, x), noise, 73);
    const AssumedParams params{0.15, noise};
    BpConfig cfg;
    cfg.rng_seed = 74;
    // undamped messages from certain-negative tests are exactly zero after
    // the first sweep; damped ones only decay toward zero
    cfg.damping = 1.0;
    cfg.max_iterations = 50;
    const BpResult exact = run_bp(y, d, params, cfg);
    cfg.damping = 0.1;
    cfg.max_iterations = 1000;
    const BpResult damped = run_bp(y, d, params, cfg);
    for (int mu = 0; mu < d.n_tests; ++mu) {
        if (y.outcomes[static_cast<std::size_t>(mu)]) continue;
        for (int i : d.patients_of_test[static_cast<std::size_t>(mu)]) {
            CHECK(exact.estimate.theta_hat[static_cast<std::size_t>(i)] == 0.0);
            CHECK(damped.estimate.theta_hat[static_cast<std::size_t>(i)] < 1e-12);
        }
    }
}

TEST_CASE("bp: patients in no pools get the prior back") {
    PoolingDesign d;
    d.n_patients = 3;
    d.n_tests = 2;
    d.group_size = 2;
    d.overlap = 1; // nominal; patient 2 is isolated
    d.patients_of_test = {{0, 1}, {0, 1}};
    d.tests_of_patient = tests_from_pools(3, d.patients_of_test);
    TestOutcomes y;
    y.outcomes = {1, 0};
    const AssumedParams params{0.3, {0.9, 0.1}};
    BpConfig cfg;
    cfg.rng_seed = 3;
    const BpResult r = run_bp(y, d, params, cfg);
    CHECK(r.estimate.theta_hat[2] == 0.3);
    CHECK(r.estimate.tau_hat[2] == doctest::Approx(std::log(0.3 / 0.7)));
}

TEST_CASE("map_estimate: strict threshold at one half") {
    MarginalEstimate m;
    m.theta_hat = {0.6, 0.4, 0.5, 0.500001};
    m.tau_hat = {log_odds(0.6), log_odds(0.4), log_odds(0.5), log_odds(0.500001)};
    const auto dec = map_estimate(m);
    CHECK(dec == std::vector<std::uint8_t>{1, 0, 0, 1});
}

TEST_CASE("threshold_estimate: reproduces MAP at zero, saturates at infinities") {
    const PoolingDesign d = generate_design(40, 20, 8, 15);
    const PatientStates x = generate_states(40, 0.2, 16);
    const NoiseModel noise{0.9, 0.1};
    const TestOutcomes y = observe(true_pool_states(d, x), noise, 17);
    const AssumedParams params{0.2, noise};
    BpConfig cfg;
    cfg.rng_seed = 18;
    const BpResult r = run_bp(y, d, params, cfg);

    CHECK(threshold_estimate(r.estimate, 0.0) == map_estimate(r.estimate));
    const double inf = std::numeric_limits<double>::infinity();
    const auto all_pos = threshold_estimate(r.estimate, -inf);
    const auto all_neg = threshold_estimate(r.estimate, inf);
    CHECK(std::count(all_pos.begin(), all_pos.end(), 1) == 40);
    CHECK(std::count(all_neg.begin(), all_neg.end(), 1) == 0);
}

TEST_CASE("run_bp: rejects invalid configuration and dimensions") {
    const PoolingDesign d = generate_design(6, 4, 3, 1);
    TestOutcomes y;
    y.outcomes.assign(4, 0);
    const AssumedParams params{0.1, {0.9, 0.1}};
    BpConfig cfg;
    cfg.damping = 0.0;
    CHECK_THROWS_AS(run_bp(y, d, params, cfg), RejectedParameters);
    cfg.damping = 0.1;
    TestOutcomes bad;
    bad.outcomes.assign(3, 0);
    CHECK_THROWS_AS(run_bp(bad, d, params, cfg), DimensionMismatch);
    const AssumedParams bad_params{1.5, {0.9, 0.1}};
    CHECK_THROWS_AS(run_bp(y, d, bad_params, cfg), RejectedParameters);
}
