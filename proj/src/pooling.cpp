#include "grouptest/pooling.hpp"

#include <algorithm>
#include <utility>

#include "grouptest/errors.hpp"
#include "grouptest/rng.hpp"

namespace gt {

std::vector<std::vector<int>> tests_from_pools(
    int n_patients, const std::vector<std::vector<int>>& patients_of_test) {
    std::vector<std::vector<int>> by_patient(static_cast<std::size_t>(n_patients));
    for (std::size_t mu = 0; mu < patients_of_test.size(); ++mu)
        for (int i : patients_of_test[mu])
            by_patient[static_cast<std::size_t>(i)].push_back(static_cast<int>(mu));
    return by_patient;
}

namespace {

bool block_contains(const std::vector<int>& stubs, int begin, int end, int value) {
    for (int s = begin; s < end; ++s)
        if (stubs[static_cast<std::size_t>(s)] == value) return true;
    return false;
}

} // namespace

PoolingDesign generate_design(int n_patients, int n_tests, int group_size,
                              std::uint64_t seed) {
    if (n_patients <= 0 || n_tests <= 0 || group_size <= 0)
        throw RejectedParameters("generate_design: counts must be positive");
    if (group_size > n_patients)
        throw RejectedParameters("generate_design: group_size exceeds n_patients");
    const long long total = static_cast<long long>(n_tests) * group_size;
    if (total % n_patients != 0)
        throw RejectedParameters(
            "generate_design: n_tests * group_size not divisible by n_patients");
    const int overlap = static_cast<int>(total / n_patients);
    if (overlap < 1)
        throw RejectedParameters("generate_design: derived overlap below 1");

    Rng rng(seed);
    const int restarts = 32;
    const int swap_budget = 256; // per duplicate slot

    for (int attempt = 0; attempt < restarts; ++attempt) {
        // NO stubs per patient, shuffled, cut into M blocks of NG
        std::vector<int> stubs;
        stubs.reserve(static_cast<std::size_t>(total));
        for (int i = 0; i < n_patients; ++i)
            for (int k = 0; k < overlap; ++k) stubs.push_back(i);
        rng.shuffle(stubs);

        // Repair within-pool duplicates by swapping with a random slot in
        // another pool. A swap is accepted only if it creates no duplicate on
        // either side, so duplicate count decreases monotonically and pools
        // already processed stay clean.
        bool ok = true;
        for (int mu = 0; mu < n_tests && ok; ++mu) {
            const int begin = mu * group_size;
            const int end = begin + group_size;
            for (int s = begin; s < end && ok; ++s) {
                const int v = stubs[static_cast<std::size_t>(s)];
                if (!block_contains(stubs, begin, s, v)) continue; // first occurrence
                bool repaired = false;
                for (int t = 0; t < swap_budget; ++t) {
                    const int other =
                        static_cast<int>(rng.below(static_cast<std::uint64_t>(total)));
                    const int other_mu = other / group_size;
                    if (other_mu == mu) continue;
                    const int w = stubs[static_cast<std::size_t>(other)];
                    const int ob = other_mu * group_size;
                    const int oe = ob + group_size;
                    if (block_contains(stubs, begin, end, w)) continue;
                    if (block_contains(stubs, ob, oe, v)) continue;
                    std::swap(stubs[static_cast<std::size_t>(s)],
                              stubs[static_cast<std::size_t>(other)]);
                    repaired = true;
                    break;
                }
                if (!repaired) ok = false;
            }
        }
        if (!ok) continue;

        PoolingDesign d;
        d.n_patients = n_patients;
        d.n_tests = n_tests;
        d.group_size = group_size;
        d.overlap = overlap;
        d.patients_of_test.resize(static_cast<std::size_t>(n_tests));
        for (int mu = 0; mu < n_tests; ++mu) {
            auto& pool = d.patients_of_test[static_cast<std::size_t>(mu)];
            pool.assign(stubs.begin() + mu * group_size,
                        stubs.begin() + (mu + 1) * group_size);
        }
        d.tests_of_patient = tests_from_pools(n_patients, d.patients_of_test);
        return d;
    }
    throw ConstructionFailure(
        "generate_design: duplicate repair failed after retry budget");
}

ValidationReport validate_design(const PoolingDesign& d) {
    auto fail = [](std::string msg) { return ValidationReport{false, std::move(msg)}; };

    if (d.n_patients <= 0 || d.n_tests <= 0 || d.group_size <= 0 || d.overlap <= 0)
        return fail("nonpositive size field");
    if (d.patients_of_test.size() != static_cast<std::size_t>(d.n_tests))
        return fail("patients_of_test row count differs from n_tests");
    if (d.tests_of_patient.size() != static_cast<std::size_t>(d.n_patients))
        return fail("tests_of_patient row count differs from n_patients");
    if (static_cast<long long>(d.overlap) * d.n_patients !=
        static_cast<long long>(d.group_size) * d.n_tests)
        return fail("degree-sum mismatch: NO*N != NG*M");

    for (int mu = 0; mu < d.n_tests; ++mu) {
        const auto& pool = d.patients_of_test[static_cast<std::size_t>(mu)];
        if (pool.size() != static_cast<std::size_t>(d.group_size))
            return fail("row degree differs from group_size at test " +
                        std::to_string(mu + 1));
        std::vector<int> sorted = pool;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t k = 0; k < sorted.size(); ++k) {
            if (sorted[k] < 0 || sorted[k] >= d.n_patients)
                return fail("patient index out of range at test " +
                            std::to_string(mu + 1));
            if (k > 0 && sorted[k] == sorted[k - 1])
                return fail("duplicate member in pool " + std::to_string(mu + 1));
        }
    }
    for (int i = 0; i < d.n_patients; ++i) {
        const auto& tests = d.tests_of_patient[static_cast<std::size_t>(i)];
        if (tests.size() != static_cast<std::size_t>(d.overlap))
            return fail("column degree differs from overlap at patient " +
                        std::to_string(i + 1));
        std::vector<int> sorted = tests;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t k = 0; k < sorted.size(); ++k) {
            if (sorted[k] < 0 || sorted[k] >= d.n_tests)
                return fail("test index out of range at patient " +
                            std::to_string(i + 1));
            if (k > 0 && sorted[k] == sorted[k - 1])
                return fail("duplicate test for patient " + std::to_string(i + 1));
        }
    }

    // both adjacency directions must describe the same edge set
    std::vector<std::pair<int, int>> from_tests, from_patients;
    for (int mu = 0; mu < d.n_tests; ++mu)
        for (int i : d.patients_of_test[static_cast<std::size_t>(mu)])
            from_tests.emplace_back(mu, i);
    for (int i = 0; i < d.n_patients; ++i)
        for (int mu : d.tests_of_patient[static_cast<std::size_t>(i)])
            from_patients.emplace_back(mu, i);
    std::sort(from_tests.begin(), from_tests.end());
    std::sort(from_patients.begin(), from_patients.end());
    if (from_tests != from_patients) return fail("edge-set mismatch");

    return ValidationReport{};
}

} // namespace gt
