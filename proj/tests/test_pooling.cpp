#include <doctest.h>

#include <set>
#include <string>

#include "grouptest/errors.hpp"
#include "grouptest/pooling.hpp"

using namespace gt;

TEST_CASE("generate_design: small design with derived overlap") {
    const PoolingDesign d = generate_design(6, 4, 3, 11);
    CHECK(d.overlap == 2);
    CHECK(validate_design(d).ok);
    for (const auto& pool : d.patients_of_test) CHECK(pool.size() == 3);
    for (const auto& tests : d.tests_of_patient) CHECK(tests.size() == 2);
}

TEST_CASE("generate_design: NG=1 gives a permutation pairing") {
    const PoolingDesign d = generate_design(4, 4, 1, 3);
    CHECK(d.overlap == 1);
    CHECK(validate_design(d).ok);
    std::set<int> seen;
    for (const auto& pool : d.patients_of_test) {
        REQUIRE(pool.size() == 1);
        seen.insert(pool[0]);
    }
    CHECK(seen.size() == 4);
}

TEST_CASE("generate_design: paper-scale design") {
    const PoolingDesign d = generate_design(1000, 500, 10, 99);
    CHECK(d.overlap == 5);
    CHECK(validate_design(d).ok);
}

TEST_CASE("generate_design: rejects bad parameters") {
    CHECK_THROWS_AS(generate_design(7, 4, 3, 0), RejectedParameters);
    CHECK_THROWS_AS(generate_design(4, 4, 5, 0), RejectedParameters);
    CHECK_THROWS_AS(generate_design(0, 4, 2, 0), RejectedParameters);
}

TEST_CASE("generate_design: deterministic per seed, differs across seeds") {
    const PoolingDesign a = generate_design(60, 30, 6, 123);
    const PoolingDesign b = generate_design(60, 30, 6, 123);
    const PoolingDesign c = generate_design(60, 30, 6, 124);
    CHECK(a.patients_of_test == b.patients_of_test);
    CHECK(a.patients_of_test != c.patients_of_test);
}

TEST_CASE("generate_design: every accepted seed validates") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const PoolingDesign d = generate_design(40, 20, 8, seed);
        const ValidationReport report = validate_design(d);
        CHECK(report.ok);
        CHECK(report.violation.empty());
    }
}

TEST_CASE("validate_design: reports duplicate member") {
    PoolingDesign d = generate_design(6, 4, 3, 1);
    d.patients_of_test[0][1] = d.patients_of_test[0][0];
    d.tests_of_patient = tests_from_pools(d.n_patients, d.patients_of_test);
    const ValidationReport report = validate_design(d);
    CHECK(!report.ok);
    CHECK(report.violation.find("duplicate member") != std::string::npos);
}

TEST_CASE("validate_design: reports edge-set mismatch") {
    PoolingDesign d = generate_design(6, 4, 3, 2);
    // swap the test lists of two patients with different pools; degrees stay
    // regular but the directions now disagree
    std::size_t a = 0, b = 1;
    while (b < d.tests_of_patient.size() &&
           d.tests_of_patient[a] == d.tests_of_patient[b])
        ++b;
    REQUIRE(b < d.tests_of_patient.size());
    std::swap(d.tests_of_patient[a], d.tests_of_patient[b]);
    const ValidationReport report = validate_design(d);
    CHECK(!report.ok);
    CHECK(report.violation == "edge-set mismatch");
}

TEST_CASE("validate_design: degree-sum mismatch") {
    PoolingDesign d = generate_design(6, 4, 3, 7);
    d.overlap = 3;
    const ValidationReport report = validate_design(d);
    CHECK(!report.ok);
    CHECK(report.violation.find("degree-sum") != std::string::npos);
}
