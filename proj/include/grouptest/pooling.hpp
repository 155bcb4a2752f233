#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gt {

// Bipartite incidence of M test pools over N patients. Regular designs have
// every pool of size group_size and every patient in overlap pools; designs
// produced by bootstrap resampling keep the row degree but lose column
// regularity. Immutable after construction, shareable across threads.
struct PoolingDesign {
    int n_patients = 0;
    int n_tests = 0;
    int group_size = 0; // pool size NG
    int overlap = 0;    // pools per patient NO (nominal after resampling)
    std::vector<std::vector<int>> patients_of_test; // 0-based patient ids
    std::vector<std::vector<int>> tests_of_patient; // 0-based test ids
};

struct ValidationReport {
    bool ok = true;
    std::string violation; // first violated constraint, empty when ok
};

// Random regular design: configuration-model stub matching with local swap
// repair of within-pool duplicates. Deterministic per seed.
// Throws RejectedParameters when M*NG is not divisible by N or NG > N,
// ConstructionFailure when the repair budget is exhausted.
PoolingDesign generate_design(int n_patients, int n_tests, int group_size,
                              std::uint64_t seed);

// Checks all structural invariants; reports the first violation found.
ValidationReport validate_design(const PoolingDesign& d);

// Transpose helper: patient -> tests adjacency from test -> patients lists.
std::vector<std::vector<int>> tests_from_pools(
    int n_patients, const std::vector<std::vector<int>>& patients_of_test);

} // namespace gt
