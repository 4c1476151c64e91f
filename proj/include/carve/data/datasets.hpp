#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "carve/scm/scm.hpp"

namespace carve::data {

// Ground-truth labeling: a scalar label quantity (loan approval probability,
// adult income) plus disjoint normal/anomaly predicates over it. The loan
// rule leaves a rejection band between the predicates.
struct LabelRule {
    std::string name;  // label column name
    bool integer_label = false;
    std::function<double(std::span<const double>)> value;
    std::function<bool(double)> is_normal;
    std::function<bool(double)> is_anomaly;
};

// Loan approval probability for a 7-feature row (G, A, E, L, D, I, S).
double loan_label(std::span<const double> x);

// Indicator-sum income in dollars for a 10-feature row
// (R, A, N, S, E, H, W, M, O, L).
double adult_income(std::span<const double> x);

scm::Scm loan_scm();
scm::Scm adult_scm();
LabelRule loan_rule();
LabelRule adult_rule();

// Default actionable sets (node indices). The loan case studies also use the
// wider {A, E, L, D, I, S}; that variant is available via configuration.
std::vector<std::size_t> loan_actionable_default();
std::vector<std::size_t> loan_actionable_case_study();
std::vector<std::size_t> adult_actionable_default();

}  // namespace carve::data
