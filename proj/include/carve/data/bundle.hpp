#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "carve/data/datasets.hpp"

namespace carve::data {

struct GenCounts {
    std::size_t normal_train = 10000;
    std::size_t normal_unlabeled = 10000;
    std::size_t anomalous = 1000;
};

struct GenDiagnostics {
    std::size_t attempts = 0;
    std::size_t accepted = 0;
    std::size_t non_finite_redraws = 0;
};

// Generated experiment data: a normal-only training split, an unlabeled split
// with ground-truth labels kept aside, the exogenous draw behind every row,
// and the per-feature stds of the training split (the recourse cost basis).
struct DatasetBundle {
    std::string dataset;  // "loan" | "adult" | "custom"
    std::string label_name;
    bool integer_label = false;
    std::vector<std::string> feature_names;

    Matrix train_x, train_u;
    Matrix unl_x, unl_u;
    std::vector<int> unl_labels;    // 0 normal, 1 anomalous (ground truth)
    std::vector<double> unl_raw;    // label quantity per unlabeled row
    std::vector<double> feature_std;  // strictly positive, from train_x

    GenCounts counts;
    std::uint64_t seed = 0;
    nlohmann::json custom_scm;  // present when dataset == "custom"

    GenDiagnostics diag;

    bool operator==(const DatasetBundle& o) const {
        return dataset == o.dataset && label_name == o.label_name && feature_names == o.feature_names &&
               train_x == o.train_x && train_u == o.train_u && unl_x == o.unl_x && unl_u == o.unl_u &&
               unl_labels == o.unl_labels && unl_raw == o.unl_raw && feature_std == o.feature_std;
    }
};

// Sample standard deviation per column; throws if any column is constant.
std::vector<double> column_std(const Matrix& m);

// Rejection-sample rows from the SCM into the three splits. Aborts if the
// acceptance rate of any split drops below 0.1% over a 1e6-attempt window.
DatasetBundle generate_bundle(const scm::Scm& scm, const LabelRule& rule, const GenCounts& counts,
                              std::uint64_t seed, const std::string& dataset_kind);

DatasetBundle gen_loan(const GenCounts& counts, std::uint64_t seed);
DatasetBundle gen_adult(const GenCounts& counts, std::uint64_t seed);

// CSV + manifest serialization. read(write(b)) == b bit-exactly.
void write_bundle(const DatasetBundle& b, const std::filesystem::path& dir);
DatasetBundle read_bundle(const std::filesystem::path& dir);

// Rebuild the generating SCM and label rule recorded in a bundle.
scm::Scm scm_for_bundle(const DatasetBundle& b);
LabelRule rule_for_bundle(const DatasetBundle& b);

}  // namespace carve::data
