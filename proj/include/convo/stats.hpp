#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "convo/types.hpp"

namespace convo {

struct RowMeta {
    std::string row_id;          // turn id, or participant:task for aggregates
    std::string participant_id;
    Speaker speaker = Speaker::CHILD;
    TaskLabel task = TaskLabel::Description;
};

// Rectangular matrix with NaN as the explicit missing marker.
struct FeatureMatrix {
    std::vector<std::string> columns;
    std::vector<RowMeta> meta;
    std::vector<std::vector<double>> rows;  // rows x columns
    std::vector<int> labels;                // 0/1 per row

    int n_rows() const { return static_cast<int>(rows.size()); }
    int n_cols() const { return static_cast<int>(columns.size()); }
    int column_index(const std::string& name) const;

    FeatureMatrix select_columns(const std::vector<int>& col_indices) const;
    FeatureMatrix select_rows(const std::vector<int>& row_indices) const;
};

struct ZNormReport {
    // (participant, column) pairs left unnormalized for having < 2 usable rows.
    std::vector<std::pair<std::string, std::string>> insufficient;
};

// Within each participant's rows, each column -> (x - mean) / population std;
// zero-variance columns map to 0; missing cells stay missing. Columns touching
// only the given prefix (e.g. "acoustic:") when prefix is non-empty.
ZNormReport znormalize_per_participant(FeatureMatrix& m, const std::string& column_prefix = "");

struct PointBiserial {
    double r = 0.0;
    double p = 1.0;
    int n = 0;
};

// r = (M1 - M0) / s_n * sqrt(n1*n0/n^2); two-sided p from the t distribution
// with n-2 degrees of freedom.
PointBiserial point_biserial(const std::vector<double>& values, const std::vector<int>& labels);

// Regularized incomplete beta I_x(a, b); two-sided t-distribution p-value.
double incomplete_beta(double a, double b, double x);
double t_two_sided_p(double t, int df);

// Sorted step-down rejection flags, returned in original order.
std::vector<bool> holm_adjust(const std::vector<double>& p_values, double alpha);

struct CorrelationResult {
    std::string feature;
    std::optional<TaskLabel> task;  // nullopt = pooled over all tasks
    double r_pb = 0.0;
    double p_value = 1.0;
    int n = 0;
    bool significant_raw = false;
    bool significant_holm = false;
    std::string skipped_reason;  // non-empty when the test could not run
};

struct SelectionConfig {
    double alpha = 0.05;
    bool per_task = true;
    bool holm = true;
};

struct SelectionResult {
    std::set<std::string> selected;  // significant (raw p < alpha) in >= 1 task
    std::vector<CorrelationResult> table;
};

// Per-task (or pooled) point-biserial screening. Selection uses raw p < alpha;
// Holm flags are computed over the single pooled family of all (task, feature)
// tests and reported alongside.
SelectionResult select_features(const FeatureMatrix& m, const SelectionConfig& cfg);

struct PcaModel {
    std::vector<double> means;                  // per input column
    std::vector<std::vector<double>> components;  // k x d, orthonormal rows
    std::vector<double> eigenvalues;            // all d, descending
    int k = 0;

    double explained_variance(int component) const { return eigenvalues[component]; }
    double total_variance() const;
};

struct PcaResult {
    FeatureMatrix train;
    FeatureMatrix test;
    PcaModel model;
};

// Center by train means, eigendecompose the train covariance (population
// normalization), keep the smallest k whose cumulative explained variance
// reaches variance_kept, project both matrices with the train transform.
PcaResult pca_fit_transform(const FeatureMatrix& train, const FeatureMatrix& test,
                            double variance_kept = 0.95);

// Symmetric eigendecomposition by cyclic Jacobi rotations; eigenvalues
// descending, eigenvectors as rows.
void jacobi_eigen_sym(std::vector<std::vector<double>> matrix, std::vector<double>& eigenvalues,
                      std::vector<std::vector<double>>& eigenvectors);

// Training-fold imputation statistics: per (task, column) mean with global
// column-mean fallback, 0 if a column has no finite training values at all.
struct ImputeModel {
    std::vector<std::string> columns;
    std::map<std::pair<int, int>, double> task_col_mean;  // (task, col) -> mean
    std::vector<double> col_mean;
};

ImputeModel impute_fit(const FeatureMatrix& train);
// Returns the number of imputed cells.
int impute_apply(const ImputeModel& model, FeatureMatrix& m);

// Collapse to one row per (participant, task): mean over turns, ignoring
// missing cells (a cell with no values stays missing).
FeatureMatrix aggregate_participant_task(const FeatureMatrix& m);

}  // namespace convo
