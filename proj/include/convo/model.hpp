#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "convo/corpus.hpp"
#include "convo/stats.hpp"
#include "convo/types.hpp"

namespace convo {

struct ForestConfig {
    int n_trees = 100;
    int max_features = 0;  // 0 = sqrt(feature count)
    int min_leaf = 1;
    bool bootstrap = true;
    uint64_t seed = 0;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int count_pos = 0;
    int count_neg = 0;
};

struct Tree {
    std::vector<TreeNode> nodes;
    int predict(const std::vector<double>& row) const;  // leaf majority, tie -> positive
};

struct ForestModel {
    std::vector<Tree> trees;
    std::vector<std::string> feature_names;
    ForestConfig config;
};

// Per tree: bootstrap rows, recursive best-Gini splits over a random feature
// subset, grow to purity or min_leaf; tree t is seeded with seed XOR t.
ForestModel rf_fit(const FeatureMatrix& m, const ForestConfig& cfg);

// Fraction of trees voting positive; class prediction is proba >= 0.5.
std::vector<double> rf_predict_proba(const ForestModel& model, const FeatureMatrix& rows);

std::string serialize_forest(const ForestModel& model);
ForestModel deserialize_forest(const std::string& text);

struct SplitPlan {
    struct Run {
        std::vector<std::string> train_ids;
        std::vector<std::string> test_ids;
    };
    std::vector<Run> runs;
    uint64_t seed = 0;
    double test_fraction = 0.2;
};

// Each run samples ceil(test_fraction * P) participants into the test side,
// resampling (bounded retries) until both sides contain both classes.
SplitPlan split_leave_n_users_out(const std::vector<Participant>& participants, int n_runs,
                                  double test_fraction, uint64_t seed);

struct MetricRow {
    double accuracy = 0.0;
    double precision = 0.0;  // support-weighted
    double recall = 0.0;     // support-weighted (equals accuracy)
    double f1 = 0.0;         // support-weighted
    double auc = 0.0;        // NaN when the fold has one class
};

// Weighted averaging over both classes; AUC by Mann-Whitney midranks.
MetricRow compute_metrics(const std::vector<int>& labels, const std::vector<int>& predictions,
                          const std::vector<double>& probas);

enum class Fusion : int { A = 0, L, AL, ALT };
const char* to_string(Fusion fusion);
Fusion fusion_from_string(const std::string& text);

struct FusionConfig {
    Fusion fusion = Fusion::AL;
    bool selected = false;        // apply correlation-based selection per fold
    bool participant_vote = false;  // also report participant-majority metrics
    bool use_pca = false;         // PCA instead of selection
    double variance_kept = 0.95;
    SelectionConfig selection;
    ForestConfig forest;
};

struct EvalRun {
    int run_index = 0;
    int n_features = 0;
    MetricRow turn_metrics;
    std::optional<MetricRow> participant_metrics;
    int imputed_cells = 0;
};

struct EvalReport {
    std::string feature_set_name;
    int n_rows = 0;
    double mean_n_features = 0.0;
    std::vector<EvalRun> runs;
    MetricRow mean;
    std::optional<MetricRow> participant_mean;
};

// Full fusion experiment: assemble the fusion matrix (task one-hot when T is
// included), per run select/impute on training rows only, train, evaluate, and
// average over runs. Serialized forests per run are returned when requested.
EvalReport run_fusion_experiment(const FeatureMatrix& features, const SplitPlan& plan,
                                 const FusionConfig& cfg,
                                 std::vector<std::string>* serialized_forests = nullptr);

// Column subset for a fusion (acoustic:/lexical: prefixes); appends task:
// one-hot columns for ALT.
FeatureMatrix assemble_fusion_matrix(const FeatureMatrix& features, Fusion fusion);

}  // namespace convo
