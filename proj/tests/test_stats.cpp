#include <doctest.h>

#include <cmath>
#include <vector>

#include "convo/rng.hpp"
#include "convo/stats.hpp"
#include "oracles.hpp"

using namespace convo;

namespace {

FeatureMatrix make_matrix(const std::vector<std::string>& columns,
                          const std::vector<std::vector<double>>& rows,
                          const std::vector<int>& labels,
                          const std::vector<std::string>& participants = {},
                          const std::vector<TaskLabel>& tasks = {}) {
    FeatureMatrix m;
    m.columns = columns;
    m.rows = rows;
    m.labels = labels;
    for (size_t i = 0; i < rows.size(); ++i) {
        RowMeta meta;
        meta.row_id = "T" + std::to_string(i);
        meta.participant_id = participants.empty() ? "P" + std::to_string(i) : participants[i];
        meta.task = tasks.empty() ? TaskLabel::Description : tasks[i];
        m.meta.push_back(meta);
    }
    return m;
}

}  // namespace

TEST_CASE("z-normalization per participant") {
    FeatureMatrix m = make_matrix({"acoustic:x", "lexical:y"},
                                  {{1, 7}, {2, 7}, {3, 7}, {5, 1}, {5, 2}, {5, 3}},
                                  {0, 0, 0, 1, 1, 1},
                                  {"A", "A", "A", "B", "B", "B"});
    ZNormReport report = znormalize_per_participant(m, "acoustic:");
    CHECK(report.insufficient.empty());

    CHECK(m.rows[0][0] == doctest::Approx(-1.224744871391589).epsilon(1e-12));
    CHECK(m.rows[1][0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m.rows[2][0] == doctest::Approx(1.224744871391589).epsilon(1e-12));
    // Zero variance within participant B -> 0.
    CHECK(m.rows[3][0] == 0.0);
    CHECK(m.rows[4][0] == 0.0);
    // Non-prefixed column untouched.
    CHECK(m.rows[0][1] == 7.0);
    CHECK(m.rows[3][1] == 1.0);

    // Post-condition: per-participant mean 0, population std 1.
    double mean = (m.rows[0][0] + m.rows[1][0] + m.rows[2][0]) / 3.0;
    double var = 0.0;
    for (int i = 0; i < 3; ++i) var += (m.rows[static_cast<size_t>(i)][0] - mean) *
                                       (m.rows[static_cast<size_t>(i)][0] - mean);
    var /= 3.0;
    CHECK(std::fabs(mean) < 1e-12);
    CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-12);
}

TEST_CASE("z-normalization flags participants with too few usable rows") {
    FeatureMatrix m = make_matrix({"acoustic:x"}, {{1}, {2}, {4}}, {0, 0, 1}, {"A", "A", "B"});
    ZNormReport report = znormalize_per_participant(m, "acoustic:");
    REQUIRE(report.insufficient.size() == 1);
    CHECK(report.insufficient[0].first == "B");
    CHECK(m.rows[2][0] == 4.0);  // left unnormalized

    FeatureMatrix mm = make_matrix({"acoustic:x"}, {{1}, {missing_value()}, {2}, {3}},
                                   {0, 0, 1, 1}, {"A", "A", "B", "B"});
    znormalize_per_participant(mm, "acoustic:");
    CHECK(is_missing(mm.rows[1][0]));  // missing stays missing
}

TEST_CASE("point-biserial hand cases") {
    PointBiserial pb4 = point_biserial({1, 2, 3, 4}, {0, 0, 1, 1});
    CHECK(std::fabs(pb4.r - oracle::kPb4R) < 1e-12);
    CHECK(std::fabs(pb4.p - oracle::kPb4P) < 1e-10);

    PointBiserial pb8 = point_biserial({1, 2, 3, 4, 5, 6, 7, 8}, {0, 0, 0, 0, 1, 1, 1, 1});
    CHECK(std::fabs(pb8.r - oracle::kPb8R) < 1e-12);
    CHECK(std::fabs(pb8.p - oracle::kPb8P) < 1e-10);

    PointBiserial zero = point_biserial({1, 2, 1, 2}, {0, 0, 1, 1});  // equal group means
    CHECK(zero.r == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("point-biserial equals Pearson with a dummy variable") {
    Rng rng(1234);
    for (int trial = 0; trial < 200; ++trial) {
        int n = 4 + static_cast<int>(rng.uniform_index(9));  // 4..12
        std::vector<double> values;
        std::vector<int> labels;
        std::vector<double> dummy;
        int ones = 0;
        for (int i = 0; i < n; ++i) {
            values.push_back(rng.normal(0.0, 1.0));
            int label = rng.uniform() < 0.5 ? 0 : 1;
            labels.push_back(label);
            dummy.push_back(label);
            ones += label;
        }
        if (ones == 0 || ones == n) continue;
        PointBiserial pb = point_biserial(values, labels);
        CHECK(std::fabs(pb.r - oracle::pearson(values, dummy)) < 1e-12);
    }
}

TEST_CASE("point-biserial symmetries") {
    std::vector<double> values = {0.3, -1.2, 2.4, 0.9, -0.5, 1.8, 0.1, -2.2};
    std::vector<int> labels = {0, 1, 1, 0, 0, 1, 1, 0};
    PointBiserial a = point_biserial(values, labels);

    std::vector<int> flipped;
    for (int l : labels) flipped.push_back(1 - l);
    PointBiserial b = point_biserial(values, flipped);
    CHECK(std::fabs(a.r + b.r) < 1e-12);
    CHECK(std::fabs(a.p - b.p) < 1e-12);

    std::vector<double> affine;
    for (double v : values) affine.push_back(3.5 * v + 11.0);
    PointBiserial c = point_biserial(affine, labels);
    CHECK(std::fabs(a.r - c.r) < 1e-12);

    std::vector<double> negated;
    for (double v : values) negated.push_back(-2.0 * v + 1.0);
    PointBiserial d = point_biserial(negated, labels);
    CHECK(std::fabs(a.r + d.r) < 1e-12);
}

TEST_CASE("point-biserial error cases") {
    CHECK_THROWS_AS((void)point_biserial({1, 1, 1, 1}, {0, 0, 1, 1}), Error);
    CHECK_THROWS_AS((void)point_biserial({1, 2, 3, 4}, {1, 1, 1, 1}), Error);
    CHECK_THROWS_AS((void)point_biserial({1, 2}, {0, 1}), Error);
}

TEST_CASE("t distribution against the frozen table") {
    for (int i = 0; i < oracle::kTwoSidedTCount; ++i) {
        const auto& row = oracle::kTwoSidedT[i];
        CHECK(std::fabs(t_two_sided_p(row.t, row.df) - row.p) < 1e-10);
    }
}

TEST_CASE("incomplete beta spot values") {
    for (int i = 0; i < oracle::kBetaSpotCount; ++i) {
        const auto& spot = oracle::kBetaSpots[i];
        CHECK(std::fabs(incomplete_beta(spot.a, spot.b, spot.x) - spot.value) < 1e-10);
    }
}

TEST_CASE("holm adjustment") {
    std::vector<bool> flags = holm_adjust({0.04, 0.01, 0.03}, 0.05);
    CHECK(flags == std::vector<bool>{false, true, false});

    CHECK(holm_adjust({1.0, 1.0, 1.0}, 0.05) == std::vector<bool>{false, false, false});
    CHECK(holm_adjust({0.04}, 0.05) == std::vector<bool>{true});
    CHECK_THROWS_AS((void)holm_adjust({0.5, 1.5}, 0.05), Error);

    Rng rng(77);
    for (int trial = 0; trial < 100; ++trial) {
        size_t m = 1 + rng.uniform_index(20);
        std::vector<double> p(m);
        for (double& v : p) v = rng.uniform();
        std::vector<bool> holm = holm_adjust(p, 0.05);
        for (size_t i = 0; i < m; ++i) {
            bool bonferroni = p[i] <= 0.05 / static_cast<double>(m);
            bool raw = p[i] < 0.05;
            if (bonferroni) CHECK(holm[i]);
            if (holm[i]) CHECK(raw);
        }
    }
}

TEST_CASE("select_features picks a perfectly separating feature everywhere") {
    std::vector<std::string> cols = {"acoustic:perfect", "acoustic:noise"};
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::vector<std::string> participants;
    std::vector<TaskLabel> tasks;
    Rng rng(5);
    for (int task = 0; task < 2; ++task)
        for (int i = 0; i < 12; ++i) {
            int label = i % 2;
            rows.push_back({static_cast<double>(label) + 0.01 * rng.normal(0.0, 1.0),
                            rng.normal(0.0, 1.0)});
            labels.push_back(label);
            participants.push_back("P" + std::to_string(i));
            tasks.push_back(task == 0 ? TaskLabel::Description : TaskLabel::Emotions);
        }
    FeatureMatrix m = make_matrix(cols, rows, labels, participants, tasks);
    SelectionConfig cfg;
    SelectionResult result = select_features(m, cfg);
    CHECK(result.selected.count("acoustic:perfect") == 1);

    int perfect_rows = 0;
    for (const CorrelationResult& row : result.table)
        if (row.feature == "acoustic:perfect") {
            ++perfect_rows;
            CHECK(row.significant_raw);
        }
    CHECK(perfect_rows == 2);  // one per task
}

TEST_CASE("select_features reports degenerate features as skipped") {
    FeatureMatrix m = make_matrix({"acoustic:constant"}, {{1}, {1}, {1}, {1}}, {0, 0, 1, 1});
    SelectionConfig cfg;
    cfg.per_task = false;
    SelectionResult result = select_features(m, cfg);
    CHECK(result.selected.empty());
    REQUIRE(result.table.size() == 1);
    CHECK(!result.table[0].skipped_reason.empty());
}

TEST_CASE("pca basics") {
    // All variance on the first axis.
    FeatureMatrix train = make_matrix({"a", "b"}, {{-2, 1}, {-1, 1}, {0, 1}, {1, 1}, {2, 1}},
                                      {0, 0, 0, 1, 1});
    FeatureMatrix test = make_matrix({"a", "b"}, {{0.5, 1}}, {1});
    PcaResult pca = pca_fit_transform(train, test, 0.95);
    CHECK(pca.model.k == 1);
    CHECK(pca.train.n_cols() == 1);
    CHECK(pca.test.n_cols() == 1);

    CHECK_THROWS_AS(
        (void)pca_fit_transform(make_matrix({"a"}, {{1}, {1}}, {0, 1}), test, 0.95), Error);
}

TEST_CASE("pca against the eigen oracle on a random matrix") {
    Rng rng(4242);
    std::vector<std::vector<double>> rows(10, std::vector<double>(6));
    for (auto& row : rows)
        for (double& v : row) v = rng.normal(0.0, 1.0);
    FeatureMatrix train = make_matrix({"a", "b", "c", "d", "e", "f"}, rows,
                                      {0, 1, 0, 1, 0, 1, 0, 1, 0, 1});
    PcaResult pca = pca_fit_transform(train, train, 0.95);

    // Population covariance of the training data.
    std::vector<double> means(6, 0.0);
    for (const auto& row : rows)
        for (int j = 0; j < 6; ++j) means[static_cast<size_t>(j)] += row[static_cast<size_t>(j)];
    for (double& v : means) v /= 10.0;
    std::vector<std::vector<double>> cov(6, std::vector<double>(6, 0.0));
    for (const auto& row : rows)
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j)
                cov[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
                    (row[static_cast<size_t>(i)] - means[static_cast<size_t>(i)]) *
                    (row[static_cast<size_t>(j)] - means[static_cast<size_t>(j)]) / 10.0;

    std::vector<double> expected = oracle::eigenvalues_sym(cov);
    REQUIRE(pca.model.eigenvalues.size() == expected.size());
    for (size_t i = 0; i < expected.size(); ++i)
        CHECK(std::fabs(pca.model.eigenvalues[i] - expected[i]) < 1e-8);

    // Orthonormal components.
    for (size_t i = 0; i < pca.model.components.size(); ++i)
        for (size_t j = 0; j < pca.model.components.size(); ++j) {
            double dot = 0.0;
            for (size_t k = 0; k < pca.model.components[i].size(); ++k)
                dot += pca.model.components[i][k] * pca.model.components[j][k];
            CHECK(std::fabs(dot - (i == j ? 1.0 : 0.0)) < 1e-8);
        }

    // Minimality: k-1 components would fall short of the target.
    double total = pca.model.total_variance();
    double cumulative = 0.0;
    for (int i = 0; i + 1 < pca.model.k; ++i) cumulative += pca.model.eigenvalues[static_cast<size_t>(i)];
    CHECK(cumulative < 0.95 * total);

    // Full retention reconstructs the centered data.
    PcaResult full = pca_fit_transform(train, train, 1.0);
    CHECK(full.model.k == 6);
    for (int r = 0; r < train.n_rows(); ++r)
        for (int j = 0; j < 6; ++j) {
            double rebuilt = full.model.means[static_cast<size_t>(j)];
            for (int k = 0; k < full.model.k; ++k)
                rebuilt += full.train.rows[static_cast<size_t>(r)][static_cast<size_t>(k)] *
                           full.model.components[static_cast<size_t>(k)][static_cast<size_t>(j)];
            CHECK(std::fabs(rebuilt - rows[static_cast<size_t>(r)][static_cast<size_t>(j)]) < 1e-8);
        }
}

TEST_CASE("imputation uses task means from the training fold") {
    std::vector<std::string> cols = {"acoustic:x"};
    FeatureMatrix train = make_matrix(cols, {{1}, {3}, {10}, {14}}, {0, 0, 1, 1}, {},
                                      {TaskLabel::Description, TaskLabel::Description,
                                       TaskLabel::Emotions, TaskLabel::Emotions});
    ImputeModel model = impute_fit(train);

    FeatureMatrix test = make_matrix(cols, {{missing_value()}, {missing_value()}, {5}}, {0, 1, 0},
                                     {}, {TaskLabel::Description, TaskLabel::Emotions,
                                          TaskLabel::Description});
    int imputed = impute_apply(model, test);
    CHECK(imputed == 2);
    CHECK(test.rows[0][0] == doctest::Approx(2.0).epsilon(1e-12));   // Description mean
    CHECK(test.rows[1][0] == doctest::Approx(12.0).epsilon(1e-12));  // Emotions mean
    CHECK(test.rows[2][0] == 5.0);

    // Task unseen in training falls back to the global column mean.
    FeatureMatrix other = make_matrix(cols, {{missing_value()}}, {0}, {}, {TaskLabel::Break});
    impute_apply(model, other);
    CHECK(other.rows[0][0] == doctest::Approx(7.0).epsilon(1e-12));
}

TEST_CASE("participant-task aggregation means over turns") {
    FeatureMatrix m = make_matrix({"acoustic:x"}, {{1}, {3}, {missing_value()}, {7}},
                                  {0, 0, 0, 1}, {"A", "A", "A", "B"},
                                  {TaskLabel::Description, TaskLabel::Description,
                                   TaskLabel::Description, TaskLabel::Emotions});
    FeatureMatrix agg = aggregate_participant_task(m);
    REQUIRE(agg.n_rows() == 2);
    CHECK(agg.rows[0][0] == doctest::Approx(2.0).epsilon(1e-12));  // mean of 1,3; missing ignored
    CHECK(agg.rows[1][0] == 7.0);
    CHECK(agg.labels[0] == 0);
    CHECK(agg.labels[1] == 1);
}
