#include "convo/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "convo/rng.hpp"

namespace convo {

const char* to_string(Fusion fusion) {
    switch (fusion) {
        case Fusion::A: return "A";
        case Fusion::L: return "L";
        case Fusion::AL: return "A+L";
        case Fusion::ALT: return "A+L+T";
    }
    return "A";
}

Fusion fusion_from_string(const std::string& text) {
    if (text == "A") return Fusion::A;
    if (text == "L") return Fusion::L;
    if (text == "A+L") return Fusion::AL;
    if (text == "A+L+T") return Fusion::ALT;
    throw Error(ErrorKind::ConfigError, "fusion: unknown value \"" + text + "\"");
}

int Tree::predict(const std::vector<double>& row) const {
    int node = 0;
    while (nodes[static_cast<size_t>(node)].feature >= 0) {
        const TreeNode& n = nodes[static_cast<size_t>(node)];
        node = row[static_cast<size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    const TreeNode& leaf = nodes[static_cast<size_t>(node)];
    return leaf.count_pos >= leaf.count_neg ? 1 : 0;
}

namespace {

struct TreeBuilder {
    const FeatureMatrix& m;
    const ForestConfig& cfg;
    int max_features;
    Rng rng;
    std::vector<TreeNode> nodes;

    TreeBuilder(const FeatureMatrix& matrix, const ForestConfig& config, int mf, uint64_t seed)
        : m(matrix), cfg(config), max_features(mf), rng(seed) {}

    int leaf(const std::vector<int>& rows) {
        TreeNode node;
        for (int r : rows) (m.labels[static_cast<size_t>(r)] ? node.count_pos : node.count_neg)++;
        nodes.push_back(node);
        return static_cast<int>(nodes.size()) - 1;
    }

    int grow(std::vector<int>& rows) {
        int n_pos = 0;
        for (int r : rows) n_pos += m.labels[static_cast<size_t>(r)];
        int n = static_cast<int>(rows.size());
        if (n_pos == 0 || n_pos == n || n <= cfg.min_leaf) return leaf(rows);

        std::vector<int> candidates =
            rng.sample_without_replacement(m.n_cols(), std::min(max_features, m.n_cols()));
        std::sort(candidates.begin(), candidates.end());

        double best_impurity = std::numeric_limits<double>::infinity();
        int best_feature = -1;
        double best_threshold = 0.0;

        std::vector<std::pair<double, int>> sorted(static_cast<size_t>(n));
        for (int feature : candidates) {
            for (int i = 0; i < n; ++i) {
                int r = rows[static_cast<size_t>(i)];
                sorted[static_cast<size_t>(i)] = {
                    m.rows[static_cast<size_t>(r)][static_cast<size_t>(feature)],
                    m.labels[static_cast<size_t>(r)]};
            }
            std::sort(sorted.begin(), sorted.end());
            int left_n = 0, left_pos = 0;
            for (int i = 0; i + 1 < n; ++i) {
                ++left_n;
                left_pos += sorted[static_cast<size_t>(i)].second;
                if (sorted[static_cast<size_t>(i)].first == sorted[static_cast<size_t>(i + 1)].first)
                    continue;
                int right_n = n - left_n;
                int right_pos = n_pos - left_pos;
                double pl = static_cast<double>(left_pos) / left_n;
                double pr = static_cast<double>(right_pos) / right_n;
                double gini_l = 2.0 * pl * (1.0 - pl);
                double gini_r = 2.0 * pr * (1.0 - pr);
                double impurity = (left_n * gini_l + right_n * gini_r) / n;
                if (impurity < best_impurity) {
                    best_impurity = impurity;
                    best_feature = feature;
                    best_threshold = 0.5 * (sorted[static_cast<size_t>(i)].first +
                                            sorted[static_cast<size_t>(i + 1)].first);
                }
            }
        }

        if (best_feature < 0) return leaf(rows);

        std::vector<int> left_rows, right_rows;
        for (int r : rows) {
            if (m.rows[static_cast<size_t>(r)][static_cast<size_t>(best_feature)] <= best_threshold)
                left_rows.push_back(r);
            else
                right_rows.push_back(r);
        }
        if (left_rows.empty() || right_rows.empty()) return leaf(rows);

        TreeNode node;
        node.feature = best_feature;
        node.threshold = best_threshold;
        for (int r : rows) (m.labels[static_cast<size_t>(r)] ? node.count_pos : node.count_neg)++;
        nodes.push_back(node);
        int index = static_cast<int>(nodes.size()) - 1;
        int left = grow(left_rows);
        int right = grow(right_rows);
        nodes[static_cast<size_t>(index)].left = left;
        nodes[static_cast<size_t>(index)].right = right;
        return index;
    }
};

}  // namespace

ForestModel rf_fit(const FeatureMatrix& m, const ForestConfig& cfg) {
    if (m.n_rows() < 2) throw Error(ErrorKind::EmptyMatrix, "need >= 2 rows");
    if (m.n_cols() < 1) throw Error(ErrorKind::EmptyMatrix, "need >= 1 feature");
    for (const auto& row : m.rows)
        for (double v : row)
            if (is_missing(v)) throw Error(ErrorKind::MissingValues, "impute before rf_fit");
    int n_pos = 0;
    for (int l : m.labels) n_pos += l;
    if (n_pos == 0 || n_pos == m.n_rows())
        throw Error(ErrorKind::SingleClass, "training labels contain one class");

    ForestModel model;
    model.feature_names = m.columns;
    model.config = cfg;
    model.config.max_features =
        cfg.max_features > 0
            ? std::min(cfg.max_features, m.n_cols())
            : std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(m.n_cols())))));

    model.trees.resize(static_cast<size_t>(cfg.n_trees));
    for (int t = 0; t < cfg.n_trees; ++t) {
        uint64_t tree_seed = cfg.seed ^ static_cast<uint64_t>(t);
        TreeBuilder builder(m, cfg, model.config.max_features, tree_seed);
        std::vector<int> rows(static_cast<size_t>(m.n_rows()));
        if (cfg.bootstrap) {
            for (int i = 0; i < m.n_rows(); ++i)
                rows[static_cast<size_t>(i)] =
                    static_cast<int>(builder.rng.uniform_index(static_cast<uint64_t>(m.n_rows())));
        } else {
            std::iota(rows.begin(), rows.end(), 0);
        }
        // A bootstrap can come up single-class; such trees degenerate to a leaf.
        builder.grow(rows);
        model.trees[static_cast<size_t>(t)].nodes = std::move(builder.nodes);
    }
    return model;
}

std::vector<double> rf_predict_proba(const ForestModel& model, const FeatureMatrix& rows) {
    if (rows.columns != model.feature_names)
        throw Error(ErrorKind::SchemaMismatch, "feature names do not match the trained model");
    std::vector<double> probas(static_cast<size_t>(rows.n_rows()), 0.0);
    for (int r = 0; r < rows.n_rows(); ++r) {
        int votes = 0;
        for (const Tree& tree : model.trees) votes += tree.predict(rows.rows[static_cast<size_t>(r)]);
        probas[static_cast<size_t>(r)] =
            static_cast<double>(votes) / static_cast<double>(model.trees.size());
    }
    return probas;
}

namespace {
std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}
}  // namespace

std::string serialize_forest(const ForestModel& model) {
    std::ostringstream out;
    out << "convo-forest v1\n";
    out << "n_trees=" << model.config.n_trees << " max_features=" << model.config.max_features
        << " min_leaf=" << model.config.min_leaf << " bootstrap=" << (model.config.bootstrap ? 1 : 0)
        << " seed=" << model.config.seed << "\n";
    out << "features=";
    for (size_t i = 0; i < model.feature_names.size(); ++i)
        out << (i ? "," : "") << model.feature_names[i];
    out << "\n";
    for (size_t t = 0; t < model.trees.size(); ++t) {
        const Tree& tree = model.trees[t];
        out << "tree " << t << " nodes=" << tree.nodes.size() << "\n";
        for (const TreeNode& n : tree.nodes)
            out << n.feature << " " << format_double(n.threshold) << " " << n.left << " " << n.right
                << " " << n.count_pos << " " << n.count_neg << "\n";
    }
    return out.str();
}

ForestModel deserialize_forest(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "convo-forest v1")
        throw Error(ErrorKind::MalformedRecord, "bad forest header");
    ForestModel model;
    if (!std::getline(in, line)) throw Error(ErrorKind::MalformedRecord, "missing forest config");
    {
        std::istringstream cfg_in(line);
        std::string token;
        while (cfg_in >> token) {
            size_t eq = token.find('=');
            if (eq == std::string::npos)
                throw Error(ErrorKind::MalformedRecord, "bad forest config token " + token);
            std::string key = token.substr(0, eq);
            std::string value = token.substr(eq + 1);
            if (key == "n_trees") model.config.n_trees = std::stoi(value);
            else if (key == "max_features") model.config.max_features = std::stoi(value);
            else if (key == "min_leaf") model.config.min_leaf = std::stoi(value);
            else if (key == "bootstrap") model.config.bootstrap = value == "1";
            else if (key == "seed") model.config.seed = std::stoull(value);
            else throw Error(ErrorKind::MalformedRecord, "unknown forest config key " + key);
        }
    }
    if (!std::getline(in, line) || line.rfind("features=", 0) != 0)
        throw Error(ErrorKind::MalformedRecord, "missing forest feature list");
    {
        std::string names = line.substr(9);
        std::string name;
        std::istringstream names_in(names);
        while (std::getline(names_in, name, ',')) model.feature_names.push_back(name);
    }
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream head(line);
        std::string word;
        size_t index, count;
        head >> word >> index;
        head >> word;  // "nodes=N"
        if (word.rfind("nodes=", 0) != 0)
            throw Error(ErrorKind::MalformedRecord, "bad tree header: " + line);
        count = std::stoul(word.substr(6));
        Tree tree;
        tree.nodes.reserve(count);
        for (size_t i = 0; i < count; ++i) {
            if (!std::getline(in, line))
                throw Error(ErrorKind::MalformedRecord, "truncated tree node list");
            std::istringstream node_in(line);
            TreeNode n;
            if (!(node_in >> n.feature >> n.threshold >> n.left >> n.right >> n.count_pos >>
                  n.count_neg))
                throw Error(ErrorKind::MalformedRecord, "bad node record: " + line);
            tree.nodes.push_back(n);
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

SplitPlan split_leave_n_users_out(const std::vector<Participant>& participants, int n_runs,
                                  double test_fraction, uint64_t seed) {
    int n = static_cast<int>(participants.size());
    if (n < 5) throw Error(ErrorKind::TooFew, "need >= 5 participants");
    int n_pos = 0;
    for (const Participant& p : participants) n_pos += p.label == Label::POSITIVE ? 1 : 0;
    if (n_pos == 0 || n_pos == n)
        throw Error(ErrorKind::SingleClass, "participants contain one class");
    int test_size = static_cast<int>(std::ceil(test_fraction * n));
    if (test_size < 1 || test_size >= n)
        throw Error(ErrorKind::Unsplittable, "test fraction leaves an empty side");

    std::vector<Participant> sorted = participants;
    std::sort(sorted.begin(), sorted.end(),
              [](const Participant& a, const Participant& b) { return a.id < b.id; });

    SplitPlan plan;
    plan.seed = seed;
    plan.test_fraction = test_fraction;
    constexpr int kRetryBudget = 100;
    for (int run = 0; run < n_runs; ++run) {
        Rng rng(mix_seed(seed, static_cast<uint64_t>(run), 0xC5));
        bool ok = false;
        for (int attempt = 0; attempt < kRetryBudget && !ok; ++attempt) {
            std::vector<int> test_idx = rng.sample_without_replacement(n, test_size);
            std::set<int> test_set(test_idx.begin(), test_idx.end());
            int test_pos = 0, train_pos = 0, train_n = 0;
            for (int i = 0; i < n; ++i) {
                bool positive = sorted[static_cast<size_t>(i)].label == Label::POSITIVE;
                if (test_set.count(i)) test_pos += positive ? 1 : 0;
                else {
                    ++train_n;
                    train_pos += positive ? 1 : 0;
                }
            }
            if (test_pos == 0 || test_pos == test_size || train_pos == 0 || train_pos == train_n)
                continue;
            SplitPlan::Run r;
            for (int i = 0; i < n; ++i) {
                if (test_set.count(i)) r.test_ids.push_back(sorted[static_cast<size_t>(i)].id);
                else r.train_ids.push_back(sorted[static_cast<size_t>(i)].id);
            }
            plan.runs.push_back(std::move(r));
            ok = true;
        }
        if (!ok)
            throw Error(ErrorKind::Unsplittable,
                        "run " + std::to_string(run) + ": no class-covering split in budget");
    }
    return plan;
}

MetricRow compute_metrics(const std::vector<int>& labels, const std::vector<int>& predictions,
                          const std::vector<double>& probas) {
    size_t n = labels.size();
    if (n == 0 || predictions.size() != n || probas.size() != n)
        throw Error(ErrorKind::SchemaMismatch, "metric input lengths differ or are empty");

    int tp = 0, fp = 0, tn = 0, fn = 0;
    for (size_t i = 0; i < n; ++i) {
        if (labels[i] == 1 && predictions[i] == 1) ++tp;
        else if (labels[i] == 0 && predictions[i] == 1) ++fp;
        else if (labels[i] == 0 && predictions[i] == 0) ++tn;
        else ++fn;
    }

    auto safe_div = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
    double support_pos = tp + fn, support_neg = tn + fp;
    double prec_pos = safe_div(tp, tp + fp), prec_neg = safe_div(tn, tn + fn);
    double rec_pos = safe_div(tp, tp + fn), rec_neg = safe_div(tn, tn + fp);
    double f1_pos = safe_div(2.0 * prec_pos * rec_pos, prec_pos + rec_pos);
    double f1_neg = safe_div(2.0 * prec_neg * rec_neg, prec_neg + rec_neg);
    double total = static_cast<double>(n);

    MetricRow row;
    row.accuracy = (tp + tn) / total;
    row.precision = (support_pos * prec_pos + support_neg * prec_neg) / total;
    row.recall = (support_pos * rec_pos + support_neg * rec_neg) / total;
    row.f1 = (support_pos * f1_pos + support_neg * f1_neg) / total;

    if (support_pos == 0 || support_neg == 0) {
        row.auc = missing_value();  // single-class fold: AUC undefined
        return row;
    }

    // Mann-Whitney with midranks for ties.
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return probas[a] < probas[b]; });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && probas[order[j + 1]] == probas[order[i]]) ++j;
        double midrank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = midrank;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    for (size_t k = 0; k < n; ++k)
        if (labels[k] == 1) rank_sum_pos += ranks[k];
    row.auc = (rank_sum_pos - support_pos * (support_pos + 1.0) / 2.0) / (support_pos * support_neg);
    return row;
}

FeatureMatrix assemble_fusion_matrix(const FeatureMatrix& features, Fusion fusion) {
    bool want_acoustic = fusion == Fusion::A || fusion == Fusion::AL || fusion == Fusion::ALT;
    bool want_lexical = fusion == Fusion::L || fusion == Fusion::AL || fusion == Fusion::ALT;

    std::vector<int> cols;
    for (int c = 0; c < features.n_cols(); ++c) {
        const std::string& name = features.columns[static_cast<size_t>(c)];
        if (want_acoustic && name.rfind("acoustic:", 0) == 0) cols.push_back(c);
        if (want_lexical && name.rfind("lexical:", 0) == 0) cols.push_back(c);
    }
    FeatureMatrix out = features.select_columns(cols);

    if (fusion == Fusion::L) {
        // Lexical-only rows exist only for transcript-bearing turns.
        std::vector<int> keep;
        for (int r = 0; r < out.n_rows(); ++r) {
            bool any = false;
            for (double v : out.rows[static_cast<size_t>(r)])
                if (!is_missing(v)) { any = true; break; }
            if (any) keep.push_back(r);
        }
        out = out.select_rows(keep);
    }

    if (fusion == Fusion::ALT) {
        for (int t = 0; t < kTaskCount; ++t)
            out.columns.push_back(std::string("task:") + to_string(static_cast<TaskLabel>(t)));
        for (int r = 0; r < out.n_rows(); ++r) {
            std::vector<double> one_hot(kTaskCount, 0.0);
            one_hot[static_cast<size_t>(out.meta[static_cast<size_t>(r)].task)] = 1.0;
            out.rows[static_cast<size_t>(r)].insert(out.rows[static_cast<size_t>(r)].end(),
                                                    one_hot.begin(), one_hot.end());
        }
    }
    return out;
}

namespace {

MetricRow mean_metrics(const std::vector<MetricRow>& rows) {
    MetricRow mean;
    double auc_sum = 0.0;
    int auc_n = 0;
    for (const MetricRow& r : rows) {
        mean.accuracy += r.accuracy;
        mean.precision += r.precision;
        mean.recall += r.recall;
        mean.f1 += r.f1;
        if (!is_missing(r.auc)) {
            auc_sum += r.auc;
            ++auc_n;
        }
    }
    double n = static_cast<double>(rows.size());
    mean.accuracy /= n;
    mean.precision /= n;
    mean.recall /= n;
    mean.f1 /= n;
    mean.auc = auc_n > 0 ? auc_sum / auc_n : missing_value();
    return mean;
}

}  // namespace

EvalReport run_fusion_experiment(const FeatureMatrix& features, const SplitPlan& plan,
                                 const FusionConfig& cfg,
                                 std::vector<std::string>* serialized_forests) {
    FeatureMatrix fused = assemble_fusion_matrix(features, cfg.fusion);
    if (fused.n_rows() == 0) throw Error(ErrorKind::EmptyMatrix, "fusion matrix has no rows");

    EvalReport report;
    report.feature_set_name = to_string(cfg.fusion);
    report.n_rows = fused.n_rows();

    std::vector<MetricRow> turn_rows, participant_rows;

    for (size_t run_idx = 0; run_idx < plan.runs.size(); ++run_idx) {
        const SplitPlan::Run& run = plan.runs[run_idx];
        std::set<std::string> train_ids(run.train_ids.begin(), run.train_ids.end());
        std::set<std::string> test_ids(run.test_ids.begin(), run.test_ids.end());

        std::vector<int> train_rows_idx, test_rows_idx;
        for (int r = 0; r < fused.n_rows(); ++r) {
            const std::string& pid = fused.meta[static_cast<size_t>(r)].participant_id;
            if (train_ids.count(pid)) train_rows_idx.push_back(r);
            else if (test_ids.count(pid)) test_rows_idx.push_back(r);
        }
        FeatureMatrix train = fused.select_rows(train_rows_idx);
        FeatureMatrix test = fused.select_rows(test_rows_idx);
        if (train.n_rows() == 0 || test.n_rows() == 0)
            throw Error(ErrorKind::EmptyMatrix,
                        "run " + std::to_string(run_idx) + ": split produced an empty side");

        // Group-integrity guard: no evaluated participant may appear in training.
        for (const RowMeta& meta : test.meta)
            if (train_ids.count(meta.participant_id))
                throw Error(ErrorKind::Unsplittable,
                            "participant " + meta.participant_id + " on both sides");

        EvalRun eval_run;
        eval_run.run_index = static_cast<int>(run_idx);

        if (cfg.selected && !cfg.use_pca) {
            // Selection statistics from training rows only; task one-hot columns
            // are structural and bypass screening.
            SelectionResult selection = select_features(train, cfg.selection);
            std::vector<int> keep;
            for (int c = 0; c < train.n_cols(); ++c) {
                const std::string& name = train.columns[static_cast<size_t>(c)];
                if (name.rfind("task:", 0) == 0 || selection.selected.count(name))
                    keep.push_back(c);
            }
            if (keep.empty())
                throw Error(ErrorKind::EmptyMatrix,
                            "run " + std::to_string(run_idx) + ": selection kept no features");
            train = train.select_columns(keep);
            test = test.select_columns(keep);
        }

        ImputeModel imputer = impute_fit(train);
        eval_run.imputed_cells = impute_apply(imputer, train);
        eval_run.imputed_cells += impute_apply(imputer, test);

        if (cfg.use_pca) {
            PcaResult pca = pca_fit_transform(train, test, cfg.variance_kept);
            train = std::move(pca.train);
            test = std::move(pca.test);
        }

        eval_run.n_features = train.n_cols();

        ForestConfig forest_cfg = cfg.forest;
        forest_cfg.seed = mix_seed(cfg.forest.seed, run_idx, 0xF0);
        ForestModel model = rf_fit(train, forest_cfg);
        if (serialized_forests) serialized_forests->push_back(serialize_forest(model));

        std::vector<double> probas = rf_predict_proba(model, test);
        std::vector<int> predictions(probas.size());
        for (size_t i = 0; i < probas.size(); ++i) predictions[i] = probas[i] >= 0.5 ? 1 : 0;
        eval_run.turn_metrics = compute_metrics(test.labels, predictions, probas);
        turn_rows.push_back(eval_run.turn_metrics);

        if (cfg.participant_vote) {
            std::map<std::string, std::array<int, 2>> votes;
            std::map<std::string, std::pair<double, int>> proba_acc;
            std::map<std::string, int> true_label;
            for (int i = 0; i < test.n_rows(); ++i) {
                const std::string& pid = test.meta[static_cast<size_t>(i)].participant_id;
                votes[pid][static_cast<size_t>(predictions[static_cast<size_t>(i)])]++;
                proba_acc[pid].first += probas[static_cast<size_t>(i)];
                proba_acc[pid].second += 1;
                true_label[pid] = test.labels[static_cast<size_t>(i)];
            }
            std::vector<int> p_labels, p_preds;
            std::vector<double> p_probas;
            for (const auto& [pid, counts] : votes) {
                p_labels.push_back(true_label[pid]);
                p_preds.push_back(counts[1] >= counts[0] ? 1 : 0);
                p_probas.push_back(proba_acc[pid].first / proba_acc[pid].second);
            }
            eval_run.participant_metrics = compute_metrics(p_labels, p_preds, p_probas);
            participant_rows.push_back(*eval_run.participant_metrics);
        }

        report.runs.push_back(std::move(eval_run));
    }

    for (const EvalRun& run : report.runs) report.mean_n_features += run.n_features;
    report.mean_n_features /= static_cast<double>(report.runs.size());
    report.mean = mean_metrics(turn_rows);
    if (!participant_rows.empty()) report.participant_mean = mean_metrics(participant_rows);
    return report;
}

}  // namespace convo
