#include "convo/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace convo {

int FeatureMatrix::column_index(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return static_cast<int>(i);
    return -1;
}

FeatureMatrix FeatureMatrix::select_columns(const std::vector<int>& col_indices) const {
    FeatureMatrix out;
    out.meta = meta;
    out.labels = labels;
    for (int c : col_indices) out.columns.push_back(columns[static_cast<size_t>(c)]);
    out.rows.reserve(rows.size());
    for (const auto& row : rows) {
        std::vector<double> r;
        r.reserve(col_indices.size());
        for (int c : col_indices) r.push_back(row[static_cast<size_t>(c)]);
        out.rows.push_back(std::move(r));
    }
    return out;
}

FeatureMatrix FeatureMatrix::select_rows(const std::vector<int>& row_indices) const {
    FeatureMatrix out;
    out.columns = columns;
    for (int r : row_indices) {
        out.meta.push_back(meta[static_cast<size_t>(r)]);
        out.rows.push_back(rows[static_cast<size_t>(r)]);
        out.labels.push_back(labels[static_cast<size_t>(r)]);
    }
    return out;
}

ZNormReport znormalize_per_participant(FeatureMatrix& m, const std::string& column_prefix) {
    ZNormReport report;
    std::map<std::string, std::vector<int>> by_participant;
    for (int i = 0; i < m.n_rows(); ++i) by_participant[m.meta[i].participant_id].push_back(i);

    for (int c = 0; c < m.n_cols(); ++c) {
        if (!column_prefix.empty() && m.columns[c].rfind(column_prefix, 0) != 0) continue;
        for (const auto& [participant, row_ids] : by_participant) {
            std::vector<int> usable;
            for (int r : row_ids)
                if (!is_missing(m.rows[r][c])) usable.push_back(r);
            if (usable.size() < 2) {
                report.insufficient.emplace_back(participant, m.columns[c]);
                continue;
            }
            double mean = 0.0;
            for (int r : usable) mean += m.rows[r][c];
            mean /= static_cast<double>(usable.size());
            double var = 0.0;
            for (int r : usable) var += (m.rows[r][c] - mean) * (m.rows[r][c] - mean);
            var /= static_cast<double>(usable.size());
            double sd = std::sqrt(var);
            for (int r : usable) m.rows[r][c] = sd > 0.0 ? (m.rows[r][c] - mean) / sd : 0.0;
        }
    }
    return report;
}

namespace {

// Continued-fraction evaluation of the incomplete beta (Lentz's algorithm).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;

    double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                      b * std::log(1.0 - x);
    double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0))
        return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double t_two_sided_p(double t, int df) {
    if (df <= 0) throw Error(ErrorKind::TooFew, "t test needs df >= 1");
    double x = df / (df + t * t);
    return incomplete_beta(df / 2.0, 0.5, x);
}

PointBiserial point_biserial(const std::vector<double>& values, const std::vector<int>& labels) {
    if (values.size() != labels.size())
        throw Error(ErrorKind::SchemaMismatch, "values and labels differ in length");
    int n = static_cast<int>(values.size());
    if (n < 3) throw Error(ErrorKind::TooFew, "need n >= 3, got " + std::to_string(n));

    int n1 = 0;
    for (int l : labels) n1 += l ? 1 : 0;
    int n0 = n - n1;
    if (n0 == 0 || n1 == 0) throw Error(ErrorKind::SingleClass, "labels contain one class only");

    double m0 = 0.0, m1 = 0.0, mean = 0.0;
    for (int i = 0; i < n; ++i) {
        mean += values[i];
        (labels[i] ? m1 : m0) += values[i];
    }
    mean /= n;
    m0 /= n0;
    m1 /= n1;

    double var = 0.0;
    for (int i = 0; i < n; ++i) var += (values[i] - mean) * (values[i] - mean);
    var /= n;
    if (var <= 0.0) throw Error(ErrorKind::ZeroVariance, "all values identical");

    PointBiserial out;
    out.n = n;
    out.r = (m1 - m0) / std::sqrt(var) *
            std::sqrt(static_cast<double>(n1) * n0 / (static_cast<double>(n) * n));
    out.r = std::clamp(out.r, -1.0, 1.0);

    double r2 = out.r * out.r;
    if (r2 >= 1.0) {
        out.p = 0.0;
    } else {
        double t = out.r * std::sqrt((n - 2) / (1.0 - r2));
        out.p = t_two_sided_p(t, n - 2);
    }
    return out;
}

std::vector<bool> holm_adjust(const std::vector<double>& p_values, double alpha) {
    size_t m = p_values.size();
    for (double p : p_values)
        if (!(p >= 0.0 && p <= 1.0))
            throw Error(ErrorKind::InvalidP, "p-value out of [0,1]");
    std::vector<size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return p_values[a] < p_values[b]; });
    std::vector<bool> reject(m, false);
    for (size_t i = 0; i < m; ++i) {
        double threshold = alpha / static_cast<double>(m - i);
        if (p_values[order[i]] <= threshold)
            reject[order[i]] = true;
        else
            break;
    }
    return reject;
}

SelectionResult select_features(const FeatureMatrix& m, const SelectionConfig& cfg) {
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
        throw Error(ErrorKind::InvalidP, "alpha must be in (0,1)");
    if (m.n_rows() == 0) throw Error(ErrorKind::EmptyMatrix, "no rows");

    std::map<int, std::vector<int>> groups;  // task -> row indices (-1 = pooled)
    if (cfg.per_task) {
        for (int i = 0; i < m.n_rows(); ++i)
            groups[static_cast<int>(m.meta[i].task)].push_back(i);
    } else {
        std::vector<int>& all = groups[-1];
        all.resize(static_cast<size_t>(m.n_rows()));
        std::iota(all.begin(), all.end(), 0);
    }

    SelectionResult result;
    for (const auto& [task, row_ids] : groups) {
        for (int c = 0; c < m.n_cols(); ++c) {
            CorrelationResult entry;
            entry.feature = m.columns[static_cast<size_t>(c)];
            if (task >= 0) entry.task = static_cast<TaskLabel>(task);
            std::vector<double> values;
            std::vector<int> labels;
            for (int r : row_ids) {
                double v = m.rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
                if (is_missing(v)) continue;
                values.push_back(v);
                labels.push_back(m.labels[static_cast<size_t>(r)]);
            }
            try {
                PointBiserial pb = point_biserial(values, labels);
                entry.r_pb = pb.r;
                entry.p_value = pb.p;
                entry.n = pb.n;
                entry.significant_raw = pb.p < cfg.alpha;
            } catch (const Error& e) {
                entry.skipped_reason = error_kind_name(e.kind());
            }
            result.table.push_back(std::move(entry));
        }
    }

    if (cfg.holm) {
        // One pooled family across every (task, feature) test that ran.
        std::vector<double> ps;
        std::vector<size_t> idx;
        for (size_t i = 0; i < result.table.size(); ++i) {
            if (!result.table[i].skipped_reason.empty()) continue;
            ps.push_back(result.table[i].p_value);
            idx.push_back(i);
        }
        if (!ps.empty()) {
            std::vector<bool> flags = holm_adjust(ps, cfg.alpha);
            for (size_t i = 0; i < idx.size(); ++i)
                result.table[idx[i]].significant_holm = flags[i];
        }
    }

    for (const CorrelationResult& entry : result.table)
        if (entry.skipped_reason.empty() && entry.significant_raw)
            result.selected.insert(entry.feature);
    return result;
}

void jacobi_eigen_sym(std::vector<std::vector<double>> a, std::vector<double>& eigenvalues,
                      std::vector<std::vector<double>>& eigenvectors) {
    size_t n = a.size();
    eigenvectors.assign(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i) eigenvectors[i][i] = 1.0;

    auto off_diag = [&]() {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i)
            for (size_t j = i + 1; j < n; ++j) s += a[i][j] * a[i][j];
        return s;
    };
    double scale = 0.0;
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j) scale += a[i][j] * a[i][j];
    double tol = 1e-26 * (scale > 0.0 ? scale : 1.0);

    for (int sweep = 0; sweep < 100 && off_diag() > tol; ++sweep) {
        for (size_t p = 0; p + 1 < n; ++p) {
            for (size_t q = p + 1; q < n; ++q) {
                if (a[p][q] == 0.0) continue;
                double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                double t = (theta >= 0.0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (size_t k = 0; k < n; ++k) {
                    double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (size_t k = 0; k < n; ++k) {
                    double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (size_t k = 0; k < n; ++k) {
                    double vkp = eigenvectors[p][k], vkq = eigenvectors[q][k];
                    eigenvectors[p][k] = c * vkp - s * vkq;
                    eigenvectors[q][k] = s * vkp + c * vkq;
                }
            }
        }
    }

    eigenvalues.resize(n);
    for (size_t i = 0; i < n; ++i) eigenvalues[i] = a[i][i];
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t x, size_t y) { return eigenvalues[x] > eigenvalues[y]; });
    std::vector<double> sorted_values(n);
    std::vector<std::vector<double>> sorted_vectors(n);
    for (size_t i = 0; i < n; ++i) {
        sorted_values[i] = eigenvalues[order[i]];
        sorted_vectors[i] = eigenvectors[order[i]];
    }
    eigenvalues = std::move(sorted_values);
    eigenvectors = std::move(sorted_vectors);
}

double PcaModel::total_variance() const {
    return std::accumulate(eigenvalues.begin(), eigenvalues.end(), 0.0);
}

PcaResult pca_fit_transform(const FeatureMatrix& train, const FeatureMatrix& test,
                            double variance_kept) {
    int n = train.n_rows(), d = train.n_cols();
    if (n < 2) throw Error(ErrorKind::TooFew, "PCA needs >= 2 training rows");
    if (test.n_cols() != d) throw Error(ErrorKind::SchemaMismatch, "train/test column mismatch");
    for (const auto& row : train.rows)
        for (double v : row)
            if (is_missing(v)) throw Error(ErrorKind::MissingValues, "impute before PCA");
    for (const auto& row : test.rows)
        for (double v : row)
            if (is_missing(v)) throw Error(ErrorKind::MissingValues, "impute before PCA");

    PcaModel model;
    model.means.assign(static_cast<size_t>(d), 0.0);
    for (const auto& row : train.rows)
        for (int c = 0; c < d; ++c) model.means[static_cast<size_t>(c)] += row[static_cast<size_t>(c)];
    for (double& m : model.means) m /= n;

    std::vector<std::vector<double>> cov(static_cast<size_t>(d), std::vector<double>(static_cast<size_t>(d), 0.0));
    for (const auto& row : train.rows) {
        for (int i = 0; i < d; ++i) {
            double di = row[static_cast<size_t>(i)] - model.means[static_cast<size_t>(i)];
            for (int j = i; j < d; ++j) {
                double dj = row[static_cast<size_t>(j)] - model.means[static_cast<size_t>(j)];
                cov[static_cast<size_t>(i)][static_cast<size_t>(j)] += di * dj;
            }
        }
    }
    for (int i = 0; i < d; ++i)
        for (int j = i; j < d; ++j) {
            cov[static_cast<size_t>(i)][static_cast<size_t>(j)] /= n;
            cov[static_cast<size_t>(j)][static_cast<size_t>(i)] =
                cov[static_cast<size_t>(i)][static_cast<size_t>(j)];
        }

    double total = 0.0;
    for (int i = 0; i < d; ++i) total += cov[static_cast<size_t>(i)][static_cast<size_t>(i)];
    if (total <= 0.0) throw Error(ErrorKind::DegenerateCovariance, "train variance is zero");

    std::vector<std::vector<double>> vectors;
    jacobi_eigen_sym(cov, model.eigenvalues, vectors);
    for (double& v : model.eigenvalues) v = std::max(v, 0.0);

    double eigen_total = std::accumulate(model.eigenvalues.begin(), model.eigenvalues.end(), 0.0);
    double cumulative = 0.0;
    int k = 0;
    for (int i = 0; i < d; ++i) {
        cumulative += model.eigenvalues[static_cast<size_t>(i)];
        k = i + 1;
        if (cumulative >= variance_kept * eigen_total) break;
    }
    model.k = k;
    model.components.assign(vectors.begin(), vectors.begin() + k);

    auto project = [&](const FeatureMatrix& src) {
        FeatureMatrix out;
        out.meta = src.meta;
        out.labels = src.labels;
        for (int i = 0; i < k; ++i) out.columns.push_back("pc" + std::to_string(i + 1));
        out.rows.reserve(src.rows.size());
        for (const auto& row : src.rows) {
            std::vector<double> proj(static_cast<size_t>(k), 0.0);
            for (int i = 0; i < k; ++i) {
                double acc = 0.0;
                for (int c = 0; c < d; ++c)
                    acc += (row[static_cast<size_t>(c)] - model.means[static_cast<size_t>(c)]) *
                           model.components[static_cast<size_t>(i)][static_cast<size_t>(c)];
                proj[static_cast<size_t>(i)] = acc;
            }
            out.rows.push_back(std::move(proj));
        }
        return out;
    };

    PcaResult result;
    result.train = project(train);
    result.test = project(test);
    result.model = std::move(model);
    return result;
}

ImputeModel impute_fit(const FeatureMatrix& train) {
    ImputeModel model;
    model.columns = train.columns;
    model.col_mean.assign(train.columns.size(), 0.0);
    std::vector<int> col_n(train.columns.size(), 0);
    std::map<std::pair<int, int>, std::pair<double, int>> acc;
    for (int r = 0; r < train.n_rows(); ++r) {
        int task = static_cast<int>(train.meta[static_cast<size_t>(r)].task);
        for (int c = 0; c < train.n_cols(); ++c) {
            double v = train.rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
            if (is_missing(v)) continue;
            auto& [sum, count] = acc[{task, c}];
            sum += v;
            ++count;
            model.col_mean[static_cast<size_t>(c)] += v;
            ++col_n[static_cast<size_t>(c)];
        }
    }
    for (size_t c = 0; c < model.col_mean.size(); ++c)
        model.col_mean[c] = col_n[c] > 0 ? model.col_mean[c] / col_n[c] : 0.0;
    for (const auto& [key, sum_count] : acc)
        model.task_col_mean[key] = sum_count.first / sum_count.second;
    return model;
}

int impute_apply(const ImputeModel& model, FeatureMatrix& m) {
    if (m.columns != model.columns)
        throw Error(ErrorKind::SchemaMismatch, "imputation columns do not match");
    int imputed = 0;
    for (int r = 0; r < m.n_rows(); ++r) {
        int task = static_cast<int>(m.meta[static_cast<size_t>(r)].task);
        for (int c = 0; c < m.n_cols(); ++c) {
            double& v = m.rows[static_cast<size_t>(r)][static_cast<size_t>(c)];
            if (!is_missing(v)) continue;
            auto it = model.task_col_mean.find({task, c});
            v = it != model.task_col_mean.end() ? it->second : model.col_mean[static_cast<size_t>(c)];
            ++imputed;
        }
    }
    return imputed;
}

FeatureMatrix aggregate_participant_task(const FeatureMatrix& m) {
    FeatureMatrix out;
    out.columns = m.columns;
    std::map<std::pair<std::string, int>, std::vector<int>> groups;
    for (int r = 0; r < m.n_rows(); ++r)
        groups[{m.meta[static_cast<size_t>(r)].participant_id,
                static_cast<int>(m.meta[static_cast<size_t>(r)].task)}]
            .push_back(r);
    for (const auto& [key, row_ids] : groups) {
        RowMeta meta;
        meta.participant_id = key.first;
        meta.task = static_cast<TaskLabel>(key.second);
        meta.speaker = m.meta[static_cast<size_t>(row_ids.front())].speaker;
        meta.row_id = key.first + ":" + to_string(meta.task);
        std::vector<double> row(m.columns.size(), missing_value());
        for (size_t c = 0; c < m.columns.size(); ++c) {
            double sum = 0.0;
            int count = 0;
            for (int r : row_ids) {
                double v = m.rows[static_cast<size_t>(r)][c];
                if (is_missing(v)) continue;
                sum += v;
                ++count;
            }
            if (count > 0) row[c] = sum / count;
        }
        out.meta.push_back(std::move(meta));
        out.rows.push_back(std::move(row));
        out.labels.push_back(m.labels[static_cast<size_t>(row_ids.front())]);
    }
    return out;
}

}  // namespace convo
