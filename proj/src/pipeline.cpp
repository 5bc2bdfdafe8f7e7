#include "convo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>

#include "convo/dsp.hpp"
#include "convo/rng.hpp"
#include "convo/wav.hpp"

namespace convo {

namespace fs = std::filesystem;

std::string format_double(double value) {
    if (is_missing(value)) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    return buf;
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string piece;
    std::istringstream in(s);
    while (std::getline(in, piece, sep)) out.push_back(piece);
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
}

[[noreturn]] void config_error(const std::string& key, const std::string& detail) {
    throw Error(ErrorKind::ConfigError, key + ": " + detail);
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "off" || value == "no") return false;
    config_error(key, "expected a boolean, got \"" + value + "\"");
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        config_error(key, "expected a number, got \"" + value + "\"");
    }
}

long long parse_int(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        long long v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        config_error(key, "expected an integer, got \"" + value + "\"");
    }
}

std::string metric_cell(double v) {
    if (is_missing(v)) return "--";
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string fixed4(double v) {
    if (is_missing(v)) return "--";
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string pad_right(const std::string& s, size_t width) {
    std::string out = s;
    while (out.size() < width) out.push_back(' ');
    return out;
}

// Deterministic order-preserving parallel map over [0, n): worker i fills
// slot i, so thread scheduling never shows in the output.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, std::min(jobs, n));
    if (jobs <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(static_cast<size_t>(n));
    std::vector<std::thread> workers;
    for (int w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w]() {
            for (int i = w; i < n; i += jobs) {
                try {
                    fn(i);
                } catch (...) {
                    errors[static_cast<size_t>(i)] = std::current_exception();
                }
            }
        });
    }
    for (std::thread& t : workers) t.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace

void apply_config_entry(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "manifest") cfg.manifest = value;
    else if (key == "participants") cfg.participants = value;
    else if (key == "lexicon") cfg.lexicons.push_back(value);
    else if (key == "pos_lexicon") cfg.pos_lexicon = value;
    else if (key == "speaker") {
        try {
            cfg.speaker = speaker_from_string(value);
        } catch (const Error&) {
            config_error(key, "expected CHILD or PSYCHOLOGIST, got \"" + value + "\"");
        }
    } else if (key == "fusion") {
        cfg.fusions.clear();
        for (const std::string& piece : split(value, ',')) {
            try {
                cfg.fusions.push_back(fusion_from_string(trim(piece)));
            } catch (const Error&) {
                config_error(key, "unknown fusion \"" + trim(piece) + "\"");
            }
        }
        if (cfg.fusions.empty()) config_error(key, "empty fusion list");
    } else if (key == "selected") cfg.selected = parse_bool(key, value);
    else if (key == "alpha") cfg.selection.alpha = parse_real(key, value);
    else if (key == "per_task") cfg.selection.per_task = parse_bool(key, value);
    else if (key == "holm") cfg.selection.holm = parse_bool(key, value);
    else if (key == "trees") cfg.forest.n_trees = static_cast<int>(parse_int(key, value));
    else if (key == "max_features") cfg.forest.max_features = static_cast<int>(parse_int(key, value));
    else if (key == "min_leaf") cfg.forest.min_leaf = static_cast<int>(parse_int(key, value));
    else if (key == "bootstrap") cfg.forest.bootstrap = parse_bool(key, value);
    else if (key == "runs") cfg.runs = static_cast<int>(parse_int(key, value));
    else if (key == "test_fraction") cfg.test_fraction = parse_real(key, value);
    else if (key == "vote") cfg.participant_vote = parse_bool(key, value);
    else if (key == "znorm") cfg.znorm = parse_bool(key, value);
    else if (key == "pca") cfg.use_pca = parse_bool(key, value);
    else if (key == "variance_kept") cfg.variance_kept = parse_real(key, value);
    else if (key == "aggregate") {
        if (value == "turn") cfg.aggregate_participant_task = false;
        else if (value == "participant-task") cfg.aggregate_participant_task = true;
        else config_error(key, "expected turn or participant-task, got \"" + value + "\"");
    } else if (key == "out_dir") cfg.out_dir = value;
    else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_int(key, value));
    else if (key == "jobs") cfg.jobs = static_cast<int>(parse_int(key, value));
    else config_error(key, "unknown config key");
}

void apply_config_file(PipelineConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) config_error("config", "cannot open " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            config_error("config", path + ":" + std::to_string(line_no) + ": expected key = value");
        apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
}

void validate_config(const PipelineConfig& cfg, bool need_lexicons) {
    if (cfg.manifest.empty()) config_error("manifest", "no manifest path given");
    if (!fs::exists(cfg.manifest)) config_error("manifest", "no such file: " + cfg.manifest);
    if (!cfg.participants.empty() && !fs::exists(cfg.participants))
        config_error("participants", "no such file: " + cfg.participants);
    if (need_lexicons) {
        if (cfg.lexicons.empty()) config_error("lexicon", "at least one category lexicon is required");
        for (const std::string& path : cfg.lexicons)
            if (!fs::exists(path)) config_error("lexicon", "no such file: " + path);
        if (cfg.pos_lexicon.empty()) config_error("pos_lexicon", "a POS lexicon is required");
        if (!fs::exists(cfg.pos_lexicon))
            config_error("pos_lexicon", "no such file: " + cfg.pos_lexicon);
    }
    if (!(cfg.selection.alpha > 0.0 && cfg.selection.alpha < 1.0))
        config_error("alpha", "must be in (0, 1)");
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
        config_error("test_fraction", "must be in (0, 1)");
    if (cfg.runs < 1) config_error("runs", "must be >= 1");
    if (cfg.forest.n_trees < 1) config_error("trees", "must be >= 1");
    if (cfg.forest.min_leaf < 1) config_error("min_leaf", "must be >= 1");
    if (cfg.forest.max_features < 0) config_error("max_features", "must be >= 0");
    if (!(cfg.variance_kept > 0.0 && cfg.variance_kept <= 1.0))
        config_error("variance_kept", "must be in (0, 1]");
    if (cfg.jobs < 1) config_error("jobs", "must be >= 1");
    if (cfg.out_dir.empty()) config_error("out_dir", "no output directory given");
    if (cfg.fusions.empty()) config_error("fusion", "empty fusion list");
}

void write_table(const std::string& path, const Table& table) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
    out << "turn_id\tparticipant_id\tspeaker\ttask";
    for (const std::string& name : table.feature_names) out << "\t" << name;
    out << "\n";
    for (const TableRow& row : table.rows) {
        out << row.turn_id << "\t" << row.participant_id << "\t" << row.speaker << "\t" << row.task;
        for (double v : row.values) out << "\t" << format_double(v);
        out << "\n";
    }
}

Table read_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw Error(ErrorKind::SchemaMismatch, path + ": empty table");
    std::vector<std::string> header = split(line, '\t');
    if (header.size() < 4 || header[0] != "turn_id" || header[1] != "participant_id" ||
        header[2] != "speaker" || header[3] != "task")
        throw Error(ErrorKind::SchemaMismatch, path + ": unexpected header");
    Table table;
    table.feature_names.assign(header.begin() + 4, header.end());
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells = split(line, '\t');
        if (cells.size() != header.size())
            throw Error(ErrorKind::SchemaMismatch,
                        path + ":" + std::to_string(line_no) + ": wrong cell count");
        TableRow row;
        row.turn_id = cells[0];
        row.participant_id = cells[1];
        row.speaker = cells[2];
        row.task = cells[3];
        row.values.reserve(cells.size() - 4);
        for (size_t i = 4; i < cells.size(); ++i)
            row.values.push_back(cells[i].empty() ? missing_value() : std::stod(cells[i]));
        table.rows.push_back(std::move(row));
    }
    return table;
}

Table extract_acoustic_table(const Corpus& corpus, int jobs, ExtractStats* stats) {
    const std::vector<std::string>& names = acoustic_feature_names();
    Table table;
    for (const std::string& name : names) table.feature_names.push_back("acoustic:" + name);

    int n = static_cast<int>(corpus.turns().size());
    table.rows.resize(static_cast<size_t>(n));
    std::vector<std::string> skip_reason(static_cast<size_t>(n));

    parallel_for(n, jobs, [&](int i) {
        const Turn& turn = corpus.turns()[static_cast<size_t>(i)];
        TableRow& row = table.rows[static_cast<size_t>(i)];
        row.turn_id = turn.turn_id;
        row.participant_id = turn.participant_id;
        row.speaker = to_string(turn.speaker);
        row.task = to_string(turn.task);
        try {
            std::vector<double> samples = read_wav(turn.audio_path, kSampleRate);
            row.values = extract_acoustic_vector(samples, kSampleRate);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::TooShort) throw;
            row.values.assign(names.size(), missing_value());
            skip_reason[static_cast<size_t>(i)] = e.what();
        }
    });

    if (stats)
        for (int i = 0; i < n; ++i)
            if (!skip_reason[static_cast<size_t>(i)].empty())
                stats->skipped.emplace_back(table.rows[static_cast<size_t>(i)].turn_id,
                                            skip_reason[static_cast<size_t>(i)]);
    return table;
}

Table extract_lexical_table(const Corpus& corpus, const std::vector<CategoryLexicon>& lexicons,
                            const std::map<std::string, Pos>& pos_lexicon, int jobs,
                            ExtractStats* stats) {
    std::vector<std::string> names = lexical_feature_names(lexicons);
    Table table;
    for (const std::string& name : names) table.feature_names.push_back("lexical:" + name);

    int n = static_cast<int>(corpus.turns().size());
    table.rows.resize(static_cast<size_t>(n));
    std::vector<std::string> skip_reason(static_cast<size_t>(n));

    parallel_for(n, jobs, [&](int i) {
        const Turn& turn = corpus.turns()[static_cast<size_t>(i)];
        TableRow& row = table.rows[static_cast<size_t>(i)];
        row.turn_id = turn.turn_id;
        row.participant_id = turn.participant_id;
        row.speaker = to_string(turn.speaker);
        row.task = to_string(turn.task);
        try {
            row.values = extract_lexical_vector(turn, lexicons, pos_lexicon);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::EmptyTranscript) throw;
            row.values.assign(names.size(), missing_value());
            skip_reason[static_cast<size_t>(i)] = e.what();
        }
    });

    if (stats)
        for (int i = 0; i < n; ++i)
            if (!skip_reason[static_cast<size_t>(i)].empty())
                stats->skipped.emplace_back(table.rows[static_cast<size_t>(i)].turn_id,
                                            skip_reason[static_cast<size_t>(i)]);
    return table;
}

FeatureMatrix assemble_matrix(const std::vector<const Table*>& tables, const Corpus& corpus,
                              Speaker speaker) {
    if (tables.empty()) throw Error(ErrorKind::EmptyMatrix, "no tables to assemble");

    FeatureMatrix m;
    std::set<std::string> seen;
    for (const Table* table : tables)
        for (const std::string& name : table->feature_names) {
            if (!seen.insert(name).second)
                throw Error(ErrorKind::SchemaMismatch, "duplicate feature column " + name);
            m.columns.push_back(name);
        }

    // Row index per secondary table, keyed by turn_id.
    std::vector<std::map<std::string, const TableRow*>> index(tables.size());
    for (size_t t = 1; t < tables.size(); ++t)
        for (const TableRow& row : tables[t]->rows) index[t][row.turn_id] = &row;

    for (const TableRow& first : tables[0]->rows) {
        if (speaker_from_string(first.speaker) != speaker) continue;
        std::vector<const TableRow*> parts{&first};
        bool complete = true;
        for (size_t t = 1; t < tables.size(); ++t) {
            auto it = index[t].find(first.turn_id);
            if (it == index[t].end()) {
                complete = false;
                break;
            }
            parts.push_back(it->second);
        }
        if (!complete) continue;

        RowMeta meta;
        meta.row_id = first.turn_id;
        meta.participant_id = first.participant_id;
        meta.speaker = speaker;
        meta.task = task_from_string(first.task);
        std::vector<double> row;
        row.reserve(m.columns.size());
        for (const TableRow* part : parts)
            row.insert(row.end(), part->values.begin(), part->values.end());

        m.meta.push_back(std::move(meta));
        m.rows.push_back(std::move(row));
        m.labels.push_back(corpus.label_of(first.participant_id) == Label::POSITIVE ? 1 : 0);
    }
    return m;
}

void write_correlations_tsv(const std::string& path, const SelectionResult& result) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
    out << "task\tfeature\tn\tr_pb\tp_value\tsignificant_raw\tsignificant_holm\tskipped\n";
    for (const CorrelationResult& row : result.table) {
        out << (row.task ? to_string(*row.task) : "all") << "\t" << row.feature << "\t" << row.n
            << "\t";
        if (row.skipped_reason.empty())
            out << format_double(row.r_pb) << "\t" << format_double(row.p_value);
        else
            out << "\t";
        out << "\t" << (row.significant_raw ? 1 : 0) << "\t" << (row.significant_holm ? 1 : 0)
            << "\t" << row.skipped_reason << "\n";
    }
}

namespace {

void write_correlation_grid(const std::string& path, const std::vector<CorrelationResult>& table) {
    // Features that survive Holm somewhere, in first-appearance order.
    std::vector<std::string> features;
    for (const CorrelationResult& row : table)
        if (row.significant_holm &&
            std::find(features.begin(), features.end(), row.feature) == features.end())
            features.push_back(row.feature);

    std::vector<std::string> tasks;
    for (const CorrelationResult& row : table) {
        std::string name = row.task ? to_string(*row.task) : "all";
        if (std::find(tasks.begin(), tasks.end(), name) == tasks.end()) tasks.push_back(name);
    }

    std::map<std::pair<std::string, std::string>, const CorrelationResult*> cell;
    for (const CorrelationResult& row : table)
        cell[{row.task ? to_string(*row.task) : "all", row.feature}] = &row;

    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
    if (features.empty()) {
        out << "no feature is significant after Holm correction\n";
        return;
    }

    size_t task_width = 4;
    for (const std::string& t : tasks) task_width = std::max(task_width, t.size());
    std::vector<size_t> widths;
    for (const std::string& f : features) widths.push_back(std::max<size_t>(f.size(), 6));

    out << pad_right("task", task_width);
    for (size_t j = 0; j < features.size(); ++j) out << "  " << pad_right(features[j], widths[j]);
    out << "\n";
    for (const std::string& t : tasks) {
        out << pad_right(t, task_width);
        for (size_t j = 0; j < features.size(); ++j) {
            auto it = cell.find({t, features[j]});
            std::string text;
            if (it != cell.end() && it->second->significant_holm && it->second->skipped_reason.empty()) {
                char buf[16];
                std::snprintf(buf, sizeof(buf), "%.2f", it->second->r_pb);
                text = buf;
            }
            out << "  " << pad_right(text, widths[j]);
        }
        out << "\n";
    }
}

struct EvalTableRow {
    std::string label;
    int n_rows = 0;
    MetricRow mean;
    std::optional<MetricRow> participant_mean;
};

void write_eval_rows(const std::string& path, const std::vector<EvalTableRow>& rows) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
    size_t label_width = 8;
    for (const EvalTableRow& row : rows) label_width = std::max(label_width, row.label.size());

    auto metrics_line = [&](const std::string& label, int n, const MetricRow& m) {
        out << pad_right(label, label_width) << "  " << pad_right(std::to_string(n), 6);
        out << "  " << pad_right(metric_cell(m.accuracy), 5) << "  "
            << pad_right(metric_cell(m.precision), 5) << "  " << pad_right(metric_cell(m.recall), 5)
            << "  " << pad_right(metric_cell(m.f1), 5) << "  " << metric_cell(m.auc) << "\n";
    };

    out << pad_right("Features", label_width) << "  " << pad_right("N", 6) << "  "
        << pad_right("Acc.", 5) << "  " << pad_right("Prec.", 5) << "  " << pad_right("Rec.", 5)
        << "  " << pad_right("F1", 5) << "  " << "AUC" << "\n";
    for (const EvalTableRow& row : rows) metrics_line(row.label, row.n_rows, row.mean);

    bool any_vote = std::any_of(rows.begin(), rows.end(),
                                [](const EvalTableRow& r) { return r.participant_mean.has_value(); });
    if (any_vote) {
        out << "\nparticipant majority vote\n";
        for (const EvalTableRow& row : rows)
            if (row.participant_mean) metrics_line(row.label, row.n_rows, *row.participant_mean);
    }
}

std::string eval_label(const std::string& fusion_name, bool selected) {
    return fusion_name + (selected ? " (selected)" : " (full)");
}

}  // namespace

void write_correlations_table(const std::string& path, const SelectionResult& result) {
    write_correlation_grid(path, result.table);
}

void write_eval_tsv(const std::string& path, const std::vector<EvalReport>& reports,
                    bool selected) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
    out << "feature_set\tfeatures\trun\tn_rows\tn_features\taccuracy\tprecision\trecall\tf1\tauc"
        << "\timputed_cells\tp_accuracy\tp_precision\tp_recall\tp_f1\tp_auc\n";
    auto metric_cells = [&](const MetricRow& m) {
        out << format_double(m.accuracy) << "\t" << format_double(m.precision) << "\t"
            << format_double(m.recall) << "\t" << format_double(m.f1) << "\t"
            << format_double(m.auc);
    };
    for (const EvalReport& report : reports) {
        for (const EvalRun& run : report.runs) {
            out << report.feature_set_name << "\t" << (selected ? "selected" : "full") << "\t"
                << run.run_index << "\t" << report.n_rows << "\t" << run.n_features << "\t";
            metric_cells(run.turn_metrics);
            out << "\t" << run.imputed_cells << "\t";
            if (run.participant_metrics) metric_cells(*run.participant_metrics);
            else out << "\t\t\t\t";
            out << "\n";
        }
        out << report.feature_set_name << "\t" << (selected ? "selected" : "full") << "\tmean\t"
            << report.n_rows << "\t" << format_double(report.mean_n_features) << "\t";
        metric_cells(report.mean);
        out << "\t\t";
        if (report.participant_mean) metric_cells(*report.participant_mean);
        else out << "\t\t\t\t";
        out << "\n";
    }
}

void write_eval_table(const std::string& path, const std::vector<EvalReport>& reports,
                      bool selected) {
    std::vector<EvalTableRow> rows;
    for (const EvalReport& report : reports) {
        EvalTableRow row;
        row.label = eval_label(report.feature_set_name, selected);
        row.n_rows = report.n_rows;
        row.mean = report.mean;
        row.participant_mean = report.participant_mean;
        rows.push_back(std::move(row));
    }
    write_eval_rows(path, rows);
}

std::vector<std::string> rewrite_report_tables(const std::string& out_dir) {
    std::vector<std::string> written;
    fs::path base(out_dir);

    fs::path corr = base / "correlations.tsv";
    if (fs::exists(corr)) {
        std::ifstream in(corr);
        std::string line;
        std::getline(in, line);  // header
        std::vector<CorrelationResult> table;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> cells = split(line, '\t');
            if (cells.size() < 7)
                throw Error(ErrorKind::SchemaMismatch, corr.string() + ": wrong cell count");
            CorrelationResult row;
            if (cells[0] != "all") row.task = task_from_string(cells[0]);
            row.feature = cells[1];
            row.n = static_cast<int>(std::stol(cells[2]));
            row.r_pb = cells[3].empty() ? missing_value() : std::stod(cells[3]);
            row.p_value = cells[4].empty() ? missing_value() : std::stod(cells[4]);
            row.significant_raw = cells[5] == "1";
            row.significant_holm = cells[6] == "1";
            if (cells.size() > 7) row.skipped_reason = cells[7];
            table.push_back(std::move(row));
        }
        fs::path target = base / "correlations_table.txt";
        write_correlation_grid(target.string(), table);
        written.push_back(target.string());
    }

    fs::path eval = base / "eval.tsv";
    if (fs::exists(eval)) {
        std::ifstream in(eval);
        std::string line;
        std::getline(in, line);  // header
        std::vector<EvalTableRow> rows;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> cells = split(line, '\t');
            if (cells.size() < 16)
                throw Error(ErrorKind::SchemaMismatch, eval.string() + ": wrong cell count");
            if (cells[2] != "mean") continue;
            EvalTableRow row;
            row.label = eval_label(cells[0], cells[1] == "selected");
            row.n_rows = static_cast<int>(std::stol(cells[3]));
            row.mean.accuracy = std::stod(cells[5]);
            row.mean.precision = std::stod(cells[6]);
            row.mean.recall = std::stod(cells[7]);
            row.mean.f1 = std::stod(cells[8]);
            row.mean.auc = cells[9].empty() ? missing_value() : std::stod(cells[9]);
            if (!cells[11].empty()) {
                MetricRow p;
                p.accuracy = std::stod(cells[11]);
                p.precision = std::stod(cells[12]);
                p.recall = std::stod(cells[13]);
                p.f1 = std::stod(cells[14]);
                p.auc = cells[15].empty() ? missing_value() : std::stod(cells[15]);
                row.participant_mean = p;
            }
            rows.push_back(std::move(row));
        }
        fs::path target = base / "eval_table.txt";
        write_eval_rows(target.string(), rows);
        written.push_back(target.string());
    }

    if (written.empty())
        throw Error(ErrorKind::IoError,
                    "nothing to report: no correlations.tsv or eval.tsv in " + out_dir);
    return written;
}

namespace {

template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const Error& e) {
        // Config problems already name their field; everything else gains stage context.
        if (e.kind() == ErrorKind::ConfigError || e.kind() == ErrorKind::InvalidSpec) throw;
        throw Error(e.kind(), std::string(name) + ": " + e.message());
    } catch (const std::exception& e) {
        throw Error(ErrorKind::IoError, std::string(name) + ": " + e.what());
    }
}

std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg) {
    std::vector<std::pair<std::string, std::string>> entries;
    auto add = [&](const std::string& k, const std::string& v) { entries.emplace_back(k, v); };
    add("aggregate", cfg.aggregate_participant_task ? "participant-task" : "turn");
    add("alpha", format_double(cfg.selection.alpha));
    add("bootstrap", cfg.forest.bootstrap ? "true" : "false");
    std::string fusions;
    for (size_t i = 0; i < cfg.fusions.size(); ++i)
        fusions += std::string(i ? "," : "") + to_string(cfg.fusions[i]);
    add("fusion", fusions);
    add("holm", cfg.selection.holm ? "true" : "false");
    add("jobs", std::to_string(cfg.jobs));
    for (const std::string& lex : cfg.lexicons) add("lexicon", lex);
    add("manifest", cfg.manifest);
    add("max_features", std::to_string(cfg.forest.max_features));
    add("min_leaf", std::to_string(cfg.forest.min_leaf));
    add("out_dir", cfg.out_dir);
    add("participants", cfg.participants.empty() ? default_participants_path(cfg.manifest)
                                                 : cfg.participants);
    add("pca", cfg.use_pca ? "true" : "false");
    add("per_task", cfg.selection.per_task ? "true" : "false");
    add("pos_lexicon", cfg.pos_lexicon);
    add("runs", std::to_string(cfg.runs));
    add("seed", std::to_string(cfg.seed));
    add("selected", cfg.selected ? "true" : "false");
    add("speaker", to_string(cfg.speaker));
    add("test_fraction", format_double(cfg.test_fraction));
    add("trees", std::to_string(cfg.forest.n_trees));
    add("variance_kept", format_double(cfg.variance_kept));
    add("vote", cfg.participant_vote ? "true" : "false");
    add("znorm", cfg.znorm ? "true" : "false");
    return entries;
}

}  // namespace

void run_pipeline(const PipelineConfig& cfg) {
    stage("config", [&] { validate_config(cfg, true); });

    std::ostringstream log;
    log << kVersion << "\n";
    log << "config:\n";
    for (const auto& [key, value] : config_entries(cfg)) log << "  " << key << " = " << value << "\n";

    Corpus corpus = stage("load", [&] {
        std::string participants =
            cfg.participants.empty() ? default_participants_path(cfg.manifest) : cfg.participants;
        return load_manifest(cfg.manifest, participants);
    });
    int child_turns = 0;
    for (const Turn& turn : corpus.turns())
        if (turn.speaker == Speaker::CHILD) ++child_turns;
    log << "corpus: participants=" << corpus.participants().size()
        << " positive=" << corpus.count_label(Label::POSITIVE)
        << " negative=" << corpus.count_label(Label::NEGATIVE)
        << " turns=" << corpus.turns().size() << " child_turns=" << child_turns << "\n";

    fs::create_directories(cfg.out_dir);
    fs::path base(cfg.out_dir);

    ExtractStats acoustic_stats;
    Table acoustic = stage("extract-acoustic", [&] {
        Table t = extract_acoustic_table(corpus, cfg.jobs, &acoustic_stats);
        write_table((base / "acoustic.tsv").string(), t);
        return t;
    });
    log << "extract-acoustic: rows=" << acoustic.rows.size()
        << " skipped=" << acoustic_stats.skipped.size() << "\n";
    for (const auto& [turn_id, reason] : acoustic_stats.skipped)
        log << "  skipped " << turn_id << ": " << reason << "\n";

    ExtractStats lexical_stats;
    std::vector<CategoryLexicon> lexicons;
    std::map<std::string, Pos> pos_lexicon;
    Table lexical = stage("extract-lexical", [&] {
        for (const std::string& path : cfg.lexicons) lexicons.push_back(load_lexicon(path));
        pos_lexicon = load_pos_lexicon(cfg.pos_lexicon);
        Table t = extract_lexical_table(corpus, lexicons, pos_lexicon, cfg.jobs, &lexical_stats);
        write_table((base / "lexical.tsv").string(), t);
        return t;
    });
    log << "extract-lexical: rows=" << lexical.rows.size()
        << " skipped=" << lexical_stats.skipped.size() << "\n";
    for (const auto& [turn_id, reason] : lexical_stats.skipped)
        log << "  skipped " << turn_id << ": " << reason << "\n";

    FeatureMatrix matrix = stage("assemble", [&] {
        return assemble_matrix({&acoustic, &lexical}, corpus, cfg.speaker);
    });
    log << "matrix: rows=" << matrix.n_rows() << " columns=" << matrix.n_cols()
        << " speaker=" << to_string(cfg.speaker) << "\n";

    if (cfg.znorm) {
        ZNormReport report = stage("znorm", [&] {
            return znormalize_per_participant(matrix, "acoustic:");
        });
        log << "znorm: prefix=acoustic: insufficient=" << report.insufficient.size() << "\n";
        for (const auto& [participant, column] : report.insufficient)
            log << "  unnormalized " << participant << " " << column << "\n";
    } else {
        log << "znorm: off\n";
    }

    if (cfg.aggregate_participant_task) {
        matrix = stage("aggregate", [&] { return aggregate_participant_task(matrix); });
        log << "aggregate: participant-task rows=" << matrix.n_rows() << "\n";
    }

    SelectionResult selection = stage("correlate", [&] {
        SelectionResult result = select_features(matrix, cfg.selection);
        write_correlations_tsv((base / "correlations.tsv").string(), result);
        write_correlations_table((base / "correlations_table.txt").string(), result);
        return result;
    });
    int holm_count = 0;
    int skipped_tests = 0;
    for (const CorrelationResult& row : selection.table) {
        if (row.significant_holm) ++holm_count;
        if (!row.skipped_reason.empty()) ++skipped_tests;
    }
    log << "correlate: tests=" << selection.table.size() << " skipped=" << skipped_tests
        << " selected=" << selection.selected.size() << " holm_significant=" << holm_count << "\n";

    SplitPlan plan = stage("split", [&] {
        std::set<std::string> ids;
        for (const RowMeta& meta : matrix.meta) ids.insert(meta.participant_id);
        std::vector<Participant> present;
        for (const std::string& id : ids) present.push_back(corpus.participant(id));
        return split_leave_n_users_out(present, cfg.runs, cfg.test_fraction, cfg.seed);
    });
    if (!plan.runs.empty())
        log << "split: runs=" << plan.runs.size() << " test=" << plan.runs[0].test_ids.size()
            << " train=" << plan.runs[0].train_ids.size() << " seed=" << plan.seed << "\n";

    std::vector<EvalReport> reports;
    fs::create_directories(base / "models");
    int forests_written = 0;
    for (Fusion fusion : cfg.fusions) {
        FusionConfig fusion_cfg;
        fusion_cfg.fusion = fusion;
        fusion_cfg.selected = cfg.selected;
        fusion_cfg.participant_vote = cfg.participant_vote;
        fusion_cfg.use_pca = cfg.use_pca;
        fusion_cfg.variance_kept = cfg.variance_kept;
        fusion_cfg.selection = cfg.selection;
        fusion_cfg.forest = cfg.forest;
        fusion_cfg.forest.seed = cfg.seed;

        std::vector<std::string> forests;
        EvalReport report = stage("evaluate", [&] {
            return run_fusion_experiment(matrix, plan, fusion_cfg, &forests);
        });

        stage("models", [&] {
            fs::path dir = base / "models" / to_string(fusion);
            fs::create_directories(dir);
            for (size_t r = 0; r < forests.size(); ++r) {
                char name[32];
                std::snprintf(name, sizeof(name), "run_%02zu.forest", r);
                fs::path file = dir / name;
                std::ofstream out(file);
                if (!out) throw Error(ErrorKind::IoError, "cannot write " + file.string());
                out << forests[r];
                out.close();
                std::ifstream in(file);
                std::stringstream readback;
                readback << in.rdbuf();
                ForestModel reloaded = deserialize_forest(readback.str());
                if (serialize_forest(reloaded) != forests[r])
                    throw Error(ErrorKind::SchemaMismatch,
                                "forest reload mismatch for " + file.string());
                ++forests_written;
            }
        });

        log << "evaluate " << eval_label(report.feature_set_name, cfg.selected)
            << ": rows=" << report.n_rows << " mean_features=" << fixed4(report.mean_n_features)
            << "\n";
        for (const EvalRun& run : report.runs) {
            log << "  run " << run.run_index << ": features=" << run.n_features
                << " imputed=" << run.imputed_cells << " acc=" << fixed4(run.turn_metrics.accuracy)
                << " prec=" << fixed4(run.turn_metrics.precision)
                << " rec=" << fixed4(run.turn_metrics.recall)
                << " f1=" << fixed4(run.turn_metrics.f1) << " auc=" << fixed4(run.turn_metrics.auc);
            if (run.participant_metrics)
                log << " vote_acc=" << fixed4(run.participant_metrics->accuracy);
            log << "\n";
        }
        log << "  mean: acc=" << fixed4(report.mean.accuracy)
            << " prec=" << fixed4(report.mean.precision) << " rec=" << fixed4(report.mean.recall)
            << " f1=" << fixed4(report.mean.f1) << " auc=" << fixed4(report.mean.auc) << "\n";
        if (report.participant_mean)
            log << "  mean vote: acc=" << fixed4(report.participant_mean->accuracy)
                << " prec=" << fixed4(report.participant_mean->precision)
                << " rec=" << fixed4(report.participant_mean->recall)
                << " f1=" << fixed4(report.participant_mean->f1)
                << " auc=" << fixed4(report.participant_mean->auc) << "\n";

        reports.push_back(std::move(report));
    }
    log << "models: " << forests_written << " forests written and reload-verified\n";

    stage("report", [&] {
        write_eval_tsv((base / "eval.tsv").string(), reports, cfg.selected);
        write_eval_table((base / "eval_table.txt").string(), reports, cfg.selected);
    });

    std::ofstream log_out(base / "run_log.txt");
    if (!log_out) throw Error(ErrorKind::IoError, "cannot write run_log.txt");
    log_out << log.str();
}

}  // namespace convo
