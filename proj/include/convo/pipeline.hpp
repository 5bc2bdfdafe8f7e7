#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "convo/corpus.hpp"
#include "convo/lexicon.hpp"
#include "convo/model.hpp"
#include "convo/stats.hpp"

namespace convo {

struct PipelineConfig {
    std::string manifest;
    std::string participants;  // empty -> participants.jsonl next to the manifest
    std::vector<std::string> lexicons;
    std::string pos_lexicon;
    Speaker speaker = Speaker::CHILD;
    std::vector<Fusion> fusions = {Fusion::A, Fusion::L, Fusion::AL, Fusion::ALT};
    bool selected = true;
    SelectionConfig selection;
    ForestConfig forest;
    int runs = 10;
    double test_fraction = 0.2;
    bool participant_vote = false;
    bool znorm = true;
    bool use_pca = false;
    double variance_kept = 0.95;
    bool aggregate_participant_task = false;
    std::string out_dir = "out";
    uint64_t seed = 42;
    int jobs = 1;
};

// Flat "key = value" config file, '#' comments. Unknown keys or bad values
// raise ConfigError messages that begin with the offending key.
void apply_config_file(PipelineConfig& cfg, const std::string& path);
void apply_config_entry(PipelineConfig& cfg, const std::string& key, const std::string& value);

// Checks paths and ranges; need_lexicons demands at least one readable
// category lexicon plus a POS lexicon.
void validate_config(const PipelineConfig& cfg, bool need_lexicons);

// Per-turn feature table as written to disk: four id columns then prefixed
// feature columns; missing values are empty cells.
struct TableRow {
    std::string turn_id;
    std::string participant_id;
    std::string speaker;
    std::string task;
    std::vector<double> values;
};

struct Table {
    std::vector<std::string> feature_names;  // carry their block prefix, e.g. "acoustic:pitch_mean"
    std::vector<TableRow> rows;
};

void write_table(const std::string& path, const Table& table);
Table read_table(const std::string& path);

struct ExtractStats {
    std::vector<std::pair<std::string, std::string>> skipped;  // turn_id -> reason
};

Table extract_acoustic_table(const Corpus& corpus, int jobs, ExtractStats* stats = nullptr);
Table extract_lexical_table(const Corpus& corpus, const std::vector<CategoryLexicon>& lexicons,
                            const std::map<std::string, Pos>& pos_lexicon, int jobs,
                            ExtractStats* stats = nullptr);

// Inner join on turn_id (row order follows the first table), one speaker,
// labels attached from the corpus.
FeatureMatrix assemble_matrix(const std::vector<const Table*>& tables, const Corpus& corpus,
                              Speaker speaker);

void write_correlations_tsv(const std::string& path, const SelectionResult& result);
// Aligned grid: rows = tasks, columns = features significant after Holm in at
// least one task, blank cells elsewhere.
void write_correlations_table(const std::string& path, const SelectionResult& result);

void write_eval_tsv(const std::string& path, const std::vector<EvalReport>& reports,
                    bool selected);
void write_eval_table(const std::string& path, const std::vector<EvalReport>& reports,
                      bool selected);

// report subcommand: rebuild the aligned text tables from the delimited files
// already present in out_dir. Returns the files it wrote.
std::vector<std::string> rewrite_report_tables(const std::string& out_dir);

// Full pipeline: extract both feature blocks, normalize, correlate, evaluate
// every configured fusion, serialize models, and write a run log. Bit-identical
// outputs for a fixed config and seed. Throws Error with stage context.
void run_pipeline(const PipelineConfig& cfg);

// %.17g; missing values render as the empty string.
std::string format_double(double value);

}  // namespace convo
