#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "convo/corpus.hpp"
#include "convo/pipeline.hpp"
#include "convo/synth.hpp"
#include "convo/types.hpp"

namespace fs = std::filesystem;
using namespace convo;

namespace {

struct CliState {
    PipelineConfig cfg;
    std::string config_path;

    // synth-only knobs
    int synth_participants = 20;
    int synth_turns = 20;
    std::vector<std::string> synth_effects;

    std::string speaker_text;
    std::string fusion_text;
    std::string aggregate_text;
    bool full = false;
};

Corpus load_corpus(const PipelineConfig& cfg) {
    std::string participants =
        cfg.participants.empty() ? default_participants_path(cfg.manifest) : cfg.participants;
    return load_manifest(cfg.manifest, participants);
}

Table read_required_table(const std::string& out_dir, const std::string& name) {
    fs::path path = fs::path(out_dir) / name;
    if (!fs::exists(path))
        throw Error(ErrorKind::IoError,
                    name + " not found in " + out_dir + "; run the extract step first");
    return read_table(path.string());
}

FeatureMatrix load_matrix(const CliState& state) {
    Corpus corpus = load_corpus(state.cfg);
    Table acoustic = read_required_table(state.cfg.out_dir, "acoustic.tsv");
    Table lexical = read_required_table(state.cfg.out_dir, "lexical.tsv");
    FeatureMatrix matrix = assemble_matrix({&acoustic, &lexical}, corpus, state.cfg.speaker);
    if (state.cfg.znorm) znormalize_per_participant(matrix, "acoustic:");
    if (state.cfg.aggregate_participant_task) matrix = aggregate_participant_task(matrix);
    return matrix;
}

int run_extract_acoustic(const CliState& state) {
    validate_config(state.cfg, false);
    Corpus corpus = load_corpus(state.cfg);
    ExtractStats stats;
    Table table = extract_acoustic_table(corpus, state.cfg.jobs, &stats);
    fs::create_directories(state.cfg.out_dir);
    std::string path = (fs::path(state.cfg.out_dir) / "acoustic.tsv").string();
    write_table(path, table);
    std::cout << "wrote " << path << " (" << table.rows.size() << " rows, "
              << table.feature_names.size() << " features, " << stats.skipped.size()
              << " skipped)\n";
    for (const auto& [turn_id, reason] : stats.skipped)
        std::cout << "  skipped " << turn_id << ": " << reason << "\n";
    return 0;
}

int run_extract_lexical(const CliState& state) {
    validate_config(state.cfg, true);
    Corpus corpus = load_corpus(state.cfg);
    std::vector<CategoryLexicon> lexicons;
    for (const std::string& path : state.cfg.lexicons) lexicons.push_back(load_lexicon(path));
    std::map<std::string, Pos> pos = load_pos_lexicon(state.cfg.pos_lexicon);
    ExtractStats stats;
    Table table = extract_lexical_table(corpus, lexicons, pos, state.cfg.jobs, &stats);
    fs::create_directories(state.cfg.out_dir);
    std::string path = (fs::path(state.cfg.out_dir) / "lexical.tsv").string();
    write_table(path, table);
    std::cout << "wrote " << path << " (" << table.rows.size() << " rows, "
              << table.feature_names.size() << " features, " << stats.skipped.size()
              << " skipped)\n";
    return 0;
}

int run_correlate(const CliState& state) {
    validate_config(state.cfg, false);
    FeatureMatrix matrix = load_matrix(state);
    SelectionResult result = select_features(matrix, state.cfg.selection);
    std::string tsv = (fs::path(state.cfg.out_dir) / "correlations.tsv").string();
    std::string txt = (fs::path(state.cfg.out_dir) / "correlations_table.txt").string();
    write_correlations_tsv(tsv, result);
    write_correlations_table(txt, result);
    int holm = 0;
    for (const CorrelationResult& row : result.table)
        if (row.significant_holm) ++holm;
    std::cout << "wrote " << tsv << " and " << txt << " (" << result.table.size() << " tests, "
              << result.selected.size() << " selected, " << holm << " holm-significant)\n";
    return 0;
}

int run_evaluate(const CliState& state) {
    validate_config(state.cfg, false);
    Corpus corpus = load_corpus(state.cfg);
    FeatureMatrix matrix = load_matrix(state);

    std::set<std::string> ids;
    for (const RowMeta& meta : matrix.meta) ids.insert(meta.participant_id);
    std::vector<Participant> present;
    for (const std::string& id : ids) present.push_back(corpus.participant(id));
    SplitPlan plan =
        split_leave_n_users_out(present, state.cfg.runs, state.cfg.test_fraction, state.cfg.seed);

    std::vector<EvalReport> reports;
    for (Fusion fusion : state.cfg.fusions) {
        FusionConfig fusion_cfg;
        fusion_cfg.fusion = fusion;
        fusion_cfg.selected = state.cfg.selected;
        fusion_cfg.participant_vote = state.cfg.participant_vote;
        fusion_cfg.use_pca = state.cfg.use_pca;
        fusion_cfg.variance_kept = state.cfg.variance_kept;
        fusion_cfg.selection = state.cfg.selection;
        fusion_cfg.forest = state.cfg.forest;
        fusion_cfg.forest.seed = state.cfg.seed;
        reports.push_back(run_fusion_experiment(matrix, plan, fusion_cfg));
    }
    std::string tsv = (fs::path(state.cfg.out_dir) / "eval.tsv").string();
    std::string txt = (fs::path(state.cfg.out_dir) / "eval_table.txt").string();
    write_eval_tsv(tsv, reports, state.cfg.selected);
    write_eval_table(txt, reports, state.cfg.selected);
    std::cout << "wrote " << tsv << " and " << txt << "\n";
    for (const EvalReport& report : reports) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-6s n=%d acc=%.4f prec=%.4f rec=%.4f f1=%.4f auc=%.4f",
                      report.feature_set_name.c_str(), report.n_rows, report.mean.accuracy,
                      report.mean.precision, report.mean.recall, report.mean.f1, report.mean.auc);
        std::cout << buf << "\n";
    }
    return 0;
}

int run_report(const CliState& state) {
    for (const std::string& path : rewrite_report_tables(state.cfg.out_dir))
        std::cout << "wrote " << path << "\n";
    return 0;
}

int run_synth(const CliState& state) {
    SynthConfig synth;
    synth.n_participants = state.synth_participants;
    synth.turns_per_participant = state.synth_turns;
    synth.seed = state.cfg.seed;
    synth.out_dir = state.cfg.out_dir;
    for (const std::string& spec : state.synth_effects)
        synth.effects.push_back(parse_effect(spec));
    SynthOutput out = generate_synthetic_corpus(synth);
    std::cout << "wrote " << out.manifest_path << "\n";
    std::cout << "wrote " << out.participants_path << "\n";
    std::cout << "wrote " << out.ground_truth_path << "\n";
    return 0;
}

int run_full(const CliState& state) {
    run_pipeline(state.cfg);
    std::cout << "pipeline complete; artifacts in " << state.cfg.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CliState state;
    CLI::App app{"conversation feature extraction and grouped evaluation toolkit"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);
    app.fallthrough();

    // Globals; config is applied first, explicit flags override it afterwards.
    app.add_option("--config", state.config_path, "flat key = value config file");
    auto* opt_seed = app.add_option("--seed", "root RNG seed");
    auto* opt_out = app.add_option("--out-dir", "artifact directory");
    auto* opt_jobs = app.add_option("--jobs", "worker threads for extraction");

    CLI::App* cmd_ea = app.add_subcommand("extract-acoustic", "per-turn acoustic feature table");
    CLI::App* cmd_el = app.add_subcommand("extract-lexical", "per-turn lexical feature table");
    CLI::App* cmd_corr = app.add_subcommand("correlate", "point-biserial screening tables");
    CLI::App* cmd_eval = app.add_subcommand("evaluate", "grouped cross-validated random forest");
    CLI::App* cmd_report = app.add_subcommand("report", "rebuild aligned text tables from tsv");
    CLI::App* cmd_synth = app.add_subcommand("synth", "seeded synthetic corpus with planted effects");
    CLI::App* cmd_run = app.add_subcommand("run", "full pipeline: extract, correlate, evaluate");

    std::vector<CLI::Option*> opt_manifest, opt_participants;
    for (CLI::App* cmd : {cmd_ea, cmd_el, cmd_corr, cmd_eval, cmd_run}) {
        opt_manifest.push_back(cmd->add_option("--manifest", "JSONL turn manifest"));
        opt_participants.push_back(
            cmd->add_option("--participants", "participant label file (default: sibling)"));
    }

    std::vector<std::string> lexicon_paths;
    std::string pos_lexicon_path;
    for (CLI::App* cmd : {cmd_el, cmd_run}) {
        cmd->add_option("--lexicon", lexicon_paths, "category lexicon file (repeatable)");
        cmd->add_option("--pos-lexicon", pos_lexicon_path, "tab-separated word/tag lexicon");
    }

    auto* opt_alpha = cmd_corr->add_option("--alpha", "significance level");
    auto* flag_holm = cmd_corr->add_flag("--holm,!--no-holm", "Holm correction in reports");
    auto* flag_per_task = cmd_corr->add_flag("--per-task,!--pooled", "test within each task");
    cmd_corr->add_option("--aggregate", state.aggregate_text, "turn or participant-task rows");

    auto* opt_speaker_c = cmd_corr->add_option("--speaker", "CHILD or PSYCHOLOGIST");
    auto* opt_speaker_e = cmd_eval->add_option("--speaker", "CHILD or PSYCHOLOGIST");
    cmd_eval->add_option("--fusion", state.fusion_text, "comma list: A,L,A+L,A+L+T");
    auto* flag_selected = cmd_eval->add_flag("--selected,!--full", "correlation-screened features");
    auto* opt_runs = cmd_eval->add_option("--runs", "cross-validation repetitions");
    auto* flag_vote = cmd_eval->add_flag("--vote", "also report participant majority vote");

    cmd_synth->add_option("--participants", state.synth_participants, "participant count (even)");
    cmd_synth->add_option("--turns", state.synth_turns, "turns per participant");
    cmd_synth->add_option("--effect", state.synth_effects,
                          "planted effect, e.g. pitch_shift_hz:40 (repeatable)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (!state.config_path.empty()) apply_config_file(state.cfg, state.config_path);

        // Explicit flags override the config file.
        if (*opt_seed) apply_config_entry(state.cfg, "seed", opt_seed->as<std::string>());
        if (*opt_out) apply_config_entry(state.cfg, "out_dir", opt_out->as<std::string>());
        if (*opt_jobs) apply_config_entry(state.cfg, "jobs", opt_jobs->as<std::string>());
        for (CLI::Option* opt : opt_manifest)
            if (*opt) apply_config_entry(state.cfg, "manifest", opt->as<std::string>());
        for (CLI::Option* opt : opt_participants)
            if (*opt) apply_config_entry(state.cfg, "participants", opt->as<std::string>());
        for (const std::string& path : lexicon_paths)
            apply_config_entry(state.cfg, "lexicon", path);
        if (!pos_lexicon_path.empty())
            apply_config_entry(state.cfg, "pos_lexicon", pos_lexicon_path);
        if (*opt_alpha) apply_config_entry(state.cfg, "alpha", opt_alpha->as<std::string>());
        if (*flag_holm) state.cfg.selection.holm = flag_holm->as<bool>();
        if (*flag_per_task) state.cfg.selection.per_task = flag_per_task->as<bool>();
        if (!state.aggregate_text.empty())
            apply_config_entry(state.cfg, "aggregate", state.aggregate_text);
        if (*opt_speaker_c) apply_config_entry(state.cfg, "speaker", opt_speaker_c->as<std::string>());
        if (*opt_speaker_e) apply_config_entry(state.cfg, "speaker", opt_speaker_e->as<std::string>());
        if (!state.fusion_text.empty()) apply_config_entry(state.cfg, "fusion", state.fusion_text);
        if (*flag_selected) state.cfg.selected = flag_selected->as<bool>();
        if (*opt_runs) apply_config_entry(state.cfg, "runs", opt_runs->as<std::string>());
        if (*flag_vote) state.cfg.participant_vote = true;

        if (app.got_subcommand(cmd_ea)) return run_extract_acoustic(state);
        if (app.got_subcommand(cmd_el)) return run_extract_lexical(state);
        if (app.got_subcommand(cmd_corr)) return run_correlate(state);
        if (app.got_subcommand(cmd_eval)) return run_evaluate(state);
        if (app.got_subcommand(cmd_report)) return run_report(state);
        if (app.got_subcommand(cmd_synth)) return run_synth(state);
        if (app.got_subcommand(cmd_run)) return run_full(state);
        std::cerr << "config error: no subcommand\n";
        return 2;
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ConfigError || e.kind() == ErrorKind::InvalidSpec) {
            std::cerr << "config error: " << e.message() << "\n";
            return 2;
        }
        std::cerr << "pipeline error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "pipeline error: " << e.what() << "\n";
        return 1;
    }
}
