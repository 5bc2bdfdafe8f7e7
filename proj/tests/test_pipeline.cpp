#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "convo/pipeline.hpp"
#include "convo/synth.hpp"
#include "fixtures.hpp"

using namespace convo;
using fixtures::TempDir;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void spit(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

std::string error_message(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return "";
}

// A corpus plus the lexicon files a full pipeline run needs.
struct PipelineFixture {
    TempDir dir;
    SynthOutput corpus;
    std::string lexicon_path;
    std::string pos_path;

    explicit PipelineFixture(const std::string& name, uint64_t seed = 31)
        : dir("pipe_" + name) {
        SynthConfig synth;
        synth.n_participants = 6;
        synth.turns_per_participant = 2;
        synth.seed = seed;
        synth.out_dir = (fs::path(dir.str()) / "corpus").string();
        corpus = generate_synthetic_corpus(synth);

        lexicon_path = (fs::path(dir.str()) / "filler.txt").string();
        spit(lexicon_path, "category: filler\num\nwell\nyou know\n");
        pos_path = (fs::path(dir.str()) / "pos.tsv").string();
        spit(pos_path, "i\tPRONOUN\nyou\tPRONOUN\nbuilds\tVERB\ntower\tNOUN\nbig\tADJECTIVE\n");
    }

    PipelineConfig config(const std::string& out_name) const {
        PipelineConfig cfg;
        cfg.manifest = corpus.manifest_path;
        cfg.participants = corpus.participants_path;
        cfg.lexicons = {lexicon_path};
        cfg.pos_lexicon = pos_path;
        cfg.fusions = {Fusion::A, Fusion::AL};
        cfg.selected = false;
        cfg.forest.n_trees = 15;
        cfg.runs = 2;
        cfg.test_fraction = 0.34;  // 2 of 6 participants held out
        cfg.out_dir = (fs::path(dir.str()) / out_name).string();
        cfg.seed = 7;
        return cfg;
    }
};

}  // namespace

TEST_CASE("format_double") {
    CHECK(format_double(2.0) == "2");
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(-1.5) == "-1.5");
    CHECK(format_double(missing_value()).empty());
}

TEST_CASE("config entries parse and reject") {
    PipelineConfig cfg;
    apply_config_entry(cfg, "runs", "3");
    CHECK(cfg.runs == 3);
    apply_config_entry(cfg, "speaker", "PSYCHOLOGIST");
    CHECK(cfg.speaker == Speaker::PSYCHOLOGIST);
    apply_config_entry(cfg, "fusion", "A,A+L");
    CHECK(cfg.fusions == std::vector<Fusion>{Fusion::A, Fusion::AL});
    apply_config_entry(cfg, "selected", "false");
    CHECK(!cfg.selected);
    apply_config_entry(cfg, "seed", "99");
    CHECK(cfg.seed == 99);
    apply_config_entry(cfg, "lexicon", "a.txt");
    apply_config_entry(cfg, "lexicon", "b.txt");
    CHECK(cfg.lexicons == std::vector<std::string>{"a.txt", "b.txt"});

    CHECK_THROWS_AS(apply_config_entry(cfg, "bogus", "1"), Error);
    CHECK(error_message([&] { apply_config_entry(cfg, "bogus", "1"); }).find("bogus:") !=
          std::string::npos);
    CHECK_THROWS_AS(apply_config_entry(cfg, "trees", "abc"), Error);
    CHECK_THROWS_AS(apply_config_entry(cfg, "speaker", "ROBOT"), Error);
    CHECK_THROWS_AS(apply_config_entry(cfg, "znorm", "maybe"), Error);
}

TEST_CASE("config files allow comments and require key = value") {
    TempDir dir("pipe_cfg");
    fs::path good = fs::path(dir.str()) / "good.cfg";
    spit(good, "# comment line\n\nruns = 4\ntrees=9\n  vote = true \n");
    PipelineConfig cfg;
    apply_config_file(cfg, good.string());
    CHECK(cfg.runs == 4);
    CHECK(cfg.forest.n_trees == 9);
    CHECK(cfg.participant_vote);

    fs::path bad = fs::path(dir.str()) / "bad.cfg";
    spit(bad, "runs 4\n");
    CHECK_THROWS_AS(apply_config_file(cfg, bad.string()), Error);
    CHECK_THROWS_AS(apply_config_file(cfg, (fs::path(dir.str()) / "nope.cfg").string()), Error);
}

TEST_CASE("config validation names the offending field") {
    PipelineFixture fx("validate");
    PipelineConfig cfg = fx.config("out");
    validate_config(cfg, true);  // well-formed

    PipelineConfig no_manifest = cfg;
    no_manifest.manifest = "/nonexistent/manifest.jsonl";
    CHECK(error_message([&] { validate_config(no_manifest, false); }).find("manifest:") !=
          std::string::npos);

    PipelineConfig no_lexicon = cfg;
    no_lexicon.lexicons.clear();
    CHECK(error_message([&] { validate_config(no_lexicon, true); }).find("lexicon:") !=
          std::string::npos);

    PipelineConfig no_pos = cfg;
    no_pos.pos_lexicon = "/nonexistent/pos.tsv";
    CHECK(error_message([&] { validate_config(no_pos, true); }).find("pos_lexicon:") !=
          std::string::npos);

    PipelineConfig bad_alpha = cfg;
    bad_alpha.selection.alpha = 1.5;
    CHECK_THROWS_AS(validate_config(bad_alpha, false), Error);

    PipelineConfig bad_fraction = cfg;
    bad_fraction.test_fraction = 0.0;
    CHECK_THROWS_AS(validate_config(bad_fraction, false), Error);

    PipelineConfig bad_jobs = cfg;
    bad_jobs.jobs = 0;
    CHECK_THROWS_AS(validate_config(bad_jobs, false), Error);
}

TEST_CASE("feature tables round trip through disk with missing cells") {
    TempDir dir("pipe_table");
    Table table;
    table.feature_names = {"acoustic:x", "acoustic:y"};
    table.rows.push_back({"T0", "P0", "CHILD", "Description", {1.5, missing_value()}});
    table.rows.push_back({"T1", "P1", "PSYCHOLOGIST", "Emotions", {missing_value(), -0.25}});

    fs::path path = fs::path(dir.str()) / "t.tsv";
    write_table(path.string(), table);

    std::string text = slurp(path);
    CHECK(text.find("1.5\t\n") != std::string::npos);  // missing renders empty

    Table reload = read_table(path.string());
    CHECK(reload.feature_names == table.feature_names);
    REQUIRE(reload.rows.size() == 2);
    CHECK(reload.rows[0].turn_id == "T0");
    CHECK(reload.rows[0].task == "Description");
    CHECK(reload.rows[0].values[0] == 1.5);
    CHECK(is_missing(reload.rows[0].values[1]));
    CHECK(is_missing(reload.rows[1].values[0]));
    CHECK(reload.rows[1].values[1] == -0.25);

    write_table((fs::path(dir.str()) / "t2.tsv").string(), reload);
    CHECK(slurp(fs::path(dir.str()) / "t2.tsv") == text);
}

TEST_CASE("extraction and matrix assembly on a synthetic corpus") {
    PipelineFixture fx("extract");
    Corpus corpus = load_manifest(fx.corpus.manifest_path, fx.corpus.participants_path);

    ExtractStats acoustic_stats;
    Table acoustic = extract_acoustic_table(corpus, 1, &acoustic_stats);
    CHECK(acoustic.feature_names.size() == 132);
    CHECK(acoustic.feature_names[0] == "acoustic:mfcc1_mean");
    CHECK(acoustic.rows.size() == corpus.turns().size());
    CHECK(acoustic_stats.skipped.empty());

    std::vector<CategoryLexicon> lexicons = {load_lexicon(fx.lexicon_path)};
    std::map<std::string, Pos> pos = load_pos_lexicon(fx.pos_path);
    ExtractStats lexical_stats;
    Table lexical = extract_lexical_table(corpus, lexicons, pos, 1, &lexical_stats);
    CHECK(lexical.feature_names.front() == "lexical:word_count");
    CHECK(lexical.rows.size() == corpus.turns().size());

    // Parallel extraction is identical to serial.
    Table acoustic2 = extract_acoustic_table(corpus, 3);
    REQUIRE(acoustic2.rows.size() == acoustic.rows.size());
    for (size_t i = 0; i < acoustic.rows.size(); ++i) {
        CHECK(acoustic2.rows[i].turn_id == acoustic.rows[i].turn_id);
        for (size_t j = 0; j < acoustic.rows[i].values.size(); ++j) {
            double a = acoustic.rows[i].values[j];
            double b = acoustic2.rows[i].values[j];
            CHECK((is_missing(a) ? is_missing(b) : a == b));
        }
    }

    FeatureMatrix child = assemble_matrix({&acoustic, &lexical}, corpus, Speaker::CHILD);
    CHECK(child.n_rows() == 12);  // 6 participants x 2 child turns
    CHECK(child.n_cols() == static_cast<int>(acoustic.feature_names.size() +
                                             lexical.feature_names.size()));
    std::map<std::string, int> labels;
    for (const Participant& p : corpus.participants())
        labels[p.id] = p.label == Label::POSITIVE ? 1 : 0;
    for (int r = 0; r < child.n_rows(); ++r) {
        CHECK(child.meta[static_cast<size_t>(r)].speaker == Speaker::CHILD);
        CHECK(child.labels[static_cast<size_t>(r)] ==
              labels[child.meta[static_cast<size_t>(r)].participant_id]);
    }

    FeatureMatrix adult = assemble_matrix({&acoustic, &lexical}, corpus, Speaker::PSYCHOLOGIST);
    CHECK(adult.n_rows() == 12);  // two prompts per participant
}

TEST_CASE("full pipeline writes its artifact set deterministically") {
    PipelineFixture fx("run");

    PipelineConfig first = fx.config("out1");
    run_pipeline(first);

    const char* expected[] = {"acoustic.tsv",   "lexical.tsv",       "correlations.tsv",
                              "correlations_table.txt", "eval.tsv",  "eval_table.txt",
                              "run_log.txt"};
    for (const char* name : expected) CHECK(fs::exists(fs::path(first.out_dir) / name));
    CHECK(fs::exists(fs::path(first.out_dir) / "models" / "A" / "run_00.forest"));
    CHECK(fs::exists(fs::path(first.out_dir) / "models" / "A+L" / "run_01.forest"));

    std::string log = slurp(fs::path(first.out_dir) / "run_log.txt");
    CHECK(log.find("seed = 7") != std::string::npos);

    // Rerun the identical config and compare against a snapshot of the first pass.
    fs::path snapshot = fs::path(fx.dir.str()) / "out1_snapshot";
    fs::copy(first.out_dir, snapshot, fs::copy_options::recursive);
    fs::remove_all(first.out_dir);
    run_pipeline(first);
    for (const char* name : expected)
        CHECK(slurp(fs::path(first.out_dir) / name) == slurp(snapshot / name));
    CHECK(slurp(fs::path(first.out_dir) / "models" / "A+L" / "run_00.forest") ==
          slurp(snapshot / "models" / "A+L" / "run_00.forest"));

    // The report step rebuilds the aligned tables byte for byte.
    std::string corr_table = slurp(fs::path(first.out_dir) / "correlations_table.txt");
    std::string eval_table = slurp(fs::path(first.out_dir) / "eval_table.txt");
    fs::remove(fs::path(first.out_dir) / "correlations_table.txt");
    fs::remove(fs::path(first.out_dir) / "eval_table.txt");
    std::vector<std::string> written = rewrite_report_tables(first.out_dir);
    CHECK(written.size() == 2);
    CHECK(slurp(fs::path(first.out_dir) / "correlations_table.txt") == corr_table);
    CHECK(slurp(fs::path(first.out_dir) / "eval_table.txt") == eval_table);
}

TEST_CASE("pipeline errors carry stage context") {
    PipelineFixture fx("err");
    PipelineConfig cfg = fx.config("out");
    cfg.manifest = "/nonexistent/manifest.jsonl";
    std::string message = error_message([&] { run_pipeline(cfg); });
    CHECK(message.find("manifest:") != std::string::npos);

    PipelineConfig unsplittable = fx.config("out_bad");
    unsplittable.runs = 5;
    unsplittable.test_fraction = 0.99;
    CHECK_THROWS_AS(run_pipeline(unsplittable), Error);
}
