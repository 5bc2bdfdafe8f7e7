#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "convo/corpus.hpp"
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

SynthConfig tiny_config(const std::string& out_dir, uint64_t seed = 11) {
    SynthConfig cfg;
    cfg.n_participants = 6;
    cfg.turns_per_participant = 3;
    cfg.seed = seed;
    cfg.out_dir = out_dir;
    return cfg;
}

}  // namespace

TEST_CASE("effect spec parsing") {
    EffectSpec none = parse_effect("none");
    CHECK(none.target == EffectTarget::None);

    EffectSpec pitch = parse_effect("pitch_shift_hz:40");
    CHECK(pitch.target == EffectTarget::PitchShiftHz);
    CHECK(pitch.magnitude == 40.0);
    CHECK(pitch.direction == 1);

    EffectSpec down = parse_effect("pitch_shift_hz:25:-1");
    CHECK(down.direction == -1);
    CHECK(down.magnitude == 25.0);

    CHECK(parse_effect("jitter_scale:5").target == EffectTarget::JitterScale);
    CHECK(parse_effect("marker_rate_delta:0.1").target == EffectTarget::MarkerRateDelta);
    CHECK(parse_effect("turn_length_delta:3").target == EffectTarget::TurnLengthDelta);

    CHECK_THROWS_AS((void)parse_effect("pitch_shift_hz"), Error);       // missing magnitude
    CHECK_THROWS_AS((void)parse_effect("pitch_shift_hz:abc"), Error);   // bad number
    CHECK_THROWS_AS((void)parse_effect("pitch_shift_hz:-4"), Error);    // negative magnitude
    CHECK_THROWS_AS((void)parse_effect("pitch_shift_hz:4:2"), Error);   // bad direction
    CHECK_THROWS_AS((void)parse_effect("wobble:1"), Error);             // unknown target
    CHECK_THROWS_AS((void)parse_effect(""), Error);
}

TEST_CASE("default task subset") {
    const std::vector<TaskLabel>& tasks = default_synth_tasks();
    CHECK(tasks.size() == 6);
    CHECK(tasks[0] == TaskLabel::Description);
}

TEST_CASE("synthetic corpus is valid and balanced") {
    TempDir dir("synth_basic");
    SynthOutput out = generate_synthetic_corpus(tiny_config(dir.str()));

    Corpus corpus = load_manifest(out.manifest_path, out.participants_path);
    CHECK(corpus.participants().size() == 6);
    int positives = 0;
    for (const Participant& p : corpus.participants())
        if (p.label == Label::POSITIVE) ++positives;
    CHECK(positives == 3);

    // 3 child turns + 2 standard prompt turns per participant.
    int child = 0, adult = 0;
    for (const Turn& turn : corpus.turns()) {
        if (turn.speaker == Speaker::CHILD) ++child;
        else ++adult;
        CHECK(fs::exists(turn.audio_path));
    }
    CHECK(child == 18);
    CHECK(adult == 12);

    ValidationReport validation = validate_corpus(corpus);
    CHECK(validation.clean());
}

TEST_CASE("synthetic corpus is byte-deterministic in its seed") {
    TempDir a("synth_det_a"), b("synth_det_b"), c("synth_det_c");
    SynthOutput out_a = generate_synthetic_corpus(tiny_config(a.str(), 11));
    SynthOutput out_b = generate_synthetic_corpus(tiny_config(b.str(), 11));
    SynthOutput out_c = generate_synthetic_corpus(tiny_config(c.str(), 12));

    CHECK(slurp(out_a.manifest_path) == slurp(out_b.manifest_path));
    CHECK(slurp(out_a.participants_path) == slurp(out_b.participants_path));
    CHECK(slurp(out_a.manifest_path) != slurp(out_c.manifest_path));

    Corpus corpus = load_manifest(out_a.manifest_path, out_a.participants_path);
    bool audio_diff = false;
    for (const Turn& turn : corpus.turns()) {
        fs::path rel = fs::relative(turn.audio_path, a.str());
        std::string wav_a = slurp(turn.audio_path);
        CHECK(wav_a == slurp(fs::path(b.str()) / rel));
        if (wav_a != slurp(fs::path(c.str()) / rel)) audio_diff = true;
    }
    CHECK(audio_diff);
}

TEST_CASE("synthetic corpus rejects bad configurations") {
    TempDir dir("synth_bad");
    SynthConfig odd = tiny_config(dir.str());
    odd.n_participants = 5;
    CHECK_THROWS_AS((void)generate_synthetic_corpus(odd), Error);

    SynthConfig small = tiny_config(dir.str());
    small.n_participants = 4;
    CHECK_THROWS_AS((void)generate_synthetic_corpus(small), Error);

    SynthConfig no_turns = tiny_config(dir.str());
    no_turns.turns_per_participant = 0;
    CHECK_THROWS_AS((void)generate_synthetic_corpus(no_turns), Error);

    SynthConfig no_dir = tiny_config("");
    CHECK_THROWS_AS((void)generate_synthetic_corpus(no_dir), Error);
}

TEST_CASE("ground truth records planted effects with their target columns") {
    TempDir dir("synth_gt");
    SynthConfig cfg = tiny_config(dir.str());
    cfg.effects = {parse_effect("pitch_shift_hz:40"), parse_effect("marker_rate_delta:0.1:-1")};
    SynthOutput out = generate_synthetic_corpus(cfg);

    std::vector<GroundTruthEntry> entries = read_ground_truth(out.ground_truth_path);
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].effect == "pitch_shift_hz");
    CHECK(entries[0].magnitude == 40.0);
    std::set<std::string> pitch_cols(entries[0].feature_columns.begin(),
                                     entries[0].feature_columns.end());
    CHECK(pitch_cols.count("acoustic:pitch_mean") == 1);
    CHECK(pitch_cols.count("acoustic:pitch_median") == 1);

    CHECK(entries[1].effect == "marker_rate_delta");
    CHECK(entries[1].magnitude == -0.1);
    CHECK(entries[1].feature_columns ==
          std::vector<std::string>{"lexical:discourse_marker_count"});

    // No effects -> empty ground truth file.
    TempDir null_dir("synth_gt_null");
    SynthOutput null_out = generate_synthetic_corpus(tiny_config(null_dir.str()));
    CHECK(read_ground_truth(null_out.ground_truth_path).empty());
}

TEST_CASE("synthetic transcripts look like sentences") {
    TempDir dir("synth_text");
    SynthConfig cfg = tiny_config(dir.str());
    cfg.effects = {parse_effect("turn_length_delta:4")};
    SynthOutput out = generate_synthetic_corpus(cfg);
    Corpus corpus = load_manifest(out.manifest_path, out.participants_path);

    int with_text = 0;
    for (const Turn& turn : corpus.turns()) {
        if (turn.nonverbal) {
            CHECK(turn.transcript.empty());
            continue;
        }
        ++with_text;
        REQUIRE(!turn.transcript.empty());
        CHECK(std::isupper(static_cast<unsigned char>(turn.transcript.front())));
        CHECK(turn.transcript.back() == '.');
    }
    CHECK(with_text > 0);
}
