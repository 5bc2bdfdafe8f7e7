#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "convo/corpus.hpp"
#include "convo/types.hpp"

namespace convo {

enum class EffectTarget : int {
    None = 0,
    PitchShiftHz,
    JitterScale,
    MarkerRateDelta,
    TurnLengthDelta,
};

struct EffectSpec {
    EffectTarget target = EffectTarget::None;
    double magnitude = 0.0;
    int direction = 1;  // sign applied to POSITIVE-label participants
};

const char* to_string(EffectTarget target);
// "pitch_shift_hz:40", "jitter_scale:5", "none"; optional ":-1" direction suffix.
EffectSpec parse_effect(const std::string& text);

struct SynthConfig {
    int n_participants = 20;
    int turns_per_participant = 20;
    std::vector<TaskLabel> tasks;  // empty = default six-task subset
    std::vector<EffectSpec> effects;
    uint64_t seed = 0;
    std::string out_dir;
};

struct SynthOutput {
    std::string manifest_path;
    std::string participants_path;
    std::string ground_truth_path;
};

// Writes WAV files, manifest.jsonl, participants.jsonl, and ground_truth.tsv
// (one line per planted effect naming the feature columns it must surface in).
SynthOutput generate_synthetic_corpus(const SynthConfig& cfg);

// Parsed ground-truth line: effect name -> expected feature columns.
struct GroundTruthEntry {
    std::string effect;
    double magnitude = 0.0;
    std::vector<std::string> feature_columns;
};

std::vector<GroundTruthEntry> read_ground_truth(const std::string& path);

const std::vector<TaskLabel>& default_synth_tasks();

}  // namespace convo
