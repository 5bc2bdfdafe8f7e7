#include "convo/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "convo/rng.hpp"
#include "convo/wav.hpp"

namespace convo {

using nlohmann::json;

const char* to_string(EffectTarget target) {
    switch (target) {
        case EffectTarget::None: return "none";
        case EffectTarget::PitchShiftHz: return "pitch_shift_hz";
        case EffectTarget::JitterScale: return "jitter_scale";
        case EffectTarget::MarkerRateDelta: return "marker_rate_delta";
        case EffectTarget::TurnLengthDelta: return "turn_length_delta";
    }
    return "none";
}

EffectSpec parse_effect(const std::string& text) {
    EffectSpec spec;
    std::vector<std::string> parts;
    std::string piece;
    std::istringstream in(text);
    while (std::getline(in, piece, ':')) parts.push_back(piece);
    if (parts.empty()) throw Error(ErrorKind::InvalidSpec, "empty effect spec");

    const std::string& name = parts[0];
    if (name == "none") spec.target = EffectTarget::None;
    else if (name == "pitch_shift_hz") spec.target = EffectTarget::PitchShiftHz;
    else if (name == "jitter_scale") spec.target = EffectTarget::JitterScale;
    else if (name == "marker_rate_delta") spec.target = EffectTarget::MarkerRateDelta;
    else if (name == "turn_length_delta") spec.target = EffectTarget::TurnLengthDelta;
    else throw Error(ErrorKind::InvalidSpec, "unknown effect target \"" + name + "\"");

    if (spec.target == EffectTarget::None) {
        if (parts.size() > 1) throw Error(ErrorKind::InvalidSpec, "\"none\" takes no magnitude");
        return spec;
    }
    if (parts.size() < 2)
        throw Error(ErrorKind::InvalidSpec, name + " needs a magnitude, e.g. " + name + ":40");
    try {
        spec.magnitude = std::stod(parts[1]);
    } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidSpec, "bad magnitude \"" + parts[1] + "\"");
    }
    if (spec.magnitude < 0)
        throw Error(ErrorKind::InvalidSpec, "magnitude must be >= 0");
    if (parts.size() >= 3) {
        if (parts[2] == "1" || parts[2] == "+1") spec.direction = 1;
        else if (parts[2] == "-1") spec.direction = -1;
        else throw Error(ErrorKind::InvalidSpec, "direction must be 1 or -1");
    }
    if (parts.size() > 3) throw Error(ErrorKind::InvalidSpec, "too many fields in \"" + text + "\"");
    return spec;
}

const std::vector<TaskLabel>& default_synth_tasks() {
    static const std::vector<TaskLabel> tasks = {TaskLabel::Description, TaskLabel::Conversation,
                                                 TaskLabel::Emotions,    TaskLabel::Friends,
                                                 TaskLabel::Construction, TaskLabel::Telling};
    return tasks;
}

namespace {

constexpr double kBaseJitterRate = 0.004;
constexpr double kBaseMarkerRate = 0.06;
constexpr int kBaseWordsLo = 6;
constexpr int kBaseWordsSpan = 8;

struct ParticipantProfile {
    std::string id;
    Label label;
    double base_f0;
    double jitter_rate;
    double marker_rate;
    int extra_words;
};

// Harmonic complex (four harmonics, 1/h amplitudes) synthesized period by
// period with fractional boundaries; per-period multiplicative perturbations
// realize the jitter rate.
std::vector<double> voiced_complex(Rng& rng, double f0, double amp, int n_samples,
                                   double jitter_rate) {
    std::vector<double> out(static_cast<size_t>(n_samples), 0.0);
    double t_nominal = static_cast<double>(kSampleRate) / f0;
    double boundary = 0.0;
    while (boundary < n_samples) {
        double period = t_nominal * (1.0 + rng.normal(0.0, jitter_rate));
        period = std::max(period, 4.0);
        double period_amp = amp * (1.0 + rng.normal(0.0, 0.01));
        int64_t begin = static_cast<int64_t>(std::ceil(boundary));
        int64_t end = std::min<int64_t>(n_samples, static_cast<int64_t>(std::ceil(boundary + period)));
        for (int64_t n = begin; n < end; ++n) {
            double phase = (static_cast<double>(n) - boundary) / period;
            double v = 0.0;
            for (int h = 1; h <= 4; ++h)
                v += std::sin(6.283185307179586 * h * phase) / h;
            out[static_cast<size_t>(n)] = period_amp * v;
        }
        boundary += period;
    }
    for (double& v : out) v += rng.normal(0.0, 0.003);
    return out;
}

std::vector<double> make_turn_audio(Rng& rng, const ParticipantProfile& profile, int turn_index) {
    double f0 = profile.base_f0 + rng.uniform(-10.0, 10.0);
    double amp = 0.25 + rng.uniform(0.0, 0.1);
    int voiced_samples = static_cast<int>(std::lround(rng.uniform(0.9, 1.3) * kSampleRate));
    int silence = kSampleRate * 60 / 1000;

    std::vector<double> audio(static_cast<size_t>(silence), 0.0);
    if (turn_index % 7 == 6) {
        int half = voiced_samples / 2;
        std::vector<double> a = voiced_complex(rng, f0, amp, half, profile.jitter_rate);
        std::vector<double> b = voiced_complex(rng, f0, amp, voiced_samples - half, profile.jitter_rate);
        audio.insert(audio.end(), a.begin(), a.end());
        audio.insert(audio.end(), static_cast<size_t>(kSampleRate / 10), 0.0);
        audio.insert(audio.end(), b.begin(), b.end());
    } else {
        std::vector<double> v = voiced_complex(rng, f0, amp, voiced_samples, profile.jitter_rate);
        audio.insert(audio.end(), v.begin(), v.end());
    }
    audio.insert(audio.end(), static_cast<size_t>(silence), 0.0);
    return audio;
}

const std::vector<std::string>& nouns() {
    static const std::vector<std::string> v = {"block",  "tower",  "truck",  "puzzle", "picture",
                                               "garden", "window", "rabbit", "dragon", "castle"};
    return v;
}
const std::vector<std::string>& verbs() {
    static const std::vector<std::string> v = {"builds", "moves",  "holds",   "finds",
                                               "opens",  "paints", "watches", "follows"};
    return v;
}
const std::vector<std::string>& adjectives() {
    static const std::vector<std::string> v = {"big", "small", "green", "blue", "quiet", "bright"};
    return v;
}
const std::vector<std::string>& adverbs() {
    static const std::vector<std::string> v = {"quickly", "slowly", "carefully"};
    return v;
}
const std::vector<std::string>& pronouns() {
    static const std::vector<std::string> v = {"i", "you", "he", "she", "we", "they"};
    return v;
}
const std::vector<std::string>& markers() {
    static const std::vector<std::string> v = {"anyway", "actually", "basically"};
    return v;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& pool) {
    return pool[rng.uniform_index(pool.size())];
}

std::string make_transcript(Rng& rng, double marker_rate, int word_target) {
    std::vector<std::string> words;
    auto emit = [&](const std::string& w) {
        if (static_cast<int>(words.size()) >= word_target) return;
        if (rng.uniform() < marker_rate && static_cast<int>(words.size()) + 1 < word_target)
            words.push_back(pick(rng, markers()));
        if (static_cast<int>(words.size()) < word_target) words.push_back(w);
    };

    std::ostringstream text;
    bool first_sentence = true;
    while (static_cast<int>(words.size()) < word_target) {
        size_t sentence_begin = words.size();
        switch (rng.uniform_index(3)) {
            case 0:
                emit("the");
                emit(pick(rng, adjectives()));
                emit(pick(rng, nouns()));
                emit(pick(rng, verbs()));
                emit("the");
                emit(pick(rng, nouns()));
                break;
            case 1:
                emit(pick(rng, pronouns()));
                emit(pick(rng, verbs()));
                emit("the");
                emit(pick(rng, adjectives()));
                emit(pick(rng, nouns()));
                break;
            default:
                emit("the");
                emit(pick(rng, nouns()));
                emit(pick(rng, verbs()));
                emit(pick(rng, adverbs()));
                break;
        }
        if (words.size() == sentence_begin) break;  // target reached before any emission
        if (!first_sentence) text << " ";
        first_sentence = false;
        for (size_t i = sentence_begin; i < words.size(); ++i) {
            std::string w = words[i];
            if (i == sentence_begin) w[0] = static_cast<char>(std::toupper(w[0]));
            text << (i == sentence_begin ? "" : " ") << w;
        }
        text << ".";
    }
    return text.str();
}

std::string zero_pad(int value, int width) {
    std::string s = std::to_string(value);
    while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
    return s;
}

}  // namespace

SynthOutput generate_synthetic_corpus(const SynthConfig& cfg) {
    if (cfg.n_participants < 6)
        throw Error(ErrorKind::InvalidSpec, "need at least 6 participants");
    if (cfg.n_participants % 2 != 0)
        throw Error(ErrorKind::InvalidSpec, "participant count must be even for balanced labels");
    if (cfg.turns_per_participant < 1)
        throw Error(ErrorKind::InvalidSpec, "need at least 1 turn per participant");
    if (cfg.out_dir.empty()) throw Error(ErrorKind::InvalidSpec, "output directory required");

    const std::vector<TaskLabel>& tasks = cfg.tasks.empty() ? default_synth_tasks() : cfg.tasks;

    std::filesystem::create_directories(cfg.out_dir);
    std::filesystem::create_directories(std::filesystem::path(cfg.out_dir) / "audio");

    std::vector<ParticipantProfile> profiles;
    for (int p = 0; p < cfg.n_participants; ++p) {
        Rng rng(mix_seed(cfg.seed, 1, static_cast<uint64_t>(p)));
        ParticipantProfile profile;
        profile.id = "P" + zero_pad(p + 1, cfg.n_participants > 99 ? 3 : 2);
        profile.label = p % 2 == 1 ? Label::POSITIVE : Label::NEGATIVE;
        profile.base_f0 = rng.uniform(180.0, 280.0);
        profile.jitter_rate = kBaseJitterRate;
        profile.marker_rate = kBaseMarkerRate;
        profile.extra_words = 0;
        if (profile.label == Label::POSITIVE) {
            for (const EffectSpec& effect : cfg.effects) {
                switch (effect.target) {
                    case EffectTarget::None:
                        break;
                    case EffectTarget::PitchShiftHz:
                        profile.base_f0 += effect.direction * effect.magnitude;
                        break;
                    case EffectTarget::JitterScale:
                        profile.jitter_rate *= std::pow(std::max(effect.magnitude, 1e-9),
                                                        static_cast<double>(effect.direction));
                        break;
                    case EffectTarget::MarkerRateDelta:
                        profile.marker_rate = std::clamp(
                            profile.marker_rate + effect.direction * effect.magnitude, 0.0, 0.9);
                        break;
                    case EffectTarget::TurnLengthDelta:
                        profile.extra_words +=
                            effect.direction * static_cast<int>(std::lround(effect.magnitude));
                        break;
                }
            }
        }
        profiles.push_back(std::move(profile));
    }

    std::filesystem::path out_base(cfg.out_dir);
    std::ofstream manifest(out_base / "manifest.jsonl");
    std::ofstream participants(out_base / "participants.jsonl");
    if (!manifest || !participants)
        throw Error(ErrorKind::IoError, "cannot write corpus files in " + cfg.out_dir);

    for (const ParticipantProfile& profile : profiles) {
        json record = {{"participant_id", profile.id}, {"label", to_string(profile.label)}};
        participants << record.dump() << "\n";
    }

    for (size_t p = 0; p < profiles.size(); ++p) {
        const ParticipantProfile& profile = profiles[p];
        for (int t = 0; t < cfg.turns_per_participant; ++t) {
            Rng rng(mix_seed(cfg.seed, 2, p * 100000 + static_cast<uint64_t>(t)));
            TaskLabel task = tasks[static_cast<size_t>(t) % tasks.size()];
            bool nonverbal = t % 11 == 10;

            std::vector<double> audio = make_turn_audio(rng, profile, t);
            std::string file_name = profile.id + "_T" + zero_pad(t, 3) + ".wav";
            write_wav((out_base / "audio" / file_name).string(), audio);

            std::string transcript;
            if (!nonverbal) {
                int word_target =
                    std::max(2, kBaseWordsLo + rng.uniform_int(0, kBaseWordsSpan) + profile.extra_words);
                transcript = make_transcript(rng, profile.marker_rate, word_target);
            }

            json record = {{"turn_id", profile.id + "_T" + zero_pad(t, 3)},
                           {"participant_id", profile.id},
                           {"speaker", "CHILD"},
                           {"task", to_string(task)},
                           {"audio_path", "audio/" + file_name},
                           {"transcript", transcript},
                           {"duration_s", static_cast<double>(audio.size()) / kSampleRate}};
            if (nonverbal) record["nonverbal"] = true;
            manifest << record.dump() << "\n";
        }

        // Two neutral assessor turns per participant so both speaker cells exist.
        for (int q = 0; q < 2; ++q) {
            Rng rng(mix_seed(cfg.seed, 3, p * 100 + static_cast<uint64_t>(q)));
            double f0 = 150.0 + rng.uniform(0.0, 20.0);
            int n = static_cast<int>(std::lround(0.6 * kSampleRate));
            std::vector<double> audio = voiced_complex(rng, f0, 0.3, n, kBaseJitterRate);
            std::string file_name = profile.id + "_Q" + zero_pad(q, 2) + ".wav";
            write_wav((out_base / "audio" / file_name).string(), audio);
            json record = {{"turn_id", profile.id + "_Q" + zero_pad(q, 2)},
                           {"participant_id", profile.id},
                           {"speaker", "PSYCHOLOGIST"},
                           {"task", to_string(tasks[static_cast<size_t>(q) % tasks.size()])},
                           {"audio_path", "audio/" + file_name},
                           {"transcript", q == 0 ? "Can you tell me about the picture."
                                                 : "What would you build next."},
                           {"duration_s", static_cast<double>(audio.size()) / kSampleRate}};
            manifest << record.dump() << "\n";
        }
    }

    std::ofstream ground_truth(out_base / "ground_truth.tsv");
    for (const EffectSpec& effect : cfg.effects) {
        if (effect.target == EffectTarget::None) continue;
        std::string columns;
        switch (effect.target) {
            case EffectTarget::PitchShiftHz:
                columns = "acoustic:pitch_mean,acoustic:pitch_median";
                break;
            case EffectTarget::JitterScale:
                columns = "acoustic:jitter_mean,acoustic:jitter_median";
                break;
            case EffectTarget::MarkerRateDelta:
                columns = "lexical:discourse_marker_count";
                break;
            case EffectTarget::TurnLengthDelta:
                columns = "lexical:word_count";
                break;
            case EffectTarget::None:
                break;
        }
        ground_truth << to_string(effect.target) << "\t"
                     << effect.direction * effect.magnitude << "\t" << columns << "\n";
    }

    SynthOutput out;
    out.manifest_path = (out_base / "manifest.jsonl").string();
    out.participants_path = (out_base / "participants.jsonl").string();
    out.ground_truth_path = (out_base / "ground_truth.tsv").string();
    return out;
}

std::vector<GroundTruthEntry> read_ground_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open ground truth " + path);
    std::vector<GroundTruthEntry> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream parts(line);
        GroundTruthEntry entry;
        std::string columns;
        if (!std::getline(parts, entry.effect, '\t'))
            throw Error(ErrorKind::MalformedRecord, "bad ground truth line: " + line);
        std::string magnitude;
        if (!std::getline(parts, magnitude, '\t') || !std::getline(parts, columns))
            throw Error(ErrorKind::MalformedRecord, "bad ground truth line: " + line);
        entry.magnitude = std::stod(magnitude);
        std::istringstream cols(columns);
        std::string col;
        while (std::getline(cols, col, ',')) entry.feature_columns.push_back(col);
        out.push_back(std::move(entry));
    }
    return out;
}

}  // namespace convo
