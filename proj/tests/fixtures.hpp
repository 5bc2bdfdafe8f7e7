#pragma once

// Small on-disk fixtures for the corpus and pipeline tests.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "convo/wav.hpp"

namespace fixtures {

struct TempDir {
    std::filesystem::path path;

    explicit TempDir(const std::string& name) {
        path = std::filesystem::temp_directory_path() / name;
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }

    std::string str() const { return path.string(); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::vector<double> tone(double hz, double seconds, int rate = 16000, double amp = 0.3) {
    std::vector<double> x(static_cast<size_t>(seconds * rate));
    for (size_t i = 0; i < x.size(); ++i)
        x[i] = amp * std::sin(2.0 * 3.14159265358979323846 * hz * static_cast<double>(i) / rate);
    return x;
}

inline void write_tone(const std::string& path, double hz, double seconds, int rate = 16000) {
    convo::write_wav(path, tone(hz, seconds, rate), rate);
}

inline void append_line(const std::string& path, const std::string& line) {
    std::ofstream out(path, std::ios::app);
    out << line << "\n";
}

inline std::string turn_record(const std::string& turn_id, const std::string& participant_id,
                               const std::string& speaker, const std::string& task,
                               const std::string& audio, const std::string& transcript,
                               double duration_s, bool nonverbal = false) {
    char dur[40];
    std::snprintf(dur, sizeof(dur), "%.17g", duration_s);
    std::string json = "{\"turn_id\":\"" + turn_id + "\",\"participant_id\":\"" + participant_id +
                       "\",\"speaker\":\"" + speaker + "\",\"task\":\"" + task +
                       "\",\"audio_path\":\"" + audio + "\",\"transcript\":\"" + transcript +
                       "\",\"duration_s\":" + dur;
    if (nonverbal) json += ",\"nonverbal\":true";
    json += "}";
    return json;
}

// Two participants (one per label) with one CHILD and one PSYCHOLOGIST turn
// each; returns the manifest path. participants.jsonl sits next to it.
inline std::string small_corpus(const TempDir& dir) {
    std::filesystem::create_directories(dir.path / "audio");
    write_tone(dir.file("audio/p1_c.wav"), 220.0, 0.5);
    write_tone(dir.file("audio/p1_q.wav"), 150.0, 0.5);
    write_tone(dir.file("audio/p2_c.wav"), 260.0, 0.5);
    write_tone(dir.file("audio/p2_q.wav"), 150.0, 0.5);

    std::string participants = dir.file("participants.jsonl");
    append_line(participants, "{\"participant_id\":\"P1\",\"label\":\"NEGATIVE\"}");
    append_line(participants, "{\"participant_id\":\"P2\",\"label\":\"POSITIVE\"}");

    std::string manifest = dir.file("manifest.jsonl");
    append_line(manifest, turn_record("P1_T0", "P1", "CHILD", "Description", "audio/p1_c.wav",
                                      "I like the big tower.", 0.5));
    append_line(manifest, turn_record("P1_Q0", "P1", "PSYCHOLOGIST", "Description",
                                      "audio/p1_q.wav", "Tell me more.", 0.5));
    append_line(manifest, turn_record("P2_T0", "P2", "CHILD", "Conversation", "audio/p2_c.wav",
                                      "We watch the quiet rabbit.", 0.5));
    append_line(manifest, turn_record("P2_Q0", "P2", "PSYCHOLOGIST", "Conversation",
                                      "audio/p2_q.wav", "What happened next?", 0.5));
    return manifest;
}

}  // namespace fixtures
