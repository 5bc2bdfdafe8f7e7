#include "convo/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "convo/wav.hpp"

namespace convo {

using nlohmann::json;

Label label_from_string(const std::string& text) {
    if (text == "POSITIVE") return Label::POSITIVE;
    if (text == "NEGATIVE") return Label::NEGATIVE;
    throw Error(ErrorKind::MalformedRecord, "unknown label \"" + text + "\"");
}

Speaker speaker_from_string(const std::string& text) {
    if (text == "CHILD") return Speaker::CHILD;
    if (text == "PSYCHOLOGIST") return Speaker::PSYCHOLOGIST;
    throw Error(ErrorKind::MalformedRecord, "unknown speaker \"" + text + "\"");
}

namespace {
constexpr const char* kTaskNames[kTaskCount] = {
    "Description",     "Conversation", "Emotions",  "SocialDifficulties", "Friends",
    "Loneliness",      "Construction", "MakeBelievePlay", "InteractivePlay", "Demonstration",
    "Telling",         "Cartoons",     "ImaginativeStory", "Break",
};
}  // namespace

const char* to_string(TaskLabel task) { return kTaskNames[static_cast<int>(task)]; }

bool try_task_from_string(const std::string& text, TaskLabel& out) {
    for (int i = 0; i < kTaskCount; ++i) {
        if (text == kTaskNames[i]) {
            out = static_cast<TaskLabel>(i);
            return true;
        }
    }
    return false;
}

TaskLabel task_from_string(const std::string& text) {
    TaskLabel task;
    if (!try_task_from_string(text, task))
        throw Error(ErrorKind::UnknownTask, "\"" + text + "\"");
    return task;
}

const Participant& Corpus::participant(const std::string& id) const {
    auto it = participant_index_.find(id);
    if (it == participant_index_.end())
        throw Error(ErrorKind::UnknownParticipant, "\"" + id + "\"");
    return participants_[static_cast<size_t>(it->second)];
}

Label Corpus::label_of(const std::string& participant_id) const {
    return participant(participant_id).label;
}

const std::vector<int>& Corpus::turns_for(const std::string& participant_id, Speaker speaker,
                                          TaskLabel task) const {
    static const std::vector<int> empty;
    auto it = cell_index_.find({participant_id, static_cast<int>(speaker), static_cast<int>(task)});
    return it == cell_index_.end() ? empty : it->second;
}

std::vector<int> Corpus::turns_of_participant(const std::string& participant_id) const {
    std::vector<int> out;
    for (size_t i = 0; i < turns_.size(); ++i)
        if (turns_[i].participant_id == participant_id) out.push_back(static_cast<int>(i));
    return out;
}

int Corpus::count_label(Label label) const {
    int n = 0;
    for (const auto& p : participants_)
        if (p.label == label) ++n;
    return n;
}

std::string default_participants_path(const std::string& manifest_path) {
    std::filesystem::path p(manifest_path);
    return (p.parent_path() / "participants.jsonl").string();
}

namespace {

json parse_record(const std::string& line, const std::string& file, int line_no) {
    json record;
    try {
        record = json::parse(line);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedRecord,
                    file + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!record.is_object())
        throw Error(ErrorKind::MalformedRecord,
                    file + " line " + std::to_string(line_no) + ": record is not an object");
    return record;
}

std::string require_string(const json& record, const char* key, const std::string& file, int line_no) {
    if (!record.contains(key) || !record[key].is_string())
        throw Error(ErrorKind::MalformedRecord, file + " line " + std::to_string(line_no) +
                                                    ": missing string field \"" + key + "\"");
    return record[key].get<std::string>();
}

}  // namespace

Corpus load_manifest(const std::string& manifest_path, const std::string& participants_path) {
    Corpus corpus;
    std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();

    {
        std::ifstream in(participants_path);
        if (!in) throw Error(ErrorKind::IoError, "cannot open participants file " + participants_path);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            json record = parse_record(line, participants_path, line_no);
            Participant p;
            p.id = require_string(record, "participant_id", participants_path, line_no);
            p.label = label_from_string(require_string(record, "label", participants_path, line_no));
            if (corpus.participant_index_.count(p.id))
                throw Error(ErrorKind::MalformedRecord, participants_path + " line " +
                                                            std::to_string(line_no) +
                                                            ": duplicate participant \"" + p.id + "\"");
            corpus.participant_index_[p.id] = static_cast<int>(corpus.participants_.size());
            corpus.participants_.push_back(std::move(p));
        }
    }

    {
        std::ifstream in(manifest_path);
        if (!in) throw Error(ErrorKind::IoError, "cannot open manifest " + manifest_path);
        std::string line;
        int line_no = 0;
        std::set<std::string> seen_ids;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            json record = parse_record(line, manifest_path, line_no);
            std::string where = manifest_path + " line " + std::to_string(line_no);

            Turn turn;
            turn.turn_id = require_string(record, "turn_id", manifest_path, line_no);
            turn.participant_id = require_string(record, "participant_id", manifest_path, line_no);
            turn.speaker = speaker_from_string(require_string(record, "speaker", manifest_path, line_no));
            std::string task_name = require_string(record, "task", manifest_path, line_no);
            if (!try_task_from_string(task_name, turn.task))
                throw Error(ErrorKind::UnknownTask, where + ": \"" + task_name + "\"");
            std::string audio = require_string(record, "audio_path", manifest_path, line_no);
            std::filesystem::path audio_path(audio);
            if (audio_path.is_relative()) audio_path = base / audio_path;
            turn.audio_path = audio_path.string();
            if (!record.contains("transcript") || !record["transcript"].is_string())
                throw Error(ErrorKind::MalformedRecord, where + ": missing string field \"transcript\"");
            turn.transcript = record["transcript"].get<std::string>();
            if (!record.contains("duration_s") || !record["duration_s"].is_number())
                throw Error(ErrorKind::MalformedRecord, where + ": missing numeric field \"duration_s\"");
            turn.duration_s = record["duration_s"].get<double>();
            if (turn.duration_s < 0)
                throw Error(ErrorKind::MalformedRecord, where + ": negative duration");
            if (record.contains("nonverbal")) {
                if (!record["nonverbal"].is_boolean())
                    throw Error(ErrorKind::MalformedRecord, where + ": \"nonverbal\" must be boolean");
                turn.nonverbal = record["nonverbal"].get<bool>();
            }

            if (!seen_ids.insert(turn.turn_id).second)
                throw Error(ErrorKind::DuplicateTurnId, where + ": \"" + turn.turn_id + "\"");
            if (!corpus.participant_index_.count(turn.participant_id))
                throw Error(ErrorKind::UnknownParticipant, where + ": \"" + turn.participant_id + "\"");
            if (turn.transcript.empty() && !turn.nonverbal)
                throw Error(ErrorKind::MalformedRecord,
                            where + ": empty transcript on a turn not flagged nonverbal");

            if (!std::filesystem::exists(turn.audio_path))
                throw Error(ErrorKind::MissingAudio, where + ": " + turn.audio_path);
            WavInfo info = read_wav_info(turn.audio_path);
            if (std::abs(info.duration_s() - turn.duration_s) > 1e-3)
                throw Error(ErrorKind::DurationMismatch,
                            where + ": manifest says " + std::to_string(turn.duration_s) +
                                " s, audio header says " + std::to_string(info.duration_s()) + " s");

            corpus.turns_.push_back(std::move(turn));
        }
    }

    std::sort(corpus.turns_.begin(), corpus.turns_.end(),
              [](const Turn& a, const Turn& b) { return a.turn_id < b.turn_id; });
    for (size_t i = 0; i < corpus.turns_.size(); ++i) {
        const Turn& t = corpus.turns_[i];
        corpus.cell_index_[{t.participant_id, static_cast<int>(t.speaker), static_cast<int>(t.task)}]
            .push_back(static_cast<int>(i));
    }
    return corpus;
}

ValidationReport validate_corpus(const Corpus& corpus) {
    ValidationReport report;
    std::map<std::string, std::set<int>> speakers_seen;
    for (const Turn& t : corpus.turns()) {
        if (t.transcript.empty()) report.empty_transcript_turns.push_back(t.turn_id);
        if (t.duration_s == 0.0) report.zero_duration_turns.push_back(t.turn_id);
        speakers_seen[t.participant_id].insert(static_cast<int>(t.speaker));
    }
    for (const Participant& p : corpus.participants()) {
        for (Speaker s : {Speaker::CHILD, Speaker::PSYCHOLOGIST}) {
            if (!speakers_seen[p.id].count(static_cast<int>(s)))
                report.missing_speaker_turns.emplace_back(p.id, to_string(s));
        }
    }
    return report;
}

}  // namespace convo
