#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "convo/types.hpp"

namespace convo {

struct Participant {
    std::string id;
    Label label = Label::NEGATIVE;
};

struct Turn {
    std::string turn_id;
    std::string participant_id;
    Speaker speaker = Speaker::CHILD;
    TaskLabel task = TaskLabel::Description;
    std::string audio_path;  // resolved relative to the manifest directory
    std::string transcript;
    double duration_s = 0.0;
    bool nonverbal = false;
};

class Corpus {
  public:
    const std::vector<Participant>& participants() const { return participants_; }
    const std::vector<Turn>& turns() const { return turns_; }

    const Participant& participant(const std::string& id) const;
    Label label_of(const std::string& participant_id) const;

    // Indices into turns() for one (participant, speaker, task) cell.
    const std::vector<int>& turns_for(const std::string& participant_id, Speaker speaker,
                                      TaskLabel task) const;
    std::vector<int> turns_of_participant(const std::string& participant_id) const;

    int count_label(Label label) const;

    friend Corpus load_manifest(const std::string& manifest_path, const std::string& participants_path);

  private:
    std::vector<Participant> participants_;
    std::vector<Turn> turns_;
    std::map<std::string, int> participant_index_;
    std::map<std::tuple<std::string, int, int>, std::vector<int>> cell_index_;
};

// Loads a JSON-lines manifest plus its companion participants file (one JSON
// object per line mapping participant_id to label). Audio headers are checked
// and manifest durations verified against them to 1 ms.
Corpus load_manifest(const std::string& manifest_path, const std::string& participants_path);

// Convention used by the CLI when no participants file is given: a file named
// "participants.jsonl" next to the manifest.
std::string default_participants_path(const std::string& manifest_path);

struct ValidationReport {
    std::vector<std::string> empty_transcript_turns;
    std::vector<std::string> zero_duration_turns;
    // participant id -> speaker name for every (participant, speaker) cell with no turns
    std::vector<std::pair<std::string, std::string>> missing_speaker_turns;

    bool clean() const {
        return empty_transcript_turns.empty() && zero_duration_turns.empty() &&
               missing_speaker_turns.empty();
    }
};

ValidationReport validate_corpus(const Corpus& corpus);

}  // namespace convo
