#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace convo {

inline constexpr const char* kVersion = "convo 1.0.0";
inline constexpr int kSampleRate = 16000;

enum class ErrorKind {
    MissingAudio,
    BadAudio,
    DuplicateTurnId,
    UnknownTask,
    UnknownParticipant,
    MalformedRecord,
    DurationMismatch,
    TooShort,
    NonAlphabetic,
    EmptyTurn,
    EmptyTranscript,
    EmptySeries,
    ZeroVariance,
    SingleClass,
    TooFew,
    InvalidP,
    InsufficientRows,
    DegenerateCovariance,
    Unsplittable,
    EmptyMatrix,
    MissingValues,
    SchemaMismatch,
    SingleClassEval,
    InvalidSpec,
    ConfigError,
    IoError,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
          kind_(kind),
          message_(message) {}

    ErrorKind kind() const { return kind_; }
    // The message without the kind prefix, for re-wrapping and user display.
    const std::string& message() const { return message_; }

  private:
    ErrorKind kind_;
    std::string message_;
};

inline const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::MissingAudio: return "MissingAudio";
        case ErrorKind::BadAudio: return "BadAudio";
        case ErrorKind::DuplicateTurnId: return "DuplicateTurnId";
        case ErrorKind::UnknownTask: return "UnknownTask";
        case ErrorKind::UnknownParticipant: return "UnknownParticipant";
        case ErrorKind::MalformedRecord: return "MalformedRecord";
        case ErrorKind::DurationMismatch: return "DurationMismatch";
        case ErrorKind::TooShort: return "TooShort";
        case ErrorKind::NonAlphabetic: return "NonAlphabetic";
        case ErrorKind::EmptyTurn: return "EmptyTurn";
        case ErrorKind::EmptyTranscript: return "EmptyTranscript";
        case ErrorKind::EmptySeries: return "EmptySeries";
        case ErrorKind::ZeroVariance: return "ZeroVariance";
        case ErrorKind::SingleClass: return "SingleClass";
        case ErrorKind::TooFew: return "TooFew";
        case ErrorKind::InvalidP: return "InvalidP";
        case ErrorKind::InsufficientRows: return "InsufficientRows";
        case ErrorKind::DegenerateCovariance: return "DegenerateCovariance";
        case ErrorKind::Unsplittable: return "Unsplittable";
        case ErrorKind::EmptyMatrix: return "EmptyMatrix";
        case ErrorKind::MissingValues: return "MissingValues";
        case ErrorKind::SchemaMismatch: return "SchemaMismatch";
        case ErrorKind::SingleClassEval: return "SingleClassEval";
        case ErrorKind::InvalidSpec: return "InvalidSpec";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::IoError: return "IoError";
    }
    return "UnknownError";
}

enum class Label : int { NEGATIVE = 0, POSITIVE = 1 };
enum class Speaker : int { CHILD = 0, PSYCHOLOGIST = 1 };

inline const char* to_string(Label label) {
    return label == Label::POSITIVE ? "POSITIVE" : "NEGATIVE";
}

inline const char* to_string(Speaker speaker) {
    return speaker == Speaker::CHILD ? "CHILD" : "PSYCHOLOGIST";
}

Label label_from_string(const std::string& text);
Speaker speaker_from_string(const std::string& text);

inline constexpr int kTaskCount = 14;

enum class TaskLabel : int {
    Description = 0,
    Conversation,
    Emotions,
    SocialDifficulties,
    Friends,
    Loneliness,
    Construction,
    MakeBelievePlay,
    InteractivePlay,
    Demonstration,
    Telling,
    Cartoons,
    ImaginativeStory,
    Break,
};

const char* to_string(TaskLabel task);
TaskLabel task_from_string(const std::string& text);
bool try_task_from_string(const std::string& text, TaskLabel& out);

inline double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }
inline bool is_missing(double v) { return std::isnan(v); }

}  // namespace convo
