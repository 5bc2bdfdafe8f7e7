#include "convo/lexicon.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace convo {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lowercase(std::string s) {
    for (char& c : s)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return s;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

bool is_word_char(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

}  // namespace

const char* to_string(Pos pos) {
    switch (pos) {
        case Pos::PRONOUN: return "PRONOUN";
        case Pos::NOUN: return "NOUN";
        case Pos::VERB: return "VERB";
        case Pos::ADJECTIVE: return "ADJECTIVE";
        case Pos::ADVERB: return "ADVERB";
        case Pos::OTHER: return "OTHER";
    }
    return "OTHER";
}

CategoryLexicon load_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open lexicon " + path);
    CategoryLexicon lex;
    std::string line;
    bool have_header = false;
    std::set<std::string> seen;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#') continue;
        if (!have_header) {
            if (line.rfind("category:", 0) != 0)
                throw Error(ErrorKind::MalformedRecord,
                            path + " line " + std::to_string(line_no) +
                                ": expected \"category: <name>\" header");
            lex.category_name = trim(line.substr(9));
            if (lex.category_name.empty())
                throw Error(ErrorKind::MalformedRecord, path + ": empty category name");
            have_header = true;
            continue;
        }
        std::string entry = lowercase(line);
        if (!seen.insert(entry).second)
            throw Error(ErrorKind::MalformedRecord, path + " line " + std::to_string(line_no) +
                                                        ": duplicate entry \"" + entry + "\"");
        lex.phrases.push_back(split_ws(entry));
    }
    if (!have_header)
        throw Error(ErrorKind::MalformedRecord, path + ": missing category header");
    if (lex.phrases.empty())
        throw Error(ErrorKind::MalformedRecord, path + ": lexicon has no entries");
    // Longest phrases first so greedy matching prefers them.
    std::stable_sort(lex.phrases.begin(), lex.phrases.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    return lex;
}

std::map<std::string, Pos> load_pos_lexicon(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open POS lexicon " + path);
    std::map<std::string, Pos> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        size_t tab = t.find('\t');
        if (tab == std::string::npos)
            throw Error(ErrorKind::MalformedRecord,
                        path + " line " + std::to_string(line_no) + ": expected word<TAB>TAG");
        std::string word = lowercase(trim(t.substr(0, tab)));
        std::string tag = trim(t.substr(tab + 1));
        Pos pos;
        if (tag == "PRONOUN") pos = Pos::PRONOUN;
        else if (tag == "NOUN") pos = Pos::NOUN;
        else if (tag == "VERB") pos = Pos::VERB;
        else if (tag == "ADJECTIVE") pos = Pos::ADJECTIVE;
        else if (tag == "ADVERB") pos = Pos::ADVERB;
        else if (tag == "OTHER") pos = Pos::OTHER;
        else
            throw Error(ErrorKind::MalformedRecord,
                        path + " line " + std::to_string(line_no) + ": unknown tag \"" + tag + "\"");
        out[word] = pos;
    }
    return out;
}

std::pair<std::vector<std::string>, int> tokenize_turn(const std::string& transcript) {
    std::vector<std::string> tokens;
    for (const std::string& piece : split_ws(transcript)) {
        size_t b = 0, e = piece.size();
        while (b < e && !is_word_char(static_cast<unsigned char>(piece[b]))) ++b;
        while (e > b && !is_word_char(static_cast<unsigned char>(piece[e - 1]))) --e;
        if (e > b) tokens.push_back(lowercase(piece.substr(b, e - b)));
    }

    int sentences = 0;
    bool content = false;
    for (char c : transcript) {
        if (c == '.' || c == '!' || c == '?') {
            if (content) ++sentences;
            content = false;
        } else if (is_word_char(static_cast<unsigned char>(c))) {
            content = true;
        }
    }
    if (content) ++sentences;
    if (!tokens.empty() && sentences == 0) sentences = 1;
    if (tokens.empty()) sentences = 0;
    return {tokens, sentences};
}

int count_syllables(const std::string& word) {
    auto is_letter = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); };
    auto is_vowel = [](char c) {
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u' || c == 'y';
    };
    bool any_letter = false;
    int groups = 0;
    bool in_group = false;
    char last_letter = 0;
    for (char c : word) {
        if (!is_letter(c)) {
            in_group = false;
            continue;
        }
        any_letter = true;
        last_letter = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        if (is_vowel(c)) {
            if (!in_group) ++groups;
            in_group = true;
        } else {
            in_group = false;
        }
    }
    if (!any_letter)
        throw Error(ErrorKind::NonAlphabetic, "\"" + word + "\" has no letters");
    if (last_letter == 'e' && groups > 1) --groups;
    return std::max(groups, 1);
}

int count_category_matches(const std::vector<std::string>& tokens, const CategoryLexicon& lex) {
    if (tokens.empty()) return 0;
    std::vector<char> consumed(tokens.size(), 0);
    int count = 0;
    // Phrases are pre-sorted longest first; scan left to right per phrase length.
    size_t idx = 0;
    while (idx < lex.phrases.size()) {
        size_t len = lex.phrases[idx].size();
        std::set<std::vector<std::string>> same_len;
        while (idx < lex.phrases.size() && lex.phrases[idx].size() == len)
            same_len.insert(lex.phrases[idx++]);
        if (len == 0 || len > tokens.size()) continue;
        for (size_t i = 0; i + len <= tokens.size(); ++i) {
            bool free = true;
            for (size_t j = i; j < i + len; ++j)
                if (consumed[j]) { free = false; break; }
            if (!free) continue;
            std::vector<std::string> window(tokens.begin() + static_cast<long>(i),
                                            tokens.begin() + static_cast<long>(i + len));
            if (same_len.count(window)) {
                for (size_t j = i; j < i + len; ++j) consumed[j] = 1;
                ++count;
            }
        }
    }
    return count;
}

std::map<Pos, double> pos_relative_frequencies(const std::vector<std::string>& tokens,
                                               const std::map<std::string, Pos>& pos_lexicon) {
    if (tokens.empty()) throw Error(ErrorKind::EmptyTurn, "no tokens");
    std::map<Pos, double> out;
    for (int i = 0; i < kPosCount; ++i) out[static_cast<Pos>(i)] = 0.0;
    for (const std::string& tok : tokens) {
        auto it = pos_lexicon.find(tok);
        Pos pos = it == pos_lexicon.end() ? Pos::OTHER : it->second;
        out[pos] += 1.0;
    }
    for (auto& [pos, count] : out) count /= static_cast<double>(tokens.size());
    return out;
}

const std::vector<std::string>& tracked_words() {
    static const std::vector<std::string> words = {"i", "you", "he", "she", "we", "they"};
    return words;
}

namespace {

std::vector<std::string> ordered_categories(const std::vector<CategoryLexicon>& lexicons) {
    const std::vector<std::string> canonical = {"hedge", "weasel", "filler", "discourse_marker"};
    std::set<std::string> present;
    for (const auto& lex : lexicons) present.insert(lex.category_name);
    std::vector<std::string> out;
    for (const std::string& c : canonical)
        if (present.count(c)) out.push_back(c);
    for (const std::string& c : present)
        if (std::find(canonical.begin(), canonical.end(), c) == canonical.end()) out.push_back(c);
    return out;
}

}  // namespace

std::vector<std::string> lexical_feature_names(const std::vector<CategoryLexicon>& lexicons) {
    std::vector<std::string> out = {"word_count", "words_per_sentence", "syllable_count",
                                    "turn_duration_s", "pronoun_freq", "noun_freq", "verb_freq",
                                    "adjective_freq", "adverb_freq"};
    for (const std::string& category : ordered_categories(lexicons))
        out.push_back(category + "_count");
    for (const std::string& word : tracked_words()) out.push_back("word_" + word + "_freq");
    return out;
}

std::vector<double> extract_lexical_vector(const Turn& turn,
                                           const std::vector<CategoryLexicon>& lexicons,
                                           const std::map<std::string, Pos>& pos_lexicon) {
    if (turn.nonverbal || turn.transcript.empty())
        throw Error(ErrorKind::EmptyTranscript, "turn " + turn.turn_id);
    auto [tokens, sentence_count] = tokenize_turn(turn.transcript);
    if (tokens.empty())
        throw Error(ErrorKind::EmptyTranscript, "turn " + turn.turn_id + " has no tokens");

    double word_count = static_cast<double>(tokens.size());
    int syllables = 0;
    for (const std::string& tok : tokens) {
        bool has_letter = false;
        for (char c : tok)
            if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z')) { has_letter = true; break; }
        if (has_letter) syllables += count_syllables(tok);
    }
    std::map<Pos, double> pos = pos_relative_frequencies(tokens, pos_lexicon);

    std::vector<double> out = {word_count,
                               word_count / sentence_count,
                               static_cast<double>(syllables),
                               turn.duration_s,
                               pos[Pos::PRONOUN],
                               pos[Pos::NOUN],
                               pos[Pos::VERB],
                               pos[Pos::ADJECTIVE],
                               pos[Pos::ADVERB]};

    std::map<std::string, const CategoryLexicon*> by_name;
    for (const auto& lex : lexicons) by_name[lex.category_name] = &lex;
    for (const std::string& category : ordered_categories(lexicons))
        out.push_back(static_cast<double>(count_category_matches(tokens, *by_name.at(category))));

    for (const std::string& word : tracked_words()) {
        double count = 0.0;
        for (const std::string& tok : tokens)
            if (tok == word) count += 1.0;
        out.push_back(count / word_count);
    }
    return out;
}

}  // namespace convo
