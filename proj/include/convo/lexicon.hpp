#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "convo/corpus.hpp"
#include "convo/types.hpp"

namespace convo {

struct CategoryLexicon {
    std::string category_name;
    // Entries token-split; single words are length-1 phrases.
    std::vector<std::vector<std::string>> phrases;
};

// File format: first line "category: <name>", then one lowercase word or
// phrase per line. '#' lines are comments.
CategoryLexicon load_lexicon(const std::string& path);

enum class Pos : int { PRONOUN = 0, NOUN, VERB, ADJECTIVE, ADVERB, OTHER };
inline constexpr int kPosCount = 6;
const char* to_string(Pos pos);

// Tab-separated "word<TAB>TAG" lines.
std::map<std::string, Pos> load_pos_lexicon(const std::string& path);

// Whitespace split, leading/trailing punctuation stripped, lowercased.
// sentence_count = maximal runs terminated by . ! ? (minimum 1 if any token).
std::pair<std::vector<std::string>, int> tokenize_turn(const std::string& transcript);

// Maximal aeiouy groups, minus one for a terminal silent 'e' when the count
// exceeds one, floored at 1. Throws NonAlphabetic for tokens without letters.
int count_syllables(const std::string& word);

// Non-overlapping matches, longest phrase first, left to right; each token
// consumed at most once.
int count_category_matches(const std::vector<std::string>& tokens, const CategoryLexicon& lex);

std::map<Pos, double> pos_relative_frequencies(const std::vector<std::string>& tokens,
                                               const std::map<std::string, Pos>& pos_lexicon);

// Words whose per-turn relative frequency is reported individually.
const std::vector<std::string>& tracked_words();

// Column order for the lexical block given the configured category lexicons:
// word_count, words_per_sentence, syllable_count, turn_duration_s, the five POS
// frequencies, one "<category>_count" per lexicon (hedge, weasel, filler,
// discourse_marker first, remaining categories alphabetical), then
// word_<w>_freq for the tracked words.
std::vector<std::string> lexical_feature_names(const std::vector<CategoryLexicon>& lexicons);

// Values aligned with lexical_feature_names(). Throws EmptyTranscript for
// nonverbal or empty turns.
std::vector<double> extract_lexical_vector(const Turn& turn,
                                           const std::vector<CategoryLexicon>& lexicons,
                                           const std::map<std::string, Pos>& pos_lexicon);

}  // namespace convo
