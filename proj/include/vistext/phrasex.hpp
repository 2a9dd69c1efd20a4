#pragma once

// Lexicon-driven chunker that pulls object and relation phrases out of game
// text and turns them into image queries.
//
//   NP  := DET? ADJ* NOUN+
//   REL := NP OTHER* PREP NP      (PREP one of on, in, at, of, under)

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace vistext::phrasex {

enum class PhraseKind { object, relation };

struct Phrase {
  std::string surface;
  PhraseKind kind = PhraseKind::object;
  std::string head;
  std::optional<std::string> relation;
  std::optional<std::string> tail;
  std::string query;
  bool operator==(const Phrase&) const = default;
};

enum class UnknownPolicy { noun, skip };

struct Lexicon {
  std::set<std::string> nouns;
  std::set<std::string> adjectives;
  std::set<std::string> determiners;
  std::set<std::string> prepositions;
  // Verbs and function words that break noun chunks.
  std::set<std::string> others;
  UnknownPolicy unknown = UnknownPolicy::noun;

  static const std::set<std::string>& relation_prepositions();

  // Covers the MiniHouse templates and the usual small closed classes.
  static Lexicon default_lexicon();
  static Lexicon from_json(std::string_view text);
  std::string to_json() const;

  // Throws std::invalid_argument when the word lists overlap or a relation
  // preposition is missing.
  void validate() const;
};

std::vector<Phrase> extract_phrases(std::string_view text, const Lexicon& lexicon);
std::string normalize_query(std::string_view surface, const Lexicon& lexicon);

inline constexpr int kDefaultQueriesPerStep = 4;
// Relations first, then objects, each in text order.
std::vector<std::string> select_queries(const std::vector<Phrase>& phrases, int k);

// Lowercased word tokens with punctuation dropped; shared with the text encoder.
std::vector<std::string> word_tokens(std::string_view text);

}  // namespace vistext::phrasex
