#include "vistext/phrasex.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <unordered_set>

#include "json.hpp"
#include "vistext/common.hpp"
#include "vistext/envcore.hpp"

namespace vistext::phrasex {

namespace {

bool word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-';
}

enum class Tag { det, adj, noun, prep, other, boundary };

struct Token {
  std::string text;   // as written
  std::string lower;
  Tag tag = Tag::other;
};

std::vector<Token> tag_tokens(std::string_view text, const Lexicon& lex) {
  std::vector<Token> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    Token t{cur, to_lower(cur)};
    if (lex.determiners.count(t.lower)) t.tag = Tag::det;
    else if (lex.prepositions.count(t.lower)) t.tag = Tag::prep;
    else if (lex.adjectives.count(t.lower)) t.tag = Tag::adj;
    else if (lex.nouns.count(t.lower)) t.tag = Tag::noun;
    else if (lex.others.count(t.lower)) t.tag = Tag::other;
    else t.tag = lex.unknown == UnknownPolicy::noun ? Tag::noun : Tag::other;
    out.push_back(std::move(t));
    cur.clear();
  };
  for (char c : text) {
    if (word_char(c)) {
      cur.push_back(c);
      continue;
    }
    flush();
    if (!std::isspace(static_cast<unsigned char>(c)) && (out.empty() || out.back().tag != Tag::boundary))
      out.push_back({std::string(1, c), std::string(1, c), Tag::boundary});
  }
  flush();
  return out;
}

// End index (exclusive) of the longest NP starting at i, or i when none.
std::size_t match_np(const std::vector<Token>& t, std::size_t i) {
  std::size_t j = i;
  if (j < t.size() && t[j].tag == Tag::det) ++j;
  while (j < t.size() && t[j].tag == Tag::adj) ++j;
  if (j >= t.size() || t[j].tag != Tag::noun) return i;
  while (j < t.size() && t[j].tag == Tag::noun) ++j;
  return j;
}

std::string span_text(const std::vector<Token>& t, std::size_t b, std::size_t e, bool drop_det) {
  if (drop_det && b < e && t[b].tag == Tag::det) ++b;
  std::vector<std::string> words;
  for (auto i = b; i < e; ++i) words.push_back(t[i].text);
  return join(words, " ");
}

}  // namespace

const std::set<std::string>& Lexicon::relation_prepositions() {
  static const std::set<std::string> preps = {"on", "in", "at", "of", "under"};
  return preps;
}

Lexicon Lexicon::default_lexicon() {
  Lexicon lex;
  lex.determiners = {"the", "a", "an", "your", "my", "his", "her", "its", "their", "this",
                     "these", "those", "some", "any", "every", "each", "no", "that"};
  lex.prepositions = {"on",   "in",    "at",    "of",     "under",  "from",   "to",
                      "into", "onto",  "with",  "by",     "near",   "behind", "above",
                      "below", "inside", "beside", "about", "through", "over"};
  lex.adjectives = {"red",   "green", "blue",   "yellow", "white",  "black",  "brown",
                    "gray",  "grey",  "orange", "purple", "pink",   "small",  "large",
                    "big",   "little", "tiny",  "old",    "new",    "wet",    "dry",
                    "dirty", "clean", "broken", "precious", "wooden", "metal", "empty",
                    "open",  "closed", "dark",  "bright", "shiny",  "soft"};
  lex.others = {"you",  "are",   "is",     "was",   "were",    "be",      "been",  "there",
                "it",   "can't", "cannot", "can",   "do",      "here",    "pick",  "up",
                "put",  "take",  "go",     "look",  "examine", "carrying", "contains",
                "and",  "or",    "but",    "has",   "have",    "gone",    "one",   "point",
                "score", "sitting", "lying", "see",  "nothing", "special", "exits", "not",
                "i",    "we",    "they",   "he",    "she",     "what",    "where", "also",
                "very", "then",  "down",   "out",   "won't",   "don't",   "it's",  "there's"};
  const auto pool = envcore::EntityPool::minihouse();
  for (const auto& o : pool.objects) lex.nouns.insert(o.name);
  for (const auto& c : pool.containers) lex.nouns.insert(c.name);
  for (const auto& r : pool.rooms) lex.nouns.insert(r);
  for (const char* n : {"floor", "door", "house", "room", "bottle", "chair", "patio", "backyard",
                        "dress", "jewel", "canary", "clockwork", "window", "mailbox", "kitchen"})
    lex.nouns.insert(n);
  return lex;
}

void Lexicon::validate() const {
  const std::vector<const std::set<std::string>*> lists = {&nouns, &adjectives, &determiners,
                                                           &prepositions, &others};
  for (std::size_t a = 0; a < lists.size(); ++a)
    for (std::size_t b = a + 1; b < lists.size(); ++b)
      for (const auto& w : *lists[a])
        if (lists[b]->count(w)) throw std::invalid_argument("word '" + w + "' is in two lexicon lists");
  for (const auto& p : relation_prepositions())
    if (!prepositions.count(p)) throw std::invalid_argument("lexicon lacks preposition '" + p + "'");
}

Lexicon Lexicon::from_json(std::string_view text) {
  auto j = nlohmann::json::parse(text);
  Lexicon lex;
  auto words = [&](const char* key) {
    std::set<std::string> out;
    if (j.contains(key))
      for (const auto& w : j[key]) out.insert(to_lower(w.get<std::string>()));
    return out;
  };
  lex.nouns = words("nouns");
  lex.adjectives = words("adjectives");
  lex.determiners = words("determiners");
  lex.prepositions = words("prepositions");
  lex.others = words("others");
  auto policy = j.value("unknown", std::string("noun"));
  if (policy == "noun") lex.unknown = UnknownPolicy::noun;
  else if (policy == "skip") lex.unknown = UnknownPolicy::skip;
  else throw std::invalid_argument("unknown-word policy must be 'noun' or 'skip'");
  lex.validate();
  return lex;
}

std::string Lexicon::to_json() const {
  nlohmann::json j = {{"nouns", nouns},
                      {"adjectives", adjectives},
                      {"determiners", determiners},
                      {"prepositions", prepositions},
                      {"others", others},
                      {"unknown", unknown == UnknownPolicy::noun ? "noun" : "skip"}};
  return j.dump(2) + "\n";
}

std::vector<Phrase> extract_phrases(std::string_view text, const Lexicon& lexicon) {
  const auto t = tag_tokens(text, lexicon);
  const auto& rel_preps = Lexicon::relation_prepositions();
  std::vector<Phrase> out;
  std::unordered_set<std::string> seen;
  auto emit = [&](Phrase p) {
    if (p.query.empty() || !seen.insert(p.query).second) return;
    out.push_back(std::move(p));
  };

  std::size_t i = 0;
  while (i < t.size()) {
    std::size_t np1 = match_np(t, i);
    if (np1 == i) {
      ++i;
      continue;
    }
    std::size_t j = np1;
    while (j < t.size() && t[j].tag == Tag::other) ++j;
    if (j < t.size() && t[j].tag == Tag::prep && rel_preps.count(t[j].lower)) {
      std::size_t np2 = match_np(t, j + 1);
      if (np2 > j + 1) {
        Phrase p;
        p.kind = PhraseKind::relation;
        p.head = t[np1 - 1].lower;
        p.relation = t[j].lower;
        p.tail = t[np2 - 1].lower;
        p.surface = span_text(t, i, np1, true) + " " + t[j].text + " " + span_text(t, j + 1, np2, false);
        p.query = normalize_query(p.surface, lexicon);
        emit(std::move(p));
        i = np2;
        continue;
      }
    }
    Phrase p;
    p.kind = PhraseKind::object;
    p.head = t[np1 - 1].lower;
    p.surface = span_text(t, i, np1, true);
    p.query = normalize_query(p.surface, lexicon);
    emit(std::move(p));
    i = np1;
  }
  return out;
}

std::string normalize_query(std::string_view surface, const Lexicon& lexicon) {
  std::vector<std::string> kept;
  for (auto& w : word_tokens(surface))
    if (!lexicon.determiners.count(w)) kept.push_back(std::move(w));
  return join(kept, " ");
}

std::vector<std::string> select_queries(const std::vector<Phrase>& phrases, int k) {
  if (k < 1) throw std::invalid_argument("select_queries needs k >= 1");
  std::vector<std::string> out;
  for (auto kind : {PhraseKind::relation, PhraseKind::object})
    for (const auto& p : phrases)
      if (p.kind == kind && static_cast<int>(out.size()) < k) out.push_back(p.query);
  return out;
}

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace vistext::phrasex
