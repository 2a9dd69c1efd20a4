#include "doctest.h"
#include "vistext/phrasex.hpp"

using namespace vistext::phrasex;

TEST_CASE("relation and object phrases") {
  auto lex = Lexicon::default_lexicon();
  auto p = extract_phrases("There is a red apple on the table. You see a mug.", lex);
  REQUIRE(p.size() == 2);
  CHECK(p[0].kind == PhraseKind::relation);
  CHECK(p[0].query == "red apple on table");
  CHECK(p[0].head == "apple");
  CHECK(p[0].relation == "on");
  CHECK(p[0].tail == "table");
  CHECK(p[1].kind == PhraseKind::object);
  CHECK(p[1].query == "mug");
}

TEST_CASE("duplicates collapse and order is kept") {
  auto lex = Lexicon::default_lexicon();
  auto p = extract_phrases("You see a mug. You see a mug. You see a lamp.", lex);
  REQUIRE(p.size() == 2);
  CHECK(p[0].query == "mug");
  CHECK(p[1].query == "lamp");
}

TEST_CASE("select_queries puts relations first and caps at k") {
  auto lex = Lexicon::default_lexicon();
  auto p = extract_phrases("You see a mug. There is a book on the shelf. There is a vase in the fridge.", lex);
  auto q = select_queries(p, 2);
  REQUIRE(q.size() == 2);
  CHECK(q[0] == "book on shelf");
  CHECK(q[1] == "vase in fridge");
  CHECK(select_queries(p, kDefaultQueriesPerStep).size() == 3);
  CHECK(select_queries({}, 4).empty());
}

TEST_CASE("normalization drops determiners and case") {
  auto lex = Lexicon::default_lexicon();
  CHECK(normalize_query("The Red  Apple", lex) == "red apple");
  CHECK(word_tokens("Hello, World!") == std::vector<std::string>{"hello", "world"});
}

TEST_CASE("unknown words follow the lexicon policy") {
  auto lex = Lexicon::default_lexicon();
  CHECK(extract_phrases("You see a zorblax.", lex).front().query == "zorblax");
  lex.unknown = UnknownPolicy::skip;
  CHECK(extract_phrases("You see a zorblax.", lex).empty());
}

TEST_CASE("lexicon json round trip and validation") {
  auto lex = Lexicon::default_lexicon();
  CHECK_NOTHROW(lex.validate());
  auto back = Lexicon::from_json(lex.to_json());
  CHECK(back.nouns == lex.nouns);
  CHECK(back.prepositions == lex.prepositions);
  auto bad = lex;
  bad.adjectives.insert(*bad.nouns.begin());
  CHECK_THROWS(bad.validate());
}
