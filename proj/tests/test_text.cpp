#include <doctest.h>

#include <fstream>
#include <set>
#include <sstream>

#include "arabeval/error.hpp"
#include "arabeval/jsonl.hpp"
#include "arabeval/rng.hpp"
#include "arabeval/unicode.hpp"
#include "helpers.hpp"

using namespace arabeval;

TEST_SUITE("text") {
  TEST_CASE("utf-8 decode and encode round trip") {
    const std::string s = "سلام abc 😂";
    const auto cps = unicode::decode(s);
    CHECK(cps.size() == 10);
    CHECK(cps[0] == U'س');
    CHECK(unicode::encode(cps) == s);
  }

  TEST_CASE("invalid bytes decode to replacement characters one at a time") {
    const std::string bad = std::string("a") + char(0xC3) + char(0x28) + char(0xFF);
    const auto cps = unicode::decode(bad);
    REQUIRE(cps.size() == 4);
    CHECK(cps[1] == 0xFFFD);
    CHECK(cps[2] == U'(');
    CHECK(cps[3] == 0xFFFD);
  }

  TEST_CASE("character classes") {
    CHECK(unicode::is_arabic(U'ب'));
    CHECK(unicode::is_arabic_letter(U'ب'));
    CHECK_FALSE(unicode::is_arabic_letter(unicode::kTatweel));
    CHECK_FALSE(unicode::is_arabic_letter(U'٣'));
    CHECK(unicode::is_digit(U'٣'));
    CHECK(unicode::is_emoji(U'😂'));
    CHECK_FALSE(unicode::is_emoji(U'#'));
    CHECK_FALSE(unicode::is_emoji(U'7'));
    CHECK(unicode::is_punct(U'،'));
    CHECK(unicode::is_punct(U'؟'));
    CHECK(unicode::is_whitespace(U'\n'));
    CHECK(unicode::is_word_char(U'_'));
    CHECK_FALSE(unicode::is_word_char(U'@'));
  }

  TEST_CASE("jsonl round trip and error channel") {
    std::vector<json> recs{{{"a", 1}}, {{"b", "نص"}}};
    std::stringstream ss;
    write_jsonl(ss, recs);
    CHECK(read_jsonl(ss) == recs);

    std::istringstream mixed("{\"a\":1}\n\nnot json\n{\"b\":2}\n");
    std::vector<LineError> errors;
    const auto got = read_jsonl(mixed, &errors);
    CHECK(got.size() == 2);
    REQUIRE(errors.size() == 1);
    CHECK(errors[0].line == 3);

    std::istringstream strict("{\"a\":1}\n{oops\n");
    CHECK_THROWS(read_jsonl(strict));
  }

  TEST_CASE("read_lines keeps hash lines and trims trailing space") {
    testutil::TempDir dir;
    {
      std::ofstream f(dir / "l.txt");
      f << "one  \n\n# two\nthree\r\n";
    }
    const auto lines = read_lines(dir / "l.txt");
    CHECK(lines == std::vector<std::string>{"one", "# two", "three"});
    CHECK_THROWS(read_lines(dir / "missing.txt"));
  }

  TEST_CASE("fnv1a is stable") {
    CHECK(fnv1a_hex("") == "cbf29ce484222325");
    CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  }

  TEST_CASE("rng draws are in range and streams differ") {
    Rng r(1);
    for (int i = 0; i < 1000; ++i) {
      CHECK(r.below(7) < 7);
      const double u = r.uniform();
      CHECK((u >= 0.0 && u < 1.0));
    }
    std::set<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 100; ++s) seeds.insert(mix_seed(42, s));
    CHECK(seeds.size() == 100);
    CHECK(mix_seed(1, 2) == mix_seed(1, 2));

    std::vector<int> v{1, 2, 3, 4, 5, 6};
    Rng a(9), b(9);
    auto w = v;
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    std::sort(v.begin(), v.end());
    CHECK(v == std::vector<int>{1, 2, 3, 4, 5, 6});
  }
}
