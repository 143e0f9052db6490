#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "edr/corpus.hpp"
#include "edr/errors.hpp"
#include "edr/rng.hpp"
#include "edr/vocab.hpp"

using namespace edr;

namespace {

std::vector<std::vector<std::string>> lines_to_corpus(const std::vector<std::string>& lines) {
  std::vector<std::vector<std::string>> corpus;
  for (const auto& l : lines) corpus.push_back(split_tokens(l));
  return corpus;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("vocabulary starts with exactly the four reserved entries") {
  Vocabulary v;
  REQUIRE(v.size() == 4);
  CHECK(v.token_of(0) == "<pad>");
  CHECK(v.token_of(1) == "<s>");
  CHECK(v.token_of(2) == "</s>");
  CHECK(v.token_of(3) == "<unk>");
  CHECK(v.id_of("<unk>") == 3);
  CHECK_THROWS_AS(v.token_of(4), IndexError);
  CHECK_THROWS_AS(v.token_of(-1), IndexError);
}

TEST_CASE("add_token: ids >= 4 bijectively; duplicates and empties rejected") {
  Vocabulary v;
  CHECK(v.add_token("alpha") == 4);
  CHECK(v.add_token("beta") == 5);
  CHECK(v.id_of("alpha") == 4);
  CHECK(v.token_of(5) == "beta");
  CHECK_THROWS_AS(v.add_token("alpha"), UsageError);
  CHECK_THROWS_AS(v.add_token("<pad>"), UsageError);
  CHECK_THROWS_AS(v.add_token(""), UsageError);
}

TEST_CASE("build_vocab: cap 6 keeps both tokens in frequency order") {
  auto corpus = lines_to_corpus({"a a b"});
  Vocabulary v = build_vocab(corpus, 6);
  REQUIRE(v.size() == 6);
  CHECK(v.token_of(4) == "a");
  CHECK(v.token_of(5) == "b");
}

TEST_CASE("build_vocab: cap 5 drops the rarer token to <unk>") {
  auto corpus = lines_to_corpus({"a a b"});
  Vocabulary v = build_vocab(corpus, 5);
  REQUIRE(v.size() == 5);
  CHECK(v.id_of("a") == 4);
  CHECK(v.id_of("b") == Vocabulary::kUnk);
}

TEST_CASE("build_vocab: cap 4 leaves only reserved ids") {
  auto corpus = lines_to_corpus({"a a b"});
  Vocabulary v = build_vocab(corpus, 4);
  REQUIRE(v.size() == 4);
  CHECK(v.id_of("a") == Vocabulary::kUnk);
  CHECK(v.id_of("b") == Vocabulary::kUnk);
}

TEST_CASE("build_vocab: frequency ties break by first occurrence") {
  auto corpus = lines_to_corpus({"z q z q m"});
  Vocabulary v = build_vocab(corpus, 7);
  CHECK(v.token_of(4) == "z");  // z before q in the text
  CHECK(v.token_of(5) == "q");
  CHECK(v.token_of(6) == "m");
}

TEST_CASE("build_vocab: rejects empty corpus and cap < 4") {
  CHECK_THROWS_AS(build_vocab({}, 10), UsageError);
  CHECK_THROWS_AS(build_vocab(lines_to_corpus({"a"}), 3), UsageError);
}

TEST_CASE("encode: round-trip, unknowns to 3, empty in empty out") {
  Vocabulary v = build_vocab(lines_to_corpus({"red green blue"}), 10);
  std::vector<std::string> toks = {"green", "red"};
  auto ids = v.encode(toks);
  CHECK(v.decode(ids) == toks);
  CHECK(v.encode({"violet"}) == std::vector<std::int32_t>{3});
  CHECK(v.encode({}).empty());
}

TEST_CASE("vocabulary file round-trip") {
  Vocabulary v = build_vocab(lines_to_corpus({"one two three two"}), 10);
  auto path = temp_file("edr_vocab_roundtrip.txt");
  v.save(path.string());
  Vocabulary loaded = Vocabulary::load(path.string());
  REQUIRE(loaded.size() == v.size());
  for (std::int32_t i = 0; i < static_cast<std::int32_t>(v.size()); ++i) {
    CHECK(loaded.token_of(i) == v.token_of(i));
  }
  std::filesystem::remove(path);
}

TEST_CASE("vocabulary load rejects files without the reserved header") {
  auto path = temp_file("edr_vocab_bad.txt");
  write_lines(path.string(), {"<pad>", "<s>", "</s>", "word"});
  CHECK_THROWS_AS(Vocabulary::load(path.string()), DataError);
  write_lines(path.string(), {"<pad>", "<s>", "</s>", "<unk>", "dup", "dup"});
  CHECK_THROWS_AS(Vocabulary::load(path.string()), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("filter_by_length: strict joint boundary") {
  SentencePair p41{std::vector<std::int32_t>(41, 4), std::vector<std::int32_t>(5, 4)};
  SentencePair p40{std::vector<std::int32_t>(40, 4), std::vector<std::int32_t>(40, 4)};
  auto kept = filter_by_length({p41, p40}, 40);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0] == p40);
  CHECK(filter_by_length({p41, p40}, 1).empty());
  CHECK_THROWS_AS(filter_by_length({p40}, 0), UsageError);
}

TEST_CASE("encode_corpus: drops pairs with an empty side, rejects misalignment") {
  Vocabulary v = build_vocab(lines_to_corpus({"a b c"}), 10);
  auto pairs = encode_corpus({"a b", "", "c"}, {"b a", "x", "c"}, v, v);
  REQUIRE(pairs.size() == 2);  // middle pair dropped
  CHECK(pairs[0].source == v.encode({"a", "b"}));
  CHECK_THROWS_AS(encode_corpus({"a"}, {"a", "b"}, v, v), DataError);
}

TEST_CASE("make_batch: padding, masks, and target wrapping") {
  SentencePair a{{4, 5, 6}, {7}};
  SentencePair b{{4}, {8, 9}};
  Batch batch = make_batch({a, b});
  REQUIRE(batch.size() == 2);
  CHECK(batch.src_len() == 3);
  CHECK(batch.tgt_len() == 4);  // <s> 8 9 </s>

  CHECK(batch.src[1] == std::vector<std::int32_t>{4, 0, 0});
  CHECK(batch.src_mask[1] == std::vector<std::uint8_t>{1, 0, 0});
  CHECK(batch.tgt[0] == std::vector<std::int32_t>{1, 7, 2, 0});
  CHECK(batch.tgt_mask[0] == std::vector<std::uint8_t>{1, 1, 1, 0});
  CHECK(batch.tgt[1] == std::vector<std::int32_t>{1, 8, 9, 2});
}

TEST_CASE("make_batches: 5 pairs with batch_size 2 gives sizes 2,2,1") {
  std::vector<SentencePair> pairs;
  for (int i = 0; i < 5; ++i) {
    pairs.push_back({std::vector<std::int32_t>(1 + i, 4), {4}});
  }
  auto batches = make_batches(pairs, 2, 7);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].size() == 2);
  CHECK(batches[1].size() == 2);
  CHECK(batches[2].size() == 1);
}

TEST_CASE("make_batches: deterministic in seed") {
  Rng rng(99);
  std::vector<SentencePair> pairs;
  for (int i = 0; i < 23; ++i) {
    std::vector<std::int32_t> src(1 + rng.next_bounded(6), 4);
    std::vector<std::int32_t> tgt(1 + rng.next_bounded(6), 5);
    pairs.push_back({src, tgt});
  }
  auto x = make_batches(pairs, 4, 42);
  auto y = make_batches(pairs, 4, 42);
  REQUIRE(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i].src == y[i].src);
    CHECK(x[i].tgt == y[i].tgt);
    CHECK(x[i].src_mask == y[i].src_mask);
    CHECK(x[i].tgt_mask == y[i].tgt_mask);
  }
}

TEST_CASE("make_batches: unmasking any row reproduces its pair; flattening is a permutation") {
  Rng rng(1234);
  std::vector<SentencePair> pairs;
  for (int i = 0; i < 57; ++i) {
    std::vector<std::int32_t> src, tgt;
    for (std::size_t k = 0, n = 1 + rng.next_bounded(9); k < n; ++k)
      src.push_back(static_cast<std::int32_t>(4 + rng.next_bounded(16)));
    for (std::size_t k = 0, n = 1 + rng.next_bounded(9); k < n; ++k)
      tgt.push_back(static_cast<std::int32_t>(4 + rng.next_bounded(16)));
    pairs.push_back({src, tgt});
  }

  auto batches = make_batches(pairs, 8, 5);
  std::vector<SentencePair> recovered;
  for (const auto& batch : batches) {
    for (std::size_t r = 0; r < batch.size(); ++r) {
      SentencePair p;
      for (std::size_t c = 0; c < batch.src_len(); ++c) {
        if (batch.src_mask[r][c]) {
          p.source.push_back(batch.src[r][c]);
        } else {
          CHECK(batch.src[r][c] == 0);  // padding holds id 0
        }
      }
      // target rows are wrapped: <s> ... </s>, then padding
      std::vector<std::int32_t> wrapped;
      for (std::size_t c = 0; c < batch.tgt_len(); ++c) {
        if (batch.tgt_mask[r][c]) wrapped.push_back(batch.tgt[r][c]);
      }
      REQUIRE(wrapped.size() >= 2);
      CHECK(wrapped.front() == Vocabulary::kBos);
      CHECK(wrapped.back() == Vocabulary::kEos);
      p.target.assign(wrapped.begin() + 1, wrapped.end() - 1);
      recovered.push_back(p);
    }
  }

  REQUIRE(recovered.size() == pairs.size());
  auto key = [](const SentencePair& p) { return std::make_pair(p.source, p.target); };
  std::vector<std::pair<std::vector<std::int32_t>, std::vector<std::int32_t>>> a, b;
  for (const auto& p : pairs) a.push_back(key(p));
  for (const auto& p : recovered) b.push_back(key(p));
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);
}

TEST_CASE("generate_synthetic: copy and reversal tasks, deterministic in seed") {
  auto copy = generate_synthetic(SyntheticKind::kCopy, 50, 20, 3, 10, 9);
  REQUIRE(copy.size() == 50);
  for (const auto& pair : copy) {
    CHECK(pair.source.size() >= 3);
    CHECK(pair.source.size() <= 10);
    CHECK(pair.target == pair.source);
    for (const auto& t : pair.source) {
      CHECK(t.size() >= 2);
      CHECK(t[0] == 's');
    }
  }

  auto rev = generate_synthetic(SyntheticKind::kReversal, 20, 5, 2, 4, 11);
  for (const auto& pair : rev) {
    std::vector<std::string> r(pair.source.rbegin(), pair.source.rend());
    CHECK(pair.target == r);
  }

  auto again = generate_synthetic(SyntheticKind::kCopy, 50, 20, 3, 10, 9);
  for (std::size_t i = 0; i < copy.size(); ++i) {
    CHECK(again[i].source == copy[i].source);
  }
  auto other = generate_synthetic(SyntheticKind::kCopy, 50, 20, 3, 10, 10);
  bool any_diff = false;
  for (std::size_t i = 0; i < copy.size(); ++i) {
    if (other[i].source != copy[i].source) any_diff = true;
  }
  CHECK(any_diff);

  CHECK_THROWS_AS(generate_synthetic(SyntheticKind::kCopy, 1, 0, 1, 2, 1), UsageError);
  CHECK_THROWS_AS(generate_synthetic(SyntheticKind::kCopy, 1, 5, 3, 2, 1), UsageError);
}

TEST_CASE("read_lines / write_lines round-trip and strip carriage returns") {
  auto path = temp_file("edr_lines_roundtrip.txt");
  write_lines(path.string(), {"first line", "second", ""});
  auto lines = read_lines(path.string());
  REQUIRE(lines.size() == 3);
  CHECK(lines[0] == "first line");
  CHECK(lines[2].empty());
  CHECK_THROWS_AS(read_lines("/nonexistent/edr/file.txt"), DataError);
  std::filesystem::remove(path);
}
