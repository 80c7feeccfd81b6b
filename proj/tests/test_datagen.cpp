#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "seqlab/datagen.hpp"

using namespace seqlab;

namespace {
std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}
}  // namespace

TEST_CASE("copy and reverse task rules") {
  std::vector<int> x{5, 9, 7};
  REQUIRE(apply_task(TaskKind::copy, x, {}) == std::vector<int>{5, 9, 7});
  REQUIRE(apply_task(TaskKind::reverse, x, {}) == std::vector<int>{7, 9, 5});
}

TEST_CASE("lexswap maps then swaps adjacent pairs") {
  // map m(t) = t + 10 over payload ids 3..12
  std::vector<int> map(10);
  for (int i = 0; i < 10; ++i) map[static_cast<std::size_t>(i)] = kNumSpecials + i + 10;
  std::vector<int> x{5, 9, 7};
  REQUIRE(apply_task(TaskKind::lexswap, x, map) == std::vector<int>{19, 15, 17});
}

TEST_CASE("lexswap is invertible") {
  const int vp = 40;
  auto map = lexswap_token_map(vp);
  std::vector<int> inverse(static_cast<std::size_t>(vp));
  for (int i = 0; i < vp; ++i)
    inverse[static_cast<std::size_t>(map[static_cast<std::size_t>(i)] - kNumSpecials)] =
        kNumSpecials + i;
  Corpus c = gen_task(TaskKind::lexswap, 200, 5, 15, vp, 3);
  for (const auto& p : c.pairs) {
    std::vector<int> y = p.tgt;
    for (std::size_t m = 0; m + 1 < y.size(); m += 2) std::swap(y[m], y[m + 1]);
    for (int& t : y) t = inverse[static_cast<std::size_t>(t - kNumSpecials)];
    REQUIRE(y == p.src);
  }
}

TEST_CASE("gen_task is a pure function of its arguments") {
  Corpus a = gen_task(TaskKind::lexswap, 500, 5, 15, 40, 7);
  Corpus b = gen_task(TaskKind::lexswap, 500, 5, 15, 40, 7);
  REQUIRE(a.pairs == b.pairs);
  Corpus c = gen_task(TaskKind::lexswap, 500, 5, 15, 40, 8);
  REQUIRE(a.pairs != c.pairs);
  for (const auto& p : a.pairs) {
    REQUIRE(!p.src.empty());
    REQUIRE(p.src.size() >= 5);
    REQUIRE(p.src.size() <= 15);
    for (int t : p.src) {
      REQUIRE(t >= kNumSpecials);
      REQUIRE(t < 43);
    }
  }
}

TEST_CASE("splits are disjoint and cover the corpus") {
  Corpus all = gen_task(TaskKind::copy, 100, 3, 6, 10, 5);
  CorpusSplits s = split_corpus(all, 10, 15);
  REQUIRE(s.train.pairs.size() == 75);
  REQUIRE(s.valid.pairs.size() == 10);
  REQUIRE(s.test.pairs.size() == 15);
  REQUIRE(s.train.manifest.split == "train");
  auto key = [](const SequencePair& p) { return std::make_pair(p.src, p.tgt); };
  std::multiset<std::pair<std::vector<int>, std::vector<int>>> everything;
  for (const auto& p : all.pairs) everything.insert(key(p));
  for (const auto* c : {&s.train, &s.valid, &s.test})
    for (const auto& p : c->pairs) {
      auto it = everything.find(key(p));
      REQUIRE(it != everything.end());
      everything.erase(it);
    }
  REQUIRE(everything.empty());
}

TEST_CASE("vocab assigns sorted dense ids above the specials") {
  Vocab v(std::vector<long long>{9, 5});
  REQUIRE(v.size() == 5);
  REQUIRE(v.id(5) == 3);
  REQUIRE(v.id(9) == 4);
  REQUIRE(v.token(3) == 5);
  REQUIRE_THROWS_AS(v.id(7), DataError);
  REQUIRE_THROWS_AS(v.token(2), DataError);
}

TEST_CASE("build_vocab is deterministic and round-trips") {
  Corpus c = gen_task(TaskKind::lexswap, 300, 5, 10, 20, 11);
  Vocab v1 = build_vocab(c);
  Vocab v2 = build_vocab(c);
  REQUIRE(v1 == v2);
  for (const auto& p : c.pairs)
    for (int t : p.src) REQUIRE(v1.token(v1.id(t)) == t);
}

TEST_CASE("corpus file round-trip") {
  Corpus c = gen_task(TaskKind::lexswap, 50, 5, 15, 40, 13);
  auto path = tmp_path("seqlab_corpus_test.txt");
  write_corpus(path, c);
  Corpus back = read_corpus(path);
  REQUIRE(back.pairs == c.pairs);
  REQUIRE(back.manifest.seed == c.manifest.seed);
  REQUIRE(back.manifest.task == c.manifest.task);
  REQUIRE(back.src_vocab_size == c.src_vocab_size);
  std::remove(path.c_str());
}

TEST_CASE("single pair formats as 'src TAB tgt'") {
  Corpus c;
  c.manifest = {TaskKind::copy, 1, 1, 2, 2, 10, "all"};
  c.pairs.push_back({{5, 9}, {9, 5}});
  auto path = tmp_path("seqlab_corpus_fmt.txt");
  write_corpus(path, c);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);  // version
  std::getline(in, line);  // manifest
  std::getline(in, line);
  REQUIRE(line == "5 9\t9 5");
  std::remove(path.c_str());
}

TEST_CASE("malformed corpus lines report the line number") {
  auto path = tmp_path("seqlab_corpus_bad.txt");
  {
    std::ofstream out(path);
    out << "# seqlab-corpus v1\n";
    out << "# task=copy seed=1 n=1 len_min=1 len_max=3 payload_vocab=10 split=all\n";
    out << "5 9\t9 5\n";
    out << "5 9\t9 5\t7\n";  // three fields
  }
  try {
    read_corpus(path);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    std::string msg = e.what();
    REQUIRE(msg.find("line 4") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("infeasible generation parameters are rejected") {
  REQUIRE_THROWS_AS(gen_task(TaskKind::copy, 10, 5, 4, 10, 1), DataError);
  REQUIRE_THROWS_AS(gen_task(TaskKind::copy, 10, 1, 4, 2, 1), DataError);
  REQUIRE_THROWS_AS(gen_task(TaskKind::copy, 0, 1, 4, 10, 1), DataError);
}
