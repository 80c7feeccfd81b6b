#pragma once

// Synthetic sequence-transduction corpora and their text file format.
//
// Corpus file layout (UTF-8, LF):
//   # seqlab-corpus v1
//   # task=lexswap seed=7 n=5000 len_min=5 len_max=15 payload_vocab=40 split=train
//   5 9 7<TAB>19 15 17
//   ...
// Token ids are integers; ids 0/1/2 are reserved (pad/bos/eos) and never
// appear inside a payload.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqlab/rng.hpp"

namespace seqlab {

constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kEos = 2;
constexpr int kNumSpecials = 3;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense id assignment over arbitrary integer token values: specials first,
// then payload tokens sorted by value.
class Vocab {
 public:
  Vocab() = default;
  explicit Vocab(std::vector<long long> values) : values_(std::move(values)) {
    std::sort(values_.begin(), values_.end());
    values_.erase(std::unique(values_.begin(), values_.end()), values_.end());
    for (std::size_t i = 0; i < values_.size(); ++i)
      ids_[values_[i]] = kNumSpecials + static_cast<int>(i);
  }

  // All payload ids in [3, 3+n) with token value == id; the generated tasks
  // use this directly.
  static Vocab dense(int payload_size) {
    std::vector<long long> v(static_cast<std::size_t>(payload_size));
    for (int i = 0; i < payload_size; ++i) v[static_cast<std::size_t>(i)] = kNumSpecials + i;
    return Vocab(std::move(v));
  }

  int size() const { return kNumSpecials + static_cast<int>(values_.size()); }

  int id(long long token) const {
    auto it = ids_.find(token);
    if (it == ids_.end())
      throw DataError("token " + std::to_string(token) + " not in vocabulary");
    return it->second;
  }

  long long token(int id) const {
    if (id < kNumSpecials || id >= size())
      throw DataError("id " + std::to_string(id) + " has no token");
    return values_[static_cast<std::size_t>(id - kNumSpecials)];
  }

  bool operator==(const Vocab& o) const { return values_ == o.values_; }

 private:
  std::vector<long long> values_;
  std::map<long long, int> ids_;
};

struct SequencePair {
  std::vector<int> src;
  std::vector<int> tgt;
  bool operator==(const SequencePair& o) const = default;
};

enum class TaskKind { copy, reverse, lexswap };

inline const char* task_name(TaskKind k) {
  switch (k) {
    case TaskKind::copy: return "copy";
    case TaskKind::reverse: return "reverse";
    case TaskKind::lexswap: return "lexswap";
  }
  return "?";
}

inline TaskKind task_from_name(const std::string& s) {
  if (s == "copy") return TaskKind::copy;
  if (s == "reverse") return TaskKind::reverse;
  if (s == "lexswap") return TaskKind::lexswap;
  throw DataError("unknown task: " + s);
}

struct CorpusManifest {
  TaskKind task = TaskKind::copy;
  std::uint64_t seed = 0;
  int n = 0;
  int len_min = 0, len_max = 0;
  int payload_vocab = 0;
  std::string split = "all";
};

struct Corpus {
  std::vector<SequencePair> pairs;
  int src_vocab_size = 0;
  int tgt_vocab_size = 0;
  CorpusManifest manifest;
};

// Target-side rule for one source sequence. `token_map` must be a bijection
// over payload ids; copy and reverse ignore it.
inline std::vector<int> apply_task(TaskKind kind, const std::vector<int>& x,
                                   const std::vector<int>& token_map) {
  switch (kind) {
    case TaskKind::copy:
      return x;
    case TaskKind::reverse: {
      std::vector<int> y(x.rbegin(), x.rend());
      return y;
    }
    case TaskKind::lexswap: {
      std::vector<int> y(x.size());
      for (std::size_t i = 0; i < x.size(); ++i)
        y[i] = token_map[static_cast<std::size_t>(x[i] - kNumSpecials)];
      for (std::size_t m = 0; m + 1 < y.size(); m += 2) std::swap(y[m], y[m + 1]);
      return y;
    }
  }
  throw DataError("unhandled task");
}

// Bijection used by generated lexswap corpora: rotate the payload ids by
// half the payload size. Reconstructible from the manifest alone.
inline std::vector<int> lexswap_token_map(int payload_vocab) {
  std::vector<int> map(static_cast<std::size_t>(payload_vocab));
  for (int i = 0; i < payload_vocab; ++i)
    map[static_cast<std::size_t>(i)] =
        kNumSpecials + (i + payload_vocab / 2) % payload_vocab;
  return map;
}

inline Corpus gen_task(TaskKind kind, int n, int len_min, int len_max,
                       int payload_vocab, std::uint64_t seed) {
  if (payload_vocab < 4) throw DataError("payload vocab must be at least 4");
  if (n < 1 || len_min < 1 || len_max < len_min)
    throw DataError("infeasible corpus parameters");
  Corpus c;
  c.manifest = {kind, seed, n, len_min, len_max, payload_vocab, "all"};
  c.src_vocab_size = kNumSpecials + payload_vocab;
  c.tgt_vocab_size = kNumSpecials + payload_vocab;
  const auto map = lexswap_token_map(payload_vocab);
  Rng rng = Rng::stream(seed, "gen");
  c.pairs.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int len = static_cast<int>(rng.next_int(len_min, len_max));
    std::vector<int> x(static_cast<std::size_t>(len));
    for (int& t : x)
      t = kNumSpecials + static_cast<int>(rng.next_below(
                             static_cast<std::uint64_t>(payload_vocab)));
    std::vector<int> y = apply_task(kind, x, map);
    c.pairs.push_back({std::move(x), std::move(y)});
  }
  return c;
}

struct CorpusSplits {
  Corpus train, valid, test;
};

// Disjoint seeded partition; |train| = n - n_valid - n_test.
inline CorpusSplits split_corpus(const Corpus& all, int n_valid, int n_test) {
  const int n = static_cast<int>(all.pairs.size());
  if (n_valid < 0 || n_test < 0 || n_valid + n_test >= n)
    throw DataError("infeasible split sizes");
  std::vector<int> idx(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
  Rng rng = Rng::stream(all.manifest.seed, "split");
  rng.shuffle(idx);
  CorpusSplits s;
  auto take = [&](int lo, int hi, const std::string& tag) {
    Corpus c;
    c.manifest = all.manifest;
    c.manifest.split = tag;
    c.src_vocab_size = all.src_vocab_size;
    c.tgt_vocab_size = all.tgt_vocab_size;
    std::vector<int> sel(idx.begin() + lo, idx.begin() + hi);
    std::sort(sel.begin(), sel.end());
    for (int i : sel) c.pairs.push_back(all.pairs[static_cast<std::size_t>(i)]);
    return c;
  };
  const int n_train = n - n_valid - n_test;
  s.train = take(0, n_train, "train");
  s.valid = take(n_train, n_train + n_valid, "valid");
  s.test = take(n_train + n_valid, n, "test");
  return s;
}

inline Vocab build_vocab(const Corpus& c) {
  std::set<long long> values;
  for (const auto& p : c.pairs) {
    for (int t : p.src) values.insert(t);
    for (int t : p.tgt) values.insert(t);
  }
  return Vocab(std::vector<long long>(values.begin(), values.end()));
}

// ---- corpus file I/O ----

inline void write_corpus(const std::string& path, const Corpus& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for write: " + path);
  out << "# seqlab-corpus v1\n";
  out << "# task=" << task_name(c.manifest.task) << " seed=" << c.manifest.seed
      << " n=" << c.manifest.n << " len_min=" << c.manifest.len_min
      << " len_max=" << c.manifest.len_max
      << " payload_vocab=" << c.manifest.payload_vocab
      << " split=" << c.manifest.split << "\n";
  for (const auto& p : c.pairs) {
    for (std::size_t i = 0; i < p.src.size(); ++i) {
      if (i) out << ' ';
      out << p.src[i];
    }
    out << '\t';
    for (std::size_t i = 0; i < p.tgt.size(); ++i) {
      if (i) out << ' ';
      out << p.tgt[i];
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

inline std::vector<int> parse_token_line(const std::string& s, int line_no) {
  std::vector<int> toks;
  std::istringstream iss(s);
  std::string field;
  while (iss >> field) {
    try {
      std::size_t pos = 0;
      int v = std::stoi(field, &pos);
      if (pos != field.size()) throw std::invalid_argument(field);
      if (v < kNumSpecials)
        throw DataError("line " + std::to_string(line_no) +
                        ": reserved token id in payload");
      toks.push_back(v);
    } catch (const DataError&) {
      throw;
    } catch (const std::exception&) {
      throw DataError("line " + std::to_string(line_no) + ": bad token '" + field + "'");
    }
  }
  if (toks.empty())
    throw DataError("line " + std::to_string(line_no) + ": empty sequence");
  return toks;
}

inline Corpus read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  Corpus c;
  std::string line;
  int line_no = 0;
  bool have_version = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line[0] == '#') {
      if (line_no == 1) {
        if (line != "# seqlab-corpus v1")
          throw DataError("line 1: unrecognized corpus header");
        have_version = true;
        continue;
      }
      // manifest line: "# k=v k=v ..."
      std::istringstream iss(line.substr(1));
      std::string kv;
      while (iss >> kv) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw DataError("line " + std::to_string(line_no) + ": bad manifest field");
        const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k == "task") c.manifest.task = task_from_name(v);
        else if (k == "seed") c.manifest.seed = std::stoull(v);
        else if (k == "n") c.manifest.n = std::stoi(v);
        else if (k == "len_min") c.manifest.len_min = std::stoi(v);
        else if (k == "len_max") c.manifest.len_max = std::stoi(v);
        else if (k == "payload_vocab") c.manifest.payload_vocab = std::stoi(v);
        else if (k == "split") c.manifest.split = v;
        else throw DataError("line " + std::to_string(line_no) + ": unknown manifest key " + k);
      }
      continue;
    }
    if (line.empty()) continue;
    const auto tabs = std::count(line.begin(), line.end(), '\t');
    if (tabs != 1)
      throw DataError("line " + std::to_string(line_no) + ": expected exactly 2 fields, got " +
                      std::to_string(tabs + 1));
    const auto tab = line.find('\t');
    SequencePair p;
    p.src = parse_token_line(line.substr(0, tab), line_no);
    p.tgt = parse_token_line(line.substr(tab + 1), line_no);
    c.pairs.push_back(std::move(p));
  }
  if (!have_version) throw DataError("missing corpus header");
  c.src_vocab_size = kNumSpecials + c.manifest.payload_vocab;
  c.tgt_vocab_size = kNumSpecials + c.manifest.payload_vocab;
  return c;
}

inline std::uint64_t file_content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0)
    h = fnv1a64_bytes(buf, static_cast<std::size_t>(in.gcount()), h);
  return h;
}

}  // namespace seqlab
