#pragma once

#include "mclsr/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

namespace mclsr {

/// One input line: a user and their chronologically ordered item ids.
struct RawRecord {
  std::string user;
  std::vector<std::string> items;
};

struct RawCorpus {
  std::vector<RawRecord> records;
};

enum class Split : std::uint8_t { Train = 0, Val = 1, Test = 2 };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

/// Filtered, densely indexed corpus with a train/val/test user partition.
struct Corpus {
  std::vector<std::string> user_ids;  // dense user index -> opaque id
  std::vector<std::string> item_ids;  // dense item index -> opaque id
  std::unordered_map<std::string, UserIndex> user_index;
  std::unordered_map<std::string, ItemIndex> item_index;
  std::vector<std::vector<ItemIndex>> sequences;  // per user index
  std::vector<Split> split;                       // per user index

  Eigen::Index num_users() const { return static_cast<Eigen::Index>(user_ids.size()); }
  Eigen::Index num_items() const { return static_cast<Eigen::Index>(item_ids.size()); }
  std::size_t num_interactions() const;
  std::vector<UserIndex> users_in(Split s) const;
};

struct TrainSample {
  UserIndex user;
  std::vector<ItemIndex> prefix;  // most recent <= kMaxPrefixLen behaviors
  ItemIndex target;               // item immediately following the prefix
};

struct EvalCase {
  UserIndex user;
  std::vector<ItemIndex> prefix;        // first 80% of the sequence, untruncated
  std::vector<ItemIndex> ground_truth;  // distinct remaining items, sorted
};

struct EvalSet {
  std::vector<EvalCase> cases;
  int skipped = 0;  // users with no usable prefix/ground truth
};

struct CorpusStats {
  Eigen::Index users = 0;
  Eigen::Index items = 0;
  std::size_t interactions = 0;
  double avg_len = 0.0;
  double sparsity_percent = 0.0;
};

RawCorpus load_raw_corpus(const std::string& path);
RawCorpus read_raw_corpus(std::istream& in, const std::string& name);

/// Drops rare items and too-short users, rebuilds dense vocabularies, and
/// partitions users 8:1:1 by seeded shuffle. When `fixed_split` is given it
/// overrides the shuffle; every surviving user must be present in the map.
Corpus preprocess(const RawCorpus& raw, int min_count, std::uint64_t seed,
                  const std::unordered_map<std::string, Split>* fixed_split = nullptr);

/// Next-item samples from training users: one per position k >= 2.
std::vector<TrainSample> make_train_samples(const Corpus& corpus);

/// 80/20 prefix/holdout cases for the given split.
EvalSet make_eval_cases(const Corpus& corpus, Split which);

CorpusStats corpus_stats(const Corpus& corpus);

/// On-disk corpus artifacts: users.tsv, items.tsv, sequences.tsv, splits.tsv,
/// stats.json under `dir`.
void save_corpus(const Corpus& corpus, const std::string& dir);
Corpus load_corpus(const std::string& dir);

/// Reads a `user-id<TAB>{train|val|test}` assignment file.
std::unordered_map<std::string, Split> load_split_file(const std::string& path);

}  // namespace mclsr
