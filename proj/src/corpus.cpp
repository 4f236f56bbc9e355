#include "mclsr/corpus.hpp"

#include "mclsr/errors.hpp"
#include "mclsr/rng.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mclsr {

namespace {

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = s.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  return in;
}

}  // namespace

const char* to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ParseError("unknown split name: '" + s + "'");
}

std::size_t Corpus::num_interactions() const {
  std::size_t n = 0;
  for (const auto& seq : sequences) n += seq.size();
  return n;
}

std::vector<UserIndex> Corpus::users_in(Split s) const {
  std::vector<UserIndex> out;
  for (UserIndex u = 0; u < static_cast<UserIndex>(split.size()); ++u)
    if (split[u] == s) out.push_back(u);
  return out;
}

RawCorpus read_raw_corpus(std::istream& in, const std::string& name) {
  RawCorpus raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto where = [&] { return name + ":" + std::to_string(lineno); };
    if (line.empty()) throw ParseError(where() + ": empty line");
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(where() + ": missing TAB separator");
    RawRecord rec;
    rec.user = line.substr(0, tab);
    if (rec.user.empty()) throw ParseError(where() + ": empty user id");
    rec.items = split_csv(line.substr(tab + 1));
    for (const auto& it : rec.items)
      if (it.empty()) throw ParseError(where() + ": empty item id");
    raw.records.push_back(std::move(rec));
  }
  if (raw.records.empty()) throw EmptyCorpusError(name + ": no records");
  return raw;
}

RawCorpus load_raw_corpus(const std::string& path) {
  auto in = open_in(path);
  return read_raw_corpus(in, path);
}

Corpus preprocess(const RawCorpus& raw, int min_count, std::uint64_t seed,
                  const std::unordered_map<std::string, Split>* fixed_split) {
  if (min_count < 1) throw ParamError("min_count must be >= 1");

  // Merge repeated lines for the same user in file order.
  std::vector<std::string> user_order;
  std::unordered_map<std::string, std::size_t> user_pos;
  std::vector<std::vector<std::string>> merged;
  for (const auto& rec : raw.records) {
    auto [it, inserted] = user_pos.try_emplace(rec.user, merged.size());
    if (inserted) {
      user_order.push_back(rec.user);
      merged.emplace_back();
    }
    auto& seq = merged[it->second];
    seq.insert(seq.end(), rec.items.begin(), rec.items.end());
  }

  // Removing rare items can shorten users below 2, and dropping those users
  // can push more items under the threshold, so iterate to a fixed point.
  std::vector<bool> user_alive(merged.size(), true);
  std::unordered_map<std::string, std::size_t> counts;
  bool changed = true;
  while (changed) {
    changed = false;
    counts.clear();
    for (std::size_t u = 0; u < merged.size(); ++u) {
      if (!user_alive[u]) continue;
      for (const auto& item : merged[u]) ++counts[item];
    }
    for (std::size_t u = 0; u < merged.size(); ++u) {
      if (!user_alive[u]) continue;
      auto& seq = merged[u];
      const std::size_t before = seq.size();
      std::erase_if(seq, [&](const std::string& item) {
        return counts.at(item) < static_cast<std::size_t>(min_count);
      });
      if (seq.size() != before) changed = true;
      if (seq.size() < 2) {
        user_alive[u] = false;
        changed = true;
      }
    }
  }

  Corpus corpus;
  for (std::size_t u = 0; u < merged.size(); ++u) {
    if (!user_alive[u]) continue;
    const UserIndex uid = static_cast<UserIndex>(corpus.user_ids.size());
    corpus.user_ids.push_back(user_order[u]);
    corpus.user_index.emplace(user_order[u], uid);
    std::vector<ItemIndex> seq;
    seq.reserve(merged[u].size());
    for (const auto& item : merged[u]) {
      auto [it, inserted] =
          corpus.item_index.try_emplace(item, static_cast<ItemIndex>(corpus.item_ids.size()));
      if (inserted) corpus.item_ids.push_back(item);
      seq.push_back(it->second);
    }
    corpus.sequences.push_back(std::move(seq));
  }
  if (corpus.user_ids.empty() || corpus.item_ids.empty())
    throw EmptyCorpusError("preprocess: no users or items survive filtering");

  const std::size_t n = corpus.user_ids.size();
  corpus.split.assign(n, Split::Train);
  if (fixed_split != nullptr) {
    for (std::size_t u = 0; u < n; ++u) {
      const auto it = fixed_split->find(corpus.user_ids[u]);
      if (it == fixed_split->end())
        throw ConfigError("split file does not cover user '" + corpus.user_ids[u] + "'");
      corpus.split[u] = it->second;
    }
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng = substream(seed, "split");
    rng.shuffle(order);
    const std::size_t n_val = n / 10;
    const std::size_t n_test = n / 10;
    const std::size_t n_train = n - n_val - n_test;  // remainders go to train
    for (std::size_t i = 0; i < n; ++i) {
      Split s = Split::Train;
      if (i >= n_train + n_val) s = Split::Test;
      else if (i >= n_train) s = Split::Val;
      corpus.split[order[i]] = s;
    }
  }
  return corpus;
}

std::vector<TrainSample> make_train_samples(const Corpus& corpus) {
  if (corpus.sequences.empty()) throw EmptyCorpusError("make_train_samples: empty corpus");
  std::vector<TrainSample> samples;
  for (UserIndex u = 0; u < static_cast<UserIndex>(corpus.sequences.size()); ++u) {
    if (corpus.split[u] != Split::Train) continue;
    const auto& seq = corpus.sequences[u];
    for (std::size_t k = 1; k < seq.size(); ++k) {
      const std::size_t lo = k > static_cast<std::size_t>(kMaxPrefixLen)
                                 ? k - static_cast<std::size_t>(kMaxPrefixLen)
                                 : 0;
      samples.push_back(TrainSample{
          u, std::vector<ItemIndex>(seq.begin() + lo, seq.begin() + k), seq[k]});
    }
  }
  return samples;
}

EvalSet make_eval_cases(const Corpus& corpus, Split which) {
  EvalSet set;
  for (UserIndex u = 0; u < static_cast<UserIndex>(corpus.sequences.size()); ++u) {
    if (corpus.split[u] != which) continue;
    const auto& seq = corpus.sequences[u];
    const std::size_t m = seq.size();
    const std::size_t cut = (4 * m) / 5;  // floor(0.8 m)
    if (cut == 0 || cut == m) {
      ++set.skipped;
      continue;
    }
    EvalCase c;
    c.user = u;
    c.prefix.assign(seq.begin(), seq.begin() + cut);
    c.ground_truth.assign(seq.begin() + cut, seq.end());
    std::sort(c.ground_truth.begin(), c.ground_truth.end());
    c.ground_truth.erase(std::unique(c.ground_truth.begin(), c.ground_truth.end()),
                         c.ground_truth.end());
    set.cases.push_back(std::move(c));
  }
  return set;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats st;
  st.users = corpus.num_users();
  st.items = corpus.num_items();
  st.interactions = corpus.num_interactions();
  st.avg_len = st.users > 0 ? static_cast<double>(st.interactions) / static_cast<double>(st.users)
                            : 0.0;
  const double cells = static_cast<double>(st.users) * static_cast<double>(st.items);
  st.sparsity_percent =
      cells > 0 ? 100.0 * (1.0 - static_cast<double>(st.interactions) / cells) : 0.0;
  return st;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    auto out = open_out(dir + "/users.tsv");
    for (std::size_t u = 0; u < corpus.user_ids.size(); ++u)
      out << u << '\t' << corpus.user_ids[u] << '\n';
  }
  {
    auto out = open_out(dir + "/items.tsv");
    for (std::size_t v = 0; v < corpus.item_ids.size(); ++v)
      out << v << '\t' << corpus.item_ids[v] << '\n';
  }
  {
    auto out = open_out(dir + "/splits.tsv");
    for (std::size_t u = 0; u < corpus.user_ids.size(); ++u)
      out << corpus.user_ids[u] << '\t' << to_string(corpus.split[u]) << '\n';
  }
  {
    auto out = open_out(dir + "/sequences.tsv");
    for (std::size_t u = 0; u < corpus.sequences.size(); ++u) {
      out << u << '\t';
      const auto& seq = corpus.sequences[u];
      for (std::size_t k = 0; k < seq.size(); ++k) {
        if (k > 0) out << ',';
        out << seq[k];
      }
      out << '\n';
    }
  }
  {
    const CorpusStats st = corpus_stats(corpus);
    nlohmann::json j;
    j["users"] = st.users;
    j["items"] = st.items;
    j["interactions"] = st.interactions;
    j["avg_len"] = st.avg_len;
    j["sparsity_percent"] = st.sparsity_percent;
    auto out = open_out(dir + "/stats.json");
    out << j.dump(2) << '\n';
  }
}

Corpus load_corpus(const std::string& dir) {
  Corpus corpus;
  {
    auto in = open_in(dir + "/users.tsv");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::size_t tab = line.find('\t');
      if (tab == std::string::npos)
        throw ParseError(dir + "/users.tsv:" + std::to_string(lineno) + ": missing TAB");
      corpus.user_ids.push_back(line.substr(tab + 1));
      corpus.user_index.emplace(corpus.user_ids.back(),
                                static_cast<UserIndex>(corpus.user_ids.size() - 1));
    }
  }
  {
    auto in = open_in(dir + "/items.tsv");
    std::string line;
    while (std::getline(in, line)) {
      const std::size_t tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError(dir + "/items.tsv: missing TAB");
      corpus.item_ids.push_back(line.substr(tab + 1));
      corpus.item_index.emplace(corpus.item_ids.back(),
                                static_cast<ItemIndex>(corpus.item_ids.size() - 1));
    }
  }
  {
    const auto by_id = load_split_file(dir + "/splits.tsv");
    corpus.split.resize(corpus.user_ids.size());
    for (std::size_t u = 0; u < corpus.user_ids.size(); ++u) {
      const auto it = by_id.find(corpus.user_ids[u]);
      if (it == by_id.end())
        throw ParseError(dir + "/splits.tsv: no split for user '" + corpus.user_ids[u] + "'");
      corpus.split[u] = it->second;
    }
  }
  {
    auto in = open_in(dir + "/sequences.tsv");
    corpus.sequences.resize(corpus.user_ids.size());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto where = [&] { return dir + "/sequences.tsv:" + std::to_string(lineno); };
      const std::size_t tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError(where() + ": missing TAB");
      const std::size_t u = std::stoul(line.substr(0, tab));
      if (u >= corpus.sequences.size()) throw ParseError(where() + ": user index out of range");
      for (const auto& tok : split_csv(line.substr(tab + 1))) {
        if (tok.empty()) throw ParseError(where() + ": empty item index");
        const long v = std::stol(tok);
        if (v < 0 || v >= corpus.num_items())
          throw ParseError(where() + ": item index out of range");
        corpus.sequences[u].push_back(static_cast<ItemIndex>(v));
      }
    }
  }
  return corpus;
}

std::unordered_map<std::string, Split> load_split_file(const std::string& path) {
  auto in = open_in(path);
  std::unordered_map<std::string, Split> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) + ": missing TAB");
    out[line.substr(0, tab)] = split_from_string(line.substr(tab + 1));
  }
  return out;
}

}  // namespace mclsr
