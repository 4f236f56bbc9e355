#include "mclsr/synth.hpp"

#include "mclsr/errors.hpp"
#include "mclsr/rng.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace mclsr {

namespace {

int effective_pattern_count(const SynthSpec& spec) {
  if (spec.pattern_count > 0) return spec.pattern_count;
  return std::max(1, spec.items / 20);
}

}  // namespace

RawCorpus make_synthetic(const SynthSpec& spec) {
  const int patterns = effective_pattern_count(spec);
  if (spec.users < 1 || spec.items < 1) throw ParamError("synth: users and items must be >= 1");
  if (patterns > spec.items)
    throw ParamError("synth: more patterns than items");
  if (spec.noise < 0.0 || spec.noise > 1.0) throw ParamError("synth: noise must be in [0,1]");
  if (spec.min_len < 2 || spec.max_len < spec.min_len)
    throw ParamError("synth: need 2 <= min_len <= max_len");
  const int min_chain = spec.items / patterns;  // shortest chain after remainder spread
  if (spec.max_len > min_chain)
    throw ParamError("synth: max_len exceeds chain length " + std::to_string(min_chain) +
                     "; lower max_len or pattern count");

  Rng rng = substream(spec.seed, "synth");

  // Deal shuffled items round-robin into chains.
  std::vector<int> deck(static_cast<std::size_t>(spec.items));
  std::iota(deck.begin(), deck.end(), 0);
  rng.shuffle(deck);
  std::vector<std::vector<int>> chains(static_cast<std::size_t>(patterns));
  for (std::size_t i = 0; i < deck.size(); ++i)
    chains[i % static_cast<std::size_t>(patterns)].push_back(deck[i]);

  RawCorpus raw;
  raw.records.reserve(static_cast<std::size_t>(spec.users));
  for (int u = 0; u < spec.users; ++u) {
    const auto& chain = chains[rng.bounded(static_cast<std::uint64_t>(patterns))];
    const int len = spec.min_len +
                    static_cast<int>(rng.bounded(
                        static_cast<std::uint64_t>(spec.max_len - spec.min_len + 1)));
    const std::size_t offset = rng.bounded(chain.size());
    RawRecord rec;
    rec.user = "u" + std::to_string(u);
    rec.items.reserve(static_cast<std::size_t>(len));
    for (int t = 0; t < len; ++t) {
      int item = chain[(offset + static_cast<std::size_t>(t)) % chain.size()];
      if (spec.noise > 0.0 && rng.uniform() < spec.noise)
        item = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(spec.items)));
      rec.items.push_back("i" + std::to_string(item));
    }
    raw.records.push_back(std::move(rec));
  }
  return raw;
}

void write_synthetic_dataset(const SynthSpec& spec, const std::string& path) {
  const RawCorpus raw = make_synthetic(spec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& rec : raw.records) {
    out << rec.user << '\t';
    for (std::size_t i = 0; i < rec.items.size(); ++i) {
      if (i > 0) out << ',';
      out << rec.items[i];
    }
    out << '\n';
  }
}

}  // namespace mclsr
