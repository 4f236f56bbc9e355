#pragma once

#include "mclsr/corpus.hpp"

#include <cstdint>
#include <string>

namespace mclsr {

/// Synthetic behavior generator: items are partitioned into `pattern_count`
/// latent chains, each user walks a contiguous (cyclic) stretch of one chain,
/// and `noise` is the per-step chance of emitting a random item instead of
/// the chain successor. Shared chains give users co-action structure; chain
/// order gives sequences a learnable transition pattern.
struct SynthSpec {
  int users = 2000;
  int items = 500;
  int pattern_count = 0;  // 0 = one chain per 20 items
  double noise = 0.2;
  std::uint64_t seed = 1;
  int min_len = 8;
  int max_len = 16;
};

RawCorpus make_synthetic(const SynthSpec& spec);

/// Writes the generated corpus in the standard dataset format; bytes are a
/// pure function of the spec.
void write_synthetic_dataset(const SynthSpec& spec, const std::string& path);

}  // namespace mclsr
