#pragma once

#include <string>

#include "bpfa/gibbs.hpp"
#include "bpfa/variational.hpp"

namespace bpfa {

/// Textual checkpoint container. All floating-point fields are written with
/// 17 significant digits, so a save/load round trip is bit-exact. Chain
/// checkpoints reuse the same container with a different kind tag.
struct Checkpoint {
  enum class Kind { kVariational, kChain };
  Kind kind = Kind::kVariational;
  long iteration = 0;
  std::uint64_t seed = 0;
  GlobalVariationalState state;  // kind == kVariational
  ChainState chain;              // kind == kChain
};

void save_checkpoint(const std::string& path, const GlobalVariationalState& state, long iteration,
                     std::uint64_t seed);
void save_chain_checkpoint(const std::string& path, const ChainState& chain, std::uint64_t seed);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bpfa
