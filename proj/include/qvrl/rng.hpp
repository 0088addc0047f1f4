#pragma once

#include <cstdint>
#include <random>

namespace qvrl {

/// Deterministic random stream identified by (master_seed, stream_index).
///
/// Streams with the same identity produce identical draw sequences. Distinct
/// indices are seeded through a SplitMix64 mix of both fields, so sibling
/// streams are decorrelated. `substream(i)` derives a child family, which is
/// how replications, paths and sweep cells get their own streams regardless
/// of which worker runs them.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_index);

  std::uint64_t master_seed() const noexcept { return master_seed_; }
  std::uint64_t stream_index() const noexcept { return stream_index_; }

  /// Child stream keyed on this stream's identity and `index`.
  RngStream substream(std::uint64_t index) const;

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_index_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace qvrl
