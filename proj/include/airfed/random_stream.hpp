#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <random>

namespace airfed {

// One experiment seed fans out into independent named substreams so that, e.g.,
// drawing more channel realizations never shifts the minibatch sequence.
// Engines are created lazily and owned here; same seed => same streams.
class RandomStream {
 public:
  enum class Sub : std::uint32_t {
    data = 1,
    channels = 2,
    noise = 3,
    minibatch = 4,
    quantize = 5,
  };

  explicit RandomStream(std::uint64_t seed) : seed_(seed) {
    for (auto& e : engines_) e = nullptr;
  }
  RandomStream(const RandomStream&) = delete;
  RandomStream& operator=(const RandomStream&) = delete;

  std::uint64_t seed() const { return seed_; }

  std::mt19937_64& get(Sub which) {
    auto idx = static_cast<std::size_t>(which) - 1;
    if (!engines_[idx]) {
      std::seed_seq seq{static_cast<std::uint32_t>(seed_ & 0xffffffffu),
                        static_cast<std::uint32_t>(seed_ >> 32),
                        static_cast<std::uint32_t>(which)};
      engines_[idx] = std::make_unique<std::mt19937_64>(seq);
    }
    return *engines_[idx];
  }

 private:
  std::uint64_t seed_;
  std::array<std::unique_ptr<std::mt19937_64>, 5> engines_;
};

}  // namespace airfed
