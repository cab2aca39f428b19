#include "mhdd/rng.hpp"

namespace mhdd {

std::uint64_t splitmix64::next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    splitmix64 g(master ^ (index * 0xD1B54A32D192ED03ULL));
    g.next();
    return g.next();
}

}  // namespace mhdd
