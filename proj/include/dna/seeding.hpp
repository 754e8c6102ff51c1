#pragma once

#include <cstdint>
#include <initializer_list>

namespace dna {

// SplitMix64 finalizer; used to derive independent sub-stream seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t s = mix64(base);
    for (auto p : parts) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ull));
    return s;
}

}  // namespace dna
