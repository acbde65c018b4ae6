#include "gradleak/rng.hpp"

namespace gradleak {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t fnv1a64(const void* data, size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 0xcbf29ce484222325ULL;
    for (size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t derive_seed(uint64_t master, std::string_view label, uint64_t index) {
    uint64_t h = fnv1a64(label.data(), label.size());
    return splitmix64(splitmix64(master ^ h) + index);
}

}  // namespace gradleak
