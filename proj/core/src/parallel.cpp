#include "emaxbr/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>

namespace emaxbr {

std::size_t resolve_threads(std::size_t requested) {
    std::size_t n = requested;
    if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("EMAXBR_THREADS")) {
        std::size_t cap = 0;
        const auto [ptr, ec] = std::from_chars(env, env + std::strlen(env), cap);
        if (ec == std::errc() && cap > 0) n = std::min(n, cap);
    }
    return n;
}

}  // namespace emaxbr
