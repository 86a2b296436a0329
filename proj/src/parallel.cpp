#include "isect/parallel.hpp"

#include <cstdlib>
#include <string>

namespace isect {

std::size_t default_thread_count() {
    if (const char* env = std::getenv("INTERSECT_GP_THREADS")) {
        try {
            const long n = std::stol(env);
            if (n > 0) return static_cast<std::size_t>(n);
        } catch (const std::exception&) {
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace isect
