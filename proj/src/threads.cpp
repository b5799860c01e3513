#include "hazelab/threads.hpp"

#include <cblas.h>

#include <cstdlib>
#include <mutex>
#include <string>

namespace hazelab {

int thread_limit() {
    const char* env = std::getenv("HAZELAB_THREADS");
    if (env == nullptr) return 1;
    try {
        const int n = std::stoi(env);
        return n > 0 ? n : 1;
    } catch (const std::exception&) {
        return 1;
    }
}

void ensure_threads_configured() {
    static std::once_flag once;
    std::call_once(once, [] { openblas_set_num_threads(thread_limit()); });
}

}  // namespace hazelab
