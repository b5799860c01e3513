#pragma once

namespace hazelab {

// Thread cap for internal parallelism: HAZELAB_THREADS if set to a positive
// integer, otherwise 1.
int thread_limit();

// Applies thread_limit() to the BLAS backend; idempotent and cheap after the
// first call.
void ensure_threads_configured();

}  // namespace hazelab
