#pragma once

namespace rfadv {

/// Keeps freed heap memory mapped so per-batch tensor allocations reuse
/// already-faulted pages. Training allocates and frees the same large
/// buffers every step; without this, most of the step time goes to page
/// faults. No-op outside glibc. Call once at program start.
void tune_allocator();

}  // namespace rfadv
