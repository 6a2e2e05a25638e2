#pragma once

namespace hoigraph {

/// Keeps freed tensor buffers in the heap instead of returning them to the
/// OS after every pass. Large temporaries otherwise cost a page fault per
/// page on each forward. No-op outside glibc.
void tune_allocator();

}  // namespace hoigraph
