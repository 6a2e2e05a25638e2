#include "hoigraph/runtime.hpp"

#include <cstdlib>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace hoigraph {

void tune_allocator() {
#if defined(__GLIBC__)
  // glibc rejects mmap thresholds above 32 MiB.
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace hoigraph
