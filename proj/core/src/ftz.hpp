#pragma once

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace fcnpose::detail {

/// Flush-to-zero and denormals-are-zero on the calling thread for the guard's lifetime.
class FlushDenormals {
 public:
#if defined(__SSE2__)
  FlushDenormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }
  ~FlushDenormals() { _mm_setcsr(saved_); }
  FlushDenormals(const FlushDenormals&) = delete;
  FlushDenormals& operator=(const FlushDenormals&) = delete;

 private:
  unsigned saved_;
#endif
};

}  // namespace fcnpose::detail
