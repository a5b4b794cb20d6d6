#include "dfwi/nn/tensor.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dfwi::nn {
inline namespace DFWI_NN_ABI {

std::string Shape::str() const {
  return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) + "]";
}

Tensor::Tensor(Shape s, Buffer values) : shape(s), v(std::move(values)) {
  if (v.size() != shape.numel()) throw NnError("tensor: " + std::to_string(v.size()) + " values for shape " + shape.str());
}

Tensor::Tensor(Shape s, const std::vector<Real>& values) : Tensor(s, Buffer(values.begin(), values.end())) {}

void retain_heap_memory() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)done;
#endif
}

}  // namespace DFWI_NN_ABI
}  // namespace dfwi::nn
