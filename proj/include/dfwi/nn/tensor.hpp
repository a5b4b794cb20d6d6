#pragma once

#include <cstddef>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

// The network sources are compiled twice: float32 for training/inference and
// float64 for finite-difference gradient checks.  The inline namespace keeps
// the two builds link-distinct.
#ifdef DFWI_NN_DOUBLE
#define DFWI_NN_ABI f64
#else
#define DFWI_NN_ABI f32
#endif

namespace dfwi::nn {
inline namespace DFWI_NN_ABI {

#ifdef DFWI_NN_DOUBLE
using Real = double;
#else
using Real = float;
#endif

class NnError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Cache-line aligned storage. Vectorized kernels peel iterations up to the
/// first aligned element, so a fixed base alignment keeps results independent
/// of where the allocator happened to place a buffer.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  template <class U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
    return true;
  }
};

using Buffer = std::vector<Real, AlignedAllocator<Real>>;

/// NCHW shape. Vectors are (n, features, 1, 1).
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

struct Tensor {
  Shape shape;
  Buffer v;

  Tensor() = default;
  explicit Tensor(Shape s, Real fill = Real(0)) : shape(s), v(s.numel(), fill) {}
  Tensor(Shape s, const std::vector<Real>& values);
  Tensor(Shape s, Buffer values);

  std::size_t numel() const { return v.size(); }
  Real* data() { return v.data(); }
  const Real* data() const { return v.data(); }
  Real& at(int n, int c, int y, int x) {
    return v[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + y) * shape.w + x];
  }
  Real at(int n, int c, int y, int x) const {
    return v[((static_cast<std::size_t>(n) * shape.c + c) * shape.h + y) * shape.w + x];
  }
};

/// Keeps freed activation buffers in the process heap so repeated passes do not
/// re-fault fresh pages. Idempotent; a no-op outside glibc.
void retain_heap_memory();

}  // namespace DFWI_NN_ABI
}  // namespace dfwi::nn
