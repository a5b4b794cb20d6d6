#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dfwi/nn/tensor.hpp"

namespace dfwi::nn {
inline namespace DFWI_NN_ABI {

/// Flat parameter buffer carved into named segments, with a parallel gradient buffer.
class ParamStore {
 public:
  struct Segment {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    std::size_t size = 0;
  };

  int add(const std::string& name, Shape shape, Real fill = Real(0));
  int find(const std::string& name) const;  // -1 when absent
  const Segment& segment(int i) const { return segments_.at(i); }
  const std::vector<Segment>& segments() const { return segments_; }

  std::span<Real> values(int i) { return {values_.data() + segments_[i].offset, segments_[i].size}; }
  std::span<const Real> values(int i) const { return {values_.data() + segments_[i].offset, segments_[i].size}; }
  std::span<Real> grads(int i) { return {grads_.data() + segments_[i].offset, segments_[i].size}; }

  std::vector<Real>& flat_values() { return values_; }
  const std::vector<Real>& flat_values() const { return values_; }
  std::vector<Real>& flat_grads() { return grads_; }
  const std::vector<Real>& flat_grads() const { return grads_; }

  std::size_t count() const { return values_.size(); }
  void zero_grad();

 private:
  std::vector<Segment> segments_;
  std::vector<Real> values_;
  std::vector<Real> grads_;
};

/// Reverse-mode tape. Nodes are appended in evaluation order; backward walks
/// them in reverse, so any op sequence recorded here is differentiable.
class Tape {
 public:
  using Id = int;
  using Backward = std::function<void(Tape&, Id)>;

  Id constant(Tensor t);
  /// Leaf whose gradient is kept (inputs under gradient check).
  Id input(Tensor t);
  Id parameter(ParamStore& store, int segment);

  Id push(Tensor value, std::vector<Id> inputs, Backward backward);

  const Tensor& value(Id id) const { return nodes_.at(id).value; }
  const Tensor& grad(Id id) const { return nodes_.at(id).grad; }
  bool needs_grad(Id id) const { return nodes_.at(id).needs_grad; }
  const std::vector<Id>& inputs(Id id) const { return nodes_.at(id).inputs; }
  /// Gradient buffer of a node, allocated on first use.
  Tensor& grad_buffer(Id id);

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }

  /// Seeds d(out) = upstream, propagates, and accumulates into parameter stores.
  void backward(Id out, const Tensor& upstream);
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<Id> inputs;
    Backward backward;
    bool needs_grad = false;
    ParamStore* store = nullptr;
    int segment = -1;
  };
  std::vector<Node> nodes_;
};

// Ops. Shapes are NCHW; "vector" tensors are (N, F, 1, 1).

Tape::Id conv2d(Tape& t, Tape::Id x, Tape::Id weight, Tape::Id bias, int stride, int pad);
Tape::Id group_norm(Tape& t, Tape::Id x, Tape::Id gamma, Tape::Id beta, int groups, Real eps = Real(1e-5));
Tape::Id silu(Tape& t, Tape::Id x);
Tape::Id add(Tape& t, Tape::Id a, Tape::Id b);
Tape::Id concat_channels(Tape& t, Tape::Id a, Tape::Id b);
Tape::Id upsample_nearest2x(Tape& t, Tape::Id x);
/// x: (N, in, 1, 1), weight: (out, in, 1, 1), bias: (out, 1, 1, 1)
Tape::Id linear(Tape& t, Tape::Id x, Tape::Id weight, Tape::Id bias);
/// x: (N, C, H, W) plus per-channel e: (N, C, 1, 1)
Tape::Id add_channel_bias(Tape& t, Tape::Id x, Tape::Id e);
/// mean((a - target)^2) as a (1,1,1,1) tensor.
Tape::Id mse(Tape& t, Tape::Id a, Tape::Id target);
/// sum(a * weights) as a (1,1,1,1) tensor; weights are constant.
Tape::Id weighted_sum(Tape& t, Tape::Id a, const Tensor& weights);

/// Sinusoidal embedding of integer steps, (N, dim, 1, 1).
Tensor timestep_embedding(std::span<const int> steps, int dim);

}  // namespace DFWI_NN_ABI
}  // namespace dfwi::nn
