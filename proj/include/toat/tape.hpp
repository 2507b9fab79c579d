#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <vector>

#include "toat/rng.hpp"
#include "toat/tensor.hpp"

namespace toat::ad {

using NodeId = std::int32_t;

// Sentinel fill written into feature rows of absent topics; softmax assigns
// them zero weight.
inline constexpr double kMaskFill = -1e9;

// Reverse-mode tape over dense tensors. Ops append nodes in forward order;
// backward() replays the record in reverse, visiting each node exactly once
// and accumulating into leaf gradients. Forward values are never mutated by
// the backward pass. One tape serves one forward/backward pair.
class Tape {
 public:
  NodeId leaf(Tensor value, bool requires_grad = false);

  // c = a * b, rank-2 both
  NodeId matmul(NodeId a, NodeId b);
  // c = a * b^T
  NodeId matmul_nt(NodeId a, NodeId b);
  // y = x * w^T + b; x rank-1 (in) or rank-2 (L x in); w (out x in); b (out)
  NodeId linear(NodeId x, NodeId w, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId gelu(NodeId a);
  NodeId softmax_rows(NodeId a);
  // vector softmax restricted to unmasked entries; masked inputs are
  // replaced by kMaskFill before exponentiation and the corresponding
  // outputs are exactly zero. The normalizer is accumulated in value order,
  // which makes the result invariant under joint permutation of entries.
  NodeId masked_softmax(NodeId x, const std::vector<std::uint8_t>& mask);
  // per-row normalization; x rank-1 or rank-2; gain/bias match last dim
  NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);
  NodeId gather_rows(NodeId table, std::vector<std::size_t> ids);
  NodeId slice_rows(NodeId a, std::size_t r0, std::size_t r1);
  NodeId slice_cols(NodeId a, std::size_t c0, std::size_t c1);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  NodeId concat_vec(const std::vector<NodeId>& parts);
  NodeId take_row(NodeId a, std::size_t r);
  // rows: one rank-1 node per present topic in index order; absent rows are
  // filled with kMaskFill and carry no gradient
  NodeId pack_rows(const std::vector<NodeId>& present_rows,
                   const std::vector<std::uint8_t>& mask, std::size_t dim);
  NodeId mean_rows(NodeId a);
  // uniform mean over present rows (value-ordered accumulation)
  NodeId masked_mean_rows(NodeId h, const std::vector<std::uint8_t>& mask);
  NodeId conv1d(NodeId x, NodeId w, NodeId b, std::size_t stride, std::size_t pad);
  // g_i = dot(w, H_i) + b; H (N x D), w rank-1 (D), b rank-1 (1)
  NodeId affine_rows(NodeId h, NodeId w, NodeId b);
  // y_i = x_i if x_i >= alpha else 0; gradient passes only through retained entries
  NodeId threshold(NodeId x, double alpha);
  // h_d = sum_i w_i * H[i,d] over present rows, accumulated in value order;
  // throws logic_error if a masked row carries a nonzero weight
  NodeId weighted_row_sum(NodeId weights, NodeId h, const std::vector<std::uint8_t>& mask);
  // inverted dropout; identity (and no node) when !train or rate == 0
  NodeId dropout(NodeId a, double rate, Rng& rng, bool train);
  // softmax + NLL over a 2-logit vector, log-sum-exp stabilized
  NodeId cross_entropy(NodeId logits, int label);
  NodeId sum(NodeId a);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& grad(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // root must be scalar (numel 1); seeds d root / d root = 1
  void backward(NodeId root);

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated only when requires_grad
    std::function<void(Tape&, NodeId)> pull;
    bool requires_grad = false;
  };

  NodeId push(Tensor value, bool requires_grad, std::function<void(Tape&, NodeId)> pull);
  Tensor& grad_ref(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool any_grad(NodeId a) const { return requires_grad(a); }
  bool any_grad(NodeId a, NodeId b) const { return requires_grad(a) || requires_grad(b); }
  bool any_grad(NodeId a, NodeId b, NodeId c) const {
    return requires_grad(a) || requires_grad(b) || requires_grad(c);
  }
  void check_node(NodeId id, const char* op) const;

  // deque keeps value()/grad() references stable while ops are appended
  std::deque<Node> nodes_;
};

// Sum of the given values accumulated in ascending value order; the result
// depends only on the multiset of inputs, not on their order.
double ordered_sum(std::vector<double> terms);

}  // namespace toat::ad
