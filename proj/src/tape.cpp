#include "toat/tape.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "toat/errors.hpp"
#include "toat/kernels.hpp"

namespace toat::ad {

namespace {

void accumulate(Tensor& g, const Tensor& t) {
  double* gp = g.data();
  const double* tp = t.data();
  const std::size_t n = g.numel();
  for (std::size_t i = 0; i < n; ++i) gp[i] += tp[i];
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace

double ordered_sum(std::vector<double> terms) {
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc;
}

NodeId Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&, NodeId)> pull) {
  Node node;
  node.requires_grad = requires_grad;
  if (requires_grad) node.grad = Tensor::zeros(value.shape());
  node.value = std::move(value);
  node.pull = std::move(pull);
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void Tape::check_node(NodeId id, const char* op) const {
  if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
    throw std::logic_error(std::string(op) + ": invalid node id");
}

const Tensor& Tape::grad(NodeId id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) throw std::logic_error("Tape::grad: node does not require gradients");
  return n.grad;
}

NodeId Tape::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

void Tape::backward(NodeId root) {
  check_node(root, "backward");
  Node& r = nodes_[static_cast<std::size_t>(root)];
  require(r.value.numel() == 1, "backward: root must be scalar, got shape " + r.value.shape_str());
  if (!r.requires_grad) return;
  r.grad.at(0) += 1.0;
  for (NodeId id = root; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.requires_grad && n.pull) n.pull(*this, id);
  }
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  check_node(a, "matmul");
  check_node(b, "matmul");
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(),
          "matmul: incompatible shapes " + av.shape_str() + " and " + bv.shape_str());
  const std::size_t n = av.rows(), k = av.cols(), m = bv.cols();
  Tensor out({n, m});
  kernels::mm_nn(av.data(), bv.data(), out.data(), n, k, m);
  if (!any_grad(a, b)) return leaf(std::move(out));
  return push(std::move(out), true, [a, b, n, k, m](Tape& t, NodeId self) {
    const Tensor& gc = t.grad(self);
    if (t.requires_grad(a)) {
      Tensor tmp({n, k});
      kernels::mm_nt(gc.data(), t.value(b).data(), tmp.data(), n, m, k);
      accumulate(t.grad_ref(a), tmp);
    }
    if (t.requires_grad(b)) {
      Tensor tmp({k, m});
      kernels::mm_tn(t.value(a).data(), gc.data(), tmp.data(), n, k, m);
      accumulate(t.grad_ref(b), tmp);
    }
  });
}

NodeId Tape::matmul_nt(NodeId a, NodeId b) {
  check_node(a, "matmul_nt");
  check_node(b, "matmul_nt");
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.cols(),
          "matmul_nt: incompatible shapes " + av.shape_str() + " and " + bv.shape_str());
  const std::size_t n = av.rows(), k = av.cols(), m = bv.rows();
  Tensor out({n, m});
  kernels::mm_nt(av.data(), bv.data(), out.data(), n, k, m);
  if (!any_grad(a, b)) return leaf(std::move(out));
  return push(std::move(out), true, [a, b, n, k, m](Tape& t, NodeId self) {
    const Tensor& gc = t.grad(self);
    if (t.requires_grad(a)) {
      Tensor tmp({n, k});
      kernels::mm_nn(gc.data(), t.value(b).data(), tmp.data(), n, m, k);
      accumulate(t.grad_ref(a), tmp);
    }
    if (t.requires_grad(b)) {
      Tensor tmp({m, k});
      kernels::mm_tn(gc.data(), t.value(a).data(), tmp.data(), n, m, k);
      accumulate(t.grad_ref(b), tmp);
    }
  });
}

NodeId Tape::linear(NodeId x, NodeId w, NodeId b) {
  check_node(x, "linear");
  check_node(w, "linear");
  check_node(b, "linear");
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  require(wv.rank() == 2, "linear: weight must be rank-2, got " + wv.shape_str());
  const std::size_t out_dim = wv.rows(), in_dim = wv.cols();
  require(bv.rank() == 1 && bv.dim(0) == out_dim,
          "linear: bias shape " + bv.shape_str() + " does not match weight " + wv.shape_str());
  const bool vec = xv.rank() == 1;
  const std::size_t rows = vec ? 1 : xv.rows();
  require((vec ? xv.dim(0) : xv.cols()) == in_dim,
          "linear: input shape " + xv.shape_str() + " does not match weight " + wv.shape_str());
  Tensor out(vec ? std::vector<std::size_t>{out_dim} : std::vector<std::size_t>{rows, out_dim});
  kernels::mm_nt(xv.data(), wv.data(), out.data(), rows, in_dim, out_dim);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < out_dim; ++j) out.data()[i * out_dim + j] += bv.at(j);
  if (!any_grad(x, w, b)) return leaf(std::move(out));
  return push(std::move(out), true, [x, w, b, rows, in_dim, out_dim](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    if (t.requires_grad(x)) {
      Tensor tmp(t.value(x).shape());
      kernels::mm_nn(gy.data(), t.value(w).data(), tmp.data(), rows, out_dim, in_dim);
      accumulate(t.grad_ref(x), tmp);
    }
    if (t.requires_grad(w)) {
      Tensor tmp({out_dim, in_dim});
      kernels::mm_tn(gy.data(), t.value(x).data(), tmp.data(), rows, out_dim, in_dim);
      accumulate(t.grad_ref(w), tmp);
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_ref(b);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < out_dim; ++j) gb.at(j) += gy.data()[i * out_dim + j];
    }
  });
}

NodeId Tape::add(NodeId a, NodeId b) {
  check_node(a, "add");
  check_node(b, "add");
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require(av.same_shape(bv), "add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Tensor out(av.shape());
  kernels::add(av.data(), bv.data(), out.data(), av.numel());
  if (!any_grad(a, b)) return leaf(std::move(out));
  return push(std::move(out), true, [a, b](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    if (t.requires_grad(a)) accumulate(t.grad_ref(a), gy);
    if (t.requires_grad(b)) accumulate(t.grad_ref(b), gy);
  });
}

NodeId Tape::mul(NodeId a, NodeId b) {
  check_node(a, "mul");
  check_node(b, "mul");
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  require(av.same_shape(bv), "mul: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Tensor out(av.shape());
  kernels::mul(av.data(), bv.data(), out.data(), av.numel());
  if (!any_grad(a, b)) return leaf(std::move(out));
  return push(std::move(out), true, [a, b](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    const std::size_t n = gy.numel();
    if (t.requires_grad(a)) {
      Tensor& ga = t.grad_ref(a);
      const double* bp = t.value(b).data();
      for (std::size_t i = 0; i < n; ++i) ga.data()[i] += gy.data()[i] * bp[i];
    }
    if (t.requires_grad(b)) {
      Tensor& gb = t.grad_ref(b);
      const double* ap = t.value(a).data();
      for (std::size_t i = 0; i < n; ++i) gb.data()[i] += gy.data()[i] * ap[i];
    }
  });
}

NodeId Tape::scale(NodeId a, double s) {
  check_node(a, "scale");
  const Tensor& av = value(a);
  Tensor out(av.shape());
  kernels::scale(av.data(), s, out.data(), av.numel());
  if (!requires_grad(a)) return leaf(std::move(out));
  return push(std::move(out), true, [a, s](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    kernels::axpy(gy.data(), s, t.grad_ref(a).data(), gy.numel());
  });
}

NodeId Tape::gelu(NodeId a) {
  check_node(a, "gelu");
  const Tensor& av = value(a);
  Tensor out(av.shape());
  kernels::gelu(av.data(), out.data(), av.numel());
  if (!requires_grad(a)) return leaf(std::move(out));
  return push(std::move(out), true, [a](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    kernels::gelu_grad(t.value(a).data(), gy.data(), t.grad_ref(a).data(), gy.numel());
  });
}

NodeId Tape::softmax_rows(NodeId a) {
  check_node(a, "softmax_rows");
  const Tensor& av = value(a);
  require(av.rank() == 2, "softmax_rows: rank-2 expected, got " + av.shape_str());
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out({rows, cols});
  kernels::softmax_rows(av.data(), out.data(), rows, cols);
  if (!requires_grad(a)) return leaf(std::move(out));
  return push(std::move(out), true, [a, rows, cols](Tape& t, NodeId self) {
    kernels::softmax_rows_grad(t.value(self).data(), t.grad(self).data(), t.grad_ref(a).data(), rows, cols);
  });
}

NodeId Tape::masked_softmax(NodeId x, const std::vector<std::uint8_t>& mask) {
  check_node(x, "masked_softmax");
  const Tensor& xv = value(x);
  require(xv.rank() == 1, "masked_softmax: rank-1 expected, got " + xv.shape_str());
  const std::size_t n = xv.dim(0);
  require(mask.size() == n, "masked_softmax: mask length " + std::to_string(mask.size()) +
                                " does not match input shape " + xv.shape_str());
  bool any_present = false;
  double max_val = kMaskFill;
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    any_present = true;
    max_val = std::max(max_val, xv.at(i));
  }
  if (!any_present) throw InputError("masked_softmax: empty topic set (all entries masked)");
  Tensor out({n});
  std::vector<double> exps;
  exps.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    // absent entries are substituted by the mask fill before exponentiation
    const double xi = mask[i] ? xv.at(i) : kMaskFill;
    const double e = std::exp(xi - max_val);
    out.at(i) = e;
    if (mask[i]) exps.push_back(e);
  }
  const double z = ordered_sum(std::move(exps));
  for (std::size_t i = 0; i < n; ++i) out.at(i) = mask[i] ? out.at(i) / z : 0.0;
  if (!requires_grad(x)) return leaf(std::move(out));
  std::vector<std::uint8_t> m = mask;
  return push(std::move(out), true, [x, m = std::move(m), n](Tape& t, NodeId self) {
    const Tensor& y = t.value(self);
    const Tensor& gy = t.grad(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (m[i]) dot += y.at(i) * gy.at(i);
    Tensor& gx = t.grad_ref(x);
    for (std::size_t i = 0; i < n; ++i)
      if (m[i]) gx.at(i) += y.at(i) * (gy.at(i) - dot);
  });
}

NodeId Tape::layer_norm(NodeId x, NodeId gain, NodeId bias, double eps) {
  check_node(x, "layer_norm");
  check_node(gain, "layer_norm");
  check_node(bias, "layer_norm");
  const Tensor& xv = value(x);
  const bool vec = xv.rank() == 1;
  require(vec || xv.rank() == 2, "layer_norm: rank-1 or rank-2 expected, got " + xv.shape_str());
  const std::size_t rows = vec ? 1 : xv.rows();
  const std::size_t cols = vec ? xv.dim(0) : xv.cols();
  const Tensor& gv = value(gain);
  const Tensor& bv = value(bias);
  require(gv.rank() == 1 && gv.dim(0) == cols && bv.rank() == 1 && bv.dim(0) == cols,
          "layer_norm: gain " + gv.shape_str() + " / bias " + bv.shape_str() +
              " do not match the last dimension of " + xv.shape_str());
  Tensor out(xv.shape());
  Tensor mean({rows}), rstd({rows});
  kernels::layer_norm_rows(xv.data(), gv.data(), bv.data(), eps, out.data(), mean.data(), rstd.data(),
                           rows, cols);
  if (!any_grad(x, gain, bias)) return leaf(std::move(out));
  return push(std::move(out), true,
              [x, gain, bias, mean = std::move(mean), rstd = std::move(rstd), rows, cols](Tape& t, NodeId self) {
                const Tensor& gy = t.grad(self);
                const Tensor& xv2 = t.value(x);
                const Tensor& gv2 = t.value(gain);
                Tensor ggain_tmp({cols}), gbias_tmp({cols});
                Tensor gx_local(xv2.shape());
                kernels::layer_norm_rows_grad(xv2.data(), gv2.data(), mean.data(), rstd.data(), gy.data(),
                                              gx_local.data(), ggain_tmp.data(), gbias_tmp.data(), rows, cols);
                if (t.requires_grad(x)) accumulate(t.grad_ref(x), gx_local);
                if (t.requires_grad(gain)) accumulate(t.grad_ref(gain), ggain_tmp);
                if (t.requires_grad(bias)) accumulate(t.grad_ref(bias), gbias_tmp);
              });
}

NodeId Tape::gather_rows(NodeId table, std::vector<std::size_t> ids) {
  check_node(table, "gather_rows");
  const Tensor& tv = value(table);
  require(tv.rank() == 2, "gather_rows: table must be rank-2, got " + tv.shape_str());
  const std::size_t cols = tv.cols();
  for (std::size_t id : ids)
    require(id < tv.rows(), "gather_rows: row index " + std::to_string(id) + " out of range for table " +
                                tv.shape_str());
  Tensor out({ids.size(), cols});
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tv.data() + ids[i] * cols, cols, out.data() + i * cols);
  if (!requires_grad(table)) return leaf(std::move(out));
  return push(std::move(out), true, [table, ids = std::move(ids), cols](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    Tensor& gt = t.grad_ref(table);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      double* dst = gt.data() + ids[i] * cols;
      const double* src = gy.data() + i * cols;
      for (std::size_t j = 0; j < cols; ++j) dst[j] += src[j];
    }
  });
}

NodeId Tape::slice_rows(NodeId a, std::size_t r0, std::size_t r1) {
  check_node(a, "slice_rows");
  const Tensor& av = value(a);
  require(av.rank() == 2 && r0 < r1 && r1 <= av.rows(),
          "slice_rows: invalid range [" + std::to_string(r0) + "," + std::to_string(r1) + ") for " +
              av.shape_str());
  const std::size_t cols = av.cols();
  Tensor out({r1 - r0, cols});
  std::copy_n(av.data() + r0 * cols, (r1 - r0) * cols, out.data());
  if (!requires_grad(a)) return leaf(std::move(out));
  return push(std::move(out), true, [a, r0, cols](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    double* dst = ga.data() + r0 * cols;
    for (std::size_t i = 0; i < gy.numel(); ++i) dst[i] += gy.data()[i];
  });
}

NodeId Tape::slice_cols(NodeId a, std::size_t c0, std::size_t c1) {
  check_node(a, "slice_cols");
  const Tensor& av = value(a);
  require(av.rank() == 2 && c0 < c1 && c1 <= av.cols(),
          "slice_cols: invalid range [" + std::to_string(c0) + "," + std::to_string(c1) + ") for " +
              av.shape_str());
  const std::size_t rows = av.rows(), cols = av.cols(), w = c1 - c0;
  Tensor out({rows, w});
  for (std::size_t i = 0; i < rows; ++i)
    std::copy_n(av.data() + i * cols + c0, w, out.data() + i * w);
  if (!requires_grad(a)) return leaf(std::move(out));
  return push(std::move(out), true, [a, c0, rows, cols, w](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < rows; ++i) {
      double* dst = ga.data() + i * cols + c0;
      const double* src = gy.data() + i * w;
      for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
    }
  });
}

NodeId Tape::concat_cols(const std::vector<NodeId>& parts) {
  require(!parts.empty(), "concat_cols: no parts");
  std::size_t rows = 0, total = 0;
  bool grad = false;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    check_node(parts[p], "concat_cols");
    const Tensor& v = value(parts[p]);
    require(v.rank() == 2, "concat_cols: rank-2 expected, got " + v.shape_str());
    if (p == 0) rows = v.rows();
    require(v.rows() == rows, "concat_cols: row mismatch " + v.shape_str());
    total += v.cols();
    grad = grad || requires_grad(parts[p]);
  }
  Tensor out({rows, total});
  std::size_t off = 0;
  for (NodeId p : parts) {
    const Tensor& v = value(p);
    for (std::size_t i = 0; i < rows; ++i)
      std::copy_n(v.data() + i * v.cols(), v.cols(), out.data() + i * total + off);
    off += v.cols();
  }
  if (!grad) return leaf(std::move(out));
  std::vector<NodeId> ps = parts;
  return push(std::move(out), true, [ps = std::move(ps), rows, total](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    std::size_t off2 = 0;
    for (NodeId p : ps) {
      const std::size_t w = t.value(p).cols();
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_ref(p);
        for (std::size_t i = 0; i < rows; ++i) {
          const double* src = gy.data() + i * total + off2;
          double* dst = gp.data() + i * w;
          for (std::size_t j = 0; j < w; ++j) dst[j] += src[j];
        }
      }
      off2 += w;
    }
  });
}

NodeId Tape::concat_vec(const std::vector<NodeId>& parts) {
  require(!parts.empty(), "concat_vec: no parts");
  std::size_t total = 0;
  bool grad = false;
  for (NodeId p : parts) {
    check_node(p, "concat_vec");
    const Tensor& v = value(p);
    require(v.rank() == 1, "concat_vec: rank-1 expected, got " + v.shape_str());
    total += v.dim(0);
    grad = grad || requires_grad(p);
  }
  Tensor out({total});
  std::size_t off = 0;
  for (NodeId p : parts) {
    const Tensor& v = value(p);
    std::copy_n(v.data(), v.dim(0), out.data() + off);
    off += v.dim(0);
  }
  if (!grad) return leaf(std::move(out));
  std::vector<NodeId> ps = parts;
  return push(std::move(out), true, [ps = std::move(ps)](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    std::size_t off2 = 0;
    for (NodeId p : ps) {
      const std::size_t w = t.value(p).dim(0);
      if (t.requires_grad(p)) {
        Tensor& gp = t.grad_ref(p);
        for (std::size_t j = 0; j < w; ++j) gp.at(j) += gy.at(off2 + j);
      }
      off2 += w;
    }
  });
}

NodeId Tape::take_row(NodeId a, std::size_t r) {
  check_node(a, "take_row");
  const Tensor& av = value(a);
  require(av.rank() == 2 && r < av.rows(),
          "take_row: row " + std::to_string(r) + " out of range for " + av.shape_str());
  const std::size_t cols = av.cols();
  Tensor out({cols});
  std::copy_n(av.data() + r * cols, cols, out.data());
  if (!requires_grad(a)) return leaf(std::move(out));
  return push(std::move(out), true, [a, r, cols](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    double* dst = t.grad_ref(a).data() + r * cols;
    for (std::size_t j = 0; j < cols; ++j) dst[j] += gy.at(j);
  });
}

NodeId Tape::pack_rows(const std::vector<NodeId>& present_rows,
                       const std::vector<std::uint8_t>& mask, std::size_t dim) {
  const std::size_t n = mask.size();
  std::size_t n_present = 0;
  for (std::uint8_t m : mask) n_present += m ? 1 : 0;
  require(present_rows.size() == n_present,
          "pack_rows: " + std::to_string(present_rows.size()) + " rows given for " +
              std::to_string(n_present) + " present slots");
  bool grad = false;
  for (NodeId p : present_rows) {
    check_node(p, "pack_rows");
    const Tensor& v = value(p);
    require(v.rank() == 1 && v.dim(0) == dim, "pack_rows: row shape " + v.shape_str() + " expected rank-1 of " +
                                                  std::to_string(dim));
    grad = grad || requires_grad(p);
  }
  Tensor out({n, dim});
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double* dst = out.data() + i * dim;
    if (mask[i]) {
      std::copy_n(value(present_rows[next]).data(), dim, dst);
      ++next;
    } else {
      for (std::size_t j = 0; j < dim; ++j) dst[j] = kMaskFill;
    }
  }
  if (!grad) return leaf(std::move(out));
  std::vector<NodeId> rows_copy = present_rows;
  std::vector<std::uint8_t> mask_copy = mask;
  return push(std::move(out), true,
              [rows_copy = std::move(rows_copy), mask_copy = std::move(mask_copy), dim](Tape& t, NodeId self) {
                const Tensor& gy = t.grad(self);
                std::size_t next2 = 0;
                for (std::size_t i = 0; i < mask_copy.size(); ++i) {
                  if (!mask_copy[i]) continue;
                  NodeId p = rows_copy[next2++];
                  if (!t.requires_grad(p)) continue;
                  Tensor& gp = t.grad_ref(p);
                  const double* src = gy.data() + i * dim;
                  for (std::size_t j = 0; j < dim; ++j) gp.at(j) += src[j];
                }
              });
}

NodeId Tape::mean_rows(NodeId a) {
  check_node(a, "mean_rows");
  const Tensor& av = value(a);
  require(av.rank() == 2, "mean_rows: rank-2 expected, got " + av.shape_str());
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out({cols});
  kernels::mean_rows(av.data(), out.data(), rows, cols);
  if (!requires_grad(a)) return leaf(std::move(out));
  return push(std::move(out), true, [a, rows, cols](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    const double inv = 1.0 / static_cast<double>(rows);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) ga.data()[i * cols + j] += gy.at(j) * inv;
  });
}

NodeId Tape::masked_mean_rows(NodeId h, const std::vector<std::uint8_t>& mask) {
  check_node(h, "masked_mean_rows");
  const Tensor& hv = value(h);
  require(hv.rank() == 2 && hv.rows() == mask.size(),
          "masked_mean_rows: mask length " + std::to_string(mask.size()) + " does not match " + hv.shape_str());
  std::size_t n_present = 0;
  for (std::uint8_t m : mask) n_present += m ? 1 : 0;
  if (n_present == 0) throw InputError("masked_mean_rows: empty topic set (all entries masked)");
  const std::size_t cols = hv.cols();
  Tensor out({cols});
  const double inv = 1.0 / static_cast<double>(n_present);
  for (std::size_t j = 0; j < cols; ++j) {
    std::vector<double> terms;
    terms.reserve(n_present);
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) terms.push_back(hv.at(i, j));
    out.at(j) = ordered_sum(std::move(terms)) * inv;
  }
  if (!requires_grad(h)) return leaf(std::move(out));
  std::vector<std::uint8_t> m = mask;
  return push(std::move(out), true, [h, m = std::move(m), cols, inv](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    Tensor& gh = t.grad_ref(h);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (!m[i]) continue;
      for (std::size_t j = 0; j < cols; ++j) gh.at(i, j) += gy.at(j) * inv;
    }
  });
}

NodeId Tape::conv1d(NodeId x, NodeId w, NodeId b, std::size_t stride, std::size_t pad) {
  check_node(x, "conv1d");
  check_node(w, "conv1d");
  check_node(b, "conv1d");
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  require(xv.rank() == 2, "conv1d: input must be rank-2 (len x cin), got " + xv.shape_str());
  require(wv.rank() == 3, "conv1d: weight must be rank-3 (cout x cin x k), got " + wv.shape_str());
  const std::size_t len = xv.rows(), cin = xv.cols();
  const std::size_t cout = wv.dim(0), k = wv.dim(2);
  require(wv.dim(1) == cin, "conv1d: weight " + wv.shape_str() + " does not match input channels of " +
                                xv.shape_str());
  require(bv.rank() == 1 && bv.dim(0) == cout, "conv1d: bias shape " + bv.shape_str());
  require(stride > 0, "conv1d: stride must be positive");
  require(len + 2 * pad >= k, "conv1d: input length " + std::to_string(len) + " (+2*" + std::to_string(pad) +
                                  " pad) shorter than kernel " + std::to_string(k));
  const std::size_t lout = (len + 2 * pad - k) / stride + 1;
  Tensor out({lout, cout});
  kernels::conv1d(xv.data(), wv.data(), bv.data(), out.data(), len, cin, cout, k, stride, pad, lout);
  if (!any_grad(x, w, b)) return leaf(std::move(out));
  return push(std::move(out), true, [x, w, b, len, cin, cout, k, stride, pad, lout](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    if (t.requires_grad(x)) {
      kernels::conv1d_grad_input(gy.data(), t.value(w).data(), t.grad_ref(x).data(), len, cin, cout, k,
                                 stride, pad, lout);
    }
    if (t.requires_grad(w) || t.requires_grad(b)) {
      Tensor gw_tmp({cout, cin, k});
      Tensor gb_tmp({cout});
      kernels::conv1d_grad_weight(t.value(x).data(), gy.data(), gw_tmp.data(), gb_tmp.data(), len, cin, cout,
                                  k, stride, pad, lout);
      if (t.requires_grad(w)) accumulate(t.grad_ref(w), gw_tmp);
      if (t.requires_grad(b)) accumulate(t.grad_ref(b), gb_tmp);
    }
  });
}

NodeId Tape::affine_rows(NodeId h, NodeId w, NodeId b) {
  check_node(h, "affine_rows");
  check_node(w, "affine_rows");
  check_node(b, "affine_rows");
  const Tensor& hv = value(h);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  require(hv.rank() == 2, "affine_rows: rank-2 expected, got " + hv.shape_str());
  require(wv.rank() == 1 && wv.dim(0) == hv.cols(),
          "affine_rows: weight " + wv.shape_str() + " does not match " + hv.shape_str());
  require(bv.rank() == 1 && bv.dim(0) == 1, "affine_rows: bias must have shape [1], got " + bv.shape_str());
  const std::size_t n = hv.rows(), d = hv.cols();
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += wv.at(j) * hv.at(i, j);
    out.at(i) = acc + bv.at(0);
  }
  if (!any_grad(h, w, b)) return leaf(std::move(out));
  return push(std::move(out), true, [h, w, b, n, d](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    const Tensor& hv2 = t.value(h);
    const Tensor& wv2 = t.value(w);
    if (t.requires_grad(h)) {
      Tensor& gh = t.grad_ref(h);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gh.at(i, j) += gy.at(i) * wv2.at(j);
    }
    if (t.requires_grad(w)) {
      Tensor& gw = t.grad_ref(w);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) gw.at(j) += gy.at(i) * hv2.at(i, j);
    }
    if (t.requires_grad(b)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += gy.at(i);
      t.grad_ref(b).at(0) += acc;
    }
  });
}

NodeId Tape::threshold(NodeId x, double alpha) {
  check_node(x, "threshold");
  const Tensor& xv = value(x);
  require(alpha >= 0.0, "threshold: alpha must be nonnegative");
  Tensor out(xv.shape());
  std::vector<std::uint8_t> retained(xv.numel());
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    retained[i] = xv.at(i) >= alpha ? 1 : 0;
    out.at(i) = retained[i] ? xv.at(i) : 0.0;
  }
  if (!requires_grad(x)) return leaf(std::move(out));
  return push(std::move(out), true, [x, retained = std::move(retained)](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.grad_ref(x);
    for (std::size_t i = 0; i < retained.size(); ++i)
      if (retained[i]) gx.at(i) += gy.at(i);
  });
}

NodeId Tape::weighted_row_sum(NodeId weights, NodeId h, const std::vector<std::uint8_t>& mask) {
  check_node(weights, "weighted_row_sum");
  check_node(h, "weighted_row_sum");
  const Tensor& wv = value(weights);
  const Tensor& hv = value(h);
  require(wv.rank() == 1 && hv.rank() == 2 && wv.dim(0) == hv.rows(),
          "weighted_row_sum: weights " + wv.shape_str() + " do not match rows of " + hv.shape_str());
  require(mask.size() == wv.dim(0), "weighted_row_sum: mask length mismatch");
  const std::size_t n = hv.rows(), d = hv.cols();
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i] && wv.at(i) != 0.0) {
      throw std::logic_error("weighted_row_sum: nonzero weight " + std::to_string(wv.at(i)) +
                             " on masked row " + std::to_string(i) + " (masking bug)");
    }
  }
  Tensor out({d});
  for (std::size_t j = 0; j < d; ++j) {
    std::vector<double> terms;
    for (std::size_t i = 0; i < n; ++i) {
      if (!mask[i] || wv.at(i) == 0.0) continue;
      terms.push_back(wv.at(i) * hv.at(i, j));
    }
    out.at(j) = ordered_sum(std::move(terms));
  }
  if (!any_grad(weights, h)) return leaf(std::move(out));
  std::vector<std::uint8_t> m = mask;
  return push(std::move(out), true, [weights, h, m = std::move(m), n, d](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    const Tensor& wv2 = t.value(weights);
    const Tensor& hv2 = t.value(h);
    if (t.requires_grad(h)) {
      Tensor& gh = t.grad_ref(h);
      for (std::size_t i = 0; i < n; ++i) {
        if (!m[i]) continue;
        for (std::size_t j = 0; j < d; ++j) gh.at(i, j) += wv2.at(i) * gy.at(j);
      }
    }
    if (t.requires_grad(weights)) {
      Tensor& gw = t.grad_ref(weights);
      for (std::size_t i = 0; i < n; ++i) {
        if (!m[i]) continue;
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) acc += hv2.at(i, j) * gy.at(j);
        gw.at(i) += acc;
      }
    }
  });
}

NodeId Tape::dropout(NodeId a, double rate, Rng& rng, bool train) {
  check_node(a, "dropout");
  require(rate >= 0.0 && rate < 1.0, "dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (!train || rate == 0.0) return a;
  const Tensor& av = value(a);
  const double keep = 1.0 - rate;
  std::vector<std::uint8_t> kept(av.numel());
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) {
    kept[i] = rng.uniform() >= rate ? 1 : 0;
    out.at(i) = kept[i] ? av.at(i) / keep : 0.0;
  }
  if (!requires_grad(a)) return leaf(std::move(out));
  return push(std::move(out), true, [a, kept = std::move(kept), keep](Tape& t, NodeId self) {
    const Tensor& gy = t.grad(self);
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < kept.size(); ++i)
      if (kept[i]) ga.at(i) += gy.at(i) / keep;
  });
}

NodeId Tape::cross_entropy(NodeId logits, int label) {
  check_node(logits, "cross_entropy");
  const Tensor& lv = value(logits);
  require(lv.rank() == 1 && lv.dim(0) >= 2, "cross_entropy: logits must be rank-1 with >= 2 classes, got " +
                                                lv.shape_str());
  require(label >= 0 && static_cast<std::size_t>(label) < lv.dim(0),
          "cross_entropy: label " + std::to_string(label) + " out of range for " + lv.shape_str());
  const std::size_t c = lv.dim(0);
  double m = lv.at(0);
  for (std::size_t i = 1; i < c; ++i) m = std::max(m, lv.at(i));
  double z = 0.0;
  for (std::size_t i = 0; i < c; ++i) z += std::exp(lv.at(i) - m);
  const double lse = m + std::log(z);
  Tensor out = Tensor::scalar(lse - lv.at(static_cast<std::size_t>(label)));
  if (!requires_grad(logits)) return leaf(std::move(out));
  return push(std::move(out), true, [logits, label, c, lse](Tape& t, NodeId self) {
    const double g = t.grad(self).at(0);
    const Tensor& lv2 = t.value(logits);
    Tensor& gl = t.grad_ref(logits);
    for (std::size_t i = 0; i < c; ++i) {
      const double p = std::exp(lv2.at(i) - lse);
      gl.at(i) += g * (p - (static_cast<int>(i) == label ? 1.0 : 0.0));
    }
  });
}

NodeId Tape::sum(NodeId a) {
  check_node(a, "sum");
  const Tensor& av = value(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < av.numel(); ++i) acc += av.at(i);
  Tensor out = Tensor::scalar(acc);
  if (!requires_grad(a)) return leaf(std::move(out));
  return push(std::move(out), true, [a](Tape& t, NodeId self) {
    const double g = t.grad(self).at(0);
    Tensor& ga = t.grad_ref(a);
    for (std::size_t i = 0; i < ga.numel(); ++i) ga.at(i) += g;
  });
}

}  // namespace toat::ad
