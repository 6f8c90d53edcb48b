// latrescore/tensor.hpp

// Copyright 2026 The latrescore Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Dense f64 tensors with tape-based reverse-mode differentiation, the Adam
// optimizer, and a finite-difference gradient checker. Deterministic: ops
// run sequentially with fixed summation order, so identical seeds and
// inputs give bit-identical results on a platform.

#ifndef LATRESCORE_TENSOR_HPP_
#define LATRESCORE_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "latrescore/error.hpp"
#include "latrescore/rng.hpp"

namespace latrescore {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape &shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const Shape &shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0)
      : shape(std::move(s)),
        data(static_cast<size_t>(shape_numel(shape)), fill) {}
  static Tensor scalar(double v) {
    Tensor t{Shape{}};
    t.data[0] = v;
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  double &operator[](int64_t i) { return data[i]; }
  double operator[](int64_t i) const { return data[i]; }
  double item() const {
    if (numel() != 1) throw ShapeMismatchError("item() needs a scalar");
    return data[0];
  }

  bool operator==(const Tensor &o) const {
    return shape == o.shape && data == o.data;
  }
};

inline Tensor randn(const Shape &shape, Rng &rng, double stddev = 1.0) {
  Tensor t(shape);
  for (auto &v : t.data) v = rng.gaussian() * stddev;
  return t;
}

namespace tdetail {

inline Shape broadcast_shape(const Shape &a, const Shape &b) {
  size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (size_t i = 0; i < rank; ++i) {
    int64_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    int64_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeMismatchError("cannot broadcast " + shape_str(a) + " with " +
                               shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Element strides of `shape` right-aligned into rank(out), 0 on broadcast
// dims.
inline std::vector<int64_t> broadcast_strides(const Shape &shape,
                                              const Shape &out) {
  std::vector<int64_t> strides(out.size(), 0);
  int64_t acc = 1;
  for (size_t i = 0; i < shape.size(); ++i) {
    size_t pos = shape.size() - 1 - i;
    size_t out_pos = out.size() - 1 - i;
    strides[out_pos] = shape[pos] == 1 ? 0 : acc;
    acc *= shape[pos];
  }
  return strides;
}

// Odometer loop over `out_shape`, tracking element offsets into two
// broadcast operands.
template <typename F>
void broadcast_loop(const Shape &out_shape, const std::vector<int64_t> &sa,
                    const std::vector<int64_t> &sb, F &&body) {
  int rank = static_cast<int>(out_shape.size());
  std::vector<int64_t> idx(rank, 0);
  int64_t total = shape_numel(out_shape);
  int64_t oa = 0, ob = 0;
  for (int64_t i = 0; i < total; ++i) {
    body(i, oa, ob);
    for (int d = rank - 1; d >= 0; --d) {
      idx[d]++;
      oa += sa[d];
      ob += sb[d];
      if (idx[d] < out_shape[d]) break;
      oa -= sa[d] * out_shape[d];
      ob -= sb[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}

// C[m,n] += A[m,k] * B[k,n]
inline void matmul_acc(const double *a, const double *b, double *c, int64_t m,
                       int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double *arow = a + i * k;
    double *crow = c + i * n;
    for (int64_t l = 0; l < k; ++l) {
      double av = arow[l];
      if (av == 0.0) continue;
      const double *brow = b + l * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,k] += A[m,n] * B^T where B is [k,n]
inline void matmul_nt_acc(const double *a, const double *b, double *c,
                          int64_t m, int64_t n, int64_t k) {
  for (int64_t i = 0; i < m; ++i) {
    const double *arow = a + i * n;
    double *crow = c + i * k;
    for (int64_t l = 0; l < k; ++l) {
      const double *brow = b + l * n;
      double acc = 0.0;
      for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[l] += acc;
    }
  }
}

// C[k,n] += A^T * B where A is [m,k], B is [m,n]
inline void matmul_tn_acc(const double *a, const double *b, double *c,
                          int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double *arow = a + i * k;
    const double *brow = b + i * n;
    for (int64_t l = 0; l < k; ++l) {
      double av = arow[l];
      if (av == 0.0) continue;
      double *crow = c + l * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline double sigmoid_stable(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace tdetail

// Handle to a node on a Tape.
struct Value {
  int32_t node = -1;
};

// Records one forward pass eagerly; backward() replays it in reverse
// creation order (a topological order by construction), visiting each op
// once and accumulating gradients additively into shared parents.
class Tape {
  struct Node {
    Tensor value;
    Tensor grad;
    bool grad_alloc = false;
    bool touched = false;
    bool requires_grad = false;
    std::function<void(Tape &)> backward_fn;
  };

 public:
  explicit Tape(bool debug_checks = false) : debug_checks_(debug_checks) {}

  Value input(Tensor v, bool requires_grad = false) {
    return push(std::move(v), requires_grad, {});
  }

  const Tensor &value(Value v) const { return node(v).value; }

  // Gradient of the last backward() target w.r.t. `v` (zeros if untouched).
  Tensor grad(Value v) const {
    const Node &n = node(v);
    if (!n.grad_alloc) return Tensor(n.value.shape);
    return n.grad;
  }

  void backward(Value loss) {
    if (loss.node < 0 || loss.node >= static_cast<int32_t>(nodes_.size())) {
      throw DisconnectedLossError("loss is not on this tape");
    }
    Node &ln = nodes_[loss.node];
    if (ln.value.numel() != 1) {
      throw ShapeMismatchError("backward target must be a scalar");
    }
    if (!ln.requires_grad) {
      throw DisconnectedLossError(
          "loss does not depend on any requires_grad tensor");
    }
    grad_ref(loss.node)[0] = 1.0;
    ln.touched = true;
    for (int32_t i = loss.node; i >= 0; --i) {
      Node &n = nodes_[i];
      if (!n.touched || !n.requires_grad || !n.backward_fn) continue;
      n.backward_fn(*this);
    }
  }

  // --- elementwise / structural ops ---

  Value add(Value a, Value b) { return binary_op(a, b, /*is_mul=*/false); }
  Value mul(Value a, Value b) { return binary_op(a, b, /*is_mul=*/true); }

  Value scale(Value a, double c) {
    Tensor out = value(a);
    for (auto &v : out.data) v *= c;
    Value r = push(std::move(out), node(a).requires_grad, [this, a, c](Tape &) {
      Value self = last_value_;
      accumulate(a, [&](Tensor &g) {
        const Tensor &go = nodes_[self.node].grad;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += c * go[i];
      });
    });
    return r;
  }

  Value reshape(Value a, Shape new_shape) {
    const Tensor &in = value(a);
    if (shape_numel(new_shape) != in.numel()) {
      throw ShapeMismatchError("reshape " + shape_str(in.shape) + " -> " +
                               shape_str(new_shape));
    }
    Tensor out = in;
    out.shape = std::move(new_shape);
    return push(std::move(out), node(a).requires_grad, [this, a](Tape &) {
      Value self = last_value_;
      accumulate(a, [&](Tensor &g) {
        const Tensor &go = nodes_[self.node].grad;
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += go[i];
      });
    });
  }

  Value transpose(Value a, std::vector<int> perm) {
    const Tensor &in = value(a);
    int rank = static_cast<int>(in.shape.size());
    if (static_cast<int>(perm.size()) != rank) {
      throw ShapeMismatchError("transpose perm rank mismatch");
    }
    Shape out_shape(rank);
    for (int i = 0; i < rank; ++i) out_shape[i] = in.shape[perm[i]];
    Tensor out(out_shape);
    permute_copy(in, perm, out);
    std::vector<int> inv(rank);
    for (int i = 0; i < rank; ++i) inv[perm[i]] = i;
    return push(std::move(out), node(a).requires_grad,
                [this, a, inv](Tape &) {
                  Value self = last_value_;
                  accumulate(a, [&](Tensor &g) {
                    const Tensor &go = nodes_[self.node].grad;
                    Tensor tg(g.shape);
                    permute_copy(go, inv, tg);
                    for (int64_t i = 0; i < g.numel(); ++i) g[i] += tg[i];
                  });
                });
  }

  Value concat(const std::vector<Value> &parts, int axis) {
    if (parts.empty()) throw ShapeMismatchError("concat of nothing");
    Shape base = value(parts[0]).shape;
    int rank = static_cast<int>(base.size());
    if (axis < 0 || axis >= rank) throw ShapeMismatchError("concat axis");
    int64_t total_axis = 0;
    bool rg = false;
    for (Value p : parts) {
      const Shape &s = value(p).shape;
      if (s.size() != base.size()) throw ShapeMismatchError("concat ranks");
      for (int d = 0; d < rank; ++d) {
        if (d != axis && s[d] != base[d]) {
          throw ShapeMismatchError("concat shapes differ off-axis");
        }
      }
      total_axis += s[axis];
      rg = rg || node(p).requires_grad;
    }
    Shape out_shape = base;
    out_shape[axis] = total_axis;
    Tensor out(out_shape);
    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= base[d];
    for (int d = axis + 1; d < rank; ++d) inner *= base[d];
    int64_t offset = 0;
    std::vector<int64_t> part_sizes;
    for (Value p : parts) {
      const Tensor &t = value(p);
      int64_t block = t.shape[axis] * inner;
      part_sizes.push_back(t.shape[axis]);
      for (int64_t o = 0; o < outer; ++o) {
        std::copy(t.data.begin() + o * block, t.data.begin() + (o + 1) * block,
                  out.data.begin() + o * total_axis * inner + offset);
      }
      offset += block;
    }
    std::vector<Value> parts_copy = parts;
    return push(std::move(out), rg,
                [this, parts_copy, part_sizes, outer, inner,
                 total_axis](Tape &) {
                  Value self = last_value_;
                  const Tensor &go = nodes_[self.node].grad;
                  int64_t offset = 0;
                  for (size_t pi = 0; pi < parts_copy.size(); ++pi) {
                    int64_t block = part_sizes[pi] * inner;
                    int64_t off = offset;
                    accumulate(parts_copy[pi], [&](Tensor &g) {
                      for (int64_t o = 0; o < outer; ++o) {
                        const double *src =
                            go.data.data() + o * total_axis * inner + off;
                        double *dst = g.data.data() + o * block;
                        for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
                      }
                    });
                    offset += block;
                  }
                });
  }

  // --- linear algebra ---

  // Batched matmul over the last two dims; leading dims broadcast.
  Value matmul(Value a, Value b) {
    const Tensor &ta = value(a), &tb = value(b);
    if (ta.shape.size() < 2 || tb.shape.size() < 2) {
      throw ShapeMismatchError("matmul needs rank >= 2");
    }
    int64_t m = ta.shape[ta.shape.size() - 2];
    int64_t k = ta.shape[ta.shape.size() - 1];
    int64_t k2 = tb.shape[tb.shape.size() - 2];
    int64_t n = tb.shape[tb.shape.size() - 1];
    if (k != k2) {
      throw ShapeMismatchError("matmul inner dims: " + shape_str(ta.shape) +
                               " x " + shape_str(tb.shape));
    }
    Shape lead_a(ta.shape.begin(), ta.shape.end() - 2);
    Shape lead_b(tb.shape.begin(), tb.shape.end() - 2);
    Shape lead = tdetail::broadcast_shape(lead_a, lead_b);
    auto sa = tdetail::broadcast_strides(lead_a, lead);
    auto sb = tdetail::broadcast_strides(lead_b, lead);
    for (auto &s : sa) s *= m * k;
    for (auto &s : sb) s *= k * n;
    Shape out_shape = lead;
    out_shape.push_back(m);
    out_shape.push_back(n);
    Tensor out(out_shape);
    tdetail::broadcast_loop(lead, sa, sb, [&](int64_t i, int64_t oa,
                                              int64_t ob) {
      tdetail::matmul_acc(ta.data.data() + oa, tb.data.data() + ob,
                          out.data.data() + i * m * n, m, k, n);
    });
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), rg,
                [this, a, b, lead, sa, sb, m, k, n](Tape &) {
                  Value self = last_value_;
                  const Tensor &go = nodes_[self.node].grad;
                  const Tensor &ta = nodes_[a.node].value;
                  const Tensor &tb = nodes_[b.node].value;
                  if (nodes_[a.node].requires_grad) {
                    accumulate(a, [&](Tensor &g) {
                      tdetail::broadcast_loop(
                          lead, sa, sb, [&](int64_t i, int64_t oa, int64_t ob) {
                            tdetail::matmul_nt_acc(go.data.data() + i * m * n,
                                                   tb.data.data() + ob,
                                                   g.data.data() + oa, m, n, k);
                          });
                    });
                  }
                  if (nodes_[b.node].requires_grad) {
                    accumulate(b, [&](Tensor &g) {
                      tdetail::broadcast_loop(
                          lead, sa, sb, [&](int64_t i, int64_t oa, int64_t ob) {
                            tdetail::matmul_tn_acc(ta.data.data() + oa,
                                                   go.data.data() + i * m * n,
                                                   g.data.data() + ob, m, k, n);
                          });
                    });
                  }
                });
  }

  // Rows of a 2D table selected by flat indices; output shape =
  // ids_shape + [row_width].
  Value embedding_gather(Value table, const std::vector<int64_t> &ids,
                         Shape ids_shape) {
    const Tensor &tt = value(table);
    if (tt.shape.size() != 2) {
      throw ShapeMismatchError("embedding table must be 2D");
    }
    if (static_cast<int64_t>(ids.size()) != shape_numel(ids_shape)) {
      throw ShapeMismatchError("ids length does not match ids_shape");
    }
    int64_t rows = tt.shape[0], width = tt.shape[1];
    for (int64_t id : ids) {
      if (id < 0 || id >= rows) {
        throw Error("embedding_gather: id " + std::to_string(id) +
                    " out of range [0," + std::to_string(rows) + ")");
      }
    }
    Shape out_shape = ids_shape;
    out_shape.push_back(width);
    Tensor out(out_shape);
    for (size_t i = 0; i < ids.size(); ++i) {
      std::copy(tt.data.begin() + ids[i] * width,
                tt.data.begin() + (ids[i] + 1) * width,
                out.data.begin() + static_cast<int64_t>(i) * width);
    }
    return push(std::move(out), node(table).requires_grad,
                [this, table, ids, width](Tape &) {
                  Value self = last_value_;
                  const Tensor &go = nodes_[self.node].grad;
                  accumulate(table, [&](Tensor &g) {
                    for (size_t i = 0; i < ids.size(); ++i) {
                      const double *src =
                          go.data.data() + static_cast<int64_t>(i) * width;
                      double *dst = g.data.data() + ids[i] * width;
                      for (int64_t j = 0; j < width; ++j) dst[j] += src[j];
                    }
                  });
                });
  }

  // --- nonlinearities ---

  Value relu(Value a) {
    Tensor out = value(a);
    for (auto &v : out.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), node(a).requires_grad, [this, a](Tape &) {
      Value self = last_value_;
      const Tensor &go = nodes_[self.node].grad;
      const Tensor &in = nodes_[a.node].value;
      accumulate(a, [&](Tensor &g) {
        for (int64_t i = 0; i < g.numel(); ++i) {
          if (in[i] > 0.0) g[i] += go[i];
        }
      });
    });
  }

  Value sigmoid(Value a) {
    Tensor out = value(a);
    for (auto &v : out.data) v = tdetail::sigmoid_stable(v);
    Tensor saved = out;
    return push(std::move(out), node(a).requires_grad,
                [this, a, saved](Tape &) {
                  Value self = last_value_;
                  const Tensor &go = nodes_[self.node].grad;
                  accumulate(a, [&](Tensor &g) {
                    for (int64_t i = 0; i < g.numel(); ++i) {
                      g[i] += go[i] * saved[i] * (1.0 - saved[i]);
                    }
                  });
                });
  }

  // Normalizes the last dim to zero mean / unit variance, then applies the
  // elementwise affine (gain, bias). Rows with variance < 1e-12 output zero
  // before the affine.
  Value layer_norm(Value x, Value gain, Value bias) {
    const Tensor &in = value(x);
    if (in.shape.empty()) throw ShapeMismatchError("layer_norm rank");
    int64_t width = in.shape.back();
    const Tensor &tg = value(gain), &tb = value(bias);
    if (tg.shape != Shape{width} || tb.shape != Shape{width}) {
      throw ShapeMismatchError("layer_norm affine must be (width)");
    }
    int64_t rows = in.numel() / width;
    Tensor out(in.shape);
    Tensor norm(in.shape);  // pre-affine values, saved for backward
    std::vector<double> rstd(rows, 0.0);
    for (int64_t r = 0; r < rows; ++r) {
      const double *row = in.data.data() + r * width;
      double mean = 0.0;
      for (int64_t j = 0; j < width; ++j) mean += row[j];
      mean /= width;
      double var = 0.0;
      for (int64_t j = 0; j < width; ++j) {
        var += (row[j] - mean) * (row[j] - mean);
      }
      var /= width;
      double *nrow = norm.data.data() + r * width;
      double *orow = out.data.data() + r * width;
      if (var < 1e-12) {
        for (int64_t j = 0; j < width; ++j) {
          nrow[j] = 0.0;
          orow[j] = tb[j];
        }
      } else {
        rstd[r] = 1.0 / std::sqrt(var);
        for (int64_t j = 0; j < width; ++j) {
          nrow[j] = (row[j] - mean) * rstd[r];
          orow[j] = tg[j] * nrow[j] + tb[j];
        }
      }
    }
    bool rg = node(x).requires_grad || node(gain).requires_grad ||
              node(bias).requires_grad;
    return push(
        std::move(out), rg,
        [this, x, gain, bias, norm, rstd, rows, width](Tape &) {
          Value self = last_value_;
          const Tensor &go = nodes_[self.node].grad;
          const Tensor &tg = nodes_[gain.node].value;
          if (nodes_[gain.node].requires_grad) {
            accumulate(gain, [&](Tensor &g) {
              for (int64_t r = 0; r < rows; ++r) {
                for (int64_t j = 0; j < width; ++j) {
                  g[j] += go[r * width + j] * norm[r * width + j];
                }
              }
            });
          }
          if (nodes_[bias.node].requires_grad) {
            accumulate(bias, [&](Tensor &g) {
              for (int64_t r = 0; r < rows; ++r) {
                for (int64_t j = 0; j < width; ++j) g[j] += go[r * width + j];
              }
            });
          }
          if (nodes_[x.node].requires_grad) {
            accumulate(x, [&](Tensor &g) {
              for (int64_t r = 0; r < rows; ++r) {
                if (rstd[r] == 0.0) continue;  // zero-variance row
                double mean_dy = 0.0, mean_dyy = 0.0;
                for (int64_t j = 0; j < width; ++j) {
                  double dy = go[r * width + j] * tg[j];
                  mean_dy += dy;
                  mean_dyy += dy * norm[r * width + j];
                }
                mean_dy /= width;
                mean_dyy /= width;
                for (int64_t j = 0; j < width; ++j) {
                  double dy = go[r * width + j] * tg[j];
                  g[r * width + j] +=
                      rstd[r] *
                      (dy - mean_dy - norm[r * width + j] * mean_dyy);
                }
              }
            });
          }
        });
  }

  // Softmax over the last dim restricted to positions where mask (broadcast
  // to x's shape, values in {0,1}) is 1. Masked positions output exactly 0
  // and receive exactly zero gradient; fully masked rows output all zeros.
  Value masked_softmax(Value x, Value mask) {
    const Tensor &in = value(x);
    const Tensor &tm = value(mask);
    Shape bshape = tdetail::broadcast_shape(in.shape, tm.shape);
    if (bshape != in.shape) {
      throw ShapeMismatchError("mask must broadcast to the input shape");
    }
    auto sm = tdetail::broadcast_strides(tm.shape, in.shape);
    auto sx = tdetail::broadcast_strides(in.shape, in.shape);
    Tensor out(in.shape);
    int64_t width = in.shape.back();
    int64_t rows = in.numel() / width;
    std::vector<double> mask_flat(in.numel());
    tdetail::broadcast_loop(in.shape, sx, sm,
                            [&](int64_t i, int64_t, int64_t om) {
                              mask_flat[i] = tm[om];
                            });
    for (int64_t r = 0; r < rows; ++r) {
      const double *row = in.data.data() + r * width;
      const double *mrow = mask_flat.data() + r * width;
      double *orow = out.data.data() + r * width;
      constexpr double kNegInf = -std::numeric_limits<double>::infinity();
      double maxv = kNegInf;
      for (int64_t j = 0; j < width; ++j) {
        if (mrow[j] != 0.0) maxv = std::max(maxv, row[j]);
      }
      if (maxv == kNegInf) {
        for (int64_t j = 0; j < width; ++j) orow[j] = 0.0;
        continue;
      }
      double z = 0.0;
      for (int64_t j = 0; j < width; ++j) {
        orow[j] = mrow[j] != 0.0 ? std::exp(row[j] - maxv) : 0.0;
        z += orow[j];
      }
      for (int64_t j = 0; j < width; ++j) orow[j] /= z;
    }
    Tensor saved = out;
    return push(std::move(out), node(x).requires_grad,
                [this, x, saved, rows, width](Tape &) {
                  Value self = last_value_;
                  const Tensor &go = nodes_[self.node].grad;
                  accumulate(x, [&](Tensor &g) {
                    for (int64_t r = 0; r < rows; ++r) {
                      double dot = 0.0;
                      for (int64_t j = 0; j < width; ++j) {
                        dot += go[r * width + j] * saved[r * width + j];
                      }
                      for (int64_t j = 0; j < width; ++j) {
                        double y = saved[r * width + j];
                        g[r * width + j] += y * (go[r * width + j] - dot);
                      }
                    }
                  });
                });
  }

  // Inverted dropout with a counter-based stream: replaying the same key
  // reproduces the same mask. Identity when rate <= 0.
  Value dropout(Value a, double rate, uint64_t key) {
    if (rate <= 0.0) return a;
    if (rate >= 1.0) throw ConfigError("dropout rate must be < 1");
    const Tensor &in = value(a);
    CounterRng stream(key);
    Tensor out(in.shape);
    std::vector<double> mask(in.numel());
    double keep = 1.0 - rate;
    for (int64_t i = 0; i < in.numel(); ++i) {
      mask[i] = stream.uniform(static_cast<uint64_t>(i)) >= rate
                    ? 1.0 / keep
                    : 0.0;
      out[i] = in[i] * mask[i];
    }
    return push(std::move(out), node(a).requires_grad,
                [this, a, mask](Tape &) {
                  Value self = last_value_;
                  const Tensor &go = nodes_[self.node].grad;
                  accumulate(a, [&](Tensor &g) {
                    for (int64_t i = 0; i < g.numel(); ++i) {
                      g[i] += go[i] * mask[i];
                    }
                  });
                });
  }

  // --- reductions / losses ---

  Value reduce_mean(Value a) {
    const Tensor &in = value(a);
    if (in.numel() == 0) throw ShapeMismatchError("reduce_mean of empty");
    double sum = 0.0;
    for (double v : in.data) sum += v;
    double inv = 1.0 / static_cast<double>(in.numel());
    return push(Tensor::scalar(sum * inv), node(a).requires_grad,
                [this, a, inv](Tape &) {
                  Value self = last_value_;
                  double go = nodes_[self.node].grad[0];
                  accumulate(a, [&](Tensor &g) {
                    for (int64_t i = 0; i < g.numel(); ++i) g[i] += go * inv;
                  });
                });
  }

  // Mean binary cross-entropy over positions where mask is 1, computed in
  // logit space (log-sum-exp form). Zero loss and zero gradients when the
  // mask is empty.
  Value bce_with_logits(Value logits, const Tensor &targets,
                        const Tensor &mask) {
    const Tensor &z = value(logits);
    if (targets.shape != z.shape || mask.shape != z.shape) {
      throw ShapeMismatchError("bce_with_logits shapes must match");
    }
    double count = 0.0;
    for (double m : mask.data) count += m;
    double loss = 0.0;
    if (count > 0.0) {
      for (int64_t i = 0; i < z.numel(); ++i) {
        if (mask[i] == 0.0) continue;
        double zi = z[i], t = targets[i];
        loss += std::max(zi, 0.0) - zi * t + std::log1p(std::exp(-std::abs(zi)));
      }
      loss /= count;
    }
    return push(Tensor::scalar(loss), node(logits).requires_grad,
                [this, logits, targets, mask, count](Tape &) {
                  if (count == 0.0) return;
                  Value self = last_value_;
                  double go = nodes_[self.node].grad[0];
                  const Tensor &z = nodes_[logits.node].value;
                  accumulate(logits, [&](Tensor &g) {
                    for (int64_t i = 0; i < g.numel(); ++i) {
                      if (mask[i] == 0.0) continue;
                      g[i] += go * (tdetail::sigmoid_stable(z[i]) -
                                    targets[i]) / count;
                    }
                  });
                });
  }

  // Mean negative log-likelihood of `targets` under a row softmax of
  // logits (rows, vocab); rows with mask 0 are excluded.
  Value softmax_xent(Value logits, const std::vector<int64_t> &targets,
                     const std::vector<double> &mask) {
    const Tensor &z = value(logits);
    if (z.shape.size() != 2) throw ShapeMismatchError("softmax_xent rank");
    int64_t rows = z.shape[0], vocab = z.shape[1];
    if (static_cast<int64_t>(targets.size()) != rows ||
        static_cast<int64_t>(mask.size()) != rows) {
      throw ShapeMismatchError("softmax_xent target/mask length");
    }
    double count = 0.0;
    for (double m : mask) count += m;
    Tensor probs(z.shape);
    double loss = 0.0;
    for (int64_t r = 0; r < rows; ++r) {
      const double *row = z.data.data() + r * vocab;
      double maxv = row[0];
      for (int64_t j = 1; j < vocab; ++j) maxv = std::max(maxv, row[j]);
      double lse = 0.0;
      for (int64_t j = 0; j < vocab; ++j) lse += std::exp(row[j] - maxv);
      lse = maxv + std::log(lse);
      double *prow = probs.data.data() + r * vocab;
      for (int64_t j = 0; j < vocab; ++j) prow[j] = std::exp(row[j] - lse);
      if (mask[r] != 0.0) {
        if (targets[r] < 0 || targets[r] >= vocab) {
          throw Error("softmax_xent: target out of range");
        }
        loss += lse - row[targets[r]];
      }
    }
    if (count > 0.0) loss /= count;
    return push(Tensor::scalar(count > 0.0 ? loss : 0.0),
                node(logits).requires_grad,
                [this, logits, targets, mask, probs, rows, vocab,
                 count](Tape &) {
                  if (count == 0.0) return;
                  Value self = last_value_;
                  double go = nodes_[self.node].grad[0];
                  accumulate(logits, [&](Tensor &g) {
                    for (int64_t r = 0; r < rows; ++r) {
                      if (mask[r] == 0.0) continue;
                      for (int64_t j = 0; j < vocab; ++j) {
                        double delta = probs[r * vocab + j] -
                                       (j == targets[r] ? 1.0 : 0.0);
                        g[r * vocab + j] += go * delta / count;
                      }
                    }
                  });
                });
  }

  size_t size() const { return nodes_.size(); }

 private:
  Value binary_op(Value a, Value b, bool is_mul) {
    const Tensor &ta = value(a), &tb = value(b);
    Shape out_shape = tdetail::broadcast_shape(ta.shape, tb.shape);
    auto sa = tdetail::broadcast_strides(ta.shape, out_shape);
    auto sb = tdetail::broadcast_strides(tb.shape, out_shape);
    Tensor out(out_shape);
    if (is_mul) {
      tdetail::broadcast_loop(out_shape, sa, sb,
                              [&](int64_t i, int64_t oa, int64_t ob) {
                                out[i] = ta[oa] * tb[ob];
                              });
    } else {
      tdetail::broadcast_loop(out_shape, sa, sb,
                              [&](int64_t i, int64_t oa, int64_t ob) {
                                out[i] = ta[oa] + tb[ob];
                              });
    }
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), rg,
                [this, a, b, sa, sb, out_shape, is_mul](Tape &) {
                  Value self = last_value_;
                  const Tensor &go = nodes_[self.node].grad;
                  const Tensor &ta = nodes_[a.node].value;
                  const Tensor &tb = nodes_[b.node].value;
                  if (nodes_[a.node].requires_grad) {
                    accumulate(a, [&](Tensor &g) {
                      tdetail::broadcast_loop(
                          out_shape, sa, sb,
                          [&](int64_t i, int64_t oa, int64_t ob) {
                            g[oa] += is_mul ? go[i] * tb[ob] : go[i];
                          });
                    });
                  }
                  if (nodes_[b.node].requires_grad) {
                    accumulate(b, [&](Tensor &g) {
                      tdetail::broadcast_loop(
                          out_shape, sa, sb,
                          [&](int64_t i, int64_t oa, int64_t ob) {
                            g[ob] += is_mul ? go[i] * ta[oa] : go[i];
                          });
                    });
                  }
                });
  }

  static void permute_copy(const Tensor &in, const std::vector<int> &perm,
                           Tensor &out) {
    int rank = static_cast<int>(in.shape.size());
    std::vector<int64_t> in_strides(rank, 1);
    for (int d = rank - 2; d >= 0; --d) {
      in_strides[d] = in_strides[d + 1] * in.shape[d + 1];
    }
    std::vector<int64_t> src_strides(rank);
    for (int d = 0; d < rank; ++d) src_strides[d] = in_strides[perm[d]];
    std::vector<int64_t> idx(rank, 0);
    int64_t src = 0;
    for (int64_t i = 0; i < in.numel(); ++i) {
      out.data[i] = in.data[src];
      for (int d = rank - 1; d >= 0; --d) {
        idx[d]++;
        src += src_strides[d];
        if (idx[d] < out.shape[d]) break;
        src -= src_strides[d] * out.shape[d];
        idx[d] = 0;
      }
    }
  }

  const Node &node(Value v) const {
    if (v.node < 0 || v.node >= static_cast<int32_t>(nodes_.size())) {
      throw Error("value handle is not on this tape");
    }
    return nodes_[v.node];
  }

  Tensor &grad_ref(int32_t idx) {
    Node &n = nodes_[idx];
    if (!n.grad_alloc) {
      n.grad = Tensor(n.value.shape);
      n.grad_alloc = true;
    }
    return n.grad;
  }

  // Runs `fn` on the parent's gradient buffer and marks it live.
  template <typename F>
  void accumulate(Value parent, F &&fn) {
    if (!nodes_[parent.node].requires_grad) return;
    fn(grad_ref(parent.node));
    nodes_[parent.node].touched = true;
  }

  Value push(Tensor value, bool requires_grad,
             std::function<void(Tape &)> backward_fn) {
    if (debug_checks_) {
      for (double v : value.data) {
        if (!std::isfinite(v)) {
          throw NonFiniteValueError("non-finite value in op output");
        }
      }
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    Value handle{static_cast<int32_t>(nodes_.size() - 1)};
    if (backward_fn) {
      // The closure needs to know its own node; stash it at call time.
      nodes_.back().backward_fn = [this, handle,
                                   fn = std::move(backward_fn)](Tape &t) {
        last_value_ = handle;
        fn(t);
      };
    }
    return handle;
  }

  std::vector<Node> nodes_;
  Value last_value_{-1};
  bool debug_checks_ = false;
};

// --- optimizer ---

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t warmup_steps = 0;  // linear warmup to lr, then constant
};

struct AdamState {
  AdamConfig config;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  int64_t step = 0;
};

inline double adam_lr_at(const AdamConfig &c, int64_t step) {
  if (c.warmup_steps <= 0 || step >= c.warmup_steps) return c.lr;
  return c.lr * static_cast<double>(step) /
         static_cast<double>(c.warmup_steps);
}

// One Adam update with bias correction over named parameters.
inline void adam_step(AdamState &state, std::map<std::string, Tensor> &params,
                      const std::map<std::string, Tensor> &grads) {
  state.step++;
  double lr = adam_lr_at(state.config, state.step);
  double bc1 = 1.0 - std::pow(state.config.beta1, state.step);
  double bc2 = 1.0 - std::pow(state.config.beta2, state.step);
  for (auto &[name, p] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const Tensor &g = git->second;
    if (g.shape != p.shape) {
      throw ShapeMismatchError("adam_step: grad shape mismatch for " + name);
    }
    Tensor &m = state.m.try_emplace(name, Tensor(p.shape)).first->second;
    Tensor &v = state.v.try_emplace(name, Tensor(p.shape)).first->second;
    for (int64_t i = 0; i < p.numel(); ++i) {
      m[i] = state.config.beta1 * m[i] + (1.0 - state.config.beta1) * g[i];
      v[i] = state.config.beta2 * v[i] + (1.0 - state.config.beta2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + state.config.eps);
    }
  }
}

// --- gradient checking ---

// Central-difference check of `analytic` against f on a deterministic
// coordinate subsample (>= min_coords per tensor, or all when smaller).
// Returns max |g_a - g_n| / max(1e-8, |g_a| + |g_n|).
inline double grad_check(
    const std::function<double(const std::vector<Tensor> &)> &f,
    std::vector<Tensor> params, const std::vector<Tensor> &analytic,
    double eps = 1e-5, int min_coords = 200, uint64_t seed = 1234) {
  if (analytic.size() != params.size()) {
    throw ShapeMismatchError("grad_check: analytic grads count mismatch");
  }
  Rng rng(seed);
  double max_rel = 0.0;
  for (size_t t = 0; t < params.size(); ++t) {
    Tensor &p = params[t];
    int64_t n = p.numel();
    std::vector<int64_t> coords;
    if (n <= min_coords) {
      for (int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int i = 0; i < min_coords; ++i) {
        coords.push_back(static_cast<int64_t>(rng.uniform_int(n)));
      }
    }
    for (int64_t c : coords) {
      double orig = p[c];
      p[c] = orig + eps;
      double up = f(params);
      p[c] = orig - eps;
      double down = f(params);
      p[c] = orig;
      double numeric = (up - down) / (2.0 * eps);
      double a = analytic[t][c];
      double rel = std::abs(a - numeric) /
                   std::max(1e-8, std::abs(a) + std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace latrescore

#endif  // LATRESCORE_TENSOR_HPP_
