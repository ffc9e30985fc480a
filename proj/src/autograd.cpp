#include "ttvi/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "ttvi/kernels.hpp"

namespace ttvi::ag {

namespace {

using std::size_t;

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.raw();
  const T* s = src.raw();
  for (size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(s));
  }
}

}  // namespace

template <typename T>
Gradients<T> Graph<T>::backward(NodeId loss) const {
  const auto& out = nodes_.at(loss.index);
  if (out.value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + to_string(out.value.shape()));
  }
  std::vector<Tensor<T>> grads(loss.index + 1);
  grads[loss.index] = Tensor<T>::ones(out.value.shape());
  last_visits_ = 0;
  std::vector<Tensor<T>*> slots;
  for (size_t i = loss.index + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!grads[i].size() || !node.backward || !node.requires_grad) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (size_t j = 0; j < node.inputs.size(); ++j) {
      const size_t in = node.inputs[j].index;
      if (!nodes_[in].requires_grad) continue;
      if (!grads[in].size()) grads[in] = Tensor<T>::zeros(nodes_[in].value.shape());
      slots[j] = &grads[in];
    }
    node.backward(*this, grads[i], slots);
    ++last_visits_;
    // Intermediate gradients are no longer needed once propagated.
    if (node.op != "variable") grads[i] = Tensor<T>();
  }
  std::vector<Shape> shapes;
  shapes.reserve(nodes_.size());
  for (const auto& n : nodes_) shapes.push_back(n.value.shape());
  grads.resize(nodes_.size());
  return Gradients<T>(std::move(grads), std::move(shapes));
}

template <typename T>
NodeId conv3d(Graph<T>& g, NodeId input, NodeId kernel, std::size_t stride, std::size_t padding) {
  const auto& x = g.value(input);
  const auto& k = g.value(kernel);
  const auto geo = kernels::Conv3dGeometry::make(x.shape(), k.shape(), stride, padding);
  Tensor<T> out(geo.output_shape());
  kernels::conv3d_forward(geo, x.raw(), k.raw(), out.raw());
  return g.record("conv3d", {input, kernel}, std::move(out),
                  [input, kernel, geo](const Graph<T>& gr, const Tensor<T>& go,
                                       std::span<Tensor<T>* const> gin) {
                    if (gin[0]) {
                      kernels::conv3d_backward_input(geo, gr.value(kernel).raw(), go.raw(), gin[0]->raw());
                    }
                    if (gin[1]) {
                      Tensor<T> gk(gr.value(kernel).shape());
                      kernels::conv3d_backward_kernel(geo, gr.value(input).raw(), go.raw(), gk.raw());
                      add_into(*gin[1], gk);
                    }
                  });
}

template <typename T>
NodeId bias_add(Graph<T>& g, NodeId x, NodeId bias) {
  const auto& v = g.value(x);
  const auto& b = g.value(bias);
  if (v.rank() < 2 || b.rank() != 1 || b.size() != v.dim(1)) {
    throw ShapeError("bias_add: bias " + to_string(b.shape()) + " does not match channels of " +
                     to_string(v.shape()));
  }
  const size_t n = v.dim(0), c = v.dim(1), inner = v.size() / (n * c);
  Tensor<T> out = v;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < c; ++j) {
      T* p = out.raw() + (i * c + j) * inner;
      const T bj = b[j];
      for (size_t q = 0; q < inner; ++q) p[q] += bj;
    }
  }
  return g.record("bias_add", {x, bias}, std::move(out),
                  [n, c, inner](const Graph<T>&, const Tensor<T>& go, std::span<Tensor<T>* const> gin) {
                    if (gin[0]) add_into(*gin[0], go);
                    if (gin[1]) {
                      for (size_t j = 0; j < c; ++j) {
                        T s{0};
                        for (size_t i = 0; i < n; ++i) {
                          const T* p = go.raw() + (i * c + j) * inner;
                          for (size_t q = 0; q < inner; ++q) s += p[q];
                        }
                        (*gin[1])[j] += s;
                      }
                    }
                  });
}

template <typename T>
NodeId dense(Graph<T>& g, NodeId x, NodeId weight, NodeId bias) {
  const auto& in = g.value(x);
  const auto& w = g.value(weight);
  const auto& b = g.value(bias);
  require_rank(in.shape(), 2, "dense input");
  require_rank(w.shape(), 2, "dense weight");
  if (in.dim(1) != w.dim(0) || b.rank() != 1 || b.size() != w.dim(1)) {
    throw ShapeError("dense: input " + to_string(in.shape()) + ", weight " + to_string(w.shape()) +
                     ", bias " + to_string(b.shape()));
  }
  const size_t n = in.dim(0), k = in.dim(1), m = w.dim(1);
  Tensor<T> out({n, m});
  kernels::dense_forward(n, k, m, in.raw(), w.raw(), b.raw(), out.raw());
  return g.record("dense", {x, weight, bias}, std::move(out),
                  [x, weight, n, k, m](const Graph<T>& gr, const Tensor<T>& go,
                                       std::span<Tensor<T>* const> gin) {
                    const auto& in = gr.value(x);
                    const auto& w = gr.value(weight);
                    if (gin[0]) {
                      for (size_t r = 0; r < n; ++r) {
                        for (size_t i = 0; i < k; ++i) {
                          T s{0};
                          for (size_t j = 0; j < m; ++j) s += go[r * m + j] * w[i * m + j];
                          (*gin[0])[r * k + i] += s;
                        }
                      }
                    }
                    if (gin[1]) {
                      for (size_t i = 0; i < k; ++i) {
                        for (size_t j = 0; j < m; ++j) {
                          T s{0};
                          for (size_t r = 0; r < n; ++r) s += in[r * k + i] * go[r * m + j];
                          (*gin[1])[i * m + j] += s;
                        }
                      }
                    }
                    if (gin[2]) {
                      for (size_t j = 0; j < m; ++j) {
                        T s{0};
                        for (size_t r = 0; r < n; ++r) s += go[r * m + j];
                        (*gin[2])[j] += s;
                      }
                    }
                  });
}

template <typename T>
NodeId relu(Graph<T>& g, NodeId x) {
  Tensor<T> out = g.value(x);
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  return g.record("relu", {x}, std::move(out),
                  [x](const Graph<T>& gr, const Tensor<T>& go, std::span<Tensor<T>* const> gin) {
                    if (!gin[0]) return;
                    const auto& in = gr.value(x);
                    for (size_t i = 0; i < go.size(); ++i) {
                      if (in[i] > T{0}) (*gin[0])[i] += go[i];
                    }
                  });
}

template <typename T>
NodeId max_pool3d(Graph<T>& g, NodeId x) {
  const auto& in = g.value(x);
  require_rank(in.shape(), 5, "max_pool3d");
  const Shape& s = in.shape();
  for (size_t a = 2; a < 5; ++a) {
    if (s[a] < 2 || s[a] % 2 != 0) {
      throw ShapeError("max_pool3d: spatial extents must be even and >= 2, got " + to_string(s));
    }
  }
  Tensor<T> out({s[0], s[1], s[2] / 2, s[3] / 2, s[4] / 2});
  auto argmax = std::make_shared<std::vector<size_t>>(out.size());
  kernels::max_pool3d_forward(s[0] * s[1], s[2], s[3], s[4], in.raw(), out.raw(), argmax->data());
  return g.record("max_pool3d", {x}, std::move(out),
                  [argmax](const Graph<T>&, const Tensor<T>& go, std::span<Tensor<T>* const> gin) {
                    if (!gin[0]) return;
                    for (size_t i = 0; i < go.size(); ++i) (*gin[0])[(*argmax)[i]] += go[i];
                  });
}

template <typename T>
NodeId global_avg_pool(Graph<T>& g, NodeId x) {
  const auto& in = g.value(x);
  require_rank(in.shape(), 5, "global_avg_pool");
  const size_t n = in.dim(0), c = in.dim(1), vol = in.size() / (n * c);
  Tensor<T> out({n, c});
  for (size_t i = 0; i < n * c; ++i) {
    T s{0};
    const T* p = in.raw() + i * vol;
    for (size_t q = 0; q < vol; ++q) s += p[q];
    out[i] = s / static_cast<T>(vol);
  }
  return g.record("global_avg_pool", {x}, std::move(out),
                  [n, c, vol](const Graph<T>&, const Tensor<T>& go, std::span<Tensor<T>* const> gin) {
                    if (!gin[0]) return;
                    for (size_t i = 0; i < n * c; ++i) {
                      const T v = go[i] / static_cast<T>(vol);
                      T* p = gin[0]->raw() + i * vol;
                      for (size_t q = 0; q < vol; ++q) p[q] += v;
                    }
                  });
}

template <typename T>
NodeId upsample_nearest(Graph<T>& g, NodeId x) {
  const auto& in = g.value(x);
  require_rank(in.shape(), 5, "upsample_nearest");
  const Shape& s = in.shape();
  Tensor<T> out({s[0], s[1], 2 * s[2], 2 * s[3], 2 * s[4]});
  kernels::upsample_nearest_forward(s[0] * s[1], s[2], s[3], s[4], in.raw(), out.raw());
  return g.record("upsample_nearest", {x}, std::move(out),
                  [s](const Graph<T>&, const Tensor<T>& go, std::span<Tensor<T>* const> gin) {
                    if (!gin[0]) return;
                    Tensor<T> tmp(s);
                    kernels::upsample_nearest_backward(s[0] * s[1], s[2], s[3], s[4], go.raw(), tmp.raw());
                    add_into(*gin[0], tmp);
                  });
}

template <typename T>
NodeId upsample_trilinear(Graph<T>& g, NodeId x) {
  const auto& in = g.value(x);
  require_rank(in.shape(), 5, "upsample_trilinear");
  const Shape& s = in.shape();
  Tensor<T> out({s[0], s[1], 2 * s[2], 2 * s[3], 2 * s[4]});
  kernels::upsample_trilinear_forward(s[0] * s[1], s[2], s[3], s[4], in.raw(), out.raw());
  return g.record("upsample_trilinear", {x}, std::move(out),
                  [s](const Graph<T>&, const Tensor<T>& go, std::span<Tensor<T>* const> gin) {
                    if (!gin[0]) return;
                    Tensor<T> tmp(s);
                    kernels::upsample_trilinear_backward(s[0] * s[1], s[2], s[3], s[4], go.raw(), tmp.raw());
                    add_into(*gin[0], tmp);
                  });
}

template <typename T>
NodeId add(Graph<T>& g, NodeId a, NodeId b) {
  require_same_shape(g.value(a).shape(), g.value(b).shape(), "add");
  Tensor<T> out = g.value(a);
  add_into(out, g.value(b));
  return g.record("add", {a, b}, std::move(out),
                  [](const Graph<T>&, const Tensor<T>& go, std::span<Tensor<T>* const> gin) {
                    if (gin[0]) add_into(*gin[0], go);
                    if (gin[1]) add_into(*gin[1], go);
                  });
}

template <typename T>
NodeId sub(Graph<T>& g, NodeId a, NodeId b) {
  require_same_shape(g.value(a).shape(), g.value(b).shape(), "sub");
  Tensor<T> out = g.value(a);
  const auto& rhs = g.value(b);
  for (size_t i = 0; i < out.size(); ++i) out[i] -= rhs[i];
  return g.record("sub", {a, b}, std::move(out),
                  [](const Graph<T>&, const Tensor<T>& go, std::span<Tensor<T>* const> gin) {
                    if (gin[0]) add_into(*gin[0], go);
                    if (gin[1]) {
                      for (size_t i = 0; i < go.size(); ++i) (*gin[1])[i] -= go[i];
                    }
                  });
}

template <typename T>
NodeId mul(Graph<T>& g, NodeId a, NodeId b) {
  require_same_shape(g.value(a).shape(), g.value(b).shape(), "mul");
  Tensor<T> out = g.value(a);
  const auto& rhs = g.value(b);
  for (size_t i = 0; i < out.size(); ++i) out[i] *= rhs[i];
  return g.record("mul", {a, b}, std::move(out),
                  [a, b](const Graph<T>& gr, const Tensor<T>& go, std::span<Tensor<T>* const> gin) {
                    const auto& va = gr.value(a);
                    const auto& vb = gr.value(b);
                    if (gin[0]) {
                      for (size_t i = 0; i < go.size(); ++i) (*gin[0])[i] += go[i] * vb[i];
                    }
                    if (gin[1]) {
                      for (size_t i = 0; i < go.size(); ++i) (*gin[1])[i] += go[i] * va[i];
                    }
                  });
}

template <typename T>
NodeId scale(Graph<T>& g, NodeId x, T factor) {
  Tensor<T> out = g.value(x);
  for (auto& v : out.data()) v *= factor;
  return g.record("scale", {x}, std::move(out),
                  [factor](const Graph<T>&, const Tensor<T>& go, std::span<Tensor<T>* const> gin) {
                    if (!gin[0]) return;
                    for (size_t i = 0; i < go.size(); ++i) (*gin[0])[i] += factor * go[i];
                  });
}

template <typename T>
NodeId reshape(Graph<T>& g, NodeId x, Shape shape) {
  Tensor<T> out = g.value(x).reshaped(std::move(shape));
  return g.record("reshape", {x}, std::move(out),
                  [](const Graph<T>&, const Tensor<T>& go, std::span<Tensor<T>* const> gin) {
                    if (!gin[0]) return;
                    T* d = gin[0]->raw();
                    for (size_t i = 0; i < go.size(); ++i) d[i] += go[i];
                  });
}

template <typename T>
NodeId concat(Graph<T>& g, std::span<const NodeId> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  Shape out_shape = g.value(parts[0]).shape();
  if (axis >= out_shape.size()) throw ShapeError("concat: axis out of range for " + to_string(out_shape));
  out_shape[axis] = 0;
  for (auto p : parts) {
    const Shape& s = g.value(p).shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat: rank mismatch " + to_string(s));
    for (size_t a = 0; a < s.size(); ++a) {
      if (a != axis && s[a] != g.value(parts[0]).shape()[a]) {
        throw ShapeError("concat: " + to_string(s) + " vs " + to_string(g.value(parts[0]).shape()));
      }
    }
    out_shape[axis] += s[axis];
  }
  size_t outer = 1, inner = 1;
  for (size_t a = 0; a < axis; ++a) outer *= out_shape[a];
  for (size_t a = axis + 1; a < out_shape.size(); ++a) inner *= out_shape[a];
  std::vector<size_t> widths;
  for (auto p : parts) widths.push_back(g.value(p).shape()[axis] * inner);
  const size_t row = out_shape[axis] * inner;
  Tensor<T> out(out_shape);
  size_t offset = 0;
  for (size_t j = 0; j < parts.size(); ++j) {
    const T* src = g.value(parts[j]).raw();
    for (size_t o = 0; o < outer; ++o) {
      std::copy_n(src + o * widths[j], widths[j], out.raw() + o * row + offset);
    }
    offset += widths[j];
  }
  return g.record("concat", std::vector<NodeId>(parts.begin(), parts.end()), std::move(out),
                  [outer, row, widths](const Graph<T>&, const Tensor<T>& go,
                                       std::span<Tensor<T>* const> gin) {
                    size_t offset = 0;
                    for (size_t j = 0; j < widths.size(); ++j) {
                      if (gin[j]) {
                        for (size_t o = 0; o < outer; ++o) {
                          const T* src = go.raw() + o * row + offset;
                          T* dst = gin[j]->raw() + o * widths[j];
                          for (size_t q = 0; q < widths[j]; ++q) dst[q] += src[q];
                        }
                      }
                      offset += widths[j];
                    }
                  });
}

template <typename T>
NodeId sum(Graph<T>& g, NodeId x) {
  T s{0};
  for (T v : g.value(x).data()) s += v;
  return g.record("sum", {x}, Tensor<T>::scalar(s),
                  [](const Graph<T>&, const Tensor<T>& go, std::span<Tensor<T>* const> gin) {
                    if (!gin[0]) return;
                    const T v = go[0];
                    for (auto& d : gin[0]->data()) d += v;
                  });
}

template <typename T>
NodeId mean(Graph<T>& g, NodeId x) {
  const auto n = static_cast<T>(g.value(x).size());
  T s{0};
  for (T v : g.value(x).data()) s += v;
  return g.record("mean", {x}, Tensor<T>::scalar(s / n),
                  [n](const Graph<T>&, const Tensor<T>& go, std::span<Tensor<T>* const> gin) {
                    if (!gin[0]) return;
                    const T v = go[0] / n;
                    for (auto& d : gin[0]->data()) d += v;
                  });
}

template <typename T>
NodeId softmax(Graph<T>& g, NodeId logits) {
  const auto& in = g.value(logits);
  require_rank(in.shape(), 2, "softmax");
  const size_t n = in.dim(0), k = in.dim(1);
  Tensor<T> out(in.shape());
  for (size_t r = 0; r < n; ++r) {
    const T* x = in.raw() + r * k;
    T* y = out.raw() + r * k;
    const T m = *std::max_element(x, x + k);
    T z{0};
    for (size_t j = 0; j < k; ++j) z += (y[j] = std::exp(x[j] - m));
    for (size_t j = 0; j < k; ++j) y[j] /= z;
  }
  Tensor<T> saved = out;
  return g.record("softmax", {logits}, std::move(out),
                  [n, k, saved = std::move(saved)](const Graph<T>&, const Tensor<T>& go,
                                                   std::span<Tensor<T>* const> gin) {
                    if (!gin[0]) return;
                    for (size_t r = 0; r < n; ++r) {
                      const T* y = saved.raw() + r * k;
                      const T* d = go.raw() + r * k;
                      T dot{0};
                      for (size_t j = 0; j < k; ++j) dot += y[j] * d[j];
                      for (size_t j = 0; j < k; ++j) (*gin[0])[r * k + j] += y[j] * (d[j] - dot);
                    }
                  });
}

template <typename T>
NodeId log_softmax(Graph<T>& g, NodeId logits) {
  const auto& in = g.value(logits);
  require_rank(in.shape(), 2, "log_softmax");
  const size_t n = in.dim(0), k = in.dim(1);
  Tensor<T> out(in.shape());
  for (size_t r = 0; r < n; ++r) {
    const T* x = in.raw() + r * k;
    T* y = out.raw() + r * k;
    const T m = *std::max_element(x, x + k);
    T z{0};
    for (size_t j = 0; j < k; ++j) z += std::exp(x[j] - m);
    const T lse = m + std::log(z);
    for (size_t j = 0; j < k; ++j) y[j] = x[j] - lse;
  }
  Tensor<T> saved = out;
  return g.record("log_softmax", {logits}, std::move(out),
                  [n, k, saved = std::move(saved)](const Graph<T>&, const Tensor<T>& go,
                                                   std::span<Tensor<T>* const> gin) {
                    if (!gin[0]) return;
                    for (size_t r = 0; r < n; ++r) {
                      const T* y = saved.raw() + r * k;
                      const T* d = go.raw() + r * k;
                      T total{0};
                      for (size_t j = 0; j < k; ++j) total += d[j];
                      for (size_t j = 0; j < k; ++j) (*gin[0])[r * k + j] += d[j] - std::exp(y[j]) * total;
                    }
                  });
}

#define TTVI_INSTANTIATE_AUTOGRAD(T)                                                        \
  template class Graph<T>;                                                                  \
  template NodeId conv3d<T>(Graph<T>&, NodeId, NodeId, std::size_t, std::size_t);          \
  template NodeId bias_add<T>(Graph<T>&, NodeId, NodeId);                                   \
  template NodeId dense<T>(Graph<T>&, NodeId, NodeId, NodeId);                              \
  template NodeId relu<T>(Graph<T>&, NodeId);                                               \
  template NodeId max_pool3d<T>(Graph<T>&, NodeId);                                         \
  template NodeId global_avg_pool<T>(Graph<T>&, NodeId);                                    \
  template NodeId upsample_nearest<T>(Graph<T>&, NodeId);                                   \
  template NodeId upsample_trilinear<T>(Graph<T>&, NodeId);                                 \
  template NodeId add<T>(Graph<T>&, NodeId, NodeId);                                        \
  template NodeId sub<T>(Graph<T>&, NodeId, NodeId);                                        \
  template NodeId mul<T>(Graph<T>&, NodeId, NodeId);                                        \
  template NodeId scale<T>(Graph<T>&, NodeId, T);                                           \
  template NodeId reshape<T>(Graph<T>&, NodeId, Shape);                                     \
  template NodeId concat<T>(Graph<T>&, std::span<const NodeId>, std::size_t);               \
  template NodeId sum<T>(Graph<T>&, NodeId);                                                \
  template NodeId mean<T>(Graph<T>&, NodeId);                                               \
  template NodeId softmax<T>(Graph<T>&, NodeId);                                            \
  template NodeId log_softmax<T>(Graph<T>&, NodeId);

TTVI_INSTANTIATE_AUTOGRAD(float)
TTVI_INSTANTIATE_AUTOGRAD(double)

#undef TTVI_INSTANTIATE_AUTOGRAD

}  // namespace ttvi::ag
