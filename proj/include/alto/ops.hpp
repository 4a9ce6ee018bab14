#pragma once

// Grid kernels on channels-last tensors: 3x3(x3) convolution with zero or
// circular padding and stride 1 or 2, nearest-neighbor upsampling, row
// gathers/scatters between point sets and flattened grids.
//
// Parallel sections split work over output slots only; every reduction runs
// in a fixed order so results do not depend on the thread count.

#include <cstdint>
#include <type_traits>
#include <vector>

#include "alto/tensor.hpp"

namespace alto {

enum class Padding { Zero, Circular };

namespace detail {

// Source input coordinate for output cell `o`, tap `k`; false = zero pad.
inline bool conv_src(std::size_t o, int k, std::size_t n, int stride, Padding pad, std::size_t& src) {
  long c = static_cast<long>(stride * o) + k - 1;
  if (pad == Padding::Circular) {
    long nn = static_cast<long>(n);
    src = static_cast<std::size_t>(((c % nn) + nn) % nn);
    return true;
  }
  if (c < 0 || c >= static_cast<long>(n)) return false;
  src = static_cast<std::size_t>(c);
  return true;
}

// Output cell reading input coordinate `i` through tap `k`; false = none.
inline bool conv_dst(std::size_t i, int k, std::size_t n, int stride, Padding pad, std::size_t out_n,
                     std::size_t& dst) {
  long c = static_cast<long>(i) + 1 - k;
  if (pad == Padding::Circular) {
    long nn = static_cast<long>(n);
    c = ((c % nn) + nn) % nn;
  } else if (c < 0) {
    return false;
  }
  if (c % stride != 0) return false;
  std::size_t o = static_cast<std::size_t>(c) / stride;
  if (o >= out_n) return false;
  dst = o;
  return true;
}

inline std::size_t conv_out_size(std::size_t n, int stride) { return stride == 1 ? n : (n + 1) / 2; }

// Calls `fn` with the channel count as a compile-time constant for the widths
// the grid encoders actually use, so per-cell accumulators can live in
// registers; any other width takes the runtime-width path (tag value 0).
template <class Fn>
void with_channel_width(std::size_t width, Fn&& fn) {
  switch (width) {
    case 8: fn(std::integral_constant<std::size_t, 8>{}); break;
    case 16: fn(std::integral_constant<std::size_t, 16>{}); break;
    case 32: fn(std::integral_constant<std::size_t, 32>{}); break;
    default: fn(std::integral_constant<std::size_t, 0>{}); break;
  }
}

// Forward pass of the 3x3x3 convolution over output rows [r0, r1), where a
// row index r encodes (y, xo). CO is the output channel count as a
// compile-time constant, 0 meaning "use the runtime value Co". Both paths
// add tap contributions into each output channel in the same ascending
// (k0, k1, k2, ci) order, so they produce bitwise-identical results; the
// fixed-width path keeps the per-cell accumulator in registers and walks
// input channels four at a time so the channel loop stays the innermost,
// contiguous, vectorizable one.
template <std::size_t CO, class T>
void conv3d_forward_rows(const T* xv, const T* wv, const T* bv, T* out, std::size_t r0, std::size_t r1, std::size_t H,
                         std::size_t W, std::size_t D, std::size_t Ci, std::size_t Co, std::size_t Wo, std::size_t Do,
                         int stride, Padding pad) {
  for (std::size_t r = r0; r < r1; ++r) {
    std::size_t y = r / Wo, xo = r % Wo;
    std::size_t i0[3], i1[3], i2[3];
    bool v0[3], v1[3], v2[3];
    for (int k = 0; k < 3; ++k) {
      v0[k] = conv_src(y, k, H, stride, pad, i0[k]);
      v1[k] = conv_src(xo, k, W, stride, pad, i1[k]);
    }
    for (std::size_t zo = 0; zo < Do; ++zo) {
      for (int k = 0; k < 3; ++k) v2[k] = conv_src(zo, k, D, stride, pad, i2[k]);
      T* o = out + (r * Do + zo) * Co;
      if constexpr (CO != 0) {
        T acc[CO];
        if (bv)
          for (std::size_t c = 0; c < CO; ++c) acc[c] = bv[c];
        else
          for (std::size_t c = 0; c < CO; ++c) acc[c] = T(0);
        for (int k0 = 0; k0 < 3; ++k0) {
          if (!v0[k0]) continue;
          for (int k1 = 0; k1 < 3; ++k1) {
            if (!v1[k1]) continue;
            const T* xplane = xv + (i0[k0] * W + i1[k1]) * D * Ci;
            for (int k2 = 0; k2 < 3; ++k2) {
              if (!v2[k2]) continue;
              const T* xr = xplane + i2[k2] * Ci;
              const T* wr = wv + static_cast<std::size_t>((k0 * 3 + k1) * 3 + k2) * Ci * CO;
              std::size_t ci = 0;
              for (; ci + 8 <= Ci; ci += 8) {
                const T* w0 = wr + ci * CO;
                for (std::size_t c = 0; c < CO; ++c) {
                  T a = acc[c];
                  a += xr[ci] * w0[c];
                  a += xr[ci + 1] * w0[CO + c];
                  a += xr[ci + 2] * w0[2 * CO + c];
                  a += xr[ci + 3] * w0[3 * CO + c];
                  a += xr[ci + 4] * w0[4 * CO + c];
                  a += xr[ci + 5] * w0[5 * CO + c];
                  a += xr[ci + 6] * w0[6 * CO + c];
                  a += xr[ci + 7] * w0[7 * CO + c];
                  acc[c] = a;
                }
              }
              for (; ci < Ci; ++ci) {
                T xi = xr[ci];
                const T* wc = wr + ci * CO;
                for (std::size_t c = 0; c < CO; ++c) acc[c] += xi * wc[c];
              }
            }
          }
        }
        for (std::size_t c = 0; c < CO; ++c) o[c] = acc[c];
      } else {
        if (bv)
          for (std::size_t c = 0; c < Co; ++c) o[c] = bv[c];
        for (int k0 = 0; k0 < 3; ++k0) {
          if (!v0[k0]) continue;
          for (int k1 = 0; k1 < 3; ++k1) {
            if (!v1[k1]) continue;
            const T* xplane = xv + (i0[k0] * W + i1[k1]) * D * Ci;
            for (int k2 = 0; k2 < 3; ++k2) {
              if (!v2[k2]) continue;
              const T* xr = xplane + i2[k2] * Ci;
              const T* wr = wv + static_cast<std::size_t>((k0 * 3 + k1) * 3 + k2) * Ci * Co;
              for (std::size_t ci = 0; ci < Ci; ++ci) {
                T xi = xr[ci];
                const T* wc = wr + ci * Co;
                for (std::size_t c = 0; c < Co; ++c) o[c] += xi * wc[c];
              }
            }
          }
        }
      }
    }
  }
}

// Input-gradient pass of the 3x3x3 convolution over input rows [r0, r1),
// where a row index r encodes (iy, ix). CI is the input channel count as a
// compile-time constant, 0 meaning "use the runtime value Ci". The
// fixed-width path keeps one register accumulator per input channel, reads
// `wt` — the weights transposed to [tap, Co, Ci] — and walks output channels
// eight at a time so the input-channel loop stays the innermost, contiguous,
// vectorizable one; the runtime path reads the original layout `wv` with
// per-channel dot products. The two paths group floating-point additions
// differently, but the path choice depends only on tensor shape, so results
// stay deterministic.
template <std::size_t CI, class T>
void conv3d_xgrad_rows(const T* g, const T* wv, const T* wt, T* xg, std::size_t r0, std::size_t r1, std::size_t H,
                       std::size_t W, std::size_t D, std::size_t Ci, std::size_t Co, std::size_t Ho, std::size_t Wo,
                       std::size_t Do, int stride, Padding pad) {
  for (std::size_t r = r0; r < r1; ++r) {
    std::size_t iy = r / W, ix = r % W;
    std::size_t o0[3], o1[3], o2[3];
    bool v0[3], v1[3], v2[3];
    for (int k = 0; k < 3; ++k) {
      v0[k] = conv_dst(iy, k, H, stride, pad, Ho, o0[k]);
      v1[k] = conv_dst(ix, k, W, stride, pad, Wo, o1[k]);
    }
    for (std::size_t iz = 0; iz < D; ++iz) {
      for (int k = 0; k < 3; ++k) v2[k] = conv_dst(iz, k, D, stride, pad, Do, o2[k]);
      T* gx = xg + (r * D + iz) * Ci;
      if constexpr (CI != 0) {
        T acc[CI];
        for (std::size_t ci = 0; ci < CI; ++ci) acc[ci] = T(0);
        for (int k0 = 0; k0 < 3; ++k0) {
          if (!v0[k0]) continue;
          for (int k1 = 0; k1 < 3; ++k1) {
            if (!v1[k1]) continue;
            for (int k2 = 0; k2 < 3; ++k2) {
              if (!v2[k2]) continue;
              const T* gr = g + ((o0[k0] * Wo + o1[k1]) * Do + o2[k2]) * Co;
              const T* wtap = wt + static_cast<std::size_t>((k0 * 3 + k1) * 3 + k2) * CI * Co;
              std::size_t c = 0;
              for (; c + 8 <= Co; c += 8) {
                const T* w0 = wtap + c * CI;
                for (std::size_t ci = 0; ci < CI; ++ci) {
                  T a = acc[ci];
                  a += gr[c] * w0[ci];
                  a += gr[c + 1] * w0[CI + ci];
                  a += gr[c + 2] * w0[2 * CI + ci];
                  a += gr[c + 3] * w0[3 * CI + ci];
                  a += gr[c + 4] * w0[4 * CI + ci];
                  a += gr[c + 5] * w0[5 * CI + ci];
                  a += gr[c + 6] * w0[6 * CI + ci];
                  a += gr[c + 7] * w0[7 * CI + ci];
                  acc[ci] = a;
                }
              }
              for (; c < Co; ++c) {
                T gc = gr[c];
                const T* wrow = wtap + c * CI;
                for (std::size_t ci = 0; ci < CI; ++ci) acc[ci] += gc * wrow[ci];
              }
            }
          }
        }
        for (std::size_t ci = 0; ci < CI; ++ci) gx[ci] += acc[ci];
      } else {
        for (int k0 = 0; k0 < 3; ++k0) {
          if (!v0[k0]) continue;
          for (int k1 = 0; k1 < 3; ++k1) {
            if (!v1[k1]) continue;
            for (int k2 = 0; k2 < 3; ++k2) {
              if (!v2[k2]) continue;
              const T* gr = g + ((o0[k0] * Wo + o1[k1]) * Do + o2[k2]) * Co;
              const T* wr = wv + static_cast<std::size_t>((k0 * 3 + k1) * 3 + k2) * Ci * Co;
              for (std::size_t ci = 0; ci < Ci; ++ci) {
                const T* wc = wr + ci * Co;
                T acc = T(0);
                for (std::size_t c = 0; c < Co; ++c) acc += gr[c] * wc[c];
                gx[ci] += acc;
              }
            }
          }
        }
      }
    }
  }
}

// Weight-gradient pass of the 3x3x3 convolution as a single sweep over
// output cells, applying a rank-1 update to the whole [27, Ci, Co] gradient
// block per cell. This reads the input and gradient volumes once instead of
// once per (tap, input channel), so it is the fast choice on one thread; the
// multi-thread path in conv3d splits work per weight row instead.
// Contributions land on each weight entry in ascending output-cell order in
// both variants, so they produce bitwise-identical gradients. CO is the
// output channel count as a compile-time constant (0 = runtime value).
template <std::size_t CO, class T>
void conv3d_wgrad_sweep(const T* xv, const T* g, T* gw, std::size_t H, std::size_t W, std::size_t D, std::size_t Ci,
                        std::size_t Co, std::size_t Ho, std::size_t Wo, std::size_t Do, int stride, Padding pad) {
  auto axis_table = [&](std::size_t n_out, std::size_t n_in, std::vector<std::size_t>& idx, std::vector<char>& ok) {
    idx.assign(n_out * 3, 0);
    ok.assign(n_out * 3, 0);
    for (std::size_t o = 0; o < n_out; ++o)
      for (int k = 0; k < 3; ++k) ok[o * 3 + k] = conv_src(o, k, n_in, stride, pad, idx[o * 3 + k]) ? 1 : 0;
  };
  std::vector<std::size_t> i0, i1, i2;
  std::vector<char> ok0, ok1, ok2;
  axis_table(Ho, H, i0, ok0);
  axis_table(Wo, W, i1, ok1);
  axis_table(Do, D, i2, ok2);
  for (std::size_t y = 0; y < Ho; ++y)
    for (std::size_t xo = 0; xo < Wo; ++xo)
      for (std::size_t zo = 0; zo < Do; ++zo) {
        const T* gr = g + ((y * Wo + xo) * Do + zo) * Co;
        for (int k0 = 0; k0 < 3; ++k0) {
          if (!ok0[y * 3 + k0]) continue;
          for (int k1 = 0; k1 < 3; ++k1) {
            if (!ok1[xo * 3 + k1]) continue;
            const T* xplane = xv + (i0[y * 3 + k0] * W + i1[xo * 3 + k1]) * D * Ci;
            for (int k2 = 0; k2 < 3; ++k2) {
              if (!ok2[zo * 3 + k2]) continue;
              const T* xr = xplane + i2[zo * 3 + k2] * Ci;
              T* gwt = gw + static_cast<std::size_t>((k0 * 3 + k1) * 3 + k2) * Ci * Co;
              std::size_t ci = 0;
              if constexpr (CO != 0) {
                // Four gradient rows per pass keep the channel loop innermost
                // and contiguous; each entry still receives exactly one
                // update per output cell, so the per-entry accumulation
                // order is unchanged.
                for (; ci + 4 <= Ci; ci += 4) {
                  const T x0 = xr[ci], x1 = xr[ci + 1], x2 = xr[ci + 2], x3 = xr[ci + 3];
                  T* g0 = gwt + ci * CO;
                  for (std::size_t c = 0; c < CO; ++c) {
                    T gc = gr[c];
                    g0[c] += x0 * gc;
                    g0[CO + c] += x1 * gc;
                    g0[2 * CO + c] += x2 * gc;
                    g0[3 * CO + c] += x3 * gc;
                  }
                }
              }
              for (; ci < Ci; ++ci) {
                T xi = xr[ci];
                T* gwr = gwt + ci * Co;
                for (std::size_t c = 0; c < Co; ++c) gwr[c] += xi * gr[c];
              }
            }
          }
        }
      }
}

}  // namespace detail

// x: [H, W, Ci], w: [3, 3, Ci, Co], optional bias [Co]. "Same" padding.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, Padding pad) {
  require(x.rank() == 3, ErrorKind::Dimension, "conv2d: input must be [H, W, Ci], got " + shape_str(x.shape()));
  require(w.rank() == 4 && w.shape()[0] == 3 && w.shape()[1] == 3, ErrorKind::Dimension,
          "conv2d: weight must be [3, 3, Ci, Co], got " + shape_str(w.shape()));
  require(stride == 1 || stride == 2, ErrorKind::Contract, "conv2d: stride must be 1 or 2");
  std::size_t H = x.shape()[0], W = x.shape()[1], Ci = x.shape()[2];
  require(w.shape()[2] == Ci, ErrorKind::Dimension, "conv2d: weight input channels " + std::to_string(w.shape()[2]) +
                                                        " != input channels " + std::to_string(Ci));
  std::size_t Co = w.shape()[3];
  bool has_bias = b.defined();
  if (has_bias)
    require(b.shape() == Shape{Co}, ErrorKind::Dimension, "conv2d: bias shape " + shape_str(b.shape()));
  std::size_t Ho = detail::conv_out_size(H, stride), Wo = detail::conv_out_size(W, stride);
  std::vector<T> out(Ho * Wo * Co);
  const auto& xv = x.values();
  const auto& wv = w.values();
  const T* bv = has_bias ? b.values().data() : nullptr;
  parallel_for(Ho, 4, [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y)
      for (std::size_t xo = 0; xo < Wo; ++xo) {
        T* o = out.data() + (y * Wo + xo) * Co;
        if (bv)
          for (std::size_t c = 0; c < Co; ++c) o[c] = bv[c];
        for (int k0 = 0; k0 < 3; ++k0) {
          std::size_t i0;
          if (!detail::conv_src(y, k0, H, stride, pad, i0)) continue;
          for (int k1 = 0; k1 < 3; ++k1) {
            std::size_t i1;
            if (!detail::conv_src(xo, k1, W, stride, pad, i1)) continue;
            const T* xr = xv.data() + (i0 * W + i1) * Ci;
            const T* wr = wv.data() + static_cast<std::size_t>(k0 * 3 + k1) * Ci * Co;
            for (std::size_t ci = 0; ci < Ci; ++ci) {
              T xi = xr[ci];
              const T* wc = wr + ci * Co;
              for (std::size_t c = 0; c < Co; ++c) o[c] += xi * wc[c];
            }
          }
        }
      }
  });
  std::vector<std::shared_ptr<Node<T>>> parents = {x.node(), w.node()};
  if (has_bias) parents.push_back(b.node());
  return detail::make_op_node<T>(
      "conv2d", {Ho, Wo, Co}, std::move(out), std::move(parents),
      [H, W, Ci, Co, Ho, Wo, stride, pad, has_bias](Node<T>* n) {
        return [n, H, W, Ci, Co, Ho, Wo, stride, pad, has_bias] {
          for (auto& p : n->parents) p->ensure_grad();
          Node<T>* xn = n->parents[0].get();
          Node<T>* wn = n->parents[1].get();
          const auto& g = n->grad;
          parallel_for(H, 4, [&](std::size_t y0, std::size_t y1) {
            for (std::size_t iy = y0; iy < y1; ++iy)
              for (std::size_t ix = 0; ix < W; ++ix) {
                T* gx = xn->grad.data() + (iy * W + ix) * Ci;
                for (int k0 = 0; k0 < 3; ++k0) {
                  std::size_t oy;
                  if (!detail::conv_dst(iy, k0, H, stride, pad, Ho, oy)) continue;
                  for (int k1 = 0; k1 < 3; ++k1) {
                    std::size_t ox;
                    if (!detail::conv_dst(ix, k1, W, stride, pad, Wo, ox)) continue;
                    const T* gr = g.data() + (oy * Wo + ox) * Co;
                    const T* wr = wn->value.data() + static_cast<std::size_t>(k0 * 3 + k1) * Ci * Co;
                    for (std::size_t ci = 0; ci < Ci; ++ci) {
                      const T* wc = wr + ci * Co;
                      T acc = T(0);
                      for (std::size_t c = 0; c < Co; ++c) acc += gr[c] * wc[c];
                      gx[ci] += acc;
                    }
                  }
                }
              }
          });
          parallel_for(9 * Ci, 4, [&](std::size_t t0, std::size_t t1) {
            for (std::size_t t = t0; t < t1; ++t) {
              std::size_t tap = t / Ci, ci = t % Ci;
              int k0 = static_cast<int>(tap / 3), k1 = static_cast<int>(tap % 3);
              T* gw = wn->grad.data() + (tap * Ci + ci) * Co;
              for (std::size_t y = 0; y < Ho; ++y) {
                std::size_t i0;
                if (!detail::conv_src(y, k0, H, stride, pad, i0)) continue;
                for (std::size_t xo = 0; xo < Wo; ++xo) {
                  std::size_t i1;
                  if (!detail::conv_src(xo, k1, W, stride, pad, i1)) continue;
                  T xi = xn->value[(i0 * W + i1) * Ci + ci];
                  const T* gr = g.data() + (y * Wo + xo) * Co;
                  for (std::size_t c = 0; c < Co; ++c) gw[c] += xi * gr[c];
                }
              }
            }
          });
          if (has_bias) {
            Node<T>* bn = n->parents[2].get();
            for (std::size_t cell = 0; cell < Ho * Wo; ++cell) {
              const T* gr = g.data() + cell * Co;
              for (std::size_t c = 0; c < Co; ++c) bn->grad[c] += gr[c];
            }
          }
        };
      });
}

// x: [H, W, D, Ci], w: [3, 3, 3, Ci, Co], optional bias [Co].
template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, Padding pad) {
  require(x.rank() == 4, ErrorKind::Dimension, "conv3d: input must be [H, W, D, Ci], got " + shape_str(x.shape()));
  require(w.rank() == 5 && w.shape()[0] == 3 && w.shape()[1] == 3 && w.shape()[2] == 3, ErrorKind::Dimension,
          "conv3d: weight must be [3, 3, 3, Ci, Co], got " + shape_str(w.shape()));
  require(stride == 1 || stride == 2, ErrorKind::Contract, "conv3d: stride must be 1 or 2");
  std::size_t H = x.shape()[0], W = x.shape()[1], D = x.shape()[2], Ci = x.shape()[3];
  require(w.shape()[3] == Ci, ErrorKind::Dimension, "conv3d: weight input channels " + std::to_string(w.shape()[3]) +
                                                        " != input channels " + std::to_string(Ci));
  std::size_t Co = w.shape()[4];
  bool has_bias = b.defined();
  if (has_bias)
    require(b.shape() == Shape{Co}, ErrorKind::Dimension, "conv3d: bias shape " + shape_str(b.shape()));
  std::size_t Ho = detail::conv_out_size(H, stride), Wo = detail::conv_out_size(W, stride),
              Do = detail::conv_out_size(D, stride);
  std::vector<T> out(Ho * Wo * Do * Co);
  const auto& xv = x.values();
  const auto& wv = w.values();
  const T* bv = has_bias ? b.values().data() : nullptr;
  parallel_for(Ho * Wo, 8, [&](std::size_t r0, std::size_t r1) {
    detail::with_channel_width(Co, [&](auto co_tag) {
      detail::conv3d_forward_rows<decltype(co_tag)::value>(xv.data(), wv.data(), bv, out.data(), r0, r1, H, W, D, Ci,
                                                           Co, Wo, Do, stride, pad);
    });
  });
  std::vector<std::shared_ptr<Node<T>>> parents = {x.node(), w.node()};
  if (has_bias) parents.push_back(b.node());
  return detail::make_op_node<T>(
      "conv3d", {Ho, Wo, Do, Co}, std::move(out), std::move(parents),
      [H, W, D, Ci, Co, Ho, Wo, Do, stride, pad, has_bias](Node<T>* n) {
        return [n, H, W, D, Ci, Co, Ho, Wo, Do, stride, pad, has_bias] {
          for (auto& p : n->parents) p->ensure_grad();
          Node<T>* xn = n->parents[0].get();
          Node<T>* wn = n->parents[1].get();
          const auto& g = n->grad;
          std::vector<T> wt(27 * Ci * Co);
          for (std::size_t tap = 0; tap < 27; ++tap)
            for (std::size_t ci = 0; ci < Ci; ++ci)
              for (std::size_t c = 0; c < Co; ++c) wt[(tap * Co + c) * Ci + ci] = wn->value[(tap * Ci + ci) * Co + c];
          parallel_for(H * W, 8, [&](std::size_t r0, std::size_t r1) {
            detail::with_channel_width(Ci, [&](auto ci_tag) {
              detail::conv3d_xgrad_rows<decltype(ci_tag)::value>(g.data(), wn->value.data(), wt.data(),
                                                                 xn->grad.data(), r0, r1, H, W, D, Ci, Co, Ho, Wo, Do,
                                                                 stride, pad);
            });
          });
          if (max_threads() <= 1) {
            detail::with_channel_width(Co, [&](auto co_tag) {
              detail::conv3d_wgrad_sweep<decltype(co_tag)::value>(xn->value.data(), g.data(), wn->grad.data(), H, W,
                                                                  D, Ci, Co, Ho, Wo, Do, stride, pad);
            });
          } else {
            parallel_for(27 * Ci, 4, [&](std::size_t t0, std::size_t t1) {
              for (std::size_t t = t0; t < t1; ++t) {
                std::size_t tap = t / Ci, ci = t % Ci;
                int k0 = static_cast<int>(tap / 9), k1 = static_cast<int>((tap / 3) % 3),
                    k2 = static_cast<int>(tap % 3);
                T* gw = wn->grad.data() + (tap * Ci + ci) * Co;
                for (std::size_t y = 0; y < Ho; ++y) {
                  std::size_t i0;
                  if (!detail::conv_src(y, k0, H, stride, pad, i0)) continue;
                  for (std::size_t xo = 0; xo < Wo; ++xo) {
                    std::size_t i1;
                    if (!detail::conv_src(xo, k1, W, stride, pad, i1)) continue;
                    for (std::size_t zo = 0; zo < Do; ++zo) {
                      std::size_t i2;
                      if (!detail::conv_src(zo, k2, D, stride, pad, i2)) continue;
                      T xi = xn->value[((i0 * W + i1) * D + i2) * Ci + ci];
                      const T* gr = g.data() + ((y * Wo + xo) * Do + zo) * Co;
                      for (std::size_t c = 0; c < Co; ++c) gw[c] += xi * gr[c];
                    }
                  }
                }
              }
            });
          }
          if (has_bias) {
            Node<T>* bn = n->parents[2].get();
            for (std::size_t cell = 0; cell < Ho * Wo * Do; ++cell) {
              const T* gr = g.data() + cell * Co;
              for (std::size_t c = 0; c < Co; ++c) bn->grad[c] += gr[c];
            }
          }
        };
      });
}

// Nearest-neighbor x2 upsampling over the leading `spatial` axes
// (channels-last). The adjoint sums each output cell back onto its source.
template <class T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x, std::size_t spatial) {
  require(spatial == 2 || spatial == 3, ErrorKind::Contract, "upsample_nearest2x: spatial rank must be 2 or 3");
  require(x.rank() == spatial + 1, ErrorKind::Dimension,
          "upsample_nearest2x: input rank " + std::to_string(x.rank()) + " != spatial + channels");
  const Shape& s = x.shape();
  std::size_t C = s[spatial];
  Shape out_shape = s;
  for (std::size_t i = 0; i < spatial; ++i) out_shape[i] = s[i] * 2;
  std::size_t H = s[0], W = s[1], D = spatial == 3 ? s[2] : 1;
  std::size_t Ho = H * 2, Wo = W * 2, Do = spatial == 3 ? D * 2 : 1;
  std::vector<T> out(numel(out_shape));
  const auto& xv = x.values();
  for (std::size_t y = 0; y < Ho; ++y)
    for (std::size_t xo = 0; xo < Wo; ++xo)
      for (std::size_t z = 0; z < Do; ++z) {
        const T* src = xv.data() + (((y / 2) * W + xo / 2) * D + z / 2) * C;
        T* dst = out.data() + ((y * Wo + xo) * Do + z) * C;
        for (std::size_t c = 0; c < C; ++c) dst[c] = src[c];
      }
  return detail::make_op_node<T>("upsample_nearest2x", std::move(out_shape), std::move(out), {x.node()},
                                 [H, W, D, Ho, Wo, Do, C, spatial](Node<T>* n) {
                                   return [n, H, W, D, Ho, Wo, Do, C] {
                                     n->parents[0]->ensure_grad();
                                     auto& ga = n->parents[0]->grad;
                                     for (std::size_t y = 0; y < Ho; ++y)
                                       for (std::size_t xo = 0; xo < Wo; ++xo)
                                         for (std::size_t z = 0; z < Do; ++z) {
                                           T* dst = ga.data() + (((y / 2) * W + xo / 2) * D + z / 2) * C;
                                           const T* src = n->grad.data() + ((y * Wo + xo) * Do + z) * C;
                                           for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
                                         }
                                   };
                                 });
}

// out[m] = x[idx[m]] viewing x as [rows, D] with D the trailing axis;
// adjoint scatter-adds in row order.
template <class T>
Tensor<T> take_rows(const Tensor<T>& x, std::vector<std::size_t> idx) {
  require(x.rank() >= 2, ErrorKind::Dimension, "take_rows: input must have rank >= 2, got " + shape_str(x.shape()));
  std::size_t D = x.shape().back(), N = x.size() / D, M = idx.size();
  for (std::size_t i : idx)
    require(i < N, ErrorKind::Dimension, "take_rows: index " + std::to_string(i) + " out of range " + std::to_string(N));
  std::vector<T> out(M * D);
  const auto& xv = x.values();
  for (std::size_t m = 0; m < M; ++m) {
    const T* src = xv.data() + idx[m] * D;
    T* dst = out.data() + m * D;
    for (std::size_t c = 0; c < D; ++c) dst[c] = src[c];
  }
  return detail::make_op_node<T>("take_rows", {M, D}, std::move(out), {x.node()},
                                 [idx = std::move(idx), D](Node<T>* n) {
                                   return [n, idx, D] {
                                     n->parents[0]->ensure_grad();
                                     auto& ga = n->parents[0]->grad;
                                     for (std::size_t m = 0; m < idx.size(); ++m) {
                                       T* dst = ga.data() + idx[m] * D;
                                       const T* src = n->grad.data() + m * D;
                                       for (std::size_t c = 0; c < D; ++c) dst[c] += src[c];
                                     }
                                   };
                                 });
}

// out[m] = sum_k w[m,k] * x[idx[m,k]] viewing x as [rows, D]; idx/w are
// M x K flat tables.
template <class T>
Tensor<T> gather_weighted(const Tensor<T>& x, std::vector<std::size_t> idx, std::vector<double> wts, std::size_t K) {
  require(x.rank() >= 2, ErrorKind::Dimension, "gather_weighted: input must have rank >= 2");
  require(K > 0 && idx.size() == wts.size() && idx.size() % K == 0, ErrorKind::Dimension,
          "gather_weighted: index/weight tables must be M x K");
  std::size_t D = x.shape().back(), N = x.size() / D, M = idx.size() / K;
  for (std::size_t i : idx)
    require(i < N, ErrorKind::Dimension, "gather_weighted: node index out of range");
  std::vector<T> out(M * D, T(0));
  const auto& xv = x.values();
  parallel_for(M, 256, [&](std::size_t m0, std::size_t m1) {
    for (std::size_t m = m0; m < m1; ++m) {
      T* dst = out.data() + m * D;
      for (std::size_t k = 0; k < K; ++k) {
        T wk = static_cast<T>(wts[m * K + k]);
        const T* src = xv.data() + idx[m * K + k] * D;
        for (std::size_t c = 0; c < D; ++c) dst[c] += wk * src[c];
      }
    }
  });
  return detail::make_op_node<T>("gather_weighted", {M, D}, std::move(out), {x.node()},
                                 [idx = std::move(idx), wts = std::move(wts), K, D](Node<T>* n) {
                                   return [n, idx, wts, K, D] {
                                     n->parents[0]->ensure_grad();
                                     auto& ga = n->parents[0]->grad;
                                     std::size_t M = idx.size() / K;
                                     for (std::size_t m = 0; m < M; ++m) {
                                       const T* src = n->grad.data() + m * D;
                                       for (std::size_t k = 0; k < K; ++k) {
                                         T wk = static_cast<T>(wts[m * K + k]);
                                         T* dst = ga.data() + idx[m * K + k] * D;
                                         for (std::size_t c = 0; c < D; ++c) dst[c] += wk * src[c];
                                       }
                                     }
                                   };
                                 });
}

// Averages point features into grid nodes; empty nodes stay zero.
template <class T>
Tensor<T> scatter_mean(const Tensor<T>& feat, const std::vector<std::size_t>& idx, std::size_t n_nodes) {
  require(feat.rank() == 2, ErrorKind::Dimension, "scatter_mean: features must be [N, D]");
  std::size_t N = feat.shape()[0], D = feat.shape()[1];
  require(idx.size() == N, ErrorKind::Dimension, "scatter_mean: index count " + std::to_string(idx.size()) +
                                                     " != point count " + std::to_string(N));
  for (std::size_t i : idx)
    require(i < n_nodes, ErrorKind::Dimension, "scatter_mean: node index out of range");
  std::vector<std::uint32_t> counts(n_nodes, 0);
  for (std::size_t i : idx) counts[i]++;
  std::vector<T> out(n_nodes * D, T(0));
  const auto& fv = feat.values();
  for (std::size_t p = 0; p < N; ++p) {
    T* dst = out.data() + idx[p] * D;
    const T* src = fv.data() + p * D;
    for (std::size_t c = 0; c < D; ++c) dst[c] += src[c];
  }
  for (std::size_t node = 0; node < n_nodes; ++node) {
    if (counts[node] == 0) continue;
    T inv = T(1) / static_cast<T>(counts[node]);
    T* dst = out.data() + node * D;
    for (std::size_t c = 0; c < D; ++c) dst[c] *= inv;
  }
  return detail::make_op_node<T>("scatter_mean", {n_nodes, D}, std::move(out), {feat.node()},
                                 [idx, counts = std::move(counts), D](Node<T>* n) {
                                   return [n, idx, counts, D] {
                                     n->parents[0]->ensure_grad();
                                     auto& ga = n->parents[0]->grad;
                                     for (std::size_t p = 0; p < idx.size(); ++p) {
                                       T inv = T(1) / static_cast<T>(counts[idx[p]]);
                                       const T* src = n->grad.data() + idx[p] * D;
                                       T* dst = ga.data() + p * D;
                                       for (std::size_t c = 0; c < D; ++c) dst[c] += inv * src[c];
                                     }
                                   };
                                 });
}

// Per-channel max of point features per node; empty nodes stay zero. The
// gradient routes to the first point attaining each max (scan in point order).
template <class T>
Tensor<T> scatter_max(const Tensor<T>& feat, const std::vector<std::size_t>& idx, std::size_t n_nodes) {
  require(feat.rank() == 2, ErrorKind::Dimension, "scatter_max: features must be [N, D]");
  std::size_t N = feat.shape()[0], D = feat.shape()[1];
  require(idx.size() == N, ErrorKind::Dimension, "scatter_max: index count mismatch");
  for (std::size_t i : idx)
    require(i < n_nodes, ErrorKind::Dimension, "scatter_max: node index out of range");
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> argmax(n_nodes * D, kNone);
  std::vector<T> out(n_nodes * D, T(0));
  const auto& fv = feat.values();
  for (std::size_t p = 0; p < N; ++p) {
    std::size_t node = idx[p];
    T* dst = out.data() + node * D;
    std::size_t* am = argmax.data() + node * D;
    const T* src = fv.data() + p * D;
    for (std::size_t c = 0; c < D; ++c) {
      if (am[c] == kNone || src[c] > dst[c]) {
        dst[c] = src[c];
        am[c] = p;
      }
    }
  }
  return detail::make_op_node<T>("scatter_max", {n_nodes, D}, std::move(out), {feat.node()},
                                 [argmax = std::move(argmax), D](Node<T>* n) {
                                   return [n, argmax, D] {
                                     n->parents[0]->ensure_grad();
                                     auto& ga = n->parents[0]->grad;
                                     constexpr std::size_t kNone = static_cast<std::size_t>(-1);
                                     for (std::size_t slot = 0; slot < argmax.size(); ++slot) {
                                       if (argmax[slot] == kNone) continue;
                                       ga[argmax[slot] * D + slot % D] += n->grad[slot];
                                     }
                                   };
                                 });
}

}  // namespace alto
