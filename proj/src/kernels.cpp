#include "fedvg/kernels.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fedvg::kernels {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() {
#ifdef _OPENMP
  return g_parallel.load(std::memory_order_relaxed);
#else
  return false;
#endif
}

void set_parallel(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace serial {

void dense_forward(const double* x, const double* w, const double* b, double* y,
                   int64_t n, int64_t in, int64_t out) {
  for (int64_t s = 0; s < n; ++s) {
    const double* xr = x + s * in;
    double* yr = y + s * out;
    for (int64_t o = 0; o < out; ++o) {
      double acc = b ? b[o] : 0.0;
      const double* wr = w + o * in;
      for (int64_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      yr[o] = acc;
    }
  }
}

void dense_backward_w(const double* x, const double* dy, double* dw,
                      int64_t n, int64_t in, int64_t out) {
  for (int64_t o = 0; o < out; ++o) {
    double* dwr = dw + o * in;
    for (int64_t i = 0; i < in; ++i) {
      double acc = 0.0;
      for (int64_t s = 0; s < n; ++s) acc += dy[s * out + o] * x[s * in + i];
      dwr[i] = acc;
    }
  }
}

void dense_backward_b(const double* dy, double* db, int64_t n, int64_t out) {
  for (int64_t o = 0; o < out; ++o) {
    double acc = 0.0;
    for (int64_t s = 0; s < n; ++s) acc += dy[s * out + o];
    db[o] = acc;
  }
}

void dense_backward_x(const double* dy, const double* w, double* dx,
                      int64_t n, int64_t in, int64_t out) {
  for (int64_t s = 0; s < n; ++s) {
    const double* dyr = dy + s * out;
    double* dxr = dx + s * in;
    for (int64_t i = 0; i < in; ++i) {
      double acc = 0.0;
      for (int64_t o = 0; o < out; ++o) acc += dyr[o] * w[o * in + i];
      dxr[i] = acc;
    }
  }
}

void relu_forward(const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    int64_t n, int64_t h, int64_t wid, int64_t ic,
                    int64_t oc, int64_t kh, int64_t kw) {
  const int64_t oh = h - kh + 1, ow = wid - kw + 1;
  for (int64_t s = 0; s < n; ++s) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        for (int64_t f = 0; f < oc; ++f) {
          double acc = b ? b[f] : 0.0;
          for (int64_t ky = 0; ky < kh; ++ky)
            for (int64_t kx = 0; kx < kw; ++kx)
              for (int64_t c = 0; c < ic; ++c)
                acc += x[((s * h + oy + ky) * wid + ox + kx) * ic + c] *
                       w[((f * ic + c) * kh + ky) * kw + kx];
          y[((s * oh + oy) * ow + ox) * oc + f] = acc;
        }
      }
    }
  }
}

void conv2d_backward_x(const double* dy, const double* w, double* dx,
                       int64_t n, int64_t h, int64_t wid, int64_t ic,
                       int64_t oc, int64_t kh, int64_t kw) {
  const int64_t oh = h - kh + 1, ow = wid - kw + 1;
  for (int64_t s = 0; s < n; ++s) {
    for (int64_t iy = 0; iy < h; ++iy) {
      for (int64_t ix = 0; ix < wid; ++ix) {
        for (int64_t c = 0; c < ic; ++c) {
          double acc = 0.0;
          for (int64_t ky = 0; ky < kh; ++ky) {
            const int64_t oy = iy - ky;
            if (oy < 0 || oy >= oh) continue;
            for (int64_t kx = 0; kx < kw; ++kx) {
              const int64_t ox = ix - kx;
              if (ox < 0 || ox >= ow) continue;
              for (int64_t f = 0; f < oc; ++f)
                acc += dy[((s * oh + oy) * ow + ox) * oc + f] *
                       w[((f * ic + c) * kh + ky) * kw + kx];
            }
          }
          dx[((s * h + iy) * wid + ix) * ic + c] = acc;
        }
      }
    }
  }
}

void conv2d_backward_w(const double* x, const double* dy, double* dw,
                       int64_t n, int64_t h, int64_t wid, int64_t ic,
                       int64_t oc, int64_t kh, int64_t kw) {
  const int64_t oh = h - kh + 1, ow = wid - kw + 1;
  for (int64_t f = 0; f < oc; ++f) {
    for (int64_t c = 0; c < ic; ++c) {
      for (int64_t ky = 0; ky < kh; ++ky) {
        for (int64_t kx = 0; kx < kw; ++kx) {
          double acc = 0.0;
          for (int64_t s = 0; s < n; ++s)
            for (int64_t oy = 0; oy < oh; ++oy)
              for (int64_t ox = 0; ox < ow; ++ox)
                acc += dy[((s * oh + oy) * ow + ox) * oc + f] *
                       x[((s * h + oy + ky) * wid + ox + kx) * ic + c];
          dw[((f * ic + c) * kh + ky) * kw + kx] = acc;
        }
      }
    }
  }
}

void conv2d_backward_b(const double* dy, double* db,
                       int64_t n, int64_t oh, int64_t ow, int64_t oc) {
  for (int64_t f = 0; f < oc; ++f) {
    double acc = 0.0;
    for (int64_t s = 0; s < n; ++s)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox)
          acc += dy[((s * oh + oy) * ow + ox) * oc + f];
    db[f] = acc;
  }
}

void maxpool2_forward(const double* x, double* y, int64_t* argmax,
                      int64_t n, int64_t h, int64_t wid, int64_t c) {
  const int64_t oh = h / 2, ow = wid / 2;
  for (int64_t s = 0; s < n; ++s) {
    for (int64_t py = 0; py < oh; ++py) {
      for (int64_t px = 0; px < ow; ++px) {
        for (int64_t ch = 0; ch < c; ++ch) {
          int64_t best = ((s * h + 2 * py) * wid + 2 * px) * c + ch;
          double bv = x[best];
          for (int64_t dy2 = 0; dy2 < 2; ++dy2) {
            for (int64_t dx2 = 0; dx2 < 2; ++dx2) {
              const int64_t idx = ((s * h + 2 * py + dy2) * wid + 2 * px + dx2) * c + ch;
              if (x[idx] > bv) {
                bv = x[idx];
                best = idx;
              }
            }
          }
          const int64_t o = ((s * oh + py) * ow + px) * c + ch;
          y[o] = bv;
          argmax[o] = best;
        }
      }
    }
  }
}

void maxpool2_backward(const double* dy, const int64_t* argmax, double* dx,
                       int64_t n, int64_t oh, int64_t ow, int64_t c) {
  const int64_t total = n * oh * ow * c;
  for (int64_t o = 0; o < total; ++o) dx[argmax[o]] += dy[o];
}

}  // namespace serial

namespace omp {

// Worksharing goes over output elements only; each element keeps the serial
// accumulation order, which is what makes serial/omp bit-identical.

void dense_forward(const double* x, const double* w, const double* b, double* y,
                   int64_t n, int64_t in, int64_t out) {
#pragma omp parallel for schedule(static)
  for (int64_t s = 0; s < n; ++s) {
    const double* xr = x + s * in;
    double* yr = y + s * out;
    for (int64_t o = 0; o < out; ++o) {
      double acc = b ? b[o] : 0.0;
      const double* wr = w + o * in;
      for (int64_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      yr[o] = acc;
    }
  }
}

void dense_backward_w(const double* x, const double* dy, double* dw,
                      int64_t n, int64_t in, int64_t out) {
#pragma omp parallel for schedule(static)
  for (int64_t o = 0; o < out; ++o) {
    double* dwr = dw + o * in;
    for (int64_t i = 0; i < in; ++i) {
      double acc = 0.0;
      for (int64_t s = 0; s < n; ++s) acc += dy[s * out + o] * x[s * in + i];
      dwr[i] = acc;
    }
  }
}

void dense_backward_b(const double* dy, double* db, int64_t n, int64_t out) {
#pragma omp parallel for schedule(static)
  for (int64_t o = 0; o < out; ++o) {
    double acc = 0.0;
    for (int64_t s = 0; s < n; ++s) acc += dy[s * out + o];
    db[o] = acc;
  }
}

void dense_backward_x(const double* dy, const double* w, double* dx,
                      int64_t n, int64_t in, int64_t out) {
#pragma omp parallel for schedule(static)
  for (int64_t s = 0; s < n; ++s) {
    const double* dyr = dy + s * out;
    double* dxr = dx + s * in;
    for (int64_t i = 0; i < in; ++i) {
      double acc = 0.0;
      for (int64_t o = 0; o < out; ++o) acc += dyr[o] * w[o * in + i];
      dxr[i] = acc;
    }
  }
}

void relu_forward(const double* x, double* y, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, double* dx, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    int64_t n, int64_t h, int64_t wid, int64_t ic,
                    int64_t oc, int64_t kh, int64_t kw) {
  const int64_t oh = h - kh + 1, ow = wid - kw + 1;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t s = 0; s < n; ++s) {
    for (int64_t oy = 0; oy < oh; ++oy) {
      for (int64_t ox = 0; ox < ow; ++ox) {
        for (int64_t f = 0; f < oc; ++f) {
          double acc = b ? b[f] : 0.0;
          for (int64_t ky = 0; ky < kh; ++ky)
            for (int64_t kx = 0; kx < kw; ++kx)
              for (int64_t c = 0; c < ic; ++c)
                acc += x[((s * h + oy + ky) * wid + ox + kx) * ic + c] *
                       w[((f * ic + c) * kh + ky) * kw + kx];
          y[((s * oh + oy) * ow + ox) * oc + f] = acc;
        }
      }
    }
  }
}

void conv2d_backward_x(const double* dy, const double* w, double* dx,
                       int64_t n, int64_t h, int64_t wid, int64_t ic,
                       int64_t oc, int64_t kh, int64_t kw) {
  const int64_t oh = h - kh + 1, ow = wid - kw + 1;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t s = 0; s < n; ++s) {
    for (int64_t iy = 0; iy < h; ++iy) {
      for (int64_t ix = 0; ix < wid; ++ix) {
        for (int64_t c = 0; c < ic; ++c) {
          double acc = 0.0;
          for (int64_t ky = 0; ky < kh; ++ky) {
            const int64_t oy = iy - ky;
            if (oy < 0 || oy >= oh) continue;
            for (int64_t kx = 0; kx < kw; ++kx) {
              const int64_t ox = ix - kx;
              if (ox < 0 || ox >= ow) continue;
              for (int64_t f = 0; f < oc; ++f)
                acc += dy[((s * oh + oy) * ow + ox) * oc + f] *
                       w[((f * ic + c) * kh + ky) * kw + kx];
            }
          }
          dx[((s * h + iy) * wid + ix) * ic + c] = acc;
        }
      }
    }
  }
}

void conv2d_backward_w(const double* x, const double* dy, double* dw,
                       int64_t n, int64_t h, int64_t wid, int64_t ic,
                       int64_t oc, int64_t kh, int64_t kw) {
  const int64_t oh = h - kh + 1, ow = wid - kw + 1;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t f = 0; f < oc; ++f) {
    for (int64_t c = 0; c < ic; ++c) {
      for (int64_t ky = 0; ky < kh; ++ky) {
        for (int64_t kx = 0; kx < kw; ++kx) {
          double acc = 0.0;
          for (int64_t s = 0; s < n; ++s)
            for (int64_t oy = 0; oy < oh; ++oy)
              for (int64_t ox = 0; ox < ow; ++ox)
                acc += dy[((s * oh + oy) * ow + ox) * oc + f] *
                       x[((s * h + oy + ky) * wid + ox + kx) * ic + c];
          dw[((f * ic + c) * kh + ky) * kw + kx] = acc;
        }
      }
    }
  }
}

void conv2d_backward_b(const double* dy, double* db,
                       int64_t n, int64_t oh, int64_t ow, int64_t oc) {
#pragma omp parallel for schedule(static)
  for (int64_t f = 0; f < oc; ++f) {
    double acc = 0.0;
    for (int64_t s = 0; s < n; ++s)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox)
          acc += dy[((s * oh + oy) * ow + ox) * oc + f];
    db[f] = acc;
  }
}

void maxpool2_forward(const double* x, double* y, int64_t* argmax,
                      int64_t n, int64_t h, int64_t wid, int64_t c) {
  const int64_t oh = h / 2, ow = wid / 2;
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t s = 0; s < n; ++s) {
    for (int64_t py = 0; py < oh; ++py) {
      for (int64_t px = 0; px < ow; ++px) {
        for (int64_t ch = 0; ch < c; ++ch) {
          int64_t best = ((s * h + 2 * py) * wid + 2 * px) * c + ch;
          double bv = x[best];
          for (int64_t dy2 = 0; dy2 < 2; ++dy2) {
            for (int64_t dx2 = 0; dx2 < 2; ++dx2) {
              const int64_t idx = ((s * h + 2 * py + dy2) * wid + 2 * px + dx2) * c + ch;
              if (x[idx] > bv) {
                bv = x[idx];
                best = idx;
              }
            }
          }
          const int64_t o = ((s * oh + py) * ow + px) * c + ch;
          y[o] = bv;
          argmax[o] = best;
        }
      }
    }
  }
}

void maxpool2_backward(const double* dy, const int64_t* argmax, double* dx,
                       int64_t n, int64_t oh, int64_t ow, int64_t c) {
  // Window argmaxes are disjoint (stride == window), so the scatter is safe.
  const int64_t total = n * oh * ow * c;
#pragma omp parallel for schedule(static)
  for (int64_t o = 0; o < total; ++o) dx[argmax[o]] += dy[o];
}

}  // namespace omp

#define FEDVG_DISPATCH(fn, ...) \
  do {                          \
    if (parallel_enabled())     \
      omp::fn(__VA_ARGS__);     \
    else                        \
      serial::fn(__VA_ARGS__);  \
  } while (0)

void dense_forward(const double* x, const double* w, const double* b, double* y,
                   int64_t n, int64_t in, int64_t out) {
  FEDVG_DISPATCH(dense_forward, x, w, b, y, n, in, out);
}
void dense_backward_w(const double* x, const double* dy, double* dw,
                      int64_t n, int64_t in, int64_t out) {
  FEDVG_DISPATCH(dense_backward_w, x, dy, dw, n, in, out);
}
void dense_backward_b(const double* dy, double* db, int64_t n, int64_t out) {
  FEDVG_DISPATCH(dense_backward_b, dy, db, n, out);
}
void dense_backward_x(const double* dy, const double* w, double* dx,
                      int64_t n, int64_t in, int64_t out) {
  FEDVG_DISPATCH(dense_backward_x, dy, w, dx, n, in, out);
}
void relu_forward(const double* x, double* y, int64_t n) {
  FEDVG_DISPATCH(relu_forward, x, y, n);
}
void relu_backward(const double* x, const double* dy, double* dx, int64_t n) {
  FEDVG_DISPATCH(relu_backward, x, dy, dx, n);
}
void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    int64_t n, int64_t h, int64_t wid, int64_t ic,
                    int64_t oc, int64_t kh, int64_t kw) {
  FEDVG_DISPATCH(conv2d_forward, x, w, b, y, n, h, wid, ic, oc, kh, kw);
}
void conv2d_backward_x(const double* dy, const double* w, double* dx,
                       int64_t n, int64_t h, int64_t wid, int64_t ic,
                       int64_t oc, int64_t kh, int64_t kw) {
  FEDVG_DISPATCH(conv2d_backward_x, dy, w, dx, n, h, wid, ic, oc, kh, kw);
}
void conv2d_backward_w(const double* x, const double* dy, double* dw,
                       int64_t n, int64_t h, int64_t wid, int64_t ic,
                       int64_t oc, int64_t kh, int64_t kw) {
  FEDVG_DISPATCH(conv2d_backward_w, x, dy, dw, n, h, wid, ic, oc, kh, kw);
}
void conv2d_backward_b(const double* dy, double* db,
                       int64_t n, int64_t oh, int64_t ow, int64_t oc) {
  FEDVG_DISPATCH(conv2d_backward_b, dy, db, n, oh, ow, oc);
}
void maxpool2_forward(const double* x, double* y, int64_t* argmax,
                      int64_t n, int64_t h, int64_t wid, int64_t c) {
  FEDVG_DISPATCH(maxpool2_forward, x, y, argmax, n, h, wid, c);
}
void maxpool2_backward(const double* dy, const int64_t* argmax, double* dx,
                       int64_t n, int64_t oh, int64_t ow, int64_t c) {
  FEDVG_DISPATCH(maxpool2_backward, dy, argmax, dx, n, oh, ow, c);
}

#undef FEDVG_DISPATCH

}  // namespace fedvg::kernels
