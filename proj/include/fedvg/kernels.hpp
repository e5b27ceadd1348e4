#pragma once

#include <cstdint>

// Dense/conv/pool inner loops. Every kernel exists twice: kernels::serial is
// the reference, kernels::omp adds OpenMP worksharing over independent output
// elements. Each output element is accumulated in the same order in both
// variants, so the two produce bit-identical results for any thread count;
// tests assert this. The unqualified wrappers dispatch on a process-wide flag.
namespace fedvg::kernels {

bool parallel_enabled();
void set_parallel(bool on);
int max_threads();

namespace serial {

void dense_forward(const double* x, const double* w, const double* b, double* y,
                   int64_t n, int64_t in, int64_t out);
void dense_backward_w(const double* x, const double* dy, double* dw,
                      int64_t n, int64_t in, int64_t out);
void dense_backward_b(const double* dy, double* db, int64_t n, int64_t out);
void dense_backward_x(const double* dy, const double* w, double* dx,
                      int64_t n, int64_t in, int64_t out);

void relu_forward(const double* x, double* y, int64_t n);
void relu_backward(const double* x, const double* dy, double* dx, int64_t n);

// NHWC activations, (OC,IC,KH,KW) weights, stride 1, valid padding.
void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    int64_t n, int64_t h, int64_t wid, int64_t ic,
                    int64_t oc, int64_t kh, int64_t kw);
void conv2d_backward_x(const double* dy, const double* w, double* dx,
                       int64_t n, int64_t h, int64_t wid, int64_t ic,
                       int64_t oc, int64_t kh, int64_t kw);
void conv2d_backward_w(const double* x, const double* dy, double* dw,
                       int64_t n, int64_t h, int64_t wid, int64_t ic,
                       int64_t oc, int64_t kh, int64_t kw);
void conv2d_backward_b(const double* dy, double* db,
                       int64_t n, int64_t oh, int64_t ow, int64_t oc);

// 2x2 window, stride 2, trailing row/col dropped when odd. argmax records the
// flat input offset of each window maximum (first max wins on ties).
void maxpool2_forward(const double* x, double* y, int64_t* argmax,
                      int64_t n, int64_t h, int64_t wid, int64_t c);
void maxpool2_backward(const double* dy, const int64_t* argmax, double* dx,
                       int64_t n, int64_t oh, int64_t ow, int64_t c);

}  // namespace serial

namespace omp {

void dense_forward(const double* x, const double* w, const double* b, double* y,
                   int64_t n, int64_t in, int64_t out);
void dense_backward_w(const double* x, const double* dy, double* dw,
                      int64_t n, int64_t in, int64_t out);
void dense_backward_b(const double* dy, double* db, int64_t n, int64_t out);
void dense_backward_x(const double* dy, const double* w, double* dx,
                      int64_t n, int64_t in, int64_t out);

void relu_forward(const double* x, double* y, int64_t n);
void relu_backward(const double* x, const double* dy, double* dx, int64_t n);

void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    int64_t n, int64_t h, int64_t wid, int64_t ic,
                    int64_t oc, int64_t kh, int64_t kw);
void conv2d_backward_x(const double* dy, const double* w, double* dx,
                       int64_t n, int64_t h, int64_t wid, int64_t ic,
                       int64_t oc, int64_t kh, int64_t kw);
void conv2d_backward_w(const double* x, const double* dy, double* dw,
                       int64_t n, int64_t h, int64_t wid, int64_t ic,
                       int64_t oc, int64_t kh, int64_t kw);
void conv2d_backward_b(const double* dy, double* db,
                       int64_t n, int64_t oh, int64_t ow, int64_t oc);

void maxpool2_forward(const double* x, double* y, int64_t* argmax,
                      int64_t n, int64_t h, int64_t wid, int64_t c);
void maxpool2_backward(const double* dy, const int64_t* argmax, double* dx,
                       int64_t n, int64_t oh, int64_t ow, int64_t c);

}  // namespace omp

void dense_forward(const double* x, const double* w, const double* b, double* y,
                   int64_t n, int64_t in, int64_t out);
void dense_backward_w(const double* x, const double* dy, double* dw,
                      int64_t n, int64_t in, int64_t out);
void dense_backward_b(const double* dy, double* db, int64_t n, int64_t out);
void dense_backward_x(const double* dy, const double* w, double* dx,
                      int64_t n, int64_t in, int64_t out);
void relu_forward(const double* x, double* y, int64_t n);
void relu_backward(const double* x, const double* dy, double* dx, int64_t n);
void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    int64_t n, int64_t h, int64_t wid, int64_t ic,
                    int64_t oc, int64_t kh, int64_t kw);
void conv2d_backward_x(const double* dy, const double* w, double* dx,
                       int64_t n, int64_t h, int64_t wid, int64_t ic,
                       int64_t oc, int64_t kh, int64_t kw);
void conv2d_backward_w(const double* x, const double* dy, double* dw,
                       int64_t n, int64_t h, int64_t wid, int64_t ic,
                       int64_t oc, int64_t kh, int64_t kw);
void conv2d_backward_b(const double* dy, double* db,
                       int64_t n, int64_t oh, int64_t ow, int64_t oc);
void maxpool2_forward(const double* x, double* y, int64_t* argmax,
                      int64_t n, int64_t h, int64_t wid, int64_t c);
void maxpool2_backward(const double* dy, const int64_t* argmax, double* dx,
                       int64_t n, int64_t oh, int64_t ow, int64_t c);

}  // namespace fedvg::kernels
