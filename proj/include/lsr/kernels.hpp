#ifndef LSR_KERNELS_HPP
#define LSR_KERNELS_HPP

#include <cstdint>

namespace lsr::kernels {

// Stride-1 2d convolution (cross-correlation) with zero padding.
// x: (ci,h,w), w: (co,ci,kh,kw), y: (co,oh,ow).
struct Conv2dDims {
    std::int64_t ci = 0, h = 0, w = 0;
    std::int64_t co = 0, kh = 0, kw = 0;
    std::int64_t pad = 0;

    std::int64_t oh() const { return h + 2 * pad - kh + 1; }
    std::int64_t ow() const { return w + 2 * pad - kw + 1; }
};

// OpenMP kernels. Every output element is owned by exactly one thread and
// accumulated in a fixed order, so results are bit-identical to the serial
// reference for any thread count.
void conv2d_forward(double* y, const double* x, const double* w, const double* b, const Conv2dDims& d);
void conv2d_backward_input(double* dx, const double* gy, const double* w, const Conv2dDims& d);
void conv2d_backward_weights(double* dw, double* db, const double* gy, const double* x, const Conv2dDims& d);

// 2x2 max pool, stride 2; h and w must be even. Ties resolve to the first
// element in row-major window order. argmax stores flat input indices.
void maxpool2x2_forward(double* y, std::int64_t* argmax, const double* x,
                        std::int64_t c, std::int64_t h, std::int64_t w);
void maxpool2x2_backward(double* dx, const double* gy, const std::int64_t* argmax,
                         std::int64_t c, std::int64_t h, std::int64_t w);

// Nearest-neighbor 2x upsample: (c,h,w) -> (c,2h,2w).
void upsample2x_forward(double* y, const double* x, std::int64_t c, std::int64_t h, std::int64_t w);
void upsample2x_backward(double* dx, const double* gy, std::int64_t c, std::int64_t h, std::int64_t w);

// Naive single-threaded reference implementations; kept for kernel tests
// and the benchmark target.
namespace serial {
void conv2d_forward(double* y, const double* x, const double* w, const double* b, const Conv2dDims& d);
void conv2d_backward_input(double* dx, const double* gy, const double* w, const Conv2dDims& d);
void conv2d_backward_weights(double* dw, double* db, const double* gy, const double* x, const Conv2dDims& d);
void maxpool2x2_forward(double* y, std::int64_t* argmax, const double* x,
                        std::int64_t c, std::int64_t h, std::int64_t w);
void maxpool2x2_backward(double* dx, const double* gy, const std::int64_t* argmax,
                         std::int64_t c, std::int64_t h, std::int64_t w);
void upsample2x_forward(double* y, const double* x, std::int64_t c, std::int64_t h, std::int64_t w);
void upsample2x_backward(double* dx, const double* gy, std::int64_t c, std::int64_t h, std::int64_t w);
} // namespace serial

} // namespace lsr::kernels

#endif
