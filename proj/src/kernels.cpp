#include "lsr/kernels.hpp"

#include <algorithm>

namespace lsr::kernels {

namespace {

inline double conv_out_element(const double* x, const double* w, double bias, const Conv2dDims& d,
                               std::int64_t co, std::int64_t oy, std::int64_t ox) {
    double acc = bias;
    for (std::int64_t ci = 0; ci < d.ci; ++ci) {
        const double* xc = x + ci * d.h * d.w;
        const double* wc = w + (co * d.ci + ci) * d.kh * d.kw;
        for (std::int64_t ky = 0; ky < d.kh; ++ky) {
            const std::int64_t iy = oy - d.pad + ky;
            if (iy < 0 || iy >= d.h) continue;
            for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                const std::int64_t ix = ox - d.pad + kx;
                if (ix < 0 || ix >= d.w) continue;
                acc += xc[iy * d.w + ix] * wc[ky * d.kw + kx];
            }
        }
    }
    return acc;
}

inline double conv_input_grad_element(const double* gy, const double* w, const Conv2dDims& d,
                                      std::int64_t ci, std::int64_t iy, std::int64_t ix) {
    const std::int64_t oh = d.oh(), ow = d.ow();
    double acc = 0.0;
    for (std::int64_t co = 0; co < d.co; ++co) {
        const double* gc = gy + co * oh * ow;
        const double* wc = w + (co * d.ci + ci) * d.kh * d.kw;
        for (std::int64_t ky = 0; ky < d.kh; ++ky) {
            const std::int64_t oy = iy + d.pad - ky;
            if (oy < 0 || oy >= oh) continue;
            for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                const std::int64_t ox = ix + d.pad - kx;
                if (ox < 0 || ox >= ow) continue;
                acc += gc[oy * ow + ox] * wc[ky * d.kw + kx];
            }
        }
    }
    return acc;
}

inline double conv_weight_grad_element(const double* gy, const double* x, const Conv2dDims& d,
                                       std::int64_t co, std::int64_t ci, std::int64_t ky, std::int64_t kx) {
    const std::int64_t oh = d.oh(), ow = d.ow();
    const double* gc = gy + co * oh * ow;
    const double* xc = x + ci * d.h * d.w;
    double acc = 0.0;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
        const std::int64_t iy = oy - d.pad + ky;
        if (iy < 0 || iy >= d.h) continue;
        for (std::int64_t ox = 0; ox < ow; ++ox) {
            const std::int64_t ix = ox - d.pad + kx;
            if (ix < 0 || ix >= d.w) continue;
            acc += gc[oy * ow + ox] * xc[iy * d.w + ix];
        }
    }
    return acc;
}

} // namespace

void conv2d_forward(double* y, const double* x, const double* w, const double* b, const Conv2dDims& d) {
    const std::int64_t oh = d.oh(), ow = d.ow();
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t co = 0; co < d.co; ++co)
        for (std::int64_t oy = 0; oy < oh; ++oy)
            for (std::int64_t ox = 0; ox < ow; ++ox)
                y[(co * oh + oy) * ow + ox] = conv_out_element(x, w, b ? b[co] : 0.0, d, co, oy, ox);
}

void conv2d_backward_input(double* dx, const double* gy, const double* w, const Conv2dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t ci = 0; ci < d.ci; ++ci)
        for (std::int64_t iy = 0; iy < d.h; ++iy)
            for (std::int64_t ix = 0; ix < d.w; ++ix)
                dx[(ci * d.h + iy) * d.w + ix] += conv_input_grad_element(gy, w, d, ci, iy, ix);
}

void conv2d_backward_weights(double* dw, double* db, const double* gy, const double* x, const Conv2dDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t co = 0; co < d.co; ++co)
        for (std::int64_t ci = 0; ci < d.ci; ++ci)
            for (std::int64_t ky = 0; ky < d.kh; ++ky)
                for (std::int64_t kx = 0; kx < d.kw; ++kx)
                    dw[((co * d.ci + ci) * d.kh + ky) * d.kw + kx] +=
                        conv_weight_grad_element(gy, x, d, co, ci, ky, kx);
    if (db) {
        const std::int64_t n = d.oh() * d.ow();
#pragma omp parallel for schedule(static)
        for (std::int64_t co = 0; co < d.co; ++co) {
            const double* gc = gy + co * n;
            double acc = 0.0;
            for (std::int64_t i = 0; i < n; ++i) acc += gc[i];
            db[co] += acc;
        }
    }
}

void maxpool2x2_forward(double* y, std::int64_t* argmax, const double* x,
                        std::int64_t c, std::int64_t h, std::int64_t w) {
    const std::int64_t oh = h / 2, ow = w / 2;
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t oy = 0; oy < oh; ++oy)
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                const double* xc = x + ch * h * w;
                std::int64_t best = (2 * oy) * w + 2 * ox;
                double bv = xc[best];
                const std::int64_t cand[3] = {(2 * oy) * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox,
                                              (2 * oy + 1) * w + 2 * ox + 1};
                for (std::int64_t k : cand)
                    if (xc[k] > bv) {
                        bv = xc[k];
                        best = k;
                    }
                y[(ch * oh + oy) * ow + ox] = bv;
                argmax[(ch * oh + oy) * ow + ox] = ch * h * w + best;
            }
}

void maxpool2x2_backward(double* dx, const double* gy, const std::int64_t* argmax,
                         std::int64_t c, std::int64_t h, std::int64_t w) {
    const std::int64_t n = c * (h / 2) * (w / 2);
    // pool windows are disjoint, so the scatter is race-free
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) dx[argmax[i]] += gy[i];
}

void upsample2x_forward(double* y, const double* x, std::int64_t c, std::int64_t h, std::int64_t w) {
    const std::int64_t oh = 2 * h, ow = 2 * w;
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t oy = 0; oy < oh; ++oy) {
            const double* xr = x + (ch * h + oy / 2) * w;
            double* yr = y + (ch * oh + oy) * ow;
            for (std::int64_t ox = 0; ox < ow; ++ox) yr[ox] = xr[ox / 2];
        }
}

void upsample2x_backward(double* dx, const double* gy, std::int64_t c, std::int64_t h, std::int64_t w) {
    const std::int64_t ow = 2 * w;
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t iy = 0; iy < h; ++iy)
            for (std::int64_t ix = 0; ix < w; ++ix) {
                const double* g0 = gy + (ch * 2 * h + 2 * iy) * ow + 2 * ix;
                const double* g1 = gy + (ch * 2 * h + 2 * iy + 1) * ow + 2 * ix;
                dx[(ch * h + iy) * w + ix] += (g0[0] + g0[1]) + (g1[0] + g1[1]);
            }
}

namespace serial {

void conv2d_forward(double* y, const double* x, const double* w, const double* b, const Conv2dDims& d) {
    const std::int64_t oh = d.oh(), ow = d.ow();
    for (std::int64_t co = 0; co < d.co; ++co)
        for (std::int64_t oy = 0; oy < oh; ++oy)
            for (std::int64_t ox = 0; ox < ow; ++ox)
                y[(co * oh + oy) * ow + ox] = conv_out_element(x, w, b ? b[co] : 0.0, d, co, oy, ox);
}

void conv2d_backward_input(double* dx, const double* gy, const double* w, const Conv2dDims& d) {
    for (std::int64_t ci = 0; ci < d.ci; ++ci)
        for (std::int64_t iy = 0; iy < d.h; ++iy)
            for (std::int64_t ix = 0; ix < d.w; ++ix)
                dx[(ci * d.h + iy) * d.w + ix] += conv_input_grad_element(gy, w, d, ci, iy, ix);
}

void conv2d_backward_weights(double* dw, double* db, const double* gy, const double* x, const Conv2dDims& d) {
    for (std::int64_t co = 0; co < d.co; ++co)
        for (std::int64_t ci = 0; ci < d.ci; ++ci)
            for (std::int64_t ky = 0; ky < d.kh; ++ky)
                for (std::int64_t kx = 0; kx < d.kw; ++kx)
                    dw[((co * d.ci + ci) * d.kh + ky) * d.kw + kx] +=
                        conv_weight_grad_element(gy, x, d, co, ci, ky, kx);
    if (db) {
        const std::int64_t n = d.oh() * d.ow();
        for (std::int64_t co = 0; co < d.co; ++co) {
            const double* gc = gy + co * n;
            double acc = 0.0;
            for (std::int64_t i = 0; i < n; ++i) acc += gc[i];
            db[co] += acc;
        }
    }
}

void maxpool2x2_forward(double* y, std::int64_t* argmax, const double* x,
                        std::int64_t c, std::int64_t h, std::int64_t w) {
    const std::int64_t oh = h / 2, ow = w / 2;
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t oy = 0; oy < oh; ++oy)
            for (std::int64_t ox = 0; ox < ow; ++ox) {
                const double* xc = x + ch * h * w;
                std::int64_t best = (2 * oy) * w + 2 * ox;
                double bv = xc[best];
                const std::int64_t cand[3] = {(2 * oy) * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox,
                                              (2 * oy + 1) * w + 2 * ox + 1};
                for (std::int64_t k : cand)
                    if (xc[k] > bv) {
                        bv = xc[k];
                        best = k;
                    }
                y[(ch * oh + oy) * ow + ox] = bv;
                argmax[(ch * oh + oy) * ow + ox] = ch * h * w + best;
            }
}

void maxpool2x2_backward(double* dx, const double* gy, const std::int64_t* argmax,
                         std::int64_t c, std::int64_t h, std::int64_t w) {
    const std::int64_t n = c * (h / 2) * (w / 2);
    for (std::int64_t i = 0; i < n; ++i) dx[argmax[i]] += gy[i];
}

void upsample2x_forward(double* y, const double* x, std::int64_t c, std::int64_t h, std::int64_t w) {
    const std::int64_t oh = 2 * h, ow = 2 * w;
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t oy = 0; oy < oh; ++oy)
            for (std::int64_t ox = 0; ox < ow; ++ox)
                y[(ch * oh + oy) * ow + ox] = x[(ch * h + oy / 2) * w + ox / 2];
}

void upsample2x_backward(double* dx, const double* gy, std::int64_t c, std::int64_t h, std::int64_t w) {
    const std::int64_t oh = 2 * h, ow = 2 * w;
    for (std::int64_t ch = 0; ch < c; ++ch)
        for (std::int64_t oy = 0; oy < oh; ++oy)
            for (std::int64_t ox = 0; ox < ow; ++ox)
                dx[(ch * h + oy / 2) * w + ox / 2] += gy[(ch * oh + oy) * ow + ox];
}

} // namespace serial

} // namespace lsr::kernels
