// Copyright (c) 2026, CortexNet contributors
// SPDX-License-Identifier: Apache-2.0

#include "cortex/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

namespace cortex {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

struct Dims {
    std::int64_t batch, channels, height, width;
    bool batched;
    std::int64_t plane() const { return height * width; }
    std::int64_t item() const { return channels * height * width; }
};

template <typename T>
Dims spatial_dims(const Tensor<T>& x, const char* op) {
    if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3), true};
    if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2), false};
    throw ShapeError(std::string(op) + ": expected C×H×W or B×C×H×W input, got " + shape_str(x.shape()));
}

Shape make_spatial_shape(const Dims& d, std::int64_t c, std::int64_t h, std::int64_t w) {
    if (d.batched) return {d.batch, c, h, w};
    return {c, h, w};
}

template <typename F>
void parallel_rows(std::int64_t n, F&& fn) {
    const int threads = static_cast<int>(std::min<std::int64_t>(max_threads(), n));
    if (threads <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int k = 0; k < threads; ++k) {
        pool.emplace_back([&, k] {
            for (std::int64_t i = k; i < n; i += threads) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

// Unfolds a C×H×W plane stack for a 3×3 / stride 2 / pad 1 kernel into a
// (C·9)×(H/2·W/2) matrix. `col2im` is its exact adjoint.
template <typename T>
void im2col(const T* in, std::int64_t c_in, std::int64_t h, std::int64_t w, T* col) {
    const std::int64_t ho = h / 2, wo = w / 2;
    for (std::int64_t c = 0; c < c_in; ++c) {
        const T* plane = in + c * h * w;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                T* row = col + ((c * 9) + ky * 3 + kx) * ho * wo;
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                    const std::int64_t iy = oy * 2 - 1 + ky;
                    T* dst = row + oy * wo;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + wo, T(0));
                        continue;
                    }
                    const T* src = plane + iy * w;
                    for (std::int64_t ox = 0; ox < wo; ++ox) {
                        const std::int64_t ix = ox * 2 - 1 + kx;
                        dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* col, std::int64_t c_in, std::int64_t h, std::int64_t w, T* out) {
    const std::int64_t ho = h / 2, wo = w / 2;
    for (std::int64_t c = 0; c < c_in; ++c) {
        T* plane = out + c * h * w;
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = col + ((c * 9) + ky * 3 + kx) * ho * wo;
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                    const std::int64_t iy = oy * 2 - 1 + ky;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = row + oy * wo;
                    T* dst = plane + iy * w;
                    for (std::int64_t ox = 0; ox < wo; ++ox) {
                        const std::int64_t ix = ox * 2 - 1 + kx;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

void check_kernel(const Shape& w, const char* op) {
    if (w.size() != 4 || w[2] != 3 || w[3] != 3) {
        throw ShapeError(std::string(op) + ": weight must be N×M×3×3, got " + shape_str(w));
    }
}

}  // namespace

int max_threads() {
    static const int cap = [] {
        const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
        if (const char* env = std::getenv("CORTEX_THREADS")) {
            const int v = std::atoi(env);
            if (v >= 1) return static_cast<int>(std::min<unsigned>(static_cast<unsigned>(v), hw));
        }
        return static_cast<int>(hw);
    }();
    return cap;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    const Dims d = spatial_dims(input, "conv2d");
    check_kernel(weight.shape(), "conv2d");
    const std::int64_t c_out = weight.dim(0);
    if (weight.dim(1) != d.channels) {
        throw ShapeError("conv2d: input has " + std::to_string(d.channels) + " channels, weight expects " +
                         std::to_string(weight.dim(1)));
    }
    if (bias.rank() != 1 || bias.dim(0) != c_out) throw ShapeError("conv2d: bias must have C_out entries");
    if (d.height < 2 || d.width < 2 || d.height % 2 || d.width % 2) {
        throw ShapeError("conv2d: spatial extents must be even and >= 2, got " + shape_str(input.shape()));
    }
    const std::int64_t ho = d.height / 2, wo = d.width / 2, k = d.channels * 9, p = ho * wo;

    Tensor<T> out(make_spatial_shape(d, c_out, ho, wo));
    const bool record = Tape<T>::should_record({&input, &weight, &bias});
    std::vector<std::vector<T>> cols(static_cast<std::size_t>(d.batch));

    ConstMapMat<T> wmat(weight.data().data(), c_out, k);
    const T* x = input.data().data();
    T* y = out.mutable_data().data();
    const T* b = bias.data().data();
    parallel_rows(d.batch, [&](std::int64_t n) {
        auto& col = cols[static_cast<std::size_t>(n)];
        col.resize(static_cast<std::size_t>(k * p));
        im2col(x + n * d.item(), d.channels, d.height, d.width, col.data());
        MapMat<T> ymat(y + n * c_out * p, c_out, p);
        ymat.noalias() = wmat * ConstMapMat<T>(col.data(), k, p);
        for (std::int64_t c = 0; c < c_out; ++c) ymat.row(c).array() += b[c];
    });

    if (record) {
        auto xi = input.impl_ptr(), wi = weight.impl_ptr(), bi = bias.impl_ptr();
        Tape<T>::active()->record(
            {xi, wi, bi}, out,
            [xi, wi, bi, d, c_out, k, p, cols = std::move(cols)](std::span<const T> g) {
                ConstMapMat<T> wm(wi->data.data(), c_out, k);
                if (wi->requires_grad) {
                    MapMat<T> gw(wi->grad_buffer().data(), c_out, k);
                    for (std::int64_t n = 0; n < d.batch; ++n) {
                        ConstMapMat<T> gy(g.data() + n * c_out * p, c_out, p);
                        gw.noalias() += gy * ConstMapMat<T>(cols[static_cast<std::size_t>(n)].data(), k, p).transpose();
                    }
                }
                if (bi->requires_grad) {
                    auto gb = bi->grad_buffer();
                    for (std::int64_t n = 0; n < d.batch; ++n) {
                        for (std::int64_t c = 0; c < c_out; ++c) {
                            const T* row = g.data() + (n * c_out + c) * p;
                            T s = 0;
                            for (std::int64_t i = 0; i < p; ++i) s += row[i];
                            gb[static_cast<std::size_t>(c)] += s;
                        }
                    }
                }
                if (xi->requires_grad) {
                    T* gx = xi->grad_buffer().data();
                    parallel_rows(d.batch, [&](std::int64_t n) {
                        std::vector<T> dcol(static_cast<std::size_t>(k * p));
                        MapMat<T>(dcol.data(), k, p).noalias() =
                            wm.transpose() * ConstMapMat<T>(g.data() + n * c_out * p, c_out, p);
                        col2im(dcol.data(), d.channels, d.height, d.width, gx + n * d.item());
                    });
                }
            });
    }
    return out;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    const Dims d = spatial_dims(input, "conv_transpose2d");
    check_kernel(weight.shape(), "conv_transpose2d");
    if (weight.dim(0) != d.channels) {
        throw ShapeError("conv_transpose2d: input has " + std::to_string(d.channels) +
                         " channels, weight expects " + std::to_string(weight.dim(0)));
    }
    const std::int64_t c_out = weight.dim(1);
    if (bias.rank() != 1 || bias.dim(0) != c_out) {
        throw ShapeError("conv_transpose2d: bias must have C_out entries");
    }
    const std::int64_t c_in = d.channels, p = d.plane(), k = c_out * 9;
    const std::int64_t h2 = d.height * 2, w2 = d.width * 2, out_item = c_out * h2 * w2;

    Tensor<T> out(make_spatial_shape(d, c_out, h2, w2));
    const bool record = Tape<T>::should_record({&input, &weight, &bias});

    ConstMapMat<T> wmat(weight.data().data(), c_in, k);
    const T* x = input.data().data();
    T* y = out.mutable_data().data();
    const T* b = bias.data().data();
    parallel_rows(d.batch, [&](std::int64_t n) {
        std::vector<T> col(static_cast<std::size_t>(k * p));
        MapMat<T>(col.data(), k, p).noalias() = wmat.transpose() * ConstMapMat<T>(x + n * d.item(), c_in, p);
        T* yn = y + n * out_item;
        col2im(col.data(), c_out, h2, w2, yn);
        for (std::int64_t c = 0; c < c_out; ++c) {
            T* plane = yn + c * h2 * w2;
            for (std::int64_t i = 0; i < h2 * w2; ++i) plane[i] += b[c];
        }
    });

    if (record) {
        auto xi = input.impl_ptr(), wi = weight.impl_ptr(), bi = bias.impl_ptr();
        Tape<T>::active()->record({xi, wi, bi}, out, [xi, wi, bi, d, c_in, c_out, p, k, h2, w2, out_item](std::span<const T> g) {
            ConstMapMat<T> wm(wi->data.data(), c_in, k);
            std::vector<std::vector<T>> dcols(static_cast<std::size_t>(d.batch));
            parallel_rows(d.batch, [&](std::int64_t n) {
                auto& dcol = dcols[static_cast<std::size_t>(n)];
                dcol.resize(static_cast<std::size_t>(k * p));
                im2col(g.data() + n * out_item, c_out, h2, w2, dcol.data());
            });
            if (xi->requires_grad) {
                T* gx = xi->grad_buffer().data();
                parallel_rows(d.batch, [&](std::int64_t n) {
                    MapMat<T>(gx + n * d.item(), c_in, p).noalias() +=
                        wm * ConstMapMat<T>(dcols[static_cast<std::size_t>(n)].data(), k, p);
                });
            }
            if (wi->requires_grad) {
                MapMat<T> gw(wi->grad_buffer().data(), c_in, k);
                for (std::int64_t n = 0; n < d.batch; ++n) {
                    gw.noalias() += ConstMapMat<T>(xi->data.data() + n * d.item(), c_in, p) *
                                    ConstMapMat<T>(dcols[static_cast<std::size_t>(n)].data(), k, p).transpose();
                }
            }
            if (bi->requires_grad) {
                auto gb = bi->grad_buffer();
                for (std::int64_t n = 0; n < d.batch; ++n) {
                    for (std::int64_t c = 0; c < c_out; ++c) {
                        const T* plane = g.data() + n * out_item + c * h2 * w2;
                        T s = 0;
                        for (std::int64_t i = 0; i < h2 * w2; ++i) s += plane[i];
                        gb[static_cast<std::size_t>(c)] += s;
                    }
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    Tensor<T> out(input.shape());
    auto x = input.data();
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
    if (Tape<T>::should_record({&input})) {
        auto xi = input.impl_ptr();
        Tape<T>::active()->record({xi}, out, [xi](std::span<const T> g) {
            auto gx = xi->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (xi->data[i] > T(0)) gx[i] += g[i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor<T> out(a.shape());
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = a.data()[i] + b.data()[i];
    if (Tape<T>::should_record({&a, &b})) {
        auto ai = a.impl_ptr(), bi = b.impl_ptr();
        Tape<T>::active()->record({ai, bi}, out, [ai, bi](std::span<const T> g) {
            if (ai->requires_grad) ai->accumulate_grad(g);
            if (bi->requires_grad) bi->accumulate_grad(g);
        });
    }
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double factor) {
    Tensor<T> out(x.shape());
    const T f = static_cast<T>(factor);
    auto y = out.mutable_data();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = f * x.data()[i];
    if (Tape<T>::should_record({&x})) {
        auto xi = x.impl_ptr();
        Tape<T>::active()->record({xi}, out, [xi, f](std::span<const T> g) {
            auto gx = xi->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += f * g[i];
        });
    }
    return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const Dims da = spatial_dims(a, "concat_channels");
    const Dims db = spatial_dims(b, "concat_channels");
    if (da.batched != db.batched || da.batch != db.batch || da.height != db.height || da.width != db.width) {
        throw ShapeError("concat_channels: incompatible " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
    const std::int64_t c = da.channels + db.channels, p = da.plane();
    Tensor<T> out(make_spatial_shape(da, c, da.height, da.width));
    T* y = out.mutable_data().data();
    for (std::int64_t n = 0; n < da.batch; ++n) {
        std::copy_n(a.data().data() + n * da.item(), da.item(), y + n * c * p);
        std::copy_n(b.data().data() + n * db.item(), db.item(), y + n * c * p + da.item());
    }
    if (Tape<T>::should_record({&a, &b})) {
        auto ai = a.impl_ptr(), bi = b.impl_ptr();
        Tape<T>::active()->record({ai, bi}, out, [ai, bi, da, db, c, p](std::span<const T> g) {
            for (std::int64_t n = 0; n < da.batch; ++n) {
                const T* gn = g.data() + n * c * p;
                if (ai->requires_grad) {
                    T* ga = ai->grad_buffer().data() + n * da.item();
                    for (std::int64_t i = 0; i < da.item(); ++i) ga[i] += gn[i];
                }
                if (bi->requires_grad) {
                    T* gb = bi->grad_buffer().data() + n * db.item();
                    for (std::int64_t i = 0; i < db.item(); ++i) gb[i] += gn[da.item() + i];
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
    const Dims d = spatial_dims(input, "global_avg_pool");
    Shape shape = d.batched ? Shape{d.batch, d.channels} : Shape{d.channels};
    Tensor<T> out(shape);
    const std::int64_t p = d.plane();
    auto y = out.mutable_data();
    for (std::int64_t i = 0; i < d.batch * d.channels; ++i) {
        const T* plane = input.data().data() + i * p;
        double s = 0;
        for (std::int64_t j = 0; j < p; ++j) s += plane[j];
        y[static_cast<std::size_t>(i)] = static_cast<T>(s / static_cast<double>(p));
    }
    if (Tape<T>::should_record({&input})) {
        auto xi = input.impl_ptr();
        Tape<T>::active()->record({xi}, out, [xi, d, p](std::span<const T> g) {
            auto gx = xi->grad_buffer();
            const T inv = T(1) / static_cast<T>(p);
            for (std::int64_t i = 0; i < d.batch * d.channels; ++i) {
                const T v = g[static_cast<std::size_t>(i)] * inv;
                for (std::int64_t j = 0; j < p; ++j) gx[static_cast<std::size_t>(i * p + j)] += v;
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (weight.rank() != 2) throw ShapeError("linear: weight must be K×F");
    const std::int64_t k = weight.dim(0), f = weight.dim(1);
    if (bias.rank() != 1 || bias.dim(0) != k) throw ShapeError("linear: bias must have K entries");
    if ((input.rank() != 1 && input.rank() != 2) || input.dim(-1) != f) {
        throw ShapeError("linear: input " + shape_str(input.shape()) + " incompatible with weight " +
                         shape_str(weight.shape()));
    }
    const std::int64_t b = input.rank() == 2 ? input.dim(0) : 1;
    Tensor<T> out(input.rank() == 2 ? Shape{b, k} : Shape{k});
    ConstMapMat<T> x(input.data().data(), b, f), w(weight.data().data(), k, f);
    MapMat<T> y(out.mutable_data().data(), b, k);
    y.noalias() = x * w.transpose();
    for (std::int64_t n = 0; n < b; ++n)
        for (std::int64_t j = 0; j < k; ++j) y(n, j) += bias.data()[static_cast<std::size_t>(j)];
    if (Tape<T>::should_record({&input, &weight, &bias})) {
        auto xi = input.impl_ptr(), wi = weight.impl_ptr(), bi = bias.impl_ptr();
        Tape<T>::active()->record({xi, wi, bi}, out, [xi, wi, bi, b, k, f](std::span<const T> g) {
            ConstMapMat<T> gy(g.data(), b, k);
            if (xi->requires_grad) {
                MapMat<T>(xi->grad_buffer().data(), b, f).noalias() += gy * ConstMapMat<T>(wi->data.data(), k, f);
            }
            if (wi->requires_grad) {
                MapMat<T>(wi->grad_buffer().data(), k, f).noalias() +=
                    gy.transpose() * ConstMapMat<T>(xi->data.data(), b, f);
            }
            if (bi->requires_grad) {
                auto gb = bi->grad_buffer();
                for (std::int64_t n = 0; n < b; ++n)
                    for (std::int64_t j = 0; j < k; ++j) gb[static_cast<std::size_t>(j)] += gy(n, j);
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    if (logits.rank() < 1) throw ShapeError("softmax: needs at least one dimension");
    const std::int64_t k = logits.dim(-1), rows = logits.numel() / k;
    Tensor<T> out(logits.shape());
    auto y = out.mutable_data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* l = logits.data().data() + r * k;
        T* s = y.data() + r * k;
        const T m = *std::max_element(l, l + k);
        double z = 0;
        for (std::int64_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(l[j] - m));
        for (std::int64_t j = 0; j < k; ++j) s[j] = static_cast<T>(std::exp(static_cast<double>(l[j] - m)) / z);
    }
    if (Tape<T>::should_record({&logits})) {
        auto xi = logits.impl_ptr();
        std::vector<T> probs(y.begin(), y.end());
        Tape<T>::active()->record({xi}, out, [xi, probs = std::move(probs), k, rows](std::span<const T> g) {
            auto gx = xi->grad_buffer();
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* s = probs.data() + r * k;
                const T* gr = g.data() + r * k;
                double dot = 0;
                for (std::int64_t j = 0; j < k; ++j) dot += static_cast<double>(gr[j]) * s[j];
                for (std::int64_t j = 0; j < k; ++j)
                    gx[static_cast<std::size_t>(r * k + j)] += s[j] * (gr[j] - static_cast<T>(dot));
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& logits) {
    if (logits.rank() < 1) throw ShapeError("log_softmax: needs at least one dimension");
    const std::int64_t k = logits.dim(-1), rows = logits.numel() / k;
    Tensor<T> out(logits.shape());
    auto y = out.mutable_data();
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* l = logits.data().data() + r * k;
        const T m = *std::max_element(l, l + k);
        double z = 0;
        for (std::int64_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(l[j] - m));
        const double lz = std::log(z);
        for (std::int64_t j = 0; j < k; ++j)
            y[static_cast<std::size_t>(r * k + j)] = static_cast<T>(static_cast<double>(l[j] - m) - lz);
    }
    if (Tape<T>::should_record({&logits})) {
        auto xi = logits.impl_ptr();
        std::vector<T> logp(y.begin(), y.end());
        Tape<T>::active()->record({xi}, out, [xi, logp = std::move(logp), k, rows](std::span<const T> g) {
            auto gx = xi->grad_buffer();
            for (std::int64_t r = 0; r < rows; ++r) {
                const T* gr = g.data() + r * k;
                double gs = 0;
                for (std::int64_t j = 0; j < k; ++j) gs += gr[j];
                for (std::int64_t j = 0; j < k; ++j) {
                    const double p = std::exp(static_cast<double>(logp[static_cast<std::size_t>(r * k + j)]));
                    gx[static_cast<std::size_t>(r * k + j)] += static_cast<T>(gr[j] - p * gs);
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    double s = 0;
    for (T v : x.data()) s += v;
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s));
    if (Tape<T>::should_record({&x})) {
        auto xi = x.impl_ptr();
        Tape<T>::active()->record({xi}, out, [xi](std::span<const T> g) {
            auto gx = xi->grad_buffer();
            for (auto& v : gx) v += g[0];
        });
    }
    return out;
}

template <typename T>
Tensor<T> weighted_sum(std::span<const Tensor<T>> terms, std::span<const double> coeffs) {
    if (terms.size() != coeffs.size()) throw ShapeError("weighted_sum: terms/coefficients length mismatch");
    std::vector<std::shared_ptr<detail::TensorImpl<T>>> inputs;
    std::vector<T> factors;
    double s = 0;
    bool record = false;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (coeffs[i] == 0.0) continue;
        if (!terms[i].defined() || terms[i].numel() != 1) throw ShapeError("weighted_sum: terms must be scalars");
        s += coeffs[i] * static_cast<double>(terms[i].item());
        inputs.push_back(terms[i].impl_ptr());
        factors.push_back(static_cast<T>(coeffs[i]));
        record = record || Tape<T>::should_record({&terms[i]});
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(s));
    if (record) {
        auto ins = inputs;
        Tape<T>::active()->record(std::move(inputs), out, [ins, factors](std::span<const T> g) {
            for (std::size_t i = 0; i < ins.size(); ++i) {
                if (ins[i]->requires_grad) ins[i]->grad_buffer()[0] += factors[i] * g[0];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> zero_rows(const Tensor<T>& x, std::span<const std::uint8_t> rows) {
    if (x.rank() < 1 || x.dim(0) != static_cast<std::int64_t>(rows.size())) {
        throw ShapeError("zero_rows: mask length " + std::to_string(rows.size()) + " does not match " +
                         shape_str(x.shape()));
    }
    const std::int64_t item = x.numel() / x.dim(0);
    Tensor<T> out = x.detach();
    auto y = out.mutable_data();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r]) std::fill_n(y.begin() + static_cast<std::ptrdiff_t>(r * item), item, T(0));
    }
    if (Tape<T>::should_record({&x})) {
        auto xi = x.impl_ptr();
        std::vector<std::uint8_t> mask(rows.begin(), rows.end());
        Tape<T>::active()->record({xi}, out, [xi, mask, item](std::span<const T> g) {
            auto gx = xi->grad_buffer();
            for (std::size_t r = 0; r < mask.size(); ++r) {
                if (mask[r]) continue;
                for (std::int64_t i = 0; i < item; ++i) gx[r * item + i] += g[r * item + i];
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, const BatchNormOptions& options,
                     std::span<const std::uint8_t> stat_rows) {
    if (input.rank() != 4) throw ShapeError("batch_norm: expected B×C×H×W, got " + shape_str(input.shape()));
    const std::int64_t nb = input.dim(0), c = input.dim(1), p = input.dim(2) * input.dim(3);
    for (const Tensor<T>* t : {&gamma, &beta, static_cast<const Tensor<T>*>(&running_mean),
                               static_cast<const Tensor<T>*>(&running_var)}) {
        if (t->rank() != 1 || t->dim(0) != c) throw ShapeError("batch_norm: per-channel tensors must have C entries");
    }
    if (!stat_rows.empty() && static_cast<std::int64_t>(stat_rows.size()) != nb) {
        throw ShapeError("batch_norm: row mask length does not match batch");
    }
    auto selected = [&](std::int64_t n) { return stat_rows.empty() || stat_rows[static_cast<std::size_t>(n)] != 0; };
    std::int64_t active_rows = 0;
    for (std::int64_t n = 0; n < nb; ++n) active_rows += selected(n) ? 1 : 0;
    const bool batch_stats = options.training && active_rows > 0;

    std::vector<T> mean(static_cast<std::size_t>(c)), inv_std(static_cast<std::size_t>(c));
    const double count = static_cast<double>(active_rows * p);
    const T* x = input.data().data();
    for (std::int64_t ch = 0; ch < c; ++ch) {
        double m, v;
        if (batch_stats) {
            double s = 0;
            for (std::int64_t n = 0; n < nb; ++n) {
                if (!selected(n)) continue;
                const T* plane = x + (n * c + ch) * p;
                for (std::int64_t i = 0; i < p; ++i) s += plane[i];
            }
            m = s / count;
            double sq = 0;
            for (std::int64_t n = 0; n < nb; ++n) {
                if (!selected(n)) continue;
                const T* plane = x + (n * c + ch) * p;
                for (std::int64_t i = 0; i < p; ++i) sq += (plane[i] - m) * (plane[i] - m);
            }
            v = sq / count;
            if (options.update_running) {
                const double mom = options.momentum;
                const double unbiased = count > 1 ? sq / (count - 1) : v;
                auto& rm = running_mean.mutable_data()[static_cast<std::size_t>(ch)];
                auto& rv = running_var.mutable_data()[static_cast<std::size_t>(ch)];
                rm = static_cast<T>((1 - mom) * rm + mom * m);
                rv = static_cast<T>((1 - mom) * rv + mom * unbiased);
            }
        } else {
            m = running_mean.data()[static_cast<std::size_t>(ch)];
            v = running_var.data()[static_cast<std::size_t>(ch)];
        }
        mean[static_cast<std::size_t>(ch)] = static_cast<T>(m);
        inv_std[static_cast<std::size_t>(ch)] = static_cast<T>(1.0 / std::sqrt(v + options.eps));
    }

    Tensor<T> out(input.shape());
    std::vector<T> xhat(input.data().size());
    T* y = out.mutable_data().data();
    for (std::int64_t n = 0; n < nb; ++n) {
        for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::size_t cs = static_cast<std::size_t>(ch);
            const std::int64_t off = (n * c + ch) * p;
            const T g = gamma.data()[cs], b = beta.data()[cs];
            for (std::int64_t i = 0; i < p; ++i) {
                const T xh = (x[off + i] - mean[cs]) * inv_std[cs];
                xhat[static_cast<std::size_t>(off + i)] = xh;
                y[off + i] = g * xh + b;
            }
        }
    }

    if (Tape<T>::should_record({&input, &gamma, &beta})) {
        auto xi = input.impl_ptr(), gi = gamma.impl_ptr(), bi = beta.impl_ptr();
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(nb));
        for (std::int64_t n = 0; n < nb; ++n) mask[static_cast<std::size_t>(n)] = selected(n) ? 1 : 0;
        Tape<T>::active()->record(
            {xi, gi, bi}, out,
            [xi, gi, bi, xhat = std::move(xhat), inv_std, mask = std::move(mask), batch_stats, nb, c, p,
             count](std::span<const T> g) {
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    const std::size_t cs = static_cast<std::size_t>(ch);
                    double sum_g = 0, sum_gx = 0;
                    for (std::int64_t n = 0; n < nb; ++n) {
                        const std::int64_t off = (n * c + ch) * p;
                        for (std::int64_t i = 0; i < p; ++i) {
                            sum_g += g[off + i];
                            sum_gx += static_cast<double>(g[off + i]) * xhat[static_cast<std::size_t>(off + i)];
                        }
                    }
                    if (gi->requires_grad) gi->grad_buffer()[cs] += static_cast<T>(sum_gx);
                    if (bi->requires_grad) bi->grad_buffer()[cs] += static_cast<T>(sum_g);
                    if (!xi->requires_grad) continue;
                    auto gx = xi->grad_buffer();
                    const double scale_c = static_cast<double>(gi->data[cs]) * inv_std[cs];
                    const double mean_g = batch_stats ? sum_g / count : 0.0;
                    const double mean_gx = batch_stats ? sum_gx / count : 0.0;
                    for (std::int64_t n = 0; n < nb; ++n) {
                        const std::int64_t off = (n * c + ch) * p;
                        const bool in_stats = batch_stats && mask[static_cast<std::size_t>(n)];
                        for (std::int64_t i = 0; i < p; ++i) {
                            double v = g[off + i];
                            if (in_stats) v -= mean_g + xhat[static_cast<std::size_t>(off + i)] * mean_gx;
                            gx[static_cast<std::size_t>(off + i)] += static_cast<T>(scale_c * v);
                        }
                    }
                }
            });
    }
    return out;
}

#define CORTEX_INSTANTIATE_OPS(T)                                                                        \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                     \
    template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
    template Tensor<T> relu(const Tensor<T>&);                                                           \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                          \
    template Tensor<T> scale(const Tensor<T>&, double);                                                  \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> global_avg_pool(const Tensor<T>&);                                                \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                     \
    template Tensor<T> softmax(const Tensor<T>&);                                                        \
    template Tensor<T> log_softmax(const Tensor<T>&);                                                    \
    template Tensor<T> sum(const Tensor<T>&);                                                            \
    template Tensor<T> weighted_sum(std::span<const Tensor<T>>, std::span<const double>);                \
    template Tensor<T> zero_rows(const Tensor<T>&, std::span<const std::uint8_t>);                       \
    template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&,      \
                                  Tensor<T>&, const BatchNormOptions&, std::span<const std::uint8_t>);

CORTEX_INSTANTIATE_OPS(float)
CORTEX_INSTANTIATE_OPS(double)

#undef CORTEX_INSTANTIATE_OPS

}  // namespace cortex
