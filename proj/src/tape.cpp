#include "uld/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uld/errors.hpp"

namespace uld {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

}  // namespace

int Tape::push(Tensor val, std::function<void(Tape&)> back) {
    Node n;
    n.grad = Tensor::zeros(val.shape);
    n.val = std::move(val);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor t) { return push(std::move(t), nullptr); }

void Tape::backward() {
    for (std::size_t i = nodes_.size(); i-- > 0;) {
        if (nodes_[i].back) nodes_[i].back(*this);
    }
}

int Tape::conv2d(int x, int w, int b, int dilation) {
    const Tensor& xt = val(x);
    const Tensor& wt = val(w);
    const Tensor& bt = val(b);
    require(xt.shape.size() == 3, "conv2d input must be {C,H,W}");
    require(wt.shape.size() == 4, "conv2d weight must be {Cout,Cin,k,k}");
    const int cin = xt.shape[0], H = xt.shape[1], W = xt.shape[2];
    const int cout = wt.shape[0], k = wt.shape[2];
    require(wt.shape[1] == cin, "conv2d channel mismatch: input " + std::to_string(cin) +
                                    " vs weight " + std::to_string(wt.shape[1]));
    require(wt.shape[3] == k && (k % 2) == 1, "conv2d kernel must be square and odd");
    require(bt.shape.size() == 1 && bt.shape[0] == cout, "conv2d bias mismatch");
    const int pad = dilation * (k - 1) / 2;

    Tensor out = Tensor::zeros({cout, H, W});
    const double* xd = xt.data();
    const double* wd = wt.data();
    double* od = out.data();
    const std::size_t plane = static_cast<std::size_t>(H) * W;

    for (int co = 0; co < cout; ++co) {
        double* oplane = od + co * plane;
        const double bias = bt.v[static_cast<std::size_t>(co)];
        for (std::size_t i = 0; i < plane; ++i) oplane[i] = bias;
        for (int ci = 0; ci < cin; ++ci) {
            const double* xplane = xd + ci * plane;
            const double* wk = wd + ((static_cast<std::size_t>(co) * cin + ci) * k) * k;
            for (int ky = 0; ky < k; ++ky) {
                const int oy_lo = std::max(0, pad - ky * dilation);
                const int oy_hi = std::min(H, H + pad - ky * dilation);
                for (int kx = 0; kx < k; ++kx) {
                    const double wv = wk[ky * k + kx];
                    if (wv == 0.0) continue;
                    const int dx = kx * dilation - pad;
                    const int ox_lo = std::max(0, -dx);
                    const int ox_hi = std::min(W, W - dx);
                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                        const double* __restrict xrow =
                            xplane + static_cast<std::size_t>(oy + ky * dilation - pad) * W + dx;
                        double* __restrict orow = oplane + static_cast<std::size_t>(oy) * W;
                        for (int ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += wv * xrow[ox];
                    }
                }
            }
        }
    }

    const int out_id = push(std::move(out), nullptr);
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, x, w, b, dilation, cin, cout, H, W, k,
                                                     pad](Tape& t) {
        const Tensor& go = t.grad(out_id);
        const Tensor& xt2 = t.val(x);
        const Tensor& wt2 = t.val(w);
        Tensor& gx = t.grad(x);
        Tensor& gw = t.grad(w);
        Tensor& gb = t.grad(b);
        const std::size_t plane = static_cast<std::size_t>(H) * W;
        const double* god = go.data();
        const double* xd2 = xt2.data();
        const double* wd2 = wt2.data();

        for (int co = 0; co < cout; ++co) {
            const double* gplane = god + co * plane;
            double acc = 0.0;
            for (std::size_t i = 0; i < plane; ++i) acc += gplane[i];
            gb.v[static_cast<std::size_t>(co)] += acc;

            for (int ci = 0; ci < cin; ++ci) {
                const double* xplane = xd2 + ci * plane;
                double* gxplane = gx.data() + ci * plane;
                const std::size_t wbase = ((static_cast<std::size_t>(co) * cin + ci) * k) * k;
                for (int ky = 0; ky < k; ++ky) {
                    const int oy_lo = std::max(0, pad - ky * dilation);
                    const int oy_hi = std::min(H, H + pad - ky * dilation);
                    for (int kx = 0; kx < k; ++kx) {
                        const int dx = kx * dilation - pad;
                        const int ox_lo = std::max(0, -dx);
                        const int ox_hi = std::min(W, W - dx);
                        const double wv = wd2[wbase + static_cast<std::size_t>(ky) * k + kx];
                        // Split passes: the scatter vectorizes as written,
                        // the dot product needs independent accumulators
                        // (the order is fixed by the code, so results stay
                        // run-to-run identical).
                        double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            const std::size_t xoff =
                                static_cast<std::size_t>(oy + ky * dilation - pad) * W + dx;
                            const double* __restrict xrow = xplane + xoff;
                            double* __restrict gxrow = gxplane + xoff;
                            const double* __restrict grow = gplane + static_cast<std::size_t>(oy) * W;
                            for (int ox = ox_lo; ox < ox_hi; ++ox) gxrow[ox] += wv * grow[ox];
                            int ox = ox_lo;
                            for (; ox + 4 <= ox_hi; ox += 4) {
                                acc0 += xrow[ox] * grow[ox];
                                acc1 += xrow[ox + 1] * grow[ox + 1];
                                acc2 += xrow[ox + 2] * grow[ox + 2];
                                acc3 += xrow[ox + 3] * grow[ox + 3];
                            }
                            for (; ox < ox_hi; ++ox) acc0 += xrow[ox] * grow[ox];
                        }
                        gw.v[wbase + static_cast<std::size_t>(ky) * k + kx] +=
                            (acc0 + acc1) + (acc2 + acc3);
                    }
                }
            }
        }
    };
    return out_id;
}

int Tape::relu(int x) {
    const Tensor& xt = val(x);
    Tensor out = Tensor::zeros(xt.shape);
    const std::size_t mask_base = relu_masks_.size();
    relu_masks_.resize(mask_base + xt.v.size());
    for (std::size_t i = 0; i < xt.v.size(); ++i) {
        const bool on = xt.v[i] > 0.0;
        relu_masks_[mask_base + i] = on ? 1 : 0;
        out.v[i] = on ? xt.v[i] : 0.0;
    }
    const int out_id = push(std::move(out), nullptr);
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, x, mask_base](Tape& t) {
        const Tensor& go = t.grad(out_id);
        Tensor& gx = t.grad(x);
        for (std::size_t i = 0; i < go.v.size(); ++i) {
            if (t.relu_masks_[mask_base + i]) gx.v[i] += go.v[i];
        }
    };
    return out_id;
}

int Tape::avgpool2x2(int x) {
    const Tensor& xt = val(x);
    require(xt.shape.size() == 3, "avgpool2x2 input must be {C,H,W}");
    const int C = xt.shape[0], H = xt.shape[1], W = xt.shape[2];
    require(H % 2 == 0 && W % 2 == 0,
            "avgpool2x2 needs even spatial size, got " + std::to_string(H) + "x" + std::to_string(W));
    const int oh = H / 2, ow = W / 2;
    Tensor out = Tensor::zeros({C, oh, ow});
    for (int c = 0; c < C; ++c) {
        const double* xp = xt.data() + static_cast<std::size_t>(c) * H * W;
        double* op = out.data() + static_cast<std::size_t>(c) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            const double* r0 = xp + static_cast<std::size_t>(2 * y) * W;
            const double* r1 = r0 + W;
            for (int xx = 0; xx < ow; ++xx) {
                op[static_cast<std::size_t>(y) * ow + xx] =
                    0.25 * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
            }
        }
    }
    const int out_id = push(std::move(out), nullptr);
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, x, C, H, W, oh, ow](Tape& t) {
        const Tensor& go = t.grad(out_id);
        Tensor& gx = t.grad(x);
        for (int c = 0; c < C; ++c) {
            const double* gp = go.data() + static_cast<std::size_t>(c) * oh * ow;
            double* gxp = gx.data() + static_cast<std::size_t>(c) * H * W;
            for (int y = 0; y < oh; ++y) {
                double* r0 = gxp + static_cast<std::size_t>(2 * y) * W;
                double* r1 = r0 + W;
                for (int xx = 0; xx < ow; ++xx) {
                    const double g = 0.25 * gp[static_cast<std::size_t>(y) * ow + xx];
                    r0[2 * xx] += g;
                    r0[2 * xx + 1] += g;
                    r1[2 * xx] += g;
                    r1[2 * xx + 1] += g;
                }
            }
        }
    };
    return out_id;
}

int Tape::adaptive_avgpool(int x, int out_h, int out_w) {
    const Tensor& xt = val(x);
    require(xt.shape.size() == 3, "adaptive_avgpool input must be {C,H,W}");
    require(out_h >= 1 && out_w >= 1, "adaptive_avgpool target must be positive");
    const int C = xt.shape[0], H = xt.shape[1], W = xt.shape[2];

    auto bin = [](int i, int in, int out, int& lo, int& hi) {
        lo = (i * in) / out;
        hi = ((i + 1) * in + out - 1) / out;  // ceil
        if (hi <= lo) hi = lo + 1;
    };

    Tensor out = Tensor::zeros({C, out_h, out_w});
    for (int c = 0; c < C; ++c) {
        const double* xp = xt.data() + static_cast<std::size_t>(c) * H * W;
        double* op = out.data() + static_cast<std::size_t>(c) * out_h * out_w;
        for (int oy = 0; oy < out_h; ++oy) {
            int y0, y1;
            bin(oy, H, out_h, y0, y1);
            for (int ox = 0; ox < out_w; ++ox) {
                int x0, x1;
                bin(ox, W, out_w, x0, x1);
                double s = 0.0;
                for (int yy = y0; yy < y1; ++yy)
                    for (int xx = x0; xx < x1; ++xx) s += xp[static_cast<std::size_t>(yy) * W + xx];
                op[static_cast<std::size_t>(oy) * out_w + ox] =
                    s / (static_cast<double>(y1 - y0) * (x1 - x0));
            }
        }
    }
    const int out_id = push(std::move(out), nullptr);
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, x, C, H, W, out_h, out_w,
                                                     bin](Tape& t) {
        const Tensor& go = t.grad(out_id);
        Tensor& gx = t.grad(x);
        for (int c = 0; c < C; ++c) {
            const double* gp = go.data() + static_cast<std::size_t>(c) * out_h * out_w;
            double* gxp = gx.data() + static_cast<std::size_t>(c) * H * W;
            for (int oy = 0; oy < out_h; ++oy) {
                int y0, y1;
                bin(oy, H, out_h, y0, y1);
                for (int ox = 0; ox < out_w; ++ox) {
                    int x0, x1;
                    bin(ox, W, out_w, x0, x1);
                    const double g = gp[static_cast<std::size_t>(oy) * out_w + ox] /
                                     (static_cast<double>(y1 - y0) * (x1 - x0));
                    for (int yy = y0; yy < y1; ++yy)
                        for (int xx = x0; xx < x1; ++xx) gxp[static_cast<std::size_t>(yy) * W + xx] += g;
                }
            }
        }
    };
    return out_id;
}

namespace {

// Source sample for factor-2 upsampling with half-pixel alignment:
// src = (o + 0.5)/2 - 0.5; neighbors clamped to the border.
inline void up2_weights(int o, int in_size, int& i0, int& i1, double& w0, double& w1) {
    const double src = 0.5 * (o + 0.5) - 0.5;
    double fl = std::floor(src);
    double frac = src - fl;
    int i = static_cast<int>(fl);
    i0 = std::clamp(i, 0, in_size - 1);
    i1 = std::clamp(i + 1, 0, in_size - 1);
    w0 = 1.0 - frac;
    w1 = frac;
}

}  // namespace

int Tape::upsample_bilinear2x(int x) {
    const Tensor& xt = val(x);
    require(xt.shape.size() == 3, "upsample input must be {C,H,W}");
    const int C = xt.shape[0], H = xt.shape[1], W = xt.shape[2];
    const int oh = H * 2, ow = W * 2;

    Tensor out = Tensor::zeros({C, oh, ow});
    for (int c = 0; c < C; ++c) {
        const double* xp = xt.data() + static_cast<std::size_t>(c) * H * W;
        double* op = out.data() + static_cast<std::size_t>(c) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
            int y0, y1;
            double wy0, wy1;
            up2_weights(oy, H, y0, y1, wy0, wy1);
            const double* r0 = xp + static_cast<std::size_t>(y0) * W;
            const double* r1 = xp + static_cast<std::size_t>(y1) * W;
            double* orow = op + static_cast<std::size_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
                int x0, x1;
                double wx0, wx1;
                up2_weights(ox, W, x0, x1, wx0, wx1);
                orow[ox] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
            }
        }
    }
    const int out_id = push(std::move(out), nullptr);
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, x, C, H, W, oh, ow](Tape& t) {
        const Tensor& go = t.grad(out_id);
        Tensor& gx = t.grad(x);
        for (int c = 0; c < C; ++c) {
            const double* gp = go.data() + static_cast<std::size_t>(c) * oh * ow;
            double* gxp = gx.data() + static_cast<std::size_t>(c) * H * W;
            for (int oy = 0; oy < oh; ++oy) {
                int y0, y1;
                double wy0, wy1;
                up2_weights(oy, H, y0, y1, wy0, wy1);
                double* r0 = gxp + static_cast<std::size_t>(y0) * W;
                double* r1 = gxp + static_cast<std::size_t>(y1) * W;
                const double* grow = gp + static_cast<std::size_t>(oy) * ow;
                for (int ox = 0; ox < ow; ++ox) {
                    int x0, x1;
                    double wx0, wx1;
                    up2_weights(ox, W, x0, x1, wx0, wx1);
                    r0[x0] += wy0 * wx0 * grow[ox];
                    r0[x1] += wy0 * wx1 * grow[ox];
                    r1[x0] += wy1 * wx0 * grow[ox];
                    r1[x1] += wy1 * wx1 * grow[ox];
                }
            }
        }
    };
    return out_id;
}

int Tape::concat_channels(const std::vector<int>& xs) {
    require(!xs.empty(), "concat_channels needs inputs");
    const int H = val(xs[0]).shape[1], W = val(xs[0]).shape[2];
    int ctot = 0;
    for (int id : xs) {
        const Tensor& t = val(id);
        require(t.shape.size() == 3 && t.shape[1] == H && t.shape[2] == W,
                "concat_channels spatial size mismatch");
        ctot += t.shape[0];
    }
    Tensor out = Tensor::zeros({ctot, H, W});
    std::size_t off = 0;
    for (int id : xs) {
        const Tensor& t = val(id);
        std::copy(t.v.begin(), t.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(off));
        off += t.v.size();
    }
    const int out_id = push(std::move(out), nullptr);
    std::vector<int> inputs = xs;
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, inputs](Tape& t) {
        const Tensor& go = t.grad(out_id);
        std::size_t off2 = 0;
        for (int id : inputs) {
            Tensor& gx = t.grad(id);
            for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += go.v[off2 + i];
            off2 += gx.v.size();
        }
    };
    return out_id;
}

int Tape::tokens_from_chw(int x) {
    const Tensor& xt = val(x);
    require(xt.shape.size() == 3, "tokens_from_chw input must be {C,h,w}");
    const int C = xt.shape[0], T = xt.shape[1] * xt.shape[2];
    Tensor out = Tensor::zeros({T, C});
    for (int c = 0; c < C; ++c)
        for (int t = 0; t < T; ++t)
            out.v[static_cast<std::size_t>(t) * C + c] = xt.v[static_cast<std::size_t>(c) * T + t];
    const int out_id = push(std::move(out), nullptr);
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, x, C, T](Tape& tp) {
        const Tensor& go = tp.grad(out_id);
        Tensor& gx = tp.grad(x);
        for (int c = 0; c < C; ++c)
            for (int t = 0; t < T; ++t)
                gx.v[static_cast<std::size_t>(c) * T + t] += go.v[static_cast<std::size_t>(t) * C + c];
    };
    return out_id;
}

int Tape::matmul(int a, int b) {
    const Tensor& at = val(a);
    const Tensor& bt = val(b);
    require(at.shape.size() == 2 && bt.shape.size() == 2 && at.shape[1] == bt.shape[0],
            "matmul shape mismatch");
    const int m = at.shape[0], k = at.shape[1], n = bt.shape[1];
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            const double av = at.v[static_cast<std::size_t>(i) * k + kk];
            const double* brow = bt.data() + static_cast<std::size_t>(kk) * n;
            double* orow = out.data() + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    const int out_id = push(std::move(out), nullptr);
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, a, b, m, k, n](Tape& t) {
        const Tensor& go = t.grad(out_id);
        const Tensor& at2 = t.val(a);
        const Tensor& bt2 = t.val(b);
        Tensor& ga = t.grad(a);
        Tensor& gb = t.grad(b);
        // dA = dC B^T, dB = A^T dC
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                const double g = go.v[static_cast<std::size_t>(i) * n + j];
                if (g == 0.0) continue;
                const double* brow = bt2.data();
                for (int kk = 0; kk < k; ++kk)
                    ga.v[static_cast<std::size_t>(i) * k + kk] += g * brow[static_cast<std::size_t>(kk) * n + j];
            }
            for (int kk = 0; kk < k; ++kk) {
                const double av = at2.v[static_cast<std::size_t>(i) * k + kk];
                const double* grow = go.data() + static_cast<std::size_t>(i) * n;
                double* gbrow = gb.data() + static_cast<std::size_t>(kk) * n;
                for (int j = 0; j < n; ++j) gbrow[j] += av * grow[j];
            }
        }
    };
    return out_id;
}

int Tape::matmul_nt(int a, int b) {
    const Tensor& at = val(a);
    const Tensor& bt = val(b);
    require(at.shape.size() == 2 && bt.shape.size() == 2 && at.shape[1] == bt.shape[1],
            "matmul_nt shape mismatch");
    const int m = at.shape[0], k = at.shape[1], n = bt.shape[0];
    Tensor out = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        const double* arow = at.data() + static_cast<std::size_t>(i) * k;
        double* orow = out.data() + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = bt.data() + static_cast<std::size_t>(j) * k;
            double s = 0.0;
            for (int kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
            orow[j] = s;
        }
    }
    const int out_id = push(std::move(out), nullptr);
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, a, b, m, k, n](Tape& t) {
        const Tensor& go = t.grad(out_id);
        const Tensor& at2 = t.val(a);
        const Tensor& bt2 = t.val(b);
        Tensor& ga = t.grad(a);
        Tensor& gb = t.grad(b);
        // C = A B^T: dA = dC B, dB = dC^T A
        for (int i = 0; i < m; ++i) {
            const double* grow = go.data() + static_cast<std::size_t>(i) * n;
            double* garow = ga.data() + static_cast<std::size_t>(i) * k;
            const double* arow = at2.data() + static_cast<std::size_t>(i) * k;
            for (int j = 0; j < n; ++j) {
                const double g = grow[j];
                if (g == 0.0) continue;
                const double* brow = bt2.data() + static_cast<std::size_t>(j) * k;
                double* gbrow = gb.data() + static_cast<std::size_t>(j) * k;
                for (int kk = 0; kk < k; ++kk) {
                    garow[kk] += g * brow[kk];
                    gbrow[kk] += g * arow[kk];
                }
            }
        }
    };
    return out_id;
}

int Tape::scale(int x, double s) {
    const Tensor& xt = val(x);
    Tensor out = xt;
    for (double& v : out.v) v *= s;
    const int out_id = push(std::move(out), nullptr);
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, x, s](Tape& t) {
        const Tensor& go = t.grad(out_id);
        Tensor& gx = t.grad(x);
        for (std::size_t i = 0; i < go.v.size(); ++i) gx.v[i] += s * go.v[i];
    };
    return out_id;
}

int Tape::softmax_rows(int x) {
    const Tensor& xt = val(x);
    require(xt.shape.size() == 2, "softmax_rows input must be {T,n}");
    const int T = xt.shape[0], n = xt.shape[1];
    Tensor out = Tensor::zeros({T, n});
    for (int i = 0; i < T; ++i) {
        const double* row = xt.data() + static_cast<std::size_t>(i) * n;
        double* orow = out.data() + static_cast<std::size_t>(i) * n;
        double mx = row[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < n; ++j) orow[j] *= inv;
    }
    const int out_id = push(std::move(out), nullptr);
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, x, T, n](Tape& t) {
        const Tensor& go = t.grad(out_id);
        const Tensor& y = t.val(out_id);
        Tensor& gx = t.grad(x);
        for (int i = 0; i < T; ++i) {
            const double* yrow = y.data() + static_cast<std::size_t>(i) * n;
            const double* grow = go.data() + static_cast<std::size_t>(i) * n;
            double* gxrow = gx.data() + static_cast<std::size_t>(i) * n;
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += yrow[j] * grow[j];
            for (int j = 0; j < n; ++j) gxrow[j] += yrow[j] * (grow[j] - dot);
        }
    };
    return out_id;
}

int Tape::mean_rows(int x) {
    const Tensor& xt = val(x);
    require(xt.shape.size() == 2, "mean_rows input must be {T,D}");
    const int T = xt.shape[0], D = xt.shape[1];
    Tensor out = Tensor::zeros({D});
    for (int i = 0; i < T; ++i)
        for (int j = 0; j < D; ++j) out.v[static_cast<std::size_t>(j)] += xt.v[static_cast<std::size_t>(i) * D + j];
    const double inv = 1.0 / T;
    for (double& v : out.v) v *= inv;
    const int out_id = push(std::move(out), nullptr);
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, x, T, D, inv](Tape& t) {
        const Tensor& go = t.grad(out_id);
        Tensor& gx = t.grad(x);
        for (int i = 0; i < T; ++i)
            for (int j = 0; j < D; ++j) gx.v[static_cast<std::size_t>(i) * D + j] += inv * go.v[static_cast<std::size_t>(j)];
    };
    return out_id;
}

int Tape::concat_vec(const std::vector<int>& xs) {
    require(!xs.empty(), "concat_vec needs inputs");
    int n = 0;
    for (int id : xs) {
        require(val(id).shape.size() == 1, "concat_vec inputs must be vectors");
        n += val(id).shape[0];
    }
    Tensor out = Tensor::zeros({n});
    std::size_t off = 0;
    for (int id : xs) {
        const Tensor& t = val(id);
        std::copy(t.v.begin(), t.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(off));
        off += t.v.size();
    }
    const int out_id = push(std::move(out), nullptr);
    std::vector<int> inputs = xs;
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, inputs](Tape& t) {
        const Tensor& go = t.grad(out_id);
        std::size_t off2 = 0;
        for (int id : inputs) {
            Tensor& gx = t.grad(id);
            for (std::size_t i = 0; i < gx.v.size(); ++i) gx.v[i] += go.v[off2 + i];
            off2 += gx.v.size();
        }
    };
    return out_id;
}

int Tape::linear(int x, int w, int b) {
    const Tensor& xt = val(x);
    const Tensor& wt = val(w);
    const Tensor& bt = val(b);
    require(xt.shape.size() == 1 && wt.shape.size() == 2 && wt.shape[1] == xt.shape[0],
            "linear shape mismatch");
    const int in = xt.shape[0], out_n = wt.shape[0];
    require(bt.shape.size() == 1 && bt.shape[0] == out_n, "linear bias mismatch");
    Tensor out = Tensor::zeros({out_n});
    for (int o = 0; o < out_n; ++o) {
        const double* wrow = wt.data() + static_cast<std::size_t>(o) * in;
        double s = bt.v[static_cast<std::size_t>(o)];
        for (int i = 0; i < in; ++i) s += wrow[i] * xt.v[static_cast<std::size_t>(i)];
        out.v[static_cast<std::size_t>(o)] = s;
    }
    const int out_id = push(std::move(out), nullptr);
    nodes_[static_cast<std::size_t>(out_id)].back = [out_id, x, w, b, in, out_n](Tape& t) {
        const Tensor& go = t.grad(out_id);
        const Tensor& xt2 = t.val(x);
        const Tensor& wt2 = t.val(w);
        Tensor& gx = t.grad(x);
        Tensor& gw = t.grad(w);
        Tensor& gb = t.grad(b);
        for (int o = 0; o < out_n; ++o) {
            const double g = go.v[static_cast<std::size_t>(o)];
            if (g == 0.0) continue;
            gb.v[static_cast<std::size_t>(o)] += g;
            const double* wrow = wt2.data() + static_cast<std::size_t>(o) * in;
            double* gwrow = gw.data() + static_cast<std::size_t>(o) * in;
            for (int i = 0; i < in; ++i) {
                gx.v[static_cast<std::size_t>(i)] += g * wrow[i];
                gwrow[i] += g * xt2.v[static_cast<std::size_t>(i)];
            }
        }
    };
    return out_id;
}

}  // namespace uld
