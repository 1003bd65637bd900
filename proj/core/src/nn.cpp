#include "packbench/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "packbench/geometry.hpp"

namespace packbench::nn {

Tensor Conv2d::forward(std::span<const double> params, const Tensor& in) const {
    if (in.c != cin) throw InvalidInput("Conv2d: channel mismatch");
    const double* W = params.data() + offset;
    const double* B = W + static_cast<std::size_t>(cout) * cin * k * k;
    const int p = k / 2, H = in.h, Wd = in.w;
    Tensor out(cout, H, Wd);
    for (int co = 0; co < cout; ++co) {
        double* o = out.v.data() + co * out.plane();
        std::fill(o, o + out.plane(), B[co]);
        for (int ci = 0; ci < cin; ++ci) {
            const double* src = in.v.data() + ci * in.plane();
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const double w = W[((static_cast<std::size_t>(co) * cin + ci) * k + ky) * k + kx];
                    const int dy = ky - p, dx = kx - p;
                    const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                    const int x0 = std::max(0, -dx), x1 = std::min(Wd, Wd - dx);
                    for (int y = y0; y < y1; ++y) {
                        double* orow = o + static_cast<std::size_t>(y) * Wd;
                        const double* irow = src + static_cast<std::size_t>(y + dy) * Wd + dx;
                        for (int x = x0; x < x1; ++x) orow[x] += w * irow[x];
                    }
                }
        }
    }
    return out;
}

Tensor Conv2d::backward(std::span<const double> params, const Tensor& in, const Tensor& dout,
                        std::span<double> grad) const {
    const double* W = params.data() + offset;
    double* gW = grad.data() + offset;
    double* gB = gW + static_cast<std::size_t>(cout) * cin * k * k;
    const int p = k / 2, H = in.h, Wd = in.w;
    Tensor din(cin, H, Wd);
    for (int co = 0; co < cout; ++co) {
        const double* d = dout.v.data() + co * dout.plane();
        double s = 0.0;
        for (std::size_t q = 0; q < dout.plane(); ++q) s += d[q];
        gB[co] += s;
        for (int ci = 0; ci < cin; ++ci) {
            const double* src = in.v.data() + ci * in.plane();
            double* dsrc = din.v.data() + ci * din.plane();
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const std::size_t wi = ((static_cast<std::size_t>(co) * cin + ci) * k + ky) * k + kx;
                    const double w = W[wi];
                    const int dy = ky - p, dx = kx - p;
                    const int y0 = std::max(0, -dy), y1 = std::min(H, H - dy);
                    const int x0 = std::max(0, -dx), x1 = std::min(Wd, Wd - dx);
                    double gw = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* drow = d + static_cast<std::size_t>(y) * Wd;
                        const double* irow = src + static_cast<std::size_t>(y + dy) * Wd + dx;
                        double* dirow = dsrc + static_cast<std::size_t>(y + dy) * Wd + dx;
                        for (int x = x0; x < x1; ++x) {
                            gw += drow[x] * irow[x];
                            dirow[x] += w * drow[x];
                        }
                    }
                    gW[wi] += gw;
                }
        }
    }
    return din;
}

std::vector<double> Dense::forward(std::span<const double> params, std::span<const double> x) const {
    const double* W = params.data() + offset;
    const double* B = W + static_cast<std::size_t>(out) * in;
    std::vector<double> y(out);
    for (int o = 0; o < out; ++o) {
        double s = B[o];
        const double* row = W + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) s += row[i] * x[i];
        y[o] = s;
    }
    return y;
}

std::vector<double> Dense::backward(std::span<const double> params, std::span<const double> x,
                                    std::span<const double> dout, std::span<double> grad) const {
    const double* W = params.data() + offset;
    double* gW = grad.data() + offset;
    double* gB = gW + static_cast<std::size_t>(out) * in;
    std::vector<double> dx(in, 0.0);
    for (int o = 0; o < out; ++o) {
        const double g = dout[o];
        gB[o] += g;
        if (g == 0.0) continue;
        const double* row = W + static_cast<std::size_t>(o) * in;
        double* grow = gW + static_cast<std::size_t>(o) * in;
        for (int i = 0; i < in; ++i) {
            grow[i] += g * x[i];
            dx[i] += g * row[i];
        }
    }
    return dx;
}

void tanh_inplace(Tensor& t) { tanh_inplace(t.v); }

void tanh_inplace(std::vector<double>& v) {
    for (double& x : v) x = std::tanh(x);
}

void tanh_backward(const std::vector<double>& out, std::vector<double>& dout) {
    for (std::size_t q = 0; q < out.size(); ++q) dout[q] *= 1.0 - out[q] * out[q];
}

Tensor avgpool2(const Tensor& in) {
    Tensor out(in.c, (in.h + 1) / 2, (in.w + 1) / 2);
    for (int c = 0; c < in.c; ++c)
        for (int y = 0; y < out.h; ++y)
            for (int x = 0; x < out.w; ++x) {
                double s = 0.0;
                int n = 0;
                for (int a = 2 * y; a < std::min(in.h, 2 * y + 2); ++a)
                    for (int b = 2 * x; b < std::min(in.w, 2 * x + 2); ++b, ++n) s += in.at(c, a, b);
                out.at(c, y, x) = s / n;
            }
    return out;
}

Tensor avgpool2_backward(const Tensor& dout, int in_h, int in_w) {
    Tensor din(dout.c, in_h, in_w);
    for (int c = 0; c < dout.c; ++c)
        for (int y = 0; y < dout.h; ++y)
            for (int x = 0; x < dout.w; ++x) {
                const int a1 = std::min(in_h, 2 * y + 2), b1 = std::min(in_w, 2 * x + 2);
                const double g = dout.at(c, y, x) / ((a1 - 2 * y) * (b1 - 2 * x));
                for (int a = 2 * y; a < a1; ++a)
                    for (int b = 2 * x; b < b1; ++b) din.at(c, a, b) += g;
            }
    return din;
}

Tensor upsample2(const Tensor& in, int rows, int cols) {
    Tensor out(in.c, rows, cols);
    for (int c = 0; c < in.c; ++c)
        for (int y = 0; y < rows; ++y)
            for (int x = 0; x < cols; ++x) out.at(c, y, x) = in.at(c, y / 2, x / 2);
    return out;
}

Tensor upsample2_backward(const Tensor& dout, int in_h, int in_w) {
    Tensor din(dout.c, in_h, in_w);
    for (int c = 0; c < dout.c; ++c)
        for (int y = 0; y < dout.h; ++y)
            for (int x = 0; x < dout.w; ++x) din.at(c, y / 2, x / 2) += dout.at(c, y, x);
    return din;
}

Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.h != b.h || a.w != b.w) throw InvalidInput("concat: spatial mismatch");
    Tensor out(a.c + b.c, a.h, a.w);
    std::copy(a.v.begin(), a.v.end(), out.v.begin());
    std::copy(b.v.begin(), b.v.end(), out.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
    return out;
}

void split(const Tensor& ab, int channels_a, Tensor& a, Tensor& b) {
    a = Tensor(channels_a, ab.h, ab.w);
    b = Tensor(ab.c - channels_a, ab.h, ab.w);
    std::copy(ab.v.begin(), ab.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()), a.v.begin());
    std::copy(ab.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()), ab.v.end(), b.v.begin());
}

void init_conv(const Conv2d& l, std::span<double> params, Rng& rng) {
    const double fan_in = static_cast<double>(l.cin) * l.k * l.k, fan_out = static_cast<double>(l.cout) * l.k * l.k;
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    const std::size_t nw = static_cast<std::size_t>(l.cout) * l.cin * l.k * l.k;
    for (std::size_t q = 0; q < nw; ++q) params[l.offset + q] = rng.uniform(-a, a);
    for (int q = 0; q < l.cout; ++q) params[l.offset + nw + q] = 0.0;
}

void init_dense(const Dense& l, std::span<double> params, Rng& rng) {
    const double a = std::sqrt(6.0 / (l.in + l.out));
    const std::size_t nw = static_cast<std::size_t>(l.out) * l.in;
    for (std::size_t q = 0; q < nw; ++q) params[l.offset + q] = rng.uniform(-a, a);
    for (int q = 0; q < l.out; ++q) params[l.offset + nw + q] = 0.0;
}

namespace {

template <typename... L>
std::size_t layout(L&... layers) {
    std::size_t off = 0;
    ((layers.offset = off, off += layers.size()), ...);
    return off;
}

Tensor conv_tanh(const Conv2d& l, std::span<const double> p, const Tensor& in) {
    Tensor t = l.forward(p, in);
    tanh_inplace(t);
    return t;
}

Tensor conv_tanh_back(const Conv2d& l, std::span<const double> p, const Tensor& in, const Tensor& out, Tensor dout,
                      std::span<double> grad) {
    tanh_backward(out.v, dout.v);
    return l.backward(p, in, dout, grad);
}

void add_into(Tensor& a, const Tensor& b) {
    for (std::size_t q = 0; q < a.v.size(); ++q) a.v[q] += b.v[q];
}

}  // namespace

WorkerNet::WorkerNet(int in_channels, int width) : in_ch_(in_channels), width_(width) {
    if (in_channels < 1 || width < 1) throw InvalidInput("WorkerNet: bad shape");
    enc0_ = {in_channels, width, 3};
    enc1_ = {width, width, 3};
    enc2_ = {width, width, 3};
    enc3_ = {width, width, 3};
    dec2_ = {2 * width, width, 3};
    dec1_ = {2 * width, width, 3};
    dec0_ = {2 * width, width, 3};
    head_ = {width, 1, 1};
    params.assign(layout(enc0_, enc1_, enc2_, enc3_, dec2_, dec1_, dec0_, head_), 0.0);
}

std::string WorkerNet::arch() const {
    return "worker-unet in=" + std::to_string(in_ch_) + " width=" + std::to_string(width_) + " depth=3";
}

void WorkerNet::init(Rng& rng) {
    for (const Conv2d* l : {&enc0_, &enc1_, &enc2_, &enc3_, &dec2_, &dec1_, &dec0_, &head_}) init_conv(*l, params, rng);
}

Tensor WorkerNet::forward(const Tensor& in, Cache* cache) const {
    Cache local;
    Cache& k = cache ? *cache : local;
    const std::span<const double> p = params;
    k.in = in;
    k.e0 = conv_tanh(enc0_, p, in);
    k.p0 = avgpool2(k.e0);
    k.e1 = conv_tanh(enc1_, p, k.p0);
    k.p1 = avgpool2(k.e1);
    k.e2 = conv_tanh(enc2_, p, k.p1);
    k.p2 = avgpool2(k.e2);
    k.e3 = conv_tanh(enc3_, p, k.p2);
    k.u2 = upsample2(k.e3, k.e2.h, k.e2.w);
    k.c2 = concat(k.u2, k.e2);
    k.d2 = conv_tanh(dec2_, p, k.c2);
    k.u1 = upsample2(k.d2, k.e1.h, k.e1.w);
    k.c1 = concat(k.u1, k.e1);
    k.d1 = conv_tanh(dec1_, p, k.c1);
    k.u0 = upsample2(k.d1, k.e0.h, k.e0.w);
    k.c0 = concat(k.u0, k.e0);
    k.d0 = conv_tanh(dec0_, p, k.c0);
    return head_.forward(p, k.d0);
}

void WorkerNet::backward(const Cache& k, const Tensor& dout, std::span<double> grad) const {
    const std::span<const double> p = params;
    const int w = width_;
    Tensor g = head_.backward(p, k.d0, dout, grad);
    Tensor gu, ge0, ge1, ge2;

    g = conv_tanh_back(dec0_, p, k.c0, k.d0, std::move(g), grad);
    split(g, w, gu, ge0);
    Tensor gd1 = upsample2_backward(gu, k.d1.h, k.d1.w);

    g = conv_tanh_back(dec1_, p, k.c1, k.d1, std::move(gd1), grad);
    split(g, w, gu, ge1);
    Tensor gd2 = upsample2_backward(gu, k.d2.h, k.d2.w);

    g = conv_tanh_back(dec2_, p, k.c2, k.d2, std::move(gd2), grad);
    split(g, w, gu, ge2);
    Tensor ge3 = upsample2_backward(gu, k.e3.h, k.e3.w);

    g = conv_tanh_back(enc3_, p, k.p2, k.e3, std::move(ge3), grad);
    add_into(ge2, avgpool2_backward(g, k.e2.h, k.e2.w));
    g = conv_tanh_back(enc2_, p, k.p1, k.e2, std::move(ge2), grad);
    add_into(ge1, avgpool2_backward(g, k.e1.h, k.e1.w));
    g = conv_tanh_back(enc1_, p, k.p0, k.e1, std::move(ge1), grad);
    add_into(ge0, avgpool2_backward(g, k.e0.h, k.e0.w));
    conv_tanh_back(enc0_, p, k.in, k.e0, std::move(ge0), grad);
}

ManagerNet::ManagerNet(int slots, int in_channels, int width, int hidden)
    : slots_(slots), in_ch_(in_channels), width_(width), hidden_(hidden) {
    if (slots < 1 || in_channels < 1 || width < 1 || hidden < 1) throw InvalidInput("ManagerNet: bad shape");
    t0_ = {in_channels, width, 3};
    t1_ = {width, width, 3};
    t2_ = {width, width, 3};
    f0_ = {slots * width, hidden};
    f1_ = {hidden, hidden};
    f2_ = {hidden, slots};
    params.assign(layout(t0_, t1_, t2_, f0_, f1_, f2_), 0.0);
}

std::string ManagerNet::arch() const {
    return "manager-convfc slots=" + std::to_string(slots_) + " in=" + std::to_string(in_ch_) +
           " width=" + std::to_string(width_) + " hidden=" + std::to_string(hidden_);
}

void ManagerNet::init(Rng& rng) {
    for (const Conv2d* l : {&t0_, &t1_, &t2_}) init_conv(*l, params, rng);
    for (const Dense* l : {&f0_, &f1_, &f2_}) init_dense(*l, params, rng);
}

std::vector<double> ManagerNet::forward(const std::vector<std::optional<Tensor>>& inputs, Cache* cache) const {
    if (static_cast<int>(inputs.size()) != slots_) throw InvalidInput("ManagerNet: slot count mismatch");
    Cache local;
    Cache& k = cache ? *cache : local;
    const std::span<const double> p = params;
    k.slots.assign(slots_, std::nullopt);
    k.features.assign(static_cast<std::size_t>(slots_) * width_, 0.0);
    for (int s = 0; s < slots_; ++s) {
        if (!inputs[s]) continue;
        SlotCache sc;
        sc.in = *inputs[s];
        sc.a0 = conv_tanh(t0_, p, sc.in);
        sc.p0 = avgpool2(sc.a0);
        sc.a1 = conv_tanh(t1_, p, sc.p0);
        sc.p1 = avgpool2(sc.a1);
        sc.a2 = conv_tanh(t2_, p, sc.p1);
        for (int c = 0; c < width_; ++c) {
            double m = 0.0;
            for (std::size_t q = 0; q < sc.a2.plane(); ++q) m += sc.a2.v[c * sc.a2.plane() + q];
            k.features[static_cast<std::size_t>(s) * width_ + c] = m / static_cast<double>(sc.a2.plane());
        }
        k.slots[s] = std::move(sc);
    }
    k.h1 = f0_.forward(p, k.features);
    tanh_inplace(k.h1);
    k.h2 = f1_.forward(p, k.h1);
    tanh_inplace(k.h2);
    return f2_.forward(p, k.h2);
}

void ManagerNet::backward(const Cache& k, std::span<const double> dscores, std::span<double> grad) const {
    const std::span<const double> p = params;
    auto g2 = f2_.backward(p, k.h2, dscores, grad);
    tanh_backward(k.h2, g2);
    auto g1 = f1_.backward(p, k.h1, g2, grad);
    tanh_backward(k.h1, g1);
    const auto gf = f0_.backward(p, k.features, g1, grad);
    for (int s = 0; s < slots_; ++s) {
        if (!k.slots[s]) continue;
        const SlotCache& sc = *k.slots[s];
        Tensor ga2(width_, sc.a2.h, sc.a2.w);
        for (int c = 0; c < width_; ++c) {
            const double g = gf[static_cast<std::size_t>(s) * width_ + c] / static_cast<double>(sc.a2.plane());
            std::fill_n(ga2.v.begin() + static_cast<std::ptrdiff_t>(c * sc.a2.plane()), sc.a2.plane(), g);
        }
        Tensor g = conv_tanh_back(t2_, p, sc.p1, sc.a2, std::move(ga2), grad);
        g = conv_tanh_back(t1_, p, sc.p0, sc.a1, avgpool2_backward(g, sc.a1.h, sc.a1.w), grad);
        conv_tanh_back(t0_, p, sc.in, sc.a0, avgpool2_backward(g, sc.a0.h, sc.a0.w), grad);
    }
}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t q = 0; q < params.size(); ++q) {
        m_[q] = b1_ * m_[q] + (1.0 - b1_) * grad[q];
        v_[q] = b2_ * v_[q] + (1.0 - b2_) * grad[q] * grad[q];
        params[q] -= lr * (m_[q] / c1) / (std::sqrt(v_[q] / c2) + eps_);
    }
}

namespace {

constexpr std::uint16_t kPkqnVersion = 1;

void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int b = 0; b < bytes; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::uint64_t get_le(std::span<const std::uint8_t> in, std::size_t at, int bytes) {
    if (at + bytes > in.size()) throw InvalidInput("checkpoint: truncated");
    std::uint64_t v = 0;
    for (int b = 0; b < bytes; ++b) v |= static_cast<std::uint64_t>(in[at + b]) << (8 * b);
    return v;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
    std::vector<std::uint8_t> out = {'P', 'K', 'Q', 'N'};
    put_le(out, kPkqnVersion, 2);
    put_le(out, ck.arch.size(), 4);
    out.insert(out.end(), ck.arch.begin(), ck.arch.end());
    put_le(out, ck.params.size(), 8);
    for (double v : ck.params) put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)), 4);
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> in) {
    if (in.size() < 4 || in[0] != 'P' || in[1] != 'K' || in[2] != 'Q' || in[3] != 'N')
        throw InvalidInput("checkpoint: bad magic");
    if (get_le(in, 4, 2) != kPkqnVersion) throw InvalidInput("checkpoint: unsupported version");
    const std::size_t len = get_le(in, 6, 4);
    if (10 + len > in.size()) throw InvalidInput("checkpoint: truncated");
    Checkpoint ck;
    ck.arch.assign(in.begin() + 10, in.begin() + 10 + static_cast<std::ptrdiff_t>(len));
    std::size_t at = 10 + len;
    const std::uint64_t n = get_le(in, at, 8);
    at += 8;
    if (in.size() - at != n * 4) throw InvalidInput("checkpoint: parameter count does not match the payload");
    ck.params.resize(n);
    for (std::uint64_t q = 0; q < n; ++q, at += 4)
        ck.params[q] = std::bit_cast<float>(static_cast<std::uint32_t>(get_le(in, at, 4)));
    return ck;
}

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
    const auto bytes = encode_checkpoint(ck);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace packbench::nn
