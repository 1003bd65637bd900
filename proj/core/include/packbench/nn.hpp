#pragma once

// Compact convolutional scorers with hand-written backpropagation.
//
// Parameters live in one flat double vector per network so that optimizers,
// target copies, finite-difference checks and checkpoints all treat them
// uniformly. Tensors are single samples laid out (channel, row, col).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "packbench/rng.hpp"

namespace packbench::nn {

struct Tensor {
    int c = 0;
    int h = 0;
    int w = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int channels, int rows, int cols, double fill = 0.0)
        : c(channels), h(rows), w(cols), v(static_cast<std::size_t>(channels) * rows * cols, fill) {}

    double& at(int ch, int y, int x) { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    double at(int ch, int y, int x) const { return v[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
};

/// Convolution with odd kernel k, zero padding k/2, stride 1.
struct Conv2d {
    int cin = 0;
    int cout = 0;
    int k = 3;
    std::size_t offset = 0;  // weights [cout][cin][k][k], then bias [cout]

    std::size_t size() const { return static_cast<std::size_t>(cout) * cin * k * k + cout; }
    Tensor forward(std::span<const double> params, const Tensor& in) const;
    /// Accumulates into grad and returns d(loss)/d(in).
    Tensor backward(std::span<const double> params, const Tensor& in, const Tensor& dout, std::span<double> grad) const;
};

struct Dense {
    int in = 0;
    int out = 0;
    std::size_t offset = 0;  // weights [out][in], then bias [out]

    std::size_t size() const { return static_cast<std::size_t>(out) * in + out; }
    std::vector<double> forward(std::span<const double> params, std::span<const double> x) const;
    std::vector<double> backward(std::span<const double> params, std::span<const double> x,
                                 std::span<const double> dout, std::span<double> grad) const;
};

void tanh_inplace(Tensor& t);
void tanh_inplace(std::vector<double>& v);
/// dout * (1 - out^2), in place on dout.
void tanh_backward(const std::vector<double>& out, std::vector<double>& dout);

/// 2x2 average pooling, ceil mode: edge windows average only the cells they cover.
Tensor avgpool2(const Tensor& in);
Tensor avgpool2_backward(const Tensor& dout, int in_h, int in_w);

/// Nearest-neighbor upsampling by 2, cropped to (rows, cols).
Tensor upsample2(const Tensor& in, int rows, int cols);
Tensor upsample2_backward(const Tensor& dout, int in_h, int in_w);

Tensor concat(const Tensor& a, const Tensor& b);
void split(const Tensor& ab, int channels_a, Tensor& a, Tensor& b);

/// Uniform Glorot initialization of conv/dense weights; biases 0.
void init_conv(const Conv2d& l, std::span<double> params, Rng& rng);
void init_dense(const Dense& l, std::span<double> params, Rng& rng);

/// Encoder-decoder scorer: one input stack in, one score grid of the same size
/// out. Three average-pool stages down, three nearest-upsample stages up with
/// skip concatenation, tanh after every hidden convolution, 1x1 linear head.
class WorkerNet {
public:
    struct Cache {
        Tensor in;
        Tensor e0, p0, e1, p1, e2, p2, e3;
        Tensor u2, c2, d2, u1, c1, d1, u0, c0, d0;
    };

    explicit WorkerNet(int in_channels = 6, int width = 16);

    int in_channels() const { return in_ch_; }
    int width() const { return width_; }
    std::size_t param_count() const { return params.size(); }
    std::string arch() const;

    void init(Rng& rng);
    Tensor forward(const Tensor& in, Cache* cache = nullptr) const;
    /// Accumulates d(loss)/d(params) into grad given d(loss)/d(output).
    void backward(const Cache& cache, const Tensor& dout, std::span<double> grad) const;

    std::vector<double> params;

private:
    int in_ch_;
    int width_;
    Conv2d enc0_, enc1_, enc2_, enc3_, dec2_, dec1_, dec0_, head_;
};

/// Candidate scorer: a shared convolutional trunk (three 3x3 convolutions with
/// pooling between them, then global average pooling) per slot, slot features
/// concatenated (zero for absent slots), and three fully connected layers
/// producing one score per slot.
class ManagerNet {
public:
    struct SlotCache {
        Tensor in, a0, p0, a1, p1, a2;
    };
    struct Cache {
        std::vector<std::optional<SlotCache>> slots;
        std::vector<double> features, h1, h2;
    };

    explicit ManagerNet(int slots = 20, int in_channels = 7, int width = 16, int hidden = 64);

    int slots() const { return slots_; }
    int in_channels() const { return in_ch_; }
    std::size_t param_count() const { return params.size(); }
    std::string arch() const;

    void init(Rng& rng);
    /// `inputs` has one entry per slot; nullopt marks an absent slot.
    std::vector<double> forward(const std::vector<std::optional<Tensor>>& inputs, Cache* cache = nullptr) const;
    void backward(const Cache& cache, std::span<const double> dscores, std::span<double> grad) const;

    std::vector<double> params;

private:
    int slots_;
    int in_ch_;
    int width_;
    int hidden_;
    Conv2d t0_, t1_, t2_;
    Dense f0_, f1_, f2_;
};

class Adam {
public:
    explicit Adam(std::size_t n, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : m_(n, 0.0), v_(n, 0.0), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(std::span<double> params, std::span<const double> grad, double lr);

private:
    std::vector<double> m_, v_;
    double b1_, b2_, eps_;
    std::int64_t t_ = 0;
};

struct Checkpoint {
    std::string arch;
    std::vector<double> params;
};

/// "PKQN", u16 version, u32 descriptor length, descriptor text, u64 parameter
/// count, parameters as little-endian float32.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace packbench::nn
