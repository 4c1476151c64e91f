#pragma once

#include <span>
#include <vector>

#include "carve/diff/tape.hpp"
#include "carve/rng.hpp"

namespace carve::nn {

// Feature standardization by mean/std. Applied on the tape with constant
// leaves so gradients flow through the affine map.
struct Standardizer {
    std::vector<double> mean, std;

    static Standardizer fit(const Matrix& x);
    static Standardizer identity(std::size_t d);

    std::vector<double> apply(std::span<const double> x) const;
    std::vector<double> invert(std::span<const double> z) const;
    diff::NodeId apply_tape(diff::Tape& t, diff::NodeId x) const;

    bool operator==(const Standardizer&) const = default;
};

// Fully connected network with tanh hidden activations and a linear output
// layer. Bias-free variant for the one-class detector.
struct Mlp {
    struct Layer {
        diff::Parameter w;
        diff::Parameter b;  // zero-sized when bias is disabled
        bool has_bias = true;
    };
    std::vector<Layer> layers;

    static Mlp make(std::span<const std::size_t> widths, bool bias, Rng& rng, bool zero_init_last = false);

    diff::NodeId forward(diff::Tape& t, diff::NodeId input);
    std::vector<double> forward(std::span<const double> x);

    std::vector<diff::Parameter*> params();
    std::size_t input_dim() const { return layers.front().w.value.shape[1]; }
    std::size_t output_dim() const { return layers.back().w.value.shape[0]; }
};

}  // namespace carve::nn
