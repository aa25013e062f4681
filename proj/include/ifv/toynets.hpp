#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ifv/network.hpp"
#include "ifv/rng.hpp"

namespace ifv {

namespace detail {

inline Tensor random_tensor(Rng& rng, Shape shape, double stddev) {
    Tensor t(std::move(shape));
    t.data = rng.gaussian_vector(t.size(), stddev);
    return t;
}

}  // namespace detail

// Small conv chain: conv(3x3) + bias + relu blocks over the hidden channel
// counts, then a final conv(3x3) + bias producing n_f feature maps. Output is
// rank-3, one channel per feature.
inline Network make_toy_conv(std::size_t height, std::size_t width, std::size_t in_channels,
                             const std::vector<std::size_t>& hidden, std::size_t n_f,
                             std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Layer> layers;
    std::size_t ci = in_channels;
    for (std::size_t co : hidden) {
        double std_w = std::sqrt(2.0 / static_cast<double>(9 * ci));
        layers.push_back(Layer::conv2d(detail::random_tensor(rng, {co, 3, 3, ci}, std_w)));
        layers.push_back(Layer::bias_add(detail::random_tensor(rng, {co}, 0.05)));
        layers.push_back(Layer::relu());
        ci = co;
    }
    double std_w = std::sqrt(2.0 / static_cast<double>(9 * ci));
    layers.push_back(Layer::conv2d(detail::random_tensor(rng, {n_f, 3, 3, ci}, std_w)));
    layers.push_back(Layer::bias_add(detail::random_tensor(rng, {n_f}, 0.05)));
    return make_network({height, width, in_channels}, std::move(layers));
}

// Classification head of a softmax-trained classifier: conv trunk, then a
// dense layer producing the class logits (aggregation = Id on the rank-1
// output). Softmax training is translation invariant along (1,...,1), so
// weight decay settles on column-centered weights and a centered bias; the
// head carries that artifact exactly. Consequently the columns of every
// Jacobian sum to zero and the constant direction is a shared co-kernel.
inline Network make_toy_softmax_head(std::size_t height, std::size_t width,
                                     std::size_t in_channels, std::size_t conv_channels,
                                     std::size_t n_f, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Layer> layers;
    double std_c = std::sqrt(2.0 / static_cast<double>(9 * in_channels));
    layers.push_back(Layer::conv2d(detail::random_tensor(rng, {conv_channels, 3, 3, in_channels}, std_c)));
    layers.push_back(Layer::bias_add(detail::random_tensor(rng, {conv_channels}, 0.05)));
    layers.push_back(Layer::relu());
    layers.push_back(Layer::flatten());
    std::size_t flat = (height - 2) * (width - 2) * conv_channels;
    Tensor w = detail::random_tensor(rng, {n_f, flat}, std::sqrt(1.0 / static_cast<double>(flat)));
    for (std::size_t c = 0; c < flat; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < n_f; ++r) mean += w[r * flat + c];
        mean /= static_cast<double>(n_f);
        for (std::size_t r = 0; r < n_f; ++r) w[r * flat + c] -= mean;
    }
    layers.push_back(Layer::dense(std::move(w)));
    Tensor b = detail::random_tensor(rng, {n_f}, 0.05);
    double bmean = 0.0;
    for (double v : b.data) bmean += v;
    for (double& v : b.data) v -= bmean / static_cast<double>(n_f);
    layers.push_back(Layer::bias_add(std::move(b)));
    return make_network({height, width, in_channels}, std::move(layers));
}

// Toy conv net with one feature's filter and bias zeroed out. The feature's
// Jacobian row vanishes for every input, so e_f sits in every co-kernel.
inline Network make_toy_dead_feature(std::size_t height, std::size_t width,
                                     std::size_t in_channels,
                                     const std::vector<std::size_t>& hidden, std::size_t n_f,
                                     std::size_t dead_feature, std::uint64_t seed) {
    if (dead_feature >= n_f)
        throw std::invalid_argument("make_toy_dead_feature: dead feature index out of range");
    Network net = make_toy_conv(height, width, in_channels, hidden, n_f, seed);
    Layer& final_conv = net.layers[net.layers.size() - 2];
    Layer& final_bias = net.layers[net.layers.size() - 1];
    const std::size_t per_filter = final_conv.weights.size() / n_f;
    for (std::size_t i = 0; i < per_filter; ++i)
        final_conv.weights[dead_feature * per_filter + i] = 0.0;
    final_bias.weights[dead_feature] = 0.0;
    return net;
}

}  // namespace ifv
