#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ifv/network.hpp"

namespace ifv {

static_assert(std::endian::native == std::endian::little,
              "network blobs are little-endian; big-endian hosts are unsupported");

// On-disk format: a JSON document listing layers in order plus a binary blob
// of concatenated float64 weight tensors. The JSON records each tensor's
// byte offset into the blob. See the README for the full schema.

namespace detail {

inline nlohmann::json shape_to_json(const Shape& s) {
    nlohmann::json a = nlohmann::json::array();
    for (auto d : s) a.push_back(d);
    return a;
}

inline Shape shape_from_json(const nlohmann::json& a) {
    Shape s;
    for (const auto& d : a) s.push_back(d.get<std::size_t>());
    return s;
}

}  // namespace detail

inline void save_network(const Network& net, const std::string& json_path,
                         const std::string& bin_path) {
    std::ofstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("save_network: cannot open " + bin_path);

    nlohmann::json doc;
    doc["format"] = "ifv-network";
    doc["version"] = 1;
    doc["input_shape"] = detail::shape_to_json(net.input_shape);
    doc["weights_file"] = std::filesystem::path(bin_path).filename().string();
    nlohmann::json layers = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& l : net.layers) {
        nlohmann::json j;
        j["kind"] = layer_kind_name(l.kind);
        if (l.kind == LayerKind::conv2d)
            j["padding"] = l.padding == Padding::same ? "same" : "valid";
        if (l.kind == LayerKind::maxpool2d) {
            j["pool"] = l.pool;
            j["stride"] = l.stride;
        }
        if (l.weights.size() > 0) {
            std::uint64_t bytes = l.weights.size() * sizeof(double);
            j["weights"] = {{"shape", detail::shape_to_json(l.weights.shape)},
                            {"offset", offset},
                            {"bytes", bytes}};
            bin.write(reinterpret_cast<const char*>(l.weights.data.data()),
                      static_cast<std::streamsize>(bytes));
            offset += bytes;
        }
        layers.push_back(std::move(j));
    }
    doc["layers"] = std::move(layers);
    bin.close();
    if (!bin) throw std::runtime_error("save_network: write failed for " + bin_path);

    std::ofstream js(json_path);
    if (!js) throw std::runtime_error("save_network: cannot open " + json_path);
    js << doc.dump(2) << "\n";
}

inline Network load_network(const std::string& json_path) {
    std::ifstream js(json_path);
    if (!js) throw std::runtime_error("load_network: cannot open " + json_path);
    nlohmann::json doc = nlohmann::json::parse(js);
    if (doc.value("format", "") != std::string("ifv-network"))
        throw std::runtime_error("load_network: " + json_path + " is not an ifv-network file");

    std::filesystem::path bin_path =
        std::filesystem::path(json_path).parent_path() / doc.at("weights_file").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw std::runtime_error("load_network: cannot open " + bin_path.string());

    auto read_tensor = [&](const nlohmann::json& w) {
        Shape shape = detail::shape_from_json(w.at("shape"));
        std::uint64_t offset = w.at("offset").get<std::uint64_t>();
        std::uint64_t bytes = w.at("bytes").get<std::uint64_t>();
        if (bytes != shape_size(shape) * sizeof(double))
            throw std::runtime_error("load_network: weight byte count does not match shape");
        Tensor t(shape);
        bin.seekg(static_cast<std::streamoff>(offset));
        bin.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(bytes));
        if (!bin) throw std::runtime_error("load_network: truncated weight blob");
        return t;
    };

    std::vector<Layer> layers;
    for (const auto& j : doc.at("layers")) {
        std::string kind = j.at("kind").get<std::string>();
        if (kind == "dense") {
            layers.push_back(Layer::dense(read_tensor(j.at("weights"))));
        } else if (kind == "conv2d") {
            Padding pad = j.value("padding", "valid") == std::string("same") ? Padding::same
                                                                             : Padding::valid;
            layers.push_back(Layer::conv2d(read_tensor(j.at("weights")), pad));
        } else if (kind == "bias_add") {
            layers.push_back(Layer::bias_add(read_tensor(j.at("weights"))));
        } else if (kind == "maxpool2d") {
            layers.push_back(Layer::maxpool2d(j.at("pool").get<std::size_t>(),
                                              j.at("stride").get<std::size_t>()));
        } else if (kind == "relu") {
            layers.push_back(Layer::relu());
        } else if (kind == "sigmoid") {
            layers.push_back(Layer::sigmoid_layer());
        } else if (kind == "softmax") {
            layers.push_back(Layer::softmax());
        } else if (kind == "flatten") {
            layers.push_back(Layer::flatten());
        } else if (kind == "square") {
            layers.push_back(Layer::square());
        } else {
            throw std::runtime_error("load_network: unknown layer kind '" + kind + "'");
        }
    }
    return make_network(detail::shape_from_json(doc.at("input_shape")), std::move(layers));
}

}  // namespace ifv
