#pragma once

#include <string>
#include <utility>
#include <vector>

#include "awda/ad.hpp"

namespace awda {

// Ordered set of named tensors. Order is the serialization and binding order.
struct ParamBag {
    std::vector<std::pair<std::string, ad::Tensor>> items;

    ad::Tensor& add(const std::string& name, ad::Tensor t);
    ad::Tensor* find(const std::string& name);
    const ad::Tensor* find(const std::string& name) const;
    int index_of(const std::string& name) const;  // -1 if absent
    std::size_t size() const { return items.size(); }
};

// Leaves for every bag entry on one tape, in bag order.
struct BoundParams {
    std::vector<ad::Var> vars;
};

BoundParams bind_params(ad::Tape& tape, const ParamBag& bag);

// Plain SGD with momentum: v <- mu*v + g ; p <- p - lr*v.
struct SgdMomentum {
    double lr = 1e-2;
    double momentum = 0.9;
    std::vector<ad::Tensor> velocity;

    void step(ParamBag& bag, const ad::Tape& tape, const BoundParams& bound);
};

// Binary checkpoint container: magic, little-endian u64 JSON index length,
// JSON index (tensor names/shapes/offsets plus free-form meta), then the
// payload as little-endian doubles.
void save_checkpoint(const std::string& path, const ParamBag& bag, const std::string& meta_json);

struct Checkpoint {
    ParamBag params;
    std::string meta_json;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace awda
