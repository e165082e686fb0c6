#include "awda/params.hpp"

#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>

#include <json.hpp>

#include "awda/util.hpp"

namespace awda {

ad::Tensor& ParamBag::add(const std::string& name, ad::Tensor t) {
    require(index_of(name) < 0, "ParamBag: duplicate name " + name);
    items.emplace_back(name, std::move(t));
    return items.back().second;
}

ad::Tensor* ParamBag::find(const std::string& name) {
    int i = index_of(name);
    return i < 0 ? nullptr : &items[i].second;
}

const ad::Tensor* ParamBag::find(const std::string& name) const {
    int i = index_of(name);
    return i < 0 ? nullptr : &items[i].second;
}

int ParamBag::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < items.size(); ++i)
        if (items[i].first == name) return static_cast<int>(i);
    return -1;
}

BoundParams bind_params(ad::Tape& tape, const ParamBag& bag) {
    BoundParams out;
    out.vars.reserve(bag.items.size());
    for (const auto& [name, t] : bag.items) out.vars.push_back(tape.leaf(t));
    return out;
}

void SgdMomentum::step(ParamBag& bag, const ad::Tape& tape, const BoundParams& bound) {
    require(bound.vars.size() == bag.items.size(), "SgdMomentum: binding/bag mismatch");
    if (velocity.empty()) {
        velocity.reserve(bag.items.size());
        for (const auto& [name, t] : bag.items)
            velocity.emplace_back(t.rows(), t.cols(), 0.0);
    }
    require(velocity.size() == bag.items.size(), "SgdMomentum: velocity/bag mismatch");
    for (std::size_t i = 0; i < bag.items.size(); ++i) {
        ad::Tensor& p = bag.items[i].second;
        const ad::Tensor& g = tape.grad(bound.vars[i]);
        ad::Tensor& v = velocity[i];
        if (g.size() == 0) {
            // Not reached by the loss this step; momentum still decays.
            for (int e = 0; e < v.size(); ++e) {
                v[e] *= momentum;
                p[e] -= lr * v[e];
            }
            continue;
        }
        for (int e = 0; e < p.size(); ++e) {
            v[e] = momentum * v[e] + g[e];
            p[e] -= lr * v[e];
        }
    }
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

constexpr char kMagic[8] = {'A', 'W', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamBag& bag, const std::string& meta_json) {
    nlohmann::json index;
    index["tensors"] = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : bag.items) {
        index["tensors"].push_back(
            {{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(t.size());
    }
    index["meta"] = meta_json.empty() ? nlohmann::json(nullptr) : nlohmann::json::parse(meta_json);
    std::string idx = index.dump();

    std::vector<unsigned char> buf;
    buf.insert(buf.end(), kMagic, kMagic + 8);
    put_u64(buf, idx.size());
    buf.insert(buf.end(), idx.begin(), idx.end());
    for (const auto& [name, t] : bag.items) {
        for (int i = 0; i < t.size(); ++i) {
            std::uint64_t bits;
            std::memcpy(&bits, t.data() + i, 8);
            put_u64(buf, bits);
        }
    }

    FilePtr f(std::fopen(path.c_str(), "wb"));
    if (!f) throw std::runtime_error("cannot write " + path);
    if (std::fwrite(buf.data(), 1, buf.size(), f.get()) != buf.size())
        throw std::runtime_error("short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) throw std::runtime_error("cannot open " + path);
    std::fseek(f.get(), 0, SEEK_END);
    long sz = std::ftell(f.get());
    std::fseek(f.get(), 0, SEEK_SET);
    if (sz < 16) throw std::runtime_error(path + ": truncated checkpoint");
    std::vector<unsigned char> buf(static_cast<std::size_t>(sz));
    if (std::fread(buf.data(), 1, buf.size(), f.get()) != buf.size())
        throw std::runtime_error(path + ": read failed");
    if (std::memcmp(buf.data(), kMagic, 8) != 0)
        throw std::runtime_error(path + ": bad checkpoint magic");

    std::uint64_t idx_len = get_u64(buf.data() + 8);
    if (16 + idx_len > buf.size()) throw std::runtime_error(path + ": bad index length");
    nlohmann::json index = nlohmann::json::parse(
        std::string(reinterpret_cast<const char*>(buf.data() + 16), idx_len));

    const unsigned char* payload = buf.data() + 16 + idx_len;
    std::size_t payload_doubles = (buf.size() - 16 - idx_len) / 8;

    Checkpoint out;
    for (const auto& entry : index["tensors"]) {
        std::string name = entry["name"].get<std::string>();
        int rows = entry["rows"].get<int>();
        int cols = entry["cols"].get<int>();
        std::uint64_t off = entry["offset"].get<std::uint64_t>();
        std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
        if (off + count > payload_doubles) throw std::runtime_error(path + ": tensor out of bounds");
        ad::Tensor t(rows, cols);
        for (std::uint64_t i = 0; i < count; ++i) {
            std::uint64_t bits = get_u64(payload + 8 * (off + i));
            double d;
            std::memcpy(&d, &bits, 8);
            t[static_cast<int>(i)] = d;
        }
        out.params.add(name, std::move(t));
    }
    if (!index["meta"].is_null()) out.meta_json = index["meta"].dump();
    return out;
}

}  // namespace awda
