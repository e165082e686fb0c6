#include "awda/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

#include <json.hpp>
#include <openssl/evp.h>

namespace awda {

std::string sha256_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("sha256_file: cannot open " + path);

    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256_file: digest init failed");

    char buf[65536];
    while (f) {
        f.read(buf, sizeof(buf));
        std::streamsize got = f.gcount();
        if (got > 0 && EVP_DigestUpdate(ctx.get(), buf, static_cast<std::size_t>(got)) != 1)
            throw std::runtime_error("sha256_file: digest update failed");
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
        throw std::runtime_error("sha256_file: digest final failed");

    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

void RunManifest::add_output(const std::string& path) {
    outputs.push_back({path, sha256_file(path)});
}

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["command"] = command;
    j["config"] = config_text;
    j["seed"] = seed;
    j["inputs"] = inputs;
    j["outputs"] = nlohmann::json::array();
    for (const auto& a : outputs) j["outputs"].push_back({{"path", a.path}, {"sha256", a.sha256}});
    j["wall_clock_sec"] = wall_clock_sec;
    return j.dump(2);
}

void RunManifest::write(const std::string& dir) const {
    std::string tmp = dir + "/manifest.json.tmp";
    std::string dst = dir + "/manifest.json";
    {
        std::ofstream f(tmp);
        if (!f) throw std::runtime_error("cannot write " + tmp);
        f << to_json() << "\n";
    }
    if (std::rename(tmp.c_str(), dst.c_str()) != 0)
        throw std::runtime_error("cannot move manifest into place: " + dst);
}

}  // namespace awda
