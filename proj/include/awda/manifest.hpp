#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace awda {

std::string sha256_file(const std::string& path);

// Run provenance record, written atomically at run end. Identical configs and
// seed produce identical artifact hashes.
struct RunManifest {
    std::string command;
    std::string config_text;  // key = value snapshot (may be empty)
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    struct Artifact {
        std::string path;
        std::string sha256;
    };
    std::vector<Artifact> outputs;
    double wall_clock_sec = 0;

    void add_output(const std::string& path);  // hashes the file
    std::string to_json() const;

    // Writes <dir>/manifest.json via a temp file + rename.
    void write(const std::string& dir) const;
};

}  // namespace awda
