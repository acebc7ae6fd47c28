#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace jamlab {

/// Flat parameter blob: 16-byte header (magic "JLNP", version u32, count u64)
/// followed by count little-endian IEEE-754 doubles. This is the checkpoint
/// format; arch lives in the run config, not the blob.
void write_jlnp(const std::string& path, const Eigen::VectorXd& theta);
Eigen::VectorXd read_jlnp(const std::string& path);

/// FNV-1a of a file's bytes, hex string; used for config hashes in manifests.
std::string file_hash(const std::string& path);
std::string string_hash(const std::string& text);

/// JSON run manifest: config hash, build id, wall time, exit status.
struct RunManifest {
    std::string command;
    std::string config_path;
    std::string config_hash;
    std::string build_id;
    std::uint64_t seed = 0;
    double wall_seconds = 0;
    int exit_code = 0;
    std::string out_dir;
};

void write_manifest(const std::string& path, const RunManifest& manifest);

/// Compiler + date stamp used as build_id.
std::string build_id();

}  // namespace jamlab
