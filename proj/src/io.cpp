#include "jamlab/io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace jamlab {

namespace {

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw std::runtime_error("jlnp: truncated file");
    return v;
}

}  // namespace

void write_jlnp(const std::string& path, const Eigen::VectorXd& theta) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_jlnp: cannot open " + path);
    f.write("JLNP", 4);
    put<std::uint32_t>(f, 1);
    put<std::uint64_t>(f, static_cast<std::uint64_t>(theta.size()));
    f.write(reinterpret_cast<const char*>(theta.data()),
            static_cast<std::streamsize>(sizeof(double) * theta.size()));
    if (!f) throw std::runtime_error("write_jlnp: write failed for " + path);
}

Eigen::VectorXd read_jlnp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_jlnp: cannot open " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "JLNP", 4) != 0)
        throw std::runtime_error("read_jlnp: bad magic in " + path);
    if (get<std::uint32_t>(f) != 1) throw std::runtime_error("read_jlnp: unsupported version");
    const auto n = static_cast<Eigen::Index>(get<std::uint64_t>(f));
    Eigen::VectorXd theta(n);
    f.read(reinterpret_cast<char*>(theta.data()),
           static_cast<std::streamsize>(sizeof(double) * n));
    if (!f) throw std::runtime_error("read_jlnp: truncated payload in " + path);
    return theta;
}

std::string string_hash(const std::string& text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_hash(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("file_hash: cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return string_hash(ss.str());
}

std::string build_id() {
    std::ostringstream ss;
#if defined(__clang__)
    ss << "clang-" << __clang_major__ << "." << __clang_minor__;
#elif defined(__GNUC__)
    ss << "gcc-" << __GNUC__ << "." << __GNUC_MINOR__;
#else
    ss << "cxx";
#endif
    ss << "-" << __DATE__;
    return ss.str();
}

void write_manifest(const std::string& path, const RunManifest& m) {
    nlohmann::json j;
    j["command"] = m.command;
    j["config_path"] = m.config_path;
    j["config_hash"] = m.config_hash;
    j["build_id"] = m.build_id;
    j["seed"] = m.seed;
    j["wall_seconds"] = m.wall_seconds;
    j["exit_code"] = m.exit_code;
    j["out_dir"] = m.out_dir;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_manifest: cannot open " + path);
    f << j.dump(2) << "\n";
}

}  // namespace jamlab
