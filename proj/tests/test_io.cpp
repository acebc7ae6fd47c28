#include <doctest.h>

#include <Eigen/Dense>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "jamlab/io.hpp"
#include "json.hpp"

using namespace jamlab;

namespace {

std::string tmp_path(const char* name) { return std::string("jl_io_test_") + name; }

}  // namespace

TEST_CASE("jlnp: bitwise round trip and header layout") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> dist;
    Eigen::VectorXd theta(257);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = dist(rng);
    theta[0] = 0.0;
    theta[1] = -0.0;
    theta[2] = 1e-308;  // denormal territory must survive unchanged

    const std::string path = tmp_path("roundtrip.jlnp");
    write_jlnp(path, theta);

    // header: magic, version u32 = 1, count u64, then raw doubles
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f.good());
    char magic[4];
    f.read(magic, 4);
    CHECK(std::string(magic, 4) == "JLNP");
    std::uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), 4);
    CHECK(version == 1);
    std::uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), 8);
    CHECK(count == 257);
    f.seekg(0, std::ios::end);
    CHECK(f.tellg() == static_cast<std::streamoff>(16 + 257 * 8));
    f.close();

    const Eigen::VectorXd back = read_jlnp(path);
    REQUIRE(back.size() == theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        CHECK(std::memcmp(&back[i], &theta[i], sizeof(double)) == 0);
    }
    std::remove(path.c_str());
}

TEST_CASE("jlnp: rejects bad magic, bad version, truncation") {
    const std::string path = tmp_path("bad.jlnp");

    {
        std::ofstream f(path, std::ios::binary);
        f.write("NOPE", 4);
        std::uint32_t v = 1;
        f.write(reinterpret_cast<const char*>(&v), 4);
        std::uint64_t n = 0;
        f.write(reinterpret_cast<const char*>(&n), 8);
    }
    CHECK_THROWS_AS(read_jlnp(path), std::runtime_error);

    {
        std::ofstream f(path, std::ios::binary);
        f.write("JLNP", 4);
        std::uint32_t v = 9;
        f.write(reinterpret_cast<const char*>(&v), 4);
        std::uint64_t n = 0;
        f.write(reinterpret_cast<const char*>(&n), 8);
    }
    CHECK_THROWS_AS(read_jlnp(path), std::runtime_error);

    {
        std::ofstream f(path, std::ios::binary);
        f.write("JLNP", 4);
        std::uint32_t v = 1;
        f.write(reinterpret_cast<const char*>(&v), 4);
        std::uint64_t n = 4;  // promises 4 doubles, delivers 1
        f.write(reinterpret_cast<const char*>(&n), 8);
        double x = 1.5;
        f.write(reinterpret_cast<const char*>(&x), 8);
    }
    CHECK_THROWS_AS(read_jlnp(path), std::runtime_error);

    CHECK_THROWS_AS(read_jlnp(tmp_path("does_not_exist.jlnp")), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("fnv1a hashes match published vectors") {
    // 64-bit FNV-1a reference values
    CHECK(string_hash("") == "cbf29ce484222325");
    CHECK(string_hash("a") == "af63dc4c8601ec8c");
    CHECK(string_hash("foobar") == "85944171f73967e8");

    const std::string path = tmp_path("hash.txt");
    {
        std::ofstream f(path, std::ios::binary);
        f << "foobar";
    }
    CHECK(file_hash(path) == string_hash("foobar"));
    std::remove(path.c_str());

    CHECK_THROWS_AS(file_hash(tmp_path("missing.txt")), std::runtime_error);
}

TEST_CASE("run manifest is valid json with every field") {
    RunManifest m;
    m.command = "sweep";
    m.config_path = "configs/sweep.json";
    m.config_hash = string_hash("contents");
    m.build_id = build_id();
    m.seed = 123456789ULL;
    m.wall_seconds = 12.25;
    m.exit_code = 2;
    m.out_dir = "out/sweep_a";

    const std::string path = tmp_path("manifest.json");
    write_manifest(path, m);

    std::ifstream f(path);
    REQUIRE(f.good());
    const nlohmann::json j = nlohmann::json::parse(f);
    CHECK(j.at("command").get<std::string>() == "sweep");
    CHECK(j.at("config_path").get<std::string>() == "configs/sweep.json");
    CHECK(j.at("config_hash").get<std::string>() == m.config_hash);
    CHECK(j.at("build_id").get<std::string>() == m.build_id);
    CHECK(j.at("seed").get<std::uint64_t>() == 123456789ULL);
    CHECK(j.at("wall_seconds").get<double>() == 12.25);
    CHECK(j.at("exit_code").get<int>() == 2);
    CHECK(j.at("out_dir").get<std::string>() == "out/sweep_a");
    std::remove(path.c_str());

    CHECK_FALSE(build_id().empty());
}
