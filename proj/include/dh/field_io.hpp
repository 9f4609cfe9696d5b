#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dh/environment.hpp"

namespace dh {

constexpr std::uint32_t kContainerVersion = 1;

struct ContainerHeader {
    std::uint32_t version = kContainerVersion;
    int d = 2;
    int n_x = 0;
    int n_t = 0;
    double L = 1.0;
    double T_env = 1.0;
    std::uint64_t seed = 0;
};

/// components * values doubles, component-major.
struct NamedArray {
    std::string name;
    std::uint32_t components = 1;
    std::uint64_t values = 0;
    std::vector<double> data;
};

struct Container {
    ContainerHeader header;
    std::vector<NamedArray> arrays;

    const NamedArray& get(const std::string& name) const;
    bool has(const std::string& name) const;
};

/// Self-describing little-endian binary layout:
///   "DHFIELD1", version u32, d u32, n_x u32, n_t u32, L f64, T_env f64, seed u64, count u32,
///   then per array: name length u32, name bytes, components u32, values u64, f64 data.
void write_container(const std::string& path, const Container& c);
Container read_container(const std::string& path);

NamedArray pack_field(const std::string& name, const Field& f);
NamedArray pack_vector(const std::string& name, const VectorField& v);
NamedArray pack_matrix(const std::string& name, const MatrixField& m);
VectorField unpack_vector(const NamedArray& a);
MatrixField unpack_matrix(const NamedArray& a, int d);

void save_environment(const std::string& path, const EnvironmentRealization& env);
EnvironmentRealization load_environment(const std::string& path);

}  // namespace dh
