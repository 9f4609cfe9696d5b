#include "dh/field_io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "dh/errors.hpp"

namespace dh {

namespace {

constexpr char kMagic[8] = {'D', 'H', 'F', 'I', 'E', 'L', 'D', '1'};

template <typename T>
void put(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    unsigned char bytes[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw IoError("container: truncated file");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    T v;
    std::memcpy(&v, bytes, sizeof(T));
    return v;
}

}  // namespace

const NamedArray& Container::get(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return a;
    throw IoError("container: missing array '" + name + "'");
}

bool Container::has(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return true;
    return false;
}

void write_container(const std::string& path, const Container& c) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("container: cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(os, c.header.version);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.header.d));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.header.n_x));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.header.n_t));
    put<double>(os, c.header.L);
    put<double>(os, c.header.T_env);
    put<std::uint64_t>(os, c.header.seed);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.arrays.size()));
    for (const auto& a : c.arrays) {
        if (a.data.size() != a.components * a.values) throw IoError("container: array '" + a.name + "' size mismatch");
        put<std::uint32_t>(os, static_cast<std::uint32_t>(a.name.size()));
        os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        put<std::uint32_t>(os, a.components);
        put<std::uint64_t>(os, a.values);
        for (double v : a.data) put<double>(os, v);
    }
    if (!os) throw IoError("container: write failed for '" + path + "'");
}

Container read_container(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("container: cannot open '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw IoError("container: bad magic in '" + path + "'");
    Container c;
    c.header.version = get<std::uint32_t>(is);
    if (c.header.version != kContainerVersion)
        throw IoError("container: unsupported format version " + std::to_string(c.header.version));
    c.header.d = static_cast<int>(get<std::uint32_t>(is));
    c.header.n_x = static_cast<int>(get<std::uint32_t>(is));
    c.header.n_t = static_cast<int>(get<std::uint32_t>(is));
    c.header.L = get<double>(is);
    c.header.T_env = get<double>(is);
    c.header.seed = get<std::uint64_t>(is);
    std::uint32_t count = get<std::uint32_t>(is);
    for (std::uint32_t k = 0; k < count; ++k) {
        NamedArray a;
        std::uint32_t len = get<std::uint32_t>(is);
        a.name.resize(len);
        if (!is.read(a.name.data(), len)) throw IoError("container: truncated name");
        a.components = get<std::uint32_t>(is);
        a.values = get<std::uint64_t>(is);
        a.data.resize(a.components * a.values);
        for (double& v : a.data) v = get<double>(is);
        c.arrays.push_back(std::move(a));
    }
    return c;
}

NamedArray pack_field(const std::string& name, const Field& f) {
    return NamedArray{name, 1, f.size(), f};
}

NamedArray pack_vector(const std::string& name, const VectorField& v) {
    NamedArray a{name, static_cast<std::uint32_t>(v.size()), v.empty() ? 0 : v.front().size(), {}};
    for (const auto& c : v) a.data.insert(a.data.end(), c.begin(), c.end());
    return a;
}

NamedArray pack_matrix(const std::string& name, const MatrixField& m) {
    NamedArray a{name, static_cast<std::uint32_t>(m.c.size()), m.nodes(), {}};
    for (const auto& c : m.c) a.data.insert(a.data.end(), c.begin(), c.end());
    return a;
}

VectorField unpack_vector(const NamedArray& a) {
    VectorField v(a.components);
    for (std::uint32_t i = 0; i < a.components; ++i)
        v[i].assign(a.data.begin() + static_cast<long>(i * a.values), a.data.begin() + static_cast<long>((i + 1) * a.values));
    return v;
}

MatrixField unpack_matrix(const NamedArray& a, int d) {
    if (static_cast<int>(a.components) != d * d) throw IoError("container: '" + a.name + "' is not a d x d field");
    MatrixField m;
    m.d = d;
    m.c = unpack_vector(a);
    return m;
}

void save_environment(const std::string& path, const EnvironmentRealization& env) {
    Container c;
    c.header = {kContainerVersion, env.grid.d, env.grid.n_x, env.grid.n_t, env.grid.L, env.grid.T_env, env.seed};
    const auto& p = env.params;
    c.arrays.push_back({"params", 1, 7, {p.ell_x, p.ell_t, p.beta_decay, p.sigma_s, p.sigma_a, p.lambda, p.Lambda}});
    const auto& b = env.bbar_spec;
    c.arrays.push_back({"bbar_spec", 1, 4, {static_cast<double>(static_cast<int>(b.model)), b.amplitude, b.period, b.tau}});
    c.arrays.push_back(pack_matrix("a", env.a));
    c.arrays.push_back(pack_matrix("s", env.s));
    NamedArray bb{"bbar", static_cast<std::uint32_t>(env.grid.d), static_cast<std::uint64_t>(env.grid.n_t), {}};
    for (int i = 0; i < env.grid.d; ++i)
        for (int t = 0; t < env.grid.n_t; ++t) bb.data.push_back(env.bbar_at(t, i));
    c.arrays.push_back(std::move(bb));
    write_container(path, c);
}

EnvironmentRealization load_environment(const std::string& path) {
    Container c = read_container(path);
    EnvironmentRealization env;
    env.grid = {c.header.d, c.header.n_x, c.header.n_t, c.header.L, c.header.T_env};
    env.grid.validate();
    env.seed = c.header.seed;
    const auto& p = c.get("params").data;
    if (p.size() != 7) throw IoError("container: bad params block");
    env.params = {p[0], p[1], p[2], p[3], p[4], p[5], p[6]};
    const auto& b = c.get("bbar_spec").data;
    if (b.size() != 4) throw IoError("container: bad bbar_spec block");
    env.bbar_spec = {static_cast<BbarModel>(static_cast<int>(b[0])), b[1], b[2], b[3]};
    env.a = unpack_matrix(c.get("a"), env.grid.d);
    env.s = unpack_matrix(c.get("s"), env.grid.d);
    const auto& bb = c.get("bbar");
    env.bbar.assign(static_cast<std::size_t>(env.grid.n_t * env.grid.d), 0.0);
    for (int i = 0; i < env.grid.d; ++i)
        for (int t = 0; t < env.grid.n_t; ++t)
            env.bbar[static_cast<std::size_t>(t * env.grid.d + i)] = bb.data[static_cast<std::size_t>(i * env.grid.n_t + t)];
    if (env.a.nodes() != env.grid.size() || env.s.nodes() != env.grid.size())
        throw IoError("container: field sizes do not match the grid header");
    return env;
}

}  // namespace dh
