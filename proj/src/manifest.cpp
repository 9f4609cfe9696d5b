#include "dh/manifest.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dh/errors.hpp"
#include "dh/rng.hpp"

namespace dh {

namespace fs = std::filesystem;

std::map<std::string, std::string> module_versions() {
    return {{"environment", "1.0"}, {"stream_solver", "1.0"}, {"corrector", "1.0"}, {"path_clt", "1.0"},
            {"pde_solver", "1.0"},  {"experiment", "1.0"},    {"cli", "1.0"}};
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace {

std::string read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

OutputRegistry::OutputRegistry(std::string out_dir) : dir_(std::move(out_dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory '" + dir_ + "': " + ec.message());
}

std::string OutputRegistry::path(const std::string& name) const { return (fs::path(dir_) / name).string(); }

void OutputRegistry::write_text(const std::string& name, const std::string& kind, const std::string& content) {
    std::ofstream f(path(name), std::ios::binary);
    if (!f) throw IoError("cannot write '" + path(name) + "'");
    f << content;
    f.close();
    if (!f) throw IoError("write failed for '" + path(name) + "'");
    record(name, kind);
}

void OutputRegistry::record(const std::string& name, const std::string& kind) {
    const std::string body = read_all(path(name));
    OutputFile of{name, kind, body.size(), hex64(fnv1a64(body))};
    for (auto& f : files_)
        if (f.path == name) {
            f = of;
            return;
        }
    files_.push_back(of);
}

std::string manifest_json(const RunManifest& m) {
    nlohmann::ordered_json j;
    j["subcommand"] = m.subcommand;
    j["config_hash"] = m.config_hash;
    j["base_seed"] = m.base_seed;
    j["module_versions"] = m.module_versions;
    j["started"] = m.started;
    j["finished"] = m.finished;
    j["csv_schema_version"] = m.csv_schema_version;
    j["outputs"] = nlohmann::ordered_json::array();
    for (const auto& f : m.outputs)
        j["outputs"].push_back({{"path", f.path}, {"kind", f.kind}, {"bytes", f.bytes}, {"fnv1a64", f.digest}});
    return j.dump(2) + "\n";
}

void write_manifest(const std::string& out_dir, RunManifest m, const OutputRegistry& reg) {
    m.outputs = reg.files();
    m.finished = utc_now();
    const std::string p = (fs::path(out_dir) / "manifest.json").string();
    std::ofstream f(p, std::ios::binary);
    if (!f) throw IoError("cannot write '" + p + "'");
    f << manifest_json(m);
}

}  // namespace dh
