#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace dh {

constexpr int kCsvSchemaVersion = 1;

struct OutputFile {
    std::string path;
    std::string kind;
    std::uint64_t bytes = 0;
    /// FNV-1a of the file contents, 16 hex digits.
    std::string digest;
};

struct RunManifest {
    std::string subcommand;
    std::string config_hash;
    std::uint64_t base_seed = 0;
    std::map<std::string, std::string> module_versions;
    std::string started;
    std::string finished;
    int csv_schema_version = kCsvSchemaVersion;
    std::vector<OutputFile> outputs;
};

std::map<std::string, std::string> module_versions();
/// UTC ISO-8601 timestamp.
std::string utc_now();

/// Collects every file written during a run; the manifest is the single sink.
class OutputRegistry {
public:
    explicit OutputRegistry(std::string out_dir);
    const std::string& dir() const { return dir_; }
    std::string path(const std::string& name) const;
    /// Writes `content` to out_dir/name and records it.
    void write_text(const std::string& name, const std::string& kind, const std::string& content);
    /// Records a file already written to out_dir/name.
    void record(const std::string& name, const std::string& kind);
    const std::vector<OutputFile>& files() const { return files_; }

private:
    std::string dir_;
    std::vector<OutputFile> files_;
};

std::string manifest_json(const RunManifest& m);
void write_manifest(const std::string& out_dir, RunManifest m, const OutputRegistry& reg);

}  // namespace dh
