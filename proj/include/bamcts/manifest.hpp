#pragma once

// Provenance record written next to every command's outputs.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace bamcts {

// Git object id of a blob: sha1("blob <size>\0" + content), lowercase hex.
std::string git_blob_hash(const std::string& content);
std::string git_blob_hash_file(const std::string& path);

struct RunManifest {
    std::string command;
    nlohmann::json config;                      // fully resolved settings
    std::map<std::string, std::uint64_t> seeds;
    std::map<std::string, std::string> inputs;  // path -> content hash
    std::map<std::string, std::string> outputs; // role -> path
    std::string started;                        // ISO-8601 UTC
    std::string finished;

    nlohmann::json to_json() const;
    static RunManifest from_json(const nlohmann::json& j);

    void save(const std::string& path) const;
    static RunManifest load(const std::string& path);

    void add_input(const std::string& path);  // hashes the file now
    bool operator==(const RunManifest&) const = default;
};

std::string utc_timestamp();

}  // namespace bamcts
