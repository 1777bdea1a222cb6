#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "bamcts/errors.hpp"
#include "bamcts/manifest.hpp"

using namespace bamcts;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("bamcts_manifest_" + name)).string();
}

}  // namespace

TEST_CASE("git blob hashes match git") {
    // values from `git hash-object`
    CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
    const std::string path = temp_path("blob.txt");
    std::ofstream(path) << "hello\n";
    CHECK(git_blob_hash_file(path) == "ce013625030ba8dba906f756967f9e9ca394464a");
    std::remove(path.c_str());
    CHECK_THROWS(git_blob_hash_file(temp_path("missing")));
}

TEST_CASE("manifest round trips through disk") {
    const std::string input = temp_path("input.bin");
    std::ofstream(input, std::ios::binary) << std::string("abc\0def", 7);

    RunManifest m;
    m.command = "train";
    m.config = {{"epochs", 3}, {"hidden", {64, 64}}, {"rho", 0.1}, {"name", "x"}};
    m.seeds = {{"seed", 18446744073709551615ULL}, {"ensemble", 2}};
    m.add_input(input);
    m.outputs = {{"metrics", "run/metrics.csv"}};
    m.started = utc_timestamp();
    m.finished = utc_timestamp();

    const std::string path = temp_path("manifest.json");
    m.save(path);
    const RunManifest back = RunManifest::load(path);
    CHECK(back == m);
    CHECK(back.inputs.at(input) == git_blob_hash(std::string("abc\0def", 7)));
    CHECK(RunManifest::from_json(m.to_json()) == m);
    std::remove(path.c_str());
    std::remove(input.c_str());
}

TEST_CASE("malformed manifests are data errors") {
    CHECK_THROWS_AS(RunManifest::from_json(nlohmann::json::array()), DataError);
    CHECK_THROWS_AS(RunManifest::from_json({{"command", 5}}), DataError);
    const std::string path = temp_path("broken.json");
    std::ofstream(path) << "{ not json";
    CHECK_THROWS_AS(RunManifest::load(path), DataError);
    std::remove(path.c_str());
}

TEST_CASE("timestamps are ISO-8601 UTC") {
    const std::string t = utc_timestamp();
    REQUIRE(t.size() == 20);
    CHECK(t[4] == '-');
    CHECK(t[10] == 'T');
    CHECK(t.back() == 'Z');
}
