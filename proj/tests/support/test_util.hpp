#pragma once

// Shared fixtures and independent oracles for the test suites.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include "surveyforge/backend.hpp"
#include "surveyforge/survey_tree.hpp"

namespace sftest {

inline surveyforge::BackendPolicy fast_policy(int max_retries = 2, int parallelism = 4) {
    surveyforge::BackendPolicy policy;
    policy.max_retries = max_retries;
    policy.backoff_initial = std::chrono::milliseconds(0);
    policy.parallelism_limit = parallelism;
    return policy;
}

// The node-protocol snippet used across tree tests: one level-3 heading with
// both labeled blocks and a two-key citation group.
inline std::string protocol_snippet() {
    return
        "### 2.1 Section Title\n"
        "**Digest Construction:**\n"
        "Write about what information should be extracted from the full paper in "
        "this section.\n"
        "**Digest Analysis:**\n"
        "Write about how to organize and analyse papers [\"BIBKEY1\", \"BIBKEY2\"] "
        "with executable step.\n";
}

// ---------------------------------------------------------------------------
// Random tree generation for round-trip property tests. Titles are unique
// per sibling set; block texts avoid heading/label lines by construction.

class TreeGen {
public:
    explicit TreeGen(std::uint64_t seed) : rng_(seed) {}

    surveyforge::SkeletonNode random_tree(int max_depth = 4, int max_nodes = 30) {
        int budget = 1 + static_cast<int>(rng_() % static_cast<unsigned>(max_nodes));
        int counter = 0;
        surveyforge::SkeletonNode root = random_node(max_depth, budget, counter);
        return surveyforge::make_tree(1, std::move(root));
    }

private:
    std::string random_word() {
        static const char* words[] = {"alpha", "beta",  "gamma", "delta", "survey",
                                      "model", "scale", "study", "graph", "trend"};
        return words[rng_() % 10];
    }

    std::string random_title(int salt) {
        return random_word() + " " + random_word() + " " + std::to_string(salt);
    }

    std::string random_block() {
        switch (rng_() % 4) {
            case 0: return "";
            case 1: return "Collect " + random_word() + " details.";
            case 2:
                return "Compare " + random_word() + " against " + random_word() +
                       ".\nThen summarize [\"KEY" + std::to_string(rng_() % 5) + "\"].";
            default:
                return "Track the evolution of " + random_word() + " across papers.";
        }
    }

    surveyforge::SkeletonNode random_node(int depth_left, int& budget, int& counter) {
        surveyforge::SkeletonNode node = surveyforge::make_node(
            random_title(counter++), rng_() % 3 == 0 ? "Preamble " + random_word() : "",
            random_block(), random_block());
        --budget;
        if (depth_left > 1) {
            int children = static_cast<int>(rng_() % 4);
            for (int i = 0; i < children && budget > 0; ++i) {
                node.children.push_back(random_node(depth_left - 1, budget, counter));
            }
        }
        return node;
    }

    std::mt19937_64 rng_;
};

// Unique temp directory under the system temp root; removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& prefix) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                (prefix + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace sftest
