#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <cstdlib>

#include "hazelab/image.hpp"
#include "hazelab/rng.hpp"
#include "hazelab/tensor.hpp"

namespace testing_support {

inline hazelab::Tensor uniform_tensor(hazelab::Shape shape, std::uint64_t seed, float lo = -1.0f,
                                      float hi = 1.0f) {
    hazelab::Rng rng(seed);
    hazelab::Tensor t(shape);
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

inline hazelab::RgbImage uniform_image(int h, int w, std::uint64_t seed, float lo = 0.0f,
                                       float hi = 1.0f) {
    hazelab::Rng rng(seed);
    hazelab::RgbImage img(h, w);
    for (auto& v : img.data) v = static_cast<float>(rng.uniform(lo, hi));
    return img;
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("hazelab_" + tag + "_" + std::to_string(rd()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
}

// Relative path -> contents for every regular file below root.
inline std::map<std::string, std::string> snapshot_tree(const std::filesystem::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            files[std::filesystem::relative(e.path(), root).generic_string()] = read_file(e.path());
        }
    }
    return files;
}

// Runs the hazelab binary with a shell command line; returns the exit status.
inline int run_binary(const std::string& args, const std::filesystem::path& log = {}) {
    std::string cmd = std::string("\"") + HAZELAB_CLI_PATH + "\" " + args;
    cmd += log.empty() ? " >/dev/null 2>&1" : " >\"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    if (status == -1) return -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace testing_support
