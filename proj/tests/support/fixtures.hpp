#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "ace/feature_io.hpp"
#include "ace/synthetic.hpp"

namespace fixtures {

namespace fs = std::filesystem;

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("ace-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

  private:
    fs::path path_;
};

// The seed-7 reference stream: C=8, d=32, 50 per class, V=8, shift 0.4.
inline ace::io::SyntheticSpec reference_spec(std::uint64_t seed = 7) {
    ace::io::SyntheticSpec s;
    s.classes = 8;
    s.dim = 32;
    s.samples_per_class = 50;
    s.views = 8;
    s.shift = 0.4;
    s.seed = seed;
    return s;
}

inline fs::path write_stream(const ace::io::SyntheticSpec& spec, const fs::path& dir) {
    auto stream = ace::io::generate_synthetic_stream(spec);
    return ace::io::write_synthetic_stream(stream, dir);
}

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

}  // namespace fixtures
