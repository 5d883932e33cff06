#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "ace/numerics.hpp"

namespace ace::io {

// ACEF container layout, all little-endian:
//   "ACEF" | u32 version | u8 dtype | u32 dim | u64 row_count | row_count*dim f32
inline constexpr char kMagic[4] = {'A', 'C', 'E', 'F'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr std::size_t kHeaderBytes = 21;

struct FeatureHeader {
    std::uint32_t version = kVersion;
    std::uint8_t dtype = kDtypeF32;
    std::uint32_t dim = 0;
    std::uint64_t row_count = 0;
};

void write_feature_file(const std::filesystem::path& path, const Matrix& rows);
void write_feature_file(const std::filesystem::path& path, const std::vector<Embedding>& rows);

/// Reads and validates the whole file.
Matrix read_feature_file(const std::filesystem::path& path);

FeatureHeader read_feature_header(const std::filesystem::path& path);

/// Sequential row reader; validates the header and total length on open.
class FeatureReader {
  public:
    explicit FeatureReader(const std::filesystem::path& path);

    const FeatureHeader& header() const noexcept { return header_; }
    std::uint64_t rows_remaining() const noexcept { return header_.row_count - consumed_; }

    /// Next `count` rows as a count x dim matrix.
    Matrix read_rows(std::size_t count);

  private:
    std::filesystem::path path_;
    std::ifstream in_;
    FeatureHeader header_;
    std::uint64_t consumed_ = 0;
};

void write_labels(const std::filesystem::path& path, const std::vector<std::uint32_t>& labels);
std::vector<std::uint32_t> read_labels(const std::filesystem::path& path);

struct DatasetManifest {
    std::vector<std::string> class_names;
    std::uint32_t dim = 0;
    std::uint32_t prompts_per_class = 1;
    std::uint32_t views_per_sample = 1;
    std::uint64_t sample_count = 0;
    std::filesystem::path text_embeddings;
    std::filesystem::path image_views;
    std::optional<std::filesystem::path> labels;
    bool normalized = true;

    std::size_t class_count() const noexcept { return class_names.size(); }
};

/// Parses the JSON manifest; relative file references resolve against the
/// manifest's directory. Does not touch the referenced files.
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Writes file references relative to the manifest's directory when they
/// live underneath it.
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

/// Checks the manifest's invariants against the files it references.
/// A manifest whose label file is named but missing is an IoError.
void validate_manifest(const DatasetManifest& manifest);

}  // namespace ace::io
