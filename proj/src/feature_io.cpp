#include "ace/feature_io.hpp"

#include <array>
#include <bit>
#include <cstring>

#include "json.hpp"

#include "ace/error.hpp"

namespace ace::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
void put_le(std::string& buf, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        buf.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
    }
}

template <typename T>
T get_le(const unsigned char* p) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return static_cast<T>(v);
}

void put_f32(std::string& buf, double value) {
    put_le(buf, std::bit_cast<std::uint32_t>(static_cast<float>(value)));
}

double get_f32(const unsigned char* p) { return std::bit_cast<float>(get_le<std::uint32_t>(p)); }

std::string encode(const Matrix& rows) {
    std::string buf;
    buf.reserve(kHeaderBytes + 4 * rows.data().size());
    buf.append(kMagic, 4);
    put_le<std::uint32_t>(buf, kVersion);
    put_le<std::uint8_t>(buf, kDtypeF32);
    put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(rows.cols()));
    put_le<std::uint64_t>(buf, rows.rows());
    for (double v : rows.data()) put_f32(buf, v);
    return buf;
}

void write_bytes(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

std::ifstream open_input(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    return in;
}

FeatureHeader parse_header(std::istream& in, std::uint64_t file_size, const fs::path& path) {
    std::array<unsigned char, kHeaderBytes> raw{};
    in.read(reinterpret_cast<char*>(raw.data()), kHeaderBytes);
    if (in.gcount() < 4) throw Error(ErrorCode::TruncatedFile, path.string() + ": shorter than magic");
    if (std::memcmp(raw.data(), kMagic, 4) != 0) throw Error(ErrorCode::BadMagic, path.string());
    if (static_cast<std::size_t>(in.gcount()) < kHeaderBytes) {
        throw Error(ErrorCode::TruncatedFile, path.string() + ": incomplete header");
    }
    FeatureHeader h;
    h.version = get_le<std::uint32_t>(raw.data() + 4);
    h.dtype = raw[8];
    h.dim = get_le<std::uint32_t>(raw.data() + 9);
    h.row_count = get_le<std::uint64_t>(raw.data() + 13);
    if (h.version != kVersion) {
        throw Error(ErrorCode::UnsupportedVersion, path.string() + ": version " + std::to_string(h.version));
    }
    if (h.dtype != kDtypeF32) {
        throw Error(ErrorCode::UnsupportedVersion, path.string() + ": dtype " + std::to_string(h.dtype));
    }
    if (h.dim == 0) throw Error(ErrorCode::DimMismatch, path.string() + ": zero dimension");
    const std::uint64_t expected = kHeaderBytes + 4ULL * h.dim * h.row_count;
    if (file_size < expected) {
        throw Error(ErrorCode::TruncatedFile, path.string() + ": " + std::to_string(file_size) + " bytes, expected " +
                                                  std::to_string(expected));
    }
    if (file_size > expected) {
        throw Error(ErrorCode::ShapeMismatch, path.string() + ": " + std::to_string(file_size - expected) +
                                                  " trailing bytes");
    }
    return h;
}

std::uint64_t file_size_of(const fs::path& path) {
    std::error_code ec;
    const auto n = fs::file_size(path, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot stat " + path.string() + ": " + ec.message());
    return n;
}

}  // namespace

void write_feature_file(const fs::path& path, const Matrix& rows) {
    if (rows.cols() == 0) throw Error(ErrorCode::DimMismatch, "cannot write zero-dimensional rows");
    write_bytes(path, encode(rows));
}

void write_feature_file(const fs::path& path, const std::vector<Embedding>& rows) {
    if (rows.empty()) throw Error(ErrorCode::DimMismatch, "dimension of an empty row list is unknown");
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) m.set_row(i, rows[i]);
    write_feature_file(path, m);
}

FeatureHeader read_feature_header(const fs::path& path) {
    auto in = open_input(path);
    return parse_header(in, file_size_of(path), path);
}

Matrix read_feature_file(const fs::path& path) {
    FeatureReader reader(path);
    return reader.read_rows(reader.header().row_count);
}

FeatureReader::FeatureReader(const fs::path& path) : path_(path), in_(open_input(path)) {
    header_ = parse_header(in_, file_size_of(path), path);
}

Matrix FeatureReader::read_rows(std::size_t count) {
    if (count > rows_remaining()) {
        throw Error(ErrorCode::TruncatedFile, path_.string() + ": requested " + std::to_string(count) + " rows, " +
                                                  std::to_string(rows_remaining()) + " remain");
    }
    Matrix m(count, header_.dim);
    std::vector<unsigned char> raw(4 * m.data().size());
    in_.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<std::size_t>(in_.gcount()) != raw.size()) {
        throw Error(ErrorCode::TruncatedFile, path_.string() + ": file shrank while reading");
    }
    for (std::size_t i = 0; i < m.data().size(); ++i) m.data()[i] = get_f32(raw.data() + 4 * i);
    consumed_ += count;
    return m;
}

void write_labels(const fs::path& path, const std::vector<std::uint32_t>& labels) {
    std::string buf;
    buf.reserve(4 * labels.size());
    for (auto l : labels) put_le<std::uint32_t>(buf, l);
    write_bytes(path, buf);
}

std::vector<std::uint32_t> read_labels(const fs::path& path) {
    auto in = open_input(path);
    const auto size = file_size_of(path);
    if (size % 4 != 0) throw Error(ErrorCode::TruncatedFile, path.string() + ": length not a multiple of 4");
    std::vector<unsigned char> raw(size);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(size));
    std::vector<std::uint32_t> labels(size / 4);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = get_le<std::uint32_t>(raw.data() + 4 * i);
    return labels;
}

namespace {

fs::path resolve(const fs::path& base, const std::string& ref) {
    fs::path p(ref);
    return p.is_absolute() ? p : base / p;
}

std::string relativize(const fs::path& base, const fs::path& p) {
    std::error_code ec;
    auto rel = fs::relative(p, base, ec);
    if (!ec && !rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return p.generic_string();
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open manifest " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidManifest, path.string() + ": " + e.what());
    }
    const fs::path base = path.parent_path();
    DatasetManifest m;
    try {
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        m.dim = j.at("dim").get<std::uint32_t>();
        m.prompts_per_class = j.at("prompts_per_class").get<std::uint32_t>();
        m.views_per_sample = j.at("views_per_sample").get<std::uint32_t>();
        m.sample_count = j.at("sample_count").get<std::uint64_t>();
        m.text_embeddings = resolve(base, j.at("text_embeddings").get<std::string>());
        m.image_views = resolve(base, j.at("image_views").get<std::string>());
        if (j.contains("labels") && !j.at("labels").is_null()) {
            m.labels = resolve(base, j.at("labels").get<std::string>());
        }
        m.normalized = j.value("normalized", true);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidManifest, path.string() + ": " + e.what());
    }
    if (m.class_names.size() < 2) throw Error(ErrorCode::InvalidManifest, "need at least 2 classes");
    if (m.dim < 2) throw Error(ErrorCode::InvalidManifest, "dim must be >= 2");
    if (m.views_per_sample < 1) throw Error(ErrorCode::InvalidManifest, "views_per_sample must be >= 1");
    if (m.prompts_per_class < 1) throw Error(ErrorCode::InvalidManifest, "prompts_per_class must be >= 1");
    return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& m) {
    const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    json j;
    j["class_names"] = m.class_names;
    j["dim"] = m.dim;
    j["prompts_per_class"] = m.prompts_per_class;
    j["views_per_sample"] = m.views_per_sample;
    j["sample_count"] = m.sample_count;
    j["text_embeddings"] = relativize(base, m.text_embeddings);
    j["image_views"] = relativize(base, m.image_views);
    j["labels"] = m.labels ? json(relativize(base, *m.labels)) : json(nullptr);
    j["normalized"] = m.normalized;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write manifest " + path.string());
    out << j.dump(2) << '\n';
}

void validate_manifest(const DatasetManifest& m) {
    const auto text = read_feature_header(m.text_embeddings);
    const std::uint64_t classes = m.class_count();
    if (text.dim != m.dim) {
        throw Error(ErrorCode::DimMismatch, m.text_embeddings.string() + ": dim " + std::to_string(text.dim) +
                                                " vs manifest " + std::to_string(m.dim));
    }
    if (text.row_count != classes * m.prompts_per_class) {
        throw Error(ErrorCode::InvalidManifest, m.text_embeddings.string() + ": " + std::to_string(text.row_count) +
                                                    " rows, expected classes*prompts_per_class");
    }
    const auto views = read_feature_header(m.image_views);
    if (views.dim != m.dim) {
        throw Error(ErrorCode::DimMismatch, m.image_views.string() + ": dim " + std::to_string(views.dim) +
                                                " vs manifest " + std::to_string(m.dim));
    }
    if (views.row_count != m.sample_count * m.views_per_sample) {
        throw Error(ErrorCode::InvalidManifest, m.image_views.string() + ": " + std::to_string(views.row_count) +
                                                    " rows, expected sample_count*views_per_sample");
    }
    if (m.labels) {
        if (!fs::exists(*m.labels)) throw Error(ErrorCode::IoError, "missing label file " + m.labels->string());
        const auto n = file_size_of(*m.labels);
        // a zero-length label file means "labels unavailable"
        if (n != 0 && n != 4 * m.sample_count) {
            throw Error(ErrorCode::InvalidManifest, m.labels->string() + ": length does not match sample_count");
        }
    }
}

}  // namespace ace::io
