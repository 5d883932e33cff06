#include "ace/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ace/error.hpp"

namespace ace::io {

namespace fs = std::filesystem;

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t bound) {
    if (bound == 0) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % bound;
}

std::vector<double> Rng::normal_vector(std::size_t n) {
    std::vector<double> v(n);
    for (double& x : v) x = normal();
    return v;
}

Embedding Rng::unit_vector(std::size_t n) {
    for (;;) {
        auto v = normal_vector(n);
        if (l2_norm(v) > 1e-6) return l2_normalize(v);
    }
}

void SyntheticSpec::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::InvalidSpec, what); };
    if (classes < 2) fail("classes must be >= 2");
    if (dim < 2) fail("dim must be >= 2");
    if (views < 1) fail("views must be >= 1");
    if (prompts_per_class < 1) fail("prompts_per_class must be >= 1");
    for (double s : {separation, intra_noise, view_noise, prompt_noise, shift}) {
        if (!(s >= 0.0) || !std::isfinite(s)) fail("scales must be finite and non-negative");
    }
    if (separation == 0.0 && shift == 0.0) fail("separation and shift cannot both be zero");
}

namespace {

// base + scale * g / sqrt(d), normalized
Embedding perturb(Rng& rng, std::span<const double> base, double scale) {
    const double k = scale / std::sqrt(static_cast<double>(base.size()));
    Embedding out(base.begin(), base.end());
    for (double& x : out) x += k * rng.normal();
    return l2_normalize(out);
}

}  // namespace

SyntheticStream generate_synthetic_stream(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t C = spec.classes;
    const std::size_t d = spec.dim;
    const std::size_t S = spec.prompts_per_class;
    const std::size_t V = spec.views;
    const std::size_t n = C * spec.samples_per_class;

    Rng rng(spec.seed);
    std::vector<Embedding> centers(C);
    for (auto& c : centers) c = rng.unit_vector(d);
    std::vector<Embedding> shifts(C);
    for (auto& s : shifts) s = rng.unit_vector(d);

    SyntheticStream out;
    out.text = Matrix(C * S, d);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t s = 0; s < S; ++s) out.text.set_row(c * S + s, perturb(rng, centers[c], spec.prompt_noise));
    }

    out.labels.reserve(n);
    for (std::uint32_t c = 0; c < C; ++c) out.labels.insert(out.labels.end(), spec.samples_per_class, c);
    for (std::size_t i = n; i > 1; --i) std::swap(out.labels[i - 1], out.labels[rng.below(i)]);

    out.views = Matrix(n * V, d);
    Embedding shifted(d);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = out.labels[i];
        for (std::size_t k = 0; k < d; ++k) shifted[k] = spec.separation * centers[c][k] + spec.shift * shifts[c][k];
        const Embedding base = perturb(rng, shifted, spec.intra_noise);
        out.views.set_row(i * V, base);
        for (std::size_t v = 1; v < V; ++v) out.views.set_row(i * V + v, perturb(rng, base, spec.view_noise));
    }

    auto& m = out.manifest;
    for (std::size_t c = 0; c < C; ++c) m.class_names.push_back("class_" + std::to_string(c));
    m.dim = spec.dim;
    m.prompts_per_class = spec.prompts_per_class;
    m.views_per_sample = spec.views;
    m.sample_count = n;
    m.normalized = true;
    return out;
}

fs::path write_synthetic_stream(SyntheticStream& stream, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
    auto& m = stream.manifest;
    m.text_embeddings = dir / "text.acef";
    m.image_views = dir / "views.acef";
    m.labels = dir / "labels.u32";
    write_feature_file(m.text_embeddings, stream.text);
    write_feature_file(m.image_views, stream.views);
    write_labels(*m.labels, stream.labels);
    const auto manifest_path = dir / "manifest.json";
    save_manifest(manifest_path, m);
    return manifest_path;
}

}  // namespace ace::io
