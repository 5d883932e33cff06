#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "ace/feature_io.hpp"
#include "ace/numerics.hpp"

namespace ace::io {

/// Parameters of the synthetic embedding stream.
///
/// Noise scales are per-vector: a noise term of scale s is s * g / sqrt(d)
/// with g standard normal, so its expected norm is about s regardless of d.
struct SyntheticSpec {
    std::uint32_t classes = 8;
    std::uint32_t dim = 32;
    std::uint32_t samples_per_class = 50;
    std::uint32_t views = 8;
    std::uint32_t prompts_per_class = 4;
    double separation = 0.5;    // multiplies the class center in each sample
    double intra_noise = 1.0;   // per-sample deviation from the shifted center
    double view_noise = 0.3;    // per-view deviation from the sample base (view 0 is clean)
    double prompt_noise = 0.3;  // per-prompt deviation from the class center
    double shift = 0.4;         // norm of the per-class domain-shift vector
    std::uint64_t seed = 7;

    void validate() const;
};

struct SyntheticStream {
    DatasetManifest manifest;  // file references empty until written
    Matrix text;               // (classes * prompts_per_class) x dim, class-major
    Matrix views;              // (samples * views) x dim, sample-major
    std::vector<std::uint32_t> labels;
};

/// Deterministic draw from the spec.
///
/// PRNG: std::mt19937_64 seeded with `seed`. Uniforms take the top 53 bits
/// of one draw; normals use Box-Muller on two uniforms (cosine branch only),
/// so the stream does not depend on the standard library's distributions.
///
/// Draw order: class centers, per-class shift directions, prompts (class
/// major), sample order shuffle (Fisher-Yates), then for each sample in
/// stream order its base noise followed by views 1..V-1.
SyntheticStream generate_synthetic_stream(const SyntheticSpec& spec);

/// Writes text.acef, views.acef, labels.u32 and manifest.json into `dir`.
/// Returns the manifest path.
std::filesystem::path write_synthetic_stream(SyntheticStream& stream, const std::filesystem::path& dir);

/// The portable generator used by the synthetic stream and the test-instance
/// builders.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform();                                 // [0, 1)
    double normal();                                  // N(0, 1)
    std::uint64_t below(std::uint64_t bound);         // [0, bound), unbiased
    std::vector<double> normal_vector(std::size_t n);
    Embedding unit_vector(std::size_t n);

  private:
    std::mt19937_64 engine_;
};

}  // namespace ace::io
