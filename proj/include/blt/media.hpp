#pragma once

// Optical tissue parameters and the derived diffusion / absorption fields.
// The stationary model uses D = 1/(3(mu_a + mu_s')) and the reaction
// coefficient mu = mu_a.

#include "blt/common.hpp"
#include "blt/mesh.hpp"

#include <map>

namespace blt {

struct Tissue {
    double mu_a = 0.0;        // absorption coefficient
    double mu_s_prime = 0.0;  // reduced scattering coefficient
};

inline double diffusion_coeff(const Tissue& t) {
    if (t.mu_a < 0.0) throw domain_error("diffusion_coeff: mu_a must be >= 0");
    if (!(t.mu_s_prime > 0.0)) throw domain_error("diffusion_coeff: mu_s' must be > 0");
    const double s = t.mu_a + t.mu_s_prime;
    if (!(s > 0.0)) throw domain_error("diffusion_coeff: mu_a + mu_s' must be > 0");
    return 1.0 / (3.0 * s);
}

// Built-in tissue presets (lung, muscle, heart).
inline const std::map<std::string, Tissue>& tissue_presets() {
    static const std::map<std::string, Tissue> table = {
        {"lung", {0.023, 2.0}},
        {"muscle", {0.007, 1.031}},
        {"heart", {0.011, 1.096}},
    };
    return table;
}

inline Tissue tissue_preset(const std::string& name) {
    auto it = tissue_presets().find(name);
    if (it == tissue_presets().end()) throw validation_error("unknown tissue preset '" + name + "'");
    return it->second;
}

// Piecewise tissue assignment: the first ball region containing a point wins,
// otherwise the background applies. Optionally tissues can be keyed to mesh
// region tags, which takes precedence during assembly.
template <int N>
struct MediaRegion {
    Vec<N> center = Vec<N>::Zero();
    double radius = 0.0;
    Tissue tissue;
};

template <int N>
struct MediaMap {
    std::vector<MediaRegion<N>> regions;
    Tissue background;
    std::map<int, Tissue> tag_tissues;  // optional per-region-tag override
    double domain_radius = 0.0;         // > 0 enables the out-of-domain check
};

template <int N>
Tissue tissue_at(const MediaMap<N>& m, const Vec<N>& p) {
    if (m.domain_radius > 0.0 && p.norm() > m.domain_radius * (1.0 + tol_geom_rel))
        throw domain_error("eval_media: point outside the domain");
    for (const auto& r : m.regions)
        if ((p - r.center).norm() <= r.radius) return r.tissue;
    return m.background;
}

// (D, mu) at a point; mu is identified with mu_a.
template <int N>
std::pair<double, double> eval_media(const MediaMap<N>& m, const Vec<N>& p) {
    Tissue t = tissue_at(m, p);
    return {diffusion_coeff(t), t.mu_a};
}

// (D, mu) for one element: by region tag when mapped, else at the centroid.
template <int N>
std::pair<double, double> eval_media_element(const MediaMap<N>& m, const Mesh<N>& mesh, int ei) {
    if (!m.tag_tissues.empty()) {
        auto it = m.tag_tissues.find(mesh.element_region_tag[ei]);
        if (it != m.tag_tissues.end()) return {diffusion_coeff(it->second), it->second.mu_a};
    }
    return eval_media(m, element_centroid(mesh, ei));
}

}  // namespace blt
