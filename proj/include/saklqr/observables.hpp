#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "saklqr/common.hpp"

namespace saklqr {

inline constexpr int kStateDim = 4;
inline constexpr int kInputDim = 6;
inline constexpr int kJointDim = kStateDim + kInputDim;

enum class DictionaryKind { Raw, Poly2, Poly3, Rbf, Fourier, Combined };

inline const char* to_string(DictionaryKind kind) {
    switch (kind) {
        case DictionaryKind::Raw: return "raw";
        case DictionaryKind::Poly2: return "poly2";
        case DictionaryKind::Poly3: return "poly3";
        case DictionaryKind::Rbf: return "rbf";
        case DictionaryKind::Fourier: return "fourier";
        case DictionaryKind::Combined: return "combined";
    }
    return "unknown";
}

inline DictionaryKind dictionary_kind_from_string(const std::string& s) {
    if (s == "raw") return DictionaryKind::Raw;
    if (s == "poly2") return DictionaryKind::Poly2;
    if (s == "poly3") return DictionaryKind::Poly3;
    if (s == "rbf") return DictionaryKind::Rbf;
    if (s == "fourier") return DictionaryKind::Fourier;
    if (s == "combined") return DictionaryKind::Combined;
    throw std::invalid_argument("unknown dictionary kind: " + s);
}

/// Lifting dictionary Psi(x, u). Entry layout, in declared order:
///   raw x (4), raw u (6)                 when include_raw
///   x^2 (4), u^2 (6), x (x) u (24)       polynomial kinds
///   degree-3 monomials of x (20)         poly3 only
///   exp(-|z - c|^2 / gamma^2) per center rbf kinds, z = (x; u)
///   sin(w.z), cos(w.z) per frequency     fourier only
struct Dictionary {
    DictionaryKind kind = DictionaryKind::Combined;
    bool include_raw = true;
    std::vector<VecX> rbf_centers;          // points in scaled joint (x, u) space
    double rbf_width = 1.0;                 // gamma > 0
    std::vector<VecX> fourier_freqs;        // frequency vectors, scaled joint space
    VecX scale = VecX::Ones(kJointDim);     // per-dimension feature scaling

    /// Identity lifting (x, u) only; the degenerate M = N boundary case
    /// used for exactness oracles on linear systems.
    static Dictionary raw() { return Dictionary{DictionaryKind::Raw, true, {}, 1.0, {}}; }

    static Dictionary poly2() { return Dictionary{DictionaryKind::Poly2, true, {}, 1.0, {}}; }

    static Dictionary poly3() { return Dictionary{DictionaryKind::Poly3, true, {}, 1.0, {}}; }

    static Dictionary rbf(std::vector<VecX> centers, double width) {
        return Dictionary{DictionaryKind::Rbf, true, std::move(centers), width, {}};
    }

    static Dictionary fourier(std::vector<VecX> freqs) {
        return Dictionary{DictionaryKind::Fourier, true, {}, 1.0, std::move(freqs)};
    }

    static Dictionary combined(std::vector<VecX> centers, double width) {
        return Dictionary{DictionaryKind::Combined, true, std::move(centers), width, {}};
    }

    bool has_poly2_blocks() const {
        return kind == DictionaryKind::Poly2 || kind == DictionaryKind::Poly3 ||
               kind == DictionaryKind::Combined;
    }

    bool has_cubic_block() const { return kind == DictionaryKind::Poly3; }

    bool has_rbf_block() const {
        return kind == DictionaryKind::Rbf || kind == DictionaryKind::Combined;
    }

    bool has_fourier_block() const { return kind == DictionaryKind::Fourier; }

    int dimension() const {
        int m = include_raw ? kJointDim : 0;
        if (has_poly2_blocks()) {
            m += kStateDim + kInputDim + kStateDim * kInputDim;
        }
        if (has_cubic_block()) {
            m += static_cast<int>(cubic_triples().size());
        }
        if (has_rbf_block()) {
            m += static_cast<int>(rbf_centers.size());
        }
        if (has_fourier_block()) {
            m += 2 * static_cast<int>(fourier_freqs.size());
        }
        return m;
    }

    int raw_x_offset() const {
        if (!include_raw) {
            throw std::logic_error("dictionary has no raw-state block");
        }
        return 0;
    }

    /// Name of the block an entry index belongs to, for diagnostics.
    std::string block_name(int index) const {
        int off = 0;
        auto within = [&](int len) {
            bool hit = index < off + len;
            off += len;
            return hit;
        };
        if (include_raw) {
            if (within(kStateDim)) return "raw_x";
            if (within(kInputDim)) return "raw_u";
        }
        if (has_poly2_blocks()) {
            if (within(kStateDim)) return "x_sq";
            if (within(kInputDim)) return "u_sq";
            if (within(kStateDim * kInputDim)) return "cross_xu";
        }
        if (has_cubic_block() && within(static_cast<int>(cubic_triples().size()))) {
            return "x_cubic";
        }
        if (has_rbf_block() && within(static_cast<int>(rbf_centers.size()))) {
            return "rbf";
        }
        if (has_fourier_block() && within(2 * static_cast<int>(fourier_freqs.size()))) {
            return "fourier";
        }
        return "out_of_range";
    }

    /// All (i, j, k) with i <= j <= k over the state entries.
    static const std::vector<std::array<int, 3>>& cubic_triples() {
        static const std::vector<std::array<int, 3>> triples = [] {
            std::vector<std::array<int, 3>> t;
            for (int i = 0; i < kStateDim; ++i)
                for (int j = i; j < kStateDim; ++j)
                    for (int k = j; k < kStateDim; ++k)
                        t.push_back({i, j, k});
            return t;
        }();
        return triples;
    }

    /// Recover the raw state from a lifted vector (undoes the feature
    /// scaling on the raw block).
    Eigen::Vector4d raw_state_of(const Eigen::Ref<const VecX>& psi) const {
        const int off = raw_x_offset();
        return psi.segment<kStateDim>(off).cwiseProduct(scale.head<kStateDim>());
    }

    void validate() const {
        if (scale.size() != kJointDim || !(scale.minCoeff() > 0.0)) {
            throw std::invalid_argument("dictionary scale must be positive, length 10");
        }
        if (has_rbf_block()) {
            if (rbf_centers.empty()) {
                throw std::invalid_argument("rbf dictionary requires centers");
            }
            if (!(rbf_width > 0.0)) {
                throw std::invalid_argument("rbf width must be > 0");
            }
            for (const auto& c : rbf_centers) {
                if (c.size() != kJointDim) {
                    throw std::invalid_argument("rbf centers must live in joint (x,u) space");
                }
            }
            for (size_t a = 0; a < rbf_centers.size(); ++a) {
                for (size_t b = a + 1; b < rbf_centers.size(); ++b) {
                    if ((rbf_centers[a] - rbf_centers[b]).norm() == 0.0) {
                        throw std::invalid_argument("rbf centers must be pairwise distinct");
                    }
                }
            }
        }
        if (has_fourier_block() && fourier_freqs.empty()) {
            throw std::invalid_argument("fourier dictionary requires frequencies");
        }
        if (kind != DictionaryKind::Raw && dimension() <= kJointDim) {
            throw std::invalid_argument("dictionary must strictly lift (M > N)");
        }
    }
};

inline VecX lift(const Vec4& x, const Vec6& u, const Dictionary& dict) {
    require_finite(x, "lift: state");
    require_finite(u, "lift: input");

    // All blocks are built from the feature-scaled joint point.
    VecX z(kJointDim);
    z << x, u;
    z = z.cwiseQuotient(dict.scale);
    const auto xs = z.head<kStateDim>();
    const auto us = z.tail<kInputDim>();

    VecX psi(dict.dimension());
    int off = 0;
    if (dict.include_raw) {
        psi.segment<kJointDim>(off) = z;
        off += kJointDim;
    }
    if (dict.has_poly2_blocks()) {
        psi.segment<kStateDim>(off) = xs.array().square();
        off += kStateDim;
        psi.segment<kInputDim>(off) = us.array().square();
        off += kInputDim;
        for (int i = 0; i < kStateDim; ++i) {
            for (int j = 0; j < kInputDim; ++j) {
                psi(off++) = xs(i) * us(j);
            }
        }
    }
    if (dict.has_cubic_block()) {
        for (const auto& t : Dictionary::cubic_triples()) {
            psi(off++) = xs(t[0]) * xs(t[1]) * xs(t[2]);
        }
    }
    if (dict.has_rbf_block()) {
        const double g2 = dict.rbf_width * dict.rbf_width;
        for (const auto& c : dict.rbf_centers) {
            psi(off++) = std::exp(-(z - c).squaredNorm() / g2);
        }
    }
    if (dict.has_fourier_block()) {
        for (const auto& w : dict.fourier_freqs) {
            const double p = w.dot(z);
            psi(off++) = std::sin(p);
            psi(off++) = std::cos(p);
        }
    }
    return psi;
}

/// Analytic Jacobians (dPsi/dx, dPsi/du) at (x, u), chain-ruled through
/// the feature scaling.
inline std::pair<MatX, MatX> jacobians(const Vec4& x, const Vec6& u,
                                       const Dictionary& dict) {
    require_finite(x, "jacobians: state");
    require_finite(u, "jacobians: input");

    VecX z(kJointDim);
    z << x, u;
    z = z.cwiseQuotient(dict.scale);
    const auto xs = z.head<kStateDim>();
    const auto us = z.tail<kInputDim>();

    const int m = dict.dimension();
    // Jacobian with respect to the scaled joint point first.
    MatX dz = MatX::Zero(m, kJointDim);
    int off = 0;
    if (dict.include_raw) {
        dz.block<kJointDim, kJointDim>(off, 0).setIdentity();
        off += kJointDim;
    }
    if (dict.has_poly2_blocks()) {
        for (int i = 0; i < kStateDim; ++i) {
            dz(off + i, i) = 2.0 * xs(i);
        }
        off += kStateDim;
        for (int j = 0; j < kInputDim; ++j) {
            dz(off + j, kStateDim + j) = 2.0 * us(j);
        }
        off += kInputDim;
        for (int i = 0; i < kStateDim; ++i) {
            for (int j = 0; j < kInputDim; ++j) {
                dz(off, i) = us(j);
                dz(off, kStateDim + j) = xs(i);
                ++off;
            }
        }
    }
    if (dict.has_cubic_block()) {
        for (const auto& t : Dictionary::cubic_triples()) {
            for (int a = 0; a < kStateDim; ++a) {
                double grad = 0.0;
                if (t[0] == a) grad += xs(t[1]) * xs(t[2]);
                if (t[1] == a) grad += xs(t[0]) * xs(t[2]);
                if (t[2] == a) grad += xs(t[0]) * xs(t[1]);
                dz(off, a) = grad;
            }
            ++off;
        }
    }
    if (dict.has_rbf_block()) {
        const double g2 = dict.rbf_width * dict.rbf_width;
        for (const auto& c : dict.rbf_centers) {
            const VecX d = z - c;
            const double phi = std::exp(-d.squaredNorm() / g2);
            dz.row(off) = ((-2.0 / g2) * phi * d).transpose();
            ++off;
        }
    }
    if (dict.has_fourier_block()) {
        for (const auto& w : dict.fourier_freqs) {
            const double p = w.dot(z);
            dz.row(off) = std::cos(p) * w.transpose();
            ++off;
            dz.row(off) = -std::sin(p) * w.transpose();
            ++off;
        }
    }

    // Chain rule: d(z_d)/d(x_d) = 1 / scale_d.
    for (int d = 0; d < kJointDim; ++d) {
        dz.col(d) /= dict.scale(d);
    }
    return {dz.leftCols<kStateDim>(), dz.rightCols<kInputDim>()};
}

/// Deterministic Lloyd k-means over joint (x, u) samples. Seeds from
/// evenly strided samples, so the result depends only on the data and k.
inline std::vector<VecX> kmeans_centers(const std::vector<VecX>& samples, int k,
                                        int max_iter = 100) {
    if (k < 1 || samples.size() < static_cast<size_t>(k)) {
        throw std::invalid_argument("kmeans_centers: need at least k samples");
    }
    const int n = static_cast<int>(samples.size());
    std::vector<VecX> centers(k);
    for (int i = 0; i < k; ++i) {
        centers[i] = samples[static_cast<size_t>(i) * n / k];
    }

    std::vector<int> assign(n, -1);
    for (int iter = 0; iter < max_iter; ++iter) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = (samples[i] - centers[0]).squaredNorm();
            for (int c = 1; c < k; ++c) {
                const double d = (samples[i] - centers[c]).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed && iter > 0) {
            break;
        }
        std::vector<VecX> sums(k, VecX::Zero(samples[0].size()));
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            sums[assign[i]] += samples[i];
            counts[assign[i]] += 1;
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                centers[c] = sums[c] / counts[c];
            } else {
                // Reseed an empty cluster at the sample farthest from its center.
                int far_i = 0;
                double far_d = -1.0;
                for (int i = 0; i < n; ++i) {
                    const double d = (samples[i] - centers[assign[i]]).squaredNorm();
                    if (d > far_d) {
                        far_d = d;
                        far_i = i;
                    }
                }
                centers[c] = samples[far_i];
            }
        }
    }
    return centers;
}

/// Median pairwise distance between centers; the standard width heuristic.
inline double median_pairwise_distance(const std::vector<VecX>& centers) {
    std::vector<double> dists;
    for (size_t a = 0; a < centers.size(); ++a) {
        for (size_t b = a + 1; b < centers.size(); ++b) {
            dists.push_back((centers[a] - centers[b]).norm());
        }
    }
    if (dists.empty()) {
        return 1.0;
    }
    std::sort(dists.begin(), dists.end());
    return dists[dists.size() / 2];
}

/// Random frequency vectors for the Fourier dictionary, whitened per
/// dimension against the sample spread so projections stay O(1).
inline std::vector<VecX> build_fourier_freqs(const std::vector<VecX>& samples,
                                             int n_freqs, std::uint64_t seed) {
    if (samples.empty()) {
        throw std::invalid_argument("build_fourier_freqs: empty sample set");
    }
    const int dim = static_cast<int>(samples[0].size());
    VecX mean = VecX::Zero(dim);
    for (const auto& s : samples) {
        mean += s;
    }
    mean /= static_cast<double>(samples.size());
    VecX var = VecX::Zero(dim);
    for (const auto& s : samples) {
        var += (s - mean).array().square().matrix();
    }
    var /= static_cast<double>(samples.size());

    Rng rng(seed);
    std::vector<VecX> freqs(n_freqs);
    for (auto& w : freqs) {
        w.resize(dim);
        for (int d = 0; d < dim; ++d) {
            const double sigma = std::sqrt(var(d));
            const double scale = sigma > 1e-12 ? 1.0 / (2.0 * sigma) : 0.0;
            w(d) = rng.normal() * scale;
        }
    }
    return freqs;
}

}  // namespace saklqr
