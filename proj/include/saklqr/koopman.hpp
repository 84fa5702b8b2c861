#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "saklqr/common.hpp"
#include "saklqr/observables.hpp"

namespace saklqr {

struct TrajectoryRecord {
    Vec4 x;
    Vec6 u;
    double y = 0.0;  // sensor reading, counts
};

/// Ordered (x, u, y) records at uniform dt. Episodes mark continuity
/// breaks; snapshot pairs never straddle an episode boundary.
struct TrajectoryDataset {
    std::vector<TrajectoryRecord> records;
    std::vector<int> episode_starts{0};
    double dt = 0.002;
    bool truncated = false;  // set when excitation produced non-finite states

    int size() const { return static_cast<int>(records.size()); }

    bool is_episode_start(int k) const {
        for (int s : episode_starts) {
            if (s == k) return true;
        }
        return false;
    }

    /// Indices k such that (k, k+1) is a valid snapshot pair.
    std::vector<int> pair_indices() const {
        std::vector<int> idx;
        idx.reserve(records.size());
        for (int k = 0; k + 1 < size(); ++k) {
            if (!is_episode_start(k + 1)) {
                idx.push_back(k);
            }
        }
        return idx;
    }

    TrajectoryDataset subset(const std::vector<int>& pair_idx) const {
        // Each selected pair becomes its own two-record episode, so the
        // subset reproduces exactly the selected snapshot pairs.
        TrajectoryDataset out;
        out.dt = dt;
        out.episode_starts.clear();
        for (int k : pair_idx) {
            out.episode_starts.push_back(static_cast<int>(out.records.size()));
            out.records.push_back(records[k]);
            out.records.push_back(records[k + 1]);
        }
        if (out.episode_starts.empty()) {
            out.episode_starts.push_back(0);
        }
        return out;
    }
};

struct KoopmanModel {
    MatX k_d;                 // M x M, advances lifted states via k_d^T
    Mat4 a = Mat4::Zero();    // extracted state transition
    Mat46 b = Mat46::Zero();  // extracted input matrix
    RowX c;                   // 1 x M output map
    Dictionary dict;
    double svd_tol = 1e-8;
    int region_id = -1;

    // Fit metadata.
    int n_pairs = 0;
    double residual_lifted_rms = 0.0;
    double residual_state_max = 0.0;
    double output_r2 = std::numeric_limits<double>::quiet_NaN();
    Vec4 x_op = Vec4::Zero();
    Vec6 u_op = Vec6::Zero();
    double y_op = 0.0;
};

struct RegionSet {
    std::vector<Vec4> centers;
    std::vector<KoopmanModel> models;
    std::vector<bool> fallback;  // true where the global model was substituted

    int size() const { return static_cast<int>(centers.size()); }
};

struct Metrics {
    double rmse = 0.0;
    double mae = 0.0;
    double max_ae = 0.0;
    std::optional<double> r2;
};

namespace detail {

/// SVD pseudoinverse with a relative singular-value cutoff. Also reports
/// the machine-precision rank (independent of the truncation level) and
/// the right singular vector of the weakest direction.
inline MatX pinv_svd(const MatX& m, double rel_tol, int* machine_rank = nullptr,
                     VecX* weakest_dir = nullptr) {
    Eigen::JacobiSVD<MatX> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VecX& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? rel_tol * sv(0) : 0.0;
    MatX inv_s = MatX::Zero(m.cols(), m.rows());
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff && sv(i) > 0.0) {
            inv_s(i, i) = 1.0 / sv(i);
        }
        if (sv.size() > 0 && sv(i) > 1e-12 * sv(0)) {
            ++rank;
        }
    }
    if (machine_rank) {
        *machine_rank = rank;
    }
    if (weakest_dir && svd.matrixV().cols() > 0) {
        const int col = std::min<int>(rank, svd.matrixV().cols() - 1);
        *weakest_dir = svd.matrixV().col(col);
    }
    return svd.matrixV() * inv_s * svd.matrixU().transpose();
}

}  // namespace detail

/// Core EDMD on already-lifted snapshot columns (M x N each):
/// K = G^+ A with G = psi0 psi0^T / N and A = psi0 psi1^T / N.
inline MatX edmd_operator(const MatX& psi0, const MatX& psi1, double svd_tol = 1e-8) {
    if (psi0.rows() != psi1.rows() || psi0.cols() != psi1.cols() || psi0.cols() < 1) {
        throw std::invalid_argument("edmd_operator: snapshot shape mismatch");
    }
    const double n = static_cast<double>(psi0.cols());
    const MatX g = psi0 * psi0.transpose() / n;
    const MatX a = psi0 * psi1.transpose() / n;
    return detail::pinv_svd(g, svd_tol) * a;
}

/// EDMD fit: K_d = G^+ A with G, A the empirical second-moment averages
/// of the lifted snapshots. Lifted states advance via psi' = K_d^T psi.
inline KoopmanModel fit_edmd(const TrajectoryDataset& data, const Dictionary& dict,
                             double svd_tol = 1e-8) {
    dict.validate();
    const int m = dict.dimension();
    const auto pairs = data.pair_indices();
    const int n = static_cast<int>(pairs.size());
    if (n < m + 1) {
        throw std::invalid_argument("fit_edmd: need at least M+1 snapshot pairs, got " +
                                    std::to_string(n));
    }

    MatX g = MatX::Zero(m, m);
    MatX a_edmd = MatX::Zero(m, m);
    std::vector<VecX> lifted(data.records.size());
    for (size_t k = 0; k < data.records.size(); ++k) {
        lifted[k] = lift(data.records[k].x, data.records[k].u, dict);
    }
    for (int k : pairs) {
        g.noalias() += lifted[k] * lifted[k].transpose();
        a_edmd.noalias() += lifted[k] * lifted[k + 1].transpose();
    }
    g /= static_cast<double>(n);
    a_edmd /= static_cast<double>(n);

    int rank = 0;
    VecX weakest;
    const MatX g_pinv = detail::pinv_svd(g, svd_tol, &rank, &weakest);
    // A usable fit must at least resolve the raw (x, u) block.
    if (rank < std::min(m, kJointDim + 1)) {
        int worst = 0;
        weakest.cwiseAbs().maxCoeff(&worst);
        throw std::runtime_error("fit_edmd: G is rank-deficient (rank " +
                                 std::to_string(rank) + " of " + std::to_string(m) +
                                 "); weakest direction is dominated by block '" +
                                 dict.block_name(worst) + "'");
    }

    KoopmanModel model;
    model.k_d = g_pinv * a_edmd;
    model.dict = dict;
    model.svd_tol = svd_tol;
    model.n_pairs = n;

    // One-step residual bookkeeping on the training pairs.
    double sq_sum = 0.0;
    double state_max = 0.0;
    const MatX advance = model.k_d.transpose();
    for (int k : pairs) {
        const VecX pred = advance * lifted[k];
        sq_sum += (pred - lifted[k + 1]).squaredNorm();
        if (dict.include_raw) {
            const double err =
                (dict.raw_state_of(pred) - dict.raw_state_of(lifted[k + 1])).norm();
            state_max = std::max(state_max, err);
        }
    }
    model.residual_lifted_rms = std::sqrt(sq_sum / n);
    model.residual_state_max = state_max;
    return model;
}

/// Linear model extraction at an operating point (Jacobian of the lifted
/// dynamics projected onto the raw-state block).
inline std::pair<Mat4, Mat46> extract_ab(const KoopmanModel& model, const Vec4& x_op,
                                         const Vec6& u_op) {
    if (!model.dict.include_raw) {
        throw std::invalid_argument(
            "extract_ab: dictionary lacks a raw-state block; projection undefined");
    }
    require_finite(x_op, "extract_ab: x_op");
    require_finite(u_op, "extract_ab: u_op");
    const auto [dpsi_dx, dpsi_du] = jacobians(x_op, u_op, model.dict);
    const int off = model.dict.raw_x_offset();
    // The raw block carries scaled states; undo the scaling row-wise.
    const MatX rows = model.dict.scale.head<kStateDim>().asDiagonal() *
                      model.k_d.transpose().middleRows(off, kStateDim);
    Mat4 a = rows * dpsi_dx;
    Mat46 b = rows * dpsi_du;
    return {a, b};
}

/// Least-squares output map y ~ c * psi(x, u), fitted over all records.
inline RowX fit_output_map(const TrajectoryDataset& data, KoopmanModel& model) {
    const int m = model.dict.dimension();
    const int n = data.size();
    if (n < m) {
        throw std::invalid_argument("fit_output_map: too few records");
    }
    double y_mean = 0.0;
    for (const auto& r : data.records) {
        y_mean += r.y;
    }
    y_mean /= n;
    double y_var = 0.0;
    for (const auto& r : data.records) {
        y_var += (r.y - y_mean) * (r.y - y_mean);
    }
    if (y_var == 0.0) {
        throw std::runtime_error("fit_output_map: outputs are degenerate (all equal)");
    }

    MatX g = MatX::Zero(m, m);
    VecX rhs = VecX::Zero(m);
    std::vector<VecX> lifted(data.records.size());
    for (int k = 0; k < n; ++k) {
        lifted[k] = lift(data.records[k].x, data.records[k].u, model.dict);
        g.noalias() += lifted[k] * lifted[k].transpose();
        rhs.noalias() += data.records[k].y * lifted[k];
    }
    g /= static_cast<double>(n);
    rhs /= static_cast<double>(n);

    const MatX g_pinv = detail::pinv_svd(g, model.svd_tol);
    const VecX c_col = g_pinv * rhs;
    model.c = c_col.transpose();

    double ss_res = 0.0;
    for (int k = 0; k < n; ++k) {
        const double e = data.records[k].y - model.c.dot(lifted[k]);
        ss_res += e * e;
    }
    model.output_r2 = 1.0 - ss_res / y_var;
    return model.c;
}

struct Prediction {
    MatX states;    // (steps+1) x 4, row 0 is the initial state
    VecX outputs;   // steps entries, c * psi(x_k, u_k); empty if c unset
    bool diverged = false;
    int steps = 0;
};

/// Multi-step prediction. The lifted image is projected back to the raw
/// state and re-lifted each step, so the iteration stays consistent with
/// the state-space trajectory.
inline Prediction predict(const KoopmanModel& model, const Vec4& x0,
                          const std::vector<Vec6>& u_sequence, int horizon,
                          double divergence_guard = 1e6) {
    if (horizon < 1) {
        throw std::invalid_argument("predict: horizon must be >= 1");
    }
    if (static_cast<int>(u_sequence.size()) < horizon) {
        throw std::invalid_argument("predict: input sequence shorter than horizon");
    }
    model.dict.raw_x_offset();  // throws when the projection is undefined
    const MatX advance = model.k_d.transpose();
    const bool has_output = model.c.size() == model.dict.dimension();

    Prediction out;
    out.states.resize(horizon + 1, kStateDim);
    out.outputs = VecX::Zero(has_output ? horizon : 0);
    out.states.row(0) = x0.transpose();

    Vec4 x = x0;
    for (int k = 0; k < horizon; ++k) {
        const VecX psi = lift(x, u_sequence[k], model.dict);
        if (has_output) {
            out.outputs(k) = model.c.dot(psi);
        }
        const VecX next = advance * psi;
        x = model.dict.raw_state_of(next);
        out.states.row(k + 1) = x.transpose();
        out.steps = k + 1;
        if (!x.allFinite() || x.norm() > divergence_guard) {
            out.diverged = true;
            out.states.conservativeResize(k + 2, kStateDim);
            if (has_output) {
                out.outputs.conservativeResize(k + 1);
            }
            break;
        }
    }
    return out;
}

inline int nearest_center(const Vec4& x, const std::vector<Vec4>& centers) {
    if (centers.empty()) {
        throw std::invalid_argument("nearest_center: empty center set");
    }
    int best = 0;
    double best_d = (x - centers[0]).norm();
    for (int i = 1; i < static_cast<int>(centers.size()); ++i) {
        const double d = (x - centers[i]).norm();
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    return best;
}

/// Arc-length-uniform centers along a state-space polyline.
inline std::vector<Vec4> path_region_centers(const std::vector<Vec4>& path,
                                             int n_regions) {
    if (path.size() < 2 || n_regions < 1) {
        throw std::invalid_argument("path_region_centers: need a path and n_regions >= 1");
    }
    std::vector<double> cumlen(path.size(), 0.0);
    for (size_t i = 1; i < path.size(); ++i) {
        cumlen[i] = cumlen[i - 1] + (path[i] - path[i - 1]).norm();
    }
    const double total = cumlen.back();
    std::vector<Vec4> centers(n_regions);
    for (int r = 0; r < n_regions; ++r) {
        const double s = total * (r + 0.5) / n_regions;
        size_t seg = 1;
        while (seg + 1 < path.size() && cumlen[seg] < s) {
            ++seg;
        }
        const double seg_len = cumlen[seg] - cumlen[seg - 1];
        const double alpha = seg_len > 0.0 ? (s - cumlen[seg - 1]) / seg_len : 0.0;
        centers[r] = path[seg - 1] + alpha * (path[seg] - path[seg - 1]);
    }
    return centers;
}

/// Region segmentation: Voronoi assignment of snapshot pairs to
/// path-derived centers, one EDMD model per region. Sparse regions fall
/// back to the global model (flagged).
inline RegionSet segment_regions(const std::vector<Vec4>& path, int n_regions,
                                 const TrajectoryDataset& data, const Dictionary& dict,
                                 double svd_tol = 1e-8) {
    RegionSet set;
    set.centers = path_region_centers(path, n_regions);

    const auto pairs = data.pair_indices();
    std::vector<std::vector<int>> region_pairs(n_regions);
    for (int k : pairs) {
        region_pairs[nearest_center(data.records[k].x, set.centers)].push_back(k);
    }
    int occupied = 0;
    for (const auto& rp : region_pairs) {
        if (!rp.empty()) {
            ++occupied;
        }
    }
    if (occupied < n_regions) {
        throw std::runtime_error("segment_regions: requested " + std::to_string(n_regions) +
                                 " regions but data occupies only " +
                                 std::to_string(occupied));
    }

    KoopmanModel global = fit_edmd(data, dict, svd_tol);
    fit_output_map(data, global);

    const int m = dict.dimension();
    set.models.resize(n_regions);
    set.fallback.resize(n_regions, false);
    for (int r = 0; r < n_regions; ++r) {
        KoopmanModel model;
        if (static_cast<int>(region_pairs[r].size()) >= m + 1) {
            const TrajectoryDataset local = data.subset(region_pairs[r]);
            try {
                model = fit_edmd(local, dict, svd_tol);
                fit_output_map(local, model);
            } catch (const std::exception&) {
                model = global;
                set.fallback[r] = true;
            }
        } else {
            model = global;
            set.fallback[r] = true;
        }
        model.region_id = r;
        model.x_op = set.centers[r];
        model.u_op = Vec6::Zero();
        std::tie(model.a, model.b) = extract_ab(model, model.x_op, model.u_op);
        model.y_op = model.c.size() > 0
                         ? model.c.dot(lift(model.x_op, model.u_op, model.dict))
                         : 0.0;
        set.models[r] = std::move(model);
    }
    return set;
}

/// Standard error metrics; R^2 is undefined (nullopt) for zero-variance
/// actual sequences.
inline Metrics eval_metrics(const VecX& predicted, const VecX& actual) {
    if (predicted.size() != actual.size() || predicted.size() < 2) {
        throw std::invalid_argument("eval_metrics: need equal lengths >= 2");
    }
    const int n = static_cast<int>(actual.size());
    Metrics out;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double e = predicted(i) - actual(i);
        sq += e * e;
        out.mae += std::abs(e);
        out.max_ae = std::max(out.max_ae, std::abs(e));
    }
    out.rmse = std::sqrt(sq / n);
    out.mae /= n;

    const double mean = actual.mean();
    double ss_tot = 0.0;
    for (int i = 0; i < n; ++i) {
        ss_tot += (actual(i) - mean) * (actual(i) - mean);
    }
    if (ss_tot > 0.0) {
        out.r2 = 1.0 - sq / ss_tot;
    }
    return out;
}

}  // namespace saklqr
