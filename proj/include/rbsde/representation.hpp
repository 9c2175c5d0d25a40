#pragma once

#include "rbsde/lattice.hpp"

#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace rbsde {

/// One-step martingale representation at a node:
///   increment_b = z ΔW_b + Σ_u ψ(u) Δπ̃_b(u) + residual_b
/// with the residual orthogonal to 1, ΔW and every Δπ̃(u) under the branch measure.
struct NodeRepresentation {
    double z = 0.0;
    std::vector<double> psi;       ///< one entry per mark
    std::vector<double> residual;  ///< one entry per branch
};

/// Branch data of a single node, detached from any lattice.
struct BranchSet {
    std::span<const double> prob;
    std::span<const double> dw;
    std::span<const int> mark;  ///< kNoJump or a mark index
    std::span<const double> intensity;
    std::span<const std::string> mark_labels;  ///< optional, used in error messages
    double dt = 0.0;
};

namespace detail {

inline double regressor(const BranchSet& br, std::size_t r, std::size_t b,
                        std::span<const std::size_t> active) {
    if (r == 0) return br.dw[b];
    const std::size_t u = active[r - 1];
    const double hit = br.mark[b] == static_cast<int>(u) ? 1.0 : 0.0;
    return hit - br.intensity[u] * br.dt;
}

inline std::string regressor_name(const BranchSet& br, std::size_t r,
                                  std::span<const std::size_t> active) {
    if (r == 0) return "brownian increment";
    const std::size_t u = active[r - 1];
    if (u < br.mark_labels.size()) return "compensated jump of mark '" + br.mark_labels[u] + "'";
    return "compensated jump of mark #" + std::to_string(u);
}

/// In-place Cholesky of a small symmetric positive definite matrix (row-major).
/// Returns the index of the first pivot that collapses, or -1.
inline int cholesky(std::vector<double>& a, std::size_t n) {
    for (std::size_t j = 0; j < n; ++j) {
        const double diag0 = a[j * n + j];
        double d = diag0;
        for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
        if (!(diag0 > 0.0) || !(d > 1e-12 * diag0)) return static_cast<int>(j);
        const double l = std::sqrt(d);
        a[j * n + j] = l;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
            a[i * n + j] = s / l;
        }
    }
    return -1;
}

inline std::vector<double> cholesky_solve(const std::vector<double>& l, std::size_t n,
                                          std::vector<double> rhs) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < i; ++k) rhs[i] -= l[i * n + k] * rhs[k];
        rhs[i] /= l[i * n + i];
    }
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t k = i + 1; k < n; ++k) rhs[i] -= l[k * n + i] * rhs[k];
        rhs[i] /= l[i * n + i];
    }
    return rhs;
}

}  // namespace detail

inline constexpr double kCenteringTolerance = 1e-10;

/// L²-orthogonal projection of a centered increment onto span{ΔW, Δπ̃(u)}.
/// Marks with zero intensity never fire; their regressor vanishes and ψ(u) = 0.
inline NodeRepresentation represent(const BranchSet& br, std::span<const double> increment) {
    const std::size_t nb = br.prob.size();
    if (increment.size() != nb || br.dw.size() != nb || br.mark.size() != nb)
        throw Error(ErrorCode::MissingBranchValue, "increment size does not match branch count");

    double mean = 0.0;
    for (std::size_t b = 0; b < nb; ++b) mean += br.prob[b] * increment[b];
    if (std::abs(mean) > kCenteringTolerance)
        throw Error(ErrorCode::NotCentered, "E[increment] = " + std::to_string(mean));

    std::vector<std::size_t> active;
    for (std::size_t u = 0; u < br.intensity.size(); ++u)
        if (br.intensity[u] > 0.0) active.push_back(u);
    const std::size_t dim = 1 + active.size();

    std::vector<double> gram(dim * dim, 0.0), rhs(dim, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double ri = detail::regressor(br, i, b, active);
            rhs[i] += br.prob[b] * ri * increment[b];
            for (std::size_t j = 0; j <= i; ++j)
                gram[i * dim + j] += br.prob[b] * ri * detail::regressor(br, j, b, active);
        }
    }
    for (std::size_t i = 0; i < dim; ++i)
        for (std::size_t j = i + 1; j < dim; ++j) gram[i * dim + j] = gram[j * dim + i];

    auto factor = gram;
    if (const int bad = detail::cholesky(factor, dim); bad >= 0)
        throw Error(ErrorCode::SingularGram,
                    detail::regressor_name(br, static_cast<std::size_t>(bad), active) +
                        " is linearly dependent on the preceding regressors");

    auto coef = detail::cholesky_solve(factor, dim, rhs);
    // one step of iterative refinement
    std::vector<double> r(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        r[i] = rhs[i];
        for (std::size_t j = 0; j < dim; ++j) r[i] -= gram[i * dim + j] * coef[j];
    }
    const auto delta = detail::cholesky_solve(factor, dim, r);
    for (std::size_t i = 0; i < dim; ++i) coef[i] += delta[i];

    NodeRepresentation out;
    out.z = coef[0];
    out.psi.assign(br.intensity.size(), 0.0);
    for (std::size_t a = 0; a < active.size(); ++a) out.psi[active[a]] = coef[a + 1];
    out.residual.resize(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        double fitted = 0.0;
        for (std::size_t i = 0; i < dim; ++i) fitted += coef[i] * detail::regressor(br, i, b, active);
        out.residual[b] = increment[b] - fitted;
    }
    return out;
}

/// Branch data of a lattice node. The returned object owns its storage.
class NodeBranches {
public:
    NodeBranches(const Lattice& lat, NodeId n) {
        const auto kids = lat.children(n);
        prob_.reserve(kids.size());
        for (const auto& c : kids) {
            prob_.push_back(c.prob);
            dw_.push_back(c.dw);
            mark_.push_back(c.mark);
        }
        for (const auto& m : lat.marks().marks()) {
            intensity_.push_back(m.intensity);
            labels_.push_back(m.label);
        }
        dt_ = lat.dt(lat.step(n));
    }

    BranchSet view() const { return {prob_, dw_, mark_, intensity_, labels_, dt_}; }

private:
    std::vector<double> prob_, dw_, intensity_;
    std::vector<int> mark_;
    std::vector<std::string> labels_;
    double dt_ = 0.0;
};

inline NodeRepresentation represent(const Lattice& lat, NodeId n, std::span<const double> increment) {
    if (lat.is_leaf(n)) throw Error(ErrorCode::MissingBranchValue, "leaf nodes have no branches");
    const NodeBranches branches(lat, n);
    return represent(branches.view(), increment);
}

/// Largest of |E[ΔM]|, |E[ΔM ΔW]| and |E[ΔM Δπ̃(u)]| at a node.
inline double orthogonality_defect(const Lattice& lat, NodeId n, std::span<const double> residual) {
    const auto kids = lat.children(n);
    double e0 = 0.0, ew = 0.0;
    std::vector<double> ej(lat.mark_count(), 0.0);
    for (std::size_t b = 0; b < kids.size(); ++b) {
        e0 += kids[b].prob * residual[b];
        ew += kids[b].prob * residual[b] * kids[b].dw;
        for (std::size_t u = 0; u < lat.mark_count(); ++u)
            ej[u] += kids[b].prob * residual[b] * lat.compensated_jump_increment(n, b, u);
    }
    double worst = std::max(std::abs(e0), std::abs(ew));
    for (double e : ej) worst = std::max(worst, std::abs(e));
    return worst;
}

}  // namespace rbsde
