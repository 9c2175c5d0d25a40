#pragma once

#include "rbsde/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rbsde {

/// Opaque handle of a lattice node. Nodes are numbered level by level, so the
/// root is 0 and every level occupies a contiguous id range.
enum class NodeId : std::uint32_t {};

constexpr std::size_t index(NodeId node) noexcept { return static_cast<std::size_t>(node); }
constexpr NodeId node_id(std::size_t i) noexcept { return static_cast<NodeId>(i); }

inline constexpr int kNoJump = -1;

struct Mark {
    std::string label;
    double size = 0.0;       ///< real-valued coordinate used by state-dependent obstacles
    double intensity = 0.0;  ///< jump rate per unit time
};

/// Finite jump-mark space with its intensity measure.
class MarkSpace {
public:
    MarkSpace() = default;

    explicit MarkSpace(std::vector<Mark> marks) : marks_(std::move(marks)) {
        for (std::size_t i = 0; i < marks_.size(); ++i) {
            const auto& m = marks_[i];
            if (!std::isfinite(m.intensity) || m.intensity < 0.0)
                throw Error(ErrorCode::InvalidSpec,
                            "mark '" + m.label + "' has negative or non-finite intensity");
            if (!std::isfinite(m.size))
                throw Error(ErrorCode::InvalidSpec, "mark '" + m.label + "' has non-finite size");
            for (std::size_t j = 0; j < i; ++j)
                if (marks_[j].label == m.label)
                    throw Error(ErrorCode::InvalidSpec, "duplicate mark label '" + m.label + "'");
        }
    }

    std::size_t size() const noexcept { return marks_.size(); }
    bool empty() const noexcept { return marks_.empty(); }
    const Mark& operator[](std::size_t i) const { return marks_[i]; }
    std::span<const Mark> marks() const noexcept { return marks_; }

    double intensity(std::size_t i) const { return marks_.at(i).intensity; }

    double total_intensity() const noexcept {
        double s = 0.0;
        for (const auto& m : marks_) s += m.intensity;
        return s;
    }

    std::optional<std::size_t> find(std::string_view label) const {
        for (std::size_t i = 0; i < marks_.size(); ++i)
            if (marks_[i].label == label) return i;
        return std::nullopt;
    }

    std::size_t index_of(std::string_view label) const {
        if (auto i = find(label)) return *i;
        throw Error(ErrorCode::UnknownMark, "no mark labelled '" + std::string(label) + "'");
    }

private:
    std::vector<Mark> marks_;
};

enum class BrownianScheme {
    binary,     ///< ±sqrt(dt), probability 1/2 each
    trinomial,  ///< ±sqrt(3 dt) with 1/6 each, 0 with 2/3
};

struct LatticeSpec {
    std::size_t steps = 1;
    double horizon = 1.0;
    BrownianScheme brownian = BrownianScheme::binary;
    MarkSpace marks;
    /// Optional explicit grid t_0 = 0 < ... < t_N = horizon. Uniform when empty.
    std::vector<double> times;
    std::size_t max_nodes = 5'000'000;
};

/// One tree node. The branch that leads into the node (probability, Brownian
/// increment, jump mark) is stored on the child.
struct Node {
    std::size_t step = 0;
    NodeId parent{};
    std::uint32_t first_child = 0;
    std::uint32_t child_count = 0;
    double prob = 1.0;       ///< conditional probability of the incoming branch
    double dw = 0.0;         ///< Brownian increment of the incoming branch
    int mark = kNoJump;      ///< jump mark of the incoming branch
    double path_prob = 1.0;  ///< unconditional probability of reaching the node
    double brownian = 0.0;   ///< W at the node
    double jump_sum = 0.0;   ///< sum of mark sizes along the path
};

/// Largest moment-condition defects found over all internal nodes.
struct LatticeDefects {
    double probability_sum = 0.0;
    double brownian_mean = 0.0;
    double brownian_variance = 0.0;
    double compensator = 0.0;
    double cross_covariation = 0.0;

    double worst() const noexcept {
        return std::max({probability_sum, brownian_mean, brownian_variance, compensator,
                         cross_covariation});
    }
};

/// Finite non-recombining scenario tree with Brownian and Poisson-mark branches.
/// Immutable after construction.
class Lattice {
public:
    static constexpr double kBuildTolerance = 1e-12;

    explicit Lattice(const LatticeSpec& spec) : marks_(spec.marks) {
        if (spec.steps == 0) throw Error(ErrorCode::InvalidSpec, "number of steps must be positive");
        if (spec.times.empty()) {
            if (!(spec.horizon > 0.0) || !std::isfinite(spec.horizon))
                throw Error(ErrorCode::InvalidSpec, "horizon must be positive and finite");
            times_.resize(spec.steps + 1);
            for (std::size_t k = 0; k <= spec.steps; ++k)
                times_[k] = spec.horizon * static_cast<double>(k) / static_cast<double>(spec.steps);
            times_.back() = spec.horizon;
        } else {
            if (spec.times.size() != spec.steps + 1)
                throw Error(ErrorCode::InvalidSpec, "explicit grid must have steps + 1 points");
            if (spec.times.front() != 0.0)
                throw Error(ErrorCode::InvalidSpec, "explicit grid must start at 0");
            times_ = spec.times;
        }
        for (std::size_t k = 0; k + 1 < times_.size(); ++k)
            if (!(times_[k + 1] - times_[k] > 0.0))
                throw Error(ErrorCode::InvalidSpec, "grid steps must be positive");

        const double lambda = marks_.total_intensity();
        for (std::size_t k = 0; k + 1 < times_.size(); ++k)
            if (!(lambda * dt(k) < 1.0))
                throw Error(ErrorCode::InvalidSpec,
                            "total jump probability per step must stay below 1");

        build_tree(spec);
        const auto defects = check_invariants();
        if (defects.worst() > kBuildTolerance)
            throw Error(ErrorCode::InvalidSpec, "lattice moment conditions violated");
    }

    std::size_t steps() const noexcept { return times_.size() - 1; }
    double horizon() const noexcept { return times_.back(); }
    std::span<const double> times() const noexcept { return times_; }
    double time_at(std::size_t k) const { return times_.at(k); }
    double dt(std::size_t k) const { return times_.at(k + 1) - times_.at(k); }
    double max_dt() const noexcept {
        double m = 0.0;
        for (std::size_t k = 0; k < steps(); ++k) m = std::max(m, dt(k));
        return m;
    }

    const MarkSpace& marks() const noexcept { return marks_; }
    std::size_t mark_count() const noexcept { return marks_.size(); }

    std::size_t size() const noexcept { return nodes_.size(); }
    NodeId root() const noexcept { return NodeId{0}; }
    const Node& node(NodeId n) const { return nodes_.at(index(n)); }
    std::size_t step(NodeId n) const { return node(n).step; }
    double time(NodeId n) const { return times_[step(n)]; }
    bool is_leaf(NodeId n) const { return node(n).child_count == 0; }
    NodeId parent(NodeId n) const { return node(n).parent; }
    double path_probability(NodeId n) const { return node(n).path_prob; }

    std::size_t branch_count(NodeId n) const { return node(n).child_count; }
    NodeId child(NodeId n, std::size_t b) const {
        return node_id(node(n).first_child + b);
    }
    /// Children of `n` in branch order.
    std::span<const Node> children(NodeId n) const {
        const auto& nd = node(n);
        return {nodes_.data() + nd.first_child, nd.child_count};
    }

    /// Ids of all nodes at grid index k, as a contiguous range [first, last).
    std::pair<std::size_t, std::size_t> level(std::size_t k) const {
        return {level_begin_.at(k), level_begin_.at(k + 1)};
    }
    std::pair<std::size_t, std::size_t> leaves() const { return level(steps()); }

    /// Root-to-node path, root first.
    std::vector<NodeId> path_to(NodeId n) const {
        std::vector<NodeId> path(step(n) + 1);
        for (std::size_t i = path.size(); i-- > 0;) {
            path[i] = n;
            n = parent(n);
        }
        return path;
    }

    /// Exact E[ . | F_t] at `n` for values given per child branch.
    double cond_expect(NodeId n, std::span<const double> values) const {
        const auto kids = children(n);
        if (values.size() != kids.size())
            throw Error(ErrorCode::MissingBranchValue,
                        "node " + std::to_string(index(n)) + " has " +
                            std::to_string(kids.size()) + " branches, got " +
                            std::to_string(values.size()) + " values");
        double s = 0.0;
        for (std::size_t b = 0; b < kids.size(); ++b) s += kids[b].prob * values[b];
        return s;
    }

    /// 1{branch carries mark u} - mu(u) dt, the compensated Poisson increment.
    double compensated_jump_increment(NodeId n, std::size_t branch, std::size_t mark) const {
        if (mark >= marks_.size())
            throw Error(ErrorCode::UnknownMark, "mark index " + std::to_string(mark) + " out of range");
        const auto kids = children(n);
        if (branch >= kids.size())
            throw Error(ErrorCode::MissingBranchValue, "branch index out of range");
        const double hit = kids[branch].mark == static_cast<int>(mark) ? 1.0 : 0.0;
        return hit - marks_[mark].intensity * dt(step(n));
    }

    double compensated_jump_increment(NodeId n, std::size_t branch, std::string_view label) const {
        return compensated_jump_increment(n, branch, marks_.index_of(label));
    }

    /// Largest defects of the per-node moment conditions.
    LatticeDefects check_invariants() const {
        LatticeDefects d;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const NodeId n = node_id(i);
            if (is_leaf(n)) continue;
            const double h = dt(step(n));
            double ps = 0.0, mean = 0.0, qv = 0.0;
            for (const auto& c : children(n)) {
                ps += c.prob;
                mean += c.prob * c.dw;
                qv += c.prob * c.dw * c.dw;
            }
            d.probability_sum = std::max(d.probability_sum, std::abs(ps - 1.0));
            d.brownian_mean = std::max(d.brownian_mean, std::abs(mean));
            d.brownian_variance = std::max(d.brownian_variance, std::abs(qv - h));
            for (std::size_t u = 0; u < marks_.size(); ++u) {
                double jump = 0.0, cross = 0.0;
                for (const auto& c : children(n)) {
                    const double hit = c.mark == static_cast<int>(u) ? 1.0 : 0.0;
                    jump += c.prob * hit;
                    cross += c.prob * c.dw * (hit - marks_[u].intensity * h);
                }
                d.compensator = std::max(d.compensator, std::abs(jump - marks_[u].intensity * h));
                d.cross_covariation = std::max(d.cross_covariation, std::abs(cross));
            }
        }
        return d;
    }

private:
    struct BranchTemplate {
        double prob;
        double dw;
        int mark;
    };

    std::vector<BranchTemplate> branch_template(std::size_t k, BrownianScheme scheme) const {
        const double h = dt(k);
        std::vector<std::pair<double, double>> brownian;  // (prob, dw)
        if (scheme == BrownianScheme::binary) {
            const double s = std::sqrt(h);
            brownian = {{0.5, s}, {0.5, -s}};
        } else {
            const double s = std::sqrt(3.0 * h);
            brownian = {{1.0 / 6.0, s}, {2.0 / 3.0, 0.0}, {1.0 / 6.0, -s}};
        }
        std::vector<BranchTemplate> out;
        const double no_jump = 1.0 - marks_.total_intensity() * h;
        for (const auto& [p, w] : brownian) out.push_back({p * no_jump, w, kNoJump});
        for (std::size_t u = 0; u < marks_.size(); ++u) {
            const double pj = marks_[u].intensity * h;
            if (pj <= 0.0) continue;  // zero-intensity marks never fire
            for (const auto& [p, w] : brownian) out.push_back({p * pj, w, static_cast<int>(u)});
        }
        return out;
    }

    void build_tree(const LatticeSpec& spec) {
        std::size_t count = 1, width = 1;
        for (std::size_t k = 0; k < steps(); ++k) {
            width *= branch_template(k, spec.brownian).size();
            count += width;
            if (count > spec.max_nodes)
                throw Error(ErrorCode::InvalidSpec,
                            "lattice would exceed " + std::to_string(spec.max_nodes) + " nodes");
        }
        nodes_.reserve(count);
        nodes_.push_back(Node{});
        level_begin_ = {0, 1};
        for (std::size_t k = 0; k < steps(); ++k) {
            const auto tmpl = branch_template(k, spec.brownian);
            const auto [first, last] = level(k);
            for (std::size_t i = first; i < last; ++i) {
                nodes_[i].first_child = static_cast<std::uint32_t>(nodes_.size());
                nodes_[i].child_count = static_cast<std::uint32_t>(tmpl.size());
                const Node parent = nodes_[i];
                for (const auto& b : tmpl) {
                    Node c;
                    c.step = k + 1;
                    c.parent = node_id(i);
                    c.prob = b.prob;
                    c.dw = b.dw;
                    c.mark = b.mark;
                    c.path_prob = parent.path_prob * b.prob;
                    c.brownian = parent.brownian + b.dw;
                    c.jump_sum = parent.jump_sum + (b.mark == kNoJump ? 0.0 : marks_[b.mark].size);
                    nodes_.push_back(c);
                }
            }
            level_begin_.push_back(nodes_.size());
        }
    }

    MarkSpace marks_;
    std::vector<double> times_;
    std::vector<Node> nodes_;
    std::vector<std::size_t> level_begin_;
};

inline Lattice build_lattice(const LatticeSpec& spec) { return Lattice(spec); }

/// Values indexed by node id.
using NodeField = std::vector<double>;

/// Per-node vectors of one entry per mark, stored node-major.
class MarkField {
public:
    MarkField() = default;
    MarkField(std::size_t nodes, std::size_t marks) : marks_(marks), data_(nodes * marks, 0.0) {}

    std::size_t marks() const noexcept { return marks_; }
    std::size_t nodes() const noexcept { return marks_ == 0 ? 0 : data_.size() / marks_; }

    std::span<double> at(NodeId n) { return {data_.data() + index(n) * marks_, marks_}; }
    std::span<const double> at(NodeId n) const { return {data_.data() + index(n) * marks_, marks_}; }
    double& operator()(NodeId n, std::size_t u) { return data_[index(n) * marks_ + u]; }
    double operator()(NodeId n, std::size_t u) const { return data_[index(n) * marks_ + u]; }

    std::span<const double> raw() const noexcept { return data_; }
    std::span<double> raw() noexcept { return data_; }

private:
    std::size_t marks_ = 0;
    std::vector<double> data_;
};

}  // namespace rbsde
