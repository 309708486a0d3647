#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "biobj/core.hpp"

namespace biobj {

namespace detail {

inline void check_objective_pair(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw InvalidInput("objective vectors must share a nonzero dimension");
    for (double v : a)
        if (!std::isfinite(v)) throw InvalidInput("non-finite objective component");
    for (double v : b)
        if (!std::isfinite(v)) throw InvalidInput("non-finite objective component");
}

}  // namespace detail

/// a dominates b: a is no worse in every objective and strictly better in at
/// least one (minimization).
inline bool dominates(std::span<const double> a, std::span<const double> b) {
    detail::check_objective_pair(a, b);
    bool strict = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > b[i]) return false;
        if (a[i] < b[i]) strict = true;
    }
    return strict;
}

/// a is strictly better than b in every objective. The negation of "some
/// vector strictly dominates z" is what makes z weakly Pareto-optimal.
inline bool strictly_dominates(std::span<const double> a, std::span<const double> b) {
    detail::check_objective_pair(a, b);
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] >= b[i]) return false;
    return true;
}

/// One nondominated objective vector and every configuration that achieved it.
struct FrontEntry {
    double time_s = 0.0;
    double dynamic_energy_j = 0.0;
    std::vector<Configuration> configs;

    std::array<double, 2> objective() const { return {time_s, dynamic_energy_j}; }
};

/// Nondominated set over (time, dynamic energy), kept sorted by time.
/// Bit-equal objective vectors share one entry; there is no epsilon tolerance
/// anywhere, so dominance stays transitive.
class ParetoFront {
  public:
    const std::vector<FrontEntry>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }

    /// Inserts a converged sample. Dominated candidates leave the front
    /// unchanged; otherwise every entry the candidate dominates is dropped.
    void insert(const ObjectiveSample& s) {
        const std::array<double, 2> obj{s.time_s, s.dynamic_energy_j};
        for (auto& e : entries_) {
            if (e.time_s == s.time_s && e.dynamic_energy_j == s.dynamic_energy_j) {
                e.configs.push_back(s.config);
                return;
            }
            if (dominates(e.objective(), obj)) return;
        }
        std::erase_if(entries_, [&](const FrontEntry& e) {
            return dominates(obj, e.objective());
        });
        FrontEntry entry{s.time_s, s.dynamic_energy_j, {s.config}};
        auto pos = std::lower_bound(entries_.begin(), entries_.end(), entry,
                                    [](const FrontEntry& a, const FrontEntry& b) {
                                        return a.objective() < b.objective();
                                    });
        entries_.insert(pos, std::move(entry));
    }

  private:
    std::vector<FrontEntry> entries_;
};

inline ParetoFront front_update(ParetoFront front, const ObjectiveSample& s) {
    front.insert(s);
    return front;
}

inline ParetoFront front_build(std::span<const ObjectiveSample> samples) {
    ParetoFront front;
    for (const auto& s : samples) front.insert(s);
    return front;
}

inline ParetoFront front_build(const std::vector<ObjectiveSample>& samples) {
    return front_build(std::span<const ObjectiveSample>(samples));
}

}  // namespace biobj
