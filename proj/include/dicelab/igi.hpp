#pragma once

// Inverse geometric initial-state sampling.
//
// A start timestep t0 drawn from p0~ followed by a geometric number of steps
// (conditioned on staying within the dataset horizon H) lands on timestep
// T = t0 + t_geom. The mixture over T is lower-triangular in p0~:
//
//   P_T(T) = sum_{t0 <= T} (1 - gamma) gamma^(T - t0) / Sum(H - t0) * p0~(t0),
//   Sum(n) = sum_{i=0}^{n} (1 - gamma) gamma^i,
//
// and solving it for a target P_T (usually the dataset's timestep histogram)
// yields start weights under which the discounted visitation reproduces the
// undiscounted empirical distribution.

#include "dicelab/data.hpp"

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dicelab {

struct IgiWeights {
    std::vector<double> probs; ///< p0~(t), t = 0..H
    double clipped_mass = 0.0; ///< negative mass removed from the exact solution
    double residual = 0.0;     ///< L1 distance of compose(probs) from the target

    int horizon() const { return static_cast<int>(probs.size()) - 1; }
};

class MissingTimestepError : public std::invalid_argument {
public:
    MissingTimestepError(int t)
        : std::invalid_argument("igi: no transitions at timestep " + std::to_string(t) +
                                " although it carries start weight"),
          timestep(t) {}
    int timestep;
};

inline void validate(const TimestepHist& hist, double tol = 1e-12) {
    detail::require(!hist.probs.empty(), "TimestepHist: empty");
    double total = 0.0;
    for (double p : hist.probs) {
        detail::require(std::isfinite(p) && p >= 0.0, "TimestepHist: negative or non-finite entry");
        total += p;
    }
    detail::require(std::abs(total - 1.0) <= tol, "TimestepHist: does not sum to 1");
}

/// Offsets 0..H-t0 of a geometric walk started at t0 and conditioned on not
/// passing H: entry k is gamma^k (1 - gamma) / (1 - gamma^(H - t0 + 1)).
inline std::vector<double> truncated_geometric(double gamma, int t0, int horizon) {
    detail::check_discount(gamma, "truncated_geometric");
    detail::require(t0 >= 0 && t0 <= horizon, "truncated_geometric: need 0 <= t0 <= horizon");
    const int n = horizon - t0 + 1;
    std::vector<double> out(n);
    // closed-form normalizer; pow(0, 0) == 1 covers gamma == 0
    const double norm = (1.0 - gamma) / (1.0 - std::pow(gamma, n));
    double g = 1.0;
    for (int k = 0; k < n; ++k) {
        out[k] = norm * g;
        g *= gamma;
    }
    return out;
}

/// Distribution of t0 + t_geom for start weights `weights`.
inline TimestepHist compose(const IgiWeights& weights, double gamma, int horizon) {
    detail::check_discount(gamma, "compose");
    detail::require(weights.horizon() == horizon, "compose: weights length must be horizon + 1");
    TimestepHist out;
    out.probs.assign(std::size_t(horizon) + 1, 0.0);
    for (int t0 = 0; t0 <= horizon; ++t0) {
        const double w = weights.probs[t0];
        if (w == 0.0) continue;
        const auto col = truncated_geometric(gamma, t0, horizon);
        for (std::size_t k = 0; k < col.size(); ++k) out.probs[t0 + k] += w * col[k];
    }
    return out;
}

/// Solves the triangular system for the start weights by forward substitution.
///
/// A negative exact solution is repaired by clipping to 0 and renormalizing;
/// `clipped_mass` and `residual` then quantify the approximation.
inline IgiWeights solve_igi(const TimestepHist& target, double gamma) {
    detail::require(gamma >= 0.0 && gamma < 1.0, "solve_igi: discount must lie in [0, 1)");
    validate(target, 1e-9);
    const int H = target.horizon();

    // columns[t0][k] = M(t0 + k, t0)
    std::vector<std::vector<double>> columns;
    columns.reserve(std::size_t(H) + 1);
    for (int t0 = 0; t0 <= H; ++t0) columns.push_back(truncated_geometric(gamma, t0, H));

    IgiWeights w;
    w.probs.assign(std::size_t(H) + 1, 0.0);
    for (int T = 0; T <= H; ++T) {
        double acc = target.probs[T];
        for (int t0 = 0; t0 < T; ++t0) acc -= columns[t0][T - t0] * w.probs[t0];
        w.probs[T] = acc / columns[T][0];
    }

    double negative = 0.0, total = 0.0;
    for (double p : w.probs) {
        if (p < 0.0) negative -= p;
        else total += p;
    }
    if (negative > 0.0) {
        for (double& p : w.probs) p = p < 0.0 ? 0.0 : p / total;
        w.clipped_mass = negative;
    } else {
        // the exact solution sums to 1 up to round-off because every column does
        for (double& p : w.probs) p /= total;
    }
    const auto back = compose(w, gamma, H);
    for (int T = 0; T <= H; ++T) w.residual += std::abs(back.probs[T] - target.probs[T]);
    return w;
}

namespace detail {

inline std::vector<std::int64_t> states_at_timestep(const Dataset& data, int t) {
    std::vector<std::int64_t> n(data.n_states(), 0);
    for (int s = 0; s < data.n_states(); ++s)
        for (int a = 0; a < data.n_actions(); ++a) n[s] += data.timestep_count(t, s, a);
    return n;
}

} // namespace detail

/// Start-state distribution: pick t ~ weights, then a stored transition at
/// timestep t uniformly, and take its state.
inline Vector igi_initial_state_dist(const Dataset& data, const IgiWeights& weights) {
    detail::require(weights.horizon() <= data.horizon(),
                    "igi_initial_state_dist: weights extend beyond the dataset horizon");
    Vector p = Vector::Zero(data.n_states());
    for (int t = 0; t <= weights.horizon(); ++t) {
        if (weights.probs[t] <= 0.0) continue;
        const auto n = detail::states_at_timestep(data, t);
        std::int64_t total = 0;
        for (auto c : n) total += c;
        if (total == 0) throw MissingTimestepError(t);
        for (int s = 0; s < data.n_states(); ++s) p[s] += weights.probs[t] * double(n[s]) / double(total);
    }
    return p / p.sum();
}

/// Monte-Carlo version of igi_initial_state_dist, following the two-stage
/// sampling procedure literally.
inline std::vector<int> sample_igi_initial_states(const Dataset& data, const IgiWeights& weights,
                                                  int n, Rng& rng) {
    // transitions bucketed by timestep
    std::vector<std::vector<int>> by_t(std::size_t(weights.horizon()) + 1);
    for (const auto& traj : data.trajectories())
        for (const auto& st : traj.steps)
            if (st.t <= weights.horizon()) by_t[st.t].push_back(st.s);
    std::vector<int> out(n);
    for (auto& s : out) {
        const auto t = rng.categorical(weights.probs);
        if (by_t[t].empty()) throw MissingTimestepError(int(t));
        s = by_t[t][rng.index(by_t[t].size())];
    }
    return out;
}

/// CSV with a comment header:
///
///   # gamma=<g> horizon=<H> clipped_mass=<c> residual=<r>
///   t,prob
inline void write_igi_weights(std::ostream& out, const IgiWeights& w, double gamma) {
    const auto old = out.precision(17);
    out << "# gamma=" << gamma << " horizon=" << w.horizon() << " clipped_mass=" << w.clipped_mass
        << " residual=" << w.residual << "\n";
    out << "t,prob\n";
    for (int t = 0; t <= w.horizon(); ++t) out << t << ',' << w.probs[t] << '\n';
    out.precision(old);
}

} // namespace dicelab
