#pragma once

#include "dicelab/mdp.hpp"
#include "dicelab/rng.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dicelab {

struct Step {
    int t;
    int s;
    int a;
    int s_next;

    friend bool operator==(const Step&, const Step&) = default;
};

/// One rollout. Timesteps run 0, 1, 2, ... with no gaps.
struct Trajectory {
    std::vector<Step> steps;
    int horizon = 0;

    friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

class DatasetFormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Probability of each timestep among all stored transitions.
struct TimestepHist {
    std::vector<double> probs;

    int horizon() const { return static_cast<int>(probs.size()) - 1; }
};

/// Offline transitions with cached count tensors.
///
/// `count(s,a,s')` and `timestep_count(t,s,a)` are always rebuilt from the
/// trajectories, so they cannot drift out of sync.
class Dataset {
public:
    Dataset(int n_states, int n_actions, int horizon, std::vector<Trajectory> trajectories)
        : n_states_(n_states), n_actions_(n_actions), horizon_(horizon),
          trajectories_(std::move(trajectories)) {
        detail::require(n_states > 0 && n_actions > 0, "Dataset: empty state or action space");
        detail::require(horizon >= 0, "Dataset: negative horizon");
        counts_.assign(std::size_t(n_states) * n_actions * n_states, 0);
        timestep_counts_.assign(std::size_t(horizon + 1) * n_states * n_actions, 0);
        for (std::size_t k = 0; k < trajectories_.size(); ++k) {
            const auto& traj = trajectories_[k];
            detail::require(traj.steps.size() <= std::size_t(horizon) + 1,
                            "Dataset: trajectory " + std::to_string(k) + " longer than horizon + 1");
            for (std::size_t i = 0; i < traj.steps.size(); ++i) {
                const Step& st = traj.steps[i];
                detail::require(st.t == static_cast<int>(i),
                                "Dataset: trajectory " + std::to_string(k) +
                                    " timesteps are not consecutive from 0");
                detail::require(st.s >= 0 && st.s < n_states && st.s_next >= 0 &&
                                    st.s_next < n_states && st.a >= 0 && st.a < n_actions,
                                "Dataset: state or action id out of range");
                ++counts_[count_index(st.s, st.a, st.s_next)];
                ++timestep_counts_[timestep_index(st.t, st.s, st.a)];
                ++total_;
            }
        }
    }

    int n_states() const { return n_states_; }
    int n_actions() const { return n_actions_; }
    int horizon() const { return horizon_; }
    const std::vector<Trajectory>& trajectories() const { return trajectories_; }

    std::int64_t count(int s, int a, int s_next) const { return counts_[count_index(s, a, s_next)]; }
    std::int64_t pair_count(int s, int a) const {
        std::int64_t n = 0;
        for (int sn = 0; sn < n_states_; ++sn) n += count(s, a, sn);
        return n;
    }
    std::int64_t timestep_count(int t, int s, int a) const {
        return timestep_counts_[timestep_index(t, s, a)];
    }
    std::int64_t total() const { return total_; }
    bool empty() const { return total_ == 0; }

    const std::vector<std::int64_t>& counts() const { return counts_; }
    const std::vector<std::int64_t>& timestep_counts() const { return timestep_counts_; }

private:
    std::size_t count_index(int s, int a, int s_next) const {
        return (std::size_t(s) * n_actions_ + a) * n_states_ + s_next;
    }
    std::size_t timestep_index(int t, int s, int a) const {
        return (std::size_t(t) * n_states_ + s) * n_actions_ + a;
    }

    int n_states_;
    int n_actions_;
    int horizon_;
    std::vector<Trajectory> trajectories_;
    std::vector<std::int64_t> counts_;
    std::vector<std::int64_t> timestep_counts_;
    std::int64_t total_ = 0;
};

/// Union of two datasets over the same spaces (D^E u D^O).
inline Dataset merge(const Dataset& a, const Dataset& b) {
    detail::require(a.n_states() == b.n_states() && a.n_actions() == b.n_actions(),
                    "merge: datasets live on different spaces");
    std::vector<Trajectory> all = a.trajectories();
    all.insert(all.end(), b.trajectories().begin(), b.trajectories().end());
    return {a.n_states(), a.n_actions(), std::max(a.horizon(), b.horizon()), std::move(all)};
}

/// Rolls out `n` trajectories of exactly horizon + 1 transitions each.
inline Dataset sample_trajectories(const TabularMdp& mdp, const TabularPolicy& policy, int n,
                                   int horizon, Rng& rng) {
    detail::require(n >= 1, "sample_trajectories: need at least one trajectory");
    detail::require(horizon >= 1, "sample_trajectories: horizon must be >= 1");
    const int S = mdp.n_states();
    std::vector<Trajectory> trajs(n);
    for (auto& traj : trajs) {
        traj.horizon = horizon;
        traj.steps.reserve(std::size_t(horizon) + 1);
        int s = static_cast<int>(rng.categorical(mdp.initial()));
        for (int t = 0; t <= horizon; ++t) {
            const int a = static_cast<int>(rng.categorical(policy.probs().row(s)));
            const int sn = static_cast<int>(rng.categorical(mdp.transition().row(mdp.row(s, a))));
            traj.steps.push_back({t, s, a, sn});
            s = sn;
        }
    }
    return {S, mdp.n_actions(), horizon, std::move(trajs)};
}

inline Dataset sample_trajectories(const TabularMdp& mdp, const TabularPolicy& policy, int n,
                                   int horizon, std::uint64_t seed) {
    Rng rng(seed);
    return sample_trajectories(mdp, policy, n, horizon, rng);
}

/// E(s,a) or D(s,a): transition counts normalized by the total.
inline StateActionDist empirical_distribution(const Dataset& data) {
    detail::require(!data.empty(), "empirical_distribution: empty dataset");
    Matrix mass(data.n_states(), data.n_actions());
    for (int s = 0; s < data.n_states(); ++s)
        for (int a = 0; a < data.n_actions(); ++a)
            mass(s, a) = double(data.pair_count(s, a)) / double(data.total());
    return StateActionDist(std::move(mass));
}

/// Distribution of the states observed at timestep 0.
inline Vector initial_state_distribution(const Dataset& data) {
    Vector p = Vector::Zero(data.n_states());
    double n = 0.0;
    for (int s = 0; s < data.n_states(); ++s)
        for (int a = 0; a < data.n_actions(); ++a) {
            p[s] += double(data.timestep_count(0, s, a));
            n += double(data.timestep_count(0, s, a));
        }
    detail::require(n > 0.0, "initial_state_distribution: no transitions at timestep 0");
    return p / n;
}

enum class MleFallback { uniform, self_loop };

/// Maximum-likelihood transition matrix; unseen (s,a) rows follow `fallback`.
inline Matrix mle_transitions(const Dataset& data, MleFallback fallback) {
    detail::require(!data.empty(), "mle_transitions: empty dataset");
    const int S = data.n_states(), A = data.n_actions();
    Matrix P = Matrix::Zero(Eigen::Index(S) * A, S);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const auto row = Eigen::Index(s) * A + a;
            const auto n = data.pair_count(s, a);
            if (n > 0) {
                for (int sn = 0; sn < S; ++sn) P(row, sn) = double(data.count(s, a, sn)) / double(n);
            } else if (fallback == MleFallback::uniform) {
                P.row(row).setConstant(1.0 / S);
            } else {
                P(row, s) = 1.0;
            }
        }
    return P;
}

/// MLE model of the data: estimated transitions, empirical start states,
/// zero reward (r_max = 1). Graft the transitions onto a reference model with
/// TabularMdp::with_transitions when true rewards are needed.
inline TabularMdp mle_dynamics(const Dataset& data, MleFallback fallback = MleFallback::uniform) {
    return {mle_transitions(data, fallback), initial_state_distribution(data),
            Matrix::Zero(data.n_states(), data.n_actions()), 1.0};
}

inline TimestepHist timestep_histogram(const Dataset& data) {
    detail::require(!data.empty(), "timestep_histogram: empty dataset");
    TimestepHist hist;
    hist.probs.assign(std::size_t(data.horizon()) + 1, 0.0);
    for (int t = 0; t <= data.horizon(); ++t) {
        std::int64_t n = 0;
        for (int s = 0; s < data.n_states(); ++s)
            for (int a = 0; a < data.n_actions(); ++a) n += data.timestep_count(t, s, a);
        hist.probs[t] = double(n) / double(data.total());
    }
    return hist;
}

// ---------------------------------------------------------------------------
// Text format
//
//   # dicelab-dataset n_states=<S> n_actions=<A> horizon=<H>
//   traj_id,t,s,a,s_next
//   0,0,3,1,7
//   ...
//
// Rows of one trajectory are contiguous, trajectory ids count up from 0 and
// t restarts at 0 for each trajectory.
// ---------------------------------------------------------------------------

inline void write_dataset(std::ostream& out, const Dataset& data) {
    out << "# dicelab-dataset n_states=" << data.n_states() << " n_actions=" << data.n_actions()
        << " horizon=" << data.horizon() << "\n";
    out << "traj_id,t,s,a,s_next\n";
    for (std::size_t k = 0; k < data.trajectories().size(); ++k)
        for (const auto& st : data.trajectories()[k].steps)
            out << k << ',' << st.t << ',' << st.s << ',' << st.a << ',' << st.s_next << '\n';
}

inline Dataset read_dataset(std::istream& in) {
    std::string line;
    int S = -1, A = -1, H = -1;
    if (!std::getline(in, line) || line.rfind("# dicelab-dataset", 0) != 0)
        throw DatasetFormatError("dataset: missing '# dicelab-dataset' header line");
    {
        std::istringstream hs(line.substr(17));
        std::string kv;
        while (hs >> kv) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw DatasetFormatError("dataset: malformed header field " + kv);
            const auto key = kv.substr(0, eq);
            const int value = std::stoi(kv.substr(eq + 1));
            if (key == "n_states") S = value;
            else if (key == "n_actions") A = value;
            else if (key == "horizon") H = value;
            else throw DatasetFormatError("dataset: unknown header field " + key);
        }
    }
    if (S <= 0 || A <= 0 || H < 0) throw DatasetFormatError("dataset: header is incomplete");
    if (!std::getline(in, line) || line != "traj_id,t,s,a,s_next")
        throw DatasetFormatError("dataset: expected column line 'traj_id,t,s,a,s_next'");

    std::vector<Trajectory> trajs;
    long line_no = 2;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        long f[5];
        std::istringstream ls(line);
        for (int i = 0; i < 5; ++i) {
            char sep = 0;
            if (!(ls >> f[i]) || (i < 4 && (!(ls >> sep) || sep != ',')))
                throw DatasetFormatError("dataset: line " + std::to_string(line_no) + " is malformed");
        }
        const long id = f[0];
        if (id == long(trajs.size())) {
            trajs.push_back(Trajectory{{}, H});
        } else if (id != long(trajs.size()) - 1) {
            throw DatasetFormatError("dataset: line " + std::to_string(line_no) +
                                     " trajectory ids must be contiguous and increasing");
        }
        auto& traj = trajs.back();
        if (f[1] != long(traj.steps.size()))
            throw DatasetFormatError("dataset: line " + std::to_string(line_no) + " timestep " +
                                     std::to_string(f[1]) + " breaks consecutiveness (expected " +
                                     std::to_string(traj.steps.size()) + ")");
        traj.steps.push_back({int(f[1]), int(f[2]), int(f[3]), int(f[4])});
    }
    try {
        return {S, A, H, std::move(trajs)};
    } catch (const std::invalid_argument& e) {
        throw DatasetFormatError(e.what());
    }
}

} // namespace dicelab
