// dicelab command-line driver.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 one or more sweep cells failed.

#include "dicelab/harness/config.hpp"
#include "dicelab/harness/csv.hpp"
#include "dicelab/harness/plot.hpp"
#include "dicelab/harness/sweep.hpp"
#include "dicelab/igi.hpp"
#include "dicelab/toy.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <thread>

using namespace dicelab;
using namespace dicelab::harness;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitPartial = 3;

/// Registers --<key> for every SweepConfig key; values are applied after --config is loaded.
struct ConfigFlags {
    std::string config_path;
    std::map<std::string, std::string> values;

    void attach(CLI::App& app) {
        app.add_option("--config", config_path, "key=value config file");
        for (const auto& [key, def] : to_map(SweepConfig{})) {
            auto* opt = app.add_option("--" + key, values[key], "config key " + key + " (default " + def + ")");
            opt->option_text("VALUE");
        }
    }

    SweepConfig build(CLI::App& app) const {
        SweepConfig c;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw ConfigError("config: cannot open " + config_path);
            c = parse_config(in);
        }
        for (const auto& [key, value] : values)
            if (app.count("--" + key) > 0) set_option(c, key, value);
        validate(c);
        return c;
    }
};

std::ostream& open_out(const std::string& path, std::unique_ptr<std::ofstream>& holder) {
    if (path.empty() || path == "-") return std::cout;
    holder = std::make_unique<std::ofstream>(path, std::ios::binary);
    if (!*holder) throw std::runtime_error("cannot write " + path);
    return *holder;
}

void write_mdp(std::ostream& out, const TabularMdp& mdp) {
    out << "# dicelab-mdp n_states=" << mdp.n_states() << " n_actions=" << mdp.n_actions()
        << " r_max=" << format_float(mdp.r_max()) << '\n';
    out << "kind,s,a,s_next,value\n";
    for (int s = 0; s < mdp.n_states(); ++s)
        if (mdp.initial()[s] != 0.0) out << "initial," << s << ",,," << format_float(mdp.initial()[s]) << '\n';
    for (int s = 0; s < mdp.n_states(); ++s)
        for (int a = 0; a < mdp.n_actions(); ++a)
            if (mdp.reward()(s, a) != 0.0) out << "reward," << s << ',' << a << ",," << format_float(mdp.reward()(s, a)) << '\n';
    for (int s = 0; s < mdp.n_states(); ++s)
        for (int a = 0; a < mdp.n_actions(); ++a)
            for (int t = 0; t < mdp.n_states(); ++t)
                if (mdp.transition(s, a, t) != 0.0)
                    out << "transition," << s << ',' << a << ',' << t << ',' << format_float(mdp.transition(s, a, t)) << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tabular discount-factor experiments for distribution-matching imitation"};
    app.require_subcommand(1);

    // gen-mdp
    auto* gen = app.add_subcommand("gen-mdp", "Write a random MDP as CSV");
    ConfigFlags gen_flags;
    gen_flags.attach(*gen);
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    gen->add_option("--seed", gen_seed, "MDP seed");
    gen->add_option("-o,--out", gen_out, "output path (default stdout)");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Run the (seed, gamma_hat, n_suboptimal) grid and write per-cell CSV");
    ConfigFlags sweep_flags;
    sweep_flags.attach(*sweep);
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    std::string sweep_out;
    sweep->add_option("-j,--jobs", jobs, "worker threads");
    sweep->add_option("-o,--out", sweep_out, "output CSV (default stdout)");

    // bounds
    auto* bounds = app.add_subcommand("bounds", "Write per-cell bound terms as CSV");
    ConfigFlags bound_flags;
    bound_flags.attach(*bounds);
    std::string bounds_out;
    bool inject_expert = false;
    bounds->add_option("-j,--jobs", jobs, "worker threads");
    bounds->add_option("-o,--out", bounds_out, "output CSV (default stdout)");
    bounds->add_flag("--inject-expert", inject_expert, "evaluate the expert policy instead of the learned one");

    // toy-curve
    auto* toy_cmd = app.add_subcommand("toy-curve", "KL-optimal theta on the three-state toy MDP over a gamma grid");
    double toy_lo = 0.05, toy_hi = 0.95;
    int toy_points = 19;
    std::string toy_out;
    toy_cmd->add_option("--gamma-min", toy_lo)->check(CLI::Range(1e-6, 1.0 - 1e-6));
    toy_cmd->add_option("--gamma-max", toy_hi)->check(CLI::Range(1e-6, 1.0 - 1e-6));
    toy_cmd->add_option("--points", toy_points)->check(CLI::PositiveNumber);
    toy_cmd->add_option("-o,--out", toy_out, "output CSV (default stdout)");

    // igi-solve
    auto* igi_cmd = app.add_subcommand("igi-solve", "Solve for initial-timestep weights from a dataset or a uniform target");
    std::string igi_dataset, igi_out;
    int igi_uniform = 0;
    double igi_gamma = 0.99;
    auto* ds_opt = igi_cmd->add_option("--dataset", igi_dataset, "dataset file (timestep histogram is the target)");
    auto* un_opt = igi_cmd->add_option("--uniform", igi_uniform, "uniform target over timesteps 0..H");
    ds_opt->excludes(un_opt);
    igi_cmd->add_option("--gamma", igi_gamma)->check(CLI::Range(1e-9, 1.0 - 1e-9));
    igi_cmd->add_option("-o,--out", igi_out, "output CSV (default stdout)");

    // plot
    auto* plot_cmd = app.add_subcommand("plot", "Render SVG charts from a sweep CSV");
    std::string plot_csv, plot_dir = "plots";
    plot_cmd->add_option("csv", plot_csv, "sweep CSV")->required();
    plot_cmd->add_option("-d,--out-dir", plot_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    std::unique_ptr<std::ofstream> file;
    try {
        if (*gen) {
            SweepConfig c = gen_flags.build(*gen);
            RandomMdpConfig mc = c.mdp_config;
            mc.seed = gen_seed;
            write_mdp(open_out(gen_out, file), random_mdp(mc));
        } else if (*sweep) {
            const SweepConfig c = sweep_flags.build(*sweep);
            const auto cells = run_sweep(c, open_out(sweep_out, file), jobs);
            if (const auto failed = failed_cells(cells)) {
                std::cerr << failed << " of " << cells.size() << " cells failed\n";
                return kExitPartial;
            }
        } else if (*bounds) {
            const SweepConfig c = bound_flags.build(*bounds);
            const auto cells = run_bound_terms(c, open_out(bounds_out, file), jobs, CellOptions{inject_expert});
            if (const auto failed = failed_cells(cells)) {
                std::cerr << failed << " of " << cells.size() << " cells failed\n";
                return kExitPartial;
            }
        } else if (*toy_cmd) {
            if (!(toy_lo <= toy_hi)) throw ConfigError("toy-curve: gamma-min exceeds gamma-max");
            auto& out = open_out(toy_out, file);
            out << "gamma,theta_star,kl_at_star\n";
            for (int i = 0; i < toy_points; ++i) {
                const double g = toy_points == 1 ? toy_lo : toy_lo + (toy_hi - toy_lo) * i / (toy_points - 1);
                const double th = toy::optimal_theta(g);
                CsvRow row;
                row << g << th << toy::kl(th, g);
                out << row.str() << '\n';
            }
        } else if (*igi_cmd) {
            TimestepHist target;
            if (!igi_dataset.empty()) {
                std::ifstream in(igi_dataset);
                if (!in) throw ConfigError("igi-solve: cannot open " + igi_dataset);
                target = timestep_histogram(read_dataset(in));
            } else if (igi_uniform > 0) {
                target.probs.assign(igi_uniform + 1, 1.0 / (igi_uniform + 1));
            } else {
                throw ConfigError("igi-solve: pass --dataset or --uniform H");
            }
            const IgiWeights w = solve_igi(target, igi_gamma);
            write_igi_weights(open_out(igi_out, file), w, igi_gamma);
        } else if (*plot_cmd) {
            for (const auto& p : emit_plots(plot_csv, plot_dir)) std::cout << p.string() << '\n';
        }
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return kExitConfig;
    } catch (const SchemaError& e) {
        std::cerr << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
