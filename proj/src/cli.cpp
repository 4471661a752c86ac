#include "markovlab/cli.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

namespace markovlab {

namespace {

namespace fs = std::filesystem;

std::uint64_t default_seed() {
    const char* env = std::getenv("MARKOVLAB_SEED");
    if (!env || !*env) return 12345;
    std::uint64_t value = 0;
    auto res = std::from_chars(env, env + std::strlen(env), value);
    if (res.ec != std::errc{} || *res.ptr)
        throw std::invalid_argument("MARKOVLAB_SEED must be an unsigned integer, got '" +
                                    std::string(env) + "'");
    return value;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

void apply_or_reject(ExperimentConfig& cfg, ExperimentKind kind, const std::string& key,
                     const std::string& value, const std::string& where) {
    if (key == "experiment") {
        if (experiment_from_string(value) != kind)
            throw std::invalid_argument(where + ": config is for experiment '" + value +
                                        "' but the subcommand is '" +
                                        std::string(to_string(kind)) + "'");
        return;
    }
    try {
        if (!apply_config_key(cfg, key, value))
            throw std::invalid_argument("unknown key '" + key + "'");
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(where + ": " + e.what());
    }
}

void atomic_write_text(const fs::path& path, const std::string& content) {
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("failed to write " + tmp.string());
    }
    fs::rename(tmp, path);
}

WeightedDigraph sampled_digraph(const std::string& law_text, const std::string& theta_text,
                                long n, std::uint64_t seed, std::string_view tag) {
    const WeightLaw law = WeightLaw::parse(law_text);
    const VertexWeightSpec theta = VertexWeightSpec::parse(theta_text);
    RngStream theta_stream(seed, std::string(tag) + "/theta", static_cast<std::uint64_t>(n), 0);
    Vec th = theta.sample(n, theta_stream);
    RngStream edges(seed, std::string(tag) + "/edges", static_cast<std::uint64_t>(n), 0, 0);
    return build_adjacency(std::move(th), sample_edge_matrix(law, n, edges));
}

struct ExperimentFlags {
    CLI::App* cmd = nullptr;
    ExperimentKind kind = ExperimentKind::fig1;
    std::string config_path, out_dir = "out";
    std::string law, theta, n_grid, alpha_grid, trials, panel_n, seed, a, mc_trials, threads;
    bool fix_theta = false, allow_degenerate = false;
    CLI::Option *config_opt = nullptr, *law_opt = nullptr, *theta_opt = nullptr,
                *n_grid_opt = nullptr, *alpha_grid_opt = nullptr, *trials_opt = nullptr,
                *panel_n_opt = nullptr, *seed_opt = nullptr, *a_opt = nullptr,
                *mc_trials_opt = nullptr, *threads_opt = nullptr, *fix_theta_opt = nullptr,
                *allow_degenerate_opt = nullptr;
};

void register_experiment(CLI::App& app, ExperimentFlags& f, ExperimentKind kind,
                         const char* description) {
    f.kind = kind;
    f.cmd = app.add_subcommand(std::string(to_string(kind)), description);
    f.config_opt = f.cmd->add_option("--config", f.config_path,
                                     "key=value config file (or a manifest) merged under flags");
    f.law_opt = f.cmd->add_option("--law", f.law, "edge-weight law");
    f.theta_opt = f.cmd->add_option("--theta", f.theta, "vertex-weight spec");
    f.n_grid_opt = f.cmd->add_option("--n-grid", f.n_grid, "comma-separated matrix sizes");
    f.alpha_grid_opt =
        f.cmd->add_option("--alpha-grid", f.alpha_grid, "comma-separated tail exponents");
    f.trials_opt = f.cmd->add_option("--trials", f.trials, "independent trials per grid point");
    f.panel_n_opt = f.cmd->add_option("--panel-n", f.panel_n, "size for the fixed-n panels");
    f.seed_opt = f.cmd->add_option("--seed", f.seed, "master seed");
    f.a_opt = f.cmd->add_option("--a", f.a, "reference decay exponent in (0, 0.5)");
    f.mc_trials_opt =
        f.cmd->add_option("--mc-trials", f.mc_trials, "lower-tail Monte Carlo trials");
    f.threads_opt = f.cmd->add_option("--threads", f.threads, "worker threads (0 = hardware)");
    f.fix_theta_opt =
        f.cmd->add_flag("--fix-theta", f.fix_theta, "reuse one theta draw across trials");
    f.allow_degenerate_opt = f.cmd->add_flag("--allow-degenerate", f.allow_degenerate,
                                             "permit the constant fixture law");
    f.cmd->add_option("--out-dir", f.out_dir, "output directory");
}

ExperimentConfig config_from_flags(const ExperimentFlags& f) {
    ExperimentConfig cfg;
    if (f.config_opt->count()) {
        cfg = load_config(f.config_path, f.kind);
    } else {
        cfg = ExperimentConfig::defaults(f.kind);
        cfg.master_seed = default_seed();
    }
    const std::string where = "flags";
    if (f.law_opt->count()) apply_or_reject(cfg, f.kind, "law", f.law, where);
    if (f.theta_opt->count()) apply_or_reject(cfg, f.kind, "theta", f.theta, where);
    if (f.n_grid_opt->count()) apply_or_reject(cfg, f.kind, "n_grid", f.n_grid, where);
    if (f.alpha_grid_opt->count())
        apply_or_reject(cfg, f.kind, "alpha_grid", f.alpha_grid, where);
    if (f.trials_opt->count()) apply_or_reject(cfg, f.kind, "trials", f.trials, where);
    if (f.panel_n_opt->count()) apply_or_reject(cfg, f.kind, "panel_n", f.panel_n, where);
    if (f.seed_opt->count()) apply_or_reject(cfg, f.kind, "seed", f.seed, where);
    if (f.a_opt->count()) apply_or_reject(cfg, f.kind, "a", f.a, where);
    if (f.mc_trials_opt->count()) apply_or_reject(cfg, f.kind, "mc_trials", f.mc_trials, where);
    if (f.threads_opt->count()) apply_or_reject(cfg, f.kind, "threads", f.threads, where);
    if (f.fix_theta_opt->count()) apply_or_reject(cfg, f.kind, "fix_theta", "true", where);
    if (f.allow_degenerate_opt->count())
        apply_or_reject(cfg, f.kind, "allow_degenerate", "true", where);
    return cfg;
}

int run_experiment_command(const ExperimentFlags& f) {
    ExperimentConfig cfg = config_from_flags(f);
    cfg.validate();

    const auto start = std::chrono::steady_clock::now();
    const ExperimentResult result = run_experiment(cfg);
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto files = write_experiment_outputs(result, f.out_dir, wall);

    for (const auto& warning : result.warnings)
        std::cerr << "warning: " << warning << '\n';
    for (const auto& name : files)
        std::cout << "wrote " << (fs::path(f.out_dir) / name).string() << '\n';
    std::cout << "rejections: " << result.total_rejections << '\n';

    for (const auto& fit : result.rate_fits)
        std::printf("fit %-16s slope %+.4f  r^2 %.4f  reference %+.4f\n", fit.metric.c_str(),
                    fit.fit.slope, fit.fit.r_squared, -cfg.rate_exponent);

    if (cfg.experiment == ExperimentKind::lemmas) {
        std::printf("%-24s %6s %5s %13s %13s  %s\n", "check", "n", "eps", "statistic",
                    "threshold", "verdict");
        for (const auto& v : result.verdicts) {
            const std::string eps = v.eps ? format_double(*v.eps) : "-";
            std::printf("%-24s %6ld %5s %13.6g %13.6g  %s\n", v.lemma.c_str(), v.n, eps.c_str(),
                        v.statistic, v.threshold, v.verdict.c_str());
        }
        if (!all_verdicts_pass(result)) {
            std::cout << "lemma suite: FAIL\n";
            return 2;
        }
        std::cout << "lemma suite: all checks passed\n";
    }
    return 0;
}

int run_gen(long n, const std::string& law, const std::string& theta, std::uint64_t seed,
            const std::string& out_dir) {
    const WeightedDigraph g = sampled_digraph(law, theta, n, seed, "gen");
    MatrixDump dump;
    dump.n = n;
    dump.theta_spec = VertexWeightSpec::parse(theta).to_string();
    dump.law_spec = WeightLaw::parse(law).to_string();
    dump.seed = seed;
    dump.adjacency = g.adjacency;

    std::ostringstream text;
    write_matrix_dump(text, dump);
    fs::create_directories(out_dir);
    const fs::path path = fs::path(out_dir) / "matrix.txt";
    atomic_write_text(path, text.str());

    const auto support = check_primitive(g);
    std::cout << "wrote " << path.string() << " (adjacency " << to_string(support.adjacency)
              << ", loop-free " << to_string(support.jump) << ")\n";
    return 0;
}

int run_solve(const std::string& target, const std::string& method, long n,
              const std::string& law, const std::string& theta, std::uint64_t seed,
              const std::string& in_file, double tol, long max_iter, int precision) {
    WeightedDigraph g;
    if (!in_file.empty()) {
        std::ifstream in(in_file);
        if (!in) throw std::invalid_argument("cannot open dump file " + in_file);
        MatrixDump dump = read_matrix_dump(in);
        // A dump stores the finished adjacency; re-expose it with unit theta.
        g = build_adjacency(Vec::Ones(dump.n), std::move(dump.adjacency));
    } else {
        g = sampled_digraph(law, theta, n, seed, "gen");
    }

    const PowerOptions popt{tol, max_iter};
    SolveReport report = [&] {
        if (target == "generator") {
            const GeneratorMatrix q = build_generator(g);
            if (method == "direct") return stationary_direct(q);
            if (method == "via-jump") return stationary_generator(q, GeneratorMethod::via_jump, popt);
            if (method == "tree-cofactor") return stationary_tree_oracle(q, TreeMode::cofactor);
            if (method == "tree-enum") return stationary_tree_oracle(q, TreeMode::enumeration);
            throw std::invalid_argument("--method power applies to kernel targets; use "
                                        "via-jump or direct for generators");
        }
        const KernelMatrix k =
            target == "kernel" ? build_kernel(g) : build_jump_kernel(g);
        if (method == "power") return stationary_kernel_power(k, popt);
        if (method == "direct") return stationary_direct(k);
        if (method == "tree-cofactor") return stationary_tree_oracle(k, TreeMode::cofactor);
        if (method == "tree-enum") return stationary_tree_oracle(k, TreeMode::enumeration);
        throw std::invalid_argument("--method via-jump applies to the generator target");
    }();

    std::cout << "n: " << g.size() << '\n'
              << "target: " << target << '\n'
              << "method: " << to_string(report.method) << '\n'
              << "iterations: " << report.iterations << '\n'
              << "residual: " << format_double(report.residual) << '\n';
    std::cout << "pi:";
    char buf[64];
    for (Index i = 0; i < report.pi.size(); ++i) {
        std::snprintf(buf, sizeof buf, " %.*g", precision, report.pi(i));
        std::cout << buf;
    }
    std::cout << '\n';
    return 0;
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentKind kind) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file " + path.string());
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    ExperimentConfig cfg = ExperimentConfig::defaults(kind);
    cfg.master_seed = default_seed();

    const std::string_view body = trim(content);
    if (!body.empty() && body.front() == '{') {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            throw std::invalid_argument(path.string() + ": " + e.what());
        }
        const nlohmann::json& table = doc.contains("config") ? doc.at("config") : doc;
        if (!table.is_object())
            throw std::invalid_argument(path.string() + ": expected an object of config keys");
        for (const auto& [key, value] : table.items()) {
            if (!value.is_string())
                throw std::invalid_argument(path.string() + ": config key '" + key +
                                            "' must be a string");
            apply_or_reject(cfg, kind, key, value.get<std::string>(), path.string());
        }
        return cfg;
    }

    std::istringstream lines(content);
    std::string line;
    long lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string_view stripped = trim(line);
        if (stripped.empty()) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        const auto eq = stripped.find('=');
        if (eq == std::string_view::npos)
            throw std::invalid_argument(where + ": expected key=value");
        const std::string key(trim(stripped.substr(0, eq)));
        const std::string value(trim(stripped.substr(eq + 1)));
        if (key.empty()) throw std::invalid_argument(where + ": empty key");
        apply_or_reject(cfg, kind, key, value, where);
    }
    return cfg;
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"simulation laboratory for random Markov generators and kernels"};
    app.require_subcommand(1);

    auto* gen_cmd =
        app.add_subcommand("gen", "sample a weighted adjacency matrix and dump it");
    long gen_n = 0;
    std::string gen_law = "exp:1", gen_theta = "const:1", gen_out = "out";
    std::uint64_t gen_seed = 0;
    gen_cmd->add_option("--n", gen_n, "matrix size")->required();
    gen_cmd->add_option("--law", gen_law, "edge-weight law");
    gen_cmd->add_option("--theta", gen_theta, "vertex-weight spec");
    auto* gen_seed_opt = gen_cmd->add_option("--seed", gen_seed, "master seed");
    gen_cmd->add_option("--out-dir", gen_out, "output directory");

    auto* solve_cmd = app.add_subcommand("solve", "compute a stationary distribution");
    long solve_n = 0;
    std::string solve_law = "exp:1", solve_theta = "const:1";
    std::string solve_target = "generator", solve_method = "direct", solve_in;
    std::uint64_t solve_seed = 0;
    double solve_tol = 1e-13;
    long solve_max_iter = 1000000;
    int solve_precision = 12;
    auto* solve_n_opt = solve_cmd->add_option("--n", solve_n, "matrix size");
    solve_cmd->add_option("--law", solve_law, "edge-weight law");
    solve_cmd->add_option("--theta", solve_theta, "vertex-weight spec");
    auto* solve_seed_opt = solve_cmd->add_option("--seed", solve_seed, "master seed");
    solve_cmd->add_option("--target", solve_target, "generator | kernel | jump")
        ->check(CLI::IsMember({"generator", "kernel", "jump"}));
    solve_cmd
        ->add_option("--method", solve_method,
                     "power | direct | via-jump | tree-cofactor | tree-enum")
        ->check(CLI::IsMember({"power", "direct", "via-jump", "tree-cofactor", "tree-enum"}));
    solve_cmd->add_option("--in", solve_in, "read a matrix dump instead of sampling");
    solve_cmd->add_option("--tol", solve_tol, "power-iteration l1 tolerance");
    solve_cmd->add_option("--max-iter", solve_max_iter, "power-iteration cap");
    solve_cmd->add_option("--precision", solve_precision, "printed significant digits");

    std::vector<ExperimentFlags> experiments(4);
    register_experiment(app, experiments[0], ExperimentKind::fig1,
                        "occupancy curves and reciprocal-distribution comparisons");
    register_experiment(app, experiments[1], ExperimentKind::fig2,
                        "uniformity of kernel chains and the heavy-tail contrast sweep");
    register_experiment(app, experiments[2], ExperimentKind::rate,
                        "total-variation decay rates against the reference slope");
    register_experiment(app, experiments[3], ExperimentKind::lemmas,
                        "concentration envelopes and the lower-tail bound");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }

    try {
        if (gen_cmd->parsed()) {
            const std::uint64_t seed = gen_seed_opt->count() ? gen_seed : default_seed();
            return run_gen(gen_n, gen_law, gen_theta, seed, gen_out);
        }
        if (solve_cmd->parsed()) {
            if (!solve_in.empty() && solve_n_opt->count())
                throw std::invalid_argument("--n conflicts with --in (the dump fixes n)");
            if (solve_in.empty() && !solve_n_opt->count())
                throw std::invalid_argument("--n is required when no --in dump is given");
            const std::uint64_t seed = solve_seed_opt->count() ? solve_seed : default_seed();
            return run_solve(solve_target, solve_method, solve_n, solve_law, solve_theta, seed,
                             solve_in, solve_tol, solve_max_iter, solve_precision);
        }
        for (const auto& f : experiments)
            if (f.cmd->parsed()) return run_experiment_command(f);
        std::cerr << "error: no subcommand given\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace markovlab
