#include "markovlab/experiments.hpp"

#include <atomic>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#ifndef MARKOVLAB_VERSION
#define MARKOVLAB_VERSION "0.0.0"
#endif

namespace markovlab {

namespace {

namespace fs = std::filesystem;

// Lower-tail grid monitored by the lemma suite.
constexpr long kLowerTailN[] = {50, 100, 200};
constexpr double kLowerTailEps[] = {0.3, 0.5, 0.7};

// Envelope caps for the scale-free lemma statistics, frozen from the pilot
// run at master seed 12345 (Exp(1), n in {250,500,1000,2000}, 10 trials).
// Observed medians: n^1.4 jump gap 1.58..1.81 (decaying slowly, as the
// uniformity bound only promises o(1)); n max_entry / ln n 2.08..2.18
// (the exponential ensemble's limit constant is 2).
constexpr double kJumpGapCap = 2.5;
constexpr double kMaxEntryCap = 4.0;

long parse_long(const std::string& key, std::string_view value) {
    long out = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        throw std::invalid_argument("config value for '" + key + "' is not an integer: '" +
                                    std::string(value) + "'");
    return out;
}

double parse_double(const std::string& key, std::string_view value) {
    double out = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        throw std::invalid_argument("config value for '" + key + "' is not a number: '" +
                                    std::string(value) + "'");
    return out;
}

bool parse_bool(const std::string& key, std::string_view value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw std::invalid_argument("config value for '" + key + "' is not a boolean: '" +
                                std::string(value) + "'");
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, std::string_view value, Parse parse) {
    std::vector<T> out;
    std::string_view rest = value;
    while (true) {
        const auto comma = rest.find(',');
        out.push_back(parse(key, rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
    }
    return out;
}

template <typename T, typename Format>
std::string join_list(const std::vector<T>& values, Format format) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += format(values[i]);
    }
    return out;
}

// Runs fn(0..count-1) on a worker pool. Tasks own disjoint output slots, so
// the artifacts cannot depend on the thread count.
void run_parallel(long count, int threads, const std::function<void(long)>& fn) {
    long workers = threads > 0 ? threads : static_cast<long>(std::thread::hardware_concurrency());
    if (workers < 1) workers = 1;
    workers = std::min(workers, count);
    if (workers <= 1) {
        for (long i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<long> cursor{0};
    std::mutex mu;
    std::exception_ptr err;
    auto worker = [&] {
        while (true) {
            const long i = cursor.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!err) err = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (long t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

struct DrawOutcome {
    WeightedDigraph g;
    long rejections = 0;
};

// Redraws the edge matrix until both the adjacency and its loop-free support
// are primitive; theta stays fixed across attempts (it cannot change the
// support).
DrawOutcome draw_digraph(const ExperimentConfig& cfg, const VertexWeightSpec& theta,
                         const WeightLaw& law, const std::string& tag, long n, long trial) {
    RngStream theta_stream(cfg.master_seed, tag + "/theta", static_cast<std::uint64_t>(n),
                           cfg.fix_theta ? 0 : static_cast<std::uint64_t>(trial));
    const Vec th = theta.sample(n, theta_stream);
    constexpr long kMaxAttempts = 256;
    for (long attempt = 0; attempt < kMaxAttempts; ++attempt) {
        RngStream edges(cfg.master_seed, tag + "/edges", static_cast<std::uint64_t>(n),
                        static_cast<std::uint64_t>(trial), static_cast<std::uint64_t>(attempt));
        WeightedDigraph g = build_adjacency(th, sample_edge_matrix(law, n, edges));
        if (check_primitive(g).both_primitive()) return {std::move(g), attempt};
    }
    throw std::runtime_error("could not draw a primitive weighted digraph after " +
                             std::to_string(kMaxAttempts) + " attempts (law " + law.to_string() +
                             ", n = " + std::to_string(n) + ")");
}

void add_curve(TrialRecord& rec, const char* prefix, const Vec& curve) {
    char key[48];
    for (Index i = 0; i < curve.size(); ++i) {
        std::snprintf(key, sizeof key, "%s_%04lld", prefix, static_cast<long long>(i));
        rec.metrics[key] = curve(i);
    }
}

TrialRecord make_record(const ExperimentConfig& cfg, long n, std::optional<double> alpha,
                        long trial, long rejections) {
    TrialRecord rec;
    rec.experiment = std::string(to_string(cfg.experiment));
    rec.n = n;
    rec.alpha = alpha;
    rec.trial = trial;
    rec.rejections = rejections;
    rec.metrics["rejections"] = static_cast<double>(rejections);
    return rec;
}

bool record_less(const TrialRecord& a, const TrialRecord& b) {
    if (a.n != b.n) return a.n < b.n;
    if (a.alpha.has_value() != b.alpha.has_value()) return !a.alpha.has_value();
    if (a.alpha && b.alpha && *a.alpha != *b.alpha) return *a.alpha < *b.alpha;
    return a.trial < b.trial;
}

Panel make_panel(std::string name, std::vector<TrialRecord> trials) {
    Panel panel;
    panel.name = std::move(name);
    panel.aggregates = aggregate_records(trials);
    std::sort(trials.begin(), trials.end(), record_less);
    panel.trials = std::move(trials);
    return panel;
}

long count_rejections(const ExperimentResult& result) {
    long total = 0;
    for (const auto& panel : result.panels)
        for (const auto& rec : panel.trials) total += rec.rejections;
    return total;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::logic_error("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t mid = values.size() / 2;
    return values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
}

// Per-n median of metric over a panel's trial records.
std::map<long, double> metric_medians(const Panel& panel, const std::string& metric) {
    std::map<long, std::vector<double>> groups;
    for (const auto& rec : panel.trials) {
        const auto it = rec.metrics.find(metric);
        if (it != rec.metrics.end()) groups[rec.n].push_back(it->second);
    }
    std::map<long, double> out;
    for (auto& [n, values] : groups) out[n] = median(std::move(values));
    return out;
}

// ---- fig1 ----------------------------------------------------------------

TrialRecord fig1_curve_trial(const ExperimentConfig& cfg, const VertexWeightSpec& theta,
                             const std::string& tag, long n, long trial) {
    auto [g, rejections] = draw_digraph(cfg, theta, cfg.edge_law, tag, n, trial);
    const GeneratorMatrix q = build_generator(g);
    const SolveReport sol = stationary_generator(q, GeneratorMethod::via_jump);
    const auto nu_q = reciprocal_distribution(exit_rates(g));
    const auto nu_theta = reciprocal_distribution(g.theta);

    TrialRecord rec = make_record(cfg, n, std::nullopt, trial, rejections);
    add_curve(rec, "scaled_piQ", descending_scaled(sol.pi));
    add_curve(rec, "scaled_nuq", descending_scaled(nu_q));
    add_curve(rec, "scaled_nutheta", descending_scaled(nu_theta));
    rec.metrics["tv_piQ_nuq"] = tv_distance(sol.pi, nu_q);
    rec.metrics["tv_piQ_nutheta"] = tv_distance(sol.pi, nu_theta);
    rec.metrics["tv_piQ_u"] = tv_distance(sol.pi, ProbabilityVector::uniform(n));
    rec.metrics["residual_piQ"] = sol.residual;
    return rec;
}

TrialRecord fig1_tv_trial(const ExperimentConfig& cfg, const VertexWeightSpec& theta,
                          const std::string& tag, long n, long trial) {
    auto [g, rejections] = draw_digraph(cfg, theta, cfg.edge_law, tag, n, trial);
    const GeneratorMatrix q = build_generator(g);
    const SolveReport sol = stationary_generator(q, GeneratorMethod::via_jump);
    const auto nu_q = reciprocal_distribution(exit_rates(g));
    const auto nu_theta = reciprocal_distribution(g.theta);

    TrialRecord rec = make_record(cfg, n, std::nullopt, trial, rejections);
    rec.metrics["tv_piQ_nuq"] = tv_distance(sol.pi, nu_q);
    rec.metrics["tv_piQ_nutheta"] = tv_distance(sol.pi, nu_theta);
    rec.metrics["tv_piQ_u"] = tv_distance(sol.pi, ProbabilityVector::uniform(n));
    rec.metrics["residual_piQ"] = sol.residual;
    return rec;
}

}  // namespace

std::string_view to_string(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::fig1: return "fig1";
        case ExperimentKind::fig2: return "fig2";
        case ExperimentKind::rate: return "rate";
        case ExperimentKind::lemmas: return "lemmas";
    }
    return "unknown";
}

ExperimentKind experiment_from_string(std::string_view name) {
    if (name == "fig1") return ExperimentKind::fig1;
    if (name == "fig2") return ExperimentKind::fig2;
    if (name == "rate") return ExperimentKind::rate;
    if (name == "lemmas") return ExperimentKind::lemmas;
    throw std::invalid_argument("unknown experiment '" + std::string(name) +
                                "'; expected fig1, fig2, rate, or lemmas");
}

ExperimentConfig ExperimentConfig::defaults(ExperimentKind kind) {
    ExperimentConfig cfg;
    cfg.experiment = kind;
    cfg.n_grid = {100, 200, 400, 800, 1600};
    cfg.alpha_grid = {0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0};
    if (kind == ExperimentKind::lemmas) {
        cfg.n_grid = {250, 500, 1000, 2000};
        cfg.theta = VertexWeightSpec::constant(1.0);
    }
    if (kind == ExperimentKind::fig2) cfg.theta = VertexWeightSpec::constant(1.0);
    return cfg;
}

void ExperimentConfig::validate() const {
    if (trials < 1) throw std::invalid_argument("config: trials must be at least 1");
    if (panel_n < 2) throw std::invalid_argument("config: panel_n must be at least 2");
    if (mc_trials < 1) throw std::invalid_argument("config: mc_trials must be at least 1");
    if (threads < 0) throw std::invalid_argument("config: threads must be non-negative");
    if (n_grid.empty()) throw std::invalid_argument("config: n_grid is empty");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
        if (n_grid[i] < 2) throw std::invalid_argument("config: n_grid entries must be >= 2");
        if (i && n_grid[i] <= n_grid[i - 1])
            throw std::invalid_argument("config: n_grid must be strictly increasing");
    }
    for (const double a : alpha_grid)
        if (!(a > 0.0) || !std::isfinite(a))
            throw std::invalid_argument("config: alpha_grid entries must be positive");
    if (!(rate_exponent > 0.0) || !(rate_exponent < 0.5))
        throw std::invalid_argument("config: a must lie in (0, 0.5)");
    if (edge_law.degenerate() && !allow_degenerate)
        throw std::invalid_argument("config: the constant law is a degenerate test fixture; set "
                                    "allow_degenerate=true to run it anyway");
    if (experiment == ExperimentKind::rate) {
        if (n_grid.size() < 3)
            throw std::invalid_argument("config: the rate experiment needs at least 3 grid sizes");
        if (std::isfinite(edge_law.moments().max_order))
            throw std::invalid_argument("config: the rate experiment needs an edge law with all "
                                        "moments finite (got " + edge_law.to_string() + ")");
    }
    if (experiment == ExperimentKind::fig2 && alpha_grid.empty())
        throw std::invalid_argument("config: fig2 needs a non-empty alpha_grid");
}

std::map<std::string, std::string> ExperimentConfig::to_key_values() const {
    std::map<std::string, std::string> out;
    out["experiment"] = std::string(to_string(experiment));
    out["law"] = edge_law.to_string();
    out["theta"] = theta.to_string();
    out["n_grid"] = join_list(n_grid, [](long v) { return std::to_string(v); });
    out["alpha_grid"] = join_list(alpha_grid, [](double v) { return format_double(v); });
    out["panel_n"] = std::to_string(panel_n);
    out["trials"] = std::to_string(trials);
    out["seed"] = std::to_string(master_seed);
    out["a"] = format_double(rate_exponent);
    out["mc_trials"] = std::to_string(mc_trials);
    out["fix_theta"] = fix_theta ? "true" : "false";
    out["allow_degenerate"] = allow_degenerate ? "true" : "false";
    // threads is deliberately absent: it changes scheduling, never output, so
    // manifests stay identical across thread counts.
    return out;
}

bool apply_config_key(ExperimentConfig& config, const std::string& key,
                      const std::string& value) {
    if (key == "law") {
        config.edge_law = WeightLaw::parse(value);
    } else if (key == "theta") {
        config.theta = VertexWeightSpec::parse(value);
    } else if (key == "n_grid") {
        config.n_grid = parse_list<long>(key, value, parse_long);
    } else if (key == "alpha_grid") {
        config.alpha_grid = parse_list<double>(key, value, parse_double);
    } else if (key == "panel_n") {
        config.panel_n = parse_long(key, value);
    } else if (key == "trials") {
        config.trials = parse_long(key, value);
    } else if (key == "seed") {
        config.master_seed = static_cast<std::uint64_t>(parse_long(key, value));
    } else if (key == "a") {
        config.rate_exponent = parse_double(key, value);
    } else if (key == "mc_trials") {
        config.mc_trials = parse_long(key, value);
    } else if (key == "fix_theta") {
        config.fix_theta = parse_bool(key, value);
    } else if (key == "allow_degenerate") {
        config.allow_degenerate = parse_bool(key, value);
    } else if (key == "threads") {
        config.threads = static_cast<int>(parse_long(key, value));
    } else {
        return false;
    }
    return true;
}

std::vector<AggregateRecord> aggregate_records(std::vector<TrialRecord> records) {
    std::sort(records.begin(), records.end(), record_less);
    std::vector<AggregateRecord> out;
    std::size_t start = 0;
    while (start < records.size()) {
        std::size_t stop = start;
        while (stop < records.size() && records[stop].n == records[start].n &&
               records[stop].alpha == records[start].alpha)
            ++stop;

        AggregateRecord agg;
        agg.n = records[start].n;
        agg.alpha = records[start].alpha;
        agg.trials = static_cast<long>(stop - start);
        std::map<std::string, std::vector<double>> columns;
        for (std::size_t i = start; i < stop; ++i)
            for (const auto& [metric, value] : records[i].metrics)
                columns[metric].push_back(value);
        for (const auto& [metric, values] : columns) {
            double sum = 0.0;
            for (const double v : values) sum += v;
            const double mean = sum / static_cast<double>(values.size());
            double ss = 0.0;
            for (const double v : values) ss += (v - mean) * (v - mean);
            const double sd = values.size() > 1
                                  ? std::sqrt(ss / static_cast<double>(values.size() - 1))
                                  : 0.0;
            agg.mean_std[metric] = {mean, sd};
        }
        out.push_back(std::move(agg));
        start = stop;
    }
    return out;
}

ExperimentResult run_fig1(const ExperimentConfig& config) {
    config.validate();
    ExperimentResult result;
    result.config = config;
    if (!std::isfinite(config.edge_law.moments().mean))
        result.warnings.push_back("edge law " + config.edge_law.to_string() +
                                  " has infinite mean; the reciprocal comparisons lose their "
                                  "interpretation");

    const auto theta_const = VertexWeightSpec::constant(1.0);

    std::vector<TrialRecord> panel_a(config.trials);
    run_parallel(config.trials, config.threads, [&](long t) {
        panel_a[t] = fig1_curve_trial(config, theta_const, "fig1/a", config.panel_n, t);
    });
    result.panels.push_back(make_panel("a", std::move(panel_a)));

    std::vector<TrialRecord> panel_b(config.trials);
    run_parallel(config.trials, config.threads, [&](long t) {
        panel_b[t] = fig1_curve_trial(config, config.theta, "fig1/b", config.panel_n, t);
    });
    result.panels.push_back(make_panel("b", std::move(panel_b)));

    const long cells = static_cast<long>(config.n_grid.size()) * config.trials;
    std::vector<TrialRecord> panel_c(cells);
    run_parallel(cells, config.threads, [&](long i) {
        const long n = config.n_grid[static_cast<std::size_t>(i / config.trials)];
        const long t = i % config.trials;
        panel_c[i] = fig1_tv_trial(config, config.theta, "fig1/c", n, t);
    });
    result.panels.push_back(make_panel("c", std::move(panel_c)));

    result.total_rejections = count_rejections(result);
    return result;
}

ExperimentResult run_fig2(const ExperimentConfig& config) {
    config.validate();
    ExperimentResult result;
    result.config = config;
    const auto theta_const = VertexWeightSpec::constant(1.0);
    if (!config.theta.is_constant())
        result.warnings.push_back("fig2 keeps vertex weights constant; the configured theta "
                                  "spec is ignored");

    std::vector<TrialRecord> panel_a(config.trials);
    run_parallel(config.trials, config.threads, [&](long t) {
        auto [g, rejections] =
            draw_digraph(config, theta_const, config.edge_law, "fig2/a", config.panel_n, t);
        const SolveReport sol = stationary_kernel_power(build_kernel(g));
        TrialRecord rec = make_record(config, config.panel_n, std::nullopt, t, rejections);
        add_curve(rec, "scaled_piP", descending_scaled(sol.pi));
        rec.metrics["tv_piP_u"] = tv_distance(sol.pi, ProbabilityVector::uniform(g.size()));
        rec.metrics["residual_piP"] = sol.residual;
        panel_a[t] = std::move(rec);
    });
    result.panels.push_back(make_panel("a", std::move(panel_a)));

    const long cells = static_cast<long>(config.n_grid.size()) * config.trials;
    std::vector<TrialRecord> panel_b(cells);
    run_parallel(cells, config.threads, [&](long i) {
        const long n = config.n_grid[static_cast<std::size_t>(i / config.trials)];
        const long t = i % config.trials;
        auto [g, rejections] = draw_digraph(config, theta_const, config.edge_law, "fig2/b", n, t);
        const auto uniform = ProbabilityVector::uniform(n);
        const SolveReport sol_p = stationary_kernel_power(build_kernel(g));
        const SolveReport sol_jump = stationary_kernel_power(build_jump_kernel(g));
        const auto pi_q =
            ProbabilityVector::normalized(sol_jump.pi.values().cwiseQuotient(exit_rates(g)));
        TrialRecord rec = make_record(config, n, std::nullopt, t, rejections);
        rec.metrics["tv_piP_u"] = tv_distance(sol_p.pi, uniform);
        rec.metrics["tv_piQhat_u"] = tv_distance(sol_jump.pi, uniform);
        rec.metrics["tv_piQ_u"] = tv_distance(pi_q, uniform);
        rec.metrics["residual_piP"] = sol_p.residual;
        rec.metrics["residual_piQhat"] = sol_jump.residual;
        panel_b[i] = std::move(rec);
    });
    result.panels.push_back(make_panel("b", std::move(panel_b)));

    const long sweep = static_cast<long>(config.alpha_grid.size()) * config.trials;
    std::vector<TrialRecord> panel_c(sweep);
    run_parallel(sweep, config.threads, [&](long i) {
        const double alpha = config.alpha_grid[static_cast<std::size_t>(i / config.trials)];
        const long t = i % config.trials;
        const WeightLaw law = WeightLaw::inverse_power(alpha);
        const std::string tag = "fig2/c/alpha=" + format_double(alpha);
        auto [g, rejections] = draw_digraph(config, theta_const, law, tag, config.panel_n, t);
        const SolveReport sol = stationary_direct(build_kernel(g));
        TrialRecord rec = make_record(config, config.panel_n, alpha, t, rejections);
        rec.metrics["tv_piP_u"] = tv_distance(sol.pi, ProbabilityVector::uniform(g.size()));
        rec.metrics["residual_piP"] = sol.residual;
        panel_c[i] = std::move(rec);
    });
    result.panels.push_back(make_panel("c", std::move(panel_c)));

    result.total_rejections = count_rejections(result);
    return result;
}

ExperimentResult run_rate(const ExperimentConfig& config) {
    config.validate();
    ExperimentResult result;
    result.config = config;

    const long cells = static_cast<long>(config.n_grid.size()) * config.trials;
    std::vector<TrialRecord> curves(cells);
    run_parallel(cells, config.threads, [&](long i) {
        const long n = config.n_grid[static_cast<std::size_t>(i / config.trials)];
        const long t = i % config.trials;
        auto [g, rejections] = draw_digraph(config, config.theta, config.edge_law, "rate", n, t);
        const GeneratorMatrix q = build_generator(g);
        const SolveReport sol = stationary_generator(q, GeneratorMethod::via_jump);
        const auto nu_q = reciprocal_distribution(exit_rates(g));
        const auto nu_theta = reciprocal_distribution(g.theta);
        TrialRecord rec = make_record(config, n, std::nullopt, t, rejections);
        rec.metrics["tv_piQ_nuq"] = tv_distance(sol.pi, nu_q);
        rec.metrics["tv_piQ_nutheta"] = tv_distance(sol.pi, nu_theta);
        rec.metrics["tv_nuq_nutheta"] = tv_distance(nu_q, nu_theta);
        rec.metrics["residual_piQ"] = sol.residual;
        curves[i] = std::move(rec);
    });
    Panel panel = make_panel("curves", std::move(curves));

    for (const char* metric : {"tv_piQ_nuq", "tv_piQ_nutheta", "tv_nuq_nutheta"}) {
        std::vector<std::pair<double, double>> points;
        for (const auto& agg : panel.aggregates) {
            const auto it = agg.mean_std.find(metric);
            if (it != agg.mean_std.end() && it->second.first > 0.0)
                points.emplace_back(static_cast<double>(agg.n), it->second.first);
        }
        result.rate_fits.push_back(
            {metric, loglog_slope(points), static_cast<long>(points.size())});
    }
    result.panels.push_back(std::move(panel));
    result.total_rejections = count_rejections(result);
    return result;
}

ExperimentResult run_lemma_suite(const ExperimentConfig& config) {
    config.validate();
    ExperimentResult result;
    result.config = config;
    const auto theta_const = VertexWeightSpec::constant(1.0);
    const LawMoments moments = config.edge_law.moments();
    const double mean = moments.mean;

    const long cells = static_cast<long>(config.n_grid.size()) * config.trials;
    std::vector<TrialRecord> stats_records(cells);
    run_parallel(cells, config.threads, [&](long i) {
        const long n = config.n_grid[static_cast<std::size_t>(i / config.trials)];
        const long t = i % config.trials;
        auto [g, rejections] =
            draw_digraph(config, theta_const, config.edge_law, "lemmas/stats", n, t);
        const KernelMatrix jump = build_jump_kernel(g);
        const SolveReport sol = stationary_kernel_power(jump);
        const LemmaStatistics stats = compute_lemma_statistics(g, jump, sol.pi, mean);
        TrialRecord rec = make_record(config, n, std::nullopt, t, rejections);
        if (stats.max_centered_rowsum) rec.metrics["max_centered_rowsum"] = *stats.max_centered_rowsum;
        rec.metrics["min_offdiag_rowsum"] = stats.min_offdiag_rowsum;
        rec.metrics["max_rowsum"] = stats.max_rowsum;
        rec.metrics["max_row_l2"] = stats.max_row_l2;
        rec.metrics["max_entry"] = stats.max_entry;
        rec.metrics["min_two_step"] = stats.min_two_step;
        rec.metrics["linf_jump_gap"] = stats.linf_jump_gap;
        rec.metrics["residual_piQhat"] = sol.residual;
        stats_records[i] = std::move(rec);
    });
    Panel stats_panel = make_panel("stats", std::move(stats_records));

    const bool has_mean = std::isfinite(mean);
    const bool tail_ok = has_mean && mean > 0.0 && std::isfinite(moments.variance) &&
                         moments.variance > 0.0;
    const bool p_above_4 = moments.max_order > 4.0;
    const bool p_above_2 = moments.max_order > 2.0;
    const char* kSkip = "skipped: moment precondition";

    // Lower-tail Monte Carlo cells.
    constexpr long kNTail = static_cast<long>(std::size(kLowerTailN));
    constexpr long kETail = static_cast<long>(std::size(kLowerTailEps));
    std::vector<TrialRecord> tail_records;
    std::vector<LemmaVerdict> tail_verdicts(kNTail * kETail);
    if (tail_ok) {
        tail_records.resize(kNTail * kETail);
        run_parallel(kNTail * kETail, config.threads, [&](long i) {
            const long n = kLowerTailN[i / kETail];
            const double eps = kLowerTailEps[i % kETail];
            const double bound = chernoff_bound(mean, moments.variance, n, eps);
            RngStream stream(config.master_seed, "lemmas/lower_tail/eps=" + format_double(eps),
                             static_cast<std::uint64_t>(n));
            const double freq =
                empirical_lower_tail(config.edge_law, n, eps, config.mc_trials, stream);
            const double slack =
                3.0 * std::sqrt(bound / static_cast<double>(config.mc_trials));
            TrialRecord rec = make_record(config, n, eps, 0, 0);
            rec.metrics["lower_tail_bound"] = bound;
            rec.metrics["lower_tail_empirical"] = freq;
            tail_records[i] = std::move(rec);
            tail_verdicts[i] = {"lower_tail_bound", n, eps, freq,
                                "<= bound + 3 sqrt(bound/mc_trials)", bound + slack,
                                freq <= bound + slack ? "pass" : "fail"};
        });
    } else {
        for (long i = 0; i < kNTail * kETail; ++i)
            tail_verdicts[i] = {"lower_tail_bound", kLowerTailN[i / kETail],
                                kLowerTailEps[i % kETail], 0.0, "", 0.0, kSkip};
    }

    // Envelope verdicts across the grid, one row per (check, n).
    auto& verdicts = result.verdicts;
    const double tol = 1e-12;

    if (has_mean) {
        const auto meds = metric_medians(stats_panel, "max_centered_rowsum");
        double prev = std::numeric_limits<double>::infinity();
        for (const long n : config.n_grid) {
            const double stat = meds.at(n) / static_cast<double>(n);
            verdicts.push_back({"centered_rowsum_decay", n, std::nullopt, stat,
                                "<= previous grid value", prev,
                                stat <= prev + tol ? "pass" : "fail"});
            prev = stat;
        }
    } else {
        for (const long n : config.n_grid)
            verdicts.push_back({"centered_rowsum_decay", n, std::nullopt, 0.0, "", 0.0, kSkip});
    }

    for (auto& v : tail_verdicts) verdicts.push_back(std::move(v));

    if (p_above_4) {
        const auto meds = metric_medians(stats_panel, "max_row_l2");
        double grid_min = std::numeric_limits<double>::infinity();
        for (const long n : config.n_grid) grid_min = std::min(grid_min, n * meds.at(n));
        for (const long n : config.n_grid) {
            const double stat = n * meds.at(n);
            verdicts.push_back({"row_l2_scaling", n, std::nullopt, stat,
                                "<= 3 x grid minimum", 3.0 * grid_min,
                                stat <= 3.0 * grid_min ? "pass" : "fail"});
        }
        const auto entry_meds = metric_medians(stats_panel, "max_entry");
        for (const long n : config.n_grid) {
            const double stat = n * entry_meds.at(n) / std::log(static_cast<double>(n));
            verdicts.push_back({"max_entry_scaling", n, std::nullopt, stat, "<= envelope cap",
                                kMaxEntryCap, stat <= kMaxEntryCap ? "pass" : "fail"});
        }
        const auto gap_meds = metric_medians(stats_panel, "linf_jump_gap");
        for (const long n : config.n_grid) {
            const double stat = std::pow(static_cast<double>(n), 1.4) * gap_meds.at(n);
            verdicts.push_back({"jump_uniformity_linf", n, std::nullopt, stat, "<= envelope cap",
                                kJumpGapCap, stat <= kJumpGapCap ? "pass" : "fail"});
        }
    } else {
        for (const char* check : {"row_l2_scaling", "max_entry_scaling", "jump_uniformity_linf"})
            for (const long n : config.n_grid)
                verdicts.push_back({check, n, std::nullopt, 0.0, "", 0.0, kSkip});
    }

    if (p_above_2) {
        const auto meds = metric_medians(stats_panel, "min_two_step");
        double prev = 0.0;
        for (const long n : config.n_grid) {
            const double stat = n * meds.at(n);
            const bool ok = stat >= 0.5 - tol && stat <= 1.0 + tol && stat >= prev - tol;
            verdicts.push_back({"two_step_floor", n, std::nullopt, stat,
                                "in [0.5, 1], non-decreasing", 1.0, ok ? "pass" : "fail"});
            prev = stat;
        }
    } else {
        for (const long n : config.n_grid)
            verdicts.push_back({"two_step_floor", n, std::nullopt, 0.0, "", 0.0, kSkip});
    }

    result.panels.push_back(std::move(stats_panel));
    if (!tail_records.empty())
        result.panels.push_back(make_panel("lower_tail", std::move(tail_records)));
    result.total_rejections = count_rejections(result);
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
    switch (config.experiment) {
        case ExperimentKind::fig1: return run_fig1(config);
        case ExperimentKind::fig2: return run_fig2(config);
        case ExperimentKind::rate: return run_rate(config);
        case ExperimentKind::lemmas: return run_lemma_suite(config);
    }
    throw std::logic_error("unreachable experiment kind");
}

bool all_verdicts_pass(const ExperimentResult& result) {
    for (const auto& v : result.verdicts)
        if (v.verdict == "fail") return false;
    return true;
}

const Panel& find_panel(const ExperimentResult& result, std::string_view name) {
    for (const auto& panel : result.panels)
        if (panel.name == name) return panel;
    throw std::out_of_range("no panel named '" + std::string(name) + "'");
}

namespace {

void atomic_write(const fs::path& path, const std::string& content) {
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

std::string panel_csv(const ExperimentResult& result, const Panel& panel) {
    const std::string experiment(to_string(result.config.experiment));
    std::string out = "experiment,n,alpha,trial,metric,value,std\n";
    const auto alpha_text = [](const std::optional<double>& alpha) {
        return alpha ? format_double(*alpha) : std::string();
    };
    for (const auto& rec : panel.trials)
        for (const auto& [metric, value] : rec.metrics)
            out += experiment + ',' + std::to_string(rec.n) + ',' + alpha_text(rec.alpha) + ',' +
                   std::to_string(rec.trial) + ',' + metric + ',' + format_double(value) + ",\n";
    for (const auto& agg : panel.aggregates)
        for (const auto& [metric, ms] : agg.mean_std)
            out += experiment + ',' + std::to_string(agg.n) + ',' + alpha_text(agg.alpha) +
                   ",aggregate," + metric + ',' + format_double(ms.first) + ',' +
                   format_double(ms.second) + '\n';
    return out;
}

std::string fits_csv(const ExperimentResult& result) {
    std::string out = "experiment,metric,slope,intercept,r_squared,points,reference_slope\n";
    const std::string experiment(to_string(result.config.experiment));
    for (const auto& fit : result.rate_fits)
        out += experiment + ',' + fit.metric + ',' + format_double(fit.fit.slope) + ',' +
               format_double(fit.fit.intercept) + ',' + format_double(fit.fit.r_squared) + ',' +
               std::to_string(fit.points) + ',' +
               format_double(-result.config.rate_exponent) + '\n';
    return out;
}

std::string verdicts_csv(const ExperimentResult& result) {
    std::string out = "experiment,lemma,n,eps,statistic,comparison,threshold,verdict\n";
    const std::string experiment(to_string(result.config.experiment));
    for (const auto& v : result.verdicts)
        out += experiment + ',' + v.lemma + ',' + std::to_string(v.n) + ',' +
               (v.eps ? format_double(*v.eps) : std::string()) + ',' +
               format_double(v.statistic) + ',' + "\"" + v.comparison + "\"" + ',' +
               format_double(v.threshold) + ',' + v.verdict + '\n';
    return out;
}

}  // namespace

std::vector<std::string> write_experiment_outputs(const ExperimentResult& result,
                                                  const std::filesystem::path& out_dir,
                                                  double wall_seconds) {
    fs::create_directories(out_dir);
    const std::string experiment(to_string(result.config.experiment));
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& panel : result.panels)
        files.emplace_back(experiment + "_" + panel.name + ".csv", panel_csv(result, panel));
    if (!result.rate_fits.empty()) files.emplace_back(experiment + "_fit.csv", fits_csv(result));
    if (!result.verdicts.empty())
        files.emplace_back(experiment + "_verdicts.csv", verdicts_csv(result));

    nlohmann::json manifest;
    manifest["experiment"] = experiment;
    manifest["version"] = MARKOVLAB_VERSION;
    manifest["config"] = result.config.to_key_values();
    manifest["rejections"] = result.total_rejections;
    manifest["warnings"] = result.warnings;
    std::vector<std::string> names;
    for (const auto& [name, content] : files) names.push_back(name);
    manifest["files"] = names;
    manifest["wall_time_seconds"] = wall_seconds;
    files.emplace_back(experiment + "_manifest.json", manifest.dump(2) + "\n");
    names.push_back(files.back().first);

    for (const auto& [name, content] : files) atomic_write(out_dir / name, content);
    return names;
}

}  // namespace markovlab
