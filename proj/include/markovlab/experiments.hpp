#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "markovlab/metrics.hpp"
#include "markovlab/stationary_solvers.hpp"

namespace markovlab {

enum class ExperimentKind { fig1, fig2, rate, lemmas };
std::string_view to_string(ExperimentKind kind);
ExperimentKind experiment_from_string(std::string_view name);

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::fig1;
    WeightLaw edge_law = WeightLaw::exponential(1.0);
    VertexWeightSpec theta = VertexWeightSpec::iid(WeightLaw::exponential(1.0));
    std::vector<long> n_grid;
    std::vector<double> alpha_grid;
    long panel_n = 100;               // size used by the fixed-n panels
    long trials = 10;
    std::uint64_t master_seed = 12345;
    double rate_exponent = 0.4;       // reference decay slope for the rate report
    long mc_trials = 100000;          // lower-tail Monte Carlo sample count
    bool fix_theta = false;           // reuse one theta draw across trials
    bool allow_degenerate = false;    // permit the constant fixture law
    int threads = 0;                  // worker threads; 0 = hardware concurrency

    static ExperimentConfig defaults(ExperimentKind kind);
    void validate() const;
    std::map<std::string, std::string> to_key_values() const;
};

// Applies one config key; returns false when the key is unknown, throws on a
// malformed value.
bool apply_config_key(ExperimentConfig& config, const std::string& key,
                      const std::string& value);

struct TrialRecord {
    std::string experiment;
    long n = 0;
    std::optional<double> alpha;  // sweep parameter (tail exponent, or eps)
    long trial = 0;
    long rejections = 0;
    std::map<std::string, double> metrics;
};

struct AggregateRecord {
    long n = 0;
    std::optional<double> alpha;
    long trials = 0;
    std::map<std::string, std::pair<double, double>> mean_std;
};

// Groups records by (n, alpha). Records are sorted first, so the result does
// not depend on input order.
std::vector<AggregateRecord> aggregate_records(std::vector<TrialRecord> records);

struct Panel {
    std::string name;
    std::vector<TrialRecord> trials;
    std::vector<AggregateRecord> aggregates;
};

struct RateFit {
    std::string metric;
    LogLogFit fit;
    long points = 0;
};

struct LemmaVerdict {
    std::string lemma;
    long n = 0;
    std::optional<double> eps;
    double statistic = 0;
    std::string comparison;
    double threshold = 0;
    std::string verdict;  // pass | fail | skipped: moment precondition
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<Panel> panels;
    std::vector<RateFit> rate_fits;      // rate experiment only
    std::vector<LemmaVerdict> verdicts;  // lemma suite only
    std::vector<std::string> warnings;
    long total_rejections = 0;
};

ExperimentResult run_fig1(const ExperimentConfig& config);
ExperimentResult run_fig2(const ExperimentConfig& config);
ExperimentResult run_rate(const ExperimentConfig& config);
ExperimentResult run_lemma_suite(const ExperimentConfig& config);
ExperimentResult run_experiment(const ExperimentConfig& config);

bool all_verdicts_pass(const ExperimentResult& result);

const Panel& find_panel(const ExperimentResult& result, std::string_view name);

// One CSV per panel plus a JSON manifest, written atomically; returns the
// file names.
std::vector<std::string> write_experiment_outputs(const ExperimentResult& result,
                                                  const std::filesystem::path& out_dir,
                                                  double wall_seconds);

}  // namespace markovlab
