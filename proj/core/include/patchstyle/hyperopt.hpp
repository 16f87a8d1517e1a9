#pragma once

#include <compare>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "patchstyle/dataset.hpp"
#include "patchstyle/train_config.hpp"
#include "patchstyle/trainer.hpp"

namespace patchstyle {

/// One point of the search grid: (W_p, N_b, alpha, N_r).
struct Setting {
    int patch_size = 36;
    int batch_size = 40;
    double learning_rate = 0.0004;
    int resnet_blocks = 7;

    nlohmann::json to_json() const;
    static Setting from_json(const nlohmann::json& j);
    std::string key() const;

    friend auto operator<=>(const Setting&, const Setting&) = default;
};

struct SearchAxes {
    std::vector<int> patch_size{36};
    std::vector<int> batch_size{40};
    std::vector<double> learning_rate{0.0004};
    std::vector<int> resnet_blocks{7};

    size_t size() const noexcept;
    /// Cartesian product in lexicographic order.
    std::vector<Setting> settings() const;

    /// Three to four values per axis around (36, 40, 0.0004, 7).
    static SearchAxes desk_scale();
    /// The full intervals, sampled on the coarse grid the harness accepts.
    static SearchAxes paper_intervals();
};

enum class ResultStatus { ok, constraint_violated, failed };
std::string to_string(ResultStatus status);
ResultStatus parse_result_status(const std::string& text);

struct SearchResult {
    Setting setting;
    std::optional<LossBreakdown> loss;  // absent unless evaluated
    double inference_seconds = 0.0;
    ResultStatus status = ResultStatus::failed;
    std::string message;

    nlohmann::json to_json() const;
    static SearchResult from_json(const nlohmann::json& j);
};

struct SearchSpec {
    SearchAxes axes;
    double train_budget_seconds = 30.0;       // T_t
    double inference_budget_seconds = 0.06;   // T_i, per frame
    std::optional<int64_t> train_steps;       // replaces T_t with a step budget when set
    TrainConfig base;                         // everything not on an axis
    std::vector<Keyframe> keyframes;
    std::vector<EvalPair> eval_pairs;
    int workers = 1;
    std::filesystem::path results_path;
    bool allow_out_of_range = false;

    /// Throws Error(config) on empty axes, non-positive budgets or out-of-interval values.
    void validate() const;
    /// Whether the grid fits a workstation run (at most `desk_scale_limit` settings).
    bool desk_scale() const noexcept;
    TrainConfig config_for(const Setting& setting) const;

    static constexpr size_t desk_scale_limit = 256;
};

/// Reads a JSON search spec. Paths are resolved against the spec's directory.
SearchSpec read_search_spec(const std::filesystem::path& path);

/// Produces the result for one setting. Implementations must be safe to call from
/// several threads at once.
class SettingEvaluator {
public:
    virtual ~SettingEvaluator() = default;
    /// Throws Error(config) when the spec lacks inputs this evaluator needs.
    virtual void check(const SearchSpec& spec) const;
    virtual SearchResult evaluate(const Setting& setting, const SearchSpec& spec) const = 0;
};

/// Trains under T_t (or the step budget), times full-frame inference at the
/// evaluation frame size and scores survivors against the reference frames.
class TrainingEvaluator : public SettingEvaluator {
public:
    void check(const SearchSpec& spec) const override;
    SearchResult evaluate(const Setting& setting, const SearchSpec& spec) const override;
};

/// Analytic stand-in for tests and dry runs: loss is a quadratic bowl in
/// (W_p, N_b) with its minimum at `optimum`, inference time is supplied by a function.
class SurrogateEvaluator : public SettingEvaluator {
public:
    SurrogateEvaluator(std::pair<double, double> optimum = {36.0, 40.0},
                       std::function<double(const Setting&)> inference_seconds = nullptr);
    SearchResult evaluate(const Setting& setting, const SearchSpec& spec) const override;
    double loss(const Setting& setting) const;

private:
    std::pair<double, double> optimum_;
    std::function<double(const Setting&)> inference_seconds_;
};

/// Marks the outcome against the inference budget: `ok` only when measured time <= T_i.
ResultStatus classify(double inference_seconds, double budget_seconds);

/// Append-only JSON-lines store. Unparseable lines (torn writes) are ignored on load.
class ResultsFile {
public:
    explicit ResultsFile(std::filesystem::path path);
    std::vector<SearchResult> load() const;
    void append(const SearchResult& result);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::mutex mutex_;
};

struct GridSearchOptions {
    /// Stops after this many new results (simulates an interruption).
    std::optional<size_t> stop_after;
};

/// Evaluates every setting not already in the results file, appending each result as
/// soon as it is known, and returns all results sorted by total loss (ties by setting;
/// unevaluated results last).
std::vector<SearchResult> run_grid_search(const SearchSpec& spec, const SettingEvaluator& evaluator,
                                          const GridSearchOptions& options = {});

void sort_results(std::vector<SearchResult>& results);

struct CurvePoint {
    double value = 0.0;
    double min_loss = 0.0;
    double mean_loss = 0.0;
    size_t count = 0;
};

/// Marginal loss curve along one axis ("W_p", "N_b", "alpha", "N_r") over `ok` results.
std::vector<CurvePoint> summarize(const std::vector<SearchResult>& results, const std::string& axis);
std::string curve_csv(const std::vector<CurvePoint>& curve);

}  // namespace patchstyle
