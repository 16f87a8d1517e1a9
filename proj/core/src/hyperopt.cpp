#include "patchstyle/hyperopt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "patchstyle/error.hpp"
#include "patchstyle/inference.hpp"
#include "patchstyle/thread_pool.hpp"

namespace patchstyle {

nlohmann::json Setting::to_json() const {
    return {{"W_p", patch_size}, {"N_b", batch_size}, {"alpha", learning_rate}, {"N_r", resnet_blocks}};
}

Setting Setting::from_json(const nlohmann::json& j) {
    Setting s;
    s.patch_size = j.at("W_p").get<int>();
    s.batch_size = j.at("N_b").get<int>();
    s.learning_rate = j.at("alpha").get<double>();
    s.resnet_blocks = j.at("N_r").get<int>();
    return s;
}

std::string Setting::key() const { return to_json().dump(); }

size_t SearchAxes::size() const noexcept {
    return patch_size.size() * batch_size.size() * learning_rate.size() * resnet_blocks.size();
}

std::vector<Setting> SearchAxes::settings() const {
    std::vector<Setting> out;
    out.reserve(size());
    for (int wp : patch_size)
        for (int nb : batch_size)
            for (double lr : learning_rate)
                for (int nr : resnet_blocks) out.push_back({wp, nb, lr, nr});
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

SearchAxes SearchAxes::desk_scale() {
    return {{24, 36, 48}, {20, 40, 80}, {0.0002, 0.0004, 0.0008}, {3, 7, 11}};
}

SearchAxes SearchAxes::paper_intervals() {
    SearchAxes a;
    a.patch_size.clear();
    for (int w = HyperParameterRange::patch_min; w <= HyperParameterRange::patch_max; w += 4) a.patch_size.push_back(w);
    a.batch_size = {5, 10, 20, 40, 80, 160, 320, 640, 1000};
    a.learning_rate = {0.0002, 0.0004, 0.0008, 0.0016, 0.0032};
    a.resnet_blocks.clear();
    for (int n = HyperParameterRange::blocks_min; n <= HyperParameterRange::blocks_max; ++n) a.resnet_blocks.push_back(n);
    return a;
}

std::string to_string(ResultStatus status) {
    switch (status) {
        case ResultStatus::ok: return "ok";
        case ResultStatus::constraint_violated: return "constraint-violated";
        case ResultStatus::failed: return "failed";
    }
    return "failed";
}

ResultStatus parse_result_status(const std::string& text) {
    if (text == "ok") return ResultStatus::ok;
    if (text == "constraint-violated") return ResultStatus::constraint_violated;
    if (text == "failed") return ResultStatus::failed;
    throw Error(ErrorCode::config, "unknown result status '" + text + "'");
}

nlohmann::json SearchResult::to_json() const {
    nlohmann::json j{{"setting", setting.to_json()},
                     {"inference_seconds", inference_seconds},
                     {"status", to_string(status)}};
    j["loss"] = loss ? loss->to_json() : nlohmann::json(nullptr);
    if (!message.empty()) j["message"] = message;
    return j;
}

SearchResult SearchResult::from_json(const nlohmann::json& j) {
    SearchResult r;
    r.setting = Setting::from_json(j.at("setting"));
    r.inference_seconds = j.value("inference_seconds", 0.0);
    r.status = parse_result_status(j.at("status").get<std::string>());
    if (j.contains("loss") && !j.at("loss").is_null()) r.loss = LossBreakdown::from_json(j.at("loss"));
    r.message = j.value("message", std::string());
    return r;
}

void SearchSpec::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::config, m); };
    if (axes.patch_size.empty() || axes.batch_size.empty() || axes.learning_rate.empty() ||
        axes.resnet_blocks.empty()) {
        fail("every search axis needs at least one value");
    }
    if (!(train_budget_seconds > 0.0)) fail("training budget T_t must be positive");
    if (!(inference_budget_seconds > 0.0)) fail("inference budget T_i must be positive");
    if (train_steps && *train_steps <= 0) fail("step budget must be positive");
    if (workers < 1) fail("workers must be >= 1");
    for (const Setting& s : axes.settings()) config_for(s).validate();
}

bool SearchSpec::desk_scale() const noexcept { return axes.size() <= desk_scale_limit; }

TrainConfig SearchSpec::config_for(const Setting& setting) const {
    TrainConfig c = base;
    c.patch_size = setting.patch_size;
    c.batch_size = setting.batch_size;
    c.learning_rate = setting.learning_rate;
    c.resnet_blocks = setting.resnet_blocks;
    c.budget = train_steps ? Budget::of_steps(*train_steps) : Budget::of_seconds(train_budget_seconds);
    c.allow_out_of_range = allow_out_of_range || base.allow_out_of_range;
    return c;
}

SearchSpec read_search_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io, "cannot open search spec " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config, "invalid search spec JSON: " + std::string(e.what()));
    }
    const auto base_dir = path.parent_path();
    auto resolve = [&](const std::string& p) {
        std::filesystem::path q(p);
        return q.is_absolute() ? q : base_dir / q;
    };

    SearchSpec spec;
    try {
        if (j.contains("train")) spec.base = TrainConfig::from_json(j.at("train"));
        spec.axes.patch_size = {spec.base.patch_size};
        spec.axes.batch_size = {spec.base.batch_size};
        spec.axes.learning_rate = {spec.base.learning_rate};
        spec.axes.resnet_blocks = {spec.base.resnet_blocks};
        if (j.contains("axes")) {
            const auto& a = j.at("axes");
            if (a.contains("W_p")) spec.axes.patch_size = a.at("W_p").get<std::vector<int>>();
            if (a.contains("N_b")) spec.axes.batch_size = a.at("N_b").get<std::vector<int>>();
            if (a.contains("alpha")) spec.axes.learning_rate = a.at("alpha").get<std::vector<double>>();
            if (a.contains("N_r")) spec.axes.resnet_blocks = a.at("N_r").get<std::vector<int>>();
        }
        spec.train_budget_seconds = j.value("train_budget", spec.train_budget_seconds);
        spec.inference_budget_seconds = j.value("inference_budget", spec.inference_budget_seconds);
        if (j.contains("train_steps")) spec.train_steps = j.at("train_steps").get<int64_t>();
        spec.workers = j.value("workers", spec.workers);
        spec.allow_out_of_range = j.value("allow_out_of_range", false);
        if (j.contains("results")) spec.results_path = resolve(j.at("results").get<std::string>());

        if (j.contains("sequence")) {
            std::optional<std::filesystem::path> masks;
            if (j.contains("masks")) masks = resolve(j.at("masks").get<std::string>());
            Sequence seq = load_sequence(resolve(j.at("sequence").get<std::string>()), masks);
            if (j.contains("guidance")) load_guidance(seq, resolve(j.at("guidance").get<std::string>()));
            auto specs = keyframe_specs_from_json(j.at("keyframes"), base_dir);
            spec.keyframes = load_keyframes(seq, specs);
        }
        if (j.contains("eval_pairs")) {
            for (const auto& p : j.at("eval_pairs")) {
                EvalPair pair;
                pair.input = read_image_rgb(resolve(p.at("input").get<std::string>()));
                if (p.contains("guidance")) {
                    pair.input = concat_channels(pair.input, read_image_rgb(resolve(p.at("guidance").get<std::string>())));
                }
                pair.reference = read_image_rgb(resolve(p.at("reference").get<std::string>()));
                if (p.contains("mask")) pair.mask = read_mask(resolve(p.at("mask").get<std::string>()));
                spec.eval_pairs.push_back(std::move(pair));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::config, "invalid search spec: " + std::string(e.what()));
    }
    return spec;
}

void SettingEvaluator::check(const SearchSpec&) const {}

void TrainingEvaluator::check(const SearchSpec& spec) const {
    if (spec.keyframes.empty()) throw Error(ErrorCode::config, "search spec has no training keyframes");
    if (spec.eval_pairs.empty()) throw Error(ErrorCode::config, "search spec has no evaluation pairs");
}

SearchResult TrainingEvaluator::evaluate(const Setting& setting, const SearchSpec& spec) const {
    SearchResult result;
    result.setting = setting;
    try {
        Checkpoint ckpt = train(spec.keyframes, spec.config_for(setting));
        Stylizer stylizer(ckpt);
        const Image& probe = spec.eval_pairs.front().input;
        InferenceTiming timing = measure_inference(stylizer, probe.width, probe.height);
        result.inference_seconds = timing.median_ms / 1000.0;
        result.status = classify(result.inference_seconds, spec.inference_budget_seconds);
        if (result.status == ResultStatus::ok) result.loss = patchstyle::evaluate(ckpt, spec.eval_pairs);
    } catch (const std::exception& e) {
        result.status = ResultStatus::failed;
        result.loss.reset();
        result.message = e.what();
    }
    return result;
}

SurrogateEvaluator::SurrogateEvaluator(std::pair<double, double> optimum,
                                       std::function<double(const Setting&)> inference_seconds)
    : optimum_(optimum), inference_seconds_(std::move(inference_seconds)) {
    if (!inference_seconds_) {
        inference_seconds_ = [](const Setting& s) { return 0.005 * s.resnet_blocks; };
    }
}

double SurrogateEvaluator::loss(const Setting& s) const {
    double a = (s.patch_size - optimum_.first) / optimum_.first;
    double b = (s.batch_size - optimum_.second) / optimum_.second;
    return a * a + b * b;
}

SearchResult SurrogateEvaluator::evaluate(const Setting& setting, const SearchSpec& spec) const {
    SearchResult r;
    r.setting = setting;
    r.inference_seconds = inference_seconds_(setting);
    r.status = classify(r.inference_seconds, spec.inference_budget_seconds);
    if (r.status == ResultStatus::ok) {
        LossBreakdown l;
        l.l1 = l.total = loss(setting);
        r.loss = l;
    }
    return r;
}

ResultStatus classify(double inference_seconds, double budget_seconds) {
    return inference_seconds <= budget_seconds ? ResultStatus::ok : ResultStatus::constraint_violated;
}

ResultsFile::ResultsFile(std::filesystem::path path) : path_(std::move(path)) {}

std::vector<SearchResult> ResultsFile::load() const {
    std::vector<SearchResult> out;
    std::ifstream in(path_);
    if (!in) return out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            out.push_back(SearchResult::from_json(nlohmann::json::parse(line)));
        } catch (const std::exception&) {
            // A torn final line from an interrupted writer.
        }
    }
    return out;
}

void ResultsFile::append(const SearchResult& result) {
    std::lock_guard lock(mutex_);
    // Start on a fresh line when an interrupted writer left a torn record behind.
    bool torn = false;
    {
        std::ifstream in(path_, std::ios::binary | std::ios::ate);
        if (in && in.tellg() > 0) {
            in.seekg(-1, std::ios::end);
            torn = in.get() != '\n';
        }
    }
    std::ofstream out(path_, std::ios::app);
    if (torn) out << '\n';
    if (!out) throw Error(ErrorCode::io, "cannot write results file " + path_.string());
    out << result.to_json().dump() << '\n';
    out.flush();
    if (!out) throw Error(ErrorCode::io, "failed writing results file " + path_.string());
}

void sort_results(std::vector<SearchResult>& results) {
    auto rank = [](const SearchResult& r) { return r.status == ResultStatus::ok && r.loss ? 0 : 1; };
    std::sort(results.begin(), results.end(), [&](const SearchResult& a, const SearchResult& b) {
        int ra = rank(a);
        int rb = rank(b);
        if (ra != rb) return ra < rb;
        if (ra == 0 && a.loss->total != b.loss->total) return a.loss->total < b.loss->total;
        return a.setting < b.setting;
    });
}

std::vector<SearchResult> run_grid_search(const SearchSpec& spec, const SettingEvaluator& evaluator,
                                          const GridSearchOptions& options) {
    spec.validate();
    evaluator.check(spec);
    if (spec.results_path.empty()) throw Error(ErrorCode::config, "search spec has no results path");
    {
        std::ofstream probe(spec.results_path, std::ios::app);
        if (!probe) throw Error(ErrorCode::io, "results path is not writable: " + spec.results_path.string());
    }
    ResultsFile file(spec.results_path);
    std::vector<SearchResult> results = file.load();
    std::set<std::string> done;
    for (const auto& r : results) done.insert(r.setting.key());

    std::vector<Setting> pending;
    for (const Setting& s : spec.axes.settings()) {
        if (!done.count(s.key())) pending.push_back(s);
    }
    if (options.stop_after && *options.stop_after < pending.size()) pending.resize(*options.stop_after);

    std::vector<SearchResult> fresh(pending.size());
    parallel_for(pending.size(), spec.workers, [&](size_t i) {
        fresh[i] = evaluator.evaluate(pending[i], spec);
        file.append(fresh[i]);
    });
    results.insert(results.end(), fresh.begin(), fresh.end());
    sort_results(results);
    return results;
}

std::vector<CurvePoint> summarize(const std::vector<SearchResult>& results, const std::string& axis) {
    std::function<double(const Setting&)> value;
    if (axis == "W_p" || axis == "patch_size") {
        value = [](const Setting& s) { return static_cast<double>(s.patch_size); };
    } else if (axis == "N_b" || axis == "batch_size") {
        value = [](const Setting& s) { return static_cast<double>(s.batch_size); };
    } else if (axis == "alpha" || axis == "learning_rate") {
        value = [](const Setting& s) { return s.learning_rate; };
    } else if (axis == "N_r" || axis == "resnet_blocks") {
        value = [](const Setting& s) { return static_cast<double>(s.resnet_blocks); };
    } else {
        throw Error(ErrorCode::config, "unknown axis '" + axis + "'");
    }
    std::map<double, CurvePoint> curve;
    for (const auto& r : results) {
        if (r.status != ResultStatus::ok || !r.loss) continue;
        double v = value(r.setting);
        auto [it, inserted] = curve.try_emplace(v, CurvePoint{v, r.loss->total, 0.0, 0});
        CurvePoint& p = it->second;
        p.min_loss = std::min(p.min_loss, r.loss->total);
        p.mean_loss += r.loss->total;
        ++p.count;
    }
    std::vector<CurvePoint> out;
    for (auto& [v, p] : curve) {
        p.mean_loss /= static_cast<double>(p.count);
        out.push_back(p);
    }
    return out;
}

std::string curve_csv(const std::vector<CurvePoint>& curve) {
    std::ostringstream os;
    os.precision(10);
    os << "value,min_loss,mean_loss,count\n";
    for (const auto& p : curve) os << p.value << ',' << p.min_loss << ',' << p.mean_loss << ',' << p.count << '\n';
    return os.str();
}

}  // namespace patchstyle
