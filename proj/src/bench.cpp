#include "edgecast/bench.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "edgecast/error.hpp"
#include "edgecast/parallel.hpp"
#include "edgecast/rng.hpp"

namespace edgecast {

namespace {

using Clock = std::chrono::steady_clock;

double metric_value(const MetricReport& r, std::size_t i) {
    switch (i) {
        case 0: return r.mae;
        case 1: return r.mse;
        case 2: return r.rmse;
        case 3: return r.mape;
        case 4: return r.smape;
        case 5: return r.mase;
        default: return r.r2;
    }
}

void require_rows(const LagDataset& train, const LagDataset& test) {
    if (train.empty()) {
        throw ValidationError("training set is empty");
    }
    if (test.size() < 2) {
        throw ValidationError("test set needs at least two instances, got " + std::to_string(test.size()));
    }
    if (train.window_size != test.window_size) {
        throw ValidationError("train and test window sizes differ");
    }
}

nlohmann::json stat_json(const Stat& s) {
    return {{"mean", s.mean}, {"std", s.std}};
}

Stat stat_from(const nlohmann::json& j) {
    return {j.at("mean").get<double>(), j.at("std").get<double>()};
}

std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

}  // namespace

std::string protocol_name(Protocol p) {
    return p == Protocol::Holdout ? "holdout" : "prequential";
}

Protocol parse_protocol(const std::string& text) {
    if (text == "holdout") {
        return Protocol::Holdout;
    }
    if (text == "prequential") {
        return Protocol::Prequential;
    }
    throw ConfigError("unknown protocol '" + text + "' (expected holdout or prequential)");
}

nlohmann::json RunResult::to_json(bool with_timings) const {
    nlohmann::json metrics = nlohmann::json::object();
    for (std::size_t i = 0; i < std::size(kMetricNames); ++i) {
        metrics[kMetricNames[i]] = metric_value(report, i);
    }
    return {{"protocol", protocol_name(config.protocol)},
            {"model", config.model},
            {"window_size", config.window_size},
            {"seed", config.seed},
            {"pretrain", config.pretrain},
            {"refit_interval", config.refit_interval ? nlohmann::json(*config.refit_interval) : nlohmann::json()},
            {"train_rows", train_rows},
            {"test_rows", test_rows},
            {"metrics", std::move(metrics)},
            {"naive_mae_in_sample", report.naive_mae_in_sample},
            {"footprint",
             with_timings ? nlohmann::json{{"pretrain_seconds", report.footprint.pretrain_seconds},
                                           {"eval_seconds", report.footprint.eval_seconds},
                                           {"model_bytes", report.footprint.model_bytes}}
                          : nlohmann::json{{"model_bytes", report.footprint.model_bytes}}}};
}

double naive_mae_of(const LagDataset& data) {
    if (data.empty() || data.window_size == 0) {
        throw ValidationError("naive MAE needs a nonempty dataset");
    }
    std::vector<double> series;
    series.reserve(data.size() + 1);
    series.push_back(data.instances.front().features.back());
    for (const auto& inst : data.instances) {
        series.push_back(inst.target);
    }
    return naive_mae(series);
}

RunResult run_holdout(const RunConfig& cfg, const LagDataset& train, const LagDataset& test) {
    auto model = make_regressor(cfg.model, cfg.window_size, cfg.seed, cfg.options);
    return run_holdout(*model, cfg, train, test);
}

RunResult run_holdout(Regressor& model, const RunConfig& cfg, const LagDataset& train, const LagDataset& test) {
    if (cfg.refit_interval) {
        throw ConfigError("--refit-interval applies to the prequential protocol only");
    }
    if (cfg.pretrain) {
        throw ConfigError("--pretrain applies to the prequential protocol only");
    }
    require_rows(train, test);
    const double naive = naive_mae_of(train);

    const auto t0 = Clock::now();
    model.fit(train);
    const auto t1 = Clock::now();
    MetricAccumulator acc;
    for (const auto& inst : test.instances) {
        metrics_update(acc, inst.target, model.predict(inst.features));
    }
    const auto t2 = Clock::now();

    RunResult result;
    result.config = cfg;
    result.train_rows = train.size();
    result.test_rows = test.size();
    result.report = metrics_finalize(acc, naive);
    result.report.footprint.pretrain_seconds = seconds_at_ms_resolution(t1 - t0);
    result.report.footprint.eval_seconds = seconds_at_ms_resolution(t2 - t1);
    result.report.footprint.model_bytes = static_cast<double>(model.logical_bytes());
    return result;
}

RunResult run_prequential(const RunConfig& cfg, const LagDataset& train, const LagDataset& test) {
    auto model = make_regressor(cfg.model, cfg.window_size, cfg.seed, cfg.options);
    return run_prequential(*model, cfg, train, test);
}

RunResult run_prequential(Regressor& model, const RunConfig& cfg, const LagDataset& train, const LagDataset& test) {
    const bool batch = !model.is_online();
    if (batch && !cfg.refit_interval) {
        throw ConfigError(model.name() + " is a batch model; prequential runs need --refit-interval");
    }
    if (!batch && cfg.refit_interval) {
        throw ConfigError("--refit-interval applies to batch models only");
    }
    if (cfg.refit_interval && (*cfg.refit_interval == 0 || cfg.refit_window == 0)) {
        throw ConfigError("refit interval and window must be positive");
    }
    require_rows(train, test);
    const double naive = naive_mae_of(train);

    std::deque<const LagInstance*> window;
    bool fitted = false;
    auto refit = [&]() {
        if (window.size() < cfg.window_size + 1) {
            return;
        }
        LagDataset data;
        data.window_size = cfg.window_size;
        data.instances.reserve(window.size());
        for (const auto* inst : window) {
            data.instances.push_back(*inst);
        }
        model.fit(data);
        fitted = true;
    };

    const auto t0 = Clock::now();
    if (cfg.pretrain) {
        if (batch) {
            const std::size_t start = train.size() > cfg.refit_window ? train.size() - cfg.refit_window : 0;
            for (std::size_t i = start; i < train.size(); ++i) {
                window.push_back(&train.instances[i]);
            }
            refit();
        } else {
            model.fit(train);
        }
    }
    const auto t1 = Clock::now();

    MetricAccumulator acc;
    std::size_t since_refit = 0;
    for (const auto& inst : test.instances) {
        const double yhat = batch && !fitted ? inst.features.back() : model.predict(inst.features);
        metrics_update(acc, inst.target, yhat);
        if (batch) {
            window.push_back(&inst);
            if (window.size() > cfg.refit_window) {
                window.pop_front();
            }
            if (++since_refit == *cfg.refit_interval) {
                since_refit = 0;
                refit();
            }
        } else {
            model.learn(inst);
        }
    }
    const auto t2 = Clock::now();

    RunResult result;
    result.config = cfg;
    result.train_rows = train.size();
    result.test_rows = test.size();
    result.report = metrics_finalize(acc, naive);
    result.report.footprint.pretrain_seconds = seconds_at_ms_resolution(t1 - t0);
    result.report.footprint.eval_seconds = seconds_at_ms_resolution(t2 - t1);
    result.report.footprint.model_bytes = static_cast<double>(model.logical_bytes());
    return result;
}

std::uint64_t cell_seed(std::uint64_t suite_seed, const std::string& model, std::size_t window_size,
                        std::size_t seed_index) {
    return mix_seed({suite_seed, fnv1a(model), window_size, seed_index});
}

Stat summarize(const std::vector<double>& values) {
    if (values.empty()) {
        return {};
    }
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t n = 0;
    for (double v : values) {
        ++n;
        const double d = v - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (v - mean);
    }
    return {mean, std::sqrt(std::max(0.0, m2 / static_cast<double>(n)))};
}

std::size_t SummaryReport::failure_count() const {
    std::size_t n = 0;
    for (const auto& c : cells) {
        n += c.failures.size();
    }
    return n;
}

std::string dataset_sha256(const TimeSeries& train, const TimeSeries& test) {
    const std::string text = write_csv(train) + write_csv(test);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 computation failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

SuiteOutput run_suite(const SuiteConfig& cfg, const TimeSeries& train, const TimeSeries& test) {
    if (cfg.models.empty() || cfg.window_sizes.empty() || cfg.seeds == 0) {
        throw ValidationError("suite needs at least one model, window size and seed");
    }
    for (const auto& m : cfg.models) {
        make_regressor(m, 1, 0, cfg.options);  // rejects unknown names before any work
    }
    if (cfg.workers < 1) {
        throw ConfigError("--workers must be at least 1");
    }

    std::vector<LagDataset> train_sets;
    std::vector<LagDataset> test_sets;
    for (std::size_t L : cfg.window_sizes) {
        train_sets.push_back(make_lag_dataset(train, L));
        test_sets.push_back(make_lag_dataset(test, L));
    }

    struct Job {
        std::size_t model, window, seed;
    };
    std::vector<Job> jobs;
    for (std::size_t m = 0; m < cfg.models.size(); ++m) {
        for (std::size_t w = 0; w < cfg.window_sizes.size(); ++w) {
            for (std::size_t s = 0; s < cfg.seeds; ++s) {
                jobs.push_back({m, w, s});
            }
        }
    }
    std::vector<std::optional<RunResult>> results(jobs.size());
    std::vector<std::string> errors(jobs.size());

    const Execution exec = cfg.workers > 1 ? Execution::Parallel : Execution::Serial;
    for_each_index(
        jobs.size(), exec,
        [&](std::size_t j) {
            const Job& job = jobs[j];
            RunConfig rc;
            rc.protocol = cfg.protocol;
            rc.model = cfg.models[job.model];
            rc.options = cfg.options;
            rc.window_size = cfg.window_sizes[job.window];
            rc.seed = cell_seed(cfg.suite_seed, rc.model, rc.window_size, job.seed);
            rc.pretrain = cfg.pretrain;
            rc.refit_interval = cfg.refit_interval;
            try {
                auto model = make_regressor(rc.model, rc.window_size, rc.seed, rc.options);
                const auto& tr = train_sets[job.window];
                const auto& te = test_sets[job.window];
                results[j] = rc.protocol == Protocol::Holdout ? run_holdout(*model, rc, tr, te)
                                                               : run_prequential(*model, rc, tr, te);
                if (cfg.snapshot_dir) {
                    const auto file = *cfg.snapshot_dir / (rc.model + "_L" + std::to_string(rc.window_size) + "_seed" +
                                                          std::to_string(job.seed) + ".json");
                    std::ofstream out(file);
                    out << model->snapshot().dump() << '\n';
                    if (!out) {
                        throw IoError("cannot write snapshot " + file.string());
                    }
                }
            } catch (const std::exception& e) {
                results[j].reset();
                errors[j] = e.what();
            }
        },
        cfg.workers);

    SuiteOutput out;
    auto& summary = out.summary;
    summary.protocol = protocol_name(cfg.protocol);
    summary.suite_seed = cfg.suite_seed;
    summary.pretrain = cfg.pretrain;
    summary.refit_interval = cfg.refit_interval;
    summary.dataset = {train.size(), test.size(), dataset_sha256(train, test)};

    std::size_t j = 0;
    for (std::size_t m = 0; m < cfg.models.size(); ++m) {
        for (std::size_t w = 0; w < cfg.window_sizes.size(); ++w) {
            CellSummary cell;
            cell.model = cfg.models[m];
            cell.window_size = cfg.window_sizes[w];
            std::vector<std::vector<double>> metric_values(std::size(kMetricNames));
            std::vector<double> bytes, pretrain, eval;
            for (std::size_t s = 0; s < cfg.seeds; ++s, ++j) {
                if (!results[j]) {
                    cell.failures.push_back({s, errors[j]});
                    continue;
                }
                const auto& r = results[j]->report;
                for (std::size_t k = 0; k < std::size(kMetricNames); ++k) {
                    metric_values[k].push_back(metric_value(r, k));
                }
                bytes.push_back(r.footprint.model_bytes);
                pretrain.push_back(r.footprint.pretrain_seconds);
                eval.push_back(r.footprint.eval_seconds);
            }
            cell.seeds = bytes.size();
            if (cell.seeds > 0) {
                for (const auto& v : metric_values) {
                    cell.metrics.push_back(summarize(v));
                }
                cell.model_bytes = summarize(bytes);
            }
            out.timings.cells.push_back({cell.model, cell.window_size, summarize(pretrain), summarize(eval)});
            summary.cells.push_back(std::move(cell));
        }
    }
    return out;
}

nlohmann::json summary_to_json(const SummaryReport& report) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : report.cells) {
        nlohmann::json metrics = nlohmann::json::object();
        for (std::size_t k = 0; k < c.metrics.size(); ++k) {
            metrics[kMetricNames[k]] = stat_json(c.metrics[k]);
        }
        nlohmann::json failures = nlohmann::json::array();
        for (const auto& f : c.failures) {
            failures.push_back({{"seed_index", f.seed_index}, {"error", f.error}});
        }
        cells.push_back({{"model", c.model},
                         {"window_size", c.window_size},
                         {"seeds", c.seeds},
                         {"metrics", std::move(metrics)},
                         {"footprint", {{"model_bytes", stat_json(c.model_bytes)}}},
                         {"failures", std::move(failures)}});
    }
    return {{"protocol", report.protocol},
            {"suite_seed", report.suite_seed},
            {"pretrain", report.pretrain},
            {"refit_interval", report.refit_interval ? nlohmann::json(*report.refit_interval) : nlohmann::json()},
            {"dataset",
             {{"train_rows", report.dataset.train_rows},
              {"test_rows", report.dataset.test_rows},
              {"sha256", report.dataset.sha256}}},
            {"cells", std::move(cells)}};
}

SummaryReport summary_from_json(const nlohmann::json& j) {
    try {
        SummaryReport r;
        r.protocol = j.at("protocol").get<std::string>();
        r.suite_seed = j.at("suite_seed").get<std::uint64_t>();
        r.pretrain = j.at("pretrain").get<bool>();
        if (!j.at("refit_interval").is_null()) {
            r.refit_interval = j.at("refit_interval").get<std::size_t>();
        }
        const auto& d = j.at("dataset");
        r.dataset = {d.at("train_rows").get<std::size_t>(), d.at("test_rows").get<std::size_t>(),
                     d.at("sha256").get<std::string>()};
        for (const auto& c : j.at("cells")) {
            CellSummary cell;
            cell.model = c.at("model").get<std::string>();
            cell.window_size = c.at("window_size").get<std::size_t>();
            cell.seeds = c.at("seeds").get<std::size_t>();
            const auto& metrics = c.at("metrics");
            if (!metrics.empty()) {
                for (const char* name : kMetricNames) {
                    cell.metrics.push_back(stat_from(metrics.at(name)));
                }
            }
            cell.model_bytes = stat_from(c.at("footprint").at("model_bytes"));
            for (const auto& f : c.at("failures")) {
                cell.failures.push_back({f.at("seed_index").get<std::size_t>(), f.at("error").get<std::string>()});
            }
            r.cells.push_back(std::move(cell));
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed report JSON: ") + e.what());
    }
}

nlohmann::json timings_to_json(const TimingReport& timings) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : timings.cells) {
        cells.push_back({{"model", c.model},
                         {"window_size", c.window_size},
                         {"pretrain_seconds", stat_json(c.pretrain_seconds)},
                         {"eval_seconds", stat_json(c.eval_seconds)}});
    }
    return {{"resolution_seconds", 0.001}, {"cells", std::move(cells)}};
}

const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> cols = [] {
        std::vector<std::string> c{"model", "window_size", "seeds", "failures"};
        for (const char* m : kMetricNames) {
            c.push_back(std::string(m) + "_mean");
            c.push_back(std::string(m) + "_std");
        }
        for (const char* f : {"train_time_s", "eval_time_s", "memory_bytes"}) {
            c.push_back(std::string(f) + "_mean");
            c.push_back(std::string(f) + "_std");
        }
        return c;
    }();
    return cols;
}

void write_report(const SummaryReport& report, const TimingReport& timings, ReportFormat format,
                  const std::filesystem::path& path) {
    if (report.cells.empty()) {
        throw ValidationError("report has no cells; nothing written");
    }
    std::string text;
    if (format == ReportFormat::Json) {
        text = summary_to_json(report).dump(2) + "\n";
    } else {
        std::ostringstream os;
        const auto& cols = csv_columns();
        for (std::size_t i = 0; i < cols.size(); ++i) {
            os << (i ? "," : "") << cols[i];
        }
        os << '\n';
        for (std::size_t i = 0; i < report.cells.size(); ++i) {
            const auto& c = report.cells[i];
            os << c.model << ',' << c.window_size << ',' << c.seeds << ',' << c.failures.size();
            for (std::size_t k = 0; k < std::size(kMetricNames); ++k) {
                const Stat s = k < c.metrics.size() ? c.metrics[k] : Stat{};
                os << ',' << fixed3(s.mean) << ',' << fixed3(s.std);
            }
            const CellTiming t = i < timings.cells.size() ? timings.cells[i] : CellTiming{};
            os << ',' << fixed3(t.pretrain_seconds.mean) << ',' << fixed3(t.pretrain_seconds.std) << ','
               << fixed3(t.eval_seconds.mean) << ',' << fixed3(t.eval_seconds.std) << ','
               << fixed3(c.model_bytes.mean) << ',' << fixed3(c.model_bytes.std) << '\n';
        }
        text = os.str();
    }

    auto write = [](const std::filesystem::path& p, const std::string& body) {
        std::ofstream out(p, std::ios::binary);
        out << body;
        out.flush();
        if (!out) {
            throw IoError("cannot write " + p.string());
        }
    };
    write(path, text);
    if (format == ReportFormat::Json) {
        write(path.string() + ".timings.json", timings_to_json(timings).dump(2) + "\n");
    }
}

}  // namespace edgecast
