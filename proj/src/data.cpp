#include "edgecast/data.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "edgecast/error.hpp"
#include "edgecast/rng.hpp"

namespace edgecast {

namespace {

constexpr std::string_view kHeader = "timestamp,cpu_util";
constexpr double kClampTolerance = 0.5;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

bool parse_number(std::string_view s, double& out) {
    if (s.empty()) {
        return false;
    }
    if (s.front() == '+') {
        s.remove_prefix(1);
    }
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end && std::isfinite(out);
}

bool parse_int(std::string_view s, int& out) {
    if (s.empty()) {
        return false;
    }
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

}  // namespace

std::vector<double> TimeSeries::values() const {
    std::vector<double> out;
    out.reserve(points.size());
    for (const auto& p : points) {
        out.push_back(p.value);
    }
    return out;
}

std::vector<double> LagDataset::targets() const {
    std::vector<double> out;
    out.reserve(instances.size());
    for (const auto& inst : instances) {
        out.push_back(inst.target);
    }
    return out;
}

double parse_iso8601_utc(std::string_view text) {
    // YYYY-MM-DD[T| ]HH:MM:SS[.fff][Z|+00:00]
    const auto fail = [&]() -> double {
        throw ValidationError("not an ISO-8601 UTC timestamp: '" + std::string(text) + "'");
    };
    if (text.size() < 19 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
        text[13] != ':' || text[16] != ':') {
        return fail();
    }
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    if (!parse_int(text.substr(0, 4), y) || !parse_int(text.substr(5, 2), mo) || !parse_int(text.substr(8, 2), d) ||
        !parse_int(text.substr(11, 2), h) || !parse_int(text.substr(14, 2), mi) || !parse_int(text.substr(17, 2), sec)) {
        return fail();
    }
    std::string_view rest = text.substr(19);
    double fraction = 0.0;
    if (!rest.empty() && rest.front() == '.') {
        std::size_t n = 1;
        while (n < rest.size() && rest[n] >= '0' && rest[n] <= '9') {
            ++n;
        }
        if (n == 1) {
            return fail();
        }
        std::string frac = "0" + std::string(rest.substr(0, n));
        fraction = std::strtod(frac.c_str(), nullptr);
        rest.remove_prefix(n);
    }
    if (!(rest.empty() || rest == "Z" || rest == "+00:00" || rest == "+0000")) {
        return fail();
    }
    using namespace std::chrono;
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60 || h < 0 || mi < 0 || sec < 0) {
        return fail();
    }
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<double>(days) * 86400.0 + h * 3600.0 + mi * 60.0 + sec + fraction;
}

TimeSeries parse_csv(std::string_view text) {
    if (text.starts_with("\xEF\xBB\xBF")) {
        text.remove_prefix(3);
    }
    std::vector<Sample> rows;
    std::size_t line_no = 0;
    bool saw_header = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto line = trim(raw);
        if (!saw_header) {
            if (line.empty() && nl == std::string_view::npos) {
                break;
            }
            if (line != kHeader) {
                throw ParseError(line_no, "expected header '" + std::string(kHeader) + "'");
            }
            saw_header = true;
            continue;
        }
        if (line.empty()) {
            continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
            throw ParseError(line_no, "expected two comma-separated fields");
        }
        const auto ts_field = trim(line.substr(0, comma));
        const auto val_field = trim(line.substr(comma + 1));
        Sample s;
        if (!parse_number(ts_field, s.timestamp)) {
            try {
                s.timestamp = parse_iso8601_utc(ts_field);
            } catch (const ValidationError&) {
                throw ParseError(line_no, "bad timestamp '" + std::string(ts_field) + "'");
            }
        }
        if (!parse_number(val_field, s.value)) {
            throw ParseError(line_no, "bad cpu_util value '" + std::string(val_field) + "'");
        }
        if (s.value < 0.0) {
            if (s.value < -kClampTolerance) {
                throw ValidationError("line " + std::to_string(line_no) + ": cpu_util below 0");
            }
            s.value = 0.0;
        } else if (s.value > 100.0) {
            if (s.value > 100.0 + kClampTolerance) {
                throw ValidationError("line " + std::to_string(line_no) + ": cpu_util above 100");
            }
            s.value = 100.0;
        }
        rows.push_back(s);
    }
    if (rows.empty()) {
        throw ValidationError("CSV contains no samples");
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const Sample& a, const Sample& b) { return a.timestamp < b.timestamp; });

    TimeSeries out;
    out.points.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < rows.size() && rows[j].timestamp == rows[i].timestamp) {
            sum += rows[j].value;
            ++j;
        }
        out.points.push_back({rows[i].timestamp, sum / static_cast<double>(j - i)});
        i = j;
    }
    return out;
}

TimeSeries read_csv_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return parse_csv(text);
}

std::string write_csv(const TimeSeries& series) {
    std::string out(kHeader);
    out += '\n';
    char buf[96];
    for (const auto& p : series.points) {
        int n = 0;
        if (p.timestamp == std::floor(p.timestamp) && std::fabs(p.timestamp) < 9.0e15) {
            n = std::snprintf(buf, sizeof buf, "%lld,%.6f\n", static_cast<long long>(p.timestamp), p.value);
        } else {
            n = std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", p.timestamp, p.value);
        }
        out.append(buf, static_cast<std::size_t>(n));
    }
    return out;
}

void write_csv_file(const TimeSeries& series, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << write_csv(series);
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

TimeSeries resample_1min(const TimeSeries& series) {
    if (series.empty()) {
        throw ValidationError("cannot resample an empty series");
    }
    for (std::size_t i = 1; i < series.size(); ++i) {
        if (!(series.points[i].timestamp > series.points[i - 1].timestamp)) {
            throw ValidationError("timestamps must be strictly increasing");
        }
    }
    if (series.size() == 1) {
        return series;
    }
    const double start = std::floor(series.points.front().timestamp / 60.0) * 60.0;
    const auto bucket_of = [start](double t) { return static_cast<std::size_t>(std::floor((t - start) / 60.0)); };
    const std::size_t n_buckets = bucket_of(series.points.back().timestamp) + 1;

    std::vector<double> sum(n_buckets, 0.0);
    std::vector<std::size_t> count(n_buckets, 0);
    for (const auto& p : series.points) {
        const auto b = bucket_of(p.timestamp);
        sum[b] += p.value;
        ++count[b];
    }

    TimeSeries out;
    out.points.resize(n_buckets);
    std::size_t prev = 0;  // last non-empty bucket; bucket 0 is never empty
    for (std::size_t b = 0; b < n_buckets; ++b) {
        out.points[b].timestamp = start + 60.0 * static_cast<double>(b);
        if (count[b] == 0) {
            continue;
        }
        out.points[b].value = sum[b] / static_cast<double>(count[b]);
        if (b > prev + 1) {
            const double lo = out.points[prev].value;
            const double hi = out.points[b].value;
            const auto span = static_cast<double>(b - prev);
            for (std::size_t g = prev + 1; g < b; ++g) {
                out.points[g].value = lo + (hi - lo) * static_cast<double>(g - prev) / span;
            }
        }
        prev = b;
    }
    return out;
}

LagDataset make_lag_dataset(std::span<const double> values, std::size_t window_size) {
    if (window_size == 0) {
        throw ValidationError("window size must be positive");
    }
    const std::size_t n = values.size();
    if (n <= window_size) {
        throw ValidationError("series of " + std::to_string(n) + " points is too short for window size L=" +
                              std::to_string(window_size) + " (need n > L)");
    }
    LagDataset ds;
    ds.window_size = window_size;
    ds.instances.reserve(n - window_size);
    for (std::size_t i = 0; i + window_size < n; ++i) {
        LagInstance inst;
        inst.features.assign(values.begin() + static_cast<std::ptrdiff_t>(i),
                             values.begin() + static_cast<std::ptrdiff_t>(i + window_size));
        inst.target = values[i + window_size];
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

LagDataset make_lag_dataset(const TimeSeries& series, std::size_t window_size) {
    const auto v = series.values();
    return make_lag_dataset(std::span<const double>(v), window_size);
}

std::pair<LagDataset, LagDataset> chronological_split(const LagDataset& dataset, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw ValidationError("train fraction must lie in (0, 1)");
    }
    if (dataset.empty()) {
        throw ValidationError("cannot split an empty dataset");
    }
    const auto n = dataset.size();
    // Guard against 0.8 * n landing a hair below an integer.
    const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * train_fraction + 1e-9));
    LagDataset train{dataset.window_size, {}};
    LagDataset test{dataset.window_size, {}};
    train.instances.assign(dataset.instances.begin(), dataset.instances.begin() + static_cast<std::ptrdiff_t>(n_train));
    test.instances.assign(dataset.instances.begin() + static_cast<std::ptrdiff_t>(n_train), dataset.instances.end());
    return {std::move(train), std::move(test)};
}

SyntheticWorkload generate_synthetic_schedule(const SynthConfig& cfg) {
    if (cfg.total_minutes < 1 || cfg.workload_minutes < 1) {
        throw ValidationError("total_minutes and workload_minutes must be positive");
    }
    if (cfg.total_minutes < cfg.workload_minutes) {
        throw ValidationError("total_minutes must be >= workload_minutes");
    }
    if (cfg.pause_seconds < 0 || !(cfg.noise_std >= 0.0) || !std::isfinite(cfg.noise_std)) {
        throw ValidationError("pause_seconds and noise_std must be non-negative");
    }
    Rng rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, cfg.noise_std > 0.0 ? cfg.noise_std : 1.0);
    const std::int64_t pause_minutes = (cfg.pause_seconds + 59) / 60;

    SyntheticWorkload out;
    out.series.points.reserve(static_cast<std::size_t>(cfg.total_minutes));
    const auto emit = [&](std::int64_t minute, double v) {
        out.series.points.push_back({cfg.start_timestamp + 60.0 * static_cast<double>(minute), std::clamp(v, 0.0, 100.0)});
    };
    std::int64_t minute = 0;
    while (minute < cfg.total_minutes) {
        SynthBlock work{minute, std::min(cfg.workload_minutes, cfg.total_minutes - minute), false, 100.0 * uniform01(rng)};
        for (std::int64_t i = 0; i < work.length; ++i) {
            emit(minute + i, cfg.noise_std > 0.0 ? work.level + noise(rng) : work.level);
        }
        minute += work.length;
        out.blocks.push_back(work);
        if (minute >= cfg.total_minutes || pause_minutes == 0) {
            continue;
        }
        SynthBlock pause{minute, std::min(pause_minutes, cfg.total_minutes - minute), true, 0.0};
        for (std::int64_t i = 0; i < pause.length; ++i) {
            emit(minute + i, 5.0 * uniform01(rng));
        }
        minute += pause.length;
        out.blocks.push_back(pause);
    }
    return out;
}

TimeSeries generate_synthetic_workload(const SynthConfig& cfg) {
    return generate_synthetic_schedule(cfg).series;
}

}  // namespace edgecast
