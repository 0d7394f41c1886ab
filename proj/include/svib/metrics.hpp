#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "svib/common.hpp"

namespace svib {

using Json = nlohmann::json;

constexpr int kMetricsSchemaVersion = 1;

// One JSONL row. Numeric payload lives in `fields`; serialization relies on
// nlohmann's shortest round-trip float printing.
struct MetricsRecord {
    std::string record_type;  // train | mi_probe | eval
    std::size_t update = 0;
    std::uint64_t seed = 0;
    std::string variant;
    std::map<std::string, double> fields;

    Json to_json() const {
        Json j;
        j["schema_version"] = kMetricsSchemaVersion;
        j["record_type"] = record_type;
        j["update"] = update;
        j["seed"] = seed;
        j["variant"] = variant;
        for (const auto& [k, v] : fields) j[k] = v;
        return j;
    }

    static MetricsRecord from_json(const Json& j) {
        MetricsRecord r;
        r.record_type = j.at("record_type").get<std::string>();
        r.update = j.at("update").get<std::size_t>();
        r.seed = j.at("seed").get<std::uint64_t>();
        r.variant = j.at("variant").get<std::string>();
        static const char* meta[] = {"schema_version", "record_type", "update", "seed", "variant"};
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (std::find_if(std::begin(meta), std::end(meta),
                             [&](const char* m) { return it.key() == m; }) != std::end(meta))
                continue;
            if (it.value().is_number()) r.fields[it.key()] = it.value().get<double>();
        }
        return r;
    }
};

class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path) : path_(path), out_(path, std::ios::trunc) {
        if (!out_) throw ContractError("cannot open metrics file for writing: " + path);
    }

    void append(const MetricsRecord& rec) {
        out_ << rec.to_json().dump() << '\n';
        out_.flush();
        if (!out_) throw ContractError("metrics write failed: " + path_);
    }

private:
    std::string path_;
    std::ofstream out_;
};

struct MetricsFile {
    std::vector<MetricsRecord> records;
    bool truncated_tail = false;  // final line did not parse or lacked a newline
};

inline MetricsFile read_metrics(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("cannot open metrics file: " + path);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    MetricsFile out;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t nl = content.find('\n', pos);
        const bool has_newline = nl != std::string::npos;
        std::string line = content.substr(pos, has_newline ? nl - pos : std::string::npos);
        pos = has_newline ? nl + 1 : content.size();
        if (line.empty()) continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded() || !has_newline) {
            if (!j.is_discarded() && !has_newline) {
                // parseable but unterminated: still flag, the writer always terminates lines
                out.truncated_tail = true;
                out.records.push_back(MetricsRecord::from_json(j));
            } else {
                out.truncated_tail = true;
            }
            break;
        }
        out.records.push_back(MetricsRecord::from_json(j));
    }
    return out;
}

struct PlotSeries {
    std::vector<std::size_t> x;
    std::vector<double> y;
    std::string label;

    void validate() const {
        if (x.size() != y.size()) throw ContractError("plot series length mismatch");
        for (std::size_t i = 1; i < x.size(); ++i)
            if (x[i] <= x[i - 1]) throw ContractError("plot series x must be strictly increasing");
    }
};

// y'_t = ema*y'_{t-1} + (1-ema)*y_t, seeded with the first sample.
inline PlotSeries ema_smooth(const PlotSeries& s, double ema) {
    if (ema < 0.0 || ema >= 1.0) throw ContractError("ema factor must be in [0, 1)");
    PlotSeries out = s;
    for (std::size_t i = 1; i < out.y.size(); ++i)
        out.y[i] = ema * out.y[i - 1] + (1.0 - ema) * s.y[i];
    return out;
}

inline PlotSeries extract_series(const std::vector<MetricsRecord>& records,
                                 const std::string& record_type, const std::string& field,
                                 const std::string& label = "") {
    PlotSeries s;
    s.label = label;
    std::vector<std::string> available;
    for (const auto& r : records) {
        if (r.record_type != record_type) continue;
        auto it = r.fields.find(field);
        if (it == r.fields.end()) {
            for (const auto& [k, _] : r.fields) available.push_back(k);
            std::string msg = "field '" + field + "' missing; available:";
            std::sort(available.begin(), available.end());
            available.erase(std::unique(available.begin(), available.end()), available.end());
            for (const auto& k : available) msg += " " + k;
            throw ContractError(msg);
        }
        s.x.push_back(r.update);
        s.y.push_back(it->second);
    }
    return s;
}

// Pointwise median across runs of the same schedule (x grids must agree).
inline PlotSeries median_series(const std::vector<PlotSeries>& runs, const std::string& label) {
    if (runs.empty()) throw ContractError("median over zero series");
    PlotSeries out;
    out.label = label;
    out.x = runs[0].x;
    for (const auto& r : runs)
        if (r.x != out.x) throw ContractError("median_series: runs have different update grids");
    out.y.resize(out.x.size());
    std::vector<double> col(runs.size());
    for (std::size_t i = 0; i < out.x.size(); ++i) {
        for (std::size_t r = 0; r < runs.size(); ++r) col[r] = runs[r].y[i];
        std::sort(col.begin(), col.end());
        const std::size_t n = col.size();
        out.y[i] = n % 2 == 1 ? col[n / 2] : 0.5 * (col[n / 2 - 1] + col[n / 2]);
    }
    return out;
}

inline std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string series_csv(const PlotSeries& s) {
    s.validate();
    std::string out = "update," + (s.label.empty() ? std::string("value") : s.label) + "\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
        out += std::to_string(s.x[i]) + "," + format_double(s.y[i]) + "\n";
    return out;
}

inline PlotSeries parse_series_csv(const std::string& csv) {
    PlotSeries s;
    std::istringstream in(csv);
    std::string line;
    if (!std::getline(in, line)) throw ContractError("empty csv");
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ContractError("csv header lacks a comma");
    s.label = line.substr(comma + 1);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c = line.find(',');
        if (c == std::string::npos) throw ContractError("csv row lacks a comma: " + line);
        s.x.push_back(std::stoull(line.substr(0, c)));
        double v = 0.0;
        const char* b = line.data() + c + 1;
        auto res = std::from_chars(b, line.data() + line.size(), v);
        if (res.ec != std::errc{}) throw ContractError("csv value parse failure: " + line);
        s.y.push_back(v);
    }
    s.validate();
    return s;
}

// Minimal polyline chart; CSV is the contract, this is for eyeballing.
inline std::string series_svg(const std::vector<PlotSeries>& series, std::size_t width = 640,
                              std::size_t height = 400) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b"};
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series) {
        s.validate();
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            xmin = std::min(xmin, static_cast<double>(s.x[i]));
            xmax = std::max(xmax, static_cast<double>(s.x[i]));
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    }
    if (xmax <= xmin) xmax = xmin + 1;
    if (ymax <= ymin) ymax = ymin + 1;
    const double pad = 40.0;
    auto sx = [&](double x) { return pad + (x - xmin) / (xmax - xmin) * (width - 2 * pad); };
    auto sy = [&](double y) { return height - pad - (y - ymin) / (ymax - ymin) * (height - 2 * pad); };
    std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                      std::to_string(width) + "\" height=\"" + std::to_string(height) + "\">\n";
    svg += "<line x1=\"" + format_double(pad) + "\" y1=\"" + format_double(height - pad) +
           "\" x2=\"" + format_double(width - pad) + "\" y2=\"" + format_double(height - pad) +
           "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + format_double(pad) + "\" y1=\"" + format_double(pad) + "\" x2=\"" +
           format_double(pad) + "\" y2=\"" + format_double(height - pad) +
           "\" stroke=\"black\"/>\n";
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        std::string pts;
        for (std::size_t i = 0; i < s.x.size(); ++i)
            pts += format_double(sx(static_cast<double>(s.x[i]))) + "," + format_double(sy(s.y[i])) + " ";
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(colors[k % 5]) +
               "\" points=\"" + pts + "\"/>\n";
        svg += "<text x=\"" + format_double(width - pad - 150) + "\" y=\"" +
               format_double(pad + 16.0 * (k + 1)) + "\" fill=\"" + colors[k % 5] + "\">" +
               s.label + "</text>\n";
    }
    svg += "</svg>\n";
    return svg;
}

}  // namespace svib
