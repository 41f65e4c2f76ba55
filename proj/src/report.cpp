#include "rubriclearn/report.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/pipeline.hpp"
#include "rubriclearn/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>

namespace rubriclearn {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string csv_field(const std::string& value) {
    if (value.find_first_of(",\"\n\r") == std::string::npos) return value;
    std::string out = "\"";
    for (char c : value) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

namespace {

struct RunInfo {
    fs::path dir;
    json results;
    std::string task;
    Mode mode = Mode::no_rubric;
};

// Data rows of a CSV file, header dropped.
std::string csv_body(const fs::path& path) {
    const std::string contents = text::read_file(path);
    const auto nl = contents.find('\n');
    return nl == std::string::npos ? std::string() : contents.substr(nl + 1);
}

std::string csv_header(const fs::path& path) {
    const std::string contents = text::read_file(path);
    return contents.substr(0, contents.find('\n') + 1);
}

} // namespace

ReportFiles build_report(const std::vector<fs::path>& run_dirs) {
    if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
    std::vector<RunInfo> runs;
    for (const auto& dir : run_dirs) {
        const fs::path file = dir / "results.json";
        if (!fs::exists(file)) throw ConfigError(dir.string() + " has no results.json");
        RunInfo info;
        info.dir = dir;
        info.results = json::parse(text::read_file(file), nullptr, false);
        if (info.results.is_discarded() || !info.results.value("complete", false)) {
            throw ConfigError(dir.string() + " is not a completed run");
        }
        info.task = info.results.at("task").get<std::string>();
        info.mode = mode_from_string(info.results.at("mode").get<std::string>());
        runs.push_back(std::move(info));
    }
    std::map<std::string, std::string> corpus_of_task;
    std::set<std::pair<std::string, Mode>> seen;
    for (const auto& r : runs) {
        const std::string hash = r.results.at("corpus_hash").get<std::string>();
        auto [it, inserted] = corpus_of_task.emplace(r.task, hash);
        if (!inserted && it->second != hash) {
            throw ConfigError("runs of task '" + r.task + "' use different corpora (" + it->second + " vs " + hash + ")");
        }
        if (!seen.insert({r.task, r.mode}).second) {
            throw ConfigError("more than one run for task '" + r.task + "' and mode " + std::string(to_string(r.mode)));
        }
    }
    std::sort(runs.begin(), runs.end(), [](const RunInfo& a, const RunInfo& b) {
        return a.task != b.task ? a.task < b.task : static_cast<int>(a.mode) < static_cast<int>(b.mode);
    });

    std::vector<std::string> tasks;
    for (const auto& [task, _] : corpus_of_task) tasks.push_back(task);
    std::set<Mode> modes;
    for (const auto& r : runs) modes.insert(r.mode);

    ReportFiles files;
    std::string ablation = "mode";
    for (const auto& t : tasks) ablation += "," + csv_field(t);
    ablation += "\n";
    for (Mode m : modes) {
        ablation += std::string(to_string(m));
        for (const auto& t : tasks) {
            std::string cell;
            for (const auto& r : runs) {
                if (r.task != t || r.mode != m) continue;
                const auto& summary = r.results.at("test").at("summary");
                if (!summary.is_null()) cell = summary.at("formatted").get<std::string>();
            }
            ablation += "," + csv_field(cell);
        }
        ablation += "\n";
    }
    files["ablation.csv"] = ablation;

    std::string curve = "task,mode,round,split,mean,missing_count\n";
    for (const auto& r : runs) {
        for (const auto& round : r.results.value("rounds", json::array())) {
            for (const char* split : {"train", "validation"}) {
                const auto& mean = round.at(std::string(split) + "_mean");
                curve += csv_field(r.task) + "," + std::string(to_string(r.mode)) + "," +
                         std::to_string(round.at("round").get<int>()) + "," + split + "," +
                         (mean.is_null() ? std::string() : text::fixed(mean.get<double>(), 4)) + "," +
                         std::to_string(round.at(std::string(split) + "_missing").get<std::size_t>()) + "\n";
            }
        }
    }
    files["curve.csv"] = curve;

    for (const char* name : {"agreement.csv", "revision.csv"}) {
        std::string header;
        std::string body;
        for (const auto& r : runs) {
            const fs::path p = r.dir / "report" / name;
            if (!fs::exists(p)) continue;
            if (header.empty()) header = csv_header(p);
            body += csv_body(p);
        }
        if (!header.empty()) files[name] = header + body;
    }
    return files;
}

std::vector<fs::path> write_report(const ReportFiles& files, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    for (const auto& [name, contents] : files) {
        text::write_file_atomic(out_dir / name, contents);
        written.push_back(out_dir / name);
    }
    return written;
}

} // namespace rubriclearn
