#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace rubriclearn {

/// File name -> contents, e.g. "ablation.csv".
using ReportFiles = std::map<std::string, std::string>;

/// Aggregates completed run directories:
///   ablation.csv   rows = modes, columns = tasks, cells "mean ± std"
///   curve.csv      task,mode,round,split,mean,missing_count
///   agreement.csv / revision.csv when any run has them
/// Throws ConfigError for incomplete runs, runs of one task on different
/// corpora, or two runs of the same (task, mode).
ReportFiles build_report(const std::vector<std::filesystem::path>& run_dirs);

/// Writes each file into `out_dir`; returns the written paths.
std::vector<std::filesystem::path> write_report(const ReportFiles& files, const std::filesystem::path& out_dir);

/// RFC 4180 quoting when the field needs it.
std::string csv_field(const std::string& value);

} // namespace rubriclearn
