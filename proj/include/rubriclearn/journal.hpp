#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace rubriclearn {

/// Append-only JSON-lines event log. Every record gets a monotonically
/// increasing `seq` as its first field. Appends are serialized and flushed
/// immediately; the journal never stores wall-clock time, so identical event
/// sequences give identical bytes.
class Journal {
public:
    /// In-memory journal (tests, dry runs).
    Journal() = default;
    /// File-backed journal appending to `path`; `next_seq` continues an
    /// existing file.
    explicit Journal(const std::filesystem::path& path, std::uint64_t next_seq = 1);

    Journal(const Journal&) = delete;
    Journal& operator=(const Journal&) = delete;

    /// Returns the assigned sequence number.
    std::uint64_t append(const nlohmann::ordered_json& record);

    /// Copy of every line written through this instance.
    std::vector<std::string> lines() const;
    std::uint64_t next_seq() const;
    const std::optional<std::filesystem::path>& path() const noexcept { return path_; }

private:
    mutable std::mutex mutex_;
    std::optional<std::filesystem::path> path_;
    std::ofstream out_;
    std::vector<std::string> lines_;
    std::uint64_t next_seq_ = 1;
};

std::vector<nlohmann::json> read_journal(const std::filesystem::path& path);
std::vector<nlohmann::json> parse_journal_lines(const std::vector<std::string>& lines);

/// Result of replaying a journal for completeness.
struct JournalAudit {
    std::size_t requests = 0;
    std::size_t terminals = 0;
    std::vector<std::string> unterminated_calls;
    std::vector<std::string> orphan_terminals;
    std::vector<std::string> duplicate_terminals;
    bool sequence_monotonic = true;

    bool complete() const {
        return unterminated_calls.empty() && orphan_terminals.empty() && duplicate_terminals.empty() &&
               sequence_monotonic;
    }
};

/// Checks that each provider request record has exactly one terminal record.
JournalAudit audit_journal(const std::vector<nlohmann::json>& records);

/// Keeps records up to and including the last one with event == "checkpoint"
/// (none kept when there is no checkpoint). The dropped tail is appended to
/// `aborted_path`. Returns the kept records.
std::vector<nlohmann::json> truncate_journal_to_checkpoint(const std::filesystem::path& path,
                                                           const std::filesystem::path& aborted_path);

} // namespace rubriclearn
