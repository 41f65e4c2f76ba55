#include "rubriclearn/journal.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/text.hpp"

#include <map>
#include <set>

namespace rubriclearn {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

Journal::Journal(const std::filesystem::path& path, std::uint64_t next_seq)
    : path_(path), next_seq_(next_seq) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw Error("cannot open journal " + path.string());
}

std::uint64_t Journal::append(const ordered_json& record) {
    std::lock_guard lock(mutex_);
    ordered_json line;
    const std::uint64_t seq = next_seq_++;
    line["seq"] = seq;
    for (auto it = record.begin(); it != record.end(); ++it) {
        if (it.key() != "seq") line[it.key()] = it.value();
    }
    std::string text = line.dump(-1, ' ', false, json::error_handler_t::replace);
    if (out_.is_open()) {
        out_ << text << '\n';
        out_.flush();
    }
    lines_.push_back(std::move(text));
    return seq;
}

std::vector<std::string> Journal::lines() const {
    std::lock_guard lock(mutex_);
    return lines_;
}

std::uint64_t Journal::next_seq() const {
    std::lock_guard lock(mutex_);
    return next_seq_;
}

std::vector<json> parse_journal_lines(const std::vector<std::string>& lines) {
    std::vector<json> records;
    std::size_t row = 0;
    for (const auto& line : lines) {
        ++row;
        if (text::trim(line).empty()) continue;
        try {
            records.push_back(json::parse(line));
        } catch (const json::parse_error& e) {
            throw ParseError(row, std::string("journal: ") + e.what());
        }
    }
    return records;
}

std::vector<json> read_journal(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) return {};
    return parse_journal_lines(text::split_lines(text::read_file(path)));
}

namespace {

bool is_request(const std::string& event) { return event == "request" || event == "embed_request"; }

bool is_terminal(const std::string& event) {
    return event == "response" || event == "error" || event == "embed_response" || event == "embed_error";
}

} // namespace

JournalAudit audit_journal(const std::vector<json>& records) {
    JournalAudit audit;
    std::set<std::string> open;
    std::set<std::string> closed;
    std::uint64_t last_seq = 0;
    for (const auto& r : records) {
        const auto seq = r.value("seq", std::uint64_t{0});
        if (seq <= last_seq) audit.sequence_monotonic = false;
        last_seq = seq;
        const std::string event = r.value("event", "");
        const std::string call = r.value("call", "");
        if (is_request(event)) {
            ++audit.requests;
            open.insert(call);
        } else if (is_terminal(event)) {
            ++audit.terminals;
            if (closed.count(call)) {
                audit.duplicate_terminals.push_back(call);
            } else if (!open.erase(call)) {
                audit.orphan_terminals.push_back(call);
            } else {
                closed.insert(call);
            }
        }
    }
    audit.unterminated_calls.assign(open.begin(), open.end());
    return audit;
}

std::vector<json> truncate_journal_to_checkpoint(const std::filesystem::path& path,
                                                 const std::filesystem::path& aborted_path) {
    if (!std::filesystem::exists(path)) return {};
    const auto lines = text::split_lines(text::read_file(path));
    const auto records = parse_journal_lines(lines);
    std::size_t keep = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].value("event", "") == "checkpoint") keep = i + 1;
    }
    std::string kept;
    std::string dropped;
    std::size_t index = 0;
    for (const auto& line : lines) {
        if (text::trim(line).empty()) continue;
        (index < keep ? kept : dropped) += line + "\n";
        ++index;
    }
    if (!dropped.empty()) {
        std::ofstream aborted(aborted_path, std::ios::binary | std::ios::app);
        aborted << dropped;
    }
    text::write_file_atomic(path, kept);
    return {records.begin(), records.begin() + static_cast<std::ptrdiff_t>(keep)};
}

} // namespace rubriclearn
