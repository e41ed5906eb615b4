#include "revgen/ledger.hpp"

#include <algorithm>

#include "json.hpp"

namespace revgen::ledger {

namespace {

using nlohmann::json;

std::string cell_key(std::string_view stage, std::string_view cell) {
    std::string k(stage);
    k.push_back('\x1f');
    k.append(cell);
    return k;
}

std::filesystem::path scratch_path(const std::filesystem::path& run_dir, std::string_view stage) {
    return run_dir / (std::string(stage) + ".cells.jsonl");
}

}  // namespace

const char* state_name(CellState s) {
    switch (s) {
        case CellState::pending: return "pending";
        case CellState::running: return "running";
        case CellState::done: return "done";
        case CellState::failed_retryable: return "failed-retryable";
        case CellState::failed_terminal: return "failed-terminal";
    }
    return "?";
}

Result<CellState> state_from(std::string_view name) {
    using R = Result<CellState>;
    if (name == "pending") return R(CellState::pending);
    if (name == "running") return R(CellState::running);
    if (name == "done") return R(CellState::done);
    if (name == "failed-retryable") return R(CellState::failed_retryable);
    if (name == "failed-terminal") return R(CellState::failed_terminal);
    return R::failure("bad_state", "unknown ledger state '" + std::string(name) + "'");
}

Result<RunLedger> RunLedger::open(const std::filesystem::path& run_dir) {
    using R = Result<RunLedger>;
    std::error_code ec;
    std::filesystem::create_directories(run_dir, ec);
    if (ec) {
        return R::failure("io_error", "cannot create run dir " + run_dir.string());
    }
    RunLedger led;
    led.run_dir_ = run_dir;
    led.journal_path_ = run_dir / "ledger.jsonl";
    if (std::filesystem::exists(led.journal_path_)) {
        auto lines = read_lines(led.journal_path_);
        if (!lines) return lines.forward<RunLedger>();
        for (std::size_t i = 0; i < lines.value().size(); ++i) {
            const std::string& line = lines.value()[i];
            if (trim(line).empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object() || !j.contains("stage") ||
                !j.contains("cell") || !j.contains("state")) {
                return R::failure("integrity",
                                  "ledger.jsonl line " + std::to_string(i + 1) + " is malformed");
            }
            auto state = state_from(j["state"].get<std::string>());
            if (!state) {
                return R::failure("integrity",
                                  "ledger.jsonl line " + std::to_string(i + 1) + ": " +
                                      state.error().message);
            }
            Event e;
            e.stage = j["stage"].get<std::string>();
            e.cell = j["cell"].get<std::string>();
            e.state = state.value();
            e.note = j.value("note", "");
            led.states_[cell_key(e.stage, e.cell)] = e.state;
            led.events_.push_back(std::move(e));
        }
    }
    return R(std::move(led));
}

VoidResult RunLedger::record(std::string_view stage, std::string_view cell, CellState state,
                             std::string_view note) {
    std::lock_guard<std::mutex> lock(*mu_);
    json j;
    j["stage"] = std::string(stage);
    j["cell"] = std::string(cell);
    j["state"] = state_name(state);
    if (!note.empty()) j["note"] = std::string(note);
    auto appended = append_line(journal_path_, j.dump());
    if (!appended.ok()) return appended;
    states_[cell_key(stage, cell)] = state;
    Event e;
    e.stage = std::string(stage);
    e.cell = std::string(cell);
    e.state = state;
    e.note = std::string(note);
    events_.push_back(std::move(e));
    return ok_void();
}

VoidResult RunLedger::mark_stage_done(std::string_view stage) {
    return record(stage, "__stage__", CellState::done);
}

bool RunLedger::is_done(std::string_view stage, std::string_view cell) const {
    return cell_state(stage, cell) == CellState::done;
}

bool RunLedger::stage_done(std::string_view stage) const {
    return is_done(stage, "__stage__");
}

CellState RunLedger::cell_state(std::string_view stage, std::string_view cell) const {
    std::lock_guard<std::mutex> lock(*mu_);
    auto it = states_.find(cell_key(stage, cell));
    return it == states_.end() ? CellState::pending : it->second;
}

std::map<std::string, CellState> RunLedger::cells(std::string_view stage) const {
    std::lock_guard<std::mutex> lock(*mu_);
    std::map<std::string, CellState> out;
    std::string prefix(stage);
    prefix.push_back('\x1f');
    for (const auto& [key, state] : states_) {
        if (key.size() > prefix.size() && key.compare(0, prefix.size(), prefix) == 0) {
            std::string cell = key.substr(prefix.size());
            if (cell != "__stage__") out[cell] = state;
        }
    }
    return out;
}

std::vector<Event> RunLedger::events() const {
    std::lock_guard<std::mutex> lock(*mu_);
    return events_;
}

VoidResult RunLedger::append_cell_payload(std::string_view stage, std::string_view cell,
                                          std::string_view data_json) {
    std::lock_guard<std::mutex> lock(*mu_);
    json j;
    j["cell"] = std::string(cell);
    j["data"] = json::parse(data_json, nullptr, false);
    if (j["data"].is_discarded()) {
        return VoidResult::failure("bad_payload", "cell payload is not valid JSON");
    }
    return append_line(scratch_path(run_dir_, stage), j.dump());
}

Result<std::map<std::string, std::string>> RunLedger::load_cell_payloads(
    std::string_view stage) const {
    using R = Result<std::map<std::string, std::string>>;
    std::map<std::string, std::string> out;
    auto path = scratch_path(run_dir_, stage);
    if (!std::filesystem::exists(path)) return R(std::move(out));
    auto lines = read_lines(path);
    if (!lines) return lines.forward<std::map<std::string, std::string>>();
    for (std::size_t i = 0; i < lines.value().size(); ++i) {
        const std::string& line = lines.value()[i];
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("cell") || !j.contains("data")) {
            return R::failure("integrity", path.filename().string() + " line " +
                                               std::to_string(i + 1) + " is malformed");
        }
        std::string cell = j["cell"].get<std::string>();
        // First write wins: a crash between payload append and journal update
        // can duplicate a cell; both copies are identical by determinism.
        out.emplace(std::move(cell), j["data"].dump());
    }
    return R(std::move(out));
}

VoidResult write_sorted_jsonl(const std::filesystem::path& path,
                              std::vector<std::pair<std::string, std::string>> keyed_lines) {
    std::sort(keyed_lines.begin(), keyed_lines.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::string content;
    for (const auto& [key, line] : keyed_lines) {
        content += line;
        content.push_back('\n');
    }
    return write_file_atomic(path, content);
}

}  // namespace revgen::ledger
