#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "revgen/util.hpp"

namespace revgen::ledger {

enum class CellState { pending, running, done, failed_retryable, failed_terminal };

const char* state_name(CellState s);
Result<CellState> state_from(std::string_view name);

struct Event {
    std::string stage;
    std::string cell;  // "__stage__" marks a whole-stage event
    CellState state = CellState::pending;
    std::string note;
};

// Append-only run journal plus a per-cell payload scratch per stage. The
// journal records state transitions; the scratch files hold completed cell
// payloads so a resumed run can skip finished work. Final stage artifacts are
// assembled sorted from the scratch, which makes them independent of worker
// scheduling.
class RunLedger {
public:
    // Reads ledger.jsonl under run_dir if present; a malformed line is an
    // integrity error naming the line number.
    static Result<RunLedger> open(const std::filesystem::path& run_dir);

    const std::filesystem::path& run_dir() const { return run_dir_; }

    VoidResult record(std::string_view stage, std::string_view cell, CellState state,
                      std::string_view note = {});
    VoidResult mark_stage_done(std::string_view stage);

    bool is_done(std::string_view stage, std::string_view cell) const;
    bool stage_done(std::string_view stage) const;
    CellState cell_state(std::string_view stage, std::string_view cell) const;
    std::map<std::string, CellState> cells(std::string_view stage) const;
    std::vector<Event> events() const;

    // Cell payload scratch: one JSON object per line {"cell":key,"data":...}
    // appended as work completes. `load_cell_payloads` returns first-write-
    // wins payloads keyed by cell.
    VoidResult append_cell_payload(std::string_view stage, std::string_view cell,
                                   std::string_view data_json);
    Result<std::map<std::string, std::string>> load_cell_payloads(std::string_view stage) const;

private:
    std::filesystem::path run_dir_;
    std::filesystem::path journal_path_;
    // keyed "stage\x1f cell"
    std::map<std::string, CellState> states_;
    std::vector<Event> events_;
    mutable std::unique_ptr<std::mutex> mu_ = std::make_unique<std::mutex>();
};

// Serializes records (already rendered JSON lines) sorted by key, atomically.
VoidResult write_sorted_jsonl(const std::filesystem::path& path,
                              std::vector<std::pair<std::string, std::string>> keyed_lines);

}  // namespace revgen::ledger
