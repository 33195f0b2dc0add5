#pragma once

// Turn-by-turn tipping monitor. Each session holds fixed basins; every turn
// adds a state vector, the running context becomes the mean of all turn
// states so far, and the tipping forecast is recomputed from it.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "tipping/basin_geometry.hpp"
#include "tipping/state_io.hpp"
#include "tipping/vector_ops.hpp"

namespace tipping::service {

struct TraceEntry {
    std::size_t turn_index = 0;
    std::string role;
    geometry::TipForecast forecast;
    bool warning = false;
};

// Immediate, or Delayed with ceil(n*) <= warn_threshold_n.
bool warning_for(const geometry::TipForecast& f, std::int64_t warn_threshold_n);

nlohmann::json to_json(const geometry::TipForecast& f);
nlohmann::json to_json(const TraceEntry& e);

struct SessionSnapshot {
    std::string id;
    std::string basin_file;
    std::int64_t warn_threshold_n = 0;
    geometry::BasinPair basins;
    std::vector<std::string> roles;
    std::vector<Vector> states;
    Vector running_c;  // empty before the first turn
    std::vector<TraceEntry> trace;
};

// Role carried by a replay group: a phrase starting with "assistant:" marks
// an assistant turn, anything else a user turn.
std::string role_from_phrase(const std::string& phrase);

// Resolves "path#k" to the token-mean state of group k (0-based) of that
// HSF file at `layer`.
Vector resolve_fixture_ref(const std::string& ref, std::size_t layer);

class SessionStore {
public:
    // With a state directory, sessions are persisted there as JSON and any
    // sessions already present are loaded.
    explicit SessionStore(std::optional<std::filesystem::path> state_dir = std::nullopt);
    ~SessionStore();
    SessionStore(const SessionStore&) = delete;
    SessionStore& operator=(const SessionStore&) = delete;

    // Basins are taken at `layer`, or at the penultimate layer of the file.
    std::string create_session(const std::filesystem::path& basin_file, std::int64_t warn_threshold_n,
                               std::optional<std::size_t> layer = std::nullopt);
    std::string create_session(geometry::BasinPair basins, std::int64_t warn_threshold_n,
                               std::string source = {});

    TraceEntry append_turn(const std::string& id, const std::string& role, Vector state);
    // Resolves a fixture reference at the session's basin layer.
    TraceEntry append_fixture_turn(const std::string& id, const std::string& role,
                                   const std::string& fixture_ref);

    std::vector<TraceEntry> trace(const std::string& id) const;
    SessionSnapshot snapshot(const std::string& id) const;
    std::vector<std::string> list() const;
    std::size_t size() const;

private:
    struct Session;
    std::shared_ptr<Session> find(const std::string& id) const;
    std::string insert(std::shared_ptr<Session> session);
    void persist(const Session& session) const;
    void load_all();

    std::optional<std::filesystem::path> state_dir_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t next_id_ = 1;
};

// Feeds every C group of `conversation` (in file order) through a fresh
// session over `basins`, using the per-group token mean at the basins' layer.
std::vector<TraceEntry> replay(const hsf::LabeledStateSet& conversation,
                               const geometry::BasinPair& basins, std::int64_t warn_threshold_n);

// First turn whose entry carries the warning flag.
std::optional<std::size_t> warning_onset(const std::vector<TraceEntry>& trace);

}  // namespace tipping::service
