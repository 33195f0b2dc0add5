#include "tipping/forecast_service.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "tipping/error.hpp"

namespace tipping::service {

bool warning_for(const geometry::TipForecast& f, std::int64_t warn_threshold_n) {
    if (f.kind == geometry::TipCase::Immediate) return true;
    return f.kind == geometry::TipCase::Delayed && f.n_star_ceil && *f.n_star_ceil <= warn_threshold_n;
}

nlohmann::json to_json(const geometry::TipForecast& f) {
    nlohmann::json j;
    j["x"] = f.x;
    j["b_drive"] = f.b_drive;
    j["case"] = geometry::to_string(f.kind);
    // JSON has no infinity; null stands for +inf
    j["n_star"] = std::isfinite(f.n_star) ? nlohmann::json(f.n_star) : nlohmann::json(nullptr);
    j["n_star_ceil"] = f.n_star_ceil ? nlohmann::json(*f.n_star_ceil) : nlohmann::json(nullptr);
    j["saturated"] = f.saturated;
    return j;
}

nlohmann::json to_json(const TraceEntry& e) {
    nlohmann::json j = to_json(e.forecast);
    j["turn_index"] = e.turn_index;
    j["role"] = e.role;
    j["warning"] = e.warning;
    return j;
}

namespace {

geometry::TipCase parse_case(const std::string& name) {
    if (name == "Immediate") return geometry::TipCase::Immediate;
    if (name == "Delayed") return geometry::TipCase::Delayed;
    if (name == "Never") return geometry::TipCase::Never;
    throw Error(ErrorKind::BadHeader, "unknown forecast case \"" + name + "\"");
}

TraceEntry entry_from_json(const nlohmann::json& j) {
    TraceEntry e;
    e.turn_index = j.at("turn_index").get<std::size_t>();
    e.role = j.at("role").get<std::string>();
    e.warning = j.at("warning").get<bool>();
    e.forecast.x = j.at("x").get<double>();
    e.forecast.b_drive = j.at("b_drive").get<double>();
    e.forecast.kind = parse_case(j.at("case").get<std::string>());
    e.forecast.n_star = j.at("n_star").is_null() ? std::numeric_limits<double>::infinity()
                                                 : j.at("n_star").get<double>();
    if (!j.at("n_star_ceil").is_null()) e.forecast.n_star_ceil = j.at("n_star_ceil").get<std::int64_t>();
    e.forecast.saturated = j.at("saturated").get<bool>();
    return e;
}

Vector group_mean(const hsf::Group& g, std::size_t layer, std::size_t dim) {
    std::vector<Vector> tokens;
    tokens.reserve(g.token_count);
    for (std::size_t t = 0; t < g.token_count; ++t) tokens.push_back(g.token_vector(layer, t, dim));
    return geometry::centroid(tokens);
}

}  // namespace

std::string role_from_phrase(const std::string& phrase) {
    return phrase.rfind("assistant:", 0) == 0 ? "assistant" : "user";
}

Vector resolve_fixture_ref(const std::string& ref, std::size_t layer) {
    const auto hash = ref.rfind('#');
    if (hash == std::string::npos || hash + 1 == ref.size()) {
        throw Error(ErrorKind::InvalidArgument, "fixture_ref must look like PATH#GROUP, got \"" + ref + "\"");
    }
    std::size_t index = 0;
    try {
        std::size_t used = 0;
        index = std::stoul(ref.substr(hash + 1), &used);
        if (used != ref.size() - hash - 1) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidArgument, "bad group index in fixture_ref \"" + ref + "\"");
    }
    const auto set = hsf::load_hsf(ref.substr(0, hash));
    if (index >= set.groups.size()) {
        throw Error(ErrorKind::InvalidArgument, "fixture_ref group " + std::to_string(index) + " outside " +
                                                    std::to_string(set.groups.size()) + " groups");
    }
    if (layer >= set.layer_count) {
        throw Error(ErrorKind::InvalidArgument, "fixture has no layer " + std::to_string(layer));
    }
    return group_mean(set.groups[index], layer, set.dim);
}

struct SessionStore::Session {
    mutable std::shared_mutex mutex;
    SessionSnapshot data;
};

SessionStore::SessionStore(std::optional<std::filesystem::path> state_dir) : state_dir_(std::move(state_dir)) {
    if (state_dir_) {
        std::error_code ec;
        std::filesystem::create_directories(*state_dir_, ec);
        if (ec) throw Error(ErrorKind::Io, "cannot create state directory " + state_dir_->string() + ": " + ec.message());
        load_all();
    }
}

SessionStore::~SessionStore() = default;

std::string SessionStore::create_session(const std::filesystem::path& basin_file, std::int64_t warn_threshold_n,
                                         std::optional<std::size_t> layer) {
    const auto set = hsf::load_hsf(basin_file);
    const std::size_t at = layer.value_or(hsf::penultimate_layer(set));
    if (at >= set.layer_count) {
        throw Error(ErrorKind::InvalidArgument, "basin file has no layer " + std::to_string(at));
    }
    return create_session(geometry::basin_pair_at(set, at), warn_threshold_n, basin_file.string());
}

std::string SessionStore::create_session(geometry::BasinPair basins, std::int64_t warn_threshold_n,
                                         std::string source) {
    if (basins.b.empty()) throw Error(ErrorKind::EmptyInput, "basins have zero dimension");
    auto session = std::make_shared<Session>();
    session->data.basin_file = std::move(source);
    session->data.warn_threshold_n = warn_threshold_n;
    session->data.basins = std::move(basins);
    return insert(std::move(session));
}

std::string SessionStore::insert(std::shared_ptr<Session> session) {
    std::unique_lock lock(mutex_);
    const std::string id = "session-" + std::to_string(next_id_++);
    session->data.id = id;
    persist(*session);
    sessions_.emplace(id, std::move(session));
    return id;
}

std::shared_ptr<SessionStore::Session> SessionStore::find(const std::string& id) const {
    std::shared_lock lock(mutex_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorKind::UnknownSession, "no session \"" + id + "\"");
    return it->second;
}

TraceEntry SessionStore::append_turn(const std::string& id, const std::string& role, Vector state) {
    if (role != "user" && role != "assistant") {
        throw Error(ErrorKind::UnknownRole, "unknown role \"" + role + "\"");
    }
    const auto session = find(id);
    std::unique_lock lock(session->mutex);
    SessionSnapshot& s = session->data;
    require_same_dim(state, s.basins.b, "turn state vs basins");
    require_finite(state, "turn state");

    s.roles.push_back(role);
    s.states.push_back(std::move(state));
    s.running_c = mean_of(s.states);
    TraceEntry entry;
    entry.turn_index = s.trace.size();
    entry.role = role;
    entry.forecast = geometry::tip_forecast(s.running_c, s.basins.b, s.basins.d);
    entry.warning = warning_for(entry.forecast, s.warn_threshold_n);
    s.trace.push_back(entry);
    persist(*session);
    return entry;
}

TraceEntry SessionStore::append_fixture_turn(const std::string& id, const std::string& role,
                                             const std::string& fixture_ref) {
    const std::size_t layer = find(id)->data.basins.layer;  // fixed at creation
    return append_turn(id, role, resolve_fixture_ref(fixture_ref, layer));
}

std::vector<TraceEntry> SessionStore::trace(const std::string& id) const {
    const auto session = find(id);
    std::shared_lock lock(session->mutex);
    return session->data.trace;
}

SessionSnapshot SessionStore::snapshot(const std::string& id) const {
    const auto session = find(id);
    std::shared_lock lock(session->mutex);
    return session->data;
}

std::vector<std::string> SessionStore::list() const {
    std::shared_lock lock(mutex_);
    std::vector<std::pair<std::uint64_t, std::string>> keyed;
    for (const auto& [id, s] : sessions_) keyed.emplace_back(std::stoull(id.substr(8)), id);
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::string> ids;
    for (auto& [n, id] : keyed) ids.push_back(std::move(id));
    return ids;
}

std::size_t SessionStore::size() const {
    std::shared_lock lock(mutex_);
    return sessions_.size();
}

void SessionStore::persist(const Session& session) const {
    if (!state_dir_) return;
    const SessionSnapshot& s = session.data;
    nlohmann::json j;
    j["id"] = s.id;
    j["basin_file"] = s.basin_file;
    j["warn_threshold_n"] = s.warn_threshold_n;
    j["layer"] = s.basins.layer;
    j["b"] = s.basins.b;
    j["d"] = s.basins.d;
    j["turns"] = nlohmann::json::array();
    for (std::size_t k = 0; k < s.states.size(); ++k) {
        j["turns"].push_back({{"role", s.roles[k]}, {"state", s.states[k]}});
    }
    j["trace"] = nlohmann::json::array();
    for (const auto& e : s.trace) j["trace"].push_back(to_json(e));

    const auto target = *state_dir_ / (s.id + ".json");
    const auto partial = *state_dir_ / (s.id + ".json.tmp");
    {
        std::ofstream out(partial, std::ios::trunc);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + partial.string());
        out << j.dump() << '\n';
        if (!out) throw Error(ErrorKind::Io, "failed writing " + partial.string());
    }
    std::error_code ec;
    std::filesystem::rename(partial, target, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot replace " + target.string() + ": " + ec.message());
}

void SessionStore::load_all() {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(*state_dir_)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && name.rfind("session-", 0) == 0 && entry.path().extension() == ".json") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    for (const auto& path : files) {
        std::ifstream in(path);
        try {
            const auto j = nlohmann::json::parse(in);
            auto session = std::make_shared<Session>();
            SessionSnapshot& s = session->data;
            s.id = j.at("id").get<std::string>();
            s.basin_file = j.at("basin_file").get<std::string>();
            s.warn_threshold_n = j.at("warn_threshold_n").get<std::int64_t>();
            s.basins = geometry::make_basin_pair(j.at("layer").get<std::size_t>(), j.at("b").get<Vector>(),
                                                 j.at("d").get<Vector>());
            for (const auto& t : j.at("turns")) {
                s.roles.push_back(t.at("role").get<std::string>());
                s.states.push_back(t.at("state").get<Vector>());
            }
            for (const auto& e : j.at("trace")) s.trace.push_back(entry_from_json(e));
            if (s.trace.size() != s.states.size()) {
                throw Error(ErrorKind::BadHeader, "trace and turn counts differ");
            }
            if (!s.states.empty()) s.running_c = mean_of(s.states);
            const std::uint64_t number = std::stoull(s.id.substr(8));
            next_id_ = std::max(next_id_, number + 1);
            sessions_.emplace(s.id, std::move(session));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::BadHeader, path.string() + ": " + e.what());
        } catch (const std::invalid_argument&) {
            throw Error(ErrorKind::BadHeader, path.string() + ": malformed session id");
        }
    }
}

std::vector<TraceEntry> replay(const hsf::LabeledStateSet& conversation, const geometry::BasinPair& basins,
                               std::int64_t warn_threshold_n) {
    if (basins.layer >= conversation.layer_count) {
        throw Error(ErrorKind::InvalidArgument, "conversation fixture has no layer " + std::to_string(basins.layer));
    }
    if (conversation.dim != basins.b.size()) {
        throw Error(ErrorKind::DimMismatch, "conversation dim " + std::to_string(conversation.dim) +
                                                " vs basin dim " + std::to_string(basins.b.size()));
    }
    const auto turns = conversation.groups_with(hsf::Label::C);
    if (turns.empty()) throw Error(ErrorKind::MissingGroup, "conversation fixture has no C groups");

    SessionStore store;
    const std::string id = store.create_session(basins, warn_threshold_n);
    for (const hsf::Group* g : turns) {
        store.append_turn(id, role_from_phrase(g->phrase), group_mean(*g, basins.layer, conversation.dim));
    }
    return store.trace(id);
}

std::optional<std::size_t> warning_onset(const std::vector<TraceEntry>& trace) {
    for (const auto& e : trace) {
        if (e.warning) return e.turn_index;
    }
    return std::nullopt;
}

}  // namespace tipping::service
