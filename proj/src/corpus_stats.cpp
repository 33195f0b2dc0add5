#include "tipping/corpus_stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <unordered_map>

#include <json.hpp>

#include "tipping/error.hpp"
#include "tipping/random.hpp"

namespace tipping::corpus {

std::string_view to_string(Role r) { return r == Role::User ? "user" : "assistant"; }

Role parse_role(std::string_view name) {
    if (name == "user") return Role::User;
    if (name == "assistant") return Role::Assistant;
    throw Error(ErrorKind::UnknownRole, "unknown role \"" + std::string(name) + "\"");
}

std::string_view to_string(Correlation c) {
    return c == Correlation::Exchangeable ? "exchangeable" : "independence";
}

Correlation parse_correlation(std::string_view name) {
    if (name == "exchangeable") return Correlation::Exchangeable;
    if (name == "independence") return Correlation::Independence;
    throw Error(ErrorKind::InvalidArgument, "unknown correlation structure \"" + std::string(name) + "\"");
}

// --- ingestion -----------------------------------------------------------

namespace {

std::string id_field(const nlohmann::json& j, const char* key) {
    const auto& v = j.at(key);
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw Error(ErrorKind::InvalidArgument, std::string(key) + " must be a string or integer");
}

TurnRecord parse_turn(const nlohmann::json& j) {
    TurnRecord t;
    t.conversation_id = id_field(j, "conversation_id");
    t.participant_id = id_field(j, "participant_id");
    const auto& index = j.at("turn_index");
    if (!index.is_number_integer() || index.get<long long>() < 0) {
        throw Error(ErrorKind::InvalidArgument, "turn_index must be a non-negative integer");
    }
    t.turn_index = index.get<std::size_t>();
    t.role = parse_role(j.at("role").get<std::string>());
    const auto& label = j.at("d_label");
    if (label.is_boolean()) {
        t.d_label = label.get<bool>() ? 1 : 0;
    } else if (label.is_number_integer() && (label.get<long long>() == 0 || label.get<long long>() == 1)) {
        t.d_label = label.get<int>();
    } else {
        throw Error(ErrorKind::InvalidArgument, "d_label must be 0 or 1");
    }
    if (j.contains("text") && !j.at("text").is_null()) t.text = j.at("text").get<std::string>();
    return t;
}

}  // namespace

std::vector<TurnRecord> read_turns_jsonl(std::istream& in) {
    std::vector<TurnRecord> turns;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            turns.push_back(parse_turn(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::InvalidArgument, "line " + std::to_string(line_number) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(e.kind(), "line " + std::to_string(line_number) + ": " + e.what());
        }
    }
    return turns;
}

std::vector<TurnRecord> load_turns(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    return read_turns_jsonl(in);
}

void write_turns_jsonl(std::span<const TurnRecord> turns, std::ostream& out) {
    for (const auto& t : turns) {
        nlohmann::json j = {{"conversation_id", t.conversation_id},
                            {"participant_id", t.participant_id},
                            {"turn_index", t.turn_index},
                            {"role", to_string(t.role)},
                            {"d_label", t.d_label}};
        if (t.text) j["text"] = *t.text;
        out << j.dump() << '\n';
    }
    if (!out) throw Error(ErrorKind::Io, "failed writing turn records");
}

std::vector<Conversation> group_conversations(std::span<const TurnRecord> turns) {
    std::vector<Conversation> conversations;
    std::unordered_map<std::string, std::size_t> slot;
    for (const auto& t : turns) {
        if (t.d_label != 0 && t.d_label != 1) {
            throw Error(ErrorKind::InvalidArgument, "d_label must be 0 or 1 in conversation " + t.conversation_id);
        }
        auto [it, inserted] = slot.emplace(t.conversation_id, conversations.size());
        if (inserted) conversations.push_back({t.conversation_id, {}});
        conversations[it->second].turns.push_back(&t);
    }
    for (auto& c : conversations) {
        std::stable_sort(c.turns.begin(), c.turns.end(),
                         [](const TurnRecord* a, const TurnRecord* b) { return a->turn_index < b->turn_index; });
        for (std::size_t k = 1; k < c.turns.size(); ++k) {
            if (c.turns[k]->turn_index == c.turns[k - 1]->turn_index) {
                throw Error(ErrorKind::Duplicate, "conversation " + c.id + " repeats turn_index " +
                                                      std::to_string(c.turns[k]->turn_index));
            }
        }
    }
    return conversations;
}

// --- design --------------------------------------------------------------

std::vector<DesignRow> build_design(std::span<const TurnRecord> turns) {
    std::vector<DesignRow> rows;
    for (const auto& c : group_conversations(turns)) {
        std::size_t prior = 0;
        std::size_t prior_d = 0;
        std::optional<int> last_user;
        for (const TurnRecord* t : c.turns) {
            if (t->role == Role::Assistant && prior > 0) {
                DesignRow row;
                row.outcome = t->d_label;
                row.prior_d_fraction = static_cast<double>(prior_d) / static_cast<double>(prior);
                row.prev_user_d = last_user.value_or(0);
                row.prior_length = prior;
                row.cluster = t->participant_id;
                row.conversation_id = c.id;
                row.turn_index = t->turn_index;
                rows.push_back(std::move(row));
            }
            ++prior;
            prior_d += static_cast<std::size_t>(t->d_label);
            if (t->role == Role::User) last_user = t->d_label;
        }
    }
    if (rows.empty()) return rows;

    double mean = 0.0;
    for (const auto& r : rows) mean += static_cast<double>(r.prior_length);
    mean /= static_cast<double>(rows.size());
    double ss = 0.0;
    for (const auto& r : rows) ss += (static_cast<double>(r.prior_length) - mean) * (static_cast<double>(r.prior_length) - mean);
    const double sd = rows.size() > 1 ? std::sqrt(ss / static_cast<double>(rows.size() - 1)) : 0.0;
    for (auto& r : rows) r.prior_length_z = sd > 0.0 ? (static_cast<double>(r.prior_length) - mean) / sd : 0.0;
    return rows;
}

// --- GEE -----------------------------------------------------------------

namespace {

struct ClusterBlocks {
    std::vector<std::vector<Eigen::Index>> rows;
};

ClusterBlocks cluster_blocks(std::span<const std::string> clusters) {
    ClusterBlocks blocks;
    std::unordered_map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
        auto [it, inserted] = slot.emplace(clusters[i], blocks.rows.size());
        if (inserted) blocks.rows.emplace_back();
        blocks.rows[it->second].push_back(static_cast<Eigen::Index>(i));
    }
    return blocks;
}

struct WorkingState {
    Eigen::VectorXd sqrt_v;  // sqrt(mu (1 - mu))
    Eigen::VectorXd pearson;
    double scale = 1.0;
    double alpha = 0.0;
    bool clamped = false;
};

WorkingState working_state(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                           const ClusterBlocks& blocks, Correlation correlation) {
    const Eigen::Index n = x.rows();
    const auto p = static_cast<double>(x.cols());
    WorkingState s;
    s.sqrt_v.resize(n);
    s.pearson.resize(n);
    const Eigen::VectorXd eta = x * beta;
    double sum_sq = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = 1.0 / (1.0 + std::exp(-eta(i)));
        const double sd = std::sqrt(std::max(mu * (1.0 - mu), 1e-300));
        s.sqrt_v(i) = sd;
        s.pearson(i) = (y(i) - mu) / sd;
        sum_sq += s.pearson(i) * s.pearson(i);
    }
    s.scale = sum_sq / std::max(static_cast<double>(n) - p, 1.0);
    if (correlation == Correlation::Independence) return s;

    double cross = 0.0;
    double pairs = 0.0;
    std::size_t largest = 1;
    for (const auto& rows : blocks.rows) {
        double total = 0.0;
        double squares = 0.0;
        for (Eigen::Index i : rows) {
            total += s.pearson(i);
            squares += s.pearson(i) * s.pearson(i);
        }
        cross += 0.5 * (total * total - squares);
        const auto m = static_cast<double>(rows.size());
        pairs += 0.5 * m * (m - 1.0);
        largest = std::max(largest, rows.size());
    }
    if (pairs - p > 0.0 && s.scale > 0.0) s.alpha = cross / s.scale / (pairs - p);

    // keep the working correlation positive definite for every cluster size
    constexpr double kMargin = 1e-6;
    const double upper = 1.0 - kMargin;
    const double lower = largest > 1 ? -1.0 / static_cast<double>(largest - 1) + kMargin : -upper;
    if (s.alpha > upper || s.alpha < lower) {
        s.alpha = std::clamp(s.alpha, lower, upper);
        s.clamped = true;
    }
    return s;
}

// Per-cluster pieces of Z' R^-1 Z and Z' R^-1 r with Z = sqrt(v) X, using
// the closed-form exchangeable inverse (1/(1-a)) (I - c 11') with
// c = a / (1 - a + m a).
struct ClusterTerms {
    Eigen::MatrixXd information;
    Eigen::VectorXd score;
};

ClusterTerms cluster_terms(const Eigen::MatrixXd& x, const WorkingState& s,
                           const std::vector<Eigen::Index>& rows) {
    const Eigen::Index p = x.cols();
    Eigen::MatrixXd ztz = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd ztr = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd z_sum = Eigen::VectorXd::Zero(p);
    double r_sum = 0.0;
    for (Eigen::Index i : rows) {
        const Eigen::VectorXd z = s.sqrt_v(i) * x.row(i).transpose();
        ztz.noalias() += z * z.transpose();
        ztr.noalias() += z * s.pearson(i);
        z_sum += z;
        r_sum += s.pearson(i);
    }
    const double a = s.alpha;
    const double m = static_cast<double>(rows.size());
    const double c = a / (1.0 - a + m * a);
    const double inv = 1.0 / (1.0 - a);
    return {inv * (ztz - c * z_sum * z_sum.transpose()), inv * (ztr - c * r_sum * z_sum)};
}

}  // namespace

GeeFit fit_gee_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        std::span<const std::string> clusters, std::span<const std::string> names,
                        Correlation correlation, const GeeOptions& options) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    if (n == 0 || p == 0) throw Error(ErrorKind::EmptyInput, "empty design");
    if (y.size() != n || static_cast<Eigen::Index>(clusters.size()) != n) {
        throw Error(ErrorKind::DimMismatch, "design, outcome and cluster lengths differ");
    }
    if (static_cast<Eigen::Index>(names.size()) != p) {
        throw Error(ErrorKind::DimMismatch, "one name per design column is required");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        if (y(i) != 0.0 && y(i) != 1.0) throw Error(ErrorKind::InvalidArgument, "outcomes must be 0 or 1");
    }
    if (!x.allFinite()) throw Error(ErrorKind::NonFinite, "design contains non-finite values");

    bool seen_constant = false;
    for (Eigen::Index j = 0; j < p; ++j) {
        const bool constant = (x.col(j).array() == x(0, j)).all();
        if (!constant) continue;
        if (seen_constant || x(0, j) == 0.0) {
            throw Error(ErrorKind::Singular, "predictor " + names[static_cast<std::size_t>(j)] + " is constant");
        }
        seen_constant = true;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < p) throw Error(ErrorKind::Singular, "design matrix is rank deficient");

    const ClusterBlocks blocks = cluster_blocks(clusters);
    if (blocks.rows.size() < 2) throw Error(ErrorKind::InvalidArgument, "at least two clusters are required");

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    GeeFit fit;
    fit.correlation = correlation;
    fit.observations = static_cast<std::size_t>(n);
    fit.clusters = blocks.rows.size();

    // Fisher scoring from `beta`; returns the iteration count.
    auto solve = [&](Correlation working, Eigen::VectorXd& beta) {
        for (std::size_t iter = 1; iter <= options.max_iterations; ++iter) {
            const WorkingState s = working_state(x, y, beta, blocks, working);
            Eigen::MatrixXd information = Eigen::MatrixXd::Zero(p, p);
            Eigen::VectorXd score = Eigen::VectorXd::Zero(p);
            for (const auto& rows : blocks.rows) {
                const ClusterTerms t = cluster_terms(x, s, rows);
                information += t.information;
                score += t.score;
            }
            Eigen::LDLT<Eigen::MatrixXd> ldlt(information);
            if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
                throw Error(ErrorKind::Singular, "GEE information matrix is not positive definite");
            }
            const Eigen::VectorXd step = ldlt.solve(score);
            beta += step;
            if (!beta.allFinite() || beta.cwiseAbs().maxCoeff() > options.divergence_bound) {
                throw Error(ErrorKind::NotConverged, "coefficients diverge after " + std::to_string(iter) +
                                                         " iterations (separation)");
            }
            if (step.cwiseAbs().maxCoeff() < options.tolerance) return iter;
        }
        throw Error(ErrorKind::NotConverged,
                    "no convergence within " + std::to_string(options.max_iterations) + " iterations");
    };
    // The exchangeable fit starts from the independence solution; starting at
    // zero lets a degenerate first alpha stall the iteration.
    if (correlation == Correlation::Exchangeable) solve(Correlation::Independence, beta);
    fit.iterations = solve(correlation, beta);

    // sandwich at the solution; the dispersion cancels between bread and meat
    const WorkingState s = working_state(x, y, beta, blocks, correlation);
    Eigen::MatrixXd bread = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
    for (const auto& rows : blocks.rows) {
        const ClusterTerms t = cluster_terms(x, s, rows);
        bread += t.information;
        meat.noalias() += t.score * t.score.transpose();
    }
    const Eigen::MatrixXd bread_inv = bread.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    fit.robust_covariance = bread_inv * meat * bread_inv;
    fit.alpha = s.alpha;
    fit.alpha_clamped = s.clamped;
    fit.scale = s.scale;

    constexpr double kZ975 = 1.959963984540054;
    for (Eigen::Index j = 0; j < p; ++j) {
        Coefficient c;
        c.name = names[static_cast<std::size_t>(j)];
        c.estimate = beta(j);
        c.robust_se = std::sqrt(std::max(fit.robust_covariance(j, j), 0.0));
        c.z = c.robust_se > 0.0 ? c.estimate / c.robust_se : 0.0;
        c.p_value = std::erfc(std::abs(c.z) / std::sqrt(2.0));
        c.odds_ratio = std::exp(c.estimate);
        c.ci_low = std::exp(c.estimate - kZ975 * c.robust_se);
        c.ci_high = std::exp(c.estimate + kZ975 * c.robust_se);
        fit.coefficients.push_back(std::move(c));
    }
    return fit;
}

GeeFit fit_clustered_logistic(std::span<const DesignRow> rows, Correlation correlation,
                              const GeeOptions& options) {
    if (rows.empty()) throw Error(ErrorKind::EmptyInput, "no design rows");
    const auto n = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd x(n, 4);
    Eigen::VectorXd y(n);
    std::vector<std::string> clusters;
    clusters.reserve(rows.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        x(i, 0) = 1.0;
        x(i, 1) = r.prior_d_fraction;
        x(i, 2) = r.prev_user_d;
        x(i, 3) = r.prior_length_z;
        y(i) = r.outcome;
        clusters.push_back(r.cluster);
    }
    return fit_gee_logistic(x, y, clusters, kPredictorNames, correlation, options);
}

// --- autocorrelation and null ---------------------------------------------

std::optional<double> lag1_pearson(std::span<const int> labels) {
    if (labels.size() < 2) return std::nullopt;
    const std::size_t m = labels.size() - 1;
    double mean_a = 0.0;
    double mean_b = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
        mean_a += labels[t];
        mean_b += labels[t + 1];
    }
    mean_a /= static_cast<double>(m);
    mean_b /= static_cast<double>(m);
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
        const double da = labels[t] - mean_a;
        const double db = labels[t + 1] - mean_b;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return sab / std::sqrt(saa * sbb);
}

namespace {

AutocorrResult pooled_autocorr(const std::vector<std::vector<int>>& sequences) {
    AutocorrResult result;
    double weighted = 0.0;
    for (const auto& labels : sequences) {
        if (labels.size() < 2) continue;
        ++result.conversations;
        const auto r = lag1_pearson(labels);
        if (!r) {
            ++result.zero_variance_conversations;
            continue;
        }
        const std::size_t w = labels.size() - 1;
        weighted += static_cast<double>(w) * *r;
        result.pairs += w;
    }
    if (result.conversations == 0) {
        throw Error(ErrorKind::EmptyInput, "no conversation has two or more turns of the role");
    }
    result.pooled = result.pairs > 0 ? weighted / static_cast<double>(result.pairs) : 0.0;
    return result;
}

std::vector<std::vector<int>> role_sequences(const std::vector<Conversation>& conversations, Role role) {
    std::vector<std::vector<int>> out;
    out.reserve(conversations.size());
    for (const auto& c : conversations) {
        std::vector<int> labels;
        for (const TurnRecord* t : c.turns) {
            if (t->role == role) labels.push_back(t->d_label);
        }
        out.push_back(std::move(labels));
    }
    return out;
}

}  // namespace

AutocorrResult lag1_autocorr(std::span<const TurnRecord> turns, Role role) {
    return pooled_autocorr(role_sequences(group_conversations(turns), role));
}

std::vector<TurnRecord> shuffle_labels(std::span<const TurnRecord> turns, std::uint64_t seed,
                                       std::uint64_t index) {
    std::vector<TurnRecord> out(turns.begin(), turns.end());
    Rng rng(seed, index);
    for (const auto& c : group_conversations(turns)) {
        for (Role role : {Role::User, Role::Assistant}) {
            std::vector<std::size_t> positions;
            std::vector<int> labels;
            for (const TurnRecord* t : c.turns) {
                if (t->role != role) continue;
                positions.push_back(static_cast<std::size_t>(t - turns.data()));
                labels.push_back(t->d_label);
            }
            rng.shuffle(std::span<int>(labels));
            for (std::size_t k = 0; k < positions.size(); ++k) out[positions[k]].d_label = labels[k];
        }
    }
    return out;
}

NullResult shuffled_null(std::span<const TurnRecord> turns, Role role, std::size_t shuffles,
                         std::uint64_t seed) {
    if (shuffles == 0) throw Error(ErrorKind::InvalidArgument, "shuffles must be positive");
    NullResult result;
    result.shuffles = shuffles;
    result.observed = lag1_autocorr(turns, role).pooled;
    result.null_values.reserve(shuffles);
    std::size_t at_least = 0;
    for (std::size_t s = 0; s < shuffles; ++s) {
        const auto permuted = shuffle_labels(turns, seed, s);
        const double value = lag1_autocorr(permuted, role).pooled;
        result.null_values.push_back(value);
        if (value >= result.observed) ++at_least;
    }
    double mean = 0.0;
    for (double v : result.null_values) mean += v;
    mean /= static_cast<double>(shuffles);
    double ss = 0.0;
    for (double v : result.null_values) ss += (v - mean) * (v - mean);
    result.null_mean = mean;
    result.null_std = shuffles > 1 ? std::sqrt(ss / static_cast<double>(shuffles - 1)) : 0.0;
    if (result.null_std > 0.0) {
        result.z = (result.observed - mean) / result.null_std;
    } else {
        result.z = result.observed == mean ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), result.observed - mean);
    }
    result.mc_p = static_cast<double>(1 + at_least) / static_cast<double>(1 + shuffles);
    return result;
}

}  // namespace tipping::corpus
