#pragma once

// Multi-turn corpus statistics: design rows from labelled conversation
// turns, GEE logistic regression clustered by participant, within-
// conversation lag-1 autocorrelation, and its role-preserving shuffled null.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace tipping::corpus {

enum class Role { User, Assistant };
std::string_view to_string(Role r);
Role parse_role(std::string_view name);  // throws UnknownRole

struct TurnRecord {
    std::string conversation_id;
    std::string participant_id;
    std::size_t turn_index = 0;
    Role role = Role::User;
    int d_label = 0;
    std::optional<std::string> text;

    bool operator==(const TurnRecord&) const = default;
};

// One JSON object per line with the field names above; blank lines are
// skipped. Errors name the line number.
std::vector<TurnRecord> read_turns_jsonl(std::istream& in);
std::vector<TurnRecord> load_turns(const std::filesystem::path& path);
void write_turns_jsonl(std::span<const TurnRecord> turns, std::ostream& out);

// Turns of one conversation ordered by turn_index.
struct Conversation {
    std::string id;
    std::vector<const TurnRecord*> turns;
};

// Conversations in first-appearance order. Throws Duplicate on a repeated
// (conversation, turn_index) and InvalidArgument on labels outside {0, 1}.
std::vector<Conversation> group_conversations(std::span<const TurnRecord> turns);

struct DesignRow {
    int outcome = 0;
    double prior_d_fraction = 0.0;
    double prev_user_d = 0.0;
    double prior_length_z = 0.0;
    std::size_t prior_length = 0;
    std::string cluster;
    std::string conversation_id;
    std::size_t turn_index = 0;
};

inline const std::vector<std::string> kPredictorNames = {"intercept", "prior_d_fraction",
                                                         "prev_user_d", "prior_length_z"};

// One row per assistant turn with at least one prior turn. Prior length is
// z-scored with the mean and sample standard deviation over those rows (0
// when the standard deviation is 0).
std::vector<DesignRow> build_design(std::span<const TurnRecord> turns);

enum class Correlation { Exchangeable, Independence };
std::string_view to_string(Correlation c);
Correlation parse_correlation(std::string_view name);

struct GeeOptions {
    double tolerance = 1e-8;
    std::size_t max_iterations = 100;
    // |coefficient| beyond this is treated as separation
    double divergence_bound = 30.0;
};

struct Coefficient {
    std::string name;
    double estimate = 0.0;
    double robust_se = 0.0;
    double z = 0.0;
    double p_value = 1.0;
    double odds_ratio = 1.0;
    double ci_low = 1.0;
    double ci_high = 1.0;
};

struct GeeFit {
    Correlation correlation = Correlation::Exchangeable;
    std::vector<Coefficient> coefficients;
    double alpha = 0.0;  // working correlation, 0 under independence
    double scale = 1.0;  // Pearson dispersion estimate
    bool alpha_clamped = false;
    std::size_t iterations = 0;
    std::size_t observations = 0;
    std::size_t clusters = 0;
    Eigen::MatrixXd robust_covariance;
};

// Logit-link GEE. `x` includes the intercept column; `clusters` labels each
// row. Throws NotConverged on separation or when the iteration limit is hit,
// Singular on a rank-deficient or constant-column design, InvalidArgument
// with fewer than two clusters.
GeeFit fit_gee_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                        std::span<const std::string> clusters, std::span<const std::string> names,
                        Correlation correlation, const GeeOptions& options = {});

GeeFit fit_clustered_logistic(std::span<const DesignRow> rows, Correlation correlation,
                              const GeeOptions& options = {});

struct AutocorrResult {
    double pooled = 0.0;
    std::size_t conversations = 0;              // with >= 2 turns of the role
    std::size_t zero_variance_conversations = 0;  // included with weight 0
    std::size_t pairs = 0;                       // total weight
};

// Pearson correlation of (y_t, y_t+1) pairs per conversation over the role's
// label sequence, pooled with weights equal to the pair count.
AutocorrResult lag1_autocorr(std::span<const TurnRecord> turns, Role role);

// Single-sequence helper: nullopt when either lagged half has zero variance.
std::optional<double> lag1_pearson(std::span<const int> labels);

struct NullResult {
    double observed = 0.0;
    double null_mean = 0.0;
    double null_std = 0.0;  // sample standard deviation
    double z = 0.0;
    double mc_p = 1.0;
    std::size_t shuffles = 0;
    std::vector<double> null_values;
};

// Each shuffle permutes labels among same-role turns inside every
// conversation, using an independent stream per shuffle index.
NullResult shuffled_null(std::span<const TurnRecord> turns, Role role, std::size_t shuffles,
                         std::uint64_t seed);

// The permuted corpus for one shuffle index, exposed for testing.
std::vector<TurnRecord> shuffle_labels(std::span<const TurnRecord> turns, std::uint64_t seed,
                                       std::uint64_t index);

}  // namespace tipping::corpus
