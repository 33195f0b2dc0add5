#pragma once

// One pre-norm transformer block over A/B/D embeddings lifted from 3 to
// heads*3 dimensions, used to check how far a full block (multi-head
// attention, RMSNorm, SwiGLU, residuals) moves the tipping step away from
// the bare-attention picture.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tipping/vector_ops.hpp"

namespace tipping::toy {

struct BlockConfig {
    std::size_t heads = 10;
    std::size_t d_head = 3;
    std::size_t d_ff = 120;
    double sigma_qkv = 0.05 / std::sqrt(30.0);
    double sigma_o = 0.05 / std::sqrt(30.0);
    double sigma_in = 0.20 / std::sqrt(30.0);   // both SwiGLU input projections
    double sigma_out = 0.20 / std::sqrt(120.0);
    bool use_skip = true;
    bool use_norm = true;
    bool use_mlp = true;
    bool multi_head = true;
    std::size_t max_steps = 12;
    std::uint64_t seed = 0;
    double rms_eps = 1e-6;

    std::size_t d_model() const { return heads * d_head; }
    void validate() const;
};

enum class Preset { Bare, Skip, Full };
std::string_view to_string(Preset p);
Preset parse_preset(std::string_view name);

// bare: attention only, noise-free. skip: attention + residual, noisy
// weights. full: everything on, noisy weights.
BlockConfig preset_config(Preset preset, std::uint64_t seed = 0);

// (v, ..., v) / sqrt(heads); lift(u).lift(v) == u.v
Eigen::VectorXd lift(std::span<const double> v, std::size_t heads = 10);

struct Block {
    BlockConfig config;
    std::vector<Eigen::MatrixXd> w_q, w_k, w_v;  // per head, d_head x d_model
    Eigen::MatrixXd w_o;                         // d_model x d_model
    Eigen::MatrixXd w_gate, w_value;             // d_ff x d_model
    Eigen::MatrixXd w_out;                       // d_model x d_ff
};

Block build_block(const BlockConfig& config);

Eigen::VectorXd rms_norm(const Eigen::VectorXd& x, double eps);

// Causal block output at the final position of `sequence`.
Eigen::VectorXd forward(const Block& block, std::span<const Eigen::VectorXd> sequence);

enum class Token { A, B, D };
char to_char(Token t);

struct BaseEmbeddings {
    Vector a, b, d;  // 3-vectors
};

struct TipRun {
    std::uint64_t seed = 0;
    std::vector<Token> labels;
    // Index of the first D in `labels`, i.e. the number of non-D emissions
    // before the tip.
    std::optional<std::size_t> tip_step;
};

// Greedy decoding from [lift(a)]; the emitted token is the argmax of the
// raw dot product with the lifted vocabulary, ties resolved B > D > A.
TipRun greedy_generate(const Block& block, const BaseEmbeddings& embeddings);

struct SweepStats {
    std::string name;
    std::vector<TipRun> runs;
    std::size_t tipped = 0;
    // Over tipped runs. std is the population standard deviation.
    double mean = 0.0;
    double std = 0.0;
    double median = 0.0;
    std::size_t mode = 0;
    double mode_fraction = 0.0;  // of all runs
    std::map<std::size_t, std::size_t> histogram;
};

struct NamedConfig {
    std::string name;
    BlockConfig config;
};

SweepStats seed_sweep(const NamedConfig& config, const BaseEmbeddings& embeddings,
                      std::uint64_t first_seed, std::uint64_t last_seed);
std::vector<SweepStats> seed_sweep(std::span<const NamedConfig> configs,
                                   const BaseEmbeddings& embeddings, std::uint64_t first_seed,
                                   std::uint64_t last_seed);

// --- Case-II fixture -----------------------------------------------------
//
// B = (beta, 0, 0). A lies strictly inside the ball whose diameter is OB, so
// A.B > A.A and the first greedy emission is B; B.(A - B) = -delta with
// delta = delta_ratio * beta^2. The axis D - B = (axis_x, axis_y, 0) is then
// solved so that the closed-form tipping index equals target_n_star exactly:
// x = A.(D - B) < 0 and B.(D - B) = beta * axis_x > 0.
struct CaseTwoParams {
    double beta = 0.3;
    double delta_ratio = 0.7;
    double offset_fraction = 0.8;  // in (0, 1): how far A sits from the OB axis
    double axis_x = 0.3;
    double target_n_star = 3.2;
};

BaseEmbeddings make_case_two_fixture(const CaseTwoParams& params);

void save_fixture(const BaseEmbeddings& embeddings, const std::filesystem::path& path,
                  const std::optional<CaseTwoParams>& params = std::nullopt);
BaseEmbeddings load_fixture(const std::filesystem::path& path);

}  // namespace tipping::toy
