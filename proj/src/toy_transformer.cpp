#include "tipping/toy_transformer.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "tipping/error.hpp"
#include "tipping/random.hpp"

namespace tipping::toy {

void BlockConfig::validate() const {
    if (heads == 0 || d_head == 0 || d_ff == 0) {
        throw Error(ErrorKind::InvalidArgument, "heads, d_head and d_ff must be positive");
    }
    for (double s : {sigma_qkv, sigma_o, sigma_in, sigma_out}) {
        if (!(s >= 0.0)) throw Error(ErrorKind::InvalidArgument, "noise scales must be >= 0");
    }
    if (max_steps == 0) throw Error(ErrorKind::InvalidArgument, "max_steps must be positive");
}

std::string_view to_string(Preset p) {
    switch (p) {
        case Preset::Bare: return "bare";
        case Preset::Skip: return "skip";
        case Preset::Full: return "full";
    }
    return "?";
}

Preset parse_preset(std::string_view name) {
    if (name == "bare") return Preset::Bare;
    if (name == "skip") return Preset::Skip;
    if (name == "full") return Preset::Full;
    throw Error(ErrorKind::InvalidArgument, "unknown preset \"" + std::string(name) + "\"");
}

BlockConfig preset_config(Preset preset, std::uint64_t seed) {
    BlockConfig c;
    c.seed = seed;
    switch (preset) {
        case Preset::Bare:
            c.use_skip = c.use_norm = c.use_mlp = false;
            c.sigma_qkv = c.sigma_o = c.sigma_in = c.sigma_out = 0.0;
            break;
        case Preset::Skip:
            c.use_norm = c.use_mlp = false;
            break;
        case Preset::Full:
            break;
    }
    return c;
}

Eigen::VectorXd lift(std::span<const double> v, std::size_t heads) {
    if (v.size() != 3) {
        throw Error(ErrorKind::DimMismatch, "lift expects a 3-vector, got " + std::to_string(v.size()));
    }
    Eigen::VectorXd out(3 * heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(heads));
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < 3; ++i) out(static_cast<Eigen::Index>(3 * h + i)) = v[i] * scale;
    }
    return out;
}

namespace {

Eigen::MatrixXd gaussian(Rng& rng, Eigen::Index rows, Eigen::Index cols, double sigma) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = sigma * rng.normal();
    }
    return m;
}

double silu(double z) { return z / (1.0 + std::exp(-z)); }

}  // namespace

Block build_block(const BlockConfig& config) {
    config.validate();
    Rng rng(config.seed);
    const auto dm = static_cast<Eigen::Index>(config.d_model());
    const std::size_t head_count = config.multi_head ? config.heads : 1;
    const auto dh = static_cast<Eigen::Index>(config.multi_head ? config.d_head : config.d_model());

    Block block;
    block.config = config;
    for (std::size_t a = 0; a < head_count; ++a) {
        // block selector: identity on this head's column block
        Eigen::MatrixXd selector = Eigen::MatrixXd::Zero(dh, dm);
        selector.block(0, static_cast<Eigen::Index>(a) * dh, dh, dh).setIdentity();
        block.w_q.push_back(selector + gaussian(rng, dh, dm, config.sigma_qkv));
        block.w_k.push_back(selector + gaussian(rng, dh, dm, config.sigma_qkv));
        block.w_v.push_back(selector + gaussian(rng, dh, dm, config.sigma_qkv));
    }
    block.w_o = Eigen::MatrixXd::Identity(dm, dm) + gaussian(rng, dm, dm, config.sigma_o);
    const auto ff = static_cast<Eigen::Index>(config.d_ff);
    block.w_gate = gaussian(rng, ff, dm, config.sigma_in);
    block.w_value = gaussian(rng, ff, dm, config.sigma_in);
    block.w_out = gaussian(rng, dm, ff, config.sigma_out);
    return block;
}

Eigen::VectorXd rms_norm(const Eigen::VectorXd& x, double eps) {
    const double mean_square = x.squaredNorm() / static_cast<double>(x.size());
    return x / std::sqrt(mean_square + eps);
}

Eigen::VectorXd forward(const Block& block, std::span<const Eigen::VectorXd> sequence) {
    if (sequence.empty()) throw Error(ErrorKind::EmptyInput, "forward on an empty sequence");
    const BlockConfig& cfg = block.config;
    const auto dm = static_cast<Eigen::Index>(cfg.d_model());
    for (const auto& x : sequence) {
        if (x.size() != dm) throw Error(ErrorKind::DimMismatch, "sequence vector has wrong width");
    }

    const std::size_t n = sequence.size();
    std::vector<Eigen::VectorXd> normed;
    normed.reserve(n);
    for (const auto& x : sequence) normed.push_back(cfg.use_norm ? rms_norm(x, cfg.rms_eps) : x);

    const std::size_t head_count = block.w_q.size();
    const Eigen::Index dh = block.w_q.front().rows();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Eigen::VectorXd concat(static_cast<Eigen::Index>(head_count) * dh);
    Eigen::VectorXd scores(static_cast<Eigen::Index>(n));
    for (std::size_t a = 0; a < head_count; ++a) {
        // the final position attends to every position up to itself
        const Eigen::VectorXd q = block.w_q[a] * normed.back();
        for (std::size_t t = 0; t < n; ++t) {
            scores(static_cast<Eigen::Index>(t)) = q.dot(block.w_k[a] * normed[t]) * scale;
        }
        const Eigen::VectorXd weights = (scores.array() - scores.maxCoeff()).exp();
        const double total = weights.sum();
        Eigen::VectorXd head = Eigen::VectorXd::Zero(dh);
        for (std::size_t t = 0; t < n; ++t) {
            head += (weights(static_cast<Eigen::Index>(t)) / total) * (block.w_v[a] * normed[t]);
        }
        concat.segment(static_cast<Eigen::Index>(a) * dh, dh) = head;
    }
    const Eigen::VectorXd attention = block.w_o * concat;

    Eigen::VectorXd h = cfg.use_skip ? Eigen::VectorXd(sequence.back() + attention) : attention;
    if (cfg.use_mlp) {
        const Eigen::VectorXd hn = cfg.use_norm ? rms_norm(h, cfg.rms_eps) : h;
        const Eigen::VectorXd gate = (block.w_gate * hn).unaryExpr(&silu);
        const Eigen::VectorXd value = block.w_value * hn;
        const Eigen::VectorXd mlp = block.w_out * gate.cwiseProduct(value);
        h = cfg.use_skip ? Eigen::VectorXd(h + mlp) : mlp;
    }
    return h;
}

char to_char(Token t) {
    switch (t) {
        case Token::A: return 'A';
        case Token::B: return 'B';
        case Token::D: return 'D';
    }
    return '?';
}

TipRun greedy_generate(const Block& block, const BaseEmbeddings& embeddings) {
    const std::size_t heads = block.config.heads;
    if (block.config.d_head != 3) {
        throw Error(ErrorKind::InvalidArgument, "greedy generation over lifted 3-vectors needs d_head == 3");
    }
    const Eigen::VectorXd lifted_a = lift(embeddings.a, heads);
    const Eigen::VectorXd lifted_b = lift(embeddings.b, heads);
    const Eigen::VectorXd lifted_d = lift(embeddings.d, heads);

    TipRun run;
    run.seed = block.config.seed;
    std::vector<Eigen::VectorXd> sequence{lifted_a};
    for (std::size_t step = 0; step < block.config.max_steps; ++step) {
        const Eigen::VectorXd out = forward(block, sequence);
        const double score_a = out.dot(lifted_a);
        const double score_b = out.dot(lifted_b);
        const double score_d = out.dot(lifted_d);

        // B > D > A on ties, so a tie never reads as a tip
        Token emitted = Token::B;
        double best = score_b;
        if (score_d > best) {
            emitted = Token::D;
            best = score_d;
        }
        if (score_a > best) emitted = Token::A;

        run.labels.push_back(emitted);
        if (emitted == Token::D) {
            run.tip_step = step;
            break;
        }
        sequence.push_back(emitted == Token::A ? lifted_a : lifted_b);
    }
    return run;
}

SweepStats seed_sweep(const NamedConfig& named, const BaseEmbeddings& embeddings,
                      std::uint64_t first_seed, std::uint64_t last_seed) {
    if (last_seed < first_seed) throw Error(ErrorKind::InvalidArgument, "empty seed range");
    SweepStats stats;
    stats.name = named.name;
    std::vector<double> steps;
    for (std::uint64_t seed = first_seed; seed <= last_seed; ++seed) {
        BlockConfig cfg = named.config;
        cfg.seed = seed;
        TipRun run = greedy_generate(build_block(cfg), embeddings);
        if (run.tip_step) {
            stats.histogram[*run.tip_step] += 1;
            steps.push_back(static_cast<double>(*run.tip_step));
        }
        stats.runs.push_back(std::move(run));
    }
    stats.tipped = steps.size();
    if (!steps.empty()) {
        double sum = 0.0;
        for (double s : steps) sum += s;
        stats.mean = sum / static_cast<double>(steps.size());
        double ss = 0.0;
        for (double s : steps) ss += (s - stats.mean) * (s - stats.mean);
        stats.std = std::sqrt(ss / static_cast<double>(steps.size()));
        std::sort(steps.begin(), steps.end());
        const std::size_t m = steps.size();
        stats.median = m % 2 ? steps[m / 2] : 0.5 * (steps[m / 2 - 1] + steps[m / 2]);
        std::size_t best = 0;
        for (const auto& [step, count] : stats.histogram) {
            if (count > best) {
                best = count;
                stats.mode = step;
            }
        }
        stats.mode_fraction = static_cast<double>(best) / static_cast<double>(stats.runs.size());
    }
    return stats;
}

std::vector<SweepStats> seed_sweep(std::span<const NamedConfig> configs,
                                   const BaseEmbeddings& embeddings, std::uint64_t first_seed,
                                   std::uint64_t last_seed) {
    std::vector<SweepStats> out;
    out.reserve(configs.size());
    for (const auto& c : configs) out.push_back(seed_sweep(c, embeddings, first_seed, last_seed));
    return out;
}

// --- Case-II fixture -----------------------------------------------------

BaseEmbeddings make_case_two_fixture(const CaseTwoParams& p) {
    if (!(p.beta > 0.0) || !(p.delta_ratio > 0.0 && p.delta_ratio < 1.0) ||
        !(p.offset_fraction > 0.0 && p.offset_fraction < 1.0) || !(p.axis_x > 0.0) ||
        !(p.target_n_star > 0.0)) {
        throw Error(ErrorKind::InvalidArgument, "Case-II parameters out of range");
    }
    const double delta = p.delta_ratio * p.beta * p.beta;
    const double a_x = p.beta - delta / p.beta;  // gives B.A = beta^2 - delta
    // |A|^2 < A.B  <=>  a_y^2 < delta - delta^2 / beta^2
    const double a_y = p.offset_fraction * std::sqrt(delta - delta * delta / (p.beta * p.beta));
    // solve A.(D - B) = -target * B.(D - B) * exp(delta) for the y component
    const double axis_y = -p.axis_x * (p.target_n_star * p.beta * std::exp(delta) + a_x) / a_y;

    BaseEmbeddings e;
    e.b = {p.beta, 0.0, 0.0};
    e.a = {a_x, a_y, 0.0};
    e.d = {p.beta + p.axis_x, axis_y, 0.0};
    return e;
}

void save_fixture(const BaseEmbeddings& e, const std::filesystem::path& path,
                  const std::optional<CaseTwoParams>& params) {
    nlohmann::json j;
    j["a"] = e.a;
    j["b"] = e.b;
    j["d"] = e.d;
    if (params) {
        j["generator"] = {{"beta", params->beta},
                          {"delta_ratio", params->delta_ratio},
                          {"offset_fraction", params->offset_fraction},
                          {"axis_x", params->axis_x},
                          {"target_n_star", params->target_n_star}};
    }
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

BaseEmbeddings load_fixture(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        BaseEmbeddings e{j.at("a").get<Vector>(), j.at("b").get<Vector>(), j.at("d").get<Vector>()};
        for (const Vector* v : {&e.a, &e.b, &e.d}) {
            if (v->size() != 3) throw Error(ErrorKind::DimMismatch, "fixture vectors must be 3-dimensional");
            require_finite(*v, "fixture vector");
        }
        return e;
    } catch (const nlohmann::json::exception& ex) {
        throw Error(ErrorKind::BadHeader, path.string() + ": " + ex.what());
    }
}

}  // namespace tipping::toy
