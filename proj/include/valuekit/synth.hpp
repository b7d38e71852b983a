#pragma once

// Seeded synthetic corpora: gold matrices with target per-value prevalence and
// simulated model outputs whose class-conditional probabilities follow Beta
// distributions. Output uses the same GoldMatrix/ProbMatrix types (and hence
// the same TSV files) as real data.

#include "valuekit/data_model.hpp"

#include <cmath>

namespace valuekit {

// ============================================================================
// REFERENCE PREVALENCE
// ============================================================================

struct SplitCounts {
    std::size_t n = 0;
    std::size_t presence = 0;
    std::array<std::size_t, kNumValues> values{};
};

// Per-value positive counts of the English corpus splits, canonical order.
inline constexpr SplitCounts kReferenceTrain{
    44758, 23064, {577, 1616, 1173, 385, 2873, 2072, 2238, 810, 909, 4006, 537, 2730, 604, 107, 1025, 868, 2224, 918, 479}};
inline constexpr SplitCounts kReferenceValidation{
    14904, 7600, {171, 486, 420, 100, 949, 656, 724, 283, 279, 1261, 274, 955, 204, 43, 341, 288, 671, 383, 121}};
inline constexpr SplitCounts kReferenceTest{
    14569, 7403, {170, 511, 372, 125, 911, 631, 806, 267, 353, 1151, 197, 911, 195, 31, 323, 288, 734, 293, 170}};

struct PrevalenceProfile {
    std::array<double, kNumValues> per_value{};

    static PrevalenceProfile uniform(double p) {
        PrevalenceProfile prof;
        prof.per_value.fill(p);
        prof.validate();
        return prof;
    }

    static PrevalenceProfile from_counts(const SplitCounts& counts) {
        PrevalenceProfile prof;
        for (std::size_t v = 0; v < kNumValues; ++v)
            prof.per_value[v] = static_cast<double>(counts.values[v]) / static_cast<double>(counts.n);
        return prof;
    }

    // Train-split prevalences.
    static PrevalenceProfile reference() { return from_counts(kReferenceTrain); }

    void validate() const {
        for (double p : per_value)
            if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("prevalence must lie in [0,1]");
    }

    // 1 - prod_v (1 - pi_v): presence rate under independent labels.
    double expected_presence() const {
        double none = 1.0;
        for (double p : per_value) none *= 1.0 - p;
        return 1.0 - none;
    }
};

// ============================================================================
// GOLD
// ============================================================================

// If `if_value` is drawn positive, `then_value` is switched on with
// `probability`. Synthetic-only; used to correlate labels for gate experiments.
struct Cooccurrence {
    std::size_t if_value = 0;
    std::size_t then_value = 0;
    double probability = 0.0;
};

struct GoldOptions {
    std::string key_prefix = "s";
    std::size_t sentences_per_text = 20;
    std::vector<Cooccurrence> cooccurrence{};
    Split split = Split::unspecified;
    unsigned workers = 1;
};

inline constexpr std::size_t kSynthChunk = 4096;

inline std::vector<SentenceKey> synthetic_keys(std::size_t n, const GoldOptions& opt) {
    if (opt.sentences_per_text == 0) throw ValidationError("sentences_per_text must be positive");
    std::vector<SentenceKey> keys;
    keys.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        keys.push_back({opt.key_prefix + "-" + std::to_string(i / opt.sentences_per_text),
                        std::to_string(i % opt.sentences_per_text + 1)});
    return keys;
}

// Each label is an independent Bernoulli(pi_v) draw (plus optional
// co-occurrence rules); presence is derived. Rows are generated in chunks
// with per-chunk engines, so the result depends only on (n, profile, seed).
inline GoldMatrix generate_gold(std::size_t n, const PrevalenceProfile& profile, std::uint64_t seed,
                                const GoldOptions& opt = {}) {
    profile.validate();
    for (const auto& rule : opt.cooccurrence)
        if (rule.if_value >= kNumValues || rule.then_value >= kNumValues || !(rule.probability >= 0.0 && rule.probability <= 1.0))
            throw ValidationError("invalid co-occurrence rule");

    BinaryMatrix labels(n, kNumValues);
    const std::size_t chunks = (n + kSynthChunk - 1) / kSynthChunk;
    parallel_blocks(chunks, opt.workers, [&](std::size_t cb, std::size_t ce) {
        for (std::size_t chunk = cb; chunk < ce; ++chunk) {
            auto eng = seeded_engine({seed, 0x601DULL, chunk});
            const std::size_t end = std::min(n, (chunk + 1) * kSynthChunk);
            for (std::size_t r = chunk * kSynthChunk; r < end; ++r) {
                auto row = labels.row(r);
                for (std::size_t v = 0; v < kNumValues; ++v)
                    row[v] = std::bernoulli_distribution(profile.per_value[v])(eng) ? 1 : 0;
                for (const auto& rule : opt.cooccurrence) {
                    const bool fire = std::bernoulli_distribution(rule.probability)(eng);
                    if (row[rule.if_value] && fire) row[rule.then_value] = 1;
                }
            }
        }
    });
    return GoldMatrix(synthetic_keys(n, opt), std::move(labels), opt.split);
}

// Deterministic fixture with exact counts: the first `presence` rows are
// moral and value labels are laid cyclically over them, the rest are empty.
inline GoldMatrix gold_with_counts(const SplitCounts& counts, const GoldOptions& opt = {}) {
    if (counts.presence > counts.n) throw ValidationError("presence count exceeds n");
    std::size_t total = 0;
    for (auto c : counts.values) {
        if (c > counts.presence) throw ValidationError("value count exceeds presence count");
        total += c;
    }
    if (counts.presence > 0 && total < counts.presence)
        throw ValidationError("value counts cannot cover every presence row");
    if (counts.presence == 0 && total > 0) throw ValidationError("value counts without presence rows");

    BinaryMatrix labels(counts.n, kNumValues);
    std::size_t offset = 0;
    for (std::size_t v = 0; v < kNumValues; ++v) {
        for (std::size_t i = 0; i < counts.values[v]; ++i) labels((offset + i) % counts.presence, v) = 1;
        if (counts.presence > 0) offset = (offset + counts.values[v]) % counts.presence;
    }
    return GoldMatrix(synthetic_keys(counts.n, opt), std::move(labels), opt.split);
}

// ============================================================================
// SIMULATED MODELS
// ============================================================================

struct BetaShape {
    double alpha = 1.0;
    double beta = 1.0;
};

struct ConditionalShapes {
    BetaShape positive;  // distribution of p when the gold label is 1
    BetaShape negative;  // ... and when it is 0
};

struct SkillProfile {
    std::vector<ConditionalShapes> per_column;
    bool deterministic = false;  // emit p = gold exactly

    static SkillProfile uniform(ConditionalShapes shapes, std::size_t k = kNumValues) {
        SkillProfile s;
        s.per_column.assign(k, shapes);
        return s;
    }

    static SkillProfile exact(std::size_t k = kNumValues) {
        SkillProfile s = uniform({}, k);
        s.deterministic = true;
        return s;
    }

    void validate(std::size_t k) const {
        if (per_column.size() != k)
            throw ValidationError("skill profile has " + std::to_string(per_column.size()) + " columns, expected " +
                                  std::to_string(k));
        for (const auto& s : per_column)
            for (const auto& b : {s.positive, s.negative})
                if (!(b.alpha > 0.0 && b.beta > 0.0) || !std::isfinite(b.alpha) || !std::isfinite(b.beta))
                    throw ValidationError("Beta shape parameters must be positive and finite");
    }
};

inline double sample_beta(std::mt19937_64& eng, const BetaShape& shape) {
    const double x = std::gamma_distribution<double>(shape.alpha, 1.0)(eng);
    const double y = std::gamma_distribution<double>(shape.beta, 1.0)(eng);
    if (x + y <= 0.0) return 0.5;
    return std::clamp(x / (x + y), 0.0, 1.0);
}

inline ProbMatrix simulate_targets(const std::vector<SentenceKey>& keys, const BinaryMatrix& targets,
                                   const SkillProfile& skill, std::uint64_t seed, std::string name, unsigned workers = 1) {
    skill.validate(targets.cols());
    const std::size_t n = targets.rows(), k = targets.cols();
    RealMatrix probs(n, k);
    if (skill.deterministic) {
        for (std::size_t i = 0; i < probs.values().size(); ++i) probs.values()[i] = targets.values()[i];
        return ProbMatrix(keys, std::move(probs), std::move(name));
    }
    const std::size_t chunks = (n + kSynthChunk - 1) / kSynthChunk;
    parallel_blocks(chunks, workers, [&](std::size_t cb, std::size_t ce) {
        for (std::size_t chunk = cb; chunk < ce; ++chunk) {
            auto eng = seeded_engine({seed, 0x5C0EULL, chunk});
            const std::size_t end = std::min(n, (chunk + 1) * kSynthChunk);
            for (std::size_t r = chunk * kSynthChunk; r < end; ++r)
                for (std::size_t c = 0; c < k; ++c) {
                    const auto& s = skill.per_column[c];
                    probs(r, c) = sample_beta(eng, targets(r, c) ? s.positive : s.negative);
                }
        }
    });
    return ProbMatrix(keys, std::move(probs), std::move(name));
}

// 19-column value detector output.
inline ProbMatrix simulate_model(const GoldMatrix& gold, const SkillProfile& skill, std::uint64_t seed,
                                 std::string name = "sim", unsigned workers = 1) {
    return simulate_targets(gold.keys(), gold.labels(), skill, seed, std::move(name), workers);
}

// Single-column presence gate output.
inline ProbMatrix simulate_gate(const GoldMatrix& gold, const SkillProfile& skill, std::uint64_t seed,
                                std::string name = "gate", unsigned workers = 1) {
    return simulate_targets(gold.keys(), gold.targets(1), skill, seed, std::move(name), workers);
}

}  // namespace valuekit
