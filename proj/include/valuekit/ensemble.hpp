#pragma once

// Voting ensembles and greedy forward selection.
//
// Selection starts from the best single run (validation macro-F1) and visits
// the rest in descending validation macro-F1. A candidate is kept only when
// the one-sided 95% bootstrap lower bound of the macro-F1 gain over the
// current ensemble is > 0 and at least `min_relative` of the current
// ensemble's macro-F1. Passes repeat until one adds nothing.

#include "valuekit/stats.hpp"
#include "valuekit/thresholds.hpp"

namespace valuekit {

enum class VoteMode { hard, soft, weighted };
enum class TieRule { positive, negative };

inline std::string_view to_string(VoteMode m) {
    switch (m) {
        case VoteMode::hard: return "hard";
        case VoteMode::soft: return "soft";
        default: return "weighted";
    }
}

inline VoteMode parse_vote_mode(std::string_view s) {
    if (s == "hard") return VoteMode::hard;
    if (s == "soft") return VoteMode::soft;
    if (s == "weighted") return VoteMode::weighted;
    throw ValidationError("unknown vote mode '" + std::string(s) + "'");
}

inline std::string_view to_string(TieRule t) { return t == TieRule::positive ? "positive" : "negative"; }

inline TieRule parse_tie_rule(std::string_view s) {
    if (s == "positive") return TieRule::positive;
    if (s == "negative") return TieRule::negative;
    throw ValidationError("unknown tie rule '" + std::string(s) + "'");
}

// Non-negative weights rescaled to sum to 1. All-zero weights become uniform.
inline std::vector<double> normalize_weights(std::span<const double> w) {
    if (w.empty()) throw ValidationError("no weights");
    double total = 0.0;
    for (double x : w) {
        if (!(x >= 0.0) || !std::isfinite(x)) throw ValidationError("weights must be finite and non-negative");
        total += x;
    }
    std::vector<double> out(w.size(), 1.0 / static_cast<double>(w.size()));
    if (total > 0.0)
        for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] / total;
    return out;
}

// ============================================================================
// VOTING
// ============================================================================

// Element-wise weighted mean. Weights default to uniform and are normalised.
inline ProbMatrix soft_vote(std::span<const ProbMatrix> members, const std::optional<std::vector<double>>& weights = std::nullopt,
                            std::string name = "soft-vote") {
    if (members.empty()) throw ValidationError("soft_vote: empty member list");
    const auto& first = members.front();
    for (const auto& m : members) {
        if (m.cols() != first.cols()) throw AlignmentError("soft_vote: members differ in column count");
        require_same_keys(first.keys(), m.keys(), "soft_vote");
    }
    std::vector<double> w = weights ? normalize_weights(*weights)
                                    : std::vector<double>(members.size(), 1.0 / static_cast<double>(members.size()));
    if (w.size() != members.size()) throw ValidationError("soft_vote: one weight per member required");

    RealMatrix out(first.size(), first.cols());
    auto dst = out.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        const double x0 = first.probs().values()[i];
        double acc = 0.0;
        bool same = true;
        for (std::size_t m = 0; m < members.size(); ++m) {
            const double x = members[m].probs().values()[i];
            acc += w[m] * x;
            same = same && x == x0;
        }
        // A unanimous cell keeps its exact value so grid boundaries do not shift by an ulp.
        dst[i] = same ? x0 : std::clamp(acc, 0.0, 1.0);
    }
    return ProbMatrix(first.keys(), std::move(out), std::move(name));
}

// Majority of binarised votes. TieRule::positive: 1 iff votes >= ceil(m/2);
// TieRule::negative: 1 iff votes > m/2.
inline BinaryMatrix hard_vote(std::span<const BinaryMatrix> members, TieRule tie = TieRule::positive) {
    if (members.empty()) throw ValidationError("hard_vote: empty member list");
    const auto& first = members.front();
    for (const auto& m : members)
        if (m.rows() != first.rows() || m.cols() != first.cols()) throw AlignmentError("hard_vote: members differ in shape");
    const std::size_t m = members.size();
    const std::size_t need = tie == TieRule::positive ? (m + 1) / 2 : m / 2 + 1;
    BinaryMatrix out(first.rows(), first.cols());
    for (std::size_t i = 0; i < out.values().size(); ++i) {
        std::size_t votes = 0;
        for (const auto& mem : members) {
            const auto x = mem.values()[i];
            if (x > 1) throw ValidationError("hard_vote: non-binary member prediction");
            votes += x;
        }
        out.values()[i] = votes >= need ? 1 : 0;
    }
    return out;
}

// Global t* for averaged probabilities (macro-F1 objective); frozen afterwards.
inline GlobalTuning tune_ensemble_threshold(const ProbMatrix& ensemble_probs, const GoldMatrix& gold,
                                            const Grid& grid = Grid::uniform(), ZeroDivision zd = ZeroDivision::zero) {
    return tune_global(ensemble_probs, gold, Objective::macro_f1, grid, zd);
}

// ============================================================================
// CANDIDATES AND SPEC
// ============================================================================

struct CandidateRun {
    std::string name;
    ProbMatrix validation;
    std::optional<ProbMatrix> test;
    // The run's own threshold regime; a tuned global threshold on
    // validation is filled in by prepare_candidates when absent.
    std::optional<ThresholdSet> thresholds;
    double val_macro_f1 = 0.0;
};

// Fills in each candidate's own thresholds and validation macro-F1.
inline void prepare_candidates(std::vector<CandidateRun>& pool, const GoldMatrix& gold_val,
                               const Grid& grid = Grid::uniform(), ZeroDivision zd = ZeroDivision::zero) {
    for (auto& run : pool) {
        if (run.validation.cols() != kNumValues)
            throw ValidationError("candidate '" + run.name + "' must have 19 value columns");
        require_same_keys(run.validation.keys(), gold_val.keys(), "candidate '" + run.name + "'");
        if (!run.thresholds) {
            auto t = tune_global(run.validation, gold_val, Objective::macro_f1, grid, zd);
            run.thresholds = ThresholdSet::tuned(t.threshold, gold_val.split());
        }
        run.val_macro_f1 = macro_f1(binarize(run.validation, *run.thresholds), gold_val, zd).macro_f1;
    }
}

struct SelectionStep {
    std::string candidate;
    std::vector<std::string> members_before;
    bool accepted = false;
    double current_f1 = 0.0;
    double trial_f1 = 0.0;
    std::optional<double> trial_threshold;
    double mean_delta = 0.0;
    double lower_95 = 0.0;
    double relative_lower = 0.0;  // lower_95 / current_f1
    double p_one_sided = 1.0;
};

struct EnsembleSpec {
    std::vector<std::string> members;
    VoteMode mode = VoteMode::soft;
    std::vector<double> weights;                // normalised, soft/weighted
    std::optional<double> global_t;             // soft/weighted
    std::vector<ThresholdSet> member_thresholds;  // hard: each member's own cutoffs
    TieRule tie = TieRule::positive;
    std::uint64_t seed = 42;
    std::size_t B = 2000;
    double min_relative = 0.01;
    double val_macro_f1 = 0.0;
    Split tuned_on = Split::validation;
    std::vector<SelectionStep> trace;
};

struct SelectionOptions {
    VoteMode mode = VoteMode::soft;
    std::size_t B = 2000;
    std::uint64_t seed = 42;
    unsigned workers = 1;
    double min_relative = 0.01;
    Grid grid = Grid::uniform();
    TieRule tie = TieRule::positive;
    ZeroDivision zero_division = ZeroDivision::zero;
};

struct EnsembleFit {
    BinaryMatrix predictions;
    std::optional<double> threshold;
    std::vector<double> weights;
    double macro_f1 = 0.0;
};

// Combines prepared candidates on validation; tunes t* for soft/weighted.
inline EnsembleFit fit_ensemble(std::span<const CandidateRun* const> members, const GoldMatrix& gold_val,
                                const SelectionOptions& opt) {
    EnsembleFit fit;
    if (opt.mode == VoteMode::hard) {
        std::vector<BinaryMatrix> votes;
        for (const auto* m : members) votes.push_back(binarize(m->validation, *m->thresholds));
        fit.predictions = hard_vote(votes, opt.tie);
    } else {
        std::vector<ProbMatrix> probs;
        std::vector<double> raw;
        for (const auto* m : members) {
            probs.push_back(m->validation);
            raw.push_back(opt.mode == VoteMode::weighted ? m->val_macro_f1 : 1.0);
        }
        fit.weights = normalize_weights(raw);
        auto avg = soft_vote(probs, fit.weights);
        auto t = tune_ensemble_threshold(avg, gold_val, opt.grid, opt.zero_division);
        fit.threshold = t.threshold;
        fit.predictions = binarize(avg, ThresholdSet::tuned(t.threshold, gold_val.split()));
    }
    fit.macro_f1 = macro_f1(fit.predictions, gold_val, opt.zero_division).macro_f1;
    return fit;
}

inline EnsembleSpec forward_select(std::vector<CandidateRun> pool, const GoldMatrix& gold_val,
                                   const SelectionOptions& opt = {}) {
    guard_tuning("forward_select", gold_val);
    if (pool.empty()) throw ValidationError("forward_select: empty candidate pool");
    if (opt.B < 1) throw ValidationError("forward_select: B must be >= 1");
    prepare_candidates(pool, gold_val, opt.grid, opt.zero_division);

    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pool[a].val_macro_f1 > pool[b].val_macro_f1; });

    std::vector<const CandidateRun*> current{&pool[order.front()]};
    std::vector<bool> used(pool.size(), false);
    used[order.front()] = true;
    EnsembleFit cur = fit_ensemble(current, gold_val, opt);

    EnsembleSpec spec;
    spec.mode = opt.mode;
    spec.tie = opt.tie;
    spec.seed = opt.seed;
    spec.B = opt.B;
    spec.min_relative = opt.min_relative;
    spec.tuned_on = gold_val.split();

    const BinaryMatrix& truth = gold_val.labels();
    BootstrapOptions bopt;
    bopt.B = opt.B;
    bopt.seed = opt.seed;
    bopt.workers = opt.workers;
    bopt.score = macro_f1_score(opt.zero_division);

    bool added = true;
    while (added) {
        added = false;
        for (std::size_t idx : order) {
            if (used[idx]) continue;
            auto trial_members = current;
            trial_members.push_back(&pool[idx]);
            EnsembleFit trial = fit_ensemble(trial_members, gold_val, opt);
            auto boot = paired_bootstrap(trial.predictions, cur.predictions, truth, bopt);

            SelectionStep step;
            step.candidate = pool[idx].name;
            for (const auto* m : current) step.members_before.push_back(m->name);
            step.current_f1 = cur.macro_f1;
            step.trial_f1 = trial.macro_f1;
            step.trial_threshold = trial.threshold;
            step.mean_delta = boot.mean_delta;
            step.lower_95 = boot.lower_95_one_sided;
            step.p_one_sided = boot.p_one_sided;
            step.relative_lower = cur.macro_f1 > 0.0 ? boot.lower_95_one_sided / cur.macro_f1
                                                     : (boot.lower_95_one_sided > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
            step.accepted = step.lower_95 > 0.0 && step.relative_lower >= opt.min_relative;
            spec.trace.push_back(step);

            if (step.accepted) {
                current = std::move(trial_members);
                cur = std::move(trial);
                used[idx] = true;
                added = true;
            }
        }
    }

    for (const auto* m : current) {
        spec.members.push_back(m->name);
        spec.member_thresholds.push_back(*m->thresholds);
    }
    spec.weights = cur.weights;
    spec.global_t = cur.threshold;
    spec.val_macro_f1 = cur.macro_f1;
    return spec;
}

// Applies a frozen spec to member probabilities given in spec member order.
inline BinaryMatrix apply_ensemble(const EnsembleSpec& spec, std::span<const ProbMatrix> member_probs) {
    if (member_probs.size() != spec.members.size())
        throw ValidationError("apply_ensemble: expected " + std::to_string(spec.members.size()) + " member matrices");
    if (spec.mode == VoteMode::hard) {
        std::vector<BinaryMatrix> votes;
        for (std::size_t i = 0; i < member_probs.size(); ++i) votes.push_back(binarize(member_probs[i], spec.member_thresholds.at(i)));
        return hard_vote(votes, spec.tie);
    }
    if (!spec.global_t) throw ValidationError("apply_ensemble: soft/weighted spec without a threshold");
    auto avg = soft_vote(member_probs, spec.weights);
    return binarize(avg, ThresholdSet::tuned(*spec.global_t, spec.tuned_on));
}

}  // namespace valuekit
