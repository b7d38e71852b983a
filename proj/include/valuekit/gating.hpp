#pragma once

// Presence-gated composition: value probabilities of a row are zeroed when
// the gate probability falls below tau_gate.

#include "valuekit/thresholds.hpp"

namespace valuekit {

inline void check_gate_threshold(double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ValidationError("gate threshold must lie in [0,1]");
}

inline RealMatrix apply_gate_matrix(std::span<const double> gate, const RealMatrix& values, double tau) {
    check_gate_threshold(tau);
    if (gate.size() != values.rows()) throw AlignmentError("gate and value probabilities differ in row count");
    RealMatrix out = values;
    for (std::size_t r = 0; r < values.rows(); ++r)
        if (gate[r] < tau) std::fill(out.row(r).begin(), out.row(r).end(), 0.0);
    return out;
}

// Rows with g < tau have all value probabilities set to 0; others unchanged.
inline ProbMatrix apply_gate(const ProbMatrix& gate, const ProbMatrix& values, double tau) {
    if (gate.cols() != 1) throw ValidationError("gate must have a single probability column");
    require_same_keys(gate.keys(), values.keys(), "apply_gate");
    auto g = gate.probs().column(0);
    return ProbMatrix(values.keys(), apply_gate_matrix(g, values.probs(), tau), values.model_name());
}

struct GateTuning {
    double tau_gate = 0.0;
    double macro_f1 = 0.0;
};

// Sweeps tau_gate with the value thresholds held fixed and maximises
// end-to-end macro-F1 of the gated predictions. Ties go to the smaller tau.
inline GateTuning tune_gate(const ProbMatrix& gate, const ProbMatrix& values, const GoldMatrix& gold,
                            const ThresholdSet& value_thresholds, const Grid& grid = Grid::uniform(),
                            ZeroDivision zd = ZeroDivision::zero) {
    guard_tuning("tune_gate", gold);
    if (gate.cols() != 1) throw ValidationError("gate must have a single probability column");
    if (values.cols() != kNumValues) throw ValidationError("value probabilities must have 19 columns");
    require_same_keys(gate.keys(), values.keys(), "tune_gate");
    require_same_keys(values.keys(), gold.keys(), "tune_gate");

    const std::size_t k = values.cols();
    const std::size_t buckets = grid.size() + 1;
    const BinaryMatrix open = binarize(values, value_thresholds);
    std::vector<std::uint8_t> closed(k);
    for (std::size_t c = 0; c < k; ++c) closed[c] = 0.0 >= value_thresholds.at(c) ? 1 : 0;

    // Row r is masked at grid point j iff j >= bucket(g_r).
    std::vector<Confusion> open_by_bucket(buckets * k), closed_by_bucket(buckets * k);
    auto tally = [](Confusion& cf, std::uint8_t y, std::uint8_t t) {
        if (y && t) ++cf.tp;
        else if (y) ++cf.fp;
        else if (t) ++cf.fn;
        else ++cf.tn;
    };
    for (std::size_t r = 0; r < values.size(); ++r) {
        const std::size_t b = grid.bucket(gate.probs()(r, 0));
        auto truth = gold.labels().row(r);
        auto pred = open.row(r);
        for (std::size_t c = 0; c < k; ++c) {
            tally(open_by_bucket[b * k + c], pred[c], truth[c]);
            tally(closed_by_bucket[b * k + c], closed[c], truth[c]);
        }
    }
    auto add = [](Confusion& a, const Confusion& b) {
        a.tp += b.tp;
        a.fp += b.fp;
        a.fn += b.fn;
        a.tn += b.tn;
    };
    // open_suffix[j] = rows with bucket > j; closed_prefix[j] = rows with bucket <= j.
    std::vector<Confusion> open_suffix(buckets * k), closed_prefix(buckets * k);
    for (std::size_t b = buckets; b-- > 0;)
        for (std::size_t c = 0; c < k; ++c) {
            if (b + 1 < buckets) {
                open_suffix[b * k + c] = open_suffix[(b + 1) * k + c];
                add(open_suffix[b * k + c], open_by_bucket[(b + 1) * k + c]);
            }
        }
    for (std::size_t b = 0; b < buckets; ++b)
        for (std::size_t c = 0; c < k; ++c) {
            if (b > 0) closed_prefix[b * k + c] = closed_prefix[(b - 1) * k + c];
            add(closed_prefix[b * k + c], closed_by_bucket[b * k + c]);
        }

    GateTuning best{grid[0], -1.0};
    std::vector<Confusion> conf(k);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        for (std::size_t c = 0; c < k; ++c) {
            conf[c] = open_suffix[j * k + c];
            add(conf[c], closed_prefix[j * k + c]);
        }
        const double score = macro_from_counts(conf, zd);
        if (score > best.macro_f1) best = {grid[j], score};
    }
    return best;
}

struct JointGateTuning {
    double tau_gate = 0.0;
    double value_threshold = 0.5;
    double macro_f1 = 0.0;
};

// 2-D sweep over (tau_gate, global value threshold). Cost grows with the
// square of the grid, meant for small grids. Ties: smaller tau_gate, then
// the global tuner's own tie rule.
inline JointGateTuning tune_gate_joint(const ProbMatrix& gate, const ProbMatrix& values, const GoldMatrix& gold,
                                       const Grid& grid = Grid::uniform(), ZeroDivision zd = ZeroDivision::zero) {
    guard_tuning("tune_gate_joint", gold);
    if (gate.cols() != 1) throw ValidationError("gate must have a single probability column");
    require_same_keys(gate.keys(), values.keys(), "tune_gate_joint");
    require_same_keys(values.keys(), gold.keys(), "tune_gate_joint");
    auto g = gate.probs().column(0);
    const BinaryMatrix targets = gold.targets(values.cols());
    JointGateTuning best{grid[0], 0.5, -1.0};
    for (std::size_t j = 0; j < grid.size(); ++j) {
        auto gated = apply_gate_matrix(g, values.probs(), grid[j]);
        auto t = tune_global_matrix(gated, targets, grid, zd);
        if (t.score > best.macro_f1) best = {grid[j], t.threshold, t.score};
    }
    return best;
}

// How much of each value's positive mass the gate lets through, against the
// recall actually achieved. End-to-end recall(v) can never exceed pass_rate[v].
struct GateDiagnostics {
    double gate_recall = 0.0;             // presence rows with g >= tau
    std::vector<double> pass_rate;        // per value: positive rows with g >= tau
    std::vector<double> ungated_recall;   // per value, value thresholds only
    std::vector<double> gated_recall;     // per value, end to end
};

inline GateDiagnostics gate_diagnostics(const ProbMatrix& gate, const ProbMatrix& values, const GoldMatrix& gold,
                                        const ThresholdSet& value_thresholds, double tau_gate,
                                        ZeroDivision zd = ZeroDivision::zero) {
    require_same_keys(gate.keys(), values.keys(), "gate_diagnostics");
    require_same_keys(values.keys(), gold.keys(), "gate_diagnostics");
    GateDiagnostics d;
    const std::size_t k = values.cols();
    std::size_t present = 0, passed = 0;
    std::vector<std::size_t> pos(k, 0), pos_passed(k, 0);
    for (std::size_t r = 0; r < gold.size(); ++r) {
        const bool open = gate.probs()(r, 0) >= tau_gate;
        if (gold.presence()[r]) {
            ++present;
            passed += open;
        }
        for (std::size_t c = 0; c < k; ++c)
            if (gold.labels()(r, c)) {
                ++pos[c];
                pos_passed[c] += open;
            }
    }
    d.gate_recall = present ? static_cast<double>(passed) / static_cast<double>(present) : 0.0;
    for (std::size_t c = 0; c < k; ++c)
        d.pass_rate.push_back(pos[c] ? static_cast<double>(pos_passed[c]) / static_cast<double>(pos[c]) : 0.0);
    auto ungated = macro_report(binarize(values, value_thresholds), gold.labels(), zd);
    auto gated = macro_report(binarize(apply_gate(gate, values, tau_gate), value_thresholds), gold.labels(), zd);
    for (std::size_t c = 0; c < k; ++c) {
        d.ungated_recall.push_back(ungated.per_value[c].recall);
        d.gated_recall.push_back(gated.per_value[c].recall);
    }
    return d;
}

}  // namespace valuekit
