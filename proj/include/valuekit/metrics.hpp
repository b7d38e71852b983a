#pragma once

#include "valuekit/data_model.hpp"

#include <limits>
#include <numeric>
#include <ostream>

namespace valuekit {

// What P, R and F1 become when their denominator is zero. `one_when_empty`
// scores a column with no gold and no predicted positives as 1.0; every
// other zero denominator still yields 0.0.
enum class ZeroDivision { zero, one_when_empty };

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    bool operator==(const Confusion&) const = default;
};

struct PRFScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;

    bool operator==(const PRFScore&) const = default;
};

// Positive-class scores from confusion counts. Every tuner and the bootstrap
// go through this one function so scores agree bit-for-bit.
inline PRFScore score_counts(const Confusion& c, ZeroDivision zd = ZeroDivision::zero) {
    PRFScore s{0.0, 0.0, 0.0, c.tp, c.fp, c.fn};
    if (zd == ZeroDivision::one_when_empty && c.tp + c.fp + c.fn == 0) {
        s.precision = s.recall = s.f1 = 1.0;
        return s;
    }
    if (c.tp + c.fp > 0) s.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) s.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (s.precision + s.recall > 0.0) s.f1 = 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

inline Confusion confusion(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gold) {
    if (pred.size() != gold.size())
        throw ValidationError("length mismatch: " + std::to_string(pred.size()) + " predictions vs " +
                              std::to_string(gold.size()) + " gold labels");
    Confusion c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] > 1 || gold[i] > 1) throw ValidationError("non-binary entry at index " + std::to_string(i));
        if (pred[i] && gold[i]) ++c.tp;
        else if (pred[i]) ++c.fp;
        else if (gold[i]) ++c.fn;
        else ++c.tn;
    }
    return c;
}

inline PRFScore prf_positive(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gold,
                             ZeroDivision zd = ZeroDivision::zero) {
    return score_counts(confusion(pred, gold), zd);
}

// Per-column confusion counts of two equally shaped binary matrices.
inline std::vector<Confusion> column_confusions(const BinaryMatrix& pred, const BinaryMatrix& gold) {
    if (pred.rows() != gold.rows() || pred.cols() != gold.cols())
        throw ValidationError("shape mismatch: predictions " + std::to_string(pred.rows()) + "x" +
                              std::to_string(pred.cols()) + " vs gold " + std::to_string(gold.rows()) + "x" +
                              std::to_string(gold.cols()));
    std::vector<Confusion> out(pred.cols());
    for (std::size_t r = 0; r < pred.rows(); ++r) {
        auto p = pred.row(r);
        auto g = gold.row(r);
        for (std::size_t c = 0; c < pred.cols(); ++c) {
            if (p[c] > 1 || g[c] > 1) throw ValidationError("non-binary entry at row " + std::to_string(r + 1));
            auto& k = out[c];
            if (p[c] && g[c]) ++k.tp;
            else if (p[c]) ++k.fp;
            else if (g[c]) ++k.fn;
            else ++k.tn;
        }
    }
    return out;
}

struct MacroReport {
    std::vector<PRFScore> per_value;  // column order
    double macro_f1 = 0.0;

    double macro_recall() const {
        double s = 0.0;
        for (const auto& p : per_value) s += p.recall;
        return per_value.empty() ? 0.0 : s / static_cast<double>(per_value.size());
    }

    bool operator==(const MacroReport&) const = default;
};

// Unweighted mean over every column, including columns without gold positives.
inline double macro_from_counts(std::span<const Confusion> counts, ZeroDivision zd = ZeroDivision::zero) {
    if (counts.empty()) return 0.0;
    double s = 0.0;
    for (const auto& c : counts) s += score_counts(c, zd).f1;
    return s / static_cast<double>(counts.size());
}

inline MacroReport macro_from_confusions(std::span<const Confusion> counts, ZeroDivision zd = ZeroDivision::zero) {
    MacroReport r;
    r.per_value.reserve(counts.size());
    for (const auto& c : counts) r.per_value.push_back(score_counts(c, zd));
    r.macro_f1 = macro_from_counts(counts, zd);
    return r;
}

// Column-wise report for any k (k = 1 gives the presence F1 as macro_f1).
inline MacroReport macro_report(const BinaryMatrix& pred, const BinaryMatrix& gold, ZeroDivision zd = ZeroDivision::zero) {
    auto counts = column_confusions(pred, gold);
    return macro_from_confusions(counts, zd);
}

inline MacroReport macro_f1(const BinaryMatrix& pred, const GoldMatrix& gold, ZeroDivision zd = ZeroDivision::zero) {
    if (pred.cols() != kNumValues)
        throw ValidationError("macro_f1 expects " + std::to_string(kNumValues) + " prediction columns");
    return macro_report(pred, gold.labels(), zd);
}

// ============================================================================
// DIAGNOSTICS (monitored, never optimised)
// ============================================================================

inline double accuracy(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gold) {
    auto c = confusion(pred, gold);
    const auto n = c.tp + c.fp + c.fn + c.tn;
    return n == 0 ? 0.0 : static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
}

// Mann-Whitney estimate with midranks for ties. NaN when one class is absent.
inline double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> gold) {
    if (scores.size() != gold.size()) throw ValidationError("length mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (gold[order[k]]) rank_sum += midrank;
        i = j;
    }
    for (auto g : gold) n_pos += g ? 1 : 0;
    const std::size_t n_neg = gold.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
    const double np = static_cast<double>(n_pos);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

// ============================================================================
// PREVALENCE
// ============================================================================

struct PrevalenceEntry {
    std::size_t count = 0;
    double percent = 0.0;  // unrounded; rounding happens at display time
};

struct PrevalenceReport {
    std::vector<PrevalenceEntry> per_value;
    PrevalenceEntry presence;
    std::size_t n = 0;
};

inline PrevalenceReport prevalence(const GoldMatrix& gold) {
    PrevalenceReport r;
    r.n = gold.size();
    r.per_value.resize(kNumValues);
    auto pct = [&](std::size_t count) { return r.n == 0 ? 0.0 : 100.0 * static_cast<double>(count) / static_cast<double>(r.n); };
    for (std::size_t i = 0; i < gold.size(); ++i) {
        auto row = gold.labels().row(i);
        for (std::size_t v = 0; v < kNumValues; ++v) r.per_value[v].count += row[v];
        r.presence.count += gold.presence()[i];
    }
    for (auto& e : r.per_value) e.percent = pct(e.count);
    r.presence.percent = pct(r.presence.count);
    return r;
}

// ============================================================================
// REPORT EMISSION
// ============================================================================

inline constexpr int kValueDecimals = 3;
inline constexpr int kPresenceDecimals = 2;

inline void write_prevalence_tsv(std::ostream& out, const PrevalenceReport& r) {
    out << "value\tcount\tpercent\n";
    for (std::size_t v = 0; v < r.per_value.size(); ++v)
        out << kValueNames[v] << '\t' << r.per_value[v].count << '\t' << format_fixed(r.per_value[v].percent, 2) << '\n';
    out << kPresenceColumn << '\t' << r.presence.count << '\t' << format_fixed(r.presence.percent, 2) << '\n';
    out << "n\t" << r.n << "\t100.00\n";
}

// Scores rounded to 3 decimals for values, 2 for the single-column presence task.
inline void write_macro_tsv(std::ostream& out, const MacroReport& r) {
    const std::size_t k = r.per_value.size();
    const int d = k == 1 ? kPresenceDecimals : kValueDecimals;
    out << "value\tprecision\trecall\tf1\ttp\tfp\tfn\n";
    for (std::size_t c = 0; c < k; ++c) {
        const auto& s = r.per_value[c];
        out << column_label(k, c) << '\t' << format_fixed(s.precision, d) << '\t' << format_fixed(s.recall, d) << '\t'
            << format_fixed(s.f1, d) << '\t' << s.tp << '\t' << s.fp << '\t' << s.fn << '\n';
    }
    out << (k == 1 ? "f1" : "macro") << "\t\t" << format_fixed(r.macro_recall(), d) << '\t' << format_fixed(r.macro_f1, d)
        << "\t\t\t\n";
}

inline void print_macro_table(std::ostream& out, const MacroReport& r) {
    const std::size_t k = r.per_value.size();
    const int d = k == 1 ? kPresenceDecimals : kValueDecimals;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-28s %9s %9s %9s\n", "value", "precision", "recall", "f1");
    out << buf;
    for (std::size_t c = 0; c < k; ++c) {
        const auto& s = r.per_value[c];
        std::snprintf(buf, sizeof buf, "%-28s %9.*f %9.*f %9.*f\n", column_label(k, c).c_str(), d, s.precision, d,
                      s.recall, d, s.f1);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "%-28s %9s %9.*f %9.*f\n", k == 1 ? "F1" : "macro", "", d, r.macro_recall(), d,
                  r.macro_f1);
    out << buf;
}

}  // namespace valuekit
