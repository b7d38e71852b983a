#pragma once

// Paired significance testing between two systems evaluated on the same
// instances: bootstrap over instances for a score difference, exact McNemar
// per label column, and Benjamini-Hochberg across the per-column tests.

#include "valuekit/metrics.hpp"

#include <cmath>
#include <functional>

namespace valuekit {

// ============================================================================
// PAIRED BOOTSTRAP
// ============================================================================

// Maps per-column confusion counts of one resample to a score.
using CountScore = std::function<double(std::span<const Confusion>)>;

inline CountScore macro_f1_score(ZeroDivision zd = ZeroDivision::zero) {
    return [zd](std::span<const Confusion> c) { return macro_from_counts(c, zd); };
}

struct BootstrapOptions {
    std::size_t B = 2000;
    std::uint64_t seed = 42;
    unsigned workers = 1;
    CountScore score = macro_f1_score();
};

struct BootstrapResult {
    double mean_delta = 0.0;
    double lower_95_one_sided = 0.0;  // 5th percentile of the replicate deltas
    double upper_95_one_sided = 0.0;  // 95th percentile
    double p_one_sided = 1.0;         // (#{delta <= 0} + 1) / (B + 1)
    double observed_delta = 0.0;      // on the full sample
    std::size_t B = 0;
    std::uint64_t seed = 0;
    std::vector<double> replicates;   // replicate order

    bool operator==(const BootstrapResult&) const = default;
};

// Engine for replicate r. Depends only on (seed, r), so results do not
// depend on how replicates are spread over workers.
inline std::mt19937_64 replicate_engine(std::uint64_t seed, std::size_t r) {
    return seeded_engine({seed, static_cast<std::uint64_t>(r)});
}

// Linear interpolation between order statistics of a sorted sample.
inline double sorted_quantile(std::span<const double> sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double h = static_cast<double>(sorted.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    if (frac == 0.0 || sorted[lo] == sorted[lo + 1]) return sorted[lo];
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

namespace detail {

// Cell codes: 0 = tp, 1 = fp, 2 = fn. True negatives are implicit.
struct SparseCell {
    std::uint32_t col;
    std::int8_t code_a;  // -1 when the cell is a true negative for A
    std::int8_t code_b;
};

inline std::int8_t cell_code(std::uint8_t y, std::uint8_t t) {
    if (y && t) return 0;
    if (y) return 1;
    if (t) return 2;
    return -1;
}

inline void bump(Confusion& c, std::int8_t code) {
    switch (code) {
        case 0: ++c.tp; break;
        case 1: ++c.fp; break;
        case 2: ++c.fn; break;
        default: break;
    }
}

}  // namespace detail

// Resamples n instances with replacement B times (identical indices for A,
// B and gold) and summarises delta = score(A) - score(B).
inline BootstrapResult paired_bootstrap(const BinaryMatrix& a, const BinaryMatrix& b, const BinaryMatrix& gold,
                                        const BootstrapOptions& opt = {}) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != gold.rows() || a.cols() != gold.cols())
        throw AlignmentError("paired_bootstrap: prediction and gold shapes differ");
    if (opt.B < 1) throw ValidationError("paired_bootstrap: B must be >= 1");
    const std::size_t n = a.rows(), k = a.cols();
    if (n == 0) throw ValidationError("paired_bootstrap: no instances");
    require_binary(a, "system A");
    require_binary(b, "system B");
    require_binary(gold, "gold");

    // Most cells are true negatives for both systems; only the rest are visited.
    std::vector<std::size_t> offsets(n + 1, 0);
    std::vector<detail::SparseCell> cells;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t c = 0; c < k; ++c) {
            auto ca = detail::cell_code(a(r, c), gold(r, c));
            auto cb = detail::cell_code(b(r, c), gold(r, c));
            if (ca >= 0 || cb >= 0) cells.push_back({static_cast<std::uint32_t>(c), ca, cb});
        }
        offsets[r + 1] = cells.size();
    }

    auto finish = [n](std::vector<Confusion>& conf) {
        for (auto& c : conf) c.tn = n - c.tp - c.fp - c.fn;
    };

    BootstrapResult res;
    res.B = opt.B;
    res.seed = opt.seed;
    {
        std::vector<Confusion> ca(k), cb(k);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t e = offsets[r]; e < offsets[r + 1]; ++e) {
                detail::bump(ca[cells[e].col], cells[e].code_a);
                detail::bump(cb[cells[e].col], cells[e].code_b);
            }
        finish(ca);
        finish(cb);
        res.observed_delta = opt.score(ca) - opt.score(cb);
    }

    res.replicates.assign(opt.B, 0.0);
    parallel_blocks(opt.B, opt.workers, [&](std::size_t begin, std::size_t end) {
        std::vector<Confusion> ca(k), cb(k);
        for (std::size_t rep = begin; rep < end; ++rep) {
            auto eng = replicate_engine(opt.seed, rep);
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            std::fill(ca.begin(), ca.end(), Confusion{});
            std::fill(cb.begin(), cb.end(), Confusion{});
            for (std::size_t draw = 0; draw < n; ++draw) {
                const std::size_t i = pick(eng);
                for (std::size_t e = offsets[i]; e < offsets[i + 1]; ++e) {
                    detail::bump(ca[cells[e].col], cells[e].code_a);
                    detail::bump(cb[cells[e].col], cells[e].code_b);
                }
            }
            finish(ca);
            finish(cb);
            res.replicates[rep] = opt.score(ca) - opt.score(cb);
        }
    });

    double sum = 0.0;
    std::size_t non_positive = 0;
    for (double d : res.replicates) {
        sum += d;
        non_positive += d <= 0.0;
    }
    res.mean_delta = sum / static_cast<double>(opt.B);
    res.p_one_sided = static_cast<double>(non_positive + 1) / static_cast<double>(opt.B + 1);
    std::vector<double> sorted = res.replicates;
    std::sort(sorted.begin(), sorted.end());
    res.lower_95_one_sided = sorted_quantile(sorted, 0.05);
    res.upper_95_one_sided = sorted_quantile(sorted, 0.95);
    return res;
}

inline BootstrapResult paired_bootstrap(const BinaryMatrix& a, const BinaryMatrix& b, const GoldMatrix& gold,
                                        const BootstrapOptions& opt = {}) {
    return paired_bootstrap(a, b, gold.targets(a.cols()), opt);
}

// ============================================================================
// MCNEMAR
// ============================================================================

struct McNemarResult {
    std::string value;
    std::size_t b = 0;  // A correct, B wrong
    std::size_t c = 0;  // A wrong, B correct
    double p_exact = 1.0;

    bool operator==(const McNemarResult&) const = default;
};

// Two-sided exact binomial test on the discordant pairs:
// p = min(1, 2 * sum_{k=0}^{min(b,c)} C(b+c, k) / 2^(b+c)).
inline double mcnemar_p(std::size_t b, std::size_t c) {
    const std::size_t n = b + c;
    if (n == 0) return 1.0;
    const std::size_t m = std::min(b, c);
    double tail = 0.0;
    if (n <= 1000) {
        double term = std::ldexp(1.0, -static_cast<int>(n));  // C(n,0) / 2^n
        for (std::size_t k = 0; k <= m; ++k) {
            tail += term;
            term *= static_cast<double>(n - k) / static_cast<double>(k + 1);
        }
    } else {
        // log C(n,k) - n log 2, summed with a max shift.
        const double nn = static_cast<double>(n);
        auto log_term = [&](std::size_t k) {
            const double kk = static_cast<double>(k);
            return std::lgamma(nn + 1.0) - std::lgamma(kk + 1.0) - std::lgamma(nn - kk + 1.0) - nn * std::log(2.0);
        };
        const double top = log_term(m);  // terms increase up to the midpoint
        double s = 0.0;
        for (std::size_t k = 0; k <= m; ++k) s += std::exp(log_term(k) - top);
        tail = std::exp(top) * s;
    }
    return std::min(1.0, 2.0 * tail);
}

// Discordant counts over one column. With `positives_only` the count is
// restricted to instances whose gold label is 1.
inline McNemarResult mcnemar_exact(const BinaryMatrix& a, const BinaryMatrix& b, const BinaryMatrix& gold,
                                   std::size_t col, bool positives_only = false) {
    if (a.rows() != b.rows() || a.rows() != gold.rows() || a.cols() != b.cols() || a.cols() != gold.cols())
        throw AlignmentError("mcnemar_exact: prediction and gold shapes differ");
    if (col >= a.cols()) throw ValidationError("mcnemar_exact: column out of range");
    McNemarResult r;
    r.value = column_label(a.cols(), col);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        if (positives_only && !gold(i, col)) continue;
        const bool ok_a = a(i, col) == gold(i, col);
        const bool ok_b = b(i, col) == gold(i, col);
        if (ok_a && !ok_b) ++r.b;
        else if (!ok_a && ok_b) ++r.c;
    }
    r.p_exact = mcnemar_p(r.b, r.c);
    return r;
}

inline std::vector<McNemarResult> mcnemar_per_column(const BinaryMatrix& a, const BinaryMatrix& b,
                                                     const BinaryMatrix& gold, bool positives_only = false) {
    std::vector<McNemarResult> out;
    for (std::size_t c = 0; c < a.cols(); ++c) out.push_back(mcnemar_exact(a, b, gold, c, positives_only));
    return out;
}

// ============================================================================
// BENJAMINI-HOCHBERG
// ============================================================================

struct FdrEntry {
    double raw_p = 1.0;
    double adjusted_p = 1.0;
    bool rejected = false;

    bool operator==(const FdrEntry&) const = default;
};

struct FdrDecision {
    std::vector<FdrEntry> entries;  // input order
    double alpha = 0.05;
    std::size_t rejections = 0;
};

inline constexpr double kDefaultAlpha = 0.05;

// Step-up procedure: k* = max{k : p_(k) <= k * alpha / m}; reject 1..k*.
// Adjusted p_(k) = min_{j >= k} m * p_(j) / j, capped at 1.
inline FdrDecision benjamini_hochberg(std::span<const double> p, double alpha = kDefaultAlpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0,1]");
    for (double x : p)
        if (!(x >= 0.0 && x <= 1.0)) throw ValidationError("p-values must lie in [0,1]");
    FdrDecision d;
    d.alpha = alpha;
    const std::size_t m = p.size();
    d.entries.resize(m);
    if (m == 0) return d;

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return p[x] < p[y]; });

    std::size_t k_star = 0;
    for (std::size_t k = 1; k <= m; ++k)
        if (p[order[k - 1]] <= static_cast<double>(k) * alpha / static_cast<double>(m)) k_star = k;

    double running = 1.0;
    for (std::size_t k = m; k >= 1; --k) {
        const std::size_t i = order[k - 1];
        // m / k >= 1, so the product never rounds below p.
        running = std::min(running, p[i] * (static_cast<double>(m) / static_cast<double>(k)));
        d.entries[i] = {p[i], std::min(1.0, running), k <= k_star};
    }
    d.rejections = k_star;
    return d;
}

}  // namespace valuekit
