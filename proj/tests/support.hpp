#pragma once

// Fixture builders and reference implementations used as test oracles.
// Oracles are written from the definitions with plain loops and share no
// code paths with the library beyond the data types.

#include "valuekit/valuekit.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

namespace vkt {

namespace vk = valuekit;

inline std::vector<vk::SentenceKey> keys(std::size_t n, const std::string& prefix = "t") {
    std::vector<vk::SentenceKey> k;
    for (std::size_t i = 0; i < n; ++i) k.push_back({prefix + std::to_string(i / 10), std::to_string(i % 10)});
    return k;
}

// Rows shorter than 19 are zero-padded.
inline vk::GoldMatrix gold(const std::vector<std::vector<int>>& rows, vk::Split split = vk::Split::validation) {
    vk::BinaryMatrix m(rows.size(), vk::kNumValues);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = static_cast<std::uint8_t>(rows[r][c]);
    return vk::GoldMatrix(keys(rows.size()), std::move(m), split);
}

inline vk::ProbMatrix probs(const std::vector<std::vector<double>>& rows, std::size_t k = vk::kNumValues,
                            const std::string& name = "m") {
    vk::RealMatrix m(rows.size(), k);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c) m(r, c) = rows[r][c];
    return vk::ProbMatrix(keys(rows.size()), std::move(m), name);
}

// Single column, as a presence-style k = 1 matrix.
inline vk::ProbMatrix column(const std::vector<double>& xs, const std::string& name = "g") {
    std::vector<std::vector<double>> rows;
    for (double x : xs) rows.push_back({x});
    return probs(rows, 1, name);
}

inline vk::GoldMatrix gold_column0(const std::vector<int>& ys, vk::Split split = vk::Split::validation) {
    std::vector<std::vector<int>> rows;
    for (int y : ys) rows.push_back({y});
    return gold(rows, split);
}

struct RandomCase {
    vk::GoldMatrix gold;
    vk::ProbMatrix probs;
};

// Noisy model over Bernoulli gold, probabilities rounded to 3 decimals so
// many values sit exactly on or between grid points.
inline RandomCase random_case(std::uint64_t seed, std::size_t n = 500, double prevalence = 0.1) {
    std::mt19937_64 eng(seed);
    std::bernoulli_distribution lab(prevalence);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    vk::BinaryMatrix y(n, vk::kNumValues);
    vk::RealMatrix p(n, vk::kNumValues);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < vk::kNumValues; ++c) {
            y(r, c) = lab(eng) ? 1 : 0;
            const double signal = y(r, c) ? 0.35 : 0.0;
            p(r, c) = std::round(std::min(1.0, u(eng) * 0.65 + signal) * 1000.0) / 1000.0;
        }
    auto k = keys(n);
    return {vk::GoldMatrix(k, std::move(y), vk::Split::validation), vk::ProbMatrix(k, std::move(p), "rand")};
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / ("valuekit_test_" + name);
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

namespace oracle {

struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
};

inline double precision(const Counts& c) { return c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0.0; }
inline double recall(const Counts& c) { return c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0.0; }
inline double f1(const Counts& c) {
    const double p = precision(c), r = recall(c);
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

inline Counts count(const vk::RealMatrix& p, const vk::BinaryMatrix& y, std::size_t c, double t) {
    Counts k;
    for (std::size_t r = 0; r < p.rows(); ++r) {
        const bool pred = p(r, c) >= t;
        if (pred && y(r, c)) ++k.tp;
        else if (pred) ++k.fp;
        else if (y(r, c)) ++k.fn;
    }
    return k;
}

inline Counts count_binary(const vk::BinaryMatrix& pred, const vk::BinaryMatrix& y, std::size_t c) {
    Counts k;
    for (std::size_t r = 0; r < pred.rows(); ++r) {
        if (pred(r, c) && y(r, c)) ++k.tp;
        else if (pred(r, c)) ++k.fp;
        else if (y(r, c)) ++k.fn;
    }
    return k;
}

inline double macro(const vk::BinaryMatrix& pred, const vk::BinaryMatrix& y) {
    double s = 0.0;
    for (std::size_t c = 0; c < y.cols(); ++c) s += f1(count_binary(pred, y, c));
    return s / double(y.cols());
}

inline std::vector<double> grid() {
    std::vector<double> g;
    for (int i = 0; i <= 100; ++i) g.push_back(i / 100.0);
    return g;
}

struct Global {
    double t = 0.0, score = -1.0, recall = -1.0;
};

// Exhaustive sweep: max mean F1, then max mean recall, then smallest t.
inline Global tune_global(const vk::RealMatrix& p, const vk::BinaryMatrix& y) {
    Global best;
    for (double t : grid()) {
        double fs = 0.0, rs = 0.0;
        for (std::size_t c = 0; c < y.cols(); ++c) {
            auto k = count(p, y, c, t);
            fs += f1(k);
            rs += recall(k);
        }
        fs /= double(y.cols());
        rs /= double(y.cols());
        if (fs > best.score || (fs == best.score && rs > best.recall)) best = {t, fs, rs};
    }
    return best;
}

struct Labelwise {
    std::vector<double> t;
    std::vector<bool> fallback;
};

// Per column: max recall subject to precision >= floor, then max precision,
// then smallest t; 0.5 when nothing is feasible.
inline Labelwise tune_labelwise(const vk::RealMatrix& p, const vk::BinaryMatrix& y, double floor = 0.40) {
    Labelwise out;
    for (std::size_t c = 0; c < y.cols(); ++c) {
        double bt = 0.5, br = -1.0, bp = -1.0;
        for (double t : grid()) {
            auto k = count(p, y, c, t);
            const double pr = precision(k), rc = recall(k);
            if (pr < floor) continue;
            if (rc > br || (rc == br && pr > bp)) {
                bt = t;
                br = rc;
                bp = pr;
            }
        }
        out.t.push_back(bt);
        out.fallback.push_back(br < 0.0);
    }
    return out;
}

// Exact two-sided binomial tail with integer binomial coefficients (n <= 62).
inline double mcnemar(std::size_t b, std::size_t c) {
    const std::size_t n = b + c;
    if (n == 0) return 1.0;
    std::uint64_t sum = 0, coeff = 1;
    for (std::size_t k = 0; k <= std::min(b, c); ++k) {
        sum += coeff;
        coeff = coeff * (n - k) / (k + 1);
    }
    const long double p = 2.0L * static_cast<long double>(sum) / std::ldexp(1.0L, static_cast<int>(n));
    return static_cast<double>(std::min(1.0L, p));
}

struct Bh {
    std::vector<bool> reject;
    std::vector<double> adjusted;
};

// Direct transcription of the step-up rule and the adjusted p definition.
inline Bh bh(const std::vector<double>& p, double alpha) {
    const std::size_t m = p.size();
    std::vector<std::size_t> idx(m);
    for (std::size_t i = 0; i < m; ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return p[a] < p[b]; });
    std::size_t kstar = 0;
    for (std::size_t k = 1; k <= m; ++k)
        if (p[idx[k - 1]] <= double(k) * alpha / double(m)) kstar = k;
    Bh out{std::vector<bool>(m, false), std::vector<double>(m, 1.0)};
    for (std::size_t k = 1; k <= m; ++k) {
        double best = 1e300;
        for (std::size_t j = k; j <= m; ++j) best = std::min(best, double(m) * p[idx[j - 1]] / double(j));
        out.adjusted[idx[k - 1]] = std::min(1.0, best);
        out.reject[idx[k - 1]] = k <= kstar;
    }
    return out;
}

// Materialises every resample and scores it from scratch.
inline std::vector<double> bootstrap_deltas(const vk::BinaryMatrix& a, const vk::BinaryMatrix& b,
                                            const vk::BinaryMatrix& y, std::size_t B, std::uint64_t seed) {
    std::vector<double> out;
    const std::size_t n = y.rows();
    for (std::size_t rep = 0; rep < B; ++rep) {
        auto eng = vk::replicate_engine(seed, rep);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        vk::BinaryMatrix ra(n, y.cols()), rb(n, y.cols()), ry(n, y.cols());
        for (std::size_t d = 0; d < n; ++d) {
            const std::size_t i = pick(eng);
            for (std::size_t c = 0; c < y.cols(); ++c) {
                ra(d, c) = a(i, c);
                rb(d, c) = b(i, c);
                ry(d, c) = y(i, c);
            }
        }
        out.push_back(macro(ra, ry) - macro(rb, ry));
    }
    return out;
}

inline double quantile7(std::vector<double> xs, double q) {
    std::sort(xs.begin(), xs.end());
    const double h = (double(xs.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, xs.size() - 1);
    return xs[lo] + (h - double(lo)) * (xs[hi] - xs[lo]);
}

}  // namespace oracle
}  // namespace vkt
