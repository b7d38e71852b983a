#pragma once

// Probability -> decision conversion under three regimes: a fixed global
// cutoff, a tuned global cutoff (grid sweep), and per-value cutoffs that
// maximise recall under a precision floor.
//
// Decision rule: predict 1 iff p >= threshold (inclusive).

#include "valuekit/metrics.hpp"

#include <cmath>
#include <mutex>
#include <sstream>

namespace valuekit {

// ============================================================================
// FREEZE DISCIPLINE
// ============================================================================

struct TuningRecord {
    std::string operation;
    Split split = Split::unspecified;
    std::size_t rows = 0;
};

// Process-wide log of every gold matrix handed to a tuning operation.
class TuningAudit {
public:
    static TuningAudit& instance() {
        static TuningAudit audit;
        return audit;
    }

    void record(std::string_view op, Split split, std::size_t rows) {
        std::lock_guard lock(mu_);
        records_.push_back({std::string(op), split, rows});
    }

    std::vector<TuningRecord> records() const {
        std::lock_guard lock(mu_);
        return records_;
    }

    void clear() {
        std::lock_guard lock(mu_);
        records_.clear();
    }

private:
    mutable std::mutex mu_;
    std::vector<TuningRecord> records_;
};

// Every tuner calls this before touching labels. Test-split gold is refused.
inline void guard_tuning(std::string_view op, const GoldMatrix& gold) {
    TuningAudit::instance().record(op, gold.split(), gold.size());
    if (gold.split() == Split::test)
        throw FreezeViolation(std::string(op) + ": test-split gold passed to a tuning operation");
}

// ============================================================================
// GRID
// ============================================================================

class Grid {
public:
    explicit Grid(std::vector<double> points) : points_(std::move(points)) {
        if (points_.empty()) throw ValidationError("empty threshold grid");
        for (std::size_t i = 0; i < points_.size(); ++i) {
            if (!(points_[i] >= 0.0 && points_[i] <= 1.0)) throw ValidationError("grid point outside [0,1]");
            if (i > 0 && !(points_[i] > points_[i - 1])) throw ValidationError("grid must be strictly increasing");
        }
    }

    // {0, step, 2*step, ..., 1}; point i is computed as i/steps so that
    // two-decimal thresholds equal their decimal literals exactly.
    static Grid uniform(double step = 0.01) {
        if (!(step > 0.0 && step <= 1.0)) throw ValidationError("grid step must be in (0,1]");
        const long long steps = std::llround(1.0 / step);
        if (steps < 1 || std::abs(static_cast<double>(steps) * step - 1.0) > 1e-9)
            throw ValidationError("grid step must divide 1 evenly");
        std::vector<double> pts(static_cast<std::size_t>(steps) + 1);
        for (long long i = 0; i <= steps; ++i) pts[static_cast<std::size_t>(i)] = static_cast<double>(i) / static_cast<double>(steps);
        return Grid(std::move(pts));
    }

    std::size_t size() const noexcept { return points_.size(); }
    double operator[](std::size_t i) const noexcept { return points_[i]; }
    std::span<const double> points() const noexcept { return points_; }

    // Number of grid points <= p; p is predicted positive at point j iff j < bucket(p).
    std::size_t bucket(double p) const noexcept {
        return static_cast<std::size_t>(std::upper_bound(points_.begin(), points_.end(), p) - points_.begin());
    }

private:
    std::vector<double> points_;
};

// ============================================================================
// THRESHOLD SET
// ============================================================================

enum class ThresholdKind { fixed_global, tuned_global, label_wise };

inline std::string_view to_string(ThresholdKind k) {
    switch (k) {
        case ThresholdKind::fixed_global: return "fixed-global";
        case ThresholdKind::tuned_global: return "tuned-global";
        default: return "label-wise";
    }
}

inline ThresholdKind parse_threshold_kind(std::string_view s) {
    if (s == "fixed-global" || s == "fixed") return ThresholdKind::fixed_global;
    if (s == "tuned-global" || s == "tuned") return ThresholdKind::tuned_global;
    if (s == "label-wise" || s == "labelwise") return ThresholdKind::label_wise;
    throw ValidationError("unknown threshold kind '" + std::string(s) + "'");
}

struct ThresholdSet {
    ThresholdKind kind = ThresholdKind::fixed_global;
    std::optional<double> global;         // global kinds
    std::vector<double> per_value;        // label-wise
    std::vector<std::uint8_t> fallback;   // label-wise: 1 where the precision floor was infeasible
    std::optional<double> gate;           // hierarchical runs
    Split tuned_on = Split::unspecified;

    static ThresholdSet fixed(double t = 0.5) {
        ThresholdSet s;
        s.kind = ThresholdKind::fixed_global;
        s.global = t;
        s.validate();
        return s;
    }

    static ThresholdSet tuned(double t, Split split) {
        ThresholdSet s;
        s.kind = ThresholdKind::tuned_global;
        s.global = t;
        s.tuned_on = split;
        s.validate();
        return s;
    }

    static ThresholdSet label_wise(std::vector<double> taus, std::vector<std::uint8_t> fallback, Split split) {
        ThresholdSet s;
        s.kind = ThresholdKind::label_wise;
        s.per_value = std::move(taus);
        s.fallback = std::move(fallback);
        s.tuned_on = split;
        s.validate();
        return s;
    }

    void validate() const {
        auto in_unit = [](double t) { return t >= 0.0 && t <= 1.0; };
        if (kind == ThresholdKind::label_wise) {
            if (global || per_value.empty()) throw ValidationError("label-wise thresholds need a per-value vector only");
            if (fallback.size() != per_value.size()) throw ValidationError("fallback flags must match thresholds");
            for (double t : per_value)
                if (!in_unit(t)) throw ValidationError("threshold outside [0,1]");
        } else {
            if (!global || !per_value.empty()) throw ValidationError("global thresholds need exactly one global value");
            if (!in_unit(*global)) throw ValidationError("threshold outside [0,1]");
        }
        if (gate && !in_unit(*gate)) throw ValidationError("gate threshold outside [0,1]");
    }

    std::size_t arity() const noexcept { return kind == ThresholdKind::label_wise ? per_value.size() : 0; }

    double at(std::size_t col) const { return kind == ThresholdKind::label_wise ? per_value.at(col) : *global; }

    bool operator==(const ThresholdSet&) const = default;
};

inline BinaryMatrix binarize(const RealMatrix& probs, const ThresholdSet& t) {
    t.validate();
    if (t.kind == ThresholdKind::label_wise && t.per_value.size() != probs.cols())
        throw ValidationError("threshold arity " + std::to_string(t.per_value.size()) + " does not match " +
                              std::to_string(probs.cols()) + " probability columns");
    std::vector<double> taus(probs.cols());
    for (std::size_t c = 0; c < taus.size(); ++c) taus[c] = t.at(c);
    BinaryMatrix out(probs.rows(), probs.cols());
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        auto p = probs.row(r);
        auto y = out.row(r);
        for (std::size_t c = 0; c < p.size(); ++c) y[c] = p[c] >= taus[c] ? 1 : 0;
    }
    return out;
}

inline BinaryMatrix binarize(const ProbMatrix& probs, const ThresholdSet& t) { return binarize(probs.probs(), t); }

// ============================================================================
// TUNING
// ============================================================================

enum class Objective { positive_f1, macro_f1 };

struct GlobalTuning {
    double threshold = 0.5;
    double score = 0.0;   // objective at the chosen threshold
    double recall = 0.0;  // mean positive-class recall at the chosen threshold
};

namespace detail {

// Per-column counts of positives/negatives in each grid bucket.
struct BucketCounts {
    std::size_t buckets = 0;
    std::vector<std::size_t> pos;  // [col * buckets + b]
    std::vector<std::size_t> neg;
    std::vector<std::size_t> pos_total;
    std::vector<std::size_t> neg_total;

    BucketCounts(const RealMatrix& probs, const BinaryMatrix& targets, const Grid& grid)
        : buckets(grid.size() + 1),
          pos(probs.cols() * buckets, 0),
          neg(probs.cols() * buckets, 0),
          pos_total(probs.cols(), 0),
          neg_total(probs.cols(), 0) {
        for (std::size_t r = 0; r < probs.rows(); ++r)
            for (std::size_t c = 0; c < probs.cols(); ++c) {
                const std::size_t b = grid.bucket(probs(r, c));
                if (targets(r, c)) {
                    ++pos[c * buckets + b];
                    ++pos_total[c];
                } else {
                    ++neg[c * buckets + b];
                    ++neg_total[c];
                }
            }
        // Suffix sums: entry b becomes the count with bucket >= b.
        for (std::size_t c = 0; c < probs.cols(); ++c)
            for (std::size_t b = buckets - 1; b-- > 0;) {
                pos[c * buckets + b] += pos[c * buckets + b + 1];
                neg[c * buckets + b] += neg[c * buckets + b + 1];
            }
    }

    // Confusion for column c at grid point j (positives are buckets > j).
    Confusion at(std::size_t c, std::size_t j) const {
        Confusion k;
        k.tp = pos[c * buckets + j + 1];
        k.fp = neg[c * buckets + j + 1];
        k.fn = pos_total[c] - k.tp;
        k.tn = neg_total[c] - k.fp;
        return k;
    }
};

inline void check_tuning_inputs(const RealMatrix& probs, const BinaryMatrix& targets) {
    if (probs.rows() != targets.rows() || probs.cols() != targets.cols())
        throw ValidationError("probabilities and targets must have the same shape");
    require_binary(targets, "targets");
}

}  // namespace detail

// Sweeps one cutoff shared by all columns; objective = mean positive-class F1
// over columns. Ties go to higher mean recall, then the smaller threshold.
inline GlobalTuning tune_global_matrix(const RealMatrix& probs, const BinaryMatrix& targets, const Grid& grid,
                                       ZeroDivision zd = ZeroDivision::zero) {
    detail::check_tuning_inputs(probs, targets);
    detail::BucketCounts counts(probs, targets, grid);
    std::vector<Confusion> conf(probs.cols());
    GlobalTuning best;
    bool have = false;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        for (std::size_t c = 0; c < probs.cols(); ++c) conf[c] = counts.at(c, j);
        const auto report = macro_from_confusions(conf, zd);
        const double score = report.macro_f1;
        const double recall = report.macro_recall();
        if (!have || score > best.score || (score == best.score && recall > best.recall)) {
            best = {grid[j], score, recall};
            have = true;
        }
    }
    return best;
}

inline GlobalTuning tune_global(const ProbMatrix& probs, const GoldMatrix& gold, Objective objective,
                                const Grid& grid = Grid::uniform(), ZeroDivision zd = ZeroDivision::zero) {
    guard_tuning("tune_global", gold);
    require_same_keys(probs.keys(), gold.keys(), "tune_global");
    if (objective == Objective::positive_f1 && probs.cols() != 1)
        throw ValidationError("positive-class F1 objective needs a single probability column");
    if (objective == Objective::macro_f1 && probs.cols() != kNumValues)
        throw ValidationError("macro-F1 objective needs 19 probability columns");
    return tune_global_matrix(probs.probs(), gold.targets(probs.cols()), grid, zd);
}

inline constexpr double kDefaultMinPrecision = 0.40;
inline constexpr double kFallbackThreshold = 0.5;

struct LabelwiseResult {
    std::vector<double> thresholds;
    std::vector<std::uint8_t> fallback;
    std::vector<PRFScore> scores;  // at the chosen threshold on the tuning data
};

// Per column: maximise recall over grid points with precision >= floor; ties
// to higher precision, then the smaller threshold. No feasible point ->
// 0.5 and a fallback flag.
inline LabelwiseResult tune_labelwise_matrix(const RealMatrix& probs, const BinaryMatrix& targets, double min_precision,
                                             const Grid& grid, ZeroDivision zd = ZeroDivision::zero,
                                             Diagnostics* diag = nullptr) {
    detail::check_tuning_inputs(probs, targets);
    detail::BucketCounts counts(probs, targets, grid);
    LabelwiseResult out;
    for (std::size_t c = 0; c < probs.cols(); ++c) {
        std::optional<std::size_t> best;
        PRFScore best_score;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            const PRFScore s = score_counts(counts.at(c, j), zd);
            if (!(s.precision >= min_precision)) continue;
            if (!best || s.recall > best_score.recall ||
                (s.recall == best_score.recall && s.precision > best_score.precision)) {
                best = j;
                best_score = s;
            }
        }
        if (best) {
            out.thresholds.push_back(grid[*best]);
            out.fallback.push_back(0);
            out.scores.push_back(best_score);
        } else {
            out.thresholds.push_back(kFallbackThreshold);
            out.fallback.push_back(1);
            // Score at 0.5 itself, which need not be a grid point.
            Confusion k;
            for (std::size_t r = 0; r < probs.rows(); ++r) {
                const bool y = probs(r, c) >= kFallbackThreshold;
                if (y && targets(r, c)) ++k.tp;
                else if (y) ++k.fp;
                else if (targets(r, c)) ++k.fn;
                else ++k.tn;
            }
            out.scores.push_back(score_counts(k, zd));
            warn(diag, "no threshold reaches precision " + format_real(min_precision) + " for '" +
                           column_label(probs.cols(), c) + "'; falling back to 0.5");
        }
    }
    return out;
}

inline ThresholdSet tune_labelwise(const ProbMatrix& probs, const GoldMatrix& gold, double min_precision = kDefaultMinPrecision,
                                   const Grid& grid = Grid::uniform(), Diagnostics* diag = nullptr,
                                   ZeroDivision zd = ZeroDivision::zero) {
    guard_tuning("tune_labelwise", gold);
    require_same_keys(probs.keys(), gold.keys(), "tune_labelwise");
    auto r = tune_labelwise_matrix(probs.probs(), gold.targets(probs.cols()), min_precision, grid, zd, diag);
    return ThresholdSet::label_wise(std::move(r.thresholds), std::move(r.fallback), gold.split());
}

struct CalibrationOptions {
    Grid grid = Grid::uniform();
    double min_precision = kDefaultMinPrecision;
    double fixed_threshold = 0.5;
    ZeroDivision zero_division = ZeroDivision::zero;
};

// Produces a ThresholdSet of the requested kind from a tuning split.
inline ThresholdSet calibrate(const ProbMatrix& probs, const GoldMatrix& gold, ThresholdKind kind,
                              const CalibrationOptions& opt = {}, Diagnostics* diag = nullptr) {
    switch (kind) {
        case ThresholdKind::fixed_global:
            return ThresholdSet::fixed(opt.fixed_threshold);
        case ThresholdKind::tuned_global: {
            auto obj = probs.cols() == 1 ? Objective::positive_f1 : Objective::macro_f1;
            return ThresholdSet::tuned(tune_global(probs, gold, obj, opt.grid, opt.zero_division).threshold, gold.split());
        }
        default:
            return tune_labelwise(probs, gold, opt.min_precision, opt.grid, diag, opt.zero_division);
    }
}

// ============================================================================
// SERIALIZATION
// ============================================================================
//
//   # valuekit 0.1.0 seed=42
//   # kind=label-wise split=validation
//   value<TAB>threshold<TAB>fallback
//   Self-direction: thought<TAB>0.21<TAB>0
//   ...
//   gate<TAB>0.1<TAB>0            (optional)
//
// Global kinds write a single `global` row.

inline void write_thresholds(std::ostream& out, const ThresholdSet& t, std::optional<std::uint64_t> seed = std::nullopt) {
    t.validate();
    if (seed) out << provenance_line(*seed) << '\n';
    out << "# kind=" << to_string(t.kind) << " split=" << to_string(t.tuned_on) << '\n';
    out << "value\tthreshold\tfallback\n";
    if (t.kind == ThresholdKind::label_wise) {
        for (std::size_t c = 0; c < t.per_value.size(); ++c)
            out << column_label(t.per_value.size(), c) << '\t' << format_real(t.per_value[c]) << '\t'
                << static_cast<int>(t.fallback[c]) << '\n';
    } else {
        out << "global\t" << format_real(*t.global) << "\t0\n";
    }
    if (t.gate) out << "gate\t" << format_real(*t.gate) << "\t0\n";
}

inline ThresholdSet read_thresholds(std::istream& in, const std::string& source) {
    ThresholdSet t;
    bool have_kind = false, have_header = false;
    std::string line;
    std::size_t ln = 0;
    std::vector<std::pair<std::string, double>> rows;
    std::vector<std::uint8_t> flags;
    while (std::getline(in, line)) {
        ++ln;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line.front() == '#') {
            std::istringstream fields(line.substr(1));
            std::string field;
            while (fields >> field) {
                auto eq = field.find('=');
                if (eq == std::string::npos) continue;
                auto key = field.substr(0, eq), val = field.substr(eq + 1);
                if (key == "kind") {
                    t.kind = parse_threshold_kind(val);
                    have_kind = true;
                } else if (key == "split") {
                    t.tuned_on = parse_split(val);
                }
            }
            continue;
        }
        auto cells = split_tabs(line);
        if (!have_header) {
            if (cells.size() < 2 || cells[0] != "value" || cells[1] != "threshold")
                throw ParseError(source, ln, 0, "expected header 'value<TAB>threshold<TAB>fallback'");
            have_header = true;
            continue;
        }
        if (cells.size() < 2) throw ParseError(source, ln, 0, "expected name and threshold");
        auto x = parse_real(cells[1]);
        if (!x || !(*x >= 0.0 && *x <= 1.0)) throw ParseError(source, ln, 2, "threshold must be a number in [0,1]");
        std::uint8_t flag = 0;
        if (cells.size() >= 3) flag = detail::parse_flag(cells[2], source, ln, 3);
        if (cells[0] == "gate") {
            t.gate = *x;
            continue;
        }
        rows.emplace_back(std::string(cells[0]), *x);
        flags.push_back(flag);
    }
    if (!have_kind) throw ParseError(source, ln, 0, "missing '# kind=' header line");
    if (t.kind == ThresholdKind::label_wise) {
        if (rows.size() != kNumValues && rows.size() != 1)
            throw ParseError(source, ln, 0, "label-wise thresholds need one row per column");
        for (std::size_t c = 0; c < rows.size(); ++c)
            if (rows[c].first != column_label(rows.size(), c))
                throw ParseError(source, ln, 0, "unexpected threshold row '" + rows[c].first + "'");
        for (auto& r : rows) t.per_value.push_back(r.second);
        t.fallback = flags;
    } else {
        if (rows.size() != 1 || rows[0].first != "global")
            throw ParseError(source, ln, 0, "global thresholds need a single 'global' row");
        t.global = rows[0].second;
    }
    t.validate();
    return t;
}

inline void write_thresholds(const std::filesystem::path& path, const ThresholdSet& t,
                             std::optional<std::uint64_t> seed = std::nullopt) {
    auto out = detail::open_output(path);
    write_thresholds(out, t, seed);
}

inline ThresholdSet load_thresholds(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    return read_thresholds(in, path.string());
}

}  // namespace valuekit
