#pragma once

// Label space, instance keys, gold/probability tables and their TSV forms.
//
// Gold file:        Text-ID  Sentence-ID  <19 value columns>  presence
// Probability file: Text-ID  Sentence-ID  <19 value columns | 1 column>
// Raw stance file:  Text-ID  Sentence-ID  <value>:attained  <value>:constrained ...
//
// Tab separated, first non-comment row is the header, no quoting. Lines
// starting with '#' are provenance comments and ignored on read.

#include "valuekit/core.hpp"

#include <array>
#include <compare>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace valuekit {

// ============================================================================
// TAXONOMY
// ============================================================================

inline constexpr std::size_t kNumValues = 19;

// Canonical column order for every artifact in a run.
inline constexpr std::array<std::string_view, kNumValues> kValueNames = {
    "Self-direction: thought",
    "Self-direction: action",
    "Stimulation",
    "Hedonism",
    "Achievement",
    "Power: dominance",
    "Power: resources",
    "Face",
    "Security: personal",
    "Security: societal",
    "Tradition",
    "Conformity: rules",
    "Conformity: interpersonal",
    "Humility",
    "Benevolence: caring",
    "Benevolence: dependability",
    "Universalism: concern",
    "Universalism: nature",
    "Universalism: tolerance",
};

inline constexpr std::string_view kTextIdColumn = "Text-ID";
inline constexpr std::string_view kSentenceIdColumn = "Sentence-ID";
inline constexpr std::string_view kPresenceColumn = "presence";

inline std::optional<std::size_t> value_index(std::string_view name) {
    for (std::size_t v = 0; v < kNumValues; ++v)
        if (kValueNames[v] == name) return v;
    return std::nullopt;
}

// Column label used in reports: value names for 19 columns, "presence" for one.
inline std::string column_label(std::size_t cols, std::size_t c) {
    if (cols == kNumValues) return std::string(kValueNames[c]);
    if (cols == 1) return std::string(kPresenceColumn);
    return "col" + std::to_string(c);
}

enum class Split { unspecified, train, validation, test };

inline std::string_view to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
        default: return "unspecified";
    }
}

inline Split parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    if (s == "unspecified") return Split::unspecified;
    throw ValidationError("unknown split '" + std::string(s) + "'");
}

// ============================================================================
// KEYS
// ============================================================================

// Opaque (Text-ID, Sentence-ID) pair; never parsed as numbers.
struct SentenceKey {
    std::string text_id;
    std::string sentence_id;

    auto operator<=>(const SentenceKey&) const = default;
    bool operator==(const SentenceKey&) const = default;

    std::string to_string() const { return "(" + text_id + ", " + sentence_id + ")"; }
};

struct SentenceKeyHash {
    std::size_t operator()(const SentenceKey& k) const noexcept {
        std::size_t h = std::hash<std::string>{}(k.text_id);
        return h ^ (std::hash<std::string>{}(k.sentence_id) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
    }
};

using KeyIndex = std::unordered_map<SentenceKey, std::size_t, SentenceKeyHash>;

// Validates non-empty, unique keys and returns the key -> row map.
inline KeyIndex index_keys(const std::vector<SentenceKey>& keys, std::string_view what) {
    KeyIndex index;
    index.reserve(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
        const auto& k = keys[i];
        if (k.text_id.empty() || k.sentence_id.empty())
            throw ValidationError(std::string(what) + ": empty key component at row " + std::to_string(i + 1));
        if (!index.emplace(k, i).second)
            throw ValidationError(std::string(what) + ": duplicate key " + k.to_string());
    }
    return index;
}

// ============================================================================
// LABELS
// ============================================================================

struct RawStanceRecord {
    SentenceKey key;
    std::array<std::uint8_t, kNumValues> attained{};
    std::array<std::uint8_t, kNumValues> constrained{};
};

// label_v = 1 iff attained_v + constrained_v > 0.
inline std::array<std::uint8_t, kNumValues> collapse_stance(const RawStanceRecord& record) {
    std::array<std::uint8_t, kNumValues> out{};
    for (std::size_t v = 0; v < kNumValues; ++v) {
        const auto a = record.attained[v];
        const auto c = record.constrained[v];
        if (a > 1 || c > 1)
            throw ValidationError("non-binary stance flag at " + record.key.to_string() + ", column '" +
                                  std::string(kValueNames[v]) + (a > 1 ? ":attained'" : ":constrained'"));
        out[v] = (a + c > 0) ? 1 : 0;
    }
    return out;
}

inline void require_binary(const BinaryMatrix& m, std::string_view what) {
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < m.cols(); ++c)
            if (m(r, c) > 1)
                throw ValidationError(std::string(what) + ": non-binary entry at row " + std::to_string(r + 1) +
                                      ", column " + std::to_string(c + 1));
}

// presence[i] = OR over the columns of row i.
inline std::vector<std::uint8_t> derive_presence(const BinaryMatrix& labels) {
    require_binary(labels, "labels");
    std::vector<std::uint8_t> presence(labels.rows(), 0);
    for (std::size_t r = 0; r < labels.rows(); ++r) {
        auto row = labels.row(r);
        presence[r] = std::any_of(row.begin(), row.end(), [](std::uint8_t x) { return x != 0; }) ? 1 : 0;
    }
    return presence;
}

enum class PresenceCheck { strict, lenient };

// n x 19 binary labels with derived presence bit. Immutable once built.
class GoldMatrix {
public:
    GoldMatrix() : labels_(0, kNumValues) {}

    GoldMatrix(std::vector<SentenceKey> keys, BinaryMatrix labels, Split split = Split::unspecified)
        : keys_(std::move(keys)), labels_(std::move(labels)), split_(split) {
        validate_shape();
        presence_ = derive_presence(labels_);
    }

    // Takes a recorded presence column; strict mode rejects any row where it
    // disagrees with the labels, lenient mode recomputes and warns.
    static GoldMatrix with_presence(std::vector<SentenceKey> keys, BinaryMatrix labels,
                                    std::vector<std::uint8_t> presence, PresenceCheck mode,
                                    Diagnostics* diag = nullptr) {
        GoldMatrix g(std::move(keys), std::move(labels));
        if (presence.size() != g.size()) throw ValidationError("presence column length mismatch");
        for (std::size_t i = 0; i < presence.size(); ++i) {
            if (presence[i] > 1)
                throw ValidationError("non-binary presence at row " + std::to_string(i + 1));
            if (presence[i] != g.presence_[i]) {
                std::string msg = "presence=" + std::to_string(presence[i]) + " inconsistent with value labels at " +
                                  g.keys_[i].to_string();
                if (mode == PresenceCheck::strict) throw AlignmentError(msg);
                warn(diag, msg + " (recomputed)");
            }
        }
        return g;
    }

    std::size_t size() const noexcept { return keys_.size(); }
    const std::vector<SentenceKey>& keys() const noexcept { return keys_; }
    const BinaryMatrix& labels() const noexcept { return labels_; }
    const std::vector<std::uint8_t>& presence() const noexcept { return presence_; }
    Split split() const noexcept { return split_; }

    // Same data, tagged with the split it came from.
    GoldMatrix with_split(Split s) const {
        GoldMatrix g = *this;
        g.split_ = s;
        return g;
    }

    // Targets for a k-column prediction: the 19 labels, or presence for k = 1.
    BinaryMatrix targets(std::size_t k) const {
        if (k == kNumValues) return labels_;
        if (k == 1) return column_matrix(presence_);
        throw ValidationError("no gold targets for " + std::to_string(k) + " columns");
    }

    GoldMatrix subset(std::span<const std::size_t> rows) const {
        std::vector<SentenceKey> keys;
        BinaryMatrix labels(rows.size(), kNumValues);
        keys.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            keys.push_back(keys_[rows[i]]);
            auto src = labels_.row(rows[i]);
            std::copy(src.begin(), src.end(), labels.row(i).begin());
        }
        return GoldMatrix(std::move(keys), std::move(labels), split_);
    }

    bool operator==(const GoldMatrix& o) const {
        return keys_ == o.keys_ && labels_ == o.labels_ && presence_ == o.presence_;
    }

private:
    void validate_shape() {
        if (labels_.cols() != kNumValues)
            throw ValidationError("gold labels must have " + std::to_string(kNumValues) + " columns");
        if (labels_.rows() != keys_.size()) throw ValidationError("gold keys/labels row count mismatch");
        index_keys(keys_, "gold");
    }

    std::vector<SentenceKey> keys_;
    BinaryMatrix labels_;
    std::vector<std::uint8_t> presence_;
    Split split_ = Split::unspecified;
};

inline GoldMatrix gold_from_stance(const std::vector<RawStanceRecord>& records, Split split = Split::unspecified) {
    std::vector<SentenceKey> keys;
    BinaryMatrix labels(records.size(), kNumValues);
    keys.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        keys.push_back(records[i].key);
        auto y = collapse_stance(records[i]);
        std::copy(y.begin(), y.end(), labels.row(i).begin());
    }
    return GoldMatrix(std::move(keys), std::move(labels), split);
}

// ============================================================================
// PROBABILITIES
// ============================================================================

// n x k probabilities in [0,1]; k = 19 for value detectors, 1 for presence
// models and gates.
class ProbMatrix {
public:
    ProbMatrix() : probs_(0, kNumValues) {}

    ProbMatrix(std::vector<SentenceKey> keys, RealMatrix probs, std::string model_name = {})
        : keys_(std::move(keys)), probs_(std::move(probs)), model_name_(std::move(model_name)) {
        if (probs_.cols() != 1 && probs_.cols() != kNumValues)
            throw ValidationError("probability matrix must have 1 or " + std::to_string(kNumValues) +
                                  " columns, got " + std::to_string(probs_.cols()));
        if (probs_.rows() != keys_.size()) throw ValidationError("probability keys/rows mismatch");
        for (std::size_t r = 0; r < probs_.rows(); ++r)
            for (std::size_t c = 0; c < probs_.cols(); ++c) {
                double p = probs_(r, c);
                if (!(p >= 0.0 && p <= 1.0))
                    throw ValidationError(model_name_ + ": probability " + format_real(p) + " outside [0,1] at row " +
                                          std::to_string(r + 1) + ", column '" + column_label(probs_.cols(), c) + "'");
            }
        index_keys(keys_, model_name_.empty() ? std::string("probabilities") : model_name_);
    }

    std::size_t size() const noexcept { return keys_.size(); }
    std::size_t cols() const noexcept { return probs_.cols(); }
    const std::vector<SentenceKey>& keys() const noexcept { return keys_; }
    const RealMatrix& probs() const noexcept { return probs_; }
    const std::string& model_name() const noexcept { return model_name_; }

    ProbMatrix renamed(std::string name) const {
        ProbMatrix p = *this;
        p.model_name_ = std::move(name);
        return p;
    }

    bool operator==(const ProbMatrix& o) const { return keys_ == o.keys_ && probs_ == o.probs_; }

private:
    std::vector<SentenceKey> keys_;
    RealMatrix probs_;
    std::string model_name_;
};

// Reads a 0/1-valued probability matrix (a predictions file) as binary.
inline BinaryMatrix to_binary(const ProbMatrix& p) {
    BinaryMatrix out(p.size(), p.cols());
    for (std::size_t r = 0; r < p.size(); ++r)
        for (std::size_t c = 0; c < p.cols(); ++c) {
            double x = p.probs()(r, c);
            if (x != 0.0 && x != 1.0)
                throw ValidationError(p.model_name() + ": prediction at row " + std::to_string(r + 1) +
                                      " is not 0/1");
            out(r, c) = x == 1.0 ? 1 : 0;
        }
    return out;
}

inline ProbMatrix from_binary(const std::vector<SentenceKey>& keys, const BinaryMatrix& preds, std::string name) {
    RealMatrix m(preds.rows(), preds.cols());
    for (std::size_t i = 0; i < preds.values().size(); ++i) m.values()[i] = preds.values()[i];
    return ProbMatrix(keys, std::move(m), std::move(name));
}

// ============================================================================
// ALIGNMENT
// ============================================================================

struct AlignedPair {
    ProbMatrix probs;
    GoldMatrix gold;
};

inline void require_same_keys(const std::vector<SentenceKey>& a, const std::vector<SentenceKey>& b,
                              std::string_view what) {
    if (a.size() != b.size())
        throw AlignmentError(std::string(what) + ": row count mismatch (" + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()) + ")");
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i])
            throw AlignmentError(std::string(what) + ": key mismatch at row " + std::to_string(i + 1) + ": " +
                                 a[i].to_string() + " vs " + b[i].to_string());
}

// Reorders `probs` rows to follow `order`. Every key must occur exactly once
// on both sides.
inline ProbMatrix reorder_to(const ProbMatrix& probs, const std::vector<SentenceKey>& order) {
    const std::string name = probs.model_name().empty() ? std::string("predictions") : probs.model_name();
    if (probs.size() == 0 || order.empty()) throw AlignmentError(name + ": cannot align empty tables");
    KeyIndex target = index_keys(order, "reference");
    KeyIndex source = index_keys(probs.keys(), name);

    std::vector<std::string> missing, extra;
    for (const auto& k : order)
        if (!source.contains(k)) missing.push_back(k.to_string());
    for (const auto& k : probs.keys())
        if (!target.contains(k)) extra.push_back(k.to_string());
    if (!missing.empty() || !extra.empty()) {
        std::string msg = name + ": key sets differ;";
        auto list = [&msg](std::string_view label, const std::vector<std::string>& ks) {
            if (ks.empty()) return;
            msg += " " + std::string(label) + " (" + std::to_string(ks.size()) + "):";
            for (std::size_t i = 0; i < std::min<std::size_t>(ks.size(), 5); ++i) msg += " " + ks[i];
            if (ks.size() > 5) msg += " ...";
        };
        list("missing from predictions", missing);
        list("absent from reference", extra);
        throw AlignmentError(msg);
    }

    RealMatrix out(order.size(), probs.cols());
    for (std::size_t i = 0; i < order.size(); ++i) {
        auto src = probs.probs().row(source.at(order[i]));
        std::copy(src.begin(), src.end(), out.row(i).begin());
    }
    return ProbMatrix(order, std::move(out), probs.model_name());
}

// Reorders predictions into gold order (one-to-one on keys).
inline AlignedPair align(const ProbMatrix& probs, const GoldMatrix& gold) {
    return AlignedPair{reorder_to(probs, gold.keys()), gold};
}

// ============================================================================
// TSV I/O
// ============================================================================

namespace detail {

inline std::uint8_t parse_flag(std::string_view cell, const std::string& source, std::size_t line,
                               std::size_t col) {
    if (cell == "0") return 0;
    if (cell == "1") return 1;
    throw ParseError(source, line, col, "expected 0 or 1, got '" + std::string(cell) + "'");
}

inline SentenceKey parse_key(const std::vector<std::string_view>& cells, const std::string& source,
                             std::size_t line) {
    SentenceKey key{std::string(cells[0]), std::string(cells[1])};
    if (key.text_id.empty()) throw ParseError(source, line, 1, "empty Text-ID");
    if (key.sentence_id.empty()) throw ParseError(source, line, 2, "empty Sentence-ID");
    return key;
}

inline void check_key_header(const std::vector<std::string_view>& header, const std::string& source,
                             std::size_t line) {
    if (header.size() < 2 || header[0] != kTextIdColumn || header[1] != kSentenceIdColumn)
        throw ParseError(source, line, 0, "header must start with Text-ID<TAB>Sentence-ID");
}

inline void insert_key(KeyIndex& seen, const SentenceKey& key, const std::string& source, std::size_t line) {
    if (!seen.emplace(key, seen.size()).second)
        throw ParseError(source, line, 0, "duplicate key " + key.to_string());
}

// Maps the 19 value columns in `header` (starting at `first`) to canonical
// indices. Returns perm[file_col - first] = canonical index.
inline std::vector<std::size_t> map_value_columns(const std::vector<std::string_view>& header, std::size_t first,
                                                  std::size_t count, const std::string& source, std::size_t line) {
    std::vector<std::size_t> perm(count);
    std::array<bool, kNumValues> seen{};
    for (std::size_t j = 0; j < count; ++j) {
        auto idx = value_index(header[first + j]);
        if (!idx) throw ParseError(source, line, first + j + 1, "unknown value column '" + std::string(header[first + j]) + "'");
        if (seen[*idx]) throw ParseError(source, line, first + j + 1, "duplicate value column '" + std::string(header[first + j]) + "'");
        seen[*idx] = true;
        perm[j] = *idx;
    }
    for (std::size_t v = 0; v < kNumValues; ++v)
        if (!seen[v]) throw ParseError(source, line, 0, "missing value column '" + std::string(kValueNames[v]) + "'");
    return perm;
}

inline std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    return in;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    return out;
}

}  // namespace detail

inline GoldMatrix read_gold(std::istream& in, const std::string& source, PresenceCheck mode = PresenceCheck::strict,
                            Diagnostics* diag = nullptr) {
    TsvLineReader reader(in);
    std::string line;
    if (!reader.next(line)) throw ParseError(source, reader.line_number(), 0, "missing header");
    const std::string header_line = line;
    auto header = split_tabs(header_line);
    detail::check_key_header(header, source, reader.line_number());
    if (header.size() != kNumValues + 3 || header.back() != kPresenceColumn) {
        // Distinguish a missing presence column from stray/missing value columns.
        if (std::find(header.begin(), header.end(), kPresenceColumn) == header.end())
            throw ParseError(source, reader.line_number(), 0, "missing 'presence' column");
        for (std::size_t j = 2; j < header.size(); ++j)
            if (header[j] != kPresenceColumn && !value_index(header[j]))
                throw ParseError(source, reader.line_number(), j + 1,
                                 "unknown value column '" + std::string(header[j]) + "'");
        throw ParseError(source, reader.line_number(), 0,
                         "expected Text-ID, Sentence-ID, 19 value columns and presence (last)");
    }
    auto perm = detail::map_value_columns(header, 2, kNumValues, source, reader.line_number());

    std::vector<SentenceKey> keys;
    std::vector<std::uint8_t> flat, presence;
    KeyIndex seen;
    while (reader.next(line)) {
        const std::size_t ln = reader.line_number();
        auto cells = split_tabs(line);
        if (cells.size() != header.size())
            throw ParseError(source, ln, 0,
                             "expected " + std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
        auto key = detail::parse_key(cells, source, ln);
        detail::insert_key(seen, key, source, ln);
        std::array<std::uint8_t, kNumValues> row{};
        for (std::size_t j = 0; j < kNumValues; ++j) row[perm[j]] = detail::parse_flag(cells[2 + j], source, ln, 3 + j);
        flat.insert(flat.end(), row.begin(), row.end());
        presence.push_back(detail::parse_flag(cells.back(), source, ln, header.size()));
        keys.push_back(std::move(key));
    }
    BinaryMatrix labels(keys.size(), kNumValues);
    std::copy(flat.begin(), flat.end(), labels.values().begin());
    return GoldMatrix::with_presence(std::move(keys), std::move(labels), std::move(presence), mode, diag);
}

inline GoldMatrix load_gold(const std::filesystem::path& path, PresenceCheck mode = PresenceCheck::strict,
                            Diagnostics* diag = nullptr) {
    auto in = detail::open_input(path);
    return read_gold(in, path.string(), mode, diag);
}

inline void write_gold(std::ostream& out, const GoldMatrix& gold, std::optional<std::uint64_t> seed = std::nullopt) {
    if (seed) out << provenance_line(*seed) << '\n';
    out << kTextIdColumn << '\t' << kSentenceIdColumn;
    for (auto name : kValueNames) out << '\t' << name;
    out << '\t' << kPresenceColumn << '\n';
    for (std::size_t i = 0; i < gold.size(); ++i) {
        out << gold.keys()[i].text_id << '\t' << gold.keys()[i].sentence_id;
        for (auto x : gold.labels().row(i)) out << '\t' << static_cast<int>(x);
        out << '\t' << static_cast<int>(gold.presence()[i]) << '\n';
    }
}

inline void write_gold(const std::filesystem::path& path, const GoldMatrix& gold,
                       std::optional<std::uint64_t> seed = std::nullopt) {
    auto out = detail::open_output(path);
    write_gold(out, gold, seed);
}

// expected_k = 19: value columns named by the canonical value names (any
// order, written back canonically). expected_k = 1: a single named column.
inline ProbMatrix read_probs(std::istream& in, const std::string& source, std::size_t expected_k,
                             std::string model_name = {}) {
    if (expected_k != 1 && expected_k != kNumValues)
        throw ValidationError("expected_k must be 1 or " + std::to_string(kNumValues));
    if (model_name.empty()) model_name = std::filesystem::path(source).stem().string();
    TsvLineReader reader(in);
    std::string line;
    if (!reader.next(line)) throw ParseError(source, reader.line_number(), 0, "missing header");
    const std::string header_line = line;
    auto header = split_tabs(header_line);
    detail::check_key_header(header, source, reader.line_number());
    if (header.size() != expected_k + 2)
        throw ParseError(source, reader.line_number(), 0,
                         "expected " + std::to_string(expected_k) + " probability columns, got " +
                             std::to_string(header.size() - 2));
    std::vector<std::size_t> perm{0};
    if (expected_k == kNumValues) perm = detail::map_value_columns(header, 2, kNumValues, source, reader.line_number());

    std::vector<SentenceKey> keys;
    std::vector<double> flat;
    KeyIndex seen;
    std::vector<double> row(expected_k);
    while (reader.next(line)) {
        const std::size_t ln = reader.line_number();
        auto cells = split_tabs(line);
        if (cells.size() != header.size())
            throw ParseError(source, ln, 0,
                             "expected " + std::to_string(header.size()) + " cells, got " + std::to_string(cells.size()));
        auto key = detail::parse_key(cells, source, ln);
        detail::insert_key(seen, key, source, ln);
        for (std::size_t j = 0; j < expected_k; ++j) {
            auto x = parse_real(cells[2 + j]);
            if (!x) throw ParseError(source, ln, 3 + j, "not a number: '" + std::string(cells[2 + j]) + "'");
            if (!(*x >= 0.0 && *x <= 1.0))
                throw ParseError(source, ln, 3 + j,
                                 "probability " + std::string(cells[2 + j]) + " outside [0,1] in column '" +
                                     std::string(header[2 + j]) + "'");
            row[perm[j]] = *x;
        }
        flat.insert(flat.end(), row.begin(), row.end());
        keys.push_back(std::move(key));
    }
    RealMatrix probs(keys.size(), expected_k);
    std::copy(flat.begin(), flat.end(), probs.values().begin());
    return ProbMatrix(std::move(keys), std::move(probs), std::move(model_name));
}

inline ProbMatrix load_probs(const std::filesystem::path& path, std::size_t expected_k, std::string model_name = {}) {
    auto in = detail::open_input(path);
    return read_probs(in, path.string(), expected_k, model_name.empty() ? path.stem().string() : model_name);
}

inline void write_probs(std::ostream& out, const ProbMatrix& probs, std::optional<std::uint64_t> seed = std::nullopt,
                        std::string_view single_column = kPresenceColumn) {
    if (seed) out << provenance_line(*seed) << '\n';
    out << kTextIdColumn << '\t' << kSentenceIdColumn;
    if (probs.cols() == kNumValues)
        for (auto name : kValueNames) out << '\t' << name;
    else
        out << '\t' << single_column;
    out << '\n';
    for (std::size_t i = 0; i < probs.size(); ++i) {
        out << probs.keys()[i].text_id << '\t' << probs.keys()[i].sentence_id;
        for (double x : probs.probs().row(i)) out << '\t' << format_real(x);
        out << '\n';
    }
}

inline void write_probs(const std::filesystem::path& path, const ProbMatrix& probs,
                        std::optional<std::uint64_t> seed = std::nullopt, std::string_view single_column = kPresenceColumn) {
    auto out = detail::open_output(path);
    write_probs(out, probs, seed, single_column);
}

// Optional ingestion of attained/constrained columns; value names may
// themselves contain ':' so the suffix is split at the last one.
inline std::vector<RawStanceRecord> read_raw_stance(std::istream& in, const std::string& source) {
    TsvLineReader reader(in);
    std::string line;
    if (!reader.next(line)) throw ParseError(source, reader.line_number(), 0, "missing header");
    const std::string header_line = line;
    auto header = split_tabs(header_line);
    detail::check_key_header(header, source, reader.line_number());
    if (header.size() != 2 + 2 * kNumValues)
        throw ParseError(source, reader.line_number(), 0, "expected attained/constrained columns for all 19 values");

    struct Slot {
        std::size_t value;
        bool attained;
    };
    std::vector<Slot> slots;
    std::array<int, kNumValues> seen_a{}, seen_c{};
    for (std::size_t j = 2; j < header.size(); ++j) {
        auto col = header[j];
        auto pos = col.rfind(':');
        if (pos == std::string_view::npos)
            throw ParseError(source, reader.line_number(), j + 1, "expected '<value>:attained|constrained'");
        auto idx = value_index(col.substr(0, pos));
        auto suffix = col.substr(pos + 1);
        if (!idx || (suffix != "attained" && suffix != "constrained"))
            throw ParseError(source, reader.line_number(), j + 1, "unknown stance column '" + std::string(col) + "'");
        bool attained = suffix == "attained";
        if (++(attained ? seen_a : seen_c)[*idx] > 1)
            throw ParseError(source, reader.line_number(), j + 1, "duplicate stance column '" + std::string(col) + "'");
        slots.push_back({*idx, attained});
    }

    std::vector<RawStanceRecord> records;
    KeyIndex seen;
    while (reader.next(line)) {
        const std::size_t ln = reader.line_number();
        auto cells = split_tabs(line);
        if (cells.size() != header.size()) throw ParseError(source, ln, 0, "wrong cell count");
        RawStanceRecord rec;
        rec.key = detail::parse_key(cells, source, ln);
        detail::insert_key(seen, rec.key, source, ln);
        for (std::size_t j = 0; j < slots.size(); ++j) {
            auto flag = detail::parse_flag(cells[2 + j], source, ln, 3 + j);
            (slots[j].attained ? rec.attained : rec.constrained)[slots[j].value] = flag;
        }
        records.push_back(std::move(rec));
    }
    return records;
}

inline std::vector<RawStanceRecord> load_raw_stance(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    return read_raw_stance(in, path.string());
}

}  // namespace valuekit
