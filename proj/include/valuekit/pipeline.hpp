#pragma once

// End-to-end runs: tune on validation, freeze, evaluate on test. Every run
// produces a RunManifest (JSON) recording input digests, frozen parameters
// and the split each was tuned on, so the test evaluation can be replayed.

#include "valuekit/ensemble.hpp"
#include "valuekit/gating.hpp"

#include "json.hpp"
#include <openssl/evp.h>

#include <array>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

namespace valuekit {

using Json = nlohmann::ordered_json;

// ============================================================================
// DIGESTS
// ============================================================================

inline std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "' for hashing");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0 && EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount())) != 1)
            throw Error("sha256 update failed");
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) throw Error("sha256 final failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

// ============================================================================
// IN-MEMORY RUNS
// ============================================================================

enum class GateOrder { sequential, joint };

inline std::string_view to_string(GateOrder o) { return o == GateOrder::joint ? "joint" : "sequential"; }

inline GateOrder parse_gate_order(std::string_view s) {
    if (s == "sequential") return GateOrder::sequential;
    if (s == "joint") return GateOrder::joint;
    throw ValidationError("unknown gate order '" + std::string(s) + "'");
}

struct RunOptions {
    ThresholdKind kind = ThresholdKind::tuned_global;
    double grid_step = 0.01;
    double min_precision = kDefaultMinPrecision;
    double fixed_threshold = 0.5;
    ZeroDivision zero_division = ZeroDivision::zero;
    GateOrder gate_order = GateOrder::sequential;
    std::uint64_t seed = 42;

    CalibrationOptions calibration() const {
        return {Grid::uniform(grid_step), min_precision, fixed_threshold, zero_division};
    }
};

struct RunResult {
    ThresholdSet thresholds;  // gate cutoff in thresholds.gate for hierarchical runs
    MacroReport validation;
    MacroReport test;
    BinaryMatrix test_predictions;
    std::optional<GateDiagnostics> gate_diagnostics;  // on test
    Diagnostics diagnostics;
};

// Frozen evaluation; the only place test gold is read.
inline MacroReport evaluate_frozen(const ThresholdSet& t, const ProbMatrix& probs, const GoldMatrix& gold,
                                   BinaryMatrix* predictions = nullptr, const ProbMatrix* gate = nullptr,
                                   ZeroDivision zd = ZeroDivision::zero) {
    require_same_keys(probs.keys(), gold.keys(), "evaluation");
    BinaryMatrix pred;
    if (gate != nullptr) {
        if (!t.gate) throw ValidationError("gated evaluation needs a gate threshold");
        pred = binarize(apply_gate(*gate, probs, *t.gate), t);
    } else {
        pred = binarize(probs, t);
    }
    auto report = macro_report(pred, gold.targets(probs.cols()), zd);
    if (predictions != nullptr) *predictions = std::move(pred);
    return report;
}

inline RunResult run_direct(const ProbMatrix& probs_val, const ProbMatrix& probs_test, const GoldMatrix& gold_val,
                            const GoldMatrix& gold_test, const RunOptions& opt = {}) {
    // Tag splits so a misrouted tuning call on test gold fails loudly.
    const GoldMatrix val = gold_val.with_split(Split::validation);
    const GoldMatrix test = gold_test.with_split(Split::test);
    RunResult res;
    res.thresholds = calibrate(probs_val, val, opt.kind, opt.calibration(), &res.diagnostics);
    res.validation = evaluate_frozen(res.thresholds, probs_val, val, nullptr, nullptr, opt.zero_division);
    res.test = evaluate_frozen(res.thresholds, probs_test, test, &res.test_predictions, nullptr, opt.zero_division);
    return res;
}

// Value thresholds are tuned on ungated validation output, then tau_gate with
// them frozen (sequential), or both together on a 2-D grid (joint, global
// threshold kinds only).
inline RunResult run_hierarchical(const ProbMatrix& gate_val, const ProbMatrix& gate_test, const ProbMatrix& probs_val,
                                  const ProbMatrix& probs_test, const GoldMatrix& gold_val, const GoldMatrix& gold_test,
                                  const RunOptions& opt = {}) {
    const GoldMatrix val = gold_val.with_split(Split::validation);
    const GoldMatrix test = gold_test.with_split(Split::test);
    const Grid grid = Grid::uniform(opt.grid_step);
    RunResult res;
    if (opt.gate_order == GateOrder::joint) {
        if (opt.kind != ThresholdKind::tuned_global)
            throw ValidationError("joint gate tuning supports the tuned-global threshold kind only");
        auto j = tune_gate_joint(gate_val, probs_val, val, grid, opt.zero_division);
        res.thresholds = ThresholdSet::tuned(j.value_threshold, val.split());
        res.thresholds.gate = j.tau_gate;
    } else {
        res.thresholds = calibrate(probs_val, val, opt.kind, opt.calibration(), &res.diagnostics);
        res.thresholds.gate = tune_gate(gate_val, probs_val, val, res.thresholds, grid, opt.zero_division).tau_gate;
    }
    res.validation = evaluate_frozen(res.thresholds, probs_val, val, nullptr, &gate_val, opt.zero_division);
    res.test = evaluate_frozen(res.thresholds, probs_test, test, &res.test_predictions, &gate_test, opt.zero_division);
    res.gate_diagnostics = gate_diagnostics(gate_test, probs_test, test, res.thresholds, *res.thresholds.gate, opt.zero_division);
    return res;
}

struct EnsembleRunResult {
    EnsembleSpec spec;
    MacroReport validation;
    MacroReport test;
    BinaryMatrix test_predictions;
};

inline std::vector<ProbMatrix> member_matrices(const EnsembleSpec& spec, const std::vector<CandidateRun>& pool, bool test) {
    std::vector<ProbMatrix> out;
    for (const auto& name : spec.members) {
        auto it = std::find_if(pool.begin(), pool.end(), [&](const CandidateRun& c) { return c.name == name; });
        if (it == pool.end()) throw ValidationError("ensemble member '" + name + "' not in pool");
        if (test && !it->test) throw ValidationError("ensemble member '" + name + "' has no test probabilities");
        out.push_back(test ? *it->test : it->validation);
    }
    return out;
}

inline EnsembleRunResult run_ensemble(const std::vector<CandidateRun>& pool, const GoldMatrix& gold_val,
                                      const GoldMatrix& gold_test, const SelectionOptions& opt = {}) {
    const GoldMatrix val = gold_val.with_split(Split::validation);
    const GoldMatrix test = gold_test.with_split(Split::test);
    EnsembleRunResult res;
    res.spec = forward_select(pool, val, opt);
    res.validation = macro_report(apply_ensemble(res.spec, member_matrices(res.spec, pool, false)), val.labels(),
                                  opt.zero_division);
    auto members_test = member_matrices(res.spec, pool, true);
    for (const auto& m : members_test) require_same_keys(m.keys(), test.keys(), "ensemble test member");
    res.test_predictions = apply_ensemble(res.spec, members_test);
    res.test = macro_report(res.test_predictions, test.labels(), opt.zero_division);
    return res;
}

// ============================================================================
// CHAMPION SELECTION
// ============================================================================

struct ChampionCandidate {
    std::string name;
    double val_macro_f1 = 0.0;
    std::size_t members = 1;
    ThresholdKind kind = ThresholdKind::tuned_global;
};

// Highest validation macro-F1; ties go to fewer members, then the simpler
// threshold kind (fixed < tuned global < label-wise), then input order.
inline std::size_t select_champion(std::span<const ChampionCandidate> candidates) {
    if (candidates.empty()) throw ValidationError("select_champion: no candidates");
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        const auto& a = candidates[i];
        const auto& b = candidates[best];
        if (a.val_macro_f1 != b.val_macro_f1) {
            if (a.val_macro_f1 > b.val_macro_f1) best = i;
        } else if (a.members != b.members) {
            if (a.members < b.members) best = i;
        } else if (static_cast<int>(a.kind) < static_cast<int>(b.kind)) {
            best = i;
        }
    }
    return best;
}

// ============================================================================
// COMPARISON
// ============================================================================

struct CompareOptions {
    std::size_t B = 2000;
    std::uint64_t seed = 42;
    double alpha = kDefaultAlpha;
    unsigned workers = 1;
    bool positives_only = false;
    ZeroDivision zero_division = ZeroDivision::zero;
};

struct ComparisonReport {
    std::string system_a;
    std::string system_b;
    double macro_f1_a = 0.0;
    double macro_f1_b = 0.0;
    BootstrapResult bootstrap;
    std::vector<McNemarResult> mcnemar;
    FdrDecision fdr;
    bool positives_only = false;
};

// Delta = macro-F1(A) - macro-F1(B); one-sided p tests "A does not improve on B".
inline ComparisonReport compare(std::string name_a, const BinaryMatrix& a, std::string name_b, const BinaryMatrix& b,
                                const GoldMatrix& gold, const CompareOptions& opt = {}) {
    if (a.rows() != gold.size() || b.rows() != gold.size()) throw AlignmentError("compare: row counts differ from gold");
    if (a.cols() != b.cols()) throw AlignmentError("compare: systems differ in column count");
    const BinaryMatrix truth = gold.targets(a.cols());
    ComparisonReport r;
    r.system_a = std::move(name_a);
    r.system_b = std::move(name_b);
    r.positives_only = opt.positives_only;
    r.macro_f1_a = macro_report(a, truth, opt.zero_division).macro_f1;
    r.macro_f1_b = macro_report(b, truth, opt.zero_division).macro_f1;
    BootstrapOptions bopt;
    bopt.B = opt.B;
    bopt.seed = opt.seed;
    bopt.workers = opt.workers;
    bopt.score = macro_f1_score(opt.zero_division);
    r.bootstrap = paired_bootstrap(a, b, truth, bopt);
    r.mcnemar = mcnemar_per_column(a, b, truth, opt.positives_only);
    std::vector<double> p;
    for (const auto& m : r.mcnemar) p.push_back(m.p_exact);
    r.fdr = benjamini_hochberg(p, opt.alpha);
    return r;
}

// Binary prediction files (0/1 entries), reordered to gold order.
inline ComparisonReport compare(const ProbMatrix& preds_a, const ProbMatrix& preds_b, const GoldMatrix& gold,
                                const CompareOptions& opt = {}) {
    auto a = reorder_to(preds_a, gold.keys());
    auto b = reorder_to(preds_b, gold.keys());
    return compare(a.model_name(), to_binary(a), b.model_name(), to_binary(b), gold, opt);
}

//   system_a system_b macro_f1_a macro_f1_b observed_delta mean_delta lower_95 upper_95 p_one_sided B seed
//   <blank line>
//   value b c p_exact p_bh reject
inline void write_comparison_tsv(std::ostream& out, const ComparisonReport& r) {
    const auto& bs = r.bootstrap;
    out << "system_a\tsystem_b\tmacro_f1_a\tmacro_f1_b\tobserved_delta\tmean_delta\tlower_95\tupper_95\tp_one_sided\tB\tseed\n";
    out << r.system_a << '\t' << r.system_b << '\t' << format_fixed(r.macro_f1_a, 3) << '\t'
        << format_fixed(r.macro_f1_b, 3) << '\t' << format_real(bs.observed_delta) << '\t' << format_real(bs.mean_delta)
        << '\t' << format_real(bs.lower_95_one_sided) << '\t' << format_real(bs.upper_95_one_sided) << '\t'
        << format_real(bs.p_one_sided) << '\t' << bs.B << '\t' << bs.seed << "\n\n";
    out << "# mcnemar " << (r.positives_only ? "positives-only" : "all-instances") << " alpha=" << format_real(r.fdr.alpha)
        << '\n';
    out << "value\tb\tc\tp_exact\tp_bh\treject\n";
    for (std::size_t i = 0; i < r.mcnemar.size(); ++i) {
        const auto& m = r.mcnemar[i];
        const auto& e = r.fdr.entries[i];
        out << m.value << '\t' << m.b << '\t' << m.c << '\t' << format_real(m.p_exact) << '\t'
            << format_real(e.adjusted_p) << '\t' << (e.rejected ? 1 : 0) << '\n';
    }
}

// ============================================================================
// JSON
// ============================================================================

inline Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json to_json(const ThresholdSet& t) {
    t.validate();
    Json j;
    j["kind"] = to_string(t.kind);
    j["tuned_on"] = to_string(t.tuned_on);
    if (t.kind == ThresholdKind::label_wise) {
        Json rows = Json::array();
        for (std::size_t c = 0; c < t.per_value.size(); ++c)
            rows.push_back({{"value", column_label(t.per_value.size(), c)},
                            {"threshold", t.per_value[c]},
                            {"fallback", t.fallback[c] != 0}});
        j["per_value"] = rows;
    } else {
        j["global"] = *t.global;
    }
    if (t.gate) j["gate"] = *t.gate;
    return j;
}

inline ThresholdSet thresholds_from_json(const Json& j) {
    ThresholdSet t;
    t.kind = parse_threshold_kind(j.at("kind").get<std::string>());
    t.tuned_on = parse_split(j.at("tuned_on").get<std::string>());
    if (t.kind == ThresholdKind::label_wise) {
        const auto& rows = j.at("per_value");
        for (std::size_t c = 0; c < rows.size(); ++c) {
            if (rows[c].at("value").get<std::string>() != column_label(rows.size(), c))
                throw ValidationError("threshold rows are not in canonical value order");
            t.per_value.push_back(rows[c].at("threshold").get<double>());
            t.fallback.push_back(rows[c].at("fallback").get<bool>() ? 1 : 0);
        }
    } else {
        t.global = j.at("global").get<double>();
    }
    if (j.contains("gate")) t.gate = j.at("gate").get<double>();
    t.validate();
    return t;
}

inline Json to_json(const EnsembleSpec& s) {
    Json j;
    j["members"] = s.members;
    j["mode"] = to_string(s.mode);
    j["weights"] = s.weights;
    j["global_t"] = s.global_t ? Json(*s.global_t) : Json(nullptr);
    Json mt = Json::array();
    for (const auto& t : s.member_thresholds) mt.push_back(to_json(t));
    j["member_thresholds"] = mt;
    j["tie"] = to_string(s.tie);
    j["seed"] = s.seed;
    j["B"] = s.B;
    j["min_relative"] = s.min_relative;
    j["val_macro_f1"] = s.val_macro_f1;
    j["tuned_on"] = to_string(s.tuned_on);
    Json trace = Json::array();
    for (const auto& st : s.trace)
        trace.push_back({{"candidate", st.candidate},
                         {"members_before", st.members_before},
                         {"accepted", st.accepted},
                         {"current_f1", st.current_f1},
                         {"trial_f1", st.trial_f1},
                         {"trial_threshold", st.trial_threshold ? Json(*st.trial_threshold) : Json(nullptr)},
                         {"mean_delta", st.mean_delta},
                         {"lower_95", st.lower_95},
                         {"relative_lower", finite_or_null(st.relative_lower)},
                         {"p_one_sided", st.p_one_sided}});
    j["trace"] = trace;
    return j;
}

inline EnsembleSpec ensemble_from_json(const Json& j) {
    EnsembleSpec s;
    s.members = j.at("members").get<std::vector<std::string>>();
    s.mode = parse_vote_mode(j.at("mode").get<std::string>());
    s.weights = j.at("weights").get<std::vector<double>>();
    if (!j.at("global_t").is_null()) s.global_t = j.at("global_t").get<double>();
    for (const auto& t : j.at("member_thresholds")) s.member_thresholds.push_back(thresholds_from_json(t));
    s.tie = parse_tie_rule(j.at("tie").get<std::string>());
    s.seed = j.at("seed").get<std::uint64_t>();
    s.B = j.at("B").get<std::size_t>();
    s.min_relative = j.at("min_relative").get<double>();
    s.val_macro_f1 = j.at("val_macro_f1").get<double>();
    s.tuned_on = parse_split(j.at("tuned_on").get<std::string>());
    for (const auto& st : j.at("trace")) {
        SelectionStep step;
        step.candidate = st.at("candidate").get<std::string>();
        step.members_before = st.at("members_before").get<std::vector<std::string>>();
        step.accepted = st.at("accepted").get<bool>();
        step.current_f1 = st.at("current_f1").get<double>();
        step.trial_f1 = st.at("trial_f1").get<double>();
        if (!st.at("trial_threshold").is_null()) step.trial_threshold = st.at("trial_threshold").get<double>();
        step.mean_delta = st.at("mean_delta").get<double>();
        step.lower_95 = st.at("lower_95").get<double>();
        // null encodes the +inf ratio recorded when the current score is 0
        step.relative_lower = st.at("relative_lower").is_null() ? std::numeric_limits<double>::infinity()
                                                                 : st.at("relative_lower").get<double>();
        step.p_one_sided = st.at("p_one_sided").get<double>();
        s.trace.push_back(std::move(step));
    }
    if (s.member_thresholds.size() != s.members.size()) throw ValidationError("ensemble spec: one threshold set per member");
    return s;
}

// ============================================================================
// MANIFEST
// ============================================================================

enum class RunMode { direct, hierarchical, ensemble };

inline std::string_view to_string(RunMode m) {
    switch (m) {
        case RunMode::direct: return "direct";
        case RunMode::hierarchical: return "hierarchical";
        default: return "ensemble";
    }
}

inline RunMode parse_run_mode(std::string_view s) {
    if (s == "direct") return RunMode::direct;
    if (s == "hierarchical") return RunMode::hierarchical;
    if (s == "ensemble") return RunMode::ensemble;
    throw ValidationError("unknown run mode '" + std::string(s) + "'");
}

struct InputRecord {
    std::string role;  // gold_val, gold_test, probs_val, probs_test, gate_val, gate_test, <member>:val, <member>:test
    std::string path;
    std::string sha256;
};

struct ReportRecord {
    std::string name;
    std::string path;
};

struct RunManifest {
    std::string tool_version{kVersion};
    std::uint64_t master_seed = 42;
    RunMode mode = RunMode::direct;
    RunOptions options;
    SelectionOptions selection;  // ensemble mode
    PresenceCheck presence_check = PresenceCheck::strict;
    std::vector<InputRecord> inputs;
    std::optional<ThresholdSet> thresholds;
    std::optional<EnsembleSpec> ensemble;
    double validation_macro_f1 = 0.0;
    double test_macro_f1 = 0.0;
    std::vector<ReportRecord> reports;

    const InputRecord& input(std::string_view role) const {
        for (const auto& i : inputs)
            if (i.role == role) return i;
        throw ValidationError("manifest has no input with role '" + std::string(role) + "'");
    }
};

inline Json to_json(const RunManifest& m) {
    Json j;
    j["tool"] = kToolName;
    j["tool_version"] = m.tool_version;
    j["master_seed"] = m.master_seed;
    j["mode"] = to_string(m.mode);
    j["presence_check"] = m.presence_check == PresenceCheck::strict ? "strict" : "lenient";
    Json opt;
    opt["grid_step"] = m.options.grid_step;
    opt["zero_division"] = m.options.zero_division == ZeroDivision::zero ? "zero" : "one-when-empty";
    if (m.mode == RunMode::ensemble) {
        opt["vote"] = to_string(m.selection.mode);
        opt["B"] = m.selection.B;
        opt["min_relative"] = m.selection.min_relative;
        opt["tie"] = to_string(m.selection.tie);
    } else {
        opt["threshold_kind"] = to_string(m.options.kind);
        opt["min_precision"] = m.options.min_precision;
        opt["fixed_threshold"] = m.options.fixed_threshold;
        if (m.mode == RunMode::hierarchical) opt["gate_order"] = to_string(m.options.gate_order);
    }
    j["options"] = opt;
    Json inputs = Json::array();
    for (const auto& i : m.inputs) inputs.push_back({{"role", i.role}, {"path", i.path}, {"sha256", i.sha256}});
    j["inputs"] = inputs;
    if (m.thresholds) j["thresholds"] = to_json(*m.thresholds);
    if (m.thresholds && m.thresholds->gate)
        j["gate"] = {{"tau", *m.thresholds->gate},
                     {"tuned_on", to_string(m.thresholds->tuned_on)},
                     {"order", to_string(m.options.gate_order)}};
    if (m.ensemble) j["ensemble"] = to_json(*m.ensemble);
    j["validation_macro_f1"] = m.validation_macro_f1;
    j["test_macro_f1"] = m.test_macro_f1;
    Json reports = Json::array();
    for (const auto& r : m.reports) reports.push_back({{"name", r.name}, {"path", r.path}});
    j["reports"] = reports;
    return j;
}

inline RunManifest manifest_from_json(const Json& j) {
    RunManifest m;
    m.tool_version = j.at("tool_version").get<std::string>();
    m.master_seed = j.at("master_seed").get<std::uint64_t>();
    m.mode = parse_run_mode(j.at("mode").get<std::string>());
    m.presence_check = j.value("presence_check", std::string("strict")) == "lenient" ? PresenceCheck::lenient
                                                                                   : PresenceCheck::strict;
    const auto& opt = j.at("options");
    m.options.seed = m.master_seed;
    m.options.grid_step = opt.at("grid_step").get<double>();
    m.options.zero_division = opt.at("zero_division").get<std::string>() == "zero" ? ZeroDivision::zero
                                                                                   : ZeroDivision::one_when_empty;
    m.selection.seed = m.master_seed;
    m.selection.zero_division = m.options.zero_division;
    m.selection.grid = Grid::uniform(m.options.grid_step);
    if (m.mode == RunMode::ensemble) {
        m.selection.mode = parse_vote_mode(opt.at("vote").get<std::string>());
        m.selection.B = opt.at("B").get<std::size_t>();
        m.selection.min_relative = opt.at("min_relative").get<double>();
        m.selection.tie = parse_tie_rule(opt.at("tie").get<std::string>());
    } else {
        m.options.kind = parse_threshold_kind(opt.at("threshold_kind").get<std::string>());
        m.options.min_precision = opt.at("min_precision").get<double>();
        m.options.fixed_threshold = opt.at("fixed_threshold").get<double>();
        if (opt.contains("gate_order")) m.options.gate_order = parse_gate_order(opt.at("gate_order").get<std::string>());
    }
    for (const auto& i : j.at("inputs"))
        m.inputs.push_back({i.at("role").get<std::string>(), i.at("path").get<std::string>(), i.at("sha256").get<std::string>()});
    if (j.contains("thresholds")) m.thresholds = thresholds_from_json(j.at("thresholds"));
    if (j.contains("ensemble")) m.ensemble = ensemble_from_json(j.at("ensemble"));
    m.validation_macro_f1 = j.at("validation_macro_f1").get<double>();
    m.test_macro_f1 = j.at("test_macro_f1").get<double>();
    for (const auto& r : j.at("reports")) m.reports.push_back({r.at("name").get<std::string>(), r.at("path").get<std::string>()});
    return m;
}

inline void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
    auto out = detail::open_output(path);
    out << to_json(m).dump(2) << '\n';
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
    auto in = detail::open_input(path);
    try {
        return manifest_from_json(Json::parse(in));
    } catch (const Json::exception& e) {
        throw ParseError(path.string(), 0, 0, std::string("invalid manifest: ") + e.what());
    }
}

// Throws DriftError naming every input whose content changed since the run.
inline void verify_inputs(const RunManifest& m) {
    std::string drift;
    for (const auto& i : m.inputs) {
        std::string now;
        try {
            now = sha256_file(i.path);
        } catch (const Error&) {
            now = "<missing>";
        }
        if (now != i.sha256) drift += (drift.empty() ? "" : ", ") + i.role + " (" + i.path + ")";
    }
    if (!drift.empty()) throw DriftError("input drift since the manifest was written: " + drift);
}

// ============================================================================
// FILE-BACKED RUNS
// ============================================================================

struct RunFiles {
    std::filesystem::path gold_val, gold_test;
    std::filesystem::path probs_val, probs_test;  // direct / hierarchical
    std::filesystem::path gate_val, gate_test;    // hierarchical
    struct Member {
        std::string name;
        std::filesystem::path val, test;
    };
    std::vector<Member> pool;  // ensemble
};

struct FileRunOutcome {
    RunManifest manifest;
    MacroReport validation;
    MacroReport test;
    BinaryMatrix test_predictions;
    std::vector<SentenceKey> test_keys;
    std::optional<GateDiagnostics> gate_diagnostics;
    Diagnostics diagnostics;
};

namespace detail {

inline InputRecord record_input(std::string role, const std::filesystem::path& p) {
    return {std::move(role), std::filesystem::absolute(p).lexically_normal().string(), sha256_file(p)};
}

inline ProbMatrix load_aligned(const std::filesystem::path& p, std::size_t k, const GoldMatrix& gold, std::string name) {
    return reorder_to(load_probs(p, k, std::move(name)), gold.keys());
}

}  // namespace detail

// Loads inputs, tunes on validation, evaluates on test and fills a manifest.
inline FileRunOutcome run_files(RunMode mode, const RunFiles& files, const RunOptions& opt,
                                const SelectionOptions& sel = {}, PresenceCheck check = PresenceCheck::strict) {
    FileRunOutcome out;
    auto& m = out.manifest;
    m.mode = mode;
    m.master_seed = opt.seed;
    m.options = opt;
    m.selection = sel;
    m.presence_check = check;
    m.inputs.push_back(detail::record_input("gold_val", files.gold_val));
    m.inputs.push_back(detail::record_input("gold_test", files.gold_test));
    const auto gold_val = load_gold(files.gold_val, check, &out.diagnostics).with_split(Split::validation);
    const auto gold_test = load_gold(files.gold_test, check, &out.diagnostics).with_split(Split::test);
    out.test_keys = gold_test.keys();

    if (mode == RunMode::ensemble) {
        std::vector<CandidateRun> pool;
        for (const auto& mem : files.pool) {
            m.inputs.push_back(detail::record_input(mem.name + ":val", mem.val));
            m.inputs.push_back(detail::record_input(mem.name + ":test", mem.test));
            CandidateRun c{mem.name, detail::load_aligned(mem.val, kNumValues, gold_val, mem.name), std::nullopt,
                           std::nullopt, 0.0};
            c.test = detail::load_aligned(mem.test, kNumValues, gold_test, mem.name);
            pool.push_back(std::move(c));
        }
        SelectionOptions s = sel;
        s.seed = opt.seed;
        s.grid = Grid::uniform(opt.grid_step);
        s.zero_division = opt.zero_division;
        m.selection = s;
        auto r = run_ensemble(pool, gold_val, gold_test, s);
        m.ensemble = r.spec;
        out.validation = std::move(r.validation);
        out.test = std::move(r.test);
        out.test_predictions = std::move(r.test_predictions);
    } else {
        m.inputs.push_back(detail::record_input("probs_val", files.probs_val));
        m.inputs.push_back(detail::record_input("probs_test", files.probs_test));
        auto pv = detail::load_aligned(files.probs_val, kNumValues, gold_val, "model");
        auto pt = detail::load_aligned(files.probs_test, kNumValues, gold_test, "model");
        RunResult r;
        if (mode == RunMode::hierarchical) {
            m.inputs.push_back(detail::record_input("gate_val", files.gate_val));
            m.inputs.push_back(detail::record_input("gate_test", files.gate_test));
            auto gv = detail::load_aligned(files.gate_val, 1, gold_val, "gate");
            auto gt = detail::load_aligned(files.gate_test, 1, gold_test, "gate");
            r = run_hierarchical(gv, gt, pv, pt, gold_val, gold_test, opt);
        } else {
            r = run_direct(pv, pt, gold_val, gold_test, opt);
        }
        m.thresholds = r.thresholds;
        out.validation = std::move(r.validation);
        out.test = std::move(r.test);
        out.test_predictions = std::move(r.test_predictions);
        out.gate_diagnostics = std::move(r.gate_diagnostics);
        for (auto& w : r.diagnostics.warnings) out.diagnostics.warn(std::move(w));
    }
    m.validation_macro_f1 = out.validation.macro_f1;
    m.test_macro_f1 = out.test.macro_f1;
    return out;
}

// Re-evaluates test inputs with the manifest's frozen parameters. No tuning
// happens here; inputs are checked against their recorded digests first.
inline FileRunOutcome replay_manifest(const RunManifest& m) {
    verify_inputs(m);
    FileRunOutcome out;
    out.manifest = m;
    const auto zd = m.options.zero_division;
    const auto gold_test = load_gold(m.input("gold_test").path, m.presence_check, &out.diagnostics).with_split(Split::test);
    out.test_keys = gold_test.keys();
    if (m.mode == RunMode::ensemble) {
        if (!m.ensemble) throw ValidationError("ensemble manifest without an ensemble spec");
        std::vector<ProbMatrix> members;
        for (const auto& name : m.ensemble->members)
            members.push_back(detail::load_aligned(m.input(name + ":test").path, kNumValues, gold_test, name));
        out.test_predictions = apply_ensemble(*m.ensemble, members);
        out.test = macro_report(out.test_predictions, gold_test.labels(), zd);
    } else {
        if (!m.thresholds) throw ValidationError("manifest without thresholds");
        auto pt = detail::load_aligned(m.input("probs_test").path, kNumValues, gold_test, "model");
        if (m.mode == RunMode::hierarchical) {
            auto gt = detail::load_aligned(m.input("gate_test").path, 1, gold_test, "gate");
            out.test = evaluate_frozen(*m.thresholds, pt, gold_test, &out.test_predictions, &gt, zd);
            out.gate_diagnostics = gate_diagnostics(gt, pt, gold_test, *m.thresholds, *m.thresholds->gate, zd);
        } else {
            out.test = evaluate_frozen(*m.thresholds, pt, gold_test, &out.test_predictions, nullptr, zd);
        }
    }
    out.validation.macro_f1 = m.validation_macro_f1;
    return out;
}

inline void write_gate_diagnostics_tsv(std::ostream& out, const GateDiagnostics& d) {
    out << "# gate_recall=" << format_fixed(d.gate_recall, 3) << '\n';
    out << "value\tpass_rate\tungated_recall\tgated_recall\n";
    for (std::size_t c = 0; c < d.pass_rate.size(); ++c)
        out << column_label(d.pass_rate.size(), c) << '\t' << format_fixed(d.pass_rate[c], 3) << '\t'
            << format_fixed(d.ungated_recall[c], 3) << '\t' << format_fixed(d.gated_recall[c], 3) << '\n';
}

}  // namespace valuekit
