// valuekit command-line tool. Every subcommand reads explicit paths, writes
// TSV (or JSON manifests) carrying a provenance comment line, and exits
// nonzero when any validation, parse, alignment, freeze or drift error fires.

#include "valuekit/valuekit.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

namespace vk = valuekit;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::uint64_t seed = 42;
    bool lenient = false;
    bool one_when_empty = false;

    vk::PresenceCheck check() const { return lenient ? vk::PresenceCheck::lenient : vk::PresenceCheck::strict; }
    vk::ZeroDivision zd() const { return one_when_empty ? vk::ZeroDivision::one_when_empty : vk::ZeroDivision::zero; }
};

// stdout when path is empty or "-".
class Sink {
public:
    explicit Sink(const std::string& path) {
        if (!path.empty() && path != "-") file_ = vk::detail::open_output(path);
    }
    std::ostream& get() { return file_ ? *file_ : std::cout; }

private:
    std::optional<std::ofstream> file_;
};

void print_warnings(const vk::Diagnostics& d) {
    for (const auto& w : d.warnings) std::cerr << "warning: " << w << '\n';
}

vk::GoldMatrix load_gold_tagged(const std::string& path, vk::Split split, const Common& c, vk::Diagnostics* diag) {
    return vk::load_gold(path, c.check(), diag).with_split(split);
}

vk::ProbMatrix load_aligned(const std::string& path, std::size_t k, const vk::GoldMatrix& gold) {
    return vk::reorder_to(vk::load_probs(path, k), gold.keys());
}

void write_report(const std::string& path, const vk::MacroReport& r, std::uint64_t seed) {
    Sink out(path);
    out.get() << vk::provenance_line(seed) << '\n';
    vk::write_macro_tsv(out.get(), r);
}

void write_predictions(const std::string& path, const std::vector<vk::SentenceKey>& keys, const vk::BinaryMatrix& pred,
                       const std::string& name, std::uint64_t seed) {
    if (path.empty()) return;
    vk::write_probs(fs::path(path), vk::from_binary(keys, pred, name), seed);
}

std::vector<vk::RunFiles::Member> read_pool(const std::string& path) {
    auto in = vk::detail::open_input(path);
    vk::TsvLineReader reader(in);
    std::vector<vk::RunFiles::Member> pool;
    std::string line;
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](std::string_view p) {
        fs::path q(p);
        return q.is_absolute() ? q : base / q;
    };
    while (reader.next(line)) {
        if (line.empty()) continue;
        auto cells = vk::split_tabs(line);
        if (cells.size() == 3 && cells[0] == "name" && cells[1] == "val") continue;
        if (cells.size() != 3)
            throw vk::ParseError(path, reader.line_number(), 0, "expected name<TAB>val path<TAB>test path");
        pool.push_back({std::string(cells[0]), resolve(cells[1]), resolve(cells[2])});
    }
    if (pool.empty()) throw vk::ParseError(path, reader.line_number(), 0, "pool manifest lists no runs");
    return pool;
}

// "a+,b+,a-,b-" or "exact".
vk::SkillProfile parse_skill(const std::string& spec, std::size_t k) {
    if (spec == "exact") return vk::SkillProfile::exact(k);
    std::vector<double> xs;
    std::size_t start = 0;
    while (start <= spec.size()) {
        auto pos = spec.find(',', start);
        auto tok = spec.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
        auto x = vk::parse_real(tok);
        if (!x) throw vk::ValidationError("skill must be 'exact' or four numbers a+,b+,a-,b-");
        xs.push_back(*x);
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    if (xs.size() != 4) throw vk::ValidationError("skill must be 'exact' or four numbers a+,b+,a-,b-");
    auto s = vk::SkillProfile::uniform({{xs[0], xs[1]}, {xs[2], xs[3]}}, k);
    s.validate(k);
    return s;
}

std::optional<vk::SplitCounts> reference_counts(const std::string& name) {
    if (name == "train") return vk::kReferenceTrain;
    if (name == "validation") return vk::kReferenceValidation;
    if (name == "test") return vk::kReferenceTest;
    return std::nullopt;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Evaluation pipeline for sentence-level human-value detection", std::string(vk::kToolName)};
    app.set_version_flag("--version", std::string(vk::kVersion));
    app.require_subcommand(1);

    Common common;
    app.add_option("--seed", common.seed, "Master seed")->capture_default_str();
    app.add_flag("--lenient", common.lenient, "Recompute a mismatching presence column with a warning");
    app.add_flag("--one-when-empty", common.one_when_empty, "F1 = 1 for a column with no predicted or gold positives");

    // ---- stats ----------------------------------------------------------
    auto* stats = app.add_subcommand("stats", "Per-value prevalence report");
    std::string stats_gold, stats_out;
    bool stats_table = false;
    stats->add_option("--gold", stats_gold, "Gold TSV")->required();
    stats->add_option("-o,--out", stats_out, "Output TSV (default stdout)");
    stats->add_flag("--table", stats_table, "Also print a human-readable table to stderr");

    // ---- calibrate ------------------------------------------------------
    auto* cal = app.add_subcommand("calibrate", "Tune thresholds on a tuning split");
    std::string cal_probs, cal_gold, cal_out, cal_kind = "tuned-global", cal_split = "validation";
    double cal_step = 0.01, cal_min_prec = vk::kDefaultMinPrecision, cal_fixed = 0.5;
    bool cal_presence = false;
    cal->add_option("--probs", cal_probs, "Probability TSV")->required();
    cal->add_option("--gold", cal_gold, "Gold TSV of the tuning split")->required();
    cal->add_option("--kind", cal_kind, "fixed-global | tuned-global | label-wise")->capture_default_str();
    cal->add_option("--step", cal_step, "Grid step")->capture_default_str();
    cal->add_option("--min-precision", cal_min_prec, "Precision floor for label-wise tuning")->capture_default_str();
    cal->add_option("--fixed", cal_fixed, "Cutoff for fixed-global")->capture_default_str();
    cal->add_option("--split", cal_split, "Split tag of the gold file")->capture_default_str();
    cal->add_flag("--presence", cal_presence, "Single presence column instead of 19 values");
    cal->add_option("-o,--out", cal_out, "Threshold file")->required();

    // ---- score ----------------------------------------------------------
    auto* score = app.add_subcommand("score", "Apply frozen thresholds and report F1");
    std::string sc_probs, sc_gold, sc_thr, sc_gate, sc_out, sc_pred, sc_split = "test";
    bool sc_presence = false, sc_pretty = false;
    score->add_option("--probs", sc_probs, "Probability TSV")->required();
    score->add_option("--gold", sc_gold, "Gold TSV")->required();
    score->add_option("--thresholds", sc_thr, "Threshold file")->required();
    score->add_option("--gate", sc_gate, "Gate probability TSV (uses the file's gate row)");
    score->add_option("--split", sc_split, "Split tag of the gold file")->capture_default_str();
    score->add_flag("--presence", sc_presence, "Single presence column instead of 19 values");
    score->add_flag("--table", sc_pretty, "Also print a human-readable table to stderr");
    score->add_option("-o,--out", sc_out, "Report TSV (default stdout)");
    score->add_option("--predictions", sc_pred, "Write binary predictions TSV");

    // ---- gate -----------------------------------------------------------
    auto* gate = app.add_subcommand("gate", "Tune or apply a presence gate");
    std::string g_gate, g_probs, g_gold, g_thr, g_out, g_pred, g_diag, g_split = "validation";
    std::optional<double> g_tau;
    double g_step = 0.01;
    bool g_joint = false;
    gate->add_option("--gate", g_gate, "Gate probability TSV (one column)")->required();
    gate->add_option("--probs", g_probs, "Value probability TSV")->required();
    gate->add_option("--gold", g_gold, "Gold TSV")->required();
    gate->add_option("--thresholds", g_thr, "Frozen value thresholds")->required();
    gate->add_option("--tau", g_tau, "Apply this gate cutoff instead of tuning one");
    gate->add_option("--step", g_step, "Grid step")->capture_default_str();
    gate->add_flag("--joint", g_joint, "Sweep gate and global value threshold together");
    gate->add_option("--split", g_split, "Split tag of the gold file")->capture_default_str();
    gate->add_option("-o,--out", g_out, "Threshold file including the gate row")->required();
    gate->add_option("--predictions", g_pred, "Write gated binary predictions TSV");
    gate->add_option("--diagnostics", g_diag, "Write per-value gate diagnostics TSV");

    // ---- ensemble -------------------------------------------------------
    auto* ens = app.add_subcommand("ensemble", "Forward selection over a pool of runs");
    std::string e_pool, e_gval, e_gtest, e_mode = "soft", e_tie = "positive", e_manifest, e_report, e_pred;
    vk::SelectionOptions e_opt;
    double e_step = 0.01;
    ens->add_option("--pool", e_pool, "Pool manifest: name<TAB>val path<TAB>test path")->required();
    ens->add_option("--gold-val", e_gval, "Validation gold")->required();
    ens->add_option("--gold-test", e_gtest, "Test gold")->required();
    ens->add_option("--mode", e_mode, "hard | soft | weighted")->capture_default_str();
    ens->add_option("--tie", e_tie, "Hard-vote tie rule: positive | negative")->capture_default_str();
    ens->add_option("--B", e_opt.B, "Bootstrap replicates")->capture_default_str();
    ens->add_option("--min-relative", e_opt.min_relative, "Minimum lower bound relative to current F1")->capture_default_str();
    ens->add_option("--workers", e_opt.workers, "Bootstrap worker threads")->capture_default_str();
    ens->add_option("--step", e_step, "Grid step")->capture_default_str();
    ens->add_option("--manifest", e_manifest, "Run manifest (JSON) with the ensemble spec")->required();
    ens->add_option("--report", e_report, "Test report TSV (default stdout)");
    ens->add_option("--predictions", e_pred, "Write test predictions TSV");

    // ---- compare --------------------------------------------------------
    auto* cmp = app.add_subcommand("compare", "Paired bootstrap, McNemar and BH between two systems");
    std::string c_a, c_b, c_gold, c_out;
    vk::CompareOptions c_opt;
    bool c_presence = false;
    cmp->add_option("--a", c_a, "Binary predictions of system A")->required();
    cmp->add_option("--b", c_b, "Binary predictions of system B")->required();
    cmp->add_option("--gold", c_gold, "Gold TSV")->required();
    cmp->add_option("--B", c_opt.B, "Bootstrap replicates")->capture_default_str();
    cmp->add_option("--alpha", c_opt.alpha, "FDR level")->capture_default_str();
    cmp->add_option("--workers", c_opt.workers, "Bootstrap worker threads")->capture_default_str();
    cmp->add_flag("--positives-only", c_opt.positives_only, "McNemar on gold-positive instances only");
    cmp->add_flag("--presence", c_presence, "Single presence column instead of 19 values");
    cmp->add_option("-o,--out", c_out, "Comparison TSV (default stdout)");

    // ---- synth ----------------------------------------------------------
    auto* syn = app.add_subcommand("synth", "Seeded synthetic gold and model outputs");
    std::size_t s_n = 1000, s_models = 1;
    std::string s_profile = "reference", s_fixture, s_skill = "4,2,2,4", s_gate_skill, s_dir, s_prefix = "s";
    unsigned s_workers = 1;
    syn->add_option("--n", s_n, "Number of sentences")->capture_default_str();
    syn->add_option("--profile", s_profile, "reference | uniform:<p>")->capture_default_str();
    syn->add_option("--fixture", s_fixture, "Exact reference counts instead of sampling: train | validation | test");
    syn->add_option("--skill", s_skill, "exact | a+,b+,a-,b- Beta shapes")->capture_default_str();
    syn->add_option("--models", s_models, "Number of simulated value models")->capture_default_str();
    syn->add_option("--gate-skill", s_gate_skill, "Also simulate a presence gate with this skill");
    syn->add_option("--prefix", s_prefix, "Text-ID prefix")->capture_default_str();
    syn->add_option("--workers", s_workers, "Generation worker threads")->capture_default_str();
    syn->add_option("--out-dir", s_dir, "Output directory")->required();

    // ---- run ------------------------------------------------------------
    auto* run = app.add_subcommand("run", "Tune on validation, evaluate frozen on test, write a manifest");
    std::string r_mode = "direct", r_kind = "tuned-global", r_order = "sequential", r_manifest, r_from, r_report, r_pred;
    vk::RunFiles r_files;
    std::string r_pool;
    double r_step = 0.01, r_min_prec = vk::kDefaultMinPrecision, r_fixed = 0.5;
    std::string r_vote = "soft";
    vk::SelectionOptions r_sel;
    run->add_option("--mode", r_mode, "direct | hierarchical | ensemble")->capture_default_str();
    run->add_option("--gold-val", r_files.gold_val, "Validation gold");
    run->add_option("--gold-test", r_files.gold_test, "Test gold");
    run->add_option("--probs-val", r_files.probs_val, "Validation value probabilities");
    run->add_option("--probs-test", r_files.probs_test, "Test value probabilities");
    run->add_option("--gate-val", r_files.gate_val, "Validation gate probabilities");
    run->add_option("--gate-test", r_files.gate_test, "Test gate probabilities");
    run->add_option("--pool", r_pool, "Pool manifest for ensemble mode");
    run->add_option("--kind", r_kind, "Threshold kind")->capture_default_str();
    run->add_option("--gate-order", r_order, "sequential | joint")->capture_default_str();
    run->add_option("--step", r_step, "Grid step")->capture_default_str();
    run->add_option("--min-precision", r_min_prec, "Label-wise precision floor")->capture_default_str();
    run->add_option("--fixed", r_fixed, "Cutoff for fixed-global")->capture_default_str();
    run->add_option("--vote", r_vote, "Ensemble vote mode")->capture_default_str();
    run->add_option("--B", r_sel.B, "Bootstrap replicates")->capture_default_str();
    run->add_option("--workers", r_sel.workers, "Bootstrap worker threads")->capture_default_str();
    run->add_option("--manifest", r_manifest, "Manifest to write");
    run->add_option("--from-manifest", r_from, "Replay test evaluation from a manifest");
    run->add_option("--report", r_report, "Test report TSV (default stdout)");
    run->add_option("--predictions", r_pred, "Write test predictions TSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        vk::Diagnostics diag;

        if (*stats) {
            vk::GoldMatrix gold;
            {
                // A file with no header at all counts as an empty corpus.
                auto in = vk::detail::open_input(stats_gold);
                vk::TsvLineReader probe(in);
                std::string first;
                if (probe.next(first)) gold = vk::load_gold(stats_gold, common.check(), &diag);
            }
            auto report = vk::prevalence(gold);
            Sink out(stats_out);
            out.get() << vk::provenance_line(common.seed) << '\n';
            vk::write_prevalence_tsv(out.get(), report);
            if (stats_table) {
                for (std::size_t v = 0; v < report.per_value.size(); ++v)
                    std::cerr << vk::kValueNames[v] << ": " << report.per_value[v].count << " ("
                              << vk::format_fixed(report.per_value[v].percent, 2) << "%)\n";
                std::cerr << "presence: " << report.presence.count << " ("
                          << vk::format_fixed(report.presence.percent, 2) << "%)\n";
            }
        } else if (*cal) {
            auto gold = load_gold_tagged(cal_gold, vk::parse_split(cal_split), common, &diag);
            const std::size_t k = cal_presence ? 1 : vk::kNumValues;
            auto probs = load_aligned(cal_probs, k, gold);
            vk::CalibrationOptions opt{vk::Grid::uniform(cal_step), cal_min_prec, cal_fixed, common.zd()};
            auto t = vk::calibrate(probs, gold, vk::parse_threshold_kind(cal_kind), opt, &diag);
            auto out = vk::detail::open_output(cal_out);
            vk::write_thresholds(out, t, common.seed);
        } else if (*score) {
            auto gold = load_gold_tagged(sc_gold, vk::parse_split(sc_split), common, &diag);
            const std::size_t k = sc_presence ? 1 : vk::kNumValues;
            auto probs = load_aligned(sc_probs, k, gold);
            auto thr_in = vk::detail::open_input(sc_thr);
            auto t = vk::read_thresholds(thr_in, sc_thr);
            std::optional<vk::ProbMatrix> g;
            if (!sc_gate.empty()) g = load_aligned(sc_gate, 1, gold);
            vk::BinaryMatrix pred;
            auto report = vk::evaluate_frozen(t, probs, gold, &pred, g ? &*g : nullptr, common.zd());
            write_report(sc_out, report, common.seed);
            if (sc_pretty) vk::print_macro_table(std::cerr, report);
            write_predictions(sc_pred, gold.keys(), pred, fs::path(sc_probs).stem().string(), common.seed);
        } else if (*gate) {
            auto gold = load_gold_tagged(g_gold, vk::parse_split(g_split), common, &diag);
            auto gp = load_aligned(g_gate, 1, gold);
            auto vp = load_aligned(g_probs, vk::kNumValues, gold);
            auto thr_in = vk::detail::open_input(g_thr);
            auto t = vk::read_thresholds(thr_in, g_thr);
            const auto grid = vk::Grid::uniform(g_step);
            if (g_tau) {
                vk::check_gate_threshold(*g_tau);
                t.gate = *g_tau;
            } else if (g_joint) {
                auto j = vk::tune_gate_joint(gp, vp, gold, grid, common.zd());
                t = vk::ThresholdSet::tuned(j.value_threshold, gold.split());
                t.gate = j.tau_gate;
            } else {
                t.gate = vk::tune_gate(gp, vp, gold, t, grid, common.zd()).tau_gate;
            }
            {
                auto out = vk::detail::open_output(g_out);
                vk::write_thresholds(out, t, common.seed);
            }
            vk::BinaryMatrix pred;
            auto report = vk::evaluate_frozen(t, vp, gold, &pred, &gp, common.zd());
            std::cerr << "tau_gate=" << vk::format_real(*t.gate) << " macro_f1=" << vk::format_fixed(report.macro_f1, 3)
                      << '\n';
            write_predictions(g_pred, gold.keys(), pred, "gated", common.seed);
            if (!g_diag.empty()) {
                Sink out(g_diag);
                out.get() << vk::provenance_line(common.seed) << '\n';
                vk::write_gate_diagnostics_tsv(out.get(), vk::gate_diagnostics(gp, vp, gold, t, *t.gate, common.zd()));
            }
        } else if (*ens) {
            vk::RunFiles files;
            files.gold_val = e_gval;
            files.gold_test = e_gtest;
            files.pool = read_pool(e_pool);
            vk::RunOptions ropt;
            ropt.seed = common.seed;
            ropt.grid_step = e_step;
            ropt.zero_division = common.zd();
            e_opt.mode = vk::parse_vote_mode(e_mode);
            e_opt.tie = vk::parse_tie_rule(e_tie);
            auto outcome = vk::run_files(vk::RunMode::ensemble, files, ropt, e_opt, common.check());
            if (!e_report.empty()) outcome.manifest.reports.push_back({"test", e_report});
            if (!e_pred.empty()) outcome.manifest.reports.push_back({"test_predictions", e_pred});
            vk::write_manifest(e_manifest, outcome.manifest);
            write_report(e_report, outcome.test, common.seed);
            write_predictions(e_pred, outcome.test_keys, outcome.test_predictions, "ensemble", common.seed);
            for (const auto& s : outcome.manifest.ensemble->trace)
                std::cerr << (s.accepted ? "accept " : "reject ") << s.candidate << " lower95=" << vk::format_real(s.lower_95)
                          << " relative=" << vk::format_real(s.relative_lower) << '\n';
            print_warnings(outcome.diagnostics);
        } else if (*cmp) {
            auto gold = vk::load_gold(c_gold, common.check(), &diag);
            const std::size_t k = c_presence ? 1 : vk::kNumValues;
            c_opt.seed = common.seed;
            c_opt.zero_division = common.zd();
            auto report = vk::compare(vk::load_probs(c_a, k), vk::load_probs(c_b, k), gold, c_opt);
            Sink out(c_out);
            out.get() << vk::provenance_line(common.seed) << '\n';
            vk::write_comparison_tsv(out.get(), report);
        } else if (*syn) {
            fs::create_directories(s_dir);
            vk::GoldOptions gopt;
            gopt.key_prefix = s_prefix;
            gopt.workers = s_workers;
            vk::GoldMatrix gold;
            if (!s_fixture.empty()) {
                auto counts = reference_counts(s_fixture);
                if (!counts) throw vk::ValidationError("unknown fixture '" + s_fixture + "'");
                gold = vk::gold_with_counts(*counts, gopt);
            } else {
                vk::PrevalenceProfile profile = vk::PrevalenceProfile::reference();
                if (s_profile.rfind("uniform:", 0) == 0) {
                    auto p = vk::parse_real(std::string_view(s_profile).substr(8));
                    if (!p) throw vk::ValidationError("bad uniform profile '" + s_profile + "'");
                    profile = vk::PrevalenceProfile::uniform(*p);
                } else if (s_profile != "reference") {
                    throw vk::ValidationError("unknown profile '" + s_profile + "'");
                }
                gold = vk::generate_gold(s_n, profile, common.seed, gopt);
            }
            vk::write_gold(fs::path(s_dir) / "gold.tsv", gold, common.seed);
            auto skill = parse_skill(s_skill, vk::kNumValues);
            for (std::size_t i = 0; i < s_models; ++i) {
                const std::string name = "model" + std::to_string(i + 1);
                const auto model_seed = vk::seeded_engine({common.seed, 0x3D31ULL, i})();
                vk::write_probs(fs::path(s_dir) / (name + ".tsv"),
                                vk::simulate_model(gold, skill, model_seed, name, s_workers), common.seed);
            }
            if (!s_gate_skill.empty()) {
                const auto gate_seed = vk::seeded_engine({common.seed, 0x6A7EULL})();
                vk::write_probs(fs::path(s_dir) / "gate.tsv",
                                vk::simulate_gate(gold, parse_skill(s_gate_skill, 1), gate_seed, "gate", s_workers),
                                common.seed);
            }
        } else if (*run) {
            vk::FileRunOutcome outcome;
            if (!r_from.empty()) {
                outcome = vk::replay_manifest(vk::load_manifest(r_from));
            } else {
                vk::RunOptions ropt;
                ropt.seed = common.seed;
                ropt.kind = vk::parse_threshold_kind(r_kind);
                ropt.gate_order = vk::parse_gate_order(r_order);
                ropt.grid_step = r_step;
                ropt.min_precision = r_min_prec;
                ropt.fixed_threshold = r_fixed;
                ropt.zero_division = common.zd();
                const auto mode = vk::parse_run_mode(r_mode);
                if (mode == vk::RunMode::ensemble) {
                    if (r_pool.empty()) throw vk::ValidationError("ensemble mode needs --pool");
                    r_files.pool = read_pool(r_pool);
                }
                r_sel.mode = vk::parse_vote_mode(r_vote);
                outcome = vk::run_files(mode, r_files, ropt, r_sel, common.check());
                if (!r_report.empty()) outcome.manifest.reports.push_back({"test", r_report});
                if (!r_pred.empty()) outcome.manifest.reports.push_back({"test_predictions", r_pred});
                if (!r_manifest.empty()) vk::write_manifest(r_manifest, outcome.manifest);
            }
            write_report(r_report, outcome.test, outcome.manifest.master_seed);
            write_predictions(r_pred, outcome.test_keys, outcome.test_predictions, std::string(vk::to_string(outcome.manifest.mode)),
                              outcome.manifest.master_seed);
            print_warnings(outcome.diagnostics);
        }
        print_warnings(diag);
    } catch (const std::exception& e) {
        std::cerr << vk::kToolName << ": error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
