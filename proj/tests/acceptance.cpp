// Acceptance suite. One PASS/FAIL line per criterion; nonzero exit if any fail.

#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

using namespace valuekit;
namespace oracle = vkt::oracle;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failed checks for one criterion.
struct Check {
    std::vector<std::string> failures;
    void require(bool ok, const std::string& what) {
        if (!ok && failures.size() < 5) failures.push_back(what);
    }
};

std::string tsv(const MacroReport& r) {
    std::ostringstream out;
    write_macro_tsv(out, r);
    return out.str();
}

// Round-half-up of 100 * count / n at two decimals, in integer arithmetic.
std::string percent_oracle(std::size_t count, std::size_t n) {
    const std::size_t scaled = (count * 20000 + n) / (2 * n);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%zu.%02zu", scaled / 100, scaled % 100);
    return buf;
}

void prevalence_fixture(Check& c) {
    auto dir = vkt::temp_dir("acc_prevalence");
    write_gold(dir / "train.tsv", gold_with_counts(kReferenceTrain), 42);
    const auto g = load_gold(dir / "train.tsv");
    std::ostringstream out;
    write_prevalence_tsv(out, prevalence(g));
    const std::string text = out.str();
    c.require(g.size() == 44758, "row count");
    for (std::string line : {"Humility\t107\t0.24\n", "Security: societal\t4006\t8.95\n", "presence\t23064\t51.53\n"})
        c.require(text.find(line) != std::string::npos, "missing line " + line.substr(0, line.size() - 1));
    for (std::size_t v = 0; v < kNumValues; ++v) {
        const std::string line = std::string(kValueNames[v]) + '\t' + std::to_string(kReferenceTrain.values[v]) + '\t' +
                                 percent_oracle(kReferenceTrain.values[v], kReferenceTrain.n) + '\n';
        c.require(text.find(line) != std::string::npos, "value line " + std::string(kValueNames[v]));
    }
}

void threshold_oracle(Check& c) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto rc = vkt::random_case(10'000 + seed, 500, 0.03 + 0.005 * double(seed % 20));
        auto g = tune_global(rc.probs, rc.gold, Objective::macro_f1);
        auto gw = oracle::tune_global(rc.probs.probs(), rc.gold.labels());
        c.require(g.threshold == gw.t, "global tau, seed " + std::to_string(seed));
        c.require(g.score == gw.score, "global score, seed " + std::to_string(seed));

        auto lw = tune_labelwise_matrix(rc.probs.probs(), rc.gold.labels(), kDefaultMinPrecision, Grid::uniform());
        auto lo = oracle::tune_labelwise(rc.probs.probs(), rc.gold.labels());
        for (std::size_t v = 0; v < kNumValues; ++v) {
            c.require(lw.thresholds[v] == lo.t[v], "label-wise tau, seed " + std::to_string(seed));
            c.require((lw.fallback[v] != 0) == lo.fallback[v], "label-wise fallback, seed " + std::to_string(seed));
            const auto k = oracle::count(rc.probs.probs(), rc.gold.labels(), v, lo.t[v]);
            c.require(lw.scores[v].recall == oracle::recall(k) && lw.scores[v].precision == oracle::precision(k),
                      "label-wise score, seed " + std::to_string(seed));
        }
    }
}

void labelwise_constraint(Check& c) {
    std::size_t fallbacks = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto rc = vkt::random_case(20'000 + seed, 600, 0.02 + 0.01 * double(seed % 5));
        // One anti-correlated column per fixture so the floor is infeasible somewhere.
        RealMatrix m = rc.probs.probs();
        const std::size_t bad = seed % kNumValues;
        for (std::size_t r = 0; r < m.rows(); ++r) m(r, bad) = rc.gold.labels()(r, bad) ? 0.05 : 0.95;
        ProbMatrix p(rc.probs.keys(), m);
        Diagnostics d;
        auto t = tune_labelwise(p, rc.gold, kDefaultMinPrecision, Grid::uniform(), &d);
        auto rep = macro_f1(binarize(p, t), rc.gold);
        std::size_t flagged = 0;
        for (std::size_t v = 0; v < kNumValues; ++v) {
            if (!t.fallback[v]) {
                c.require(rep.per_value[v].precision >= 0.40, "precision floor, seed " + std::to_string(seed));
                continue;
            }
            ++flagged;
            c.require(t.per_value[v] == kFallbackThreshold, "fallback threshold");
            for (double tau : oracle::grid())
                c.require(oracle::precision(oracle::count(p.probs(), rc.gold.labels(), v, tau)) < 0.40,
                          "flagged column had a feasible point");
        }
        c.require(flagged >= 1 && t.fallback[bad], "anti-correlated column not flagged, seed " + std::to_string(seed));
        c.require(d.warnings.size() == flagged, "one warning per fallback");
        fallbacks += flagged;
    }
    c.require(fallbacks >= 20, "fallback count");
}

void gating_identities(Check& c) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto gv = generate_gold(1500, PrevalenceProfile::reference(), 30'000 + seed, {.key_prefix = "v", .split = Split::validation});
        auto gt = generate_gold(1500, PrevalenceProfile::reference(), 31'000 + seed, {.key_prefix = "t"});
        auto skill = SkillProfile::uniform({{3, 2}, {2, 4}});
        auto pv = simulate_model(gv, skill, 1 + seed), pt = simulate_model(gt, skill, 2 + seed);
        auto gatev = simulate_gate(gv, SkillProfile::uniform({{4, 2}, {2, 4}}, 1), 3 + seed);

        auto th = calibrate(pv, gv, ThresholdKind::tuned_global);
        c.require(binarize(apply_gate(gatev, pv, 0.0), th) == binarize(pv, th), "tau_gate = 0 changed predictions");

        RealMatrix ones_v(gv.size(), 1, 1.0), ones_t(gt.size(), 1, 1.0);
        for (auto kind : {ThresholdKind::tuned_global, ThresholdKind::label_wise}) {
            auto d = run_direct(pv, pt, gv, gt, {.kind = kind});
            auto h = run_hierarchical(ProbMatrix(gv.keys(), ones_v), ProbMatrix(gt.keys(), ones_t), pv, pt, gv, gt, {.kind = kind});
            c.require(tsv(d.test) == tsv(h.test) && tsv(d.validation) == tsv(h.validation), "constant-1 gate report differs");
        }

        auto tg = tune_gate(gatev, pv, gv, th);
        const double ungated = macro_f1(binarize(pv, th), gv).macro_f1;
        c.require(tg.macro_f1 >= ungated, "tuned gate below ungated, seed " + std::to_string(seed));
    }
}

void mcnemar_exactness(Check& c) {
    c.require(std::abs(mcnemar_p(3, 9) - 598.0 / 4096.0) <= 1e-12, "b=3, c=9");
    for (std::size_t n = 0; n <= 30; ++n)
        for (std::size_t b = 0; b <= n; ++b)
            c.require(std::abs(mcnemar_p(b, n - b) - oracle::mcnemar(b, n - b)) <= 1e-12,
                      "b=" + std::to_string(b) + " c=" + std::to_string(n - b));
}

void bh_correctness(Check& c) {
    std::mt19937_64 eng(7);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> p(kNumValues);
        for (auto& x : p) {
            const double a = u(eng);
            x = a < 0.3 ? a * 0.01 : (a < 0.35 ? 0.05 : u(eng));
        }
        auto got = benjamini_hochberg(p, 0.05);
        auto want = oracle::bh(p, 0.05);
        for (std::size_t i = 0; i < p.size(); ++i)
            c.require(got.entries[i].rejected == want.reject[i], "decision, trial " + std::to_string(trial));
    }
}

void bootstrap_determinism(Check& c) {
    const std::size_t n = kReferenceTest.n;
    auto g = generate_gold(n, PrevalenceProfile::reference(), 40'000, {.split = Split::test});
    auto skill = SkillProfile::uniform({{3, 2}, {2, 3}});
    auto a = binarize(simulate_model(g, skill, 1), ThresholdSet::fixed());
    auto b = binarize(simulate_model(g, skill, 2), ThresholdSet::fixed());

    auto same = paired_bootstrap(a, a, g.labels(), {.B = 2000});
    c.require(same.mean_delta == 0.0 && same.lower_95_one_sided == 0.0 && same.p_one_sided == 1.0, "identical systems");

    const auto t0 = Clock::now();
    auto r1 = paired_bootstrap(a, b, g.labels(), {.B = 2000, .seed = 42, .workers = 1});
    const double single = seconds_since(t0);
    auto r4 = paired_bootstrap(a, b, g.labels(), {.B = 2000, .seed = 42, .workers = 4});
    auto r8 = paired_bootstrap(a, b, g.labels(), {.B = 2000, .seed = 42, .workers = 8});
    c.require(r1 == r4 && r1 == r8, "results differ across worker counts");
    c.require(single < 30.0, "B=2000 single-worker run took " + std::to_string(single) + " s");
}

std::vector<CandidateRun> complementary_pool(const GoldMatrix& gold, std::uint64_t seed) {
    std::vector<CandidateRun> pool;
    for (std::size_t m = 0; m < 3; ++m) {
        SkillProfile s;
        for (std::size_t v = 0; v < kNumValues; ++v)
            s.per_column.push_back(v % 3 == m ? ConditionalShapes{{12, 2}, {2, 12}} : ConditionalShapes{{2, 2}, {2, 2}});
        const std::string name = "m" + std::to_string(m);
        pool.push_back({name, simulate_model(gold, s, seed + m, name), std::nullopt, std::nullopt, 0.0});
    }
    return pool;
}

void forward_selection(Check& c) {
    auto check_trace = [&](const EnsembleSpec& spec) {
        double prev = -1.0;
        for (const auto& st : spec.trace) {
            c.require(st.current_f1 >= prev, "validation F1 decreased");
            prev = st.current_f1;
            if (st.accepted) {
                c.require(st.trial_f1 >= st.current_f1, "accepted step lowered F1");
                c.require(st.lower_95 > 0.0 && st.relative_lower >= 0.01, "accepted step without gate evidence");
            }
        }
        c.require(spec.val_macro_f1 >= prev, "final F1 below last step");
    };
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto g = generate_gold(1500, PrevalenceProfile::uniform(0.1), 50'000 + seed, {.split = Split::validation});
        auto pool = complementary_pool(g, 51'000 + 10 * seed);
        pool.push_back({"noise", simulate_model(g, SkillProfile::uniform({{2, 2}, {2, 2}}), 52'000 + seed), {}, {}, 0.0});
        pool.push_back({"decent", simulate_model(g, SkillProfile::uniform({{4, 2}, {2, 4}}), 53'000 + seed), {}, {}, 0.0});
        for (auto mode : {VoteMode::soft, VoteMode::weighted, VoteMode::hard})
            check_trace(forward_select(pool, g, {.mode = mode, .B = 300}));
    }
    auto g = generate_gold(2000, PrevalenceProfile::uniform(0.1), 54'000, {.split = Split::validation});
    auto pool = complementary_pool(g, 55'000);
    auto spec = forward_select(pool, g, {.B = 2000});
    prepare_candidates(pool, g);
    double best = 0.0;
    for (const auto& m : pool) best = std::max(best, m.val_macro_f1);
    c.require(spec.val_macro_f1 > best, "ensemble does not beat best single member");
    c.require(spec.members.size() >= 2, "complementary members not accepted");
    check_trace(spec);
}

struct FixtureFiles {
    RunFiles files;
    fs::path dir;
};

FixtureFiles write_fixture(const std::string& name, std::size_t n_val, std::size_t n_test, std::size_t models,
                           std::uint64_t seed, const GoldOptions& base = {}) {
    FixtureFiles f{{}, vkt::temp_dir(name)};
    GoldOptions ov = base, ot = base;
    ov.key_prefix = "v";
    ot.key_prefix = "t";
    auto gv = generate_gold(n_val, PrevalenceProfile::reference(), seed, ov);
    auto gt = generate_gold(n_test, PrevalenceProfile::reference(), seed + 1, ot);
    write_gold(f.dir / "gold_val.tsv", gv, seed);
    write_gold(f.dir / "gold_test.tsv", gt, seed);
    auto skill = SkillProfile::uniform({{4, 2}, {2, 5}});
    auto gate_skill = SkillProfile::uniform({{5, 2}, {2, 5}}, 1);
    write_probs(f.dir / "gate_val.tsv", simulate_gate(gv, gate_skill, seed + 2, "gate", base.workers), seed);
    write_probs(f.dir / "gate_test.tsv", simulate_gate(gt, gate_skill, seed + 3, "gate", base.workers), seed);
    for (std::size_t m = 0; m < models; ++m) {
        const std::string id = "model" + std::to_string(m + 1);
        write_probs(f.dir / (id + "_val.tsv"), simulate_model(gv, skill, seed + 10 + 2 * m, id, base.workers), seed);
        write_probs(f.dir / (id + "_test.tsv"), simulate_model(gt, skill, seed + 11 + 2 * m, id, base.workers), seed);
        f.files.pool.push_back({id, f.dir / (id + "_val.tsv"), f.dir / (id + "_test.tsv")});
    }
    f.files.gold_val = f.dir / "gold_val.tsv";
    f.files.gold_test = f.dir / "gold_test.tsv";
    f.files.probs_val = f.dir / "model1_val.tsv";
    f.files.probs_test = f.dir / "model1_test.tsv";
    f.files.gate_val = f.dir / "gate_val.tsv";
    f.files.gate_test = f.dir / "gate_test.tsv";
    return f;
}

void freeze_discipline(Check& c) {
    auto f = write_fixture("acc_freeze", 1200, 1200, 3, 60'000);
    TuningAudit::instance().clear();
    for (auto mode : {RunMode::direct, RunMode::hierarchical, RunMode::ensemble})
        for (auto kind : {ThresholdKind::fixed_global, ThresholdKind::tuned_global, ThresholdKind::label_wise}) {
            auto out = run_files(mode, f.files, {.kind = kind}, {.B = 200});
            write_manifest(f.dir / "run.json", out.manifest);
            auto replay = replay_manifest(load_manifest(f.dir / "run.json"));
            c.require(tsv(replay.test) == tsv(out.test) && replay.test_predictions == out.test_predictions,
                      "replay differs for " + std::string(to_string(mode)));
        }
    auto joint = run_files(RunMode::hierarchical, f.files, {.gate_order = GateOrder::joint});
    auto replay = replay_manifest(joint.manifest);
    c.require(tsv(replay.test) == tsv(joint.test), "joint replay differs");

    const auto recs = TuningAudit::instance().records();
    c.require(!recs.empty(), "no tuning calls audited");
    for (const auto& r : recs) c.require(r.split == Split::validation, "tuning call '" + r.operation + "' saw non-validation gold");
}

void scale_check(Check& c) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t n_train = kReferenceTrain.n, n_val = kReferenceValidation.n, n_test = kReferenceTest.n;
    c.require(n_train + n_val + n_test == 74231, "corpus size");

    // Training rows are synthesized to match the corpus size; tuning never reads them.
    auto train = generate_gold(n_train, PrevalenceProfile::reference(), 70'000, {.key_prefix = "r", .workers = hw});
    c.require(train.size() == n_train, "train rows");
    auto f = write_fixture("acc_scale", n_val, n_test, 3, 71'000, {.workers = hw});

    auto hier = run_files(RunMode::hierarchical, f.files, {.kind = ThresholdKind::label_wise});
    auto ens = run_files(RunMode::ensemble, f.files, {}, {.B = 2000, .workers = hw});
    const auto gold_test = load_gold(f.files.gold_test).with_split(Split::test);
    auto cmp = compare("ensemble", ens.test_predictions, "hierarchical", hier.test_predictions, gold_test,
                       {.B = 2000, .workers = hw});
    c.require(cmp.mcnemar.size() == kNumValues, "comparison output");
    c.require(std::isfinite(cmp.bootstrap.p_one_sided), "bootstrap p");
}

struct Criterion {
    int id;
    std::string name;
    double budget_s;  // 0 = no runtime bound
    std::function<void(Check&)> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria{
        {1, "prevalence fixture exactness", 5.0, prevalence_fixture},
        {2, "threshold oracle equivalence", 10.0, threshold_oracle},
        {3, "label-wise constraint satisfaction", 0.0, labelwise_constraint},
        {4, "gating identities", 0.0, gating_identities},
        {5, "McNemar exactness", 0.0, mcnemar_exactness},
        {6, "BH correctness", 0.0, bh_correctness},
        {7, "bootstrap determinism and degenerate cases", 0.0, bootstrap_determinism},
        {8, "forward-selection soundness", 0.0, forward_selection},
        {9, "end-to-end freeze discipline", 0.0, freeze_discipline},
        {10, "scale check", 60.0, scale_check},
    };
    int failed = 0;
    for (const auto& cr : criteria) {
        Check check;
        const auto t0 = Clock::now();
        try {
            cr.run(check);
        } catch (const std::exception& e) {
            check.failures.push_back(std::string("exception: ") + e.what());
        }
        const double elapsed = seconds_since(t0);
        if (cr.budget_s > 0 && elapsed >= cr.budget_s)
            check.failures.push_back("runtime " + std::to_string(elapsed) + " s over budget");
        const bool ok = check.failures.empty();
        failed += !ok;
        std::printf("%s criterion %d: %s (%.2f s%s)\n", ok ? "PASS" : "FAIL", cr.id, cr.name.c_str(), elapsed,
                    cr.budget_s > 0 ? (" of " + format_fixed(cr.budget_s, 0) + " s").c_str() : "");
        for (const auto& f : check.failures) std::printf("    %s\n", f.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
