#include "support.hpp"

#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

using namespace valuekit;
namespace fs = std::filesystem;

namespace {

struct Result {
    int status = 0;
    std::string out;
};

// Runs the CLI with stderr folded into the captured output.
Result cli(const std::string& args) {
    const std::string cmd = std::string(VALUEKIT_CLI) + " " + args + " 2>&1";
    Result r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return {-1, ""};
    std::array<char, 4096> buf{};
    while (fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
    const int raw = pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST(Cli, StatsOnReferenceFixture) {
    auto dir = vkt::temp_dir("cli_stats");
    ASSERT_EQ(cli("synth --fixture train --out-dir " + q(dir)).status, 0);
    auto r = cli("stats --gold " + q(dir / "gold.tsv"));
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("Humility\t107\t0.24\n"), std::string::npos);
    EXPECT_NE(r.out.find("Security: societal\t4006\t8.95\n"), std::string::npos);
    EXPECT_NE(r.out.find("presence\t23064\t51.53\n"), std::string::npos);
    EXPECT_EQ(r.out.rfind("# valuekit 0.1.0 seed=42\n", 0), 0u);
}

TEST(Cli, StatsEmptyAndMalformed) {
    auto dir = vkt::temp_dir("cli_stats_bad");
    { std::ofstream(dir / "empty.tsv"); }
    auto e = cli("stats --gold " + q(dir / "empty.tsv"));
    EXPECT_EQ(e.status, 0) << e.out;
    EXPECT_NE(e.out.find("presence\t0\t0.00"), std::string::npos);

    ASSERT_EQ(cli("synth --n 20 --out-dir " + q(dir)).status, 0);
    std::string text = slurp(dir / "gold.tsv");
    text.replace(text.find("Humility"), 8, "Humble");
    { std::ofstream(dir / "bad.tsv") << text; }
    auto b = cli("stats --gold " + q(dir / "bad.tsv"));
    EXPECT_NE(b.status, 0);
    EXPECT_NE(b.out.find("unknown value column 'Humble'"), std::string::npos);
    EXPECT_NE(cli("stats --gold " + q(dir / "missing.tsv")).status, 0);
    EXPECT_NE(cli("stats").status, 0);
}

TEST(Cli, CalibrateDeterministicModel) {
    auto dir = vkt::temp_dir("cli_cal");
    ASSERT_EQ(cli("synth --n 2000 --profile uniform:0.1 --skill exact --out-dir " + q(dir)).status, 0);
    auto r = cli("calibrate --kind label-wise --probs " + q(dir / "model1.tsv") + " --gold " + q(dir / "gold.tsv") +
                 " -o " + q(dir / "thr.tsv"));
    ASSERT_EQ(r.status, 0) << r.out;
    auto in = detail::open_input(dir / "thr.tsv");
    auto t = read_thresholds(in, "thr.tsv");
    ASSERT_EQ(t.per_value.size(), kNumValues);
    for (double x : t.per_value) EXPECT_EQ(x, 0.01);

    // Reloaded file equals the set computed in memory.
    auto gold = load_gold(dir / "gold.tsv").with_split(Split::validation);
    auto mem = calibrate(load_probs(dir / "model1.tsv", kNumValues), gold, ThresholdKind::label_wise);
    EXPECT_EQ(t, mem);
}

TEST(Cli, CalibrateFallbackWarnsAndTestSplitIsRefused) {
    auto dir = vkt::temp_dir("cli_fallback");
    ASSERT_EQ(cli("synth --n 600 --profile uniform:0.05 --skill 1,1,1,1 --out-dir " + q(dir)).status, 0);
    auto r = cli("calibrate --kind label-wise --min-precision 0.99 --probs " + q(dir / "model1.tsv") + " --gold " +
                 q(dir / "gold.tsv") + " -o " + q(dir / "thr.tsv"));
    EXPECT_EQ(r.status, 0);
    EXPECT_NE(r.out.find("warning: no threshold reaches precision"), std::string::npos);
    auto f = cli("calibrate --split test --probs " + q(dir / "model1.tsv") + " --gold " + q(dir / "gold.tsv") + " -o " +
                 q(dir / "thr2.tsv"));
    EXPECT_NE(f.status, 0);
    EXPECT_NE(f.out.find("test-split gold"), std::string::npos);
}

TEST(Cli, FullWorkflowIsIdempotent) {
    auto dir = vkt::temp_dir("cli_flow");
    const std::string val = q(dir / "val"), test = q(dir / "test");
    ASSERT_EQ(cli("--seed 1 synth --n 1500 --models 3 --gate-skill 6,2,2,6 --prefix v --out-dir " + val).status, 0);
    ASSERT_EQ(cli("--seed 2 synth --n 1500 --models 3 --gate-skill 6,2,2,6 --prefix t --out-dir " + test).status, 0);
    auto v = [&](const std::string& f) { return q(dir / "val" / f); };
    auto t = [&](const std::string& f) { return q(dir / "test" / f); };
    auto o = [&](const std::string& f) { return q(dir / f); };

    ASSERT_EQ(cli("calibrate --probs " + v("model1.tsv") + " --gold " + v("gold.tsv") + " -o " + o("t1.tsv")).status, 0);
    ASSERT_EQ(cli("calibrate --probs " + v("model2.tsv") + " --gold " + v("gold.tsv") + " -o " + o("t2.tsv")).status, 0);
    ASSERT_EQ(cli("score --probs " + t("model1.tsv") + " --gold " + t("gold.tsv") + " --thresholds " + o("t1.tsv") +
                  " --predictions " + o("p1.tsv") + " -o " + o("r1.tsv"))
                  .status,
              0);
    ASSERT_EQ(cli("score --probs " + t("model2.tsv") + " --gold " + t("gold.tsv") + " --thresholds " + o("t2.tsv") +
                  " --predictions " + o("p2.tsv") + " -o " + o("r2.tsv"))
                  .status,
              0);
    auto g = cli("gate --gate " + v("gate.tsv") + " --probs " + v("model1.tsv") + " --gold " + v("gold.tsv") +
                 " --thresholds " + o("t1.tsv") + " -o " + o("tg.tsv") + " --diagnostics " + o("diag.tsv"));
    ASSERT_EQ(g.status, 0) << g.out;
    EXPECT_NE(slurp(dir / "tg.tsv").find("\ngate\t"), std::string::npos);

    const std::string cmp = "compare --B 200 --a " + o("p1.tsv") + " --b " + o("p2.tsv") + " --gold " + t("gold.tsv");
    auto c1 = cli(cmp), c2 = cli(cmp + " --workers 4");
    ASSERT_EQ(c1.status, 0) << c1.out;
    EXPECT_EQ(c1.out, c2.out);

    { std::ofstream(dir / "pool.tsv") << "name\tval\ttest\nm1\tval/model1.tsv\ttest/model1.tsv\nm2\tval/model2.tsv\ttest/model2.tsv\n"
                                      << "m3\tval/model3.tsv\ttest/model3.tsv\n"; }
    const std::string ens = "ensemble --B 200 --pool " + o("pool.tsv") + " --gold-val " + v("gold.tsv") + " --gold-test " +
                            t("gold.tsv") + " --manifest " + o("ens.json") + " --report " + o("ens.tsv");
    ASSERT_EQ(cli(ens).status, 0);
    const std::string first = slurp(dir / "ens.tsv"), first_manifest = slurp(dir / "ens.json");
    ASSERT_EQ(cli(ens).status, 0);
    EXPECT_EQ(slurp(dir / "ens.tsv"), first);
    EXPECT_EQ(slurp(dir / "ens.json"), first_manifest);

    auto h = cli("run --mode hierarchical --gold-val " + v("gold.tsv") + " --gold-test " + t("gold.tsv") + " --probs-val " +
                 v("model1.tsv") + " --probs-test " + t("model1.tsv") + " --gate-val " + v("gate.tsv") + " --gate-test " +
                 t("gate.tsv") + " --manifest " + o("h.json") + " --report " + o("h.tsv"));
    ASSERT_EQ(h.status, 0) << h.out;
    ASSERT_EQ(cli("run --from-manifest " + o("h.json") + " --report " + o("h2.tsv")).status, 0);
    EXPECT_EQ(slurp(dir / "h.tsv"), slurp(dir / "h2.tsv"));
    ASSERT_EQ(cli("run --from-manifest " + o("ens.json") + " --report " + o("e2.tsv")).status, 0);
    EXPECT_EQ(slurp(dir / "e2.tsv"), first);

    { std::ofstream(dir / "test" / "model1.tsv", std::ios::app) << "# edited\n"; }
    auto drift = cli("run --from-manifest " + o("h.json"));
    EXPECT_NE(drift.status, 0);
    EXPECT_NE(drift.out.find("drift"), std::string::npos);
}

TEST(Cli, OutputsCarryProvenance) {
    auto dir = vkt::temp_dir("cli_prov");
    ASSERT_EQ(cli("--seed 9 synth --n 50 --gate-skill exact --out-dir " + q(dir)).status, 0);
    for (auto f : {"gold.tsv", "model1.tsv", "gate.tsv"}) EXPECT_EQ(slurp(dir / f).rfind("# valuekit 0.1.0 seed=9\n", 0), 0u) << f;
    ASSERT_EQ(cli("--seed 9 calibrate --probs " + q(dir / "model1.tsv") + " --gold " + q(dir / "gold.tsv") + " -o " +
                  q(dir / "t.tsv"))
                  .status,
              0);
    EXPECT_EQ(slurp(dir / "t.tsv").rfind("# valuekit 0.1.0 seed=9\n", 0), 0u);
}

TEST(Cli, BadArgumentsFail) {
    EXPECT_NE(cli("").status, 0);
    EXPECT_NE(cli("nonsense").status, 0);
    EXPECT_NE(cli("synth --out-dir /tmp/x --skill 1,2").status, 0);
    EXPECT_NE(cli("synth --out-dir /tmp/x --profile uniform:2").status, 0);
    EXPECT_EQ(cli("--version").status, 0);
}
