// End-to-end smoke tests that drive the installed command-line binary as a
// subprocess. Library-level behavior is covered elsewhere; these check wiring:
// flags, file layout, exit codes, and cross-command data flow.

#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "portopt/instance.hpp"
#include "portopt/io.hpp"
#include "support/test_oracles.hpp"

using namespace portopt;
using Catch::Matchers::ContainsSubstring;

#define PORTOPT_STR_(x) #x
#define PORTOPT_STR(x) PORTOPT_STR_(x)

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

CliResult cli(const std::string& args) {
    static int counter = 0;
    const auto dir = testsup::temp_dir("cli-capture");
    const auto out_path = dir / ("out" + std::to_string(counter) + ".txt");
    const auto err_path = dir / ("err" + std::to_string(counter) + ".txt");
    ++counter;
    const std::string cmd = std::string(PORTOPT_STR(PORTOPT_CLI)) + " " + args + " >" +
                            out_path.string() + " 2>" + err_path.string();
    const int status = std::system(cmd.c_str());
    CliResult r;
    if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
    r.out = testsup::read_file(out_path);
    r.err = testsup::read_file(err_path);
    return r;
}

const std::string kWorkflowConfig =
    "N = 6\n"
    "T = 3\n"
    "eval_cap = 40\n"
    "seed = 5\n"
    "K = 2\n"
    "floor = 0.1\n"
    "ceiling = 0.9\n"
    "tau = 0\n";

}  // namespace

TEST_CASE("cli reports a version and rejects unknown subcommands") {
    CHECK(cli("--version").exit_code == 0);
    CHECK(cli("frobnicate").exit_code != 0);
    CHECK(cli("").exit_code != 0);
}

TEST_CASE("cli workflow: make-instance, reference, run, re-run, table, plotdata") {
    const auto dir = testsup::temp_dir("cli-flow");
    const auto inst_path = (dir / "inst.orlib").string();
    const auto cfg_path = (dir / "run.cfg").string();
    testsup::write_file(cfg_path, kWorkflowConfig);

    // Synthesize the instance and confirm it matches the in-process generator.
    auto r = cli("make-instance --kind random --n 6 --seed 3 --out " + inst_path);
    REQUIRE(r.exit_code == 0);
    const Instance direct = random_instance(6, 3);
    const Instance loaded = load_orlibrary(inst_path);
    CHECK((loaded.mu - direct.mu).norm() == 0.0);
    CHECK((loaded.cov - direct.cov).norm() == 0.0);

    // Exact reference front for the same constraint set.
    const auto ref_dir = (dir / "ref").string();
    r = cli("reference --config " + cfg_path + " --instance " + inst_path +
            " --method enumerate --lambdas 11 --out " + ref_dir);
    REQUIRE(r.exit_code == 0);
    const auto ref_csv = ref_dir + "/ref_enumerate.csv";
    const auto ref = load_reference(ref_csv, ref_dir + "/ref_enumerate.json");
    CHECK(ref.provenance == Provenance::enumeration);
    CHECK(ref.points.size() >= 2);

    // Two seeds, metrics attached.
    const auto run1 = (dir / "run1").string();
    const auto run2 = (dir / "run2").string();
    r = cli("run --config " + cfg_path + " --instance " + inst_path + " --out " + run1 +
            " --reference " + ref_csv + " --label alpha");
    REQUIRE(r.exit_code == 0);
    CHECK_THAT(r.out, ContainsSubstring("hv="));
    r = cli("run --config " + cfg_path + " --instance " + inst_path + " --out " + run2 +
            " --reference " + ref_csv + " --label alpha --seed 6");
    REQUIRE(r.exit_code == 0);

    const RunManifest m1 = load_manifest(run1 + "/manifest.json");
    REQUIRE(m1.has_metrics);
    CHECK(m1.metrics.hv > 0.0);
    CHECK(m1.metrics.hv <= 1.21 + 1e-12);
    CHECK(m1.evals_used == 40);
    const auto front1 = load_front_csv(run1 + "/front.csv");
    REQUIRE_FALSE(front1.empty());
    for (std::size_t i = 1; i < front1.size(); ++i) {
        CHECK(front1[i].risk > front1[i - 1].risk);
        CHECK(front1[i].ret > front1[i - 1].ret);
    }
    CHECK_FALSE(load_weights_csv(run1 + "/weights.csv", 6).empty());
    CHECK_FALSE(load_trace_csv(run1 + "/trace.csv").empty());

    // Manifest re-run reproduces the front byte for byte.
    const auto rerun = (dir / "rerun").string();
    r = cli("run --from-manifest " + run1 + "/manifest.json --out " + rerun);
    REQUIRE(r.exit_code == 0);
    CHECK(testsup::read_file(rerun + "/front.csv") == testsup::read_file(run1 + "/front.csv"));
    CHECK(testsup::read_file(rerun + "/weights.csv") == testsup::read_file(run1 + "/weights.csv"));

    // Aggregate table and plot exports.
    const auto table_csv = (dir / "table.csv").string();
    r = cli("table " + run1 + "/manifest.json " + run2 + "/manifest.json --out " + table_csv);
    REQUIRE(r.exit_code == 0);
    CHECK_THAT(r.out, ContainsSubstring("HV (higher is better)"));
    CHECK_THAT(r.out, ContainsSubstring("Final Rank"));
    CHECK_THAT(testsup::read_file(table_csv),
               ContainsSubstring("instance,label,seeds,hv_mean,hv_std,hv_rank"));

    const auto plot_csv = (dir / "plot.csv").string();
    r = cli("plotdata " + run1 + "/manifest.json " + run2 + "/manifest.json --kind front --out " +
            plot_csv);
    REQUIRE(r.exit_code == 0);
    CHECK_THAT(testsup::read_file(plot_csv), ContainsSubstring("series,risk,return"));
    CHECK_THAT(testsup::read_file(plot_csv), ContainsSubstring("alpha:5,"));

    const auto conv_csv = (dir / "conv.csv").string();
    r = cli("plotdata " + run1 + "/manifest.json --kind convergence --out " + conv_csv);
    REQUIRE(r.exit_code == 0);
    CHECK_THAT(testsup::read_file(conv_csv), ContainsSubstring("series,seconds,hv,gd"));

    std::filesystem::remove_all(dir);
}

TEST_CASE("cli exit codes distinguish validation failures from guard trips") {
    const auto dir = testsup::temp_dir("cli-err");
    const auto inst_path = (dir / "big.orlib").string();
    const auto cfg_path = (dir / "big.cfg").string();

    REQUIRE(cli("make-instance --kind random --n 40 --seed 1 --out " + inst_path).exit_code == 0);
    testsup::write_file(cfg_path, "K = 10\nfloor = 0.01\ntau = 0\n");

    // Subset count far beyond the exact-enumeration guard.
    auto r = cli("reference --config " + cfg_path + " --instance " + inst_path +
                 " --method enumerate --out " + (dir / "ref").string());
    CHECK(r.exit_code == 2);
    CHECK_THAT(r.err, ContainsSubstring("instance too large for exact reference; use TUCPF"));

    // Config errors come back as validation failures.
    testsup::write_file(cfg_path, "K = 10\nwibble = 3\n");
    r = cli("run --config " + cfg_path + " --instance " + inst_path + " --out " +
            (dir / "out").string());
    CHECK(r.exit_code == 1);
    CHECK_THAT(r.err, ContainsSubstring("validation"));
    CHECK_THAT(r.err, ContainsSubstring("wibble"));

    // Run without any configuration source.
    r = cli("run --instance " + inst_path);
    CHECK(r.exit_code == 1);

    std::filesystem::remove_all(dir);
}

TEST_CASE("cli evaluate-oos applies stored weights across the split") {
    const auto dir = testsup::temp_dir("cli-oos");
    const auto prices_path = (dir / "prices.csv").string();
    testsup::write_file(prices_path,
                        "date,AA,BB\n"
                        "2020-01-01,100,50\n"
                        "2020-01-02,110,52\n"
                        "2020-01-03,105,56\n"
                        "2020-01-04,120,53\n"
                        "2020-01-05,130,60\n"
                        "2020-01-06,125,61\n");

    std::vector<Portfolio> ports(1);
    ports[0].selection = {0, 1};
    ports[0].weights = Eigen::VectorXd::Zero(2);
    ports[0].weights(0) = 0.6;
    ports[0].weights(1) = 0.4;
    const auto weights_path = (dir / "weights.csv").string();
    write_weights_csv(weights_path, ports);

    const auto out_csv = (dir / "oos.csv").string();
    auto r = cli("evaluate-oos --prices " + prices_path + " --split 2020-01-04 --weights " +
                 weights_path + " --pick index --index 0 --out " + out_csv);
    REQUIRE(r.exit_code == 0);

    const auto text = testsup::read_file(out_csv);
    CHECK_THAT(text, ContainsSubstring("date,profit,in_sample"));
    CHECK_THAT(text, ContainsSubstring("2020-01-01,0,1"));      // baseline row, in sample
    CHECK_THAT(text, ContainsSubstring("2020-01-05"));
    CHECK_THAT(text, ContainsSubstring(",0\n"));                // at least one held-out row

    // Day 2 profit: 0.6 * 10% + 0.4 * 4% = 7.6%.
    bool found = false;
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.rfind("2020-01-02,", 0) == 0) {
            const auto a = line.find(','), b = line.rfind(',');
            const double profit = std::stod(line.substr(a + 1, b - a - 1));
            CHECK(profit == Catch::Approx(0.076).epsilon(0.0).margin(1e-12));
            found = true;
        }
    }
    CHECK(found);

    CHECK(cli("evaluate-oos --prices " + prices_path + " --split 2020-01-04 --weights " +
              weights_path + " --pick nonsense --out " + out_csv)
              .exit_code == 1);

    std::filesystem::remove_all(dir);
}
