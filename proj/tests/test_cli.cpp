#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chaosld/dataset_io.hpp>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int code;
    std::string out; // stdout and stderr combined
};

RunResult run_cli(const std::string& args) {
    const char* bin = std::getenv("CHAOSLD_CLI_PATH");
    REQUIRE_MESSAGE(bin != nullptr, "CHAOSLD_CLI_PATH must point at the tool");
    std::string cmd = std::string(bin) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[4096];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe))
        out.append(buf, n);
    int status = pclose(pipe);
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string workdir() {
    static std::string dir = [] {
        std::string d = "/tmp/chaosld_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    REQUIRE_MESSAGE(f.good(), path);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

std::size_t line_count(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

// a quick bimodal map dataset shared by the threshold/train/evaluate cases
std::string bimodal_csv() {
    static std::string path = [] {
        std::string out = workdir() + "/bimodal";
        auto r = run_cli("generate --system standard-map --K 0.5 --K 10 "
                         "--n 150 --iters 200 --t-sali 2000 --seed 11 "
                         "--out " + out);
        REQUIRE_MESSAGE(r.code == 0, r.out);
        return out + "/dataset.csv";
    }();
    return path;
}

} // namespace

TEST_CASE("generate is deterministic and echoes a replayable config") {
    std::string a = workdir() + "/gen_a";
    std::string b = workdir() + "/gen_b";
    std::string flags = "generate --system standard-map --K 1.5 --n 50 "
                        "--iters 100 --t-sali 200 --seed 5 --out ";
    auto ra = run_cli(flags + a);
    REQUIRE_MESSAGE(ra.code == 0, ra.out);
    auto rb = run_cli(flags + b);
    REQUIRE(rb.code == 0);
    CHECK(slurp(a + "/dataset.csv") == slurp(b + "/dataset.csv"));

    auto ds = chaosld::read_dataset(a + "/dataset.csv");
    CHECK(ds.records.size() == 50);
    CHECK(ds.spec.rng_seed == 5);
    for (const auto& r : ds.records) CHECK(std::isnan(r.energy));

    // replaying the echoed config reproduces the bytes
    std::string c = workdir() + "/gen_c";
    auto rc = run_cli("generate --config " + a + "/generate.config.json "
                      "--out " + c);
    REQUIRE_MESSAGE(rc.code == 0, rc.out);
    CHECK(slurp(a + "/dataset.csv") == slurp(c + "/dataset.csv"));

    // explicit flags override config values
    std::string d = workdir() + "/gen_d";
    auto rd = run_cli("generate --config " + a + "/generate.config.json "
                      "--n 10 --out " + d);
    REQUIRE(rd.code == 0);
    CHECK(chaosld::read_dataset(d + "/dataset.csv").records.size() == 10);
}

TEST_CASE("configuration errors exit with code 2") {
    CHECK(run_cli("generate --system no-such-thing --n 5 --out " + workdir() +
                  "/x1")
              .code == 2);
    CHECK(run_cli("generate --system standard-map --energy 0.1 --n 5 --out " +
                  workdir() + "/x2")
              .code == 2);
    CHECK(run_cli("generate --system henon-heiles --n 5 --out " + workdir() +
                  "/x3")
              .code == 2); // no cases
    CHECK(run_cli("threshold --out " + workdir() + "/x4").code == 2);
    CHECK(run_cli("train --data " + bimodal_csv() + " --recipe rbf --out " +
                  workdir() + "/x5")
              .code == 2);
    CHECK(run_cli("nonsense").code == 2);

    // a config written by one command refuses to drive another
    auto r = run_cli("threshold --config " + workdir() +
                     "/gen_a/generate.config.json --data " + bimodal_csv());
    CHECK(r.code == 2);
    CHECK(r.out.find("generate") != std::string::npos);
}

TEST_CASE("missing files exit with code 4, impossible data with 3") {
    CHECK(run_cli("threshold --data /nonexistent.csv --out " + workdir() +
                  "/x6")
              .code == 4);
    CHECK(run_cli("evaluate --model /nonexistent.json --data " +
                  bimodal_csv() + " --out " + workdir() + "/x7")
              .code == 4);
    // an energy below the potential floor admits no initial conditions
    CHECK(run_cli("generate --system double-pendulum --energy -99 --n 5 "
                  "--tau 1 --t-sali 1 --out " +
                  workdir() + "/x8")
              .code == 3);
}

TEST_CASE("threshold splits a bimodal alignment-index column") {
    std::string out = workdir() + "/thr";
    auto r = run_cli("threshold --data " + bimodal_csv() +
                     " --column sali_log10 --out " + out);
    REQUIRE_MESSAGE(r.code == 0, r.out);

    json rep = json::parse(slurp(out + "/threshold.json"));
    double thr = rep["threshold"];
    CHECK(thr > rep["peak_low"].get<double>());
    CHECK(thr < rep["peak_high"].get<double>());
    CHECK(rep["converged"].get<bool>());
    CHECK(line_count(slurp(out + "/histogram.csv")) == 101); // header + bins

    // K = 0 freezes the tangent map, so every orbit reports the same index
    // and the histogram degenerates; the tool forwards the precondition
    std::string uni = workdir() + "/uni";
    REQUIRE(run_cli("generate --system standard-map --K 0 --n 250 "
                    "--iters 200 --t-sali 2000 --seed 3 --out " +
                    uni)
                .code == 0);
    auto bad = run_cli("threshold --data " + uni +
                       "/dataset.csv --column sali_log10 --out " + workdir() +
                       "/thr_uni");
    CHECK(bad.code == 3);
    CHECK(bad.out.find("all values identical") != std::string::npos);
}

TEST_CASE("train and evaluate round out the pipeline") {
    std::string mdir = workdir() + "/models";
    auto rt = run_cli("train --data " + bimodal_csv() +
                      " --recipe logS_only --epochs 200 --out " + mdir);
    REQUIRE_MESSAGE(rt.code == 0, rt.out);
    CHECK(fs::exists(mdir + "/model_logS_only.json"));
    CHECK(line_count(slurp(mdir + "/curve_logS_only.csv")) == 201);

    // a second recipe lands in a distinct, self-describing file
    auto rt2 = run_cli("train --data " + bimodal_csv() +
                       " --recipe S_only --epochs 200 --out " + mdir);
    REQUIRE(rt2.code == 0);
    CHECK(fs::exists(mdir + "/model_S_only.json"));
    CHECK(json::parse(slurp(mdir + "/model_logS_only.json"))["recipe"] ==
          "logS_only");
    CHECK(json::parse(slurp(mdir + "/model_S_only.json"))["recipe"] ==
          "S_only");

    std::string edir = workdir() + "/eval";
    auto re = run_cli("evaluate --model " + mdir +
                      "/model_logS_only.json --data " + bimodal_csv() +
                      " --out " + edir);
    REQUIRE_MESSAGE(re.code == 0, re.out);
    json rep = json::parse(slurp(edir + "/report.json"));
    CHECK(rep["accuracy"].get<double>() >= 0.9);
    CHECK(rep["per_case"].size() == 2);
    std::size_t wrong = rep["confusion"]["fp"].get<std::size_t>() +
                        rep["confusion"]["fn"].get<std::size_t>();
    CHECK(line_count(slurp(edir + "/misclassified.csv")) == wrong + 1);

    // subsampled training still works and is recorded in the echo
    std::string fdir = workdir() + "/frac";
    auto rf = run_cli("train --data " + bimodal_csv() +
                      " --recipe logS_only --epochs 100 --train-fraction "
                      "0.25 --out " + fdir);
    REQUIRE(rf.code == 0);
    CHECK(rf.out.find("75/300 rows") != std::string::npos);

    // single-class data is untrainable
    std::string uni = workdir() + "/uni/dataset.csv";
    CHECK(run_cli("train --data " + uni + " --recipe logS_only --out " +
                  workdir() + "/untrainable")
              .code == 3);
}

TEST_CASE("poincare exports map iterates and flow crossings") {
    std::string mout = workdir() + "/poi_map";
    auto rm = run_cli("poincare --system standard-map --K 1.5 --n-orbits 10 "
                      "--crossings 50 --seed 3 --out " + mout);
    REQUIRE_MESSAGE(rm.code == 0, rm.out);
    CHECK(line_count(slurp(mout + "/section.csv")) == 501);

    std::string fout = workdir() + "/poi_flow";
    auto rf = run_cli("poincare --system henon-heiles --energy 0.125 "
                      "--ic 0.55,0.0 --crossings 30 --out " + fout);
    REQUIRE_MESSAGE(rf.code == 0, rf.out);
    std::string csv = slurp(fout + "/section.csv");
    CHECK(line_count(csv) == 31);
    CHECK(csv.rfind("orbit_id,q1,q2\n", 0) == 0);

    // an infeasible start is logged, the run still succeeds
    auto ri = run_cli("poincare --system henon-heiles --energy 0.125 "
                      "--ic 9,9 --crossings 5 --out " + workdir() +
                      "/poi_bad");
    CHECK(ri.code == 0);
    CHECK(ri.out.find("failed") != std::string::npos);
}

TEST_CASE("sali-trace fits the regular-map power law") {
    std::string out = workdir() + "/trace_map";
    auto r = run_cli("sali-trace --system standard-map --K 1.5 --ic 0.5,0.1 "
                     "--t-max 10000 --out " + out);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    json rep = json::parse(slurp(out + "/asymptote.json"));
    CHECK(std::abs(rep["power_slope"].get<double>() + 2.0) < 0.15);
    CHECK_FALSE(rep["crossed_threshold"].get<bool>());
    CHECK(line_count(slurp(out + "/sali_trace.csv")) > 20);
}

TEST_CASE("sali-trace at an equilibrium stays at log10 sqrt(2)") {
    // the linearization rotates both deviation vectors at the same rate, so
    // the alignment index is frozen at its seed value
    std::string out = workdir() + "/trace_eq";
    auto r = run_cli("sali-trace --system henon-heiles --energy 0 --ic 0,0 "
                     "--t-max 1000 --out " + out);
    REQUIRE_MESSAGE(r.code == 0, r.out);
    json rep = json::parse(slurp(out + "/asymptote.json"));
    const double half_log2 = 0.5 * std::log10(2.0);
    CHECK(std::abs(rep["final_log10_sali"].get<double>() - half_log2) < 1e-6);
    CHECK(std::abs(rep["plateau"].get<double>() - half_log2) < 1e-6);
    CHECK_FALSE(rep["floored"].get<bool>());
}
