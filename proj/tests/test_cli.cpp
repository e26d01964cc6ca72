#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

#include "clv/baseline.hpp"
#include "clv/eval.hpp"
#include "clv/ingest.hpp"

namespace fs = std::filesystem;
using namespace clv;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output; // stdout + stderr
};

std::string cli_binary() {
    const char* path = std::getenv("CLV_CLI");
    REQUIRE_MESSAGE(path != nullptr, "CLV_CLI must point at the clv binary");
    return path;
}

RunResult run(const std::string& args) {
    const std::string cmd = cli_binary() + " " + args + " 2>&1";
    RunResult res;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf;
    while (fgets(buf.data(), static_cast<int>(buf.size()), pipe)) res.output += buf.data();
    const int status = pclose(pipe);
    res.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// fresh scratch directory per test case
struct Scratch {
    fs::path dir;
    Scratch() {
        dir = fs::temp_directory_path() /
              ("clv_cli_test_" + std::to_string(::getpid()) + "_" +
               std::to_string(counter()++));
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    std::string p(const std::string& name) const { return (dir / name).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

void make_dataset(const Scratch& s) {
    const auto sim = run("simulate --output " + s.p("log.csv") + " --truth " +
                         s.p("truth.csv") +
                         " --customers 250 --window-weeks 120 --acquisition-weeks 40 --seed 5");
    REQUIRE_MESSAGE(sim.exit_code == 0, sim.output);
    const auto ing = run("ingest --input " + s.p("log.csv") +
                         " --day-offsets --calibration-end-days 364 --output " +
                         s.p("summ.csv"));
    REQUIRE_MESSAGE(ing.exit_code == 0, ing.output);
}

} // namespace

TEST_CASE("usage errors exit 2, validation failures exit 1 with a category") {
    CHECK(run("frobnicate").exit_code == 2);
    CHECK(run("").exit_code == 2);
    CHECK(run("--help").exit_code == 0);

    const auto missing = run("fit-baseline --summaries /nonexistent/file --output x");
    CHECK(missing.exit_code == 1);
    CHECK(missing.output.find("error: io-error:") != std::string::npos);

    Scratch s;
    make_dataset(s);
    const auto bad = run("evaluate --log " + s.p("log.csv") +
                         " --calibration-end-days 364 --models made_up --output " +
                         s.p("b.csv"));
    CHECK(bad.exit_code == 1);
    CHECK(bad.output.find("error: validation-error:") != std::string::npos);
}

TEST_CASE("ingest with ISO dates matches the library") {
    Scratch s;
    {
        std::ofstream log(s.p("iso.csv"));
        log << "customer_id,date,amount\n"
            << "a,2024-01-01,10.0\n"
            << "a,2024-02-01,12.0\n"
            << "b,2024-01-15,7.5\n";
    }
    const auto res = run("ingest --input " + s.p("iso.csv") +
                         " --calibration-end-days 90 --output " + s.p("summ.csv"));
    REQUIRE_MESSAGE(res.exit_code == 0, res.output);
    const auto got = ingest::read_summaries_file(s.p("summ.csv"));
    const auto expected = ingest::summarize_rfm(
        ingest::parse_transaction_log_file(s.p("iso.csv"), {}), 90.0);
    REQUIRE(got.size() == expected.size());
    for (size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i].customer_id == expected[i].customer_id);
        CHECK(got[i].x == expected[i].x);
        CHECK(got[i].t_x == doctest::Approx(expected[i].t_x).epsilon(1e-14));
        CHECK(got[i].z_bar == doctest::Approx(expected[i].z_bar).epsilon(1e-14));
    }
}

TEST_CASE("fit-clvae checkpoint metadata echoes the training defaults") {
    Scratch s;
    make_dataset(s);
    const auto res = run(
        "fit-clvae --summaries " + s.p("summ.csv") + " --output " + s.p("m.ckpt") +
        " --max-epochs 3 --encoder-width1 8 --encoder-width2 4"
        " --decoder-width1 4 --decoder-width2 8 --calibration-end-days 364");
    REQUIRE_MESSAGE(res.exit_code == 0, res.output);

    const auto meta = nlohmann::json::parse(slurp(s.p("m.ckpt") + ".json"));
    CHECK(meta["config"]["learning_rate"].get<double>() == 0.001);
    CHECK(meta["config"]["batch_size"].get<int>() == 64);
    CHECK(meta["config"]["mc_samples"].get<int>() == 10);
    CHECK(meta["config"]["patience"].get<int>() == 100);
    CHECK(meta["config"]["seed"].get<std::uint64_t>() == 50);
    CHECK(meta["customer_count"].get<long>() == 250);
    CHECK(meta["calibration_end_days"].get<double>() == 364.0);

    // training log exists and records per-epoch ELBO values
    const std::string train_log = slurp(s.p("m.ckpt") + ".trainlog.csv");
    CHECK(train_log.rfind("epoch,train_elbo,validation_elbo", 0) == 0);
    CHECK(train_log.find("best_epoch=") != std::string::npos);
}

TEST_CASE("predict is deterministic per seed and replays from the config echo") {
    Scratch s;
    make_dataset(s);
    const auto fit = run("fit-clvae --summaries " + s.p("summ.csv") + " --output " +
                         s.p("m.ckpt") +
                         " --max-epochs 2 --encoder-width1 8 --encoder-width2 4"
                         " --decoder-width1 4 --decoder-width2 8");
    REQUIRE_MESSAGE(fit.exit_code == 0, fit.output);

    const std::string base = "predict --checkpoint " + s.p("m.ckpt") + " --summaries " +
                             s.p("summ.csv") + " --horizons 52 --samples 1 --seed 9";
    const auto a = run(base + " --output " + s.p("p1.csv"));
    const auto b = run(base + " --output " + s.p("p2.csv"));
    REQUIRE_MESSAGE(a.exit_code == 0, a.output);
    REQUIRE_MESSAGE(b.exit_code == 0, b.output);
    CHECK(slurp(s.p("p1.csv")) == slurp(s.p("p2.csv")));

    // the resolved-config echo replays the run bit-for-bit
    const auto replay =
        run("--config " + s.p("p1.csv") + ".config predict --output " + s.p("p3.csv"));
    REQUIRE_MESSAGE(replay.exit_code == 0, replay.output);
    CHECK(slurp(s.p("p3.csv")) == slurp(s.p("p1.csv")));
}

TEST_CASE("evaluate reproduces an in-process benchmark run") {
    Scratch s;
    make_dataset(s);
    const auto res = run("evaluate --log " + s.p("log.csv") +
                         " --calibration-end-days 364 --observation-end-days 840"
                         " --models pnbd_gg --horizons 26 52 --seed 3 --output " +
                         s.p("bench.csv") + " --json " + s.p("bench.json"));
    REQUIRE_MESSAGE(res.exit_code == 0, res.output);

    eval::BenchmarkConfig cfg;
    cfg.horizons = {26.0, 52.0};
    cfg.models = {eval::ModelKind::pnbd_gg};
    cfg.seed = 3;
    cfg.observation_end_days = 840.0;
    const auto report =
        eval::run_benchmark(ingest::read_day_log_file(s.p("log.csv")), 364.0, cfg);

    const auto j = nlohmann::json::parse(slurp(s.p("bench.json")));
    REQUIRE(j["results"].size() == 1);
    for (size_t h = 0; h < cfg.horizons.size(); ++h) {
        CHECK(j["results"][0]["rmse"][h].get<double>() ==
              doctest::Approx(report.cells[0][h].rmse).epsilon(1e-12));
        CHECK(j["results"][0]["mae"][h].get<double>() ==
              doctest::Approx(report.cells[0][h].mae).epsilon(1e-12));
    }
    CHECK(j["dataset_fingerprint"].get<std::string>() == report.dataset_fingerprint);

    // delimited flavor carries the same grid header
    const std::string txt = slurp(s.p("bench.csv"));
    CHECK(txt.rfind("model,rmse_26,mae_26,rmse_52,mae_52", 0) == 0);
}

TEST_CASE("CLV_OUTPUT_DIR redirects relative outputs") {
    Scratch s;
    fs::create_directories(s.dir / "outputs");
    const std::string cmd = "simulate --output rel_log.csv --truth rel_truth.csv"
                            " --customers 20 --window-weeks 52 --acquisition-weeks 10 --seed 1";
    const std::string env = "CLV_OUTPUT_DIR=" + (s.dir / "outputs").string() + " ";
    RunResult res;
    {
        const std::string full = env + cli_binary() + " " + cmd + " 2>&1";
        FILE* pipe = popen(full.c_str(), "r");
        REQUIRE(pipe != nullptr);
        std::array<char, 4096> buf;
        while (fgets(buf.data(), static_cast<int>(buf.size()), pipe)) res.output += buf.data();
        res.exit_code = WIFEXITED(pclose(pipe)) ? 0 : -1;
    }
    REQUIRE_MESSAGE(res.exit_code == 0, res.output);
    CHECK(fs::exists(s.dir / "outputs" / "rel_log.csv"));
    CHECK(fs::exists(s.dir / "outputs" / "rel_truth.csv"));
    CHECK(fs::exists(s.dir / "outputs" / "rel_log.csv.config"));
}
