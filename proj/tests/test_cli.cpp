#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

// Exit-code and reproducibility contracts of the psg binary, exercised as a
// subprocess. PSG_CLI_PATH is injected by CMake.

#include <psg/metrics.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code;
    std::string stdout_text;
};

RunResult run(const std::string& args) {
    const fs::path out = fs::temp_directory_path() / "psg_cli_stdout.txt";
    const std::string cmd =
        std::string(PSG_CLI_PATH) + " " + args + " > " + out.string() + " 2>&1";
    const int raw = std::system(cmd.c_str());
    std::ifstream in(out);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return {WEXITSTATUS(raw), buffer.str()};
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

struct ScratchDir {
    fs::path path;
    ScratchDir() {
        path = fs::temp_directory_path() /
               ("psg_cli_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~ScratchDir() { fs::remove_all(path); }
    std::string file(const char* name) const { return (path / name).string(); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

} // namespace

TEST_CASE("gen: same flags and seed give identical bytes") {
    ScratchDir dir;
    const std::string flags = "gen --scenes 8 --hw 16x16 --channels 8 --objects 2..3 --classes 6 "
                              "--predicates 5 --seed 11 -o ";
    CHECK(run(flags + dir.file("a.psgc")).exit_code == 0);
    CHECK(run(flags + dir.file("b.psgc")).exit_code == 0);
    const std::string a = slurp(dir.file("a.psgc"));
    const std::string b = slurp(dir.file("b.psgc"));
    CHECK(!a.empty());
    CHECK(a == b);
}

TEST_CASE("gen: zero scenes is a valid empty corpus") {
    ScratchDir dir;
    const RunResult r = run("gen --scenes 0 --seed 1 -o " + dir.file("empty.psgc"));
    CHECK(r.exit_code == 0);
    CHECK(fs::exists(dir.file("empty.psgc")));
}

TEST_CASE("gen: indivisible patch count is a usage error (exit 2)") {
    ScratchDir dir;
    const RunResult r = run("gen --scenes 1 --hw 15x15 --patches 4 -o " + dir.file("x.psgc"));
    CHECK(r.exit_code == 2);
}

TEST_CASE("gen: malformed flags exit 2") {
    ScratchDir dir;
    CHECK(run("gen --hw banana -o " + dir.file("x.psgc")).exit_code == 2);
    CHECK(run("gen --objects 5..2 -o " + dir.file("x.psgc")).exit_code == 2);
    CHECK(run("frobnicate").exit_code == 2);
}

TEST_CASE("config file values apply but explicit flags win") {
    ScratchDir dir;
    {
        std::ofstream ini(dir.file("psg.ini"));
        ini << "[gen]\nscenes=5\nseed=77\nchannels=8\npredicates=4\nclasses=6\n"
               "objects=2..3\n";
    }
    REQUIRE(run("--config " + dir.file("psg.ini") + " gen -o " + dir.file("a.psgc")).exit_code ==
            0);
    REQUIRE(run("--config " + dir.file("psg.ini") + " gen --scenes 9 -o " + dir.file("b.psgc"))
                .exit_code == 0);
    // Resolved-config snapshots record what actually ran.
    const std::string snap_a = slurp(dir.file("a.psgc.config.json"));
    const std::string snap_b = slurp(dir.file("b.psgc.config.json"));
    CHECK(snap_a.find("\"num_scenes\": 5") != std::string::npos);
    CHECK(snap_b.find("\"num_scenes\": 9") != std::string::npos);
    CHECK(snap_b.find("\"seed\": 77") != std::string::npos);
}

TEST_CASE("train: missing corpus exits 1 and names the path") {
    ScratchDir dir;
    const RunResult r = run("train --corpus " + dir.file("nope.psgc") + " -o " + dir.file("run"));
    CHECK(r.exit_code == 1);
    CHECK(r.stdout_text.find("nope.psgc") != std::string::npos);
}

TEST_CASE("train/eval round trip with reproducible outputs") {
    ScratchDir dir;
    REQUIRE(run("gen --scenes 24 --hw 16x16 --channels 8 --objects 2..3 --classes 6 "
                "--predicates 5 --seed 3 -o " +
                dir.file("c.psgc"))
                .exit_code == 0);

    const std::string train_flags = "train --corpus " + dir.file("c.psgc") +
                                    " --phase1 2 --phase2 1 --lr 3e-4 --batch 8 --tau 0.4 "
                                    "--layers 1 --heads 2 --dk 4 --lr-decay-epochs 3 --seed 7 ";
    REQUIRE(run(train_flags + "-o " + dir.file("run1")).exit_code == 0);
    REQUIRE(run(train_flags + "-o " + dir.file("run2")).exit_code == 0);
    CHECK(slurp(dir.path / "run1" / "model.ckpt") == slurp(dir.path / "run2" / "model.ckpt"));
    CHECK(slurp(dir.path / "run1" / "teacher.ckpt") == slurp(dir.path / "run2" / "teacher.ckpt"));
    CHECK(slurp(dir.path / "run1" / "train_log.jsonl") ==
          slurp(dir.path / "run2" / "train_log.jsonl"));
    CHECK(fs::exists(dir.path / "run1" / "config.json"));
    CHECK(fs::exists(dir.path / "run1" / "model_phase1.ckpt"));

    const RunResult eval1 = run("eval --corpus " + dir.file("c.psgc") + " --ckpt " +
                                dir.file("run1/model.ckpt") + " --k 5,20 -o " +
                                dir.file("r1.json"));
    REQUIRE(eval1.exit_code == 0);
    const RunResult eval2 = run("eval --corpus " + dir.file("c.psgc") + " --ckpt " +
                                dir.file("run2/model.ckpt") + " --k 5,20 -o " +
                                dir.file("r2.json"));
    REQUIRE(eval2.exit_code == 0);
    CHECK(slurp(dir.file("r1.json")) == slurp(dir.file("r2.json")));
    CHECK(eval1.stdout_text == eval2.stdout_text);
}

TEST_CASE("train: phase2=0 emits no teacher checkpoint") {
    ScratchDir dir;
    REQUIRE(run("gen --scenes 12 --hw 16x16 --channels 8 --objects 2..3 --classes 6 "
                "--predicates 4 --seed 4 -o " +
                dir.file("c.psgc"))
                .exit_code == 0);
    REQUIRE(run("train --corpus " + dir.file("c.psgc") +
                " --phase1 2 --phase2 0 --layers 1 --heads 2 --dk 4 --lr-decay-epochs 3 "
                "--seed 1 -o " +
                dir.file("run"))
                .exit_code == 0);
    CHECK(fs::exists(dir.path / "run" / "model.ckpt"));
    CHECK(!fs::exists(dir.path / "run" / "teacher.ckpt"));
    CHECK(!fs::exists(dir.path / "run" / "model_phase1.ckpt"));
}

TEST_CASE("train: pairwise model trains with the identical schedule") {
    ScratchDir dir;
    REQUIRE(run("gen --scenes 12 --hw 16x16 --channels 8 --objects 2..3 --classes 6 "
                "--predicates 4 --seed 6 -o " +
                dir.file("c.psgc"))
                .exit_code == 0);
    CHECK(run("train --corpus " + dir.file("c.psgc") +
              " --model pairwise --phase1 2 --phase2 0 --dk 4 --lr-decay-epochs 3 --seed 1 -o " +
              dir.file("run"))
              .exit_code == 0);
}

TEST_CASE("train: the default toy run finishes well under five minutes on one core") {
    ScratchDir dir;
    REQUIRE(run("gen --seed 2 -o " + dir.file("c.psgc")).exit_code == 0); // default gen flags
    const auto start = std::chrono::steady_clock::now();
    const RunResult r = run("train --corpus " + dir.file("c.psgc") + " --threads 1 --seed 2 -o " +
                            dir.file("run")); // default schedule and model flags
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(r.exit_code == 0);
    CHECK(elapsed < 300.0);
}

TEST_CASE("eval: oracle mode reports all ones; stdout equals the report file") {
    ScratchDir dir;
    REQUIRE(run("gen --scenes 10 --hw 16x16 --channels 8 --objects 2..3 --classes 6 "
                "--predicates 4 --seed 8 -o " +
                dir.file("c.psgc"))
                .exit_code == 0);
    const RunResult r = run("eval --corpus " + dir.file("c.psgc") + " --oracle -o " +
                            dir.file("report.json"));
    REQUIRE(r.exit_code == 0);

    const psg::MetricsReport report = psg::MetricsReport::from_json(slurp(dir.file("report.json")));
    for (std::size_t k : report.ks) {
        CHECK(report.recall.at(k) == 1.0);
        CHECK(report.mean_recall.at(k) == 1.0);
    }
    CHECK(report.pq == 1.0);
    CHECK(report.checkpoint_id == "oracle");

    // Every numeric token printed to stdout must appear verbatim in the JSON.
    std::stringstream lines(r.stdout_text);
    std::string token;
    const std::string json_text = slurp(dir.file("report.json"));
    int checked = 0;
    while (lines >> token) {
        if (token.find('.') != std::string::npos || token == "1.0" || token == "0.0") {
            CHECK(json_text.find(token) != std::string::npos);
            ++checked;
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("eval: single-K report works") {
    ScratchDir dir;
    REQUIRE(run("gen --scenes 6 --hw 16x16 --channels 8 --objects 2..2 --classes 4 "
                "--predicates 3 --seed 12 -o " +
                dir.file("c.psgc"))
                .exit_code == 0);
    const RunResult r =
        run("eval --corpus " + dir.file("c.psgc") + " --oracle -k 1 -o " + dir.file("r.json"));
    CHECK(r.exit_code == 0);
    const psg::MetricsReport report = psg::MetricsReport::from_json(slurp(dir.file("r.json")));
    CHECK(report.ks == std::vector<std::size_t>{1});
}

TEST_CASE("eval: checkpoint/corpus dimension mismatch exits 1") {
    ScratchDir dir;
    REQUIRE(run("gen --scenes 6 --hw 16x16 --channels 8 --objects 2..2 --classes 4 "
                "--predicates 3 --seed 13 -o " +
                dir.file("c8.psgc"))
                .exit_code == 0);
    REQUIRE(run("gen --scenes 6 --hw 16x16 --channels 16 --objects 2..2 --classes 4 "
                "--predicates 3 --seed 13 -o " +
                dir.file("c16.psgc"))
                .exit_code == 0);
    REQUIRE(run("train --corpus " + dir.file("c8.psgc") +
                " --phase1 1 --phase2 0 --layers 1 --heads 2 --dk 4 --lr-decay-epochs 2 "
                "--seed 1 -o " +
                dir.file("run"))
                .exit_code == 0);
    const RunResult r = run("eval --corpus " + dir.file("c16.psgc") + " --ckpt " +
                            dir.file("run/model.ckpt") + " -o " + dir.file("r.json"));
    CHECK(r.exit_code == 1);
}

TEST_CASE("eval requires a checkpoint unless oracle mode is on") {
    ScratchDir dir;
    REQUIRE(run("gen --scenes 4 --hw 16x16 --channels 8 --objects 2..2 --classes 4 "
                "--predicates 3 --seed 14 -o " +
                dir.file("c.psgc"))
                .exit_code == 0);
    CHECK(run("eval --corpus " + dir.file("c.psgc") + " -o " + dir.file("r.json")).exit_code ==
          2);
}

TEST_CASE("PSG_THREADS provides the default worker count") {
    ScratchDir dir;
    const std::string flags = "gen --scenes 10 --hw 16x16 --channels 8 --objects 2..3 "
                              "--classes 6 --predicates 5 --seed 44 -o ";
    REQUIRE(run(flags + dir.file("serial.psgc")).exit_code == 0);
    ::setenv("PSG_THREADS", "4", 1);
    const int code = run(flags + dir.file("threaded.psgc")).exit_code;
    ::unsetenv("PSG_THREADS");
    REQUIRE(code == 0);
    CHECK(slurp(dir.file("serial.psgc")) == slurp(dir.file("threaded.psgc")));
}

TEST_CASE("gradcheck: default run passes, corrupt run fails") {
    CHECK(run("gradcheck").exit_code == 0);
    const RunResult corrupt = run("gradcheck --corrupt");
    CHECK(corrupt.exit_code == 1);
    CHECK(corrupt.stdout_text.find("FAIL") != std::string::npos);

    // Every parameter block appears exactly once in the listing.
    const RunResult ok = run("gradcheck");
    CHECK(ok.stdout_text.find("tokenizer.class_token") != std::string::npos);
    const auto first = ok.stdout_text.find("encoder.0.attn.wq");
    CHECK(first != std::string::npos);
    CHECK(ok.stdout_text.find("encoder.0.attn.wq", first + 1) == std::string::npos);
}
