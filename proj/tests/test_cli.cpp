#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "dacnn/data.hpp"

namespace fs = std::filesystem;

namespace {

const std::string cli = DACNN_CLI_PATH;

int run(const std::string& args) {
    const int status = std::system((cli + " " + args).c_str());
    return WEXITSTATUS(status);
}

int run_capture(const std::string& args, const std::string& out_file) {
    const int status = std::system((cli + " " + args + " > " + out_file + " 2>&1").c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("help and usage errors") {
    TempDir tmp("dacnn_cli_help");
    CHECK(run_capture("--help", tmp.str() + "/help.txt") == 0);
    const std::string help = slurp(tmp.str() + "/help.txt");
    for (const char* sub : {"gen-data", "train", "eval", "gradcheck", "bench", "rf-trace", "depth-variance"}) {
        CHECK(help.find(sub) != std::string::npos);
    }
    CHECK(run_capture("gen-data --help", tmp.str() + "/h2.txt") == 0);
    CHECK(run_capture("no-such-command", tmp.str() + "/e1.txt") == 2);
    CHECK(run_capture("gen-data --no-such-flag x --out " + tmp.str(), tmp.str() + "/e2.txt") == 2);
    CHECK(run_capture("", tmp.str() + "/e3.txt") == 2);  // a subcommand is required
}

TEST_CASE("gen-data is deterministic and idempotent") {
    TempDir tmp("dacnn_cli_gen");
    const std::string d1 = tmp.str() + "/a";
    const std::string d2 = tmp.str() + "/b";
    const std::string flags = " --images 3 --size 16 --seed 5 --noise 0.01";
    CHECK(run_capture("gen-data --out " + d1 + flags, tmp.str() + "/log1.txt") == 0);
    CHECK(run_capture("gen-data --out " + d2 + flags, tmp.str() + "/log2.txt") == 0);

    CHECK(fs::exists(fs::path(d1) / "manifest.txt"));
    size_t files = 0;
    for (const char* sub : {"rgb", "depth", "label"}) {
        for (const auto& e : fs::directory_iterator(fs::path(d1) / sub)) {
            (void)e;
            ++files;
        }
    }
    CHECK(files == 9);  // images x 3

    for (const char* rel : {"rgb/000000.ppm", "depth/000001.pgm", "label/000002.pgm", "manifest.txt"}) {
        CHECK(slurp((fs::path(d1) / rel).string()) == slurp((fs::path(d2) / rel).string()));
    }

    // rerunning over the same directory rewrites identical outputs
    CHECK(run_capture("gen-data --out " + d1 + flags, tmp.str() + "/log3.txt") == 0);
    CHECK(slurp((fs::path(d1) / "rgb/000000.ppm").string()) == slurp((fs::path(d2) / "rgb/000000.ppm").string()));
}

TEST_CASE("train, eval and the similarity flags") {
    TempDir tmp("dacnn_cli_train");
    const std::string data = tmp.str() + "/data";
    REQUIRE(run_capture("gen-data --out " + data + " --images 3 --size 16 --seed 7", tmp.str() + "/g.txt") == 0);

    const std::string run1 = tmp.str() + "/run1";
    CHECK(run_capture("train --data " + data + " --out " + run1 +
                          " --preset dcnn-mini --iters 3 --seed 2 --dump-config",
                      tmp.str() + "/t1.txt") == 0);
    CHECK(fs::exists(fs::path(run1) / "checkpoint.dcnn"));
    CHECK(fs::exists(fs::path(run1) / "loss_curve.csv"));
    const std::string dump = slurp(tmp.str() + "/t1.txt");
    CHECK(dump.find("\"command\": \"train\"") != std::string::npos);
    CHECK(dump.find("\"alpha\": 8.3") != std::string::npos);

    // same seed reproduces the checkpoint bytes
    const std::string run2 = tmp.str() + "/run2";
    CHECK(run_capture("train --data " + data + " --out " + run2 + " --preset dcnn-mini --iters 3 --seed 2",
                      tmp.str() + "/t2.txt") == 0);
    CHECK(slurp((fs::path(run1) / "checkpoint.dcnn").string()) ==
          slurp((fs::path(run2) / "checkpoint.dcnn").string()));

    // --sim one reproduces the baseline trajectory exactly
    const std::string run_b = tmp.str() + "/run_b";
    const std::string run_o = tmp.str() + "/run_o";
    CHECK(run_capture("train --data " + data + " --out " + run_b + " --preset baseline-mini --iters 3 --seed 2",
                      tmp.str() + "/t3.txt") == 0);
    CHECK(run_capture("train --data " + data + " --out " + run_o + " --preset dcnn-mini --sim one --iters 3 --seed 2",
                      tmp.str() + "/t4.txt") == 0);
    CHECK(slurp((fs::path(run_b) / "loss_curve.csv").string()) ==
          slurp((fs::path(run_o) / "loss_curve.csv").string()));

    // the alpha flag reaches the similarity: loss curves differ on
    // depth-varying data
    const std::string run_a = tmp.str() + "/run_a";
    CHECK(run_capture("train --data " + data + " --out " + run_a +
                          " --preset dcnn-mini --alpha 0.3 --iters 3 --seed 2",
                      tmp.str() + "/t5.txt") == 0);
    CHECK(slurp((fs::path(run_a) / "loss_curve.csv").string()) !=
          slurp((fs::path(run1) / "loss_curve.csv").string()));

    // eval emits the four metrics
    CHECK(run_capture("eval --data " + data + " --checkpoint " + run1 + "/checkpoint.dcnn --preset dcnn-mini",
                      tmp.str() + "/e1.txt") == 0);
    const std::string metrics = slurp(tmp.str() + "/e1.txt");
    for (const char* key : {"\"acc\"", "\"macc\"", "\"miou\"", "\"fwiou\"", "per_class_iou"}) {
        CHECK(metrics.find(key) != std::string::npos);
    }

    // missing data directory fails with the data exit code
    CHECK(run_capture("train --data " + tmp.str() + "/missing --out " + run1 + " --iters 1",
                      tmp.str() + "/e2.txt") == 3);
    // bad flag values are usage errors
    CHECK(run_capture("train --data " + data + " --out " + run1 + " --iters 1 --sim nope",
                      tmp.str() + "/e3.txt") == 2);
}

TEST_CASE("gradcheck, bench, rf-trace and depth-variance") {
    TempDir tmp("dacnn_cli_tools");
    CHECK(run_capture("gradcheck --target ops --instances 2 --out " + tmp.str() + "/gc.csv",
                      tmp.str() + "/gc.txt") == 0);
    CHECK(slurp(tmp.str() + "/gc.csv").find("target,max_rel_err") == 0);

    CHECK(run_capture("bench --sizes 8:8:16:16:3 --reps 3 --warmup 1 --out " + tmp.str() + "/bench.csv",
                      tmp.str() + "/b.txt") == 0);
    CHECK(slurp(tmp.str() + "/bench.csv").find("config,standard_ns") == 0);
    CHECK(run_capture("bench --sizes nonsense", tmp.str() + "/b2.txt") == 2);

    const std::string data = tmp.str() + "/data";
    REQUIRE(run_capture("gen-data --out " + data + " --images 2 --size 16 --seed 3", tmp.str() + "/g.txt") == 0);

    CHECK(run_capture("rf-trace --depth-file " + data + "/depth/000000.pgm --pixel 8,8 --levels 2 --out " +
                          tmp.str() + "/trace.pgm",
                      tmp.str() + "/rf.txt") == 0);
    CHECK(fs::exists(tmp.str() + "/trace.pgm"));
    CHECK(run_capture("rf-trace --depth-file " + data + "/depth/000000.pgm --pixel 99,0 --out " + tmp.str() +
                          "/trace2.pgm",
                      tmp.str() + "/rf2.txt") == 2);

    CHECK(run_capture("depth-variance --data " + data + " --format csv", tmp.str() + "/dv.txt") == 0);
    CHECK(slurp(tmp.str() + "/dv.txt").find("class,mean_variance") == 0);
}
