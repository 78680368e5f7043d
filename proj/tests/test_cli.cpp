#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kCli = ULD_CLI_PATH;

int run(const std::string& args) {
    const std::string cmd = kCli + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

bool dirs_equal(const fs::path& a, const fs::path& b) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(a)) names.push_back(e.path().filename().string());
    for (const auto& name : names) {
        if (!fs::exists(b / name)) return false;
        if (slurp(a / name) != slurp(b / name)) return false;
    }
    std::size_t count_b = 0;
    for (const auto& e : fs::directory_iterator(b)) {
        (void)e;
        ++count_b;
    }
    return count_b == names.size();
}

fs::path scratch() {
    const fs::path p = fs::temp_directory_path() / "uld_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_tiny_scene(const fs::path& p) {
    std::ofstream f(p);
    f << R"({"image_size":[32,32],"num_landmarks":2,"center_jitter_px":1.0,
             "semi_axis_x":[6,7],"semi_axis_y":[5,6],
             "noise_tangent_sigma":1.5,"noise_normal_sigma":0.6})";
}

void write_tiny_train(const fs::path& p, int steps) {
    std::ofstream f(p);
    f << R"({"model":{"encoder_channels":[4,8,8,8,8],"decoder_channels":[8,8,8,4],)"
      << R"("attention_dim":4,"positivity_mode":"diag_only"},)"
      << R"("train":{"steps":)" << steps << R"(,"batch_size":2,"threads":2}})";
}

}  // namespace

TEST_CASE("synth writes deterministic datasets and a summary") {
    const fs::path dir = scratch();
    write_tiny_scene(dir / "scene.json");

    CHECK(run("synth --config " + (dir / "scene.json").string() + " --out " +
              (dir / "d1").string() + " --count 3 --seed 5") == 0);
    CHECK(run("synth --config " + (dir / "scene.json").string() + " --out " +
              (dir / "d2").string() + " --count 3 --seed 5") == 0);
    CHECK(dirs_equal(dir / "d1", dir / "d2"));

    CHECK(run("synth --config " + (dir / "scene.json").string() + " --out " +
              (dir / "d3").string() + " --count 3 --seed 6") == 0);
    CHECK_FALSE(dirs_equal(dir / "d1", dir / "d3"));

    SUBCASE("count 0 still writes a valid manifest") {
        CHECK(run("synth --config " + (dir / "scene.json").string() + " --out " +
                  (dir / "empty").string() + " --count 0") == 0);
        const auto manifest = nlohmann::json::parse(slurp(dir / "empty" / "manifest.json"));
        CHECK(manifest.at("samples").size() == 0);
    }
    fs::remove_all(dir);
}

TEST_CASE("bad inputs map to the documented exit codes") {
    const fs::path dir = scratch();
    {
        std::ofstream f(dir / "bad.json");
        f << "{ not json";
    }
    // config error
    CHECK(run("synth --config " + (dir / "bad.json").string() + " --out " + (dir / "x").string()) == 2);
    // unknown key
    {
        std::ofstream f(dir / "unknown.json");
        f << R"({"imagesize":[32,32]})";
    }
    CHECK(run("synth --config " + (dir / "unknown.json").string() + " --out " + (dir / "x").string()) == 2);
    // io error: missing checkpoint
    CHECK(run("eval --data " + (dir / "nodata").string() + " --ckpt " + (dir / "no.uld").string() +
              " --out " + (dir / "r.json").string()) == 3);
    // usage error: no subcommand
    CHECK(run("") == 2);
    fs::remove_all(dir);
}

TEST_CASE("train/eval/render pipeline on a tiny problem") {
    const fs::path dir = scratch();
    write_tiny_scene(dir / "scene.json");
    write_tiny_train(dir / "train.json", 20);
    REQUIRE(run("synth --config " + (dir / "scene.json").string() + " --out " +
                (dir / "data").string() + " --count 4 --seed 1") == 0);

    SUBCASE("steps=0 leaves only the initial checkpoint") {
        write_tiny_train(dir / "train0.json", 0);
        CHECK(run("train --data " + (dir / "data").string() + " --config " +
                  (dir / "train0.json").string() + " --out " + (dir / "ck0").string()) == 0);
        CHECK(fs::exists(dir / "ck0" / "checkpoint_000000.uld"));
        CHECK(fs::exists(dir / "ck0" / "final.uld"));
        int checkpoints = 0;
        for (const auto& e : fs::directory_iterator(dir / "ck0")) {
            if (e.path().filename().string().rfind("checkpoint_", 0) == 0) ++checkpoints;
        }
        CHECK(checkpoints == 1);
    }

    SUBCASE("training, evaluation, rendering and report determinism") {
        REQUIRE(run("train --data " + (dir / "data").string() + " --config " +
                    (dir / "train.json").string() + " --out " + (dir / "ck").string()) == 0);
        REQUIRE(fs::exists(dir / "ck" / "final.uld"));
        const std::string log = slurp(dir / "ck" / "train_log.csv");
        CHECK(log.rfind("step,total,mahalanobis,logdet", 0) == 0);

        CHECK(run("eval --data " + (dir / "data").string() + " --ckpt " +
                  (dir / "ck" / "final.uld").string() + " --out " + (dir / "report.json").string() +
                  " --svg " + (dir / "svg").string()) == 0);
        CHECK(fs::exists(dir / "report.json"));
        CHECK(fs::exists(dir / "report.json.pred.csv"));
        CHECK(fs::exists(dir / "svg" / "displacements.svg"));
        const auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
        CHECK(rep.contains("mre_mm"));
        CHECK(rep.at("sdr").contains("2"));

        // byte-identical on a second run
        CHECK(run("eval --data " + (dir / "data").string() + " --ckpt " +
                  (dir / "ck" / "final.uld").string() + " --out " + (dir / "report2.json").string()) == 0);
        CHECK(slurp(dir / "report.json") == slurp(dir / "report2.json"));

        // render writes one heatmap per landmark plus the overlay
        CHECK(run("render --ckpt " + (dir / "ck" / "final.uld").string() + " --sample " +
                  (dir / "data" / "sample_00000.pgm").string() + " --out " + (dir / "rend").string()) == 0);
        CHECK(fs::exists(dir / "rend" / "heatmap_00.pgm"));
        CHECK(fs::exists(dir / "rend" / "heatmap_01.pgm"));
        CHECK(fs::exists(dir / "rend" / "overlay.svg"));

        // baseline schema
        CHECK(run("train --data " + (dir / "data").string() + " --config " +
                  (dir / "train.json").string() + " --out " + (dir / "ckb").string() +
                  " --baseline mse-fixed-sigma --steps 5") == 0);
        const std::string blog = slurp(dir / "ckb" / "train_log.csv");
        CHECK(blog.rfind("step,mse,", 0) == 0);

        // shape incompatibility: train a 2-landmark model, eval a 3-landmark set
        write_tiny_scene(dir / "scene3.json");
        {
            auto j = nlohmann::json::parse(slurp(dir / "scene3.json"));
            j["num_landmarks"] = 3;
            std::ofstream f(dir / "scene3.json");
            f << j.dump();
        }
        REQUIRE(run("synth --config " + (dir / "scene3.json").string() + " --out " +
                    (dir / "data3").string() + " --count 2 --seed 2") == 0);
        CHECK(run("eval --data " + (dir / "data3").string() + " --ckpt " +
                  (dir / "ck" / "final.uld").string() + " --out " + (dir / "r3.json").string()) == 5);
    }
    fs::remove_all(dir);
}

TEST_CASE("gradcheck exit codes") {
    CHECK(run("gradcheck --trials 0") == 0);
    CHECK(run("gradcheck --seed 3 --trials 25") == 0);
    CHECK(run("gradcheck --seed 3 --trials 25 --inject-fault 0.5") == 6);
}
