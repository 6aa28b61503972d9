#include <catch2/catch.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "lumen/pfm.hpp"

#ifndef LUMEN_CLI_PATH
#define LUMEN_CLI_PATH "lumen"
#endif

namespace {
namespace fs = std::filesystem;

fs::path work_dir() {
    auto dir = fs::temp_directory_path() / "lumen-tests" / "cli";
    fs::create_directories(dir);
    return dir;
}

int cli(const std::string& args) {
    auto log = (work_dir() / "cli.log").string();
    std::string cmd = std::string(LUMEN_CLI_PATH) + " " + args + " >" + log + " 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string last_log() {
    std::ifstream is((work_dir() / "cli.log").string());
    std::string all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return all;
}

std::vector<char> slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}
} // namespace

TEST_CASE("cli fails cleanly on missing inputs", "[cli]") {
    CHECK(cli("fit --dataset /nonexistent --out x.lfg") == 1);
    CHECK(last_log().find("error:") != std::string::npos);
    CHECK(cli("extract --grid /nonexistent.lfg --out x.oct") == 1);
    CHECK(cli("render --scene /nonexistent.txt --out x.pfm") == 1);
    CHECK(cli("bench --octree /nonexistent.oct") == 1);
    // Unknown flags are parse errors, not crashes.
    CHECK(cli("fit --wobble 3") != 0);
    CHECK(cli("") != 0);
}

TEST_CASE("gen-dataset refuses to overwrite without --force and is idempotent", "[cli]") {
    auto out = work_dir() / "ds";
    fs::remove_all(out);
    std::string base = "gen-dataset --field sphere --out " + out.string() +
                       " --n-views 2 --n-test 1 --res 16 --gt-samples 64 --threads 1";
    REQUIRE(cli(base) == 0);
    CHECK(cli(base) == 1); // exists, no --force
    CHECK(last_log().find("error:") != std::string::npos);

    auto manifest_a = slurp(out / "manifest.txt");
    auto rgb_a = slurp(out / "rgb" / "0_0001.pfm");
    REQUIRE(cli(base + " --force") == 0);
    CHECK(slurp(out / "manifest.txt") == manifest_a);
    CHECK(slurp(out / "rgb" / "0_0001.pfm") == rgb_a);
}

TEST_CASE("gen-dataset alpha saturates through the sphere core", "[cli]") {
    // The sphere toy has sigma * chord >> 1 through its center, so the
    // written alpha mask is exactly 1 there under the linear model.
    auto out = work_dir() / "dsa";
    fs::remove_all(out);
    REQUIRE(cli("gen-dataset --field sphere --out " + out.string() +
                " --n-views 1 --n-test 0 --res 17 --gt-samples 256 --threads 1") == 0);
    auto alpha = lumen::read_pfm_gray((out / "alpha" / "0_0000.pfm").string());
    CHECK(alpha.at(8, 8) == 1.0f);
    // Corner rays miss the luminaire entirely.
    CHECK(alpha.at(0, 0) == 0.0f);
}

TEST_CASE("fit --iters 0 writes the initial grid and identical seeds give identical files",
          "[cli]") {
    auto out = work_dir() / "ds0";
    fs::remove_all(out);
    REQUIRE(cli("gen-dataset --field sphere --out " + out.string() +
                " --n-views 2 --n-test 0 --res 8 --gt-samples 32 --threads 1") == 0);

    auto g0 = (work_dir() / "g0.lfg").string();
    auto g1 = (work_dir() / "g1.lfg").string();
    REQUIRE(cli("fit --dataset " + out.string() + " --out " + g0 +
                " --res 4 --lmax 1 --iters 0 --progress-every 0") == 0);
    REQUIRE(cli("fit --dataset " + out.string() + " --out " + g1 +
                " --res 4 --lmax 1 --iters 0 --progress-every 0") == 0);
    CHECK(slurp(g0) == slurp(g1));

    auto g2 = (work_dir() / "g2.lfg").string();
    auto g3 = (work_dir() / "g3.lfg").string();
    std::string fit = "fit --dataset " + out.string() +
                      " --res 4 --lmax 1 --iters 20 --seed 9 --batch 32 --n-coarse 8 "
                      "--n-fine 8 --progress-every 0 --out ";
    REQUIRE(cli(fit + g2 + " --threads 1") == 0);
    REQUIRE(cli(fit + g3 + " --threads 2") == 0); // thread count must not matter
    CHECK(slurp(g2) == slurp(g3));
}

TEST_CASE("eval of a directory against itself is perfect", "[cli]") {
    auto out = work_dir() / "dse";
    fs::remove_all(out);
    REQUIRE(cli("gen-dataset --field sphere --out " + out.string() +
                " --n-views 1 --n-test 1 --res 16 --gt-samples 64 --threads 1") == 0);
    auto csv = (work_dir() / "self.csv").string();
    REQUIRE(cli("eval --pred-dir " + out.string() + " --gt-dir " + out.string() +
                " --split test --csv " + csv) == 0);
    std::ifstream is(csv);
    std::string line, mean;
    while (std::getline(is, line))
        if (line.rfind("mean,", 0) == 0) mean = line;
    REQUIRE(!mean.empty());
    // psnr=inf, ssim=1, rmse=0, alpha_rmse=0
    CHECK(mean.find("inf") != std::string::npos);
    CHECK(mean.find(",1,0,0") != std::string::npos);
}
