#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "utaam/dataio.hpp"
#include "utaam/random.hpp"
#include "utaam/tensor_io.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
    const char* env = std::getenv("UTAAM_CLI");
    return env ? env : "";
}

int run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("utaam_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

const std::string kTinyGen =
    "--ids 4 --poses 3 --illums 2 --exprs 2 --landmarks 10 --image-side 48 --seed 3";

}  // namespace

TEST_CASE("cli: usage errors exit with code 1") {
    REQUIRE(!cli_path().empty());
    CHECK(run_cli("definitely-not-a-subcommand") == 1);
    CHECK(run_cli("gen --no-such-flag x") == 1);
    CHECK(run_cli("--help") == 0);
}

TEST_CASE("cli: full pipeline gen -> build -> train -> fit -> eval") {
    REQUIRE(!cli_path().empty());
    const fs::path dir = temp_dir("pipeline");
    const std::string ds = (dir / "ds").string();
    const std::string model = (dir / "model.utam").string();

    CHECK(run_cli("gen --out " + ds + " " + kTinyGen) == 0);
    CHECK(fs::exists(dir / "ds" / "manifest.csv"));

    CHECK(run_cli("build --manifest " + ds + "/manifest.csv --out " + model +
                  " --ref-height 24 --hog-patch 12 --hog-cell 6 --hog-bins 6") == 0);
    CHECK(fs::exists(model));

    // fit before train: the CASC chunk is missing -> data error naming it.
    {
        const std::string cmd = cli_path() + " fit --model " + model + " --manifest " + ds +
                                "/manifest.csv --out-dir " + (dir / "fit0").string() +
                                " 2> " + (dir / "err.txt").string();
        const int status = std::system(cmd.c_str());
        CHECK(WEXITSTATUS(status) == 2);
        CHECK(slurp(dir / "err.txt").find("CASC") != std::string::npos);
    }

    CHECK(run_cli("train --model " + model + " --manifest " + ds +
                  "/manifest.csv --stages 2 --perturbations 2 --seed 1") == 0);

    const std::string report = (dir / "report.txt").string();
    CHECK(run_cli("fit --model " + model + " --manifest " + ds + "/manifest.csv --out-dir " +
                  (dir / "fit").string() + " --report " + report + " --bbox-from-truth") == 0);
    REQUIRE(fs::exists(report));

    // Every report line carries finite errors.
    std::ifstream rep(report);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(rep, line)) {
        std::istringstream row(line);
        std::string path;
        double pt = -1.0, norm = -1.0;
        REQUIRE((row >> path >> pt >> norm));
        CHECK(std::isfinite(pt));
        CHECK(std::isfinite(norm));
        CHECK(pt >= 0.0);
        ++lines;
    }
    CHECK(lines == 4 * 3 * 2 * 2);

    CHECK(run_cli("eval --truth " + ds + "/manifest.csv --pred-dir " + (dir / "fit").string() +
                  " --report " + (dir / "eval.txt").string()) == 0);
    CHECK(fs::exists(dir / "eval.txt"));
}

TEST_CASE("cli: synth --interpolate at t=0 matches direct synthesis bit-exactly") {
    REQUIRE(!cli_path().empty());
    const fs::path dir = temp_dir("synth");
    const std::string ds = (dir / "ds").string();
    const std::string model = (dir / "model.utam").string();

    REQUIRE(run_cli("gen --out " + ds + " " + kTinyGen) == 0);
    REQUIRE(run_cli("build --manifest " + ds + "/manifest.csv --out " + model +
                    " --ref-height 24 --hog-patch 12 --hog-cell 6 --hog-bins 6") == 0);

    CHECK(run_cli("synth --model " + model + " --out " + (dir / "direct.pgm").string() +
                  " --identity-row 1 --pose-row 0 --canvas 64") == 0);
    CHECK(run_cli("synth --model " + model + " --out " + (dir / "interp.pgm").string() +
                  " --identity-row 1 --interpolate 0 2 0 --canvas 64") == 0);
    CHECK(slurp(dir / "direct.pgm") == slurp(dir / "interp.pgm"));
    CHECK(slurp(dir / "direct.pgm").substr(0, 2) == "P5");
}

TEST_CASE("cli: gen is deterministic under a fixed seed") {
    REQUIRE(!cli_path().empty());
    const fs::path dir = temp_dir("determinism");
    REQUIRE(run_cli("gen --out " + (dir / "a").string() + " " + kTinyGen) == 0);
    REQUIRE(run_cli("gen --out " + (dir / "b").string() + " " + kTinyGen) == 0);

    CHECK(slurp(dir / "a" / "manifest.csv") == slurp(dir / "b" / "manifest.csv"));
    const utaam::LoadedDataset ds = utaam::load_manifest(dir / "a" / "manifest.csv");
    for (const auto& sample : ds.samples) {
        const fs::path rel_img = fs::relative(sample.image_file, dir / "a");
        CHECK(slurp(dir / "a" / rel_img) == slurp(dir / "b" / rel_img));
        CHECK(slurp(dir / "a" / sample.row.pts_path) == slurp(dir / "b" / sample.row.pts_path));
    }
}

TEST_CASE("cli: fit results are independent of the worker count") {
    REQUIRE(!cli_path().empty());
    const fs::path dir = temp_dir("threads");
    const std::string ds = (dir / "ds").string();
    const std::string model = (dir / "model.utam").string();

    REQUIRE(run_cli("gen --out " + ds + " " + kTinyGen) == 0);
    REQUIRE(run_cli("build --manifest " + ds + "/manifest.csv --out " + model +
                    " --ref-height 24 --hog-patch 12 --hog-cell 6 --hog-bins 6") == 0);
    REQUIRE(run_cli("train --model " + model + " --manifest " + ds +
                    "/manifest.csv --stages 2 --perturbations 2 --seed 1") == 0);

    for (int workers : {1, 2}) {
        CHECK(run_cli("fit --model " + model + " --manifest " + ds + "/manifest.csv --out-dir " +
                      (dir / ("fit" + std::to_string(workers))).string() +
                      " --bbox-from-truth --threads " + std::to_string(workers)) == 0);
    }
    const utaam::LoadedDataset loaded = utaam::load_manifest(dir / "ds" / "manifest.csv");
    for (const auto& sample : loaded.samples) {
        const auto name = fs::path(sample.row.pts_path).filename();
        CHECK(slurp(dir / "fit1" / name) == slurp(dir / "fit2" / name));
    }
}

TEST_CASE("cli: complete writes a tensor and a monotone trace") {
    REQUIRE(!cli_path().empty());
    const fs::path dir = temp_dir("complete");

    // A small 5-way sample tensor and a 4-way cell mask.
    utaam::DenseTensor data({3, 2, 2, 2, 4});
    utaam::RandomStream rng(5);
    for (auto& v : data.values()) v = rng.uniform01();
    const utaam::DenseTensor mask = utaam::make_missing_mask({3, 2, 2, 2}, 0.3, 7);
    utaam::save_tensor(dir / "data.utt", data);
    utaam::save_tensor(dir / "mask.utt", mask);

    CHECK(run_cli("complete --data " + (dir / "data.utt").string() + " --mask " +
                  (dir / "mask.utt").string() + " --out " + (dir / "done.utt").string() +
                  " --trace " + (dir / "trace.txt").string() +
                  " --ranks 2 2 2 2 3 --max-iter 40") == 0);

    const utaam::DenseTensor done = utaam::load_tensor(dir / "done.utt");
    CHECK(done.dims() == data.dims());

    std::ifstream trace(dir / "trace.txt");
    double prev = std::numeric_limits<double>::infinity();
    double v;
    std::size_t count = 0;
    while (trace >> v) {
        CHECK(v <= prev + 1e-9);
        prev = v;
        ++count;
    }
    CHECK(count >= 1);

    // The weighted-CP solver drives the same interface.
    CHECK(run_cli("complete --data " + (dir / "data.utt").string() + " --mask " +
                  (dir / "mask.utt").string() + " --out " + (dir / "done_cp.utt").string() +
                  " --solver cpwopt --cp-rank 3 --max-iter 60") == 0);
    CHECK(utaam::load_tensor(dir / "done_cp.utt").dims() == data.dims());
}

TEST_CASE("cli: options can come from a flat config file") {
    REQUIRE(!cli_path().empty());
    const fs::path dir = temp_dir("config");
    {
        std::ofstream cfg(dir / "gen.cfg");
        cfg << "gen.ids = 2\n"
            << "gen.poses = 3\n"
            << "gen.illums = 1\n"
            << "gen.exprs = 1\n"
            << "gen.landmarks = 10\n"
            << "gen.image-side = 32\n"
            << "gen.seed = 9\n";
    }
    CHECK(run_cli("--config " + (dir / "gen.cfg").string() + " gen --out " +
                  (dir / "ds").string()) == 0);
    const utaam::DatasetManifest manifest = utaam::read_manifest(dir / "ds" / "manifest.csv");
    CHECK(manifest.extents == std::array<std::size_t, 4>{2, 3, 1, 1});

    // Flags override file values.
    CHECK(run_cli("--config " + (dir / "gen.cfg").string() + " gen --out " +
                  (dir / "ds2").string() + " --ids 4") == 0);
    CHECK(utaam::read_manifest(dir / "ds2" / "manifest.csv").extents[0] == 4);
}
