#include "mhdd/crypto_pipeline.hpp"
#include "mhdd/text_io.hpp"

#include <catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>

using namespace mhdd;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

/// Runs the CLI in `dir`, capturing stdout; stderr is discarded.
Run cli(const std::string& args, const fs::path& dir) {
    const auto out = dir / "stdout.txt";
    const std::string cmd = "cd '" + dir.string() + "' && '" + std::string(MHDD_CLI_PATH) + "' " + args + " > '" +
                            out.string() + "' 2>/dev/null";
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = fs::exists(out) ? read_file(out.string()) : "";
    fs::remove(out);
    return r;
}

fs::path scratch_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("mhdd_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::size_t file_count(const fs::path& d) {
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(d)) ++n;
    return n;
}

}  // namespace

TEST_CASE("usage errors exit with 2", "[cli]") {
    const auto d = scratch_dir("usage");
    CHECK(cli("", d).code == 2);
    CHECK(cli("frobnicate", d).code == 2);
    CHECK(cli("sweep --bogus", d).code == 2);
    CHECK(cli("--help", d).code == 0);
    CHECK(cli("logic --expr 'MAX(1,'", d).code == 2);
    CHECK(cli("array inspect --array missing.mhdd", d).code == 2);
}

TEST_CASE("sweep writes a CSV trace", "[cli]") {
    const auto d = scratch_dir("sweep");
    REQUIRE(cli("sweep --stop 3.0 --step 0.05 --out t.csv", d).code == 0);
    const auto csv = read_file((d / "t.csv").string());
    CHECK(csv.rfind("time_s,voltage_V,current_A,conductance_S,branch\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 244);
    REQUIRE(cli("--out-dir sub sweep --single --stop 1 --step 0.1 --out t.csv", d).code == 0);
    CHECK(fs::exists(d / "sub" / "t.csv"));
}

TEST_CASE("logic prints the XOR truth table", "[cli]") {
    const auto d = scratch_dir("logic");
    const auto r = cli("logic --gate xor --table", d);
    REQUIRE(r.code == 0);
    std::istringstream in(r.out);
    std::string line;
    std::getline(in, line);
    CHECK(line == "p,q,G_final_S,output");
    int rows = 0;
    while (std::getline(in, line)) {
        const int p = line[0] - '0', q = line[2] - '0';
        CHECK(line.back() - '0' == (p ^ q));
        ++rows;
    }
    CHECK(rows == 4);
    const auto e = cli("logic --radix 3 --expr '(max (min 2 p) q)' --var p=1 --var q=0", d);
    CHECK(e.code == 0);
    CHECK(e.out.find("result=1 reference=1") != std::string::npos);
}

TEST_CASE("encrypt then decrypt recovers the quantized image", "[cli]") {
    const auto d = scratch_dir("crypt");
    RgbImage img(5, 4);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<std::uint8_t>((i * 41 + 7) % 256);
    save_ppm(img, (d / "mural.ppm").string());
    REQUIRE(cli("--noise --seed 3 encrypt --image mural.ppm --key-seed 42 --array disk.mhdd --cipher-out c.ppm "
                "--key-out k.key",
                d)
                .code == 0);
    CHECK(fs::exists(d / "c.ppm"));
    CHECK(load_key((d / "k.key").string()) == gen_key(42, 5, 4));
    REQUIRE(cli("--noise --seed 4 decrypt --array disk.mhdd --key-seed 42 --out r.ppm", d).code == 0);
    const auto back = load_ppm((d / "r.ppm").string());
    RgbImage want(5, 4);
    for (std::size_t i = 0; i < img.data.size(); ++i) want.data[i] = static_cast<std::uint8_t>(dequantize(quantize64(img.data[i])));
    CHECK(back == want);
    CHECK(cli("decrypt --array disk.mhdd --key k.key --key-seed 42", d).code == 2);
}

TEST_CASE("dry-run performs no writes and leaves arrays untouched", "[cli]") {
    const auto d = scratch_dir("dry");
    REQUIRE(cli("array alloc --rows 2 --cols 2 --array a.mhdd", d).code == 0);
    const auto before = read_file((d / "a.mhdd").string());
    const auto n = file_count(d);
    RgbImage img(2, 2);
    save_ppm(img, (d / "i.ppm").string());
    CHECK(cli("--dry-run store --image i.ppm --array a.mhdd", d).code == 0);
    CHECK(cli("--dry-run sweep --out t.csv", d).code == 0);
    CHECK(cli("--dry-run levels --export-codec c.txt", d).code == 0);
    CHECK(read_file((d / "a.mhdd").string()) == before);
    CHECK(file_count(d) == n + 1);
}

TEST_CASE("array subcommands and format errors", "[cli]") {
    const auto d = scratch_dir("array");
    REQUIRE(cli("--seed 9 array alloc --rows 3 --cols 2 --array a.mhdd", d).code == 0);
    const auto r = cli("array inspect --array a.mhdd --row 0 --col 1", d);
    CHECK(r.code == 0);
    CHECK(r.out.find("geometry=3x2x3") != std::string::npos);
    CHECK(r.out.find("master_seed=9") != std::string::npos);
    CHECK(cli("array capacity --rows 128 --cols 128", d).out.find("ratio=0.166667") != std::string::npos);
    const auto text = read_file((d / "a.mhdd").string());
    write_file_atomic((d / "t.mhdd").string(), text.substr(0, text.size() / 2));
    CHECK(cli("array inspect --array t.mhdd", d).code == 2);
    CHECK(cli("array inspect --array a.mhdd --row 9 --col 0", d).code == 2);
}

TEST_CASE("domain failures exit with 1", "[cli]") {
    const auto d = scratch_dir("domain");
    write_file_atomic((d / "weak.codec").string(), "V_max=1\n");
    CHECK(cli("--codec weak.codec levels --value 63", d).code == 1);
    CHECK(cli("levels --value 53", d).code == 0);
    CHECK(cli("levels --value 64", d).code == 2);
}

TEST_CASE("stats subcommands report", "[cli]") {
    const auto d = scratch_dir("stats");
    CHECK(cli("stats power", d).out.find("peak_W=") != std::string::npos);
    CHECK(cli("stats windows --stops 5.5,10", d).out.find("stop_V,window_S") == 0);
    CHECK(cli("stats uniformity", d).out.find("cycle_to_cycle_pct=") != std::string::npos);
    CHECK(cli("stats retention --duration 1000 --every 100 --out r.csv", d).code == 0);
    CHECK(fs::exists(d / "r.csv"));
}
