// Runs the actual CLI binary twice with identical config and seeds and
// byte-compares the emitted CSV and model files.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "saklqr/csv.hpp"

namespace {

int run(const std::string& cmd) {
    std::printf("$ %s\n", cmd.c_str());
    std::fflush(stdout);
    return std::system(cmd.c_str());
}

bool same_bytes(const std::string& a, const std::string& b) {
    return saklqr::read_file_bytes(a) == saklqr::read_file_bytes(b);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: cli_determinism <path-to-cli>\n");
        return 2;
    }
    const std::string cli = argv[1];
    const auto base = std::filesystem::temp_directory_path() / "saklqr_cli_det";
    std::filesystem::remove_all(base);
    std::filesystem::create_directories(base);
    const std::string dir = base.string();

    if (run(cli + " fit --seed 3 --out " + dir + "/m1") != 0) return 1;
    if (run(cli + " fit --seed 3 --out " + dir + "/m2") != 0) return 1;
    if (!same_bytes(dir + "/m1/model.json", dir + "/m2/model.json")) {
        std::fprintf(stderr, "[FAIL] fit reruns produced different model files\n");
        return 1;
    }
    std::printf("[PASS] fit reruns byte-identical\n");

    const std::string model = dir + "/m1/model.json";
    if (run(cli + " track --controller saklqr --seed 3 --model " + model + " --out " + dir +
            "/t1") != 0)
        return 1;
    if (run(cli + " track --controller saklqr --seed 3 --model " + model + " --out " + dir +
            "/t2") != 0)
        return 1;
    if (!same_bytes(dir + "/t1/track_saklqr.csv", dir + "/t2/track_saklqr.csv")) {
        std::fprintf(stderr, "[FAIL] track reruns produced different CSV logs\n");
        return 1;
    }
    std::printf("[PASS] track reruns byte-identical\n");

    if (run(cli + " centroid-ablation --seed 3 --model " + model + " --out " + dir + "/a1") !=
        0)
        return 1;
    if (run(cli + " centroid-ablation --seed 3 --model " + model + " --out " + dir + "/a2") !=
        0)
        return 1;
    for (const char* name : {"/ablation_standard.csv", "/ablation_regulated.csv",
                             "/ablation_summary.csv", "/coverage_regulated.csv"}) {
        if (!same_bytes(dir + "/a1" + name, dir + "/a2" + name)) {
            std::fprintf(stderr, "[FAIL] ablation reruns differ in %s\n", name);
            return 1;
        }
    }
    std::printf("[PASS] centroid-ablation reruns byte-identical\n");

    if (run(cli + " observables --seed 3 --out " + dir + "/o1") != 0) return 1;
    if (run(cli + " observables --seed 3 --out " + dir + "/o2") != 0) return 1;
    if (!same_bytes(dir + "/o1/observables.csv", dir + "/o2/observables.csv")) {
        std::fprintf(stderr, "[FAIL] observables reruns produced different tables\n");
        return 1;
    }
    std::printf("[PASS] observables reruns byte-identical\n");
    return 0;
}
