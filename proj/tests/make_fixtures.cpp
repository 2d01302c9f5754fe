// Regenerates tests/fixtures/scene25 and fixtures.json from the synthesizer.
// Usage: make_fixtures [fixture-dir]

#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>

#include "support/synth.hpp"

int main(int argc, char** argv) {
    namespace fs = std::filesystem;
    const fs::path root = argc > 1 ? fs::path(argv[1]) : vf_test::fixture_dir();
    auto pair = vf_test::synth_pair(25, 64, 64, 0, "scene25");
    auto fused = vf_test::synth_fused(pair);
    videofusion::save_pair(pair, root / "scene25");
    videofusion::save_clip(fused, root / "scene25" / "fused", "scene25");

    nlohmann::json j;
    j["scene25"] = {{"generator", "synth_pair(25, 64, 64, variant 0)"},
                    {"frames", 25},
                    {"height", 64},
                    {"width", 64},
                    {"checksums",
                     {{"ir", videofusion::clip_checksum(pair.ir)},
                      {"vi", videofusion::clip_checksum(pair.vi)},
                      {"fused", videofusion::clip_checksum(fused)}}}};
    std::ofstream(root / "fixtures.json") << j.dump(2) << "\n";
    std::cout << j.dump(2) << "\n";
}
