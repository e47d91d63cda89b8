// Regenerates data/: model files, three synthetic walking clips, the manifest
// and a pipeline config. Usage: hmx_make_bundle <data-dir>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "hmx/body/human_model.hpp"
#include "hmx/body/robot_model.hpp"
#include "hmx/io/sample_file.hpp"
#include "hmx/pipeline/pipeline.hpp"
#include "hmx/retarget/retarget.hpp"

namespace fs = std::filesystem;
using namespace hmx;

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: hmx_make_bundle <data-dir>\n";
    return 2;
  }
  try {
    const fs::path dir = argv[1];
    fs::create_directories(dir / "poses");
    const auto human = body::default_human_model();
    human.save(dir / "human_model.txt");
    body::default_robot_model().save(dir / "robot_model.txt");

    struct Clip {
      const char* name;
      const char* text;
      double speed, turn;
      const char* split;
    };
    const Clip clips[] = {
        {"walk_slow", "a person walks slowly forward", 0.6, 0.0, "train"},
        {"walk_brisk", "a person walks briskly forward", 1.2, 0.0, "val"},
        {"walk_turn", "a person walks forward while turning left", 0.8, 0.4, "test"},
    };
    pipeline::Manifest m;
    std::uint64_t seed = 1;
    for (const auto& c : clips) {
      auto s = io::from_human_pose(retarget::synthetic_walk(human, 80, c.speed, c.turn, seed++), human.joint_count());
      s.text = c.text;
      s.provenance = "synthetic_walk";
      const std::string file = std::string("poses/") + c.name + ".pose.hmx";
      io::write_sample(s, dir / file);
      m.samples.push_back({file, c.text, c.split});
    }
    std::ofstream(dir / "manifest.json") << m.to_json();
    std::ofstream(dir / "pipeline.cfg") << "hmx-config/1\n"
                                           "pipeline.human_model human_model.txt\n"
                                           "pipeline.robot_model robot_model.txt\n"
                                           "pipeline.record_timings false\n"
                                           "retarget.ik.lambda_smooth 0.05\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
