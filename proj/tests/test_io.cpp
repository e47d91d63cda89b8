#include <cmath>
#include <filesystem>
#include <limits>
#include <string>

#include "doctest.h"
#include "hmx/body/human_model.hpp"
#include "hmx/error.hpp"
#include "hmx/io/config.hpp"
#include "hmx/io/sample_file.hpp"
#include "hmx/numerics/prng.hpp"
#include "hmx/retarget/retarget.hpp"

using namespace hmx;
using namespace hmx::io;

namespace {

MotionSample random_actions(std::size_t frames, std::uint64_t seed) {
  numerics::Prng rng(seed);
  retarget::ActionSequence a;
  a.q = numerics::Matrix(frames, 27);
  for (auto& v : a.q.data) v = rng.normal() * 1e3 + rng.uniform() * 1e-300;
  auto s = from_actions(a);
  s.text = "wave \"both\" arms\n\ttwice";
  s.provenance = "test";
  s.attributes["gain"] = 0.1;
  return s;
}

MotionSample pose_sample() {
  const auto human = body::default_human_model();
  return from_human_pose(retarget::synthetic_walk(human, 12, 1.0, 0.2, 3), human.joint_count());
}

template <class E>
std::string error_of(const std::string& bytes) {
  try {
    decode_sample(bytes);
  } catch (const E& e) {
    return e.what();
  }
  return "<no error>";
}

}  // namespace

TEST_CASE("text and binary encodings round-trip bit for bit") {
  for (const auto& s : {random_actions(9, 1), pose_sample()}) {
    for (auto enc : {Encoding::Text, Encoding::Binary}) {
      const auto back = decode_sample(encode_sample(s, enc));
      CHECK(back == s);
    }
  }
  const auto dir = std::filesystem::temp_directory_path() / "hmx_test_io";
  std::filesystem::create_directories(dir);
  const auto s = random_actions(5, 2);
  write_sample(s, dir / "a.hmx", Encoding::Binary);
  CHECK(read_sample(dir / "a.hmx") == s);
}

TEST_CASE("typed views round-trip") {
  const auto s = pose_sample();
  const auto pose = to_human_pose(s);
  CHECK(pose.theta.size() == 12);
  CHECK(from_human_pose(pose, pose.theta[0].size()).arrays == s.arrays);

  tokenizer::TokenSequence t{{3, 0, 63, 64}, 16};
  const auto tokens = to_tokens(decode_sample(encode_sample(from_tokens(t))));
  CHECK(tokens.indices == t.indices);
  CHECK(tokens.source_frames == 16);
}

TEST_CASE("fps must match the kind") {
  auto s = pose_sample();
  s.fps = 30.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  auto text = encode_sample(pose_sample());
  const auto at = text.find("\"fps\":20");
  REQUIRE(at != std::string::npos);
  text.replace(at, 8, "\"fps\":30");
  CHECK(error_of<Error>(text).find("fps") != std::string::npos);
}

TEST_CASE("truncated files report the byte offset") {
  const auto text = encode_sample(random_actions(4, 3));
  const auto msg = error_of<ParseError>(text.substr(0, text.size() / 2));
  CHECK(msg.find("byte") != std::string::npos);

  const auto bin = encode_sample(random_actions(4, 3), Encoding::Binary);
  const auto bmsg = error_of<ParseError>(bin.substr(0, bin.size() - 8));
  CHECK(bmsg.find("byte") != std::string::npos);
}

TEST_CASE("content errors name the field path") {
  auto s = random_actions(6, 4);
  s.arrays["q"].data[41] = std::numeric_limits<double>::quiet_NaN();
  try {
    s.validate();
    FAIL("NaN accepted");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("arrays.q.data[41]") != std::string::npos);
  }

  auto bad_shape = random_actions(6, 4);
  bad_shape.frames = 7;
  CHECK_THROWS_AS(bad_shape.validate(), Error);

  auto text = encode_sample(random_actions(2, 5));
  text.replace(text.find("hmx/1"), 5, "hmx/2");
  CHECK(error_of<Error>(text).find("schema") != std::string::npos);
}

TEST_CASE("config getters, defaults and unused keys") {
  const auto c = Config::parse(
      "hmx-config/1\n"
      "tokenizer.train.epochs 7\n"
      "ppo.clip 0.3\n"
      "pipeline.tokenize yes\n"
      "pipeline.tokenizer models/tok.bin\n",
      "/base");
  CHECK(c.count("tokenizer.train.epochs", 1) == 7);
  CHECK(c.number("ppo.clip", 0.2) == doctest::Approx(0.3));
  CHECK(c.number("ppo.gamma", 0.99) == 0.99);
  CHECK(c.flag("pipeline.tokenize", false));
  CHECK(c.path("pipeline.tokenizer", {}) == std::filesystem::path("/base/models/tok.bin"));
  CHECK_NOTHROW(c.reject_unused());

  const auto typo = Config::parse("hmx-config/1\nppo.clipp 0.3\ntokenizer.window 64\n");
  CHECK_THROWS_AS(typo.reject_unused({"ppo."}, {"ppo.", "tokenizer."}), ValidationError);
  const auto other = Config::parse("hmx-config/1\ntokenizer.window 64\n");
  CHECK_NOTHROW(other.reject_unused({"ppo."}, {"ppo.", "tokenizer."}));
  const auto unknown = Config::parse("hmx-config/1\nfoo.bar 1\n");
  CHECK_THROWS_AS(unknown.reject_unused({"ppo."}, {"ppo."}), ValidationError);

  CHECK_THROWS_AS(Config::parse("hmx-config/1\na 1\na 2\n"), Error);
  CHECK_THROWS_AS(Config::parse("hmx-config/1\na x\n").number("a", 0), Error);
  CHECK_THROWS_AS(Config::parse("hmx-config/1\na -1\n").count("a", 0), Error);
  CHECK_THROWS_AS(Config::parse("other/1\na 1\n"), Error);
}
