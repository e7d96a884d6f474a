// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <random>
#include <string>

#include "gammaguard/archspec.hpp"

using namespace gammaguard;

namespace {

constexpr const char* kMinimalPreact = R"({
  "name": "tiny",
  "style": "preact",
  "width": 16,
  "stem": {"has_norm": false, "gamma0": 1},
  "stages": [{"blocks": [{"kind": "basic", "downsample": false, "branch_gammas": [1, 0.5]}]}]
})";

int count_downsample(const ArchSpec& s) {
  int n = 0;
  for (const auto& st : s.stages)
    for (const auto& b : st.blocks) n += b.downsample ? 1 : 0;
  return n;
}

}  // namespace

TEST(ArchSpecParse, MinimalPreact) {
  const ArchSpec s = parse_arch(kMinimalPreact);
  EXPECT_EQ(s.style, Style::PreAct);
  ASSERT_EQ(s.stages.size(), 1u);
  ASSERT_EQ(s.stages[0].blocks.size(), 1u);
  EXPECT_DOUBLE_EQ(s.stages[0].blocks[0].gamma_last(), 0.5);
  EXPECT_EQ(s.width, 16);
}

TEST(ArchSpecParse, SyntaxErrorReportsOffset) {
  try {
    parse_arch("{\"name\": \"x\",, }");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_GT(e.offset(), 0u);
  }
}

TEST(ArchSpecParse, V1DownsampleWithoutGammaDownNamesBlock) {
  ArchSpec s = build_canonical("resnet18", 1.0);
  std::string text = serialize(s);
  const std::string key = "\"gamma_down\": 1";
  const auto pos = text.find(key);
  ASSERT_NE(pos, std::string::npos);
  // drop ",\n          \"gamma_down\": 1" from the first downsample block
  const auto comma = text.rfind(',', pos);
  text.erase(comma, pos + key.size() - comma);
  try {
    parse_arch(text);
    FAIL() << "expected SpecError";
  } catch (const SpecError& e) {
    EXPECT_NE(std::string(e.what()).find("stages[1].blocks[0]"), std::string::npos) << e.what();
  }
}

TEST(ArchSpecParse, RejectsUnknownKeysAndBadValues) {
  const std::string base = kMinimalPreact;
  auto with = [&](const std::string& from, const std::string& to) {
    std::string t = base;
    t.replace(t.find(from), from.size(), to);
    return t;
  };
  EXPECT_THROW(parse_arch(with("\"width\": 16", "\"width\": 16, \"depth\": 3")), SpecError);
  EXPECT_THROW(parse_arch(with("\"width\": 16", "\"width\": 16.5")), SpecError);
  EXPECT_THROW(parse_arch(with("[1, 0.5]", "[1, -0.5]")), SpecError);
  EXPECT_THROW(parse_arch(with("[1, 0.5]", "[1, 0.5, 1]")), SpecError);
  EXPECT_THROW(parse_arch(with("\"preact\"", "\"densenet\"")), SpecError);
  EXPECT_THROW(parse_arch(with("\"has_norm\": false", "\"has_norm\": true")), SpecError);
  EXPECT_THROW(parse_arch(with("\"basic\"", "\"txblock\"")), SpecError);
}

TEST(ArchSpecCanonical, ResNet18Topology) {
  const ArchSpec s = build_canonical("resnet18", 1.0);
  EXPECT_EQ(s.block_count(), 8u);
  EXPECT_EQ(count_downsample(s), 3);
  EXPECT_TRUE(s.stem.has_norm);
  for (const auto& st : s.stages)
    for (const auto& b : st.blocks) EXPECT_EQ(b.kind, BlockKind::Basic);
}

TEST(ArchSpecCanonical, ResNet50Topology) {
  const ArchSpec s = build_canonical("resnet50", 1.0);
  EXPECT_EQ(s.block_count(), 16u);
  EXPECT_EQ(count_downsample(s), 4);
  EXPECT_EQ(enumerate_gammas(s).size(), 53u);
}

TEST(ArchSpecCanonical, PreActStemHasNoNorm) {
  const ArchSpec s = build_canonical("preact18", 1.0);
  EXPECT_FALSE(s.stem.has_norm);
  const auto g = enumerate_gammas(s);
  EXPECT_EQ(g.size(), 16u);
  for (const auto& e : g) EXPECT_NE(e.path.kind, ParamPath::Kind::Stem);
}

TEST(ArchSpecCanonical, EnumerationCounts) {
  EXPECT_EQ(enumerate_gammas(build_canonical("resnet18", 1.0)).size(), 20u);
  EXPECT_EQ(enumerate_gammas(build_canonical("resnet34", 1.0)).size(), 1u + 16u * 2 + 3u);
  EXPECT_EQ(enumerate_gammas(build_canonical("resnet101", 1.0)).size(), 1u + 33u * 3 + 4u);
  EXPECT_EQ(enumerate_gammas(build_canonical("txstack:3", 1.0)).size(), 6u);
}

TEST(ArchSpecCanonical, UnknownName) {
  EXPECT_THROW(build_canonical("resnet19", 1.0), std::invalid_argument);
  EXPECT_THROW(build_canonical("txstack:0", 1.0), std::invalid_argument);
  EXPECT_THROW(build_canonical("txstack:x", 1.0), std::invalid_argument);
  EXPECT_THROW(build_canonical("resnet18", 0.0), std::invalid_argument);
}

TEST(ArchSpecSerialize, RoundTripEveryCanonical) {
  for (std::string name : canonical_names()) {
    if (name.rfind("txstack", 0) == 0) name = "txstack:5";
    const ArchSpec s = build_canonical(name, 1.0);
    const std::string text = serialize(s);
    EXPECT_EQ(parse_arch(text), s) << name;
    EXPECT_EQ(serialize(parse_arch(text)), text) << name;
  }
}

TEST(ArchSpecSerialize, RoundTripRandomGammas) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (const char* name : {"resnet18", "resnet50", "preact18", "txstack:4"}) {
    for (int rep = 0; rep < 20; ++rep) {
      ArchSpec s = build_canonical(name, 1.0);
      for (const auto& e : enumerate_gammas(s)) s = with_gamma(s, e.path, u(rng));
      EXPECT_EQ(parse_arch(serialize(s)), s) << name;
    }
  }
}

TEST(ArchSpecSerialize, FieldFidelity) {
  const ParamPath p = ParamPath::parse("stage2.block1.norm0.gamma");
  const ArchSpec s = with_gamma(build_canonical("resnet18", 1.0), p, 0.5);
  const std::string text = serialize(s);
  EXPECT_NE(text.find("0.5"), std::string::npos);
  const ArchSpec back = parse_arch(text);
  EXPECT_DOUBLE_EQ(back.stages[2].blocks[1].branch_gammas[0], 0.5);
  for (const auto& e : enumerate_gammas(back)) {
    EXPECT_DOUBLE_EQ(e.value, e.path == p ? 0.5 : 1.0) << e.path.str();
  }
}

TEST(ArchSpecSerialize, Deterministic) {
  const ArchSpec s = build_canonical("resnet50", 0.25);
  EXPECT_EQ(serialize(s), serialize(s));
}

TEST(ParamPathText, RoundTrip) {
  for (const char* name : {"resnet50", "preact50", "txstack:2"}) {
    for (const auto& e : enumerate_gammas(build_canonical(name, 1.0))) {
      EXPECT_EQ(ParamPath::parse(e.path.str()), e.path) << e.path.str();
    }
  }
}

TEST(ParamPathText, RejectsMalformed) {
  for (const char* bad : {"", "stem.gamma", "stage01.block0.norm0.gamma", "stage0.block0.norm.gamma",
                          "stage0.block0.norm0", "stage-1.block0.norm0.gamma",
                          "stage0.block0.down.norm.gammas"}) {
    EXPECT_THROW(ParamPath::parse(bad), std::invalid_argument) << bad;
  }
}
