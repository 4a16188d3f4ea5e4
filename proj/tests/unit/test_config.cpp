#include <gtest/gtest.h>

#include "qpising/config.hpp"

using namespace qpising;

namespace {
bool mentions(const ParseResult& r, const std::string& needle, int line = -1) {
  for (const auto& e : r.errors)
    if (e.message.find(needle) != std::string::npos && (line < 0 || e.line == line)) return true;
  return false;
}
}  // namespace

TEST(Config, Defaults) {
  const ParseResult r = parse_config("");
  ASSERT_TRUE(r.ok()) << r.report();
  const RunConfig& c = r.config;
  EXPECT_FALSE(c.beta.has_value());
  EXPECT_EQ(c.generation, 9);
  EXPECT_EQ(c.box().L0, 55);
  EXPECT_NEAR(c.omega[0], golden_mean(), 1e-15);
  EXPECT_EQ(c.rg.gamma, 5.0);
  EXPECT_EQ(c.format, "csv");
}

TEST(Config, RoundTrip) {
  const std::string text =
      "# comment\n[model]\nJ0 = 1.0\nJ1 = 0.8\nbeta = 0.43\nlambda = 0.1\npreset = bidimensional\n"
      "theta00 = 0.3\n[box]\nL0 = 21\nL1 = 13\n[scan]\nlambdas = 0.05, 0.2\n[output]\nformat = json\n";
  const ParseResult r = parse_config(text);
  ASSERT_TRUE(r.ok()) << r.report();
  EXPECT_EQ(*r.config.beta, 0.43);
  EXPECT_EQ(r.config.lambdas, (std::vector<double>{0.05, 0.2}));
  const ParseResult again = parse_config(emit_config(r.config));
  ASSERT_TRUE(again.ok()) << again.report();
  EXPECT_TRUE(again.config == r.config);
  EXPECT_EQ(emit_config(again.config), emit_config(r.config));
}

TEST(Config, CustomHarmonicsRoundTrip) {
  const ParseResult r =
      parse_config("[model]\nlambda = 0.1\npreset = custom\nharmonics = 1 0 1 0.5 0; 0 1 1 0.25 0.1\n");
  ASSERT_TRUE(r.ok()) << r.report();
  const ParseResult again = parse_config(emit_config(r.config));
  ASSERT_TRUE(again.ok()) << again.report();
  EXPECT_TRUE(again.config == r.config);
}

TEST(Config, CriticalBeta) {
  const ParseResult r = parse_config("[model]\nbeta = critical\n");
  ASSERT_TRUE(r.ok());
  EXPECT_FALSE(r.config.beta.has_value());
  EXPECT_TRUE(mentions(parse_config("[model]\nbeta = -1\n"), "model.beta", 2));
}

TEST(Config, UnknownKeyAndSection) {
  const ParseResult r = parse_config("[model]\nJ2 = 1\n[fancy]\nx = 1\n");
  EXPECT_TRUE(mentions(r, "unknown key 'model.J2'", 2));
  EXPECT_TRUE(mentions(r, "unknown section [fancy]", 3));
}

TEST(Config, DuplicateKeyNamesBothLines) {
  const ParseResult r = parse_config("[model]\nJ0 = 1\nlambda = 0.1\nJ0 = 2\n");
  EXPECT_TRUE(mentions(r, "duplicate key 'model.J0' on lines 2 and 4"));
}

TEST(Config, ReportsEveryIssue) {
  const ParseResult r = parse_config("[model]\nJ0 = abc\nomega0 = 1.5\n[rg]\ngamma = 0.5\n[output]\nformat = xml\n");
  EXPECT_GE(r.errors.size(), 4u);
  EXPECT_TRUE(mentions(r, "invalid value 'abc'", 2));
  EXPECT_TRUE(mentions(r, "model.omega0 must lie in (0, 1)", 3));
  EXPECT_TRUE(mentions(r, "rg.gamma", 5));
  EXPECT_TRUE(mentions(r, "output.format", 7));
  EXPECT_NE(r.report().find("line 2: "), std::string::npos);
}

TEST(Config, HarmonicOutsideBoxWindow) {
  const ParseResult r = parse_config("[model]\nlambda = 0.1\npreset = custom\nharmonics = 1 0 9 0.5 0\n[box]\nL0 = 8\nL1 = 8\n");
  EXPECT_TRUE(mentions(r, "|n0| <= 4, |n1| <= 4"));
}

TEST(Config, ModulationMakingBondsNonPositiveRejected) {
  const ParseResult r = parse_config("[model]\nlambda = 1.5\n");
  EXPECT_TRUE(mentions(r, "model rejected", 2));
}

TEST(Config, BoxChoiceIsExclusive) {
  EXPECT_TRUE(mentions(parse_config("[box]\ngeneration = 6\nL0 = 8\nL1 = 8\n"), "either box.generation"));
  EXPECT_TRUE(mentions(parse_config("[box]\nL0 = 8\n"), "both be positive"));
}

TEST(Hash, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
  EXPECT_NE(fnv1a_hex("[model]"), fnv1a_hex("[model] "));
}
