#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "thermochaos/config.hpp"
#include "thermochaos/random.hpp"

using namespace thermochaos;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool has_issue(const ConfigResult& r, const std::string& path, const std::string& fragment) {
  for (const auto& i : r.issues) {
    if (i.path == path && i.message.find(fragment) != std::string::npos) return true;
  }
  return false;
}

RunConfig random_config(RandomStream& r) {
  RunConfig c;
  c.d = 1 + static_cast<int>(r.below(3));
  c.N.clear();
  for (std::uint32_t k = 0, n = 1 + r.below(4); k < n; ++k) c.N.push_back(1 + r.below(100000));
  c.E.assign(static_cast<std::size_t>(c.d), 0.0);
  for (auto& x : c.E) x = r.normal();
  c.u_tilde = 0.1 + 5.0 * r.uniform();
  c.j0.assign(static_cast<std::size_t>(c.d), 0.0);
  for (auto& x : c.j0) x = 0.5 * std::sqrt(c.u_tilde / c.d) * (2.0 * r.uniform() - 1.0);
  c.initial = r.uniform() < 0.5 ? "gaussian" : "shell";
  c.horizon = 0.5 + 10.0 * r.uniform();
  c.sample_dt = 0.1 * r.uniform();
  c.dt = r.uniform() < 0.5 ? 0.0 : 1e-3 * r.uniform();
  c.seeds = 20 + r.below(50);
  c.master_seed = r.next_u32();
  c.threads = 1 + r.below(8);
  c.out_dir = "out/run" + std::to_string(r.below(100));
  c.format = r.uniform() < 0.5 ? "csv" : "jsonl";
  c.vbe.M = 2 * (1 + r.below(2048));
  c.vbe.v_max = r.uniform() < 0.5 ? 0.0 : 4.0 + 8.0 * r.uniform();
  c.vbe.cfl = 0.05 + 0.8 * r.uniform();
  c.metrics.gap_time = c.horizon * r.uniform();
  c.metrics.n_directions = 1 + r.below(128);
  c.metrics.bootstrap = 2 + r.below(1000);
  if (r.uniform() < 0.3) {
    c.kernel.type = "table";
    c.kernel.nodes = {-1.0, -0.2, 0.4, 1.0};
    c.kernel.values = {r.uniform() + 0.1, r.uniform() + 0.1, r.uniform() + 0.1, r.uniform() + 0.1};
  }
  return c;
}

}  // namespace

TEST(Config, EmptyDocumentGivesDefaults) {
  const auto r = validate_config("");
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(*r.config, RunConfig{});
  EXPECT_EQ(r.config->vbe_v_max(), 6.0);
}

TEST(Config, ZeroParticlesRejected) {
  const auto r = validate_config("d = 2\nN = [100, 0]\n");
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(has_issue(r, "N[1]", "N must be >= 1"));
  EXPECT_EQ(r.issues.front().line, 2u);
  EXPECT_NE(r.issues.front().format().find("(line 2)"), std::string::npos);
}

TEST(Config, NegativeKernelValueNamesTheNode) {
  const auto r = validate_config(
      "d = 2\n[kernel]\ntype = \"table\"\nnodes = [-1.0, 0.0, 1.0]\nvalues = [1.0, -0.5, 1.0]\n");
  EXPECT_FALSE(r.ok());
  bool found = false;
  for (const auto& i : r.issues) found = found || i.message.find("node 1") != std::string::npos;
  EXPECT_TRUE(found);
}

TEST(Config, UnknownKeysAndBadTypes) {
  const auto r = validate_config("d = 2\ncolour = 3\n[vbe]\nM = 7\nspeed = 1\n");
  EXPECT_TRUE(has_issue(r, "colour", "unknown key"));
  EXPECT_TRUE(has_issue(r, "vbe.speed", "unknown key"));
  EXPECT_TRUE(has_issue(r, "vbe.M", "even"));

  const auto t = validate_config("d = \"two\"\nE = [1.0, 2.0, 3.0]\nu_tilde = -1.0\n");
  EXPECT_TRUE(has_issue(t, "d", "integer"));
  EXPECT_TRUE(has_issue(t, "u_tilde", "> 0"));

  const auto e = validate_config("d = 3\nE = [1.0, 0.0]\nj0 = [0.0, 0.0, 0.0]\n");
  EXPECT_TRUE(has_issue(e, "E", "exactly d = 3"));

  const auto j = validate_config("d = 1\nE = [1.0]\nj0 = [2.0]\n");
  EXPECT_TRUE(has_issue(j, "j0", "sqrt(u_tilde)"));

  const auto syntax = validate_config("d = 2\nN = [1, 2\n");
  ASSERT_FALSE(syntax.ok());
  EXPECT_GT(syntax.issues.front().line, 0u);
}

TEST(Config, ParseConfigThrowsWithAllIssues) {
  try {
    parse_config("d = 5\nhorizon = -1.0\n");
    FAIL() << "invalid config accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::config);
    const std::string what = e.what();
    EXPECT_NE(what.find("d must be 1, 2 or 3"), std::string::npos);
    EXPECT_NE(what.find("horizon must be > 0"), std::string::npos);
  }
}

TEST(Config, ShippedConfigsRoundTrip) {
  std::size_t count = 0;
  for (const auto& entry : std::filesystem::directory_iterator(THERMOCHAOS_CONFIG_DIR)) {
    if (entry.path().extension() != ".toml") continue;
    ++count;
    const auto r = validate_config(slurp(entry.path()));
    ASSERT_TRUE(r.ok()) << entry.path() << ": " << (r.issues.empty() ? "" : r.issues.front().format());
    const std::string text = serialize_config(*r.config);
    EXPECT_EQ(parse_config(text), *r.config) << entry.path();
    EXPECT_EQ(serialize_config(parse_config(text)), text);
  }
  EXPECT_GE(count, 5u);
}

TEST(Config, RandomConfigsRoundTrip) {
  RandomStream r(17, Purpose::test);
  for (int k = 0; k < 200; ++k) {
    const RunConfig c = random_config(r);
    const std::string text = serialize_config(c);
    const auto back = validate_config(text);
    ASSERT_TRUE(back.ok()) << text << (back.issues.empty() ? "" : back.issues.front().format());
    ASSERT_EQ(*back.config, c) << text;
    EXPECT_EQ(config_hash(*back.config), config_hash(c));
  }
}

TEST(Config, HashSeparatesConfigs) {
  RunConfig a, b;
  b.master_seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(hex64(config_hash(a)).size(), 16u);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

TEST(Config, MutatedInputNeverCrashes) {
  const std::string base = slurp(std::filesystem::path(THERMOCHAOS_CONFIG_DIR) / "sweep_d2.toml");
  const std::string alphabet = "=[]{}\",.#-+e0123456789abcdxyzNEd \n\t";
  RandomStream r(23, Purpose::test);
  for (int k = 0; k < 2000; ++k) {
    std::string s = base;
    for (std::uint32_t m = 0, n = 1 + r.below(6); m < n; ++m) {
      const std::size_t pos = r.below(static_cast<std::uint32_t>(s.size()));
      switch (r.below(3)) {
        case 0: s[pos] = alphabet[r.below(static_cast<std::uint32_t>(alphabet.size()))]; break;
        case 1: s.erase(pos, 1 + r.below(4)); break;
        default: s.insert(pos, 1, alphabet[r.below(static_cast<std::uint32_t>(alphabet.size()))]); break;
      }
    }
    ConfigResult res;
    ASSERT_NO_THROW(res = validate_config(s)) << s;
    if (res.ok()) {
      EXPECT_TRUE(res.issues.empty());
      EXPECT_EQ(parse_config(serialize_config(*res.config)), *res.config);
    } else {
      EXPECT_FALSE(res.issues.empty());
    }
  }
}
