#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "support.hpp"

using namespace bmsfem;
using namespace testing_support;

namespace {
Config parse(const std::string& text, bool env = false) {
  std::istringstream in(text);
  return Config::parse(in, env);
}
std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}
const std::string kMinimal = "formulation = cg\ngrid.fine = 20x10\ngrid.coarse = 4x2\n";
}  // namespace

TEST(Config, DefaultsAndRequiredKeys) {
  auto c = parse(kMinimal);
  EXPECT_EQ(c.get_grid("grid.fine"), std::make_pair(20, 10));
  EXPECT_DOUBLE_EQ(c.get_real("bayes.sigma_L"), 1e-3);
  EXPECT_EQ(c.get_int("sampler.sweeps"), 30);
  EXPECT_EQ(c.get("sampler.method"), "gibbs");
  auto plan = plan_from_config(c);
  EXPECT_EQ(plan.formulation, Formulation::cg);
  EXPECT_EQ(plan.basis.buffer, 4);
  auto mesh = mesh_from_config(c);
  EXPECT_EQ(mesh.num_fine_cells(), 200);
}

TEST(Config, CommentsAndWhitespace) {
  auto c = parse("# header\n\n  formulation =  ipdg  # trailing\ngrid.fine=10x10\ngrid.coarse = 2X2\n");
  EXPECT_EQ(c.get("formulation"), "ipdg");
  EXPECT_EQ(c.get_grid("grid.coarse"), std::make_pair(2, 2));
}

TEST(Config, UnknownKeyReportsLine) {
  const auto msg = error_of(kMinimal + "\nbasis.nperm = 3\n");
  EXPECT_NE(msg.find("line 5"), std::string::npos) << msg;
  EXPECT_NE(msg.find("unknown key 'basis.nperm'"), std::string::npos) << msg;
}

TEST(Config, TypeMismatchesAreRejected) {
  EXPECT_NE(error_of(kMinimal + "basis.n_perm = two\n").find("line 4"), std::string::npos);
  EXPECT_FALSE(error_of(kMinimal + "bayes.sigma_L = fast\n").empty());
  EXPECT_FALSE(error_of(kMinimal + "formulation = fem\n").empty());
  EXPECT_FALSE(error_of("grid.fine = 10by10\n").empty());
  EXPECT_FALSE(error_of(kMinimal + "no equals sign\n").empty());
}

TEST(Config, MissingRequiredKey) {
  auto c = parse("formulation = cg\ngrid.fine = 10x10\n");
  EXPECT_THROW(c.require(), ConfigError);
  EXPECT_THROW(c.get("grid.coarse"), ConfigError);
}

TEST(Config, EnvironmentOverridesFile) {
  EXPECT_EQ(env_name("bayes.sigma_L"), "BMSFEM_BAYES_SIGMA_L");
  ::setenv("BMSFEM_SAMPLER_SWEEPS", "77", 1);
  auto with = parse(kMinimal + "sampler.sweeps = 5\n", true);
  auto without = parse(kMinimal + "sampler.sweeps = 5\n", false);
  ::unsetenv("BMSFEM_SAMPLER_SWEEPS");
  EXPECT_EQ(with.get_int("sampler.sweeps"), 77);
  EXPECT_EQ(without.get_int("sampler.sweeps"), 5);
}

TEST(Config, AssignmentOverride) {
  auto c = parse(kMinimal);
  c.set_assignment("basis.n_perm=5");
  EXPECT_EQ(c.get_int("basis.n_perm"), 5);
  EXPECT_THROW(c.set_assignment("basis.n_perm"), ConfigError);
  EXPECT_THROW(c.set_assignment("nonsense=1"), ConfigError);
}

TEST(Config, BufferAcceptsAllOrCount) {
  auto c = parse(kMinimal + "basis.buffer = all\n");
  EXPECT_EQ(plan_from_config(c).basis.buffer, kAllSnapshots);
  c.set("basis.buffer", "7");
  EXPECT_EQ(plan_from_config(c).basis.buffer, 7);
  c.set("basis.buffer", "some");
  EXPECT_THROW(plan_from_config(c), ConfigError);
}

TEST(Config, ManifestListsEveryKey) {
  auto c = parse(kMinimal);
  std::ostringstream out;
  write_manifest(out, c, "sample");
  const auto text = out.str();
  EXPECT_NE(text.find("command = sample"), std::string::npos);
  for (const auto& k : config_keys()) EXPECT_NE(text.find(k.name + " = "), std::string::npos) << k.name;
}

namespace {
BasisCatalog small_catalog() {
  auto mesh = build_hierarchy(8, 8, 2, 2);
  BasisOptions opt;
  opt.n_perm = 2;
  opt.n_candidates = 2;
  return build_cg_catalog(mesh, random_field(mesh, 50.0, 3), opt, 11);
}
}  // namespace

TEST(BasisCache, RoundTripIsBitExact) {
  auto cat = small_catalog();
  std::stringstream buf;
  write_basis_cache(buf, cat);
  auto back = read_basis_cache(buf);
  ASSERT_EQ(back.regions.size(), cat.regions.size());
  EXPECT_EQ(back.formulation, cat.formulation);
  for (std::size_t r = 0; r < cat.regions.size(); ++r) {
    EXPECT_EQ(back.regions[r].support, cat.regions[r].support);
    EXPECT_EQ(back.regions[r].region.blocks, cat.regions[r].region.blocks);
    EXPECT_EQ(back.regions[r].permanent, cat.regions[r].permanent);
    EXPECT_EQ(back.regions[r].candidates, cat.regions[r].candidates);
    EXPECT_EQ(back.regions[r].test, cat.regions[r].test);
    EXPECT_EQ(back.regions[r].eigenvalues, cat.regions[r].eigenvalues);
  }
}

TEST(BasisCache, TruncatedAndForeignFilesFail) {
  auto cat = small_catalog();
  std::stringstream buf;
  write_basis_cache(buf, cat);
  const std::string bytes = buf.str();
  std::stringstream cut(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read_basis_cache(cut), LoadError);
  std::stringstream foreign("NOTACACHEFILE-------");
  EXPECT_THROW(read_basis_cache(foreign), LoadError);
  EXPECT_THROW(load_basis_cache("/nonexistent/cache.bin"), LoadError);
}
