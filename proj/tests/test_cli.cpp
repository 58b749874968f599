#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {
int run(const std::string& args) {
  const std::string cmd = std::string(BMSFEM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class CliRun : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("bmsfem_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    std::ofstream(config()) << "formulation = cg\n"
                               "grid.fine = 10x10\n"
                               "grid.coarse = 2x2\n"
                               "basis.n_perm = 2\n"
                               "basis.n_candidates = 2\n"
                               "sampler.samples = 3\n"
                               "sampler.sweeps = 3\n";
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string config() const { return (dir_ / "run.conf").string(); }
  std::string out() const { return (dir_ / "out").string(); }
  fs::path dir_;
};
}  // namespace

TEST_F(CliRun, SampleWritesTheDocumentedLayout) {
  ASSERT_EQ(run("sample --method gibbs -q -c " + config() + " -o " + out()), 0);
  const fs::path d = fs::path(out()) / "sample-gibbs";
  for (const char* f : {"summary.csv", "residual.csv", "error.csv", "basis_count.csv", "frequency.csv",
                        "records.csv", "manifest.txt", "mean_t1.csv", "std_t1.csv", "reference_t1.csv"})
    EXPECT_TRUE(fs::exists(d / f)) << f;
  EXPECT_EQ(run("stats " + d.string()), 0);
}

TEST_F(CliRun, CompareTwoMethods) {
  ASSERT_EQ(run("sample --method gibbs -q -c " + config() + " -o " + out()), 0);
  ASSERT_EQ(run("sample --method sequential -q -c " + config() + " -o " + out()), 0);
  const fs::path d(out());
  EXPECT_EQ(run("compare " + (d / "sample-gibbs").string() + " " + (d / "sample-sequential").string() +
                " -o " + out()),
            0);
  EXPECT_TRUE(fs::exists(d / "compare.csv"));
}

TEST_F(CliRun, OtherSubcommandsSucceed) {
  EXPECT_EQ(run("generate-field -q -c " + config() + " -o " + out() + " --output " + (dir_ / "k.txt").string()), 0);
  EXPECT_EQ(run("reference -q -c " + config() + " -o " + out()), 0);
  EXPECT_EQ(run("basis -q -c " + config() + " -o " + out()), 0);
  EXPECT_EQ(run("fixed -q -c " + config() + " -o " + out()), 0);
}

TEST_F(CliRun, ExitCodes) {
  EXPECT_EQ(run("--version"), 0);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("sample --method metropolis -c " + config()), 1);
  EXPECT_EQ(run("sample -q -c " + config() + " --set basis.nperm=3 -o " + out()), 1);
  EXPECT_EQ(run("sample -q -c " + (dir_ / "missing.conf").string() + " -o " + out()), 1);
  std::ofstream(dir_ / "bad_field.txt") << "1 2 3\n";
  EXPECT_NE(run("reference -q -c " + config() + " --set field.path=" + (dir_ / "bad_field.txt").string() +
                " -o " + out()),
            0);
}
