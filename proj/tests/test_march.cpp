#include <gtest/gtest.h>
#include <ostream>
#include <string>

#include "support.hpp"

namespace bmsfem {
// readable test names in ctest
inline void PrintTo(Formulation f, std::ostream* os) { *os << to_string(f); }
}  // namespace bmsfem

using namespace bmsfem;
using namespace testing_support;

namespace {
RunPlan small_plan(Formulation f) {
  RunPlan p;
  p.formulation = f;
  p.intervals = 2;
  p.dt = f == Formulation::ipdg ? 2e-4 : 0.01;
  p.steps_per_interval = 5;
  p.substeps = 2;
  p.initial = "sine";
  p.basis.n_perm = 2;
  p.basis.n_candidates = 3;
  p.sampler.n_samples = 4;
  p.sampler.n_sweeps = 4;
  return p;
}
}  // namespace

class FullSpace : public ::testing::TestWithParam<Formulation> {};

TEST_P(FullSpace, FixedTrajectoryReproducesReference) {
  auto mesh = build_hierarchy(8, 8, 2, 2);
  auto field = random_field(mesh, 100.0, 4);
  auto plan = small_plan(GetParam());
  ProblemSource fine(mesh, field, plan, nullptr, ProblemMode::fine_only);
  ProblemSource full(mesh, field, plan, nullptr, ProblemMode::full_space);
  auto ref = reference_trajectory(mesh, fine, plan);
  auto fix = fixed_solution(mesh, full, plan);
  ASSERT_EQ(ref.size(), fix.size());
  for (std::size_t n = 1; n < ref.size(); ++n) {
    ASSERT_GT(ref[n].curr.norm(), 0.0);
    EXPECT_LT(rel_diff(fix[n].curr, ref[n].curr), 1e-10) << "interval end " << n;
  }
}

INSTANTIATE_TEST_SUITE_P(AllFormulations, FullSpace,
                         ::testing::Values(Formulation::cg, Formulation::mixed, Formulation::ipdg),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(March, ZeroDataGivesZeroTrajectory) {
  auto mesh = build_hierarchy(8, 8, 2, 2);
  auto field = random_field(mesh, 10.0, 2);
  for (auto f : {Formulation::cg, Formulation::ipdg}) {
    auto plan = small_plan(f);
    plan.initial = "zero";
    plan.source = 0.0;
    ProblemSource src(mesh, field, plan);
    for (const auto& s : reference_trajectory(mesh, src, plan)) EXPECT_EQ(s.curr.norm(), 0.0);
    for (const auto& s : fixed_solution(mesh, src, plan)) EXPECT_EQ(s.curr.norm(), 0.0);
  }
}

TEST(March, NoCandidatesMeansSamplesEqualFixed) {
  auto mesh = build_hierarchy(8, 8, 2, 2);
  auto field = random_field(mesh, 100.0, 5);
  auto plan = small_plan(Formulation::cg);
  plan.basis.n_candidates = 0;
  for (auto method : {SamplerMethod::sequential, SamplerMethod::gibbs}) {
    plan.method = method;
    ProblemSource src(mesh, field, plan);
    auto res = run_posterior(mesh, src, plan);
    for (const auto& r : res.intervals) {
      EXPECT_NEAR(r.mean_error, r.fixed_error, 1e-12 * (1.0 + r.fixed_error));
      EXPECT_LT(r.stats.std.norm(), 1e-12 * r.fixed.norm());
    }
  }
}

TEST(March, DeterministicForFixedSeed) {
  auto mesh = build_hierarchy(8, 8, 2, 2);
  auto field = random_field(mesh, 100.0, 6);
  auto plan = small_plan(Formulation::cg);
  plan.sampler.threads = 1;
  ProblemSource a(mesh, field, plan), b(mesh, field, plan);
  auto ra = run_posterior(mesh, a, plan);
  plan.sampler.threads = 3;
  auto rb = run_posterior(mesh, b, plan);
  for (std::size_t n = 0; n < ra.intervals.size(); ++n)
    EXPECT_EQ((ra.intervals[n].stats.mean - rb.intervals[n].stats.mean).norm(), 0.0);
}

TEST(March, PreviousVariantRejectsMixed) {
  auto mesh = build_hierarchy(8, 8, 2, 2);
  auto field = uniform_field(mesh, 1.0);
  auto plan = small_plan(Formulation::mixed);
  plan.posterior.variant = PosteriorVariant::around_previous;
  ProblemSource src(mesh, field, plan);
  EXPECT_THROW(run_posterior(mesh, src, plan), ConfigError);
}
