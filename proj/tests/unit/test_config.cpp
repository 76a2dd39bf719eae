#include <gtest/gtest.h>

#include <string>

#include "ttsgd/config.hpp"
#include "ttsgd/experiment.hpp"

using namespace ttsgd;

namespace {

const char* kSmall = R"(experiment: benes-joint
seeds: [3]
dt: 0.01
horizon: 2
record_every: 50
initial:
  - {mu: 1.0, o: 2.0}
schedules:
  - name: s
    theta: {mu: {gamma0: 1.0, eta: 0.55}}
    o: {o: {gamma0: 1.0, eta: 0.6}}
)";

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg.yaml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsFromReferenceSetup) {
  const ExperimentConfig c = parse_config(kSmall, "cfg.yaml");
  EXPECT_EQ(c.kind, ExperimentKind::benes_joint);
  EXPECT_EQ(c.n_steps(), 200u);
  EXPECT_DOUBLE_EQ(c.theta_truth()(1), 2.0);  // sigma from sigma2 = 4
  EXPECT_DOUBLE_EQ(c.initial[0].theta(2), 0.7);
  EXPECT_EQ(c.schedules[0].theta.per_coord[1].gamma0, 0.0);
  EXPECT_EQ(c.hash.size(), 16u);
}

TEST(Config, UnknownKeyReportsLineAndColumn) {
  const std::string text = std::string(kSmall) + "bogus: 1\n";
  const std::string msg = error_of(text);
  EXPECT_NE(msg.find("cfg.yaml:12:1"), std::string::npos) << msg;
  EXPECT_NE(msg.find("bogus"), std::string::npos);
}

TEST(Config, EmptySeedsRejected) {
  std::string text = kSmall;
  text.replace(text.find("[3]"), 3, "[]");
  EXPECT_NE(error_of(text).find("at least one seed"), std::string::npos);
}

TEST(Config, BadScheduleRejected) {
  std::string text = kSmall;
  text.replace(text.find("eta: 0.55"), 9, "eta: 1.5");
  EXPECT_NE(error_of(text), "");
}

TEST(Config, HashChangesWithBytes) {
  EXPECT_NE(config_hash("a: 1\n"), config_hash("a: 2\n"));
  EXPECT_EQ(config_hash(""), "cbf29ce484222325");
}

TEST(Runner, ParallelMapKeepsOrderAndRethrowsLowestIndex) {
  const auto v = parallel_map<int>(20, 4, [](std::size_t i) { return static_cast<int>(i * i); });
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(v[i], static_cast<int>(i * i));
  try {
    parallel_map<int>(10, 3, [](std::size_t i) -> int {
      if (i == 4 || i == 7) throw DomainError("job " + std::to_string(i));
      return 0;
    });
    FAIL();
  } catch (const DomainError& e) {
    EXPECT_STREQ(e.what(), "job 4");
  }
}

TEST(Runner, WorkerCountDoesNotChangeRecords) {
  const ExperimentConfig c = parse_config(kSmall, "cfg.yaml");
  const auto a = run_experiment(c, 1), b = run_experiment(c, 3);
  ASSERT_EQ(a.runs.size(), b.runs.size());
  for (std::size_t i = 0; i < a.runs.size(); ++i) EXPECT_EQ(a.runs[i].record.rows, b.runs[i].record.rows);
  EXPECT_EQ(a.runs[0].record.meta("seed"), "3");
}

TEST(Runner, AverageRejectsMisalignedGrids) {
  TrajectoryRecord r1, r2;
  r1.columns = r2.columns = {"t", "x"};
  r1.add_row({0.0, 1.0});
  r2.add_row({0.5, 3.0});
  EXPECT_THROW(average_records({r1, r2}), AlignmentError);
  r2.rows[0][0] = 0.0;
  EXPECT_DOUBLE_EQ(average_records({r1, r2}).rows[0][1], 2.0);
}
