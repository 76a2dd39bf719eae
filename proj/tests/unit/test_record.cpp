#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include "ttsgd/record.hpp"

using namespace ttsgd;

TEST(Record, RoundTripIsBitExact) {
  TrajectoryRecord r;
  r.columns = {"t", "a", "b"};
  r.metadata = {{"config_hash", "abc123"}, {"seed", "7"}};
  r.add_row({0.0, 1.0 / 3.0, -2.5e-300});
  r.add_row({0.1, std::numeric_limits<double>::max(), std::nextafter(1.0, 2.0)});
  std::stringstream ss;
  write_csv(r, ss);
  const TrajectoryRecord back = parse_csv(ss);
  EXPECT_EQ(back.columns, r.columns);
  EXPECT_EQ(back.rows, r.rows);
  EXPECT_EQ(back.meta("config_hash"), "abc123");
  EXPECT_EQ(back.meta("seed"), "7");
}

TEST(Record, EmptyRecordWritesHeaderAndMetadataOnly) {
  TrajectoryRecord r;
  r.columns = {"t", "x0"};
  r.metadata = {{"seed", "1"}};
  std::stringstream ss;
  write_csv(r, ss);
  EXPECT_EQ(ss.str(), "# seed: 1\nt,x0\n");
}

TEST(Record, RowWidthChecked) {
  TrajectoryRecord r;
  r.columns = {"t", "x0"};
  EXPECT_THROW(r.add_row({1.0}), DimensionError);
}

TEST(Record, FileRoundTripAndIoErrors) {
  TrajectoryRecord r;
  r.columns = {"t"};
  r.add_row({0.25});
  const auto path = std::filesystem::temp_directory_path() / "ttsgd_record_roundtrip.csv";
  emit_csv(r, path.string());
  EXPECT_EQ(read_csv(path.string()).rows, r.rows);
  std::filesystem::remove(path);
  EXPECT_THROW(emit_csv(r, "/nonexistent-dir/x/y.csv"), IoError);
  EXPECT_THROW(read_csv("/nonexistent-dir/x/y.csv"), IoError);
}

TEST(Record, MalformedLineReported) {
  std::stringstream ss("t,x\n1,2\n3\n");
  EXPECT_THROW(parse_csv(ss), IoError);
  std::stringstream bad("t\nabc\n");
  EXPECT_THROW(parse_csv(bad), IoError);
}
