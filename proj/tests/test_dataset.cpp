// Copyright 2026 The tawt-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <sstream>

#include <gtest/gtest.h>

#include "tawt/dataset.hpp"
#include "test_util.hpp"

using namespace tawt;

TEST(Dataset, Invariants) {
  EXPECT_THROW(Dataset(0, 3), DimensionError);
  EXPECT_THROW(Dataset(2, 3, Vector{0.1, 0.2, 0.3}, {0}), DimensionError);
  EXPECT_THROW(Dataset(1, 3, Vector{0.1}, {3}), IndexError);
  Dataset d(2, 3);
  EXPECT_TRUE(d.empty());
  EXPECT_THROW(d.push_back(Vector{1.0}, 0), DimensionError);
  EXPECT_THROW(d.push_back(Vector{1.0, 2.0}, 5), IndexError);
  d.push_back(Vector{1.0, 2.0}, 2);
  EXPECT_EQ(d.size(), 1u);
  EXPECT_EQ(d.y(0), 2u);
}

TEST(Dataset, SubsetAndHead) {
  Rng rng(3);
  const Dataset d = tawt::testing::random_dataset(10, 3, 4, rng, 77);
  const std::vector<std::size_t> rows{4, 1, 4};
  const Dataset s = d.subset(rows);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s.task_id(), 77u);
  EXPECT_EQ(s.y(0), d.y(4));
  EXPECT_EQ(s.x(1)[2], d.x(1)[2]);
  const Dataset h = d.head(6);
  EXPECT_EQ(h.size(), 6u);
  EXPECT_EQ(h.x(5)[0], d.x(5)[0]);
  EXPECT_THROW(d.head(11), IndexError);
  const std::vector<std::size_t> bad{10};
  EXPECT_THROW(d.subset(bad), IndexError);
}

TEST(DatasetCsv, RoundTripIsExact) {
  Rng rng(4);
  const Dataset d = tawt::testing::random_dataset(25, 5, 3, rng, 9);
  std::stringstream ss;
  write_dataset_csv(ss, d);
  const Dataset back = read_dataset_csv(ss, 9);
  EXPECT_EQ(back, d);
}

TEST(DatasetCsv, EmptyRoundTrip) {
  const Dataset d(4, 2);
  std::stringstream ss;
  write_dataset_csv(ss, d);
  EXPECT_EQ(ss.str(), "0,4,2\n");
  EXPECT_EQ(read_dataset_csv(ss), d);
}

TEST(DatasetCsv, MalformedInput) {
  {
    std::stringstream ss("2,1,2\n0.5,1\n");
    EXPECT_THROW(read_dataset_csv(ss), IoError);
  }
  {
    std::stringstream ss("1,2,2\n0.5,1\n");
    EXPECT_THROW(read_dataset_csv(ss), IoError);
  }
  {
    std::stringstream ss("1,1,2\nabc,1\n");
    EXPECT_THROW(read_dataset_csv(ss), IoError);
  }
  {
    std::stringstream ss("1,1,2\n0.5,7\n");
    EXPECT_THROW(read_dataset_csv(ss), IndexError);
  }
}
