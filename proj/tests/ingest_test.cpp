/* Copyright 2026 The Clipmap Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "clipmap/ingest.hpp"
#include "test_support.hpp"

namespace clipmap {
namespace {

using testing::TempDir;

FeatureManifest small_manifest(std::size_t clips, std::size_t dim) {
  FeatureManifest m;
  m.dim = dim;
  m.blob_path = "blob.f32";
  m.videos.push_back({"a", 30.0, static_cast<std::int64_t>(clips) * 32, ""});
  for (std::size_t i = 0; i < clips; ++i)
    m.clips.push_back({"a", static_cast<std::int64_t>(i), static_cast<std::int64_t>(i) * 32,
                       static_cast<std::int64_t>(i + 1) * 32});
  return m;
}

void write_json(const std::filesystem::path& p, const nlohmann::json& j) {
  std::ofstream(p) << j.dump(2);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(LoadDataset, ThreeClipsFourDims) {
  TempDir dir;
  write_json(dir / "m.json", to_json(small_manifest(3, 4)));
  write_features(dir / "blob.f32", testing::random_matrix(3, 4, 1));
  EXPECT_EQ(std::filesystem::file_size(dir / "blob.f32"), 48u);
  const Dataset ds = load_dataset(dir / "m.json");
  EXPECT_EQ(ds.size(), 3u);
  EXPECT_EQ(ds.dim(), 4u);
  EXPECT_EQ(ds.clips[2].id, (ClipId{"a", 2}));
  EXPECT_TRUE(ds.find({"a", 1}).has_value());
}

TEST(LoadDataset, SizeMismatchIsFormatError) {
  TempDir dir;
  write_json(dir / "m.json", to_json(small_manifest(3, 4)));
  std::ofstream(dir / "blob.f32", std::ios::binary) << std::string(47, '\0');
  EXPECT_THROW(load_dataset(dir / "m.json"), FormatError);
}

TEST(LoadDataset, NaNRowNamesClip) {
  TempDir dir;
  write_json(dir / "m.json", to_json(small_manifest(3, 4)));
  Matrix f = testing::random_matrix(3, 4, 1);
  f(1, 2) = std::numeric_limits<double>::quiet_NaN();
  write_features(dir / "blob.f32", f);
  try {
    load_dataset(dir / "m.json");
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("clip_index 1"), std::string::npos) << e.what();
  }
}

TEST(LoadDataset, SchemaErrors) {
  TempDir dir;
  auto m = to_json(small_manifest(2, 2));
  m["dim"] = 0;
  write_json(dir / "zero.json", m);
  EXPECT_THROW(read_manifest(dir / "zero.json"), FormatError);
  m["dim"] = 2;
  m["dtype"] = "f64le";
  write_json(dir / "dtype.json", m);
  EXPECT_THROW(read_manifest(dir / "dtype.json"), FormatError);
  m.erase("dtype");
  m.erase("clips");
  write_json(dir / "noclips.json", m);
  EXPECT_THROW(read_manifest(dir / "noclips.json"), FormatError);
  EXPECT_THROW(read_manifest(dir / "missing.json"), IoError);
}

TEST(LoadDataset, OverlappingClipsRejected) {
  TempDir dir;
  auto m = small_manifest(2, 2);
  m.clips[1].start_frame = 16;
  m.clips[1].end_frame = 48;
  write_json(dir / "m.json", to_json(m));
  write_features(dir / "blob.f32", Matrix(2, 2));
  EXPECT_THROW(load_dataset(dir / "m.json"), ValidationError);
}

TEST(LoadDataset, MissingThumbnailIsIoError) {
  TempDir dir;
  auto m = small_manifest(2, 2);
  m.thumbnails["a:0"] = "thumbs/a_0.jpg";
  write_json(dir / "m.json", to_json(m));
  write_features(dir / "blob.f32", Matrix(2, 2));
  EXPECT_THROW(load_dataset(dir / "m.json"), IoError);
  std::filesystem::create_directories(dir / "thumbs");
  std::ofstream(dir / "thumbs/a_0.jpg") << "jpeg";
  const Dataset ds = load_dataset(dir / "m.json");
  EXPECT_FALSE(ds.clips[0].thumbnail_ref.empty());
  EXPECT_TRUE(ds.clips[1].thumbnail_ref.empty());
}

TEST(LoadDataset, OptionalNormalization) {
  TempDir dir;
  auto m = small_manifest(2, 2);
  m.normalize = true;
  write_json(dir / "m.json", to_json(m));
  write_features(dir / "blob.f32", Matrix(2, 2, std::vector<double>{3, 4, 0, 0}));
  const Dataset ds = load_dataset(dir / "m.json");
  EXPECT_NEAR(ds.features(0, 0), 0.6, 1e-7);
  EXPECT_NEAR(ds.features(0, 1), 0.8, 1e-7);
  EXPECT_EQ(ds.features(1, 0), 0.0);
}

TEST(LoadDataset, VideosTableIsOptional) {
  TempDir dir;
  auto j = to_json(small_manifest(3, 2));
  j.erase("videos");
  write_json(dir / "m.json", j);
  write_features(dir / "blob.f32", Matrix(3, 2));
  const Dataset ds = load_dataset(dir / "m.json");
  EXPECT_EQ(ds.videos.at("a").fps, 30.0);
  EXPECT_EQ(ds.videos.at("a").frame_count, 96);
}

TEST(FeatureBlob, WriteReadIsBitExact) {
  TempDir dir;
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t rows = 1 + rng.below(50), cols = 1 + rng.below(40);
    std::string bytes(rows * cols * 4, '\0');
    for (auto& b : bytes) b = static_cast<char>(rng.below(256));
    // Replace NaN payloads: a float round-trip may canonicalize them.
    for (std::size_t i = 0; i < rows * cols; ++i)
      if ((static_cast<unsigned char>(bytes[4 * i + 3]) & 0x7F) == 0x7F &&
          (static_cast<unsigned char>(bytes[4 * i + 2]) & 0x80))
        bytes[4 * i + 3] = 0x3F;
    std::ofstream(dir / "in.f32", std::ios::binary) << bytes;
    const Matrix m = read_features(dir / "in.f32", rows, cols);
    write_features(dir / "out.f32", m);
    ASSERT_EQ(slurp(dir / "out.f32"), bytes);
  }
}

TEST(FeatureBlob, WriteDatasetRoundTrip) {
  TempDir dir;
  Dataset ds = testing::make_dataset(2, 3, testing::random_matrix(6, 5, 9));
  for (double& v : ds.features.data()) v = static_cast<double>(static_cast<float>(v));
  const auto manifest = write_dataset(ds, dir.path());
  const Dataset back = load_dataset(manifest);
  EXPECT_EQ(back.clips, ds.clips);
  EXPECT_EQ(back.features, ds.features);
  EXPECT_EQ(back.videos, ds.videos);
}

class Refresh : public ::testing::Test {
 protected:
  void SetUp() override {
    base = testing::make_dataset(3, 2, testing::random_matrix(6, 4, 1));
    base_manifest = write_dataset(base, dir / "r0");
    base = load_dataset(base_manifest);
  }
  TempDir dir;
  Dataset base;
  std::filesystem::path base_manifest;
};

TEST_F(Refresh, SameClipsNewFeatures) {
  Dataset next = base;
  next.features = testing::random_matrix(6, 4, 2);
  const Dataset refreshed = refresh_features(base, write_dataset(next, dir / "r1"));
  EXPECT_EQ(refreshed.clips, base.clips);
  EXPECT_NE(refreshed.features, base.features);
  EXPECT_EQ(refreshed.feature_round, base.feature_round + 1);
}

TEST_F(Refresh, AddedVideosGrowThePool) {
  Dataset bigger = testing::make_dataset(5, 2, testing::random_matrix(10, 4, 3));
  const Dataset refreshed = refresh_features(base, write_dataset(bigger, dir / "r1"));
  EXPECT_EQ(refreshed.size(), 10u);
  for (const auto& c : base.clips) EXPECT_TRUE(refreshed.find(c.id).has_value());
}

TEST_F(Refresh, DimensionChangeRejected) {
  Dataset narrow = testing::make_dataset(3, 2, testing::random_matrix(6, 2, 3));
  EXPECT_THROW(refresh_features(base, write_dataset(narrow, dir / "r1")), RefreshError);
}

TEST_F(Refresh, MissingClipsListed) {
  Dataset fewer = testing::make_dataset(2, 2, testing::random_matrix(4, 4, 3));
  try {
    refresh_features(base, write_dataset(fewer, dir / "r1"));
    FAIL() << "expected refresh error";
  } catch (const RefreshError& e) {
    EXPECT_NE(std::string(e.what()).find("v0002:0"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("v0002:1"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace clipmap
