#include <gtest/gtest.h>
#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

#include "rcti/rcti.hpp"
#include "test_support.hpp"

using namespace rcti;
using rcti::testing::ScratchDir;

namespace {

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// Two 2x2 images: all zeros and all 255.
std::vector<std::uint8_t> two_images(std::uint32_t magic = 2051) {
  std::vector<std::uint8_t> b;
  put_be32(b, magic);
  put_be32(b, 2);
  put_be32(b, 2);
  put_be32(b, 2);
  for (int i = 0; i < 4; ++i) b.push_back(0);
  for (int i = 0; i < 4; ++i) b.push_back(255);
  return b;
}

std::vector<std::uint8_t> labels(std::vector<std::uint8_t> values) {
  std::vector<std::uint8_t> b;
  put_be32(b, 2049);
  put_be32(b, static_cast<std::uint32_t>(values.size()));
  b.insert(b.end(), values.begin(), values.end());
  return b;
}

LabeledDataset counting_dataset(std::size_t n) {
  LabeledDataset ds;
  ds.images = Tensor({n, 1, 2, 2});
  for (std::size_t i = 0; i < ds.images.size(); ++i) ds.images.data[i] = static_cast<double>(i);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = static_cast<int>(i % 10);
  return ds;
}

// Number of items declared in a gzip IDX file, read independently of the loader.
std::uint32_t gz_header_count(const std::filesystem::path& p) {
  gzFile f = gzopen(p.c_str(), "rb");
  unsigned char h[8];
  const int got = gzread(f, h, 8);
  gzclose(f);
  EXPECT_EQ(got, 8);
  return (std::uint32_t{h[4]} << 24) | (std::uint32_t{h[5]} << 16) | (std::uint32_t{h[6]} << 8) | h[7];
}

}  // namespace

TEST(LoadIdx, EndpointPixelsScaleToZeroAndOne) {
  ScratchDir dir("endpoints");
  write_bytes(dir / "img", two_images());
  write_bytes(dir / "lab", labels({3, 7}));
  const auto ds = load_idx(dir / "img", dir / "lab");
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.images.shape, (Shape{2, 1, 2, 2}));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(ds.images.data[i], 0.0);
  for (int i = 4; i < 8; ++i) EXPECT_EQ(ds.images.data[i], 1.0);
  EXPECT_EQ(ds.labels, (std::vector<int>{3, 7}));
  EXPECT_EQ(ds.provenance.images_path, (dir / "img").string());
}

TEST(LoadIdx, BadMagicIsRejected) {
  ScratchDir dir("magic");
  write_bytes(dir / "img", two_images(2052));
  write_bytes(dir / "lab", labels({3, 7}));
  try {
    load_idx(dir / "img", dir / "lab");
    FAIL() << "expected IdxError";
  } catch (const IdxError& e) {
    EXPECT_NE(std::string(e.what()).find("bad magic"), std::string::npos);
  }
}

TEST(LoadIdx, TruncatedPayloadIsRejected) {
  ScratchDir dir("trunc");
  auto img = two_images();
  img.pop_back();
  write_bytes(dir / "img", img);
  write_bytes(dir / "lab", labels({3, 7}));
  EXPECT_THROW(load_idx(dir / "img", dir / "lab"), IdxError);
}

TEST(LoadIdx, CountMismatchIsRejected) {
  ScratchDir dir("count");
  write_bytes(dir / "img", two_images());
  write_bytes(dir / "lab", labels({3, 7, 1}));
  EXPECT_THROW(load_idx(dir / "img", dir / "lab"), IdxError);
}

TEST(LoadIdx, MissingFileIsAnError) {
  EXPECT_ANY_THROW(load_idx("/nonexistent/img", "/nonexistent/lab"));
}

TEST(LoadIdx, BundledTestFileCountMatchesItsHeader) {
  const auto img = rcti::testing::data_dir() / "t10k-images-idx3-ubyte.gz";
  const auto lab = rcti::testing::data_dir() / "t10k-labels-idx1-ubyte.gz";
  const auto ds = load_idx(img, lab);
  EXPECT_EQ(ds.size(), gz_header_count(img));
  EXPECT_EQ(ds.size(), gz_header_count(lab));
  EXPECT_EQ(ds.images.shape, (Shape{ds.size(), 1, 28, 28}));
  const auto [lo, hi] = std::minmax_element(ds.images.data.begin(), ds.images.data.end());
  EXPECT_GE(*lo, 0.0);
  EXPECT_EQ(*hi, 1.0);
  for (int y : ds.labels) {
    EXPECT_GE(y, 0);
    EXPECT_LT(y, 10);
  }
}

TEST(LoadIdx, MaxIsOneOnlyWhenSomeByteIs255) {
  ScratchDir dir("max");
  std::vector<std::uint8_t> img;
  put_be32(img, 2051);
  put_be32(img, 1);
  put_be32(img, 2);
  put_be32(img, 2);
  for (std::uint8_t v : {0, 10, 254, 128}) img.push_back(v);
  write_bytes(dir / "img", img);
  write_bytes(dir / "lab", labels({1}));
  const auto ds = load_idx(dir / "img", dir / "lab");
  EXPECT_LT(*std::max_element(ds.images.data.begin(), ds.images.data.end()), 1.0);
}

TEST(WriteIdx, RoundTripIsBitIdentical) {
  ScratchDir dir("roundtrip");
  const auto full = load_idx(rcti::testing::data_dir() / "t10k-images-idx3-ubyte.gz",
                             rcti::testing::data_dir() / "t10k-labels-idx1-ubyte.gz");
  const auto ds = subset(full, 50, 1);
  for (const char* ext : {"", ".gz"}) {
    const auto img = dir / (std::string("img") + ext), lab = dir / (std::string("lab") + ext);
    write_idx(ds, img, lab);
    const auto back = load_idx(img, lab);
    EXPECT_EQ(back.images, ds.images) << ext;
    EXPECT_EQ(back.labels, ds.labels) << ext;
    write_idx(back, dir / "img2", dir / "lab2");
    write_idx(ds, dir / "img3", dir / "lab3");
    std::ifstream a(dir / "img2", std::ios::binary), b(dir / "img3", std::ios::binary);
    EXPECT_EQ(std::string(std::istreambuf_iterator<char>(a), {}), std::string(std::istreambuf_iterator<char>(b), {}));
  }
}

TEST(Subset, FullSizeIsAPermutation) {
  const auto ds = counting_dataset(37);
  const auto idx = subset_indices(37, 37, 5);
  std::vector<std::size_t> sorted = idx;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> expect(37);
  std::iota(expect.begin(), expect.end(), std::size_t{0});
  EXPECT_EQ(sorted, expect);

  const auto s = subset(ds, 37, 5);
  std::multiset<double> a(ds.images.data.begin(), ds.images.data.end()), b(s.images.data.begin(), s.images.data.end());
  EXPECT_EQ(a, b);
  EXPECT_EQ(s.provenance.subset_seed, 5u);
}

TEST(Subset, SameSeedSameSubset) {
  const auto ds = counting_dataset(100);
  EXPECT_EQ(subset(ds, 30, 9).images, subset(ds, 30, 9).images);
}

TEST(Subset, AdjacentSeedsDrawDifferentIndexSets) {
  auto a = subset_indices(5000, 1000, 41);
  auto b = subset_indices(5000, 1000, 42);
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_NE(a, b);
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 1000u);
}

TEST(Subset, TooLargeIsAnError) {
  EXPECT_THROW(subset(counting_dataset(5), 6, 1), std::invalid_argument);
}

TEST(Batches, SizesForTenByFour) {
  const auto bs = batches(counting_dataset(10), 4);
  ASSERT_EQ(bs.size(), 3u);
  EXPECT_EQ(bs[0].size(), 4u);
  EXPECT_EQ(bs[1].size(), 4u);
  EXPECT_EQ(bs[2].size(), 2u);
  EXPECT_EQ(bs[2].images.shape, (Shape{2, 1, 2, 2}));
}

TEST(Batches, BatchOfWholeDataset) {
  EXPECT_EQ(batches(counting_dataset(10), 10).size(), 1u);
  EXPECT_EQ(batches(counting_dataset(10), 11).size(), 1u);
  EXPECT_THROW(batches(counting_dataset(10), 0), std::invalid_argument);
}

TEST(Batches, ConcatenationReproducesDataset) {
  const auto ds = counting_dataset(23);
  for (std::size_t bs : {1u, 3u, 5u, 23u}) {
    std::vector<double> images;
    std::vector<int> labels;
    for (const auto& b : batches(ds, bs)) {
      images.insert(images.end(), b.images.data.begin(), b.images.data.end());
      labels.insert(labels.end(), b.labels.begin(), b.labels.end());
    }
    EXPECT_EQ(images, ds.images.data);
    EXPECT_EQ(labels, ds.labels);
  }
}
