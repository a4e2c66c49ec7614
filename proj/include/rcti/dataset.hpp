#pragma once

// MNIST-style IDX ubyte ingestion, seeded subsetting and batching.

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rcti/nn.hpp"
#include "rcti/rng.hpp"

namespace rcti {

class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kIdxImagesMagic = 2051;  // 0x00000803: ubyte, 3 dims
inline constexpr std::uint32_t kIdxLabelsMagic = 2049;  // 0x00000801: ubyte, 1 dim

struct IdxHeader {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
};

struct Provenance {
  std::string images_path;
  std::string labels_path;
  std::optional<std::uint64_t> subset_seed;
};

struct LabeledDataset {
  Tensor images;  // [n, 1, 28, 28], pixels in [0,1]
  std::vector<int> labels;
  Provenance provenance;

  std::size_t size() const { return labels.size(); }
};

namespace detail {

inline bool has_gz_extension(const std::filesystem::path& p) { return p.extension() == ".gz"; }

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  if (has_gz_extension(path)) {
    gzFile f = gzopen(path.string().c_str(), "rb");
    if (!f) throw IdxError("cannot open " + path.string());
    std::vector<std::uint8_t> out;
    std::vector<std::uint8_t> chunk(1 << 16);
    int n;
    while ((n = gzread(f, chunk.data(), static_cast<unsigned>(chunk.size()))) > 0)
      out.insert(out.end(), chunk.begin(), chunk.begin() + n);
    int err = Z_OK;
    const char* msg = n < 0 ? gzerror(f, &err) : nullptr;
    gzclose(f);
    if (n < 0) throw IdxError("gzip error in " + path.string() + ": " + (msg ? msg : "?"));
    return out;
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (has_gz_extension(path)) {
    gzFile f = gzopen(path.string().c_str(), "wb");
    if (!f) throw IdxError("cannot write " + path.string());
    const int n = gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
    if (n != static_cast<int>(bytes.size())) throw IdxError("gzip write failed for " + path.string());
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IdxError("cannot write " + path.string());
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

inline void append_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

}  // namespace detail

/// Parse an IDX header; checks the magic against `expected_magic` and that
/// the payload holds exactly the declared number of bytes.
inline IdxHeader parse_idx_header(const std::vector<std::uint8_t>& bytes,
                                  std::uint32_t expected_magic, const std::string& what) {
  if (bytes.size() < 4) throw IdxError(what + ": truncated header");
  IdxHeader h;
  h.magic = detail::read_be32(bytes, 0);
  if (h.magic != expected_magic)
    throw IdxError(what + ": bad magic " + std::to_string(h.magic) + " (expected " +
                   std::to_string(expected_magic) + ")");
  const std::size_t rank = h.magic & 0xFF;
  if (bytes.size() < 4 + 4 * rank) throw IdxError(what + ": truncated header");
  std::size_t payload = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    h.dims.push_back(detail::read_be32(bytes, 4 + 4 * i));
    payload *= h.dims.back();
  }
  const std::size_t have = bytes.size() - 4 - 4 * rank;
  if (have < payload)
    throw IdxError(what + ": truncated payload (" + std::to_string(have) + " of " +
                   std::to_string(payload) + " bytes)");
  if (have > payload) throw IdxError(what + ": trailing bytes after payload");
  return h;
}

/// Load an image/label IDX pair. Files ending in ".gz" are decompressed.
inline LabeledDataset load_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path) {
  const auto img = detail::read_file_bytes(images_path);
  const auto lab = detail::read_file_bytes(labels_path);
  const auto ih = parse_idx_header(img, kIdxImagesMagic, images_path.string());
  const auto lh = parse_idx_header(lab, kIdxLabelsMagic, labels_path.string());
  const std::size_t n = ih.dims[0], rows = ih.dims[1], cols = ih.dims[2];
  if (lh.dims[0] != n)
    throw IdxError("image/label count mismatch: " + std::to_string(n) + " images, " +
                   std::to_string(lh.dims[0]) + " labels");

  LabeledDataset ds;
  ds.images = Tensor({n, 1, rows, cols});
  const std::size_t off = 16;
  for (std::size_t i = 0; i < ds.images.size(); ++i)
    ds.images.data[i] = static_cast<double>(img[off + i]) / 255.0;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) ds.labels[i] = lab[8 + i];
  ds.provenance = {images_path.string(), labels_path.string(), std::nullopt};
  return ds;
}

/// Write a dataset back to IDX. Pixels are re-quantised with round(v * 255).
inline void write_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
  const auto& s = ds.images.shape;
  if (s.size() != 4 || s[1] != 1) throw IdxError("write_idx expects images shaped [n,1,H,W]");
  std::vector<std::uint8_t> img;
  img.reserve(16 + ds.images.size());
  detail::append_be32(img, kIdxImagesMagic);
  for (auto d : {s[0], s[2], s[3]}) detail::append_be32(img, static_cast<std::uint32_t>(d));
  for (double v : ds.images.data)
    img.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  std::vector<std::uint8_t> lab;
  detail::append_be32(lab, kIdxLabelsMagic);
  detail::append_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int l : ds.labels) lab.push_back(static_cast<std::uint8_t>(l));
  detail::write_file_bytes(images_path, img);
  detail::write_file_bytes(labels_path, lab);
}

inline std::size_t sample_size(const LabeledDataset& ds) {
  return ds.size() == 0 ? 0 : ds.images.size() / ds.size();
}

/// Gather rows `idx` (in that order) into a new dataset.
inline LabeledDataset select(const LabeledDataset& ds, const std::vector<std::size_t>& idx) {
  const std::size_t per = sample_size(ds);
  LabeledDataset out;
  Shape shape = ds.images.shape;
  shape[0] = idx.size();
  out.images = Tensor(shape);
  out.labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(ds.images.data.begin() + static_cast<std::ptrdiff_t>(idx[i] * per), per,
                out.images.data.begin() + static_cast<std::ptrdiff_t>(i * per));
    out.labels[i] = ds.labels[idx[i]];
  }
  out.provenance = ds.provenance;
  return out;
}

/// Indices drawn by `subset`, exposed for audit and tests.
inline std::vector<std::size_t> subset_indices(std::size_t population, std::size_t n,
                                               std::uint64_t seed) {
  if (n > population)
    throw std::invalid_argument("subset of " + std::to_string(n) + " requested from " +
                                std::to_string(population) + " items");
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx.begin(), idx.end());
  idx.resize(n);
  return idx;
}

/// n items without replacement via a seeded Fisher-Yates shuffle.
inline LabeledDataset subset(const LabeledDataset& ds, std::size_t n, std::uint64_t seed) {
  auto out = select(ds, subset_indices(ds.size(), n, seed));
  out.provenance.subset_seed = seed;
  return out;
}

/// Consecutive batches of `batch_size`; the last one may be short.
inline std::vector<Batch> batches(const LabeledDataset& ds, std::size_t batch_size) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  const std::size_t per = sample_size(ds);
  std::vector<Batch> out;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    const std::size_t m = std::min(batch_size, ds.size() - start);
    Shape shape = ds.images.shape;
    shape[0] = m;
    const auto first = ds.images.data.begin() + static_cast<std::ptrdiff_t>(start * per);
    out.push_back(Batch{Tensor(shape, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(m * per))),
                        std::vector<int>(ds.labels.begin() + static_cast<std::ptrdiff_t>(start),
                                         ds.labels.begin() + static_cast<std::ptrdiff_t>(start + m))});
  }
  return out;
}

inline double evaluate_accuracy(const Network& net, const LabeledDataset& ds,
                                std::size_t batch_size = 500) {
  return evaluate_accuracy(net, batches(ds, batch_size));
}

}  // namespace rcti
