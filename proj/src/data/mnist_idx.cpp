#include "wsnn/data/mnist_idx.hpp"

#include <cstdio>
#include <fstream>

#include "wsnn/errors.hpp"

namespace wsnn::data {

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

uint32_t read_u32_be(std::ifstream& f, const std::string& path) {
  unsigned char b[4];
  if (!f.read(reinterpret_cast<char*>(b), 4)) {
    throw IdxTruncatedError(path + ": truncated header");
  }
  return (uint32_t(b[0]) << 24) | (uint32_t(b[1]) << 16) |
         (uint32_t(b[2]) << 8) | uint32_t(b[3]);
}

std::ifstream open_idx(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw IoError(path + ": cannot open");
  }
  return f;
}

std::string hex(uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

}  // namespace

LabeledDataset load_mnist_idx(const std::string& images_path,
                              const std::string& labels_path) {
  std::ifstream imf = open_idx(images_path);
  const uint32_t im_magic = read_u32_be(imf, images_path);
  if (im_magic != kImageMagic) {
    throw IdxBadMagicError(images_path + ": magic " + hex(im_magic) +
                           ", want " + hex(kImageMagic));
  }
  const uint32_t n = read_u32_be(imf, images_path);
  const uint32_t h = read_u32_be(imf, images_path);
  const uint32_t w = read_u32_be(imf, images_path);

  std::ifstream lbf = open_idx(labels_path);
  const uint32_t lb_magic = read_u32_be(lbf, labels_path);
  if (lb_magic != kLabelMagic) {
    throw IdxBadMagicError(labels_path + ": magic " + hex(lb_magic) +
                           ", want " + hex(kLabelMagic));
  }
  const uint32_t n_labels = read_u32_be(lbf, labels_path);
  if (n_labels != n) {
    throw IdxCountMismatchError(std::to_string(n) + " images vs " +
                                std::to_string(n_labels) + " labels");
  }

  LabeledDataset ds;
  ds.images = Tensor<float>({n, 1, h, w});
  ds.labels = Tensor<int64_t>({n});

  std::vector<unsigned char> buf(size_t(h) * w);
  for (uint32_t i = 0; i < n; ++i) {
    if (!imf.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
      throw IdxTruncatedError(images_path + ": ends inside image " +
                              std::to_string(i));
    }
    float* dst = ds.images.data() + size_t(i) * h * w;
    for (size_t p = 0; p < buf.size(); ++p) {
      dst[p] = static_cast<float>(buf[p]) / 255.0f;
    }
  }
  std::vector<unsigned char> lbl(n);
  if (!lbf.read(reinterpret_cast<char*>(lbl.data()), lbl.size())) {
    throw IdxTruncatedError(labels_path + ": ends inside label data");
  }
  for (uint32_t i = 0; i < n; ++i) {
    if (lbl[i] > 9) {
      throw IoError(labels_path + ": label " + std::to_string(int(lbl[i])) +
                    " at index " + std::to_string(i) + " outside [0,9]");
    }
    ds.labels(i) = lbl[i];
  }
  return ds;
}

}  // namespace wsnn::data
