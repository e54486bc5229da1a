#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "wsnn/nn/layer.hpp"
#include "wsnn/optim.hpp"
#include "wsnn/tensor.hpp"

namespace wsnn::harness {

// One entry of the WSNN container: a named tensor in any of the four
// serializable element types.
struct NamedTensor {
  std::string name;
  std::variant<Tensor<float>, Tensor<double>, Tensor<int64_t>, Tensor<uint8_t>>
      data;
};

// In-memory image of a .wsnn file. The container itself is just a list of
// named tensors; the bookkeeping fields (model name, config hash, epoch, best
// metric) ride along as reserved "meta/..." entries so the file format stays
// a single uniform record type.
//
// On-disk layout (all integers little-endian):
//   magic "WSNN" | version u32 | record* | crc u32
//   record = name_len u32 | name bytes | dtype u8 | rank u8 | dims u32[rank]
//            | raw element bytes
// dtype codes: 0 = f32, 1 = f64, 2 = i64, 3 = u8. The trailing CRC-32
// (polynomial 0xEDB88320) covers every byte before it.
struct Checkpoint {
  std::string model_name;
  std::string config_hash;
  int64_t epoch = 0;
  double best_metric = 0.0;
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;

  void add(const std::string& name, Tensor<float> t);
  void add(const std::string& name, Tensor<double> t);
  void add(const std::string& name, Tensor<int64_t> t);
  void add(const std::string& name, Tensor<uint8_t> t);
};

inline constexpr uint32_t kCheckpointVersion = 1;

void checkpoint_save(const Checkpoint& cp, const std::string& path);
// Validation order: magic, then version, then CRC, then records; a file that
// fails any stage yields no partial result.
Checkpoint checkpoint_load(const std::string& path);

uint32_t crc32(const void* data, size_t n, uint32_t seed = 0);

// Copies every parameter and runtime statistic of `model` into `cp` under
// "param/<name>" / "state/<name>" entries.
void store_model(Checkpoint& cp, nn::Layer<float>& model);
// The reverse: every model parameter/state entry must be present with the
// exact shape, or IoError/ShapeError.
void load_model(const Checkpoint& cp, nn::Layer<float>& model);

// Optimizer slots ("opt/<name>/velocity", ".../m", ".../v") plus the step
// counter, so training can resume mid-schedule.
void store_optimizer(Checkpoint& cp,
                     const std::vector<optim::ParamGroup<float>>& groups,
                     const optim::Schedule& sched);
void load_optimizer(const Checkpoint& cp,
                    std::vector<optim::ParamGroup<float>>& groups,
                    optim::Schedule& sched);

}  // namespace wsnn::harness
