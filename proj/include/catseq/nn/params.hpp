#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "catseq/nn/autograd.hpp"

namespace catseq::nn {

/// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); used for dense and LSTM weights.
Tensor uniform_fan_in(Shape shape, std::size_t fan_in, std::mt19937_64& rng);
Tensor normal_init(Shape shape, double stddev, std::mt19937_64& rng);

/// Named trainable parameters in insertion order.
class ParamStore {
 public:
  Var& add(const std::string& name, Tensor init);
  const Var& get(const std::string& name) const;
  Var& get(const std::string& name);
  bool contains(const std::string& name) const;

  std::vector<Var> all() const;
  const std::vector<std::pair<std::string, Var>>& entries() const noexcept { return entries_; }
  std::size_t parameter_count() const;

 private:
  std::vector<std::pair<std::string, Var>> entries_;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// A set of named tensors plus a free-form JSON header.
struct TensorFile {
  nlohmann::json header;
  std::vector<NamedTensor> tensors;

  const Tensor& get(const std::string& name) const;
};

/// Writes `<stem>.bin` (raw little-endian records: name, shape, 8-byte values)
/// and `<stem>.json` (header plus a manifest of names, shapes and offsets).
void save_tensors(const std::filesystem::path& stem, const std::vector<NamedTensor>& tensors,
                  const nlohmann::json& header);
TensorFile load_tensors(const std::filesystem::path& stem);

void save_params(const std::filesystem::path& stem, const ParamStore& params,
                 const nlohmann::json& header);
/// Copies stored values into an already-shaped store; names and shapes must match.
nlohmann::json load_params(const std::filesystem::path& stem, ParamStore& params);

}  // namespace catseq::nn
