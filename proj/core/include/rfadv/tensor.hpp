#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rfadv {

/// Dense row-major float32 array. Value type: copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, float fill = 0.0f);
  Tensor(std::vector<int> shape, std::vector<float> data);

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* ptr() { return data_.data(); }
  const float* ptr() const { return data_.data(); }
  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  /// Same data, new shape; element count must match.
  Tensor reshaped(std::vector<int> shape) const;
  void fill(float v);

  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

std::size_t shape_size(const std::vector<int>& shape);
std::string shape_string(const std::vector<int>& shape);

/// A named trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool frozen = false;
  /// L2 penalty coefficient applied by the optimizer.
  float weight_decay = 0.0f;

  Parameter() = default;
  Parameter(std::string n, Tensor v);
  void zero_grad();
};

}  // namespace rfadv
