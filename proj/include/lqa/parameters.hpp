#pragma once

#include "lqa/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lqa {

/// How a freshly registered parameter is filled.
struct Init {
  enum class Kind { Zeros, Ones, Normal, Uniform };
  Kind kind = Kind::Zeros;
  Scalar scale = 0;  // stddev for Normal, half-width for Uniform

  static Init zeros() { return {Kind::Zeros, 0}; }
  static Init ones() { return {Kind::Ones, 0}; }
  static Init normal(Scalar stddev) { return {Kind::Normal, stddev}; }
  static Init uniform(Scalar bound) { return {Kind::Uniform, bound}; }
  /// Glorot-uniform for a weight with the given fan-in/fan-out.
  static Init xavier(Index fan_in, Index fan_out);
};

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = false;
  /// Layer-decay group; ignored for frozen parameters.
  int group = 0;
};

/// Ordered registry of named leaf tensors. Each parameter draws from its own
/// generator seeded by (seed, name), so adding or removing one parameter never
/// perturbs the values of the others.
class ParameterSet {
 public:
  explicit ParameterSet(std::uint64_t seed = 0) : seed_(seed) {}

  Tensor add(const std::string& name, Shape shape, Init init, bool trainable, int group = 0);

  const std::vector<Parameter>& entries() const { return entries_; }
  std::vector<Parameter>& entries() { return entries_; }
  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);
  std::uint64_t seed() const { return seed_; }
  void set_trainable(Parameter& p, bool trainable);

 private:
  std::uint64_t seed_;
  std::vector<Parameter> entries_;
};

struct ParamCount {
  Index trainable = 0;
  Index frozen = 0;
  Index total() const { return trainable + frozen; }
};

ParamCount count_parameters(const ParameterSet& params);

/// 64-bit FNV-1a over the raw little-endian bytes of a tensor.
std::uint64_t tensor_hash(const Tensor& t);
/// Combined hash over every frozen parameter, in registration order.
std::uint64_t frozen_hash(const ParameterSet& params);

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace lqa
