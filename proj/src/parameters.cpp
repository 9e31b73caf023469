#include "lqa/parameters.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace lqa {

Init Init::xavier(Index fan_in, Index fan_out) {
  return uniform(std::sqrt(6.0 / static_cast<Scalar>(fan_in + fan_out)));
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

Tensor ParameterSet::add(const std::string& name, Shape shape, Init init, bool trainable, int group) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
  const Index n = num_elements(shape);
  Vector values(n);
  const std::uint64_t name_hash = fnv1a(name.data(), name.size());
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(name_hash), static_cast<std::uint32_t>(name_hash >> 32)};
  std::mt19937_64 rng(seq);
  switch (init.kind) {
    case Init::Kind::Zeros: values.setZero(); break;
    case Init::Kind::Ones: values.setOnes(); break;
    case Init::Kind::Normal: {
      std::normal_distribution<Scalar> dist(0.0, init.scale);
      for (Index i = 0; i < n; ++i) values[i] = dist(rng);
      break;
    }
    case Init::Kind::Uniform: {
      std::uniform_real_distribution<Scalar> dist(-init.scale, init.scale);
      for (Index i = 0; i < n; ++i) values[i] = dist(rng);
      break;
    }
  }
  Tensor t = Tensor::from(std::move(shape), std::move(values), trainable);
  entries_.push_back({name, t, trainable, group});
  return t;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const Parameter& p : entries_)
    if (p.name == name) return &p;
  return nullptr;
}

Parameter* ParameterSet::find(const std::string& name) {
  for (Parameter& p : entries_)
    if (p.name == name) return &p;
  return nullptr;
}

void ParameterSet::set_trainable(Parameter& p, bool trainable) {
  p.trainable = trainable;
  p.value.set_requires_grad(trainable);
}

ParamCount count_parameters(const ParameterSet& params) {
  ParamCount count;
  for (const Parameter& p : params.entries()) (p.trainable ? count.trainable : count.frozen) += p.value.size();
  return count;
}

std::uint64_t tensor_hash(const Tensor& t) {
  return fnv1a(t.data().data(), static_cast<std::size_t>(t.size()) * sizeof(Scalar));
}

std::uint64_t frozen_hash(const ParameterSet& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Parameter& p : params.entries()) {
    if (p.trainable) continue;
    h = fnv1a(p.name.data(), p.name.size(), h);
    h = fnv1a(p.value.data().data(), static_cast<std::size_t>(p.value.size()) * sizeof(Scalar), h);
  }
  return h;
}

}  // namespace lqa
