#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "uniflow/autograd.hpp"

namespace uniflow {
class Rng;
}

namespace uniflow::nn {

using ad::Matrix;

struct Parameter {
  std::string name;
  Matrix value;
};

/// Ordered, named parameter tensors. Insertion order is the serialization
/// order of checkpoints.
class ParamStore {
 public:
  std::size_t add(std::string name, Matrix value);
  std::size_t index(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.contains(name); }

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const;

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Rounds every value to the nearest float so that f32 checkpoints hold
  /// the exact in-memory state.
  void round_to_f32();

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

/// Gradient buffers aligned with a ParamStore. Entries stay zero-sized until
/// a gradient flows into them.
struct Gradients {
  std::vector<Matrix> grads;

  explicit Gradients(std::size_t n = 0) : grads(n) {}
  void add(const Gradients& other);
  void scale(double s);
  double squared_norm() const;
  double norm(std::size_t i) const;
};

/// Binds store parameters onto a tape lazily, once per tape.
class Binder {
 public:
  Binder(ad::Tape& tape, const ParamStore& params, Gradients* grads = nullptr);

  ad::Var operator()(std::size_t index);
  ad::Tape& tape() { return tape_; }
  const ParamStore& params() const { return params_; }

 private:
  ad::Tape& tape_;
  const ParamStore& params_;
  Gradients* grads_;
  std::vector<ad::Var> bound_;
};

Matrix normal_matrix(ad::Index rows, ad::Index cols, double std, Rng& rng);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(const ParamStore& params, AdamConfig cfg = {});

  /// One update; parameters are re-rounded to f32 afterwards.
  void step(ParamStore& params, const Gradients& grads, double lr);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace uniflow::nn
