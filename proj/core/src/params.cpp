#include "uniflow/params.hpp"

#include <cmath>

#include "uniflow/error.hpp"
#include "uniflow/rng.hpp"

namespace uniflow::nn {

std::size_t ParamStore::add(std::string name, Matrix value) {
  require(!by_name_.contains(name), ErrorCode::invalid_argument, "duplicate parameter " + name);
  by_name_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(value)});
  return params_.size() - 1;
}

std::size_t ParamStore::index(const std::string& name) const {
  auto it = by_name_.find(name);
  require(it != by_name_.end(), ErrorCode::invalid_argument, "unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void ParamStore::round_to_f32() {
  for (auto& p : params_)
    for (ad::Index i = 0; i < p.value.size(); ++i)
      p.value.data()[i] = static_cast<double>(static_cast<float>(p.value.data()[i]));
}

void Gradients::add(const Gradients& other) {
  require(grads.size() == other.grads.size(), ErrorCode::shape_mismatch, "gradient sets differ in size");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (other.grads[i].size() == 0) continue;
    if (grads[i].size() == 0) {
      grads[i] = other.grads[i];
    } else {
      grads[i] += other.grads[i];
    }
  }
}

void Gradients::scale(double s) {
  for (auto& g : grads) g *= s;
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& g : grads) s += g.squaredNorm();
  return s;
}

double Gradients::norm(std::size_t i) const { return grads[i].size() == 0 ? 0.0 : grads[i].norm(); }

Binder::Binder(ad::Tape& tape, const ParamStore& params, Gradients* grads)
    : tape_(tape), params_(params), grads_(grads), bound_(params.size()) {
  if (grads_ && grads_->grads.size() != params.size()) grads_->grads.resize(params.size());
}

ad::Var Binder::operator()(std::size_t index) {
  ad::Var& v = bound_.at(index);
  if (!v.valid()) v = tape_.leaf(params_[index].value, grads_ ? &grads_->grads[index] : nullptr);
  return v;
}

Matrix normal_matrix(ad::Index rows, ad::Index cols, double std, Rng& rng) {
  Matrix m(rows, cols);
  for (ad::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal(0.0, std);
  return m;
}

Adam::Adam(const ParamStore& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& p : params) {
    m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
  }
}

void Adam::step(ParamStore& params, const Gradients& grads, double lr) {
  require(grads.grads.size() == params.size() && m_.size() == params.size(), ErrorCode::shape_mismatch,
          "optimizer and parameter store disagree");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params[i].value;
    Matrix& m = m_[i];
    Matrix& v = v_[i];
    if (grads.grads[i].size() == 0) {
      m *= cfg_.beta1;
      v *= cfg_.beta2;
    } else {
      const Matrix& g = grads.grads[i];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    }
    if (lr == 0.0) continue;
    p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg_.eps);
  }
  params.round_to_f32();
}

}  // namespace uniflow::nn
