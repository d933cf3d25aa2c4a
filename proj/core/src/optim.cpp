#include "phenotag/optim.hpp"

#include <cmath>
#include <random>

namespace phenotag {

template <typename T>
Var<T> ParameterSet<T>::add(const std::string& name, Tensor<T> init) {
  if (index_.count(name)) throw UsageError("duplicate parameter name " + name);
  auto p = std::make_unique<Parameter<T>>();
  p->name = name;
  p->first_moment = Tensor<T>::zeros(init.shape());
  p->second_moment = Tensor<T>::zeros(init.shape());
  p->var = Var<T>::leaf(std::move(init));
  index_.emplace(name, params_.size());
  params_.push_back(std::move(p));
  return params_.back()->var;
}

template <typename T>
Parameter<T>& ParameterSet<T>::find(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("unknown parameter " + name);
  return *params_[it->second];
}

template <typename T>
const Parameter<T>& ParameterSet<T>::find(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("unknown parameter " + name);
  return *params_[it->second];
}

template <typename T>
std::size_t ParameterSet<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->var.value().size();
  return n;
}

template <typename T>
void ParameterSet<T>::zero_grad() {
  for (auto& p : params_) p->var.zero_grad();
}

template <typename T>
void AdamW<T>::step(ParameterSet<T>& params) {
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  const double lr = config_.lr;
  const double decay = lr * config_.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.at(i);
    auto& value = p.var.mutable_value();
    const bool has_grad = p.var.has_grad();
    for (std::size_t j = 0; j < value.size(); ++j) {
      const double g = has_grad ? static_cast<double>(p.var.grad()[j]) : 0.0;
      double x = static_cast<double>(value[j]);
      x -= decay * x;
      const double m = b1 * static_cast<double>(p.first_moment[j]) + (1.0 - b1) * g;
      const double v = b2 * static_cast<double>(p.second_moment[j]) + (1.0 - b2) * g * g;
      p.first_moment[j] = static_cast<T>(m);
      p.second_moment[j] = static_cast<T>(v);
      const double m_hat = m / c1;
      const double v_hat = v / c2;
      x -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
      value[j] = static_cast<T>(x);
    }
  }
  params.zero_grad();
}

template <typename T>
Tensor<T> init_dense(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  Tensor<T> t(std::move(shape));
  for (auto& x : t.values()) x = static_cast<T>((2.0 * rng.uniform() - 1.0) * bound);
  return t;
}

template <typename T>
Tensor<T> init_normal(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Tensor<T> t(std::move(shape));
  for (auto& x : t.values()) x = static_cast<T>(dist(rng));
  return t;
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template class AdamW<float>;
template class AdamW<double>;
template Tensor<float> init_dense<float>(Shape, std::size_t, Rng&);
template Tensor<double> init_dense<double>(Shape, std::size_t, Rng&);
template Tensor<float> init_normal<float>(Shape, double, Rng&);
template Tensor<double> init_normal<double>(Shape, double, Rng&);

}  // namespace phenotag
