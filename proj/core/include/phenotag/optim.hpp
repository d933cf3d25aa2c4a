#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "phenotag/autodiff.hpp"
#include "phenotag/random.hpp"

namespace phenotag {

template <typename T>
struct Parameter {
  std::string name;
  Var<T> var;
  Tensor<T> first_moment;
  Tensor<T> second_moment;
};

// Named, insertion-ordered parameter registry owned by a model.
template <typename T>
class ParameterSet {
 public:
  // Throws UsageError on a duplicate name.
  Var<T> add(const std::string& name, Tensor<T> init);

  std::size_t size() const { return params_.size(); }
  Parameter<T>& at(std::size_t i) { return *params_[i]; }
  const Parameter<T>& at(std::size_t i) const { return *params_[i]; }
  Parameter<T>& find(const std::string& name);
  const Parameter<T>& find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t element_count() const;
  void zero_grad();

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay followed by the bias-corrected Adam update.
// Gradients are cleared after every step.
template <typename T>
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(ParameterSet<T>& params);
  std::int64_t steps_taken() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  AdamWConfig config_;
  std::int64_t step_ = 0;
};

// uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))
template <typename T>
Tensor<T> init_dense(Shape shape, std::size_t fan_in, Rng& rng);
// normal(0, stddev)
template <typename T>
Tensor<T> init_normal(Shape shape, double stddev, Rng& rng);

}  // namespace phenotag
