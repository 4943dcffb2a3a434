#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "smore/rng.hpp"
#include "smore/tensor.hpp"

namespace smore {

// A trainable array. Complex-valued parameters store interleaved (re, im)
// pairs, so value.size() == numel() * 2 while `shape` stays the logical
// element shape. Gradients accumulate (+=) across backward passes until the
// optimizer consumes and clears them.
struct Parameter {
  std::string name;
  Shape shape;
  bool complex = false;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t numel() const { return shape_numel(shape); }
  std::size_t storage() const { return numel() * (complex ? 2 : 1); }
};

// Owning, name-addressed parameter collection. Pointers returned by create()
// and find() stay valid for the life of the store.
class ParamStore {
 public:
  Parameter* create(const std::string& name, Shape shape, bool complex = false);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;

  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t total_storage() const;

  void zero_grads();

  // Deep copy of current values (grads excluded), e.g. best-epoch snapshots.
  std::map<std::string, std::vector<double>> snapshot() const;
  void restore(const std::map<std::string, std::vector<double>>& snap);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::map<std::string, std::size_t> index_;
};

// Fills a real parameter with Uniform(-b, b), b = sqrt(6 / (fan_in +
// fan_out)). Matrices (and higher ranks) use (dim0, trailing product) as the
// fans; 1-D shapes use n for both. Draws are sequential in row-major order so
// results are reproducible for a given rng state.
void xavier_init(Parameter& p, Rng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First/second moment buffers, keyed by parameter name and lazily sized on
// first use.
class AdamState {
 public:
  void reset() {
    t_ = 0;
    moments_.clear();
  }
  std::size_t step_count() const { return t_; }

  friend void adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg);

 private:
  std::size_t t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> moments_;
};

// One bias-corrected Adam update over every parameter in the store, then
// zeroes the gradients. Throws NumericError if any gradient is non-finite.
void adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg);

}  // namespace smore
