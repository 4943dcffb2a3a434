#include "smore/params.hpp"

#include <cmath>

#include "smore/error.hpp"

namespace smore {

Parameter* ParamStore::create(const std::string& name, Shape shape, bool complex) {
  if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->shape = std::move(shape);
  p->complex = complex;
  p->value.assign(p->storage(), 0.0);
  p->grad.assign(p->storage(), 0.0);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return params_.back().get();
}

Parameter* ParamStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

const Parameter* ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : params_[it->second].get();
}

Parameter& ParamStore::at(const std::string& name) {
  if (Parameter* p = find(name)) return *p;
  throw ConfigError("unknown parameter: " + name);
}

const Parameter& ParamStore::at(const std::string& name) const {
  if (const Parameter* p = find(name)) return *p;
  throw ConfigError("unknown parameter: " + name);
}

std::size_t ParamStore::total_storage() const {
  std::size_t total = 0;
  for (const auto& p : params_) total += p->storage();
  return total;
}

void ParamStore::zero_grads() {
  for (auto& p : params_) p->grad.assign(p->storage(), 0.0);
}

std::map<std::string, std::vector<double>> ParamStore::snapshot() const {
  std::map<std::string, std::vector<double>> snap;
  for (const auto& p : params_) snap[p->name] = p->value;
  return snap;
}

void ParamStore::restore(const std::map<std::string, std::vector<double>>& snap) {
  for (auto& p : params_) {
    auto it = snap.find(p->name);
    if (it == snap.end()) throw ConfigError("snapshot missing parameter: " + p->name);
    if (it->second.size() != p->value.size())
      throw ShapeError("snapshot size mismatch for parameter: " + p->name);
    p->value = it->second;
  }
}

void xavier_init(Parameter& p, Rng& rng) {
  if (p.complex) throw ShapeError("xavier_init expects a real parameter: " + p.name);
  if (p.shape.empty() || p.numel() == 0)
    throw ShapeError("xavier_init needs a non-empty shape: " + p.name);
  std::size_t fan_in, fan_out;
  if (p.shape.size() == 1) {
    fan_in = fan_out = p.shape[0];
  } else {
    fan_out = p.shape[0];
    fan_in = p.numel() / p.shape[0];
  }
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& x : p.value) x = rng.uniform(-bound, bound);
}

void adam_step(ParamStore& store, AdamState& state, const AdamConfig& cfg) {
  state.t_ += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t_));
  for (auto& pp : store.all()) {
    Parameter& p = *pp;
    auto& [m, v] = state.moments_[p.name];
    if (m.size() != p.storage()) {
      m.assign(p.storage(), 0.0);
      v.assign(p.storage(), 0.0);
    }
    for (std::size_t i = 0; i < p.storage(); ++i) {
      const double g = p.grad[i];
      if (!std::isfinite(g))
        throw NumericError("non-finite gradient in parameter " + p.name);
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  store.zero_grads();
}

}  // namespace smore
