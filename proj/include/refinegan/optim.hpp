#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "refinegan/common.hpp"
#include "refinegan/layers.hpp"

namespace refinegan {

struct OptimizerSpec {
    enum class Kind { rmsprop, adadelta };
    Kind kind = Kind::rmsprop;
    double lr = 0.001;
    double rho = 0.9;
    double eps = 1e-8;

    void validate() const {
        if (!(lr > 0.0)) throw ConfigError("optimizer: learning rate must be positive");
        if (!(rho > 0.0 && rho < 1.0)) throw ConfigError("optimizer: rho must lie in (0,1)");
        if (!(eps > 0.0)) throw ConfigError("optimizer: eps must be positive");
    }
};

inline OptimizerSpec rmsprop_spec(double lr = 0.001) { return {OptimizerSpec::Kind::rmsprop, lr, 0.9, 1e-8}; }

/// Accumulator-ratio scheme; lr = 1 is the canonical parameter-free form,
/// kept as a plain multiplier on the computed delta.
inline OptimizerSpec adadelta_spec(double lr = 1.0) { return {OptimizerSpec::Kind::adadelta, lr, 0.95, 1e-6}; }

inline OptimizerSpec::Kind parse_optimizer_kind(const std::string& s) {
    if (s == "rmsprop") return OptimizerSpec::Kind::rmsprop;
    if (s == "adadelta") return OptimizerSpec::Kind::adadelta;
    throw ConfigError("optimizer: unknown kind '" + s + "'");
}

inline std::string to_string(OptimizerSpec::Kind k) {
    return k == OptimizerSpec::Kind::rmsprop ? "rmsprop" : "adadelta";
}

/// Owns the moment accumulators for one network's parameter list. The list
/// passed to step() must be the same tensors, in the same order, every time.
template <typename S>
class Optimizer {
  public:
    Optimizer(const OptimizerSpec& spec, const std::vector<ParamRef<S>>& params) : spec_(spec) {
        spec_.validate();
        acc_.reserve(params.size());
        for (const auto& p : params) acc_.emplace_back(p.count, 0.0);
        if (spec_.kind == OptimizerSpec::Kind::adadelta) {
            acc_delta_.reserve(params.size());
            for (const auto& p : params) acc_delta_.emplace_back(p.count, 0.0);
        }
    }

    void step(const std::vector<ParamRef<S>>& params) {
        if (params.size() != acc_.size()) throw DataError("optimizer: parameter list changed size");
        for (std::size_t t = 0; t < params.size(); ++t) {
            const ParamRef<S>& p = params[t];
            if (p.count != acc_[t].size()) throw DataError("optimizer: parameter tensor changed size");
            double* a = acc_[t].data();
            for (std::size_t i = 0; i < p.count; ++i) {
                const double g = static_cast<double>(p.grad[i]);
                if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in " + p.name);
                a[i] = spec_.rho * a[i] + (1.0 - spec_.rho) * g * g;
                if (spec_.kind == OptimizerSpec::Kind::rmsprop) {
                    p.value[i] -= static_cast<S>(spec_.lr * g / std::sqrt(a[i] + spec_.eps));
                } else {
                    double* ad = acc_delta_[t].data();
                    const double delta = -std::sqrt(ad[i] + spec_.eps) / std::sqrt(a[i] + spec_.eps) * g;
                    p.value[i] += static_cast<S>(spec_.lr * delta);
                    ad[i] = spec_.rho * ad[i] + (1.0 - spec_.rho) * delta * delta;
                }
            }
        }
    }

    const OptimizerSpec& spec() const { return spec_; }

  private:
    OptimizerSpec spec_;
    std::vector<std::vector<double>> acc_, acc_delta_;
};

}  // namespace refinegan
