#pragma once

#include <optional>
#include <string_view>

#include "zotune/batch.hpp"
#include "zotune/param_set.hpp"

namespace zotune {

// Forward-only loss L(theta; B). evaluate() never mutates its arguments and
// is deterministic, so two-point probes on the same batch are comparable.
class LossOracle {
 public:
  virtual ~LossOracle() = default;

  virtual std::string_view name() const = 0;

  // Layer layout plus the model's own initialization.
  virtual const ParamSet& param_template() const = 0;

  // Throws StructuralError on a layout mismatch and NumericError when the
  // loss is not finite.
  double evaluate(const ParamSet& params, const Batch& batch) const;

  virtual bool has_analytic_gradient() const { return false; }
  // Throws ConfigError when the model has no closed-form gradient.
  ParamSet analytic_gradient(const ParamSet& params, const Batch& batch) const;

  // Fraction of correctly classified rows, for classifiers.
  virtual std::optional<double> accuracy(const ParamSet&, const Batch&) const {
    return std::nullopt;
  }

 protected:
  virtual double loss(const ParamSet& params, const Batch& batch) const = 0;
  virtual void gradient(const ParamSet& params, const Batch& batch, ParamSet& out) const;
};

}  // namespace zotune
