#pragma once

#include <string>
#include <string_view>

namespace proxflow {

/// Stable activation: 1-Lipschitz, monotone increasing, fixes 0. These are
/// exactly the scalar functions that are proximity operators.
struct Activation {
  enum class Kind { elu, tanh, identity };

  Kind kind = Kind::elu;
  /// ELU shape parameter; must lie in (0, 1] so that sigma' <= 1.
  double alpha = 1.0;

  static Activation elu(double alpha = 1.0);
  static Activation tanh();
  static Activation identity();
  /// Accepts "elu", "tanh", "identity".
  static Activation parse(std::string_view name, double alpha = 1.0);

  std::string name() const;

  double value(double x) const;
  double deriv(double x) const;
  double second(double x) const;

  bool operator==(const Activation&) const = default;
};

}  // namespace proxflow
