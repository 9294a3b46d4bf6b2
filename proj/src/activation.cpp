#include "proxflow/activation.hpp"

#include <cmath>

#include "proxflow/error.hpp"

namespace proxflow {

Activation Activation::elu(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw InvalidArgument("elu alpha must lie in (0, 1] to stay 1-Lipschitz");
  return {Kind::elu, alpha};
}

Activation Activation::tanh() { return {Kind::tanh, 1.0}; }
Activation Activation::identity() { return {Kind::identity, 1.0}; }

Activation Activation::parse(std::string_view name, double alpha) {
  if (name == "elu") return elu(alpha);
  if (name == "tanh") return tanh();
  if (name == "identity") return identity();
  throw InvalidArgument("unknown activation '" + std::string(name) + "'");
}

std::string Activation::name() const {
  switch (kind) {
    case Kind::elu: return "elu";
    case Kind::tanh: return "tanh";
    case Kind::identity: return "identity";
  }
  return "?";
}

double Activation::value(double x) const {
  switch (kind) {
    case Kind::elu: return x > 0.0 ? x : alpha * std::expm1(x);
    case Kind::tanh: return std::tanh(x);
    case Kind::identity: return x;
  }
  return x;
}

double Activation::deriv(double x) const {
  switch (kind) {
    case Kind::elu: return x > 0.0 ? 1.0 : alpha * std::exp(x);
    case Kind::tanh: {
      const double th = std::tanh(x);
      return 1.0 - th * th;
    }
    case Kind::identity: return 1.0;
  }
  return 1.0;
}

double Activation::second(double x) const {
  switch (kind) {
    case Kind::elu: return x > 0.0 ? 0.0 : alpha * std::exp(x);
    case Kind::tanh: {
      const double th = std::tanh(x);
      return -2.0 * th * (1.0 - th * th);
    }
    case Kind::identity: return 0.0;
  }
  return 0.0;
}

}  // namespace proxflow
