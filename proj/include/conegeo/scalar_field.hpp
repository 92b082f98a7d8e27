#pragma once

#include "conegeo/common.hpp"
#include "conegeo/expr.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace conegeo {

// A scalar field over chart coordinates with a gradient. Expression-backed
// fields differentiate symbolically; function-backed fields may supply an
// analytic gradient or fall back to central differences at kGradStep.
class ScalarField {
 public:
  // Central finite-difference step for the gradient fallback. Balances
  // truncation against roundoff at double precision.
  static constexpr double kGradStep = 1e-5;

  ScalarField() = default;

  static ScalarField constant(double c, int dim) {
    ScalarField f;
    f.dim_ = dim;
    f.value_ = [c](const Vec&) { return c; };
    f.grad_ = [dim](const Vec&) { return Vec(Vec::Zero(dim)); };
    f.closed_form_grad_ = true;
    f.text_ = format_double(c);
    return f;
  }

  static ScalarField from_expression(const std::string& src, int dim) {
    Expr e = Expr::parse(src);
    if (e.max_coordinate() > dim)
      throw Error("expression \"" + src + "\" references coordinate x" +
                  std::to_string(e.max_coordinate()) + " beyond dimension " +
                  std::to_string(dim));
    ScalarField f;
    f.dim_ = dim;
    f.value_ = [e](const Vec& x) { return e.eval(x); };
    std::vector<Expr> partials;
    partials.reserve(dim);
    for (int k = 0; k < dim; ++k) partials.push_back(e.derivative(k));
    f.grad_ = [partials, dim](const Vec& x) {
      Vec g(dim);
      for (int k = 0; k < dim; ++k) g[k] = partials[k].eval(x);
      return g;
    };
    f.closed_form_grad_ = true;
    f.text_ = src;
    return f;
  }

  static ScalarField from_function(int dim, std::function<double(const Vec&)> value,
                                   std::function<Vec(const Vec&)> grad = nullptr,
                                   std::string text = "<function>") {
    ScalarField f;
    f.dim_ = dim;
    f.value_ = std::move(value);
    f.closed_form_grad_ = static_cast<bool>(grad);
    f.grad_ = std::move(grad);
    f.text_ = std::move(text);
    return f;
  }

  bool valid() const { return static_cast<bool>(value_); }
  int dimension() const { return dim_; }
  bool has_closed_form_gradient() const { return closed_form_grad_; }
  const std::string& text() const { return text_; }

  double value(const Vec& x) const { return value_(x); }

  Vec gradient(const Vec& x) const {
    if (grad_) return grad_(x);
    Vec g(x.size());
    Vec probe = x;
    for (int k = 0; k < x.size(); ++k) {
      probe[k] = x[k] + kGradStep;
      double hi = value_(probe);
      probe[k] = x[k] - kGradStep;
      double lo = value_(probe);
      probe[k] = x[k];
      g[k] = (hi - lo) / (2.0 * kGradStep);
    }
    return g;
  }

 private:
  int dim_ = 0;
  std::function<double(const Vec&)> value_;
  std::function<Vec(const Vec&)> grad_;
  bool closed_form_grad_ = false;
  std::string text_;
};

}  // namespace conegeo
