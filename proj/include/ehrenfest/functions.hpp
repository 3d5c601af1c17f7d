#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "ehrenfest/grid.hpp"

namespace ehrenfest {

// A one-dimensional closed-form function read from config text.
//
// Grammar: a '+'-separated sum of terms
//   const c            c
//   poly c0 c1 ...     c0 + c1 x + c2 x^2 + ...
//   cos k [amp]        amp * cos(2 pi k x)     (amp defaults to 1)
//   sin k [amp]        amp * sin(2 pi k x)
//   exp r [amp]        amp * exp(r x)
// e.g. "const 1 + cos 1 0.5".
class ScalarFunction {
 public:
  ScalarFunction() = default;
  static ScalarFunction parse(std::string_view text);
  static ScalarFunction constant(double c);

  double operator()(double x) const;
  bool is_constant() const;
  const std::string& text() const { return text_; }

  TestFn sample(std::size_t n) const;

 private:
  enum class Kind { constant, poly, cos, sin, exp };
  struct Term {
    Kind kind;
    std::vector<double> args;
  };
  std::vector<Term> terms_;
  std::string text_;
};

}  // namespace ehrenfest
