#include "ehrenfest/functions.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ehrenfest {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

ScalarFunction ScalarFunction::parse(std::string_view text) {
  ScalarFunction fn;
  fn.text_ = trim(text);
  if (fn.text_.empty()) throw std::invalid_argument("function spec is empty");
  std::size_t start = 0;
  const std::string& s = fn.text_;
  while (start <= s.size()) {
    // '+' separates terms; a '+' directly after 'e'/'E' belongs to a number.
    std::size_t end = start;
    while (end < s.size()) {
      if (s[end] == '+' && !(end > 0 && (s[end - 1] == 'e' || s[end - 1] == 'E') &&
                             end > start + 1 && std::isdigit(static_cast<unsigned char>(s[end - 2])))) {
        break;
      }
      ++end;
    }
    std::istringstream ss(trim(std::string_view(s).substr(start, end - start)));
    std::string name;
    if (!(ss >> name)) throw std::invalid_argument("function spec '" + s + "': empty term");
    Term term{Kind::constant, {}};
    double v = 0.0;
    while (ss >> v) term.args.push_back(v);
    if (!ss.eof()) throw std::invalid_argument("function spec '" + s + "': bad number");
    std::size_t min_args = 1, max_args = 2;
    if (name == "const") {
      term.kind = Kind::constant;
      max_args = 1;
    } else if (name == "poly") {
      term.kind = Kind::poly;
      max_args = 64;
    } else if (name == "cos") {
      term.kind = Kind::cos;
    } else if (name == "sin") {
      term.kind = Kind::sin;
    } else if (name == "exp") {
      term.kind = Kind::exp;
    } else {
      throw std::invalid_argument("function spec '" + s + "': unknown term '" + name + "'");
    }
    if (term.args.size() < min_args || term.args.size() > max_args) {
      throw std::invalid_argument("function spec '" + s + "': wrong argument count for '" +
                                  name + "'");
    }
    fn.terms_.push_back(std::move(term));
    start = end + 1;
  }
  return fn;
}

ScalarFunction ScalarFunction::constant(double c) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "const " << c;
  return parse(ss.str());
}

double ScalarFunction::operator()(double x) const {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double s = 0.0;
  for (const auto& t : terms_) {
    const double amp = t.args.size() > 1 ? t.args[1] : 1.0;
    switch (t.kind) {
      case Kind::constant: s += t.args[0]; break;
      case Kind::poly: {
        double p = 0.0;
        for (auto it = t.args.rbegin(); it != t.args.rend(); ++it) p = p * x + *it;
        s += p;
        break;
      }
      case Kind::cos: s += amp * std::cos(two_pi * t.args[0] * x); break;
      case Kind::sin: s += amp * std::sin(two_pi * t.args[0] * x); break;
      case Kind::exp: s += amp * std::exp(t.args[0] * x); break;
    }
  }
  return s;
}

bool ScalarFunction::is_constant() const {
  for (const auto& t : terms_) {
    const double amp = t.args.size() > 1 ? t.args[1] : 1.0;
    switch (t.kind) {
      case Kind::constant: break;
      case Kind::poly:
        for (std::size_t k = 1; k < t.args.size(); ++k) {
          if (t.args[k] != 0.0) return false;
        }
        break;
      case Kind::cos:
        if (t.args[0] != 0.0 && amp != 0.0) return false;
        break;
      case Kind::sin:
        if (t.args[0] != 0.0 && amp != 0.0) return false;
        break;
      case Kind::exp:
        if (t.args[0] != 0.0 && amp != 0.0) return false;
        break;
    }
  }
  return true;
}

TestFn ScalarFunction::sample(std::size_t n) const {
  return TestFn::sample(n, [this](double x) { return (*this)(x); });
}

}  // namespace ehrenfest
