#pragma once

#include <memory>
#include <string>

namespace mfdeg {

// Value plus first and second partial derivatives in (x, y).
struct Jet2 {
  double v = 0, dx = 0, dy = 0, dxx = 0, dxy = 0, dyy = 0;
  double laplacian() const { return dxx + dyy; }
};

struct ExprNode;

// Arithmetic expression in x and y: + - * / ^, parentheses, sin cos exp log
// sqrt, the constant pi. Evaluated with exact second derivatives.
class Potential {
 public:
  Potential();  // V = 1
  static Potential parse(const std::string& text);

  double operator()(double x, double y) const;
  Jet2 jet(double x, double y) const;
  const std::string& text() const { return text_; }
  bool is_constant() const;

 private:
  std::shared_ptr<const ExprNode> root_;
  std::string text_;
};

}  // namespace mfdeg
