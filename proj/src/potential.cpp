#include "mfdeg/potential.hpp"

#include <cctype>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace mfdeg {

enum class Op { Num, X, Y, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Log, Sqrt };

struct ExprNode {
  Op op = Op::Num;
  double value = 0;
  std::shared_ptr<const ExprNode> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const ExprNode>;

NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr, double v = 0) {
  auto n = std::make_shared<ExprNode>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  n->value = v;
  return n;
}

class Parser {
 public:
  explicit Parser(const std::string& s) : s_(s) {}

  NodePtr parse() {
    auto e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected character");
    return e;
  }

 private:
  const std::string& s_;
  size_t pos_ = 0;

  [[noreturn]] void fail(const std::string& what) const {
    throw std::invalid_argument("potential expression: " + what + " at position " + std::to_string(pos_) + " in '" + s_ + "'");
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  NodePtr expr() {
    auto l = term();
    for (;;) {
      if (eat('+')) l = make(Op::Add, l, term());
      else if (eat('-')) l = make(Op::Sub, l, term());
      else return l;
    }
  }
  NodePtr term() {
    auto l = unary();
    for (;;) {
      if (eat('*')) l = make(Op::Mul, l, unary());
      else if (eat('/')) l = make(Op::Div, l, unary());
      else return l;
    }
  }
  NodePtr unary() {
    if (eat('-')) return make(Op::Neg, unary());
    if (eat('+')) return unary();
    return power();
  }
  NodePtr power() {
    auto base = primary();
    if (eat('^')) return make(Op::Pow, base, unary());
    return base;
  }
  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    const char c = s_[pos_];
    if (eat('(')) {
      auto e = expr();
      if (!eat(')')) fail("missing ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = s_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("bad number");
      pos_ += static_cast<size_t>(end - begin);
      return make(Op::Num, nullptr, nullptr, v);
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string id = s_.substr(start, pos_ - start);
      if (id == "x") return make(Op::X);
      if (id == "y") return make(Op::Y);
      if (id == "pi") return make(Op::Num, nullptr, nullptr, std::numbers::pi);
      Op f;
      if (id == "sin") f = Op::Sin;
      else if (id == "cos") f = Op::Cos;
      else if (id == "exp") f = Op::Exp;
      else if (id == "log") f = Op::Log;
      else if (id == "sqrt") f = Op::Sqrt;
      else {
        pos_ = start;
        fail("unknown identifier '" + id + "'");
      }
      if (!eat('(')) fail("expected '(' after " + id);
      auto arg = expr();
      if (!eat(')')) fail("missing ')'");
      return make(f, arg);
    }
    fail("unexpected character");
  }
};

// f(g) given f', f'' at g.v
Jet2 chain(const Jet2& g, double f, double f1, double f2) {
  Jet2 r;
  r.v = f;
  r.dx = f1 * g.dx;
  r.dy = f1 * g.dy;
  r.dxx = f2 * g.dx * g.dx + f1 * g.dxx;
  r.dxy = f2 * g.dx * g.dy + f1 * g.dxy;
  r.dyy = f2 * g.dy * g.dy + f1 * g.dyy;
  return r;
}

Jet2 mul(const Jet2& a, const Jet2& b) {
  Jet2 r;
  r.v = a.v * b.v;
  r.dx = a.dx * b.v + a.v * b.dx;
  r.dy = a.dy * b.v + a.v * b.dy;
  r.dxx = a.dxx * b.v + 2 * a.dx * b.dx + a.v * b.dxx;
  r.dxy = a.dxy * b.v + a.dx * b.dy + a.dy * b.dx + a.v * b.dxy;
  r.dyy = a.dyy * b.v + 2 * a.dy * b.dy + a.v * b.dyy;
  return r;
}

Jet2 add(const Jet2& a, const Jet2& b, double s) {
  return {a.v + s * b.v, a.dx + s * b.dx, a.dy + s * b.dy, a.dxx + s * b.dxx, a.dxy + s * b.dxy, a.dyy + s * b.dyy};
}

bool constant_node(const ExprNode& n) {
  if (n.op == Op::X || n.op == Op::Y) return false;
  if (n.a && !constant_node(*n.a)) return false;
  if (n.b && !constant_node(*n.b)) return false;
  return true;
}

Jet2 eval(const ExprNode& n, double x, double y) {
  switch (n.op) {
    case Op::Num: return {n.value, 0, 0, 0, 0, 0};
    case Op::X: return {x, 1, 0, 0, 0, 0};
    case Op::Y: return {y, 0, 1, 0, 0, 0};
    case Op::Add: return add(eval(*n.a, x, y), eval(*n.b, x, y), 1.0);
    case Op::Sub: return add(eval(*n.a, x, y), eval(*n.b, x, y), -1.0);
    case Op::Neg: return add(Jet2{}, eval(*n.a, x, y), -1.0);
    case Op::Mul: return mul(eval(*n.a, x, y), eval(*n.b, x, y));
    case Op::Div: {
      const Jet2 b = eval(*n.b, x, y);
      const double t = b.v;
      return mul(eval(*n.a, x, y), chain(b, 1 / t, -1 / (t * t), 2 / (t * t * t)));
    }
    case Op::Pow: {
      const Jet2 a = eval(*n.a, x, y);
      if (constant_node(*n.b)) {
        const double c = eval(*n.b, x, y).v;
        const double t = a.v;
        return chain(a, std::pow(t, c), c * std::pow(t, c - 1), c * (c - 1) * std::pow(t, c - 2));
      }
      const Jet2 la = chain(a, std::log(a.v), 1 / a.v, -1 / (a.v * a.v));
      const Jet2 e = mul(eval(*n.b, x, y), la);
      const double ev = std::exp(e.v);
      return chain(e, ev, ev, ev);
    }
    case Op::Sin: {
      const Jet2 g = eval(*n.a, x, y);
      return chain(g, std::sin(g.v), std::cos(g.v), -std::sin(g.v));
    }
    case Op::Cos: {
      const Jet2 g = eval(*n.a, x, y);
      return chain(g, std::cos(g.v), -std::sin(g.v), -std::cos(g.v));
    }
    case Op::Exp: {
      const Jet2 g = eval(*n.a, x, y);
      const double e = std::exp(g.v);
      return chain(g, e, e, e);
    }
    case Op::Log: {
      const Jet2 g = eval(*n.a, x, y);
      return chain(g, std::log(g.v), 1 / g.v, -1 / (g.v * g.v));
    }
    case Op::Sqrt: {
      const Jet2 g = eval(*n.a, x, y);
      const double s = std::sqrt(g.v);
      return chain(g, s, 0.5 / s, -0.25 / (s * g.v));
    }
  }
  return {};
}

double eval_value(const ExprNode& n, double x, double y) {
  switch (n.op) {
    case Op::Num: return n.value;
    case Op::X: return x;
    case Op::Y: return y;
    case Op::Add: return eval_value(*n.a, x, y) + eval_value(*n.b, x, y);
    case Op::Sub: return eval_value(*n.a, x, y) - eval_value(*n.b, x, y);
    case Op::Neg: return -eval_value(*n.a, x, y);
    case Op::Mul: return eval_value(*n.a, x, y) * eval_value(*n.b, x, y);
    case Op::Div: return eval_value(*n.a, x, y) / eval_value(*n.b, x, y);
    case Op::Pow: return std::pow(eval_value(*n.a, x, y), eval_value(*n.b, x, y));
    case Op::Sin: return std::sin(eval_value(*n.a, x, y));
    case Op::Cos: return std::cos(eval_value(*n.a, x, y));
    case Op::Exp: return std::exp(eval_value(*n.a, x, y));
    case Op::Log: return std::log(eval_value(*n.a, x, y));
    case Op::Sqrt: return std::sqrt(eval_value(*n.a, x, y));
  }
  return 0;
}

}  // namespace

Potential::Potential() : root_(make(Op::Num, nullptr, nullptr, 1.0)), text_("1") {}

Potential Potential::parse(const std::string& text) {
  Potential p;
  p.root_ = Parser(text).parse();
  p.text_ = text;
  return p;
}

double Potential::operator()(double x, double y) const { return eval_value(*root_, x, y); }

Jet2 Potential::jet(double x, double y) const { return eval(*root_, x, y); }

bool Potential::is_constant() const { return constant_node(*root_); }

}  // namespace mfdeg
