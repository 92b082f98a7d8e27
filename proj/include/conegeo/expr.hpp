#pragma once

// Closed expression grammar for scalar fields over chart coordinates:
//
//   expr    := term (('+'|'-') term)*
//   term    := unary (('*'|'/') unary)*
//   unary   := '-' unary | primary
//   primary := number | coordinate | '|x|' | func '(' expr {',' expr} ')' | '(' expr ')'
//   coordinate := 'x1' .. 'x9'
//   func    := 'pow' | 'exp' | 'log' | 'sqrt'
//
// '|x|' is the Euclidean norm of the full coordinate vector. Expressions
// carry exact symbolic derivatives, so conformal factors parsed from text
// get closed-form gradients.

#include "conegeo/common.hpp"

#include <cctype>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

namespace conegeo {

class Expr {
 public:
  Expr() : node_(constant_node(0.0)) {}

  static Expr parse(const std::string& src) {
    Parser p(src);
    Expr e(p.parse_expr());
    p.expect_end();
    return e;
  }

  static Expr constant(double c) { return Expr(constant_node(c)); }

  double eval(const Vec& x) const { return node_->eval(*node_, x); }

  // Symbolic partial derivative with respect to coordinate `coord` (0-based).
  Expr derivative(int coord) const { return Expr(diff(node_, coord)); }

  // Largest coordinate index referenced (1-based); 0 when none.
  int max_coordinate() const { return max_coord(node_); }

  std::string str() const { return to_str(node_); }

 private:
  enum class Op { Const, Coord, Norm, Add, Sub, Mul, Div, Pow, Exp, Log, Sqrt, Neg };

  struct Node;
  using NodePtr = std::shared_ptr<const Node>;

  struct Node {
    Op op;
    double value = 0.0;  // Const
    int coord = 0;       // Coord (0-based)
    NodePtr a, b;

    static double eval(const Node& n, const Vec& x) {
      switch (n.op) {
        case Op::Const: return n.value;
        case Op::Coord:
          if (n.coord >= x.size())
            throw Error("expression references x" + std::to_string(n.coord + 1) +
                        " but the point " + format_point(x) + " has dimension " +
                        std::to_string(x.size()));
          return x[n.coord];
        case Op::Norm: return x.norm();
        case Op::Add: return eval(*n.a, x) + eval(*n.b, x);
        case Op::Sub: return eval(*n.a, x) - eval(*n.b, x);
        case Op::Mul: return eval(*n.a, x) * eval(*n.b, x);
        case Op::Div: {
          double d = eval(*n.b, x);
          if (d == 0.0)
            throw Error("division by zero while evaluating scalar field at " + format_point(x));
          return eval(*n.a, x) / d;
        }
        case Op::Pow: return std::pow(eval(*n.a, x), eval(*n.b, x));
        case Op::Exp: return std::exp(eval(*n.a, x));
        case Op::Log: {
          double v = eval(*n.a, x);
          if (v <= 0.0)
            throw Error("log of non-positive value while evaluating scalar field at " +
                        format_point(x));
          return std::log(v);
        }
        case Op::Sqrt: {
          double v = eval(*n.a, x);
          if (v < 0.0)
            throw Error("sqrt of negative value while evaluating scalar field at " +
                        format_point(x));
          return std::sqrt(v);
        }
        case Op::Neg: return -eval(*n.a, x);
      }
      return 0.0;
    }
  };

  explicit Expr(NodePtr n) : node_(std::move(n)) {}

  static NodePtr make(Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
  }

  static NodePtr constant_node(double c) {
    auto n = std::make_shared<Node>();
    n->op = Op::Const;
    n->value = c;
    return n;
  }

  static NodePtr coord_node(int c) {
    auto n = std::make_shared<Node>();
    n->op = Op::Coord;
    n->coord = c;
    return n;
  }

  static bool is_const(const NodePtr& n, double v) {
    return n->op == Op::Const && n->value == v;
  }

  // Lightly simplifying constructors keep derivative trees small.
  static NodePtr add(NodePtr a, NodePtr b) {
    if (is_const(a, 0)) return b;
    if (is_const(b, 0)) return a;
    if (a->op == Op::Const && b->op == Op::Const) return constant_node(a->value + b->value);
    return make(Op::Add, std::move(a), std::move(b));
  }
  static NodePtr sub(NodePtr a, NodePtr b) {
    if (is_const(b, 0)) return a;
    if (a->op == Op::Const && b->op == Op::Const) return constant_node(a->value - b->value);
    if (is_const(a, 0)) return make(Op::Neg, std::move(b));
    return make(Op::Sub, std::move(a), std::move(b));
  }
  static NodePtr mul(NodePtr a, NodePtr b) {
    if (is_const(a, 0) || is_const(b, 0)) return constant_node(0);
    if (is_const(a, 1)) return b;
    if (is_const(b, 1)) return a;
    if (a->op == Op::Const && b->op == Op::Const) return constant_node(a->value * b->value);
    return make(Op::Mul, std::move(a), std::move(b));
  }
  static NodePtr div(NodePtr a, NodePtr b) {
    if (is_const(a, 0)) return constant_node(0);
    if (is_const(b, 1)) return a;
    return make(Op::Div, std::move(a), std::move(b));
  }

  static NodePtr diff(const NodePtr& n, int k) {
    switch (n->op) {
      case Op::Const: return constant_node(0);
      case Op::Coord: return constant_node(n->coord == k ? 1 : 0);
      case Op::Norm:  // d|x|/dx_k = x_k / |x|
        return div(coord_node(k), make(Op::Norm));
      case Op::Add: return add(diff(n->a, k), diff(n->b, k));
      case Op::Sub: return sub(diff(n->a, k), diff(n->b, k));
      case Op::Mul: return add(mul(diff(n->a, k), n->b), mul(n->a, diff(n->b, k)));
      case Op::Div:
        return div(sub(mul(diff(n->a, k), n->b), mul(n->a, diff(n->b, k))),
                   mul(n->b, n->b));
      case Op::Pow: {
        if (n->b->op == Op::Const) {
          double c = n->b->value;
          return mul(mul(constant_node(c), make(Op::Pow, n->a, constant_node(c - 1))),
                     diff(n->a, k));
        }
        // f^g * (g' log f + g f'/f)
        return mul(make(Op::Pow, n->a, n->b),
                   add(mul(diff(n->b, k), make(Op::Log, n->a)),
                       mul(n->b, div(diff(n->a, k), n->a))));
      }
      case Op::Exp: return mul(make(Op::Exp, n->a), diff(n->a, k));
      case Op::Log: return div(diff(n->a, k), n->a);
      case Op::Sqrt:
        return div(diff(n->a, k), mul(constant_node(2), make(Op::Sqrt, n->a)));
      case Op::Neg: return sub(constant_node(0), diff(n->a, k));
    }
    return constant_node(0);
  }

  static int max_coord(const NodePtr& n) {
    int m = n->op == Op::Coord ? n->coord + 1 : 0;
    if (n->a) m = std::max(m, max_coord(n->a));
    if (n->b) m = std::max(m, max_coord(n->b));
    return m;
  }

  static std::string to_str(const NodePtr& n) {
    switch (n->op) {
      case Op::Const: return format_double(n->value);
      case Op::Coord: return "x" + std::to_string(n->coord + 1);
      case Op::Norm: return "|x|";
      case Op::Add: return "(" + to_str(n->a) + " + " + to_str(n->b) + ")";
      case Op::Sub: return "(" + to_str(n->a) + " - " + to_str(n->b) + ")";
      case Op::Mul: return "(" + to_str(n->a) + " * " + to_str(n->b) + ")";
      case Op::Div: return "(" + to_str(n->a) + " / " + to_str(n->b) + ")";
      case Op::Pow: return "pow(" + to_str(n->a) + ", " + to_str(n->b) + ")";
      case Op::Exp: return "exp(" + to_str(n->a) + ")";
      case Op::Log: return "log(" + to_str(n->a) + ")";
      case Op::Sqrt: return "sqrt(" + to_str(n->a) + ")";
      case Op::Neg: return "(-" + to_str(n->a) + ")";
    }
    return "?";
  }

  class Parser {
   public:
    explicit Parser(const std::string& src) : src_(src) {}

    NodePtr parse_expr() {
      NodePtr lhs = parse_term();
      for (;;) {
        skip_ws();
        if (match('+')) lhs = make(Op::Add, lhs, parse_term());
        else if (match('-')) lhs = make(Op::Sub, lhs, parse_term());
        else return lhs;
      }
    }

    void expect_end() {
      skip_ws();
      if (pos_ != src_.size()) fail("unexpected trailing input");
    }

   private:
    NodePtr parse_term() {
      NodePtr lhs = parse_unary();
      for (;;) {
        skip_ws();
        if (match('*')) lhs = make(Op::Mul, lhs, parse_unary());
        else if (match('/')) lhs = make(Op::Div, lhs, parse_unary());
        else return lhs;
      }
    }

    NodePtr parse_unary() {
      skip_ws();
      if (match('-')) return make(Op::Neg, parse_unary());
      return parse_primary();
    }

    NodePtr parse_primary() {
      skip_ws();
      if (pos_ >= src_.size()) fail("unexpected end of expression");
      char c = src_[pos_];
      if (c == '(') {
        ++pos_;
        NodePtr e = parse_expr();
        skip_ws();
        if (!match(')')) fail("expected ')'");
        return e;
      }
      if (c == '|') {
        // only the full coordinate-vector norm '|x|' is part of the grammar
        if (src_.compare(pos_, 3, "|x|") == 0) {
          pos_ += 3;
          return make(Op::Norm);
        }
        fail("expected '|x|'");
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
      if (std::isalpha(static_cast<unsigned char>(c))) return parse_ident();
      fail(std::string("unexpected character '") + c + "'");
      return nullptr;
    }

    NodePtr parse_number() {
      size_t end = pos_;
      while (end < src_.size() &&
             (std::isdigit(static_cast<unsigned char>(src_[end])) || src_[end] == '.' ||
              src_[end] == 'e' || src_[end] == 'E' ||
              ((src_[end] == '+' || src_[end] == '-') && end > pos_ &&
               (src_[end - 1] == 'e' || src_[end - 1] == 'E'))))
        ++end;
      try {
        size_t used = 0;
        double v = std::stod(src_.substr(pos_, end - pos_), &used);
        pos_ += used;
        return constant_node(v);
      } catch (const std::exception&) {
        fail("malformed number");
      }
      return nullptr;
    }

    NodePtr parse_ident() {
      size_t end = pos_;
      while (end < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[end]))))
        ++end;
      std::string id = src_.substr(pos_, end - pos_);
      pos_ = end;
      if (id.size() == 2 && id[0] == 'x' && id[1] >= '1' && id[1] <= '9')
        return coord_node(id[1] - '1');
      skip_ws();
      if (!match('(')) fail("expected '(' after '" + id + "'");
      NodePtr a = parse_expr();
      if (id == "pow") {
        skip_ws();
        if (!match(',')) fail("pow takes two arguments");
        NodePtr b = parse_expr();
        skip_ws();
        if (!match(')')) fail("expected ')'");
        return make(Op::Pow, a, b);
      }
      skip_ws();
      if (!match(')')) fail("expected ')'");
      if (id == "exp") return make(Op::Exp, a);
      if (id == "log") return make(Op::Log, a);
      if (id == "sqrt") return make(Op::Sqrt, a);
      fail("unknown function '" + id + "'");
      return nullptr;
    }

    void skip_ws() {
      while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool match(char c) {
      if (pos_ < src_.size() && src_[pos_] == c) {
        ++pos_;
        return true;
      }
      return false;
    }

    [[noreturn]] void fail(const std::string& what) {
      throw Error("expression parse error at offset " + std::to_string(pos_) + ": " + what +
                  " in \"" + src_ + "\"");
    }

    const std::string& src_;
    size_t pos_ = 0;
  };

  NodePtr node_;
};

}  // namespace conegeo
