#pragma once

#include <cctype>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>

#include "nevai/error.hpp"
#include "nevai/quadrature.hpp"
#include "nevai/test_function.hpp"

namespace nevai {

// Small arithmetic language in one variable x:
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := ('+'|'-') unary | power
//   power  := atom ('^' unary)?
//   atom   := number | 'x' | 'pi' | 'e' | name '(' expr ')' | '(' expr ')'
// with name in {abs, exp, sin, atan}.
class Expression {
 public:
  static Expression parse(const std::string& text) {
    Parser p{text, 0};
    auto root = p.expr();
    p.skip();
    if (p.pos != text.size()) p.fail("unexpected '" + std::string(1, text[p.pos]) + "'");
    return Expression(text, std::shared_ptr<const Node>(std::move(root)));
  }

  double operator()(double x) const { return root_->eval(x); }
  const std::string& text() const { return text_; }
  // Degree when the expression is a polynomial in x.
  std::optional<std::size_t> polynomial_degree() const { return root_->degree(); }

 private:
  struct Node {
    virtual ~Node() = default;
    virtual double eval(double x) const = 0;
    virtual std::optional<std::size_t> degree() const = 0;
    virtual std::optional<double> constant() const { return std::nullopt; }
  };
  using Ptr = std::unique_ptr<Node>;

  struct Number : Node {
    double v;
    explicit Number(double v) : v(v) {}
    double eval(double) const override { return v; }
    std::optional<std::size_t> degree() const override { return 0; }
    std::optional<double> constant() const override { return v; }
  };
  struct Var : Node {
    double eval(double x) const override { return x; }
    std::optional<std::size_t> degree() const override { return 1; }
  };
  struct Neg : Node {
    Ptr a;
    explicit Neg(Ptr a) : a(std::move(a)) {}
    double eval(double x) const override { return -a->eval(x); }
    std::optional<std::size_t> degree() const override { return a->degree(); }
    std::optional<double> constant() const override {
      if (auto c = a->constant()) return -*c;
      return std::nullopt;
    }
  };
  struct Binary : Node {
    char op;
    Ptr l, r;
    Binary(char op, Ptr l, Ptr r) : op(op), l(std::move(l)), r(std::move(r)) {}
    double eval(double x) const override {
      const double a = l->eval(x), b = r->eval(x);
      switch (op) {
        case '+': return a + b;
        case '-': return a - b;
        case '*': return a * b;
        case '/': return a / b;
        default: return std::pow(a, b);
      }
    }
    std::optional<std::size_t> degree() const override {
      const auto dl = l->degree();
      if (op == '^') {
        const auto e = r->constant();
        if (!dl || !e || *e < 0 || *e != std::floor(*e) || *e > 64) return std::nullopt;
        return *dl * static_cast<std::size_t>(*e);
      }
      const auto dr = r->degree();
      if (!dl || !dr) return std::nullopt;
      if (op == '*') return *dl + *dr;
      if (op == '/') {
        if (!r->constant() || *r->constant() == 0.0) return std::nullopt;
        return dl;
      }
      return std::max(*dl, *dr);
    }
    std::optional<double> constant() const override {
      const auto a = l->constant(), b = r->constant();
      if (!a || !b) return std::nullopt;
      return eval(0.0);
    }
  };
  struct Call : Node {
    std::string name;
    Ptr a;
    Call(std::string n, Ptr a) : name(std::move(n)), a(std::move(a)) {}
    double eval(double x) const override {
      const double v = a->eval(x);
      if (name == "abs") return std::abs(v);
      if (name == "exp") return std::exp(v);
      if (name == "sin") return std::sin(v);
      return std::atan(v);
    }
    std::optional<std::size_t> degree() const override {
      if (a->constant()) return 0;
      return std::nullopt;
    }
    std::optional<double> constant() const override {
      if (a->constant()) return eval(0.0);
      return std::nullopt;
    }
  };

  struct Parser {
    const std::string& s;
    std::size_t pos;

    [[noreturn]] void fail(const std::string& why) const {
      throw ValidationError("expression '" + s + "': " + why + " at position " + std::to_string(pos));
    }
    void skip() {
      while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    }
    bool eat(char c) {
      skip();
      if (pos < s.size() && s[pos] == c) {
        ++pos;
        return true;
      }
      return false;
    }
    Ptr expr() {
      Ptr l = term();
      for (;;) {
        if (eat('+')) l = std::make_unique<Binary>('+', std::move(l), term());
        else if (eat('-')) l = std::make_unique<Binary>('-', std::move(l), term());
        else return l;
      }
    }
    Ptr term() {
      Ptr l = unary();
      for (;;) {
        if (eat('*')) l = std::make_unique<Binary>('*', std::move(l), unary());
        else if (eat('/')) l = std::make_unique<Binary>('/', std::move(l), unary());
        else return l;
      }
    }
    Ptr unary() {
      if (eat('-')) return std::make_unique<Neg>(unary());
      if (eat('+')) return unary();
      return power();
    }
    Ptr power() {
      Ptr base = atom();
      if (eat('^')) return std::make_unique<Binary>('^', std::move(base), unary());
      return base;
    }
    Ptr atom() {
      skip();
      if (pos >= s.size()) fail("unexpected end");
      const char c = s[pos];
      if (c == '(') {
        ++pos;
        Ptr e = expr();
        if (!eat(')')) fail("expected ')'");
        return e;
      }
      if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
        std::size_t end = pos;
        while (end < s.size() && (std::isdigit(static_cast<unsigned char>(s[end])) || s[end] == '.')) ++end;
        if (end < s.size() && (s[end] == 'e' || s[end] == 'E')) {
          std::size_t k = end + 1;
          if (k < s.size() && (s[k] == '+' || s[k] == '-')) ++k;
          if (k < s.size() && std::isdigit(static_cast<unsigned char>(s[k]))) {
            end = k;
            while (end < s.size() && std::isdigit(static_cast<unsigned char>(s[end]))) ++end;
          }
        }
        const std::string tok = s.substr(pos, end - pos);
        double v;
        try {
          v = detail::parse_double(tok, "number");
        } catch (const ValidationError&) {
          fail("bad number '" + tok + "'");
        }
        pos = end;
        return std::make_unique<Number>(v);
      }
      if (std::isalpha(static_cast<unsigned char>(c))) {
        std::size_t end = pos;
        while (end < s.size() && std::isalpha(static_cast<unsigned char>(s[end]))) ++end;
        const std::string name = s.substr(pos, end - pos);
        pos = end;
        if (name == "x") return std::make_unique<Var>();
        if (name == "pi") return std::make_unique<Number>(std::numbers::pi);
        if (name == "e") return std::make_unique<Number>(std::numbers::e);
        if (name == "abs" || name == "exp" || name == "sin" || name == "atan") {
          if (!eat('(')) fail("expected '(' after " + name);
          Ptr a = expr();
          if (!eat(')')) fail("expected ')'");
          return std::make_unique<Call>(name, std::move(a));
        }
        fail("unknown name '" + name + "'");
      }
      fail("unexpected '" + std::string(1, c) + "'");
    }
  };

  Expression(std::string text, std::shared_ptr<const Node> root) : text_(std::move(text)), root_(std::move(root)) {}

  std::string text_;
  std::shared_ptr<const Node> root_;
};

// Battery name or expression. Expressions carry `bound` (infinite when not given).
inline TestFunction make_test_function(const std::string& spec,
                                       double bound = std::numeric_limits<double>::infinity()) {
  if (auto f = battery::by_name(spec)) return *f;
  const Expression e = Expression::parse(spec);
  return {spec, [e](double x) { return e(x); }, bound, e.polynomial_degree()};
}

}  // namespace nevai
