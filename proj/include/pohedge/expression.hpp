#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pohedge {

enum class Var : int { T = 0, X = 1, S = 2, Zeta = 3 };

struct Point {
    double t = 0.0;
    double x = 0.0;
    double s = 0.0;
    double zeta = 0.0;
};

// Coefficient expression over (t, x, s, zeta).
//
// Grammar: + - * / ^ (right-assoc), unary minus, parentheses, numeric
// literals, named parameters, and exp log sqrt abs min max. Symbolic
// derivatives are exact and simplified; evaluation runs a compiled
// stack program, so copies are cheap and evaluation is reentrant.
class Expression {
public:
    Expression();

    static Expression parse(std::string_view text,
                            const std::map<std::string, double>& params = {});
    static Expression constant(double c);
    static Expression variable(Var v);

    double operator()(const Point& p) const;
    double eval(double t, double x, double s, double zeta = 0.0) const {
        return (*this)(Point{t, x, s, zeta});
    }

    Expression derivative(Var v) const;
    bool depends_on(Var v) const;
    std::optional<double> constant_value() const;
    bool is_constant() const { return constant_value().has_value(); }

    const std::string& source() const { return source_; }
    std::string to_string() const;

    friend Expression operator+(const Expression& a, const Expression& b);
    friend Expression operator-(const Expression& a, const Expression& b);
    friend Expression operator*(const Expression& a, const Expression& b);
    friend Expression operator/(const Expression& a, const Expression& b);
    friend Expression operator-(const Expression& a);

    struct Node;

private:
    explicit Expression(std::shared_ptr<const Node> root);
    void compile();

    struct Instr {
        int op;
        int var;
        double value;
    };

    std::shared_ptr<const Node> root_;
    std::vector<Instr> program_;
    std::string source_;
};

}  // namespace pohedge
