#include "pohedge/expression.hpp"

#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <sstream>

#include "pohedge/errors.hpp"

namespace pohedge {

namespace {

enum Op : int {
    kConst,
    kVar,
    kNeg,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kPow,
    kExp,
    kLog,
    kSqrt,
    kAbs,
    kMin,
    kMax,
    kLess,  // 1 if a < b else 0; only produced by differentiation
    kSign,
};

int arity(int op) {
    switch (op) {
        case kConst:
        case kVar:
            return 0;
        case kNeg:
        case kExp:
        case kLog:
        case kSqrt:
        case kAbs:
        case kSign:
            return 1;
        default:
            return 2;
    }
}

}  // namespace

struct Expression::Node {
    int op = kConst;
    double value = 0.0;
    int var = 0;
    std::shared_ptr<const Node> a, b;
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;

NodePtr make_const(double c) {
    auto n = std::make_shared<Expression::Node>();
    n->op = kConst;
    n->value = c;
    return n;
}

NodePtr make_var(Var v) {
    auto n = std::make_shared<Expression::Node>();
    n->op = kVar;
    n->var = static_cast<int>(v);
    return n;
}

bool is_const(const NodePtr& n, double c) { return n->op == kConst && n->value == c; }

double apply(int op, double a, double b) {
    switch (op) {
        case kNeg: return -a;
        case kAdd: return a + b;
        case kSub: return a - b;
        case kMul: return a * b;
        case kDiv: return a / b;
        case kPow: return std::pow(a, b);
        case kExp: return std::exp(a);
        case kLog: return std::log(a);
        case kSqrt: return std::sqrt(a);
        case kAbs: return std::fabs(a);
        case kMin: return std::min(a, b);
        case kMax: return std::max(a, b);
        case kLess: return a < b ? 1.0 : 0.0;
        case kSign: return a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0);
        default: return 0.0;
    }
}

NodePtr make(int op, NodePtr a, NodePtr b = nullptr) {
    if (a->op == kConst && (arity(op) == 1 || b->op == kConst)) {
        return make_const(apply(op, a->value, b ? b->value : 0.0));
    }
    switch (op) {
        case kNeg:
            if (a->op == kNeg) return a->a;
            break;
        case kAdd:
            if (is_const(a, 0.0)) return b;
            if (is_const(b, 0.0)) return a;
            if (b->op == kNeg) return make(kSub, a, b->a);
            break;
        case kSub:
            if (is_const(b, 0.0)) return a;
            if (is_const(a, 0.0)) return make(kNeg, b);
            break;
        case kMul:
            if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
            if (is_const(a, 1.0)) return b;
            if (is_const(b, 1.0)) return a;
            if (is_const(a, -1.0)) return make(kNeg, b);
            if (is_const(b, -1.0)) return make(kNeg, a);
            break;
        case kDiv:
            if (is_const(a, 0.0)) return make_const(0.0);
            if (is_const(b, 1.0)) return a;
            break;
        case kPow:
            if (is_const(b, 0.0)) return make_const(1.0);
            if (is_const(b, 1.0)) return a;
            break;
        default:
            break;
    }
    auto n = std::make_shared<Expression::Node>();
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

NodePtr diff(const NodePtr& n, int v) {
    switch (n->op) {
        case kConst:
            return make_const(0.0);
        case kVar:
            return make_const(n->var == v ? 1.0 : 0.0);
        case kNeg:
            return make(kNeg, diff(n->a, v));
        case kAdd:
            return make(kAdd, diff(n->a, v), diff(n->b, v));
        case kSub:
            return make(kSub, diff(n->a, v), diff(n->b, v));
        case kMul:
            return make(kAdd, make(kMul, diff(n->a, v), n->b), make(kMul, n->a, diff(n->b, v)));
        case kDiv: {
            auto da = diff(n->a, v);
            auto db = diff(n->b, v);
            return make(kSub, make(kDiv, da, n->b),
                        make(kDiv, make(kMul, n->a, db), make(kMul, n->b, n->b)));
        }
        case kPow: {
            auto da = diff(n->a, v);
            if (n->b->op == kConst) {
                double c = n->b->value;
                return make(kMul, make(kMul, make_const(c), make(kPow, n->a, make_const(c - 1.0))), da);
            }
            auto db = diff(n->b, v);
            auto term = make(kAdd, make(kMul, db, make(kLog, n->a)),
                             make(kDiv, make(kMul, n->b, da), n->a));
            return make(kMul, n, term);
        }
        case kExp:
            return make(kMul, n, diff(n->a, v));
        case kLog:
            return make(kDiv, diff(n->a, v), n->a);
        case kSqrt:
            return make(kDiv, diff(n->a, v), make(kMul, make_const(2.0), n));
        case kAbs:
            return make(kMul, make(kSign, n->a), diff(n->a, v));
        case kMin:
        case kMax: {
            auto less = make(kLess, n->a, n->b);
            auto not_less = make(kSub, make_const(1.0), less);
            auto da = diff(n->a, v);
            auto db = diff(n->b, v);
            if (n->op == kMin) return make(kAdd, make(kMul, less, da), make(kMul, not_less, db));
            return make(kAdd, make(kMul, less, db), make(kMul, not_less, da));
        }
        default:
            return make_const(0.0);  // kLess, kSign are piecewise constant
    }
}

bool depends(const NodePtr& n, int v) {
    if (n->op == kVar) return n->var == v;
    if (n->op == kConst) return false;
    return depends(n->a, v) || (n->b && depends(n->b, v));
}

const char* op_name(int op) {
    switch (op) {
        case kExp: return "exp";
        case kLog: return "log";
        case kSqrt: return "sqrt";
        case kAbs: return "abs";
        case kMin: return "min";
        case kMax: return "max";
        case kLess: return "less";
        case kSign: return "sign";
        default: return "?";
    }
}

void print(std::ostream& os, const NodePtr& n) {
    static const char* var_names[] = {"t", "x", "s", "zeta"};
    switch (n->op) {
        case kConst: {
            std::ostringstream tmp;
            tmp.precision(17);
            tmp << n->value;
            os << tmp.str();
            return;
        }
        case kVar: os << var_names[n->var]; return;
        case kNeg: os << "(-"; print(os, n->a); os << ")"; return;
        case kAdd:
        case kSub:
        case kMul:
        case kDiv:
        case kPow: {
            static const char sym[] = {'+', '-', '*', '/', '^'};
            os << "(";
            print(os, n->a);
            os << sym[n->op - kAdd];
            print(os, n->b);
            os << ")";
            return;
        }
        default:
            os << op_name(n->op) << "(";
            print(os, n->a);
            if (n->b) {
                os << ",";
                print(os, n->b);
            }
            os << ")";
    }
}

class Parser {
public:
    Parser(std::string_view text, const std::map<std::string, double>& params)
        : text_(text), params_(params) {}

    NodePtr parse() {
        auto n = expr();
        skip_ws();
        if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        return n;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigError("expression '" + std::string(text_) + "': " + msg + " at column " +
                          std::to_string(pos_ + 1));
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) fail(std::string("expected '") + c + "'");
    }

    NodePtr expr() {
        auto lhs = term();
        for (;;) {
            if (accept('+')) lhs = make(kAdd, lhs, term());
            else if (accept('-')) lhs = make(kSub, lhs, term());
            else return lhs;
        }
    }

    NodePtr term() {
        auto lhs = unary();
        for (;;) {
            if (accept('*')) lhs = make(kMul, lhs, unary());
            else if (accept('/')) lhs = make(kDiv, lhs, unary());
            else return lhs;
        }
    }

    NodePtr unary() {
        if (accept('-')) return make(kNeg, unary());
        if (accept('+')) return unary();
        return power();
    }

    NodePtr power() {
        auto base = primary();
        if (accept('^')) return make(kPow, base, unary());
        return base;
    }

    NodePtr primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of input");
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            auto n = expr();
            expect(')');
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        fail(std::string("unexpected '") + c + "'");
    }

    NodePtr number() {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.'))
            ++pos_;
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t save = pos_++;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            } else {
                pos_ = save;
            }
        }
        std::string lit(text_.substr(start, pos_ - start));
        try {
            std::size_t used = 0;
            double v = std::stod(lit, &used);
            if (used != lit.size()) fail("malformed number '" + lit + "'");
            return make_const(v);
        } catch (const std::logic_error&) {
            fail("malformed number '" + lit + "'");
        }
    }

    NodePtr identifier() {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        std::string id(text_.substr(start, pos_ - start));
        if (id == "t") return make_var(Var::T);
        if (id == "x") return make_var(Var::X);
        if (id == "s") return make_var(Var::S);
        if (id == "zeta") return make_var(Var::Zeta);
        if (id == "pi") return make_const(std::numbers::pi);
        static const std::map<std::string, int> unary_fns = {
            {"exp", kExp}, {"log", kLog}, {"sqrt", kSqrt}, {"abs", kAbs}};
        static const std::map<std::string, int> binary_fns = {{"min", kMin}, {"max", kMax}};
        if (auto it = unary_fns.find(id); it != unary_fns.end()) {
            expect('(');
            auto a = expr();
            expect(')');
            return make(it->second, a);
        }
        if (auto it = binary_fns.find(id); it != binary_fns.end()) {
            expect('(');
            auto a = expr();
            expect(',');
            auto b = expr();
            expect(')');
            return make(it->second, a, b);
        }
        if (auto it = params_.find(id); it != params_.end()) return make_const(it->second);
        fail("unknown identifier '" + id + "'");
    }

    std::string_view text_;
    const std::map<std::string, double>& params_;
    std::size_t pos_ = 0;
};

constexpr std::size_t kMaxStack = 64;

void emit(const NodePtr& n, std::vector<int>& ops, std::vector<int>& vars, std::vector<double>& vals,
          std::size_t depth, std::size_t& max_depth) {
    if (n->a) emit(n->a, ops, vars, vals, depth, max_depth);
    if (n->b) emit(n->b, ops, vars, vals, depth + 1, max_depth);
    std::size_t need = depth + (n->b ? 2 : 1);
    max_depth = std::max(max_depth, need);
    ops.push_back(n->op);
    vars.push_back(n->var);
    vals.push_back(n->value);
}

}  // namespace

Expression::Expression() : Expression(make_const(0.0)) {}

Expression::Expression(std::shared_ptr<const Node> root) : root_(std::move(root)) {
    compile();
    source_ = to_string();
}

Expression Expression::parse(std::string_view text, const std::map<std::string, double>& params) {
    Expression e(Parser(text, params).parse());
    e.source_ = std::string(text);
    return e;
}

Expression Expression::constant(double c) { return Expression(make_const(c)); }

Expression Expression::variable(Var v) { return Expression(make_var(v)); }

void Expression::compile() {
    std::vector<int> ops, vars;
    std::vector<double> vals;
    std::size_t max_depth = 0;
    emit(root_, ops, vars, vals, 0, max_depth);
    if (max_depth > kMaxStack) throw ConfigError("expression nesting too deep");
    program_.clear();
    program_.reserve(ops.size());
    for (std::size_t i = 0; i < ops.size(); ++i) program_.push_back({ops[i], vars[i], vals[i]});
}

double Expression::operator()(const Point& p) const {
    std::array<double, kMaxStack> st;
    std::size_t sp = 0;
    const double vars[4] = {p.t, p.x, p.s, p.zeta};
    for (const auto& in : program_) {
        switch (in.op) {
            case kConst: st[sp++] = in.value; break;
            case kVar: st[sp++] = vars[in.var]; break;
            case kNeg: st[sp - 1] = -st[sp - 1]; break;
            case kAdd: --sp; st[sp - 1] += st[sp]; break;
            case kSub: --sp; st[sp - 1] -= st[sp]; break;
            case kMul: --sp; st[sp - 1] *= st[sp]; break;
            case kDiv: --sp; st[sp - 1] /= st[sp]; break;
            default:
                if (arity(in.op) == 1) {
                    st[sp - 1] = apply(in.op, st[sp - 1], 0.0);
                } else {
                    --sp;
                    st[sp - 1] = apply(in.op, st[sp - 1], st[sp]);
                }
        }
    }
    return st[0];
}

Expression Expression::derivative(Var v) const { return Expression(diff(root_, static_cast<int>(v))); }

bool Expression::depends_on(Var v) const { return depends(root_, static_cast<int>(v)); }

std::optional<double> Expression::constant_value() const {
    if (root_->op == kConst) return root_->value;
    return std::nullopt;
}

std::string Expression::to_string() const {
    std::ostringstream os;
    print(os, root_);
    return os.str();
}

Expression operator+(const Expression& a, const Expression& b) { return Expression(make(kAdd, a.root_, b.root_)); }
Expression operator-(const Expression& a, const Expression& b) { return Expression(make(kSub, a.root_, b.root_)); }
Expression operator*(const Expression& a, const Expression& b) { return Expression(make(kMul, a.root_, b.root_)); }
Expression operator/(const Expression& a, const Expression& b) { return Expression(make(kDiv, a.root_, b.root_)); }
Expression operator-(const Expression& a) { return Expression(make(kNeg, a.root_)); }

}  // namespace pohedge
