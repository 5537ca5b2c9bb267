#pragma once

// Small arithmetic grammar for scenario generators and schedules:
//
//   expr    := sum (('<' | '<=' | '>' | '>=' | '==' | '!=') sum)?
//   sum     := product (('+' | '-') product)*
//   product := unary (('*' | '/') unary)*
//   unary   := ('-' | '+') unary | power
//   power   := atom ('^' unary)?
//   atom    := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//
// Names: k, i (1-based sensor index), b0, x1..xn.
// Functions: sin cos exp sqrt abs floor mod(a,b) sat(v,b) min(a,b) max(a,b).
// Comparisons evaluate to 1 or 0.

#include "dkf/linalg.hpp"

#include <cctype>
#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dkf {

class ExpressionError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

struct EvalContext {
    double k = 0.0;
    double i = 0.0;
    double b0 = 0.0;
    std::span<const double> x;
};

/// sat(f, b) = max(min(f, b), -b)
inline double sat(double f, double b) {
    return std::max(std::min(f, b), -b);
}

class Expr {
public:
    Expr() = default;

    static Expr parse(const std::string& text) {
        Parser p{text, 0};
        Expr e;
        e.source_ = text;
        e.root_ = p.parse_expr();
        p.skip_ws();
        if (p.pos != text.size()) {
            throw ExpressionError("unexpected '" + text.substr(p.pos) + "' in expression '" + text + "'");
        }
        return e;
    }

    static Expr constant(double v) {
        Expr e;
        e.source_ = std::to_string(v);
        e.root_ = std::make_shared<Node>(Node{Op::num, v, 0, {}});
        return e;
    }

    [[nodiscard]] bool empty() const { return !root_; }
    [[nodiscard]] const std::string& source() const { return source_; }

    [[nodiscard]] double eval(const EvalContext& ctx) const {
        if (!root_) {
            throw ExpressionError("evaluating an empty expression");
        }
        return eval_node(*root_, ctx);
    }

    /// Largest x-component index referenced (1-based), 0 if none.
    [[nodiscard]] int max_state_index() const { return root_ ? max_index(*root_) : 0; }

private:
    enum class Op {
        num, var_k, var_i, var_b0, var_x,
        neg, add, sub, mul, div, pow,
        lt, le, gt, ge, eq, ne,
        sin, cos, exp, sqrt, abs, floor, mod, sat, min, max,
    };

    struct Node {
        Op op;
        double value;
        int index;
        std::vector<std::shared_ptr<const Node>> args;
    };
    using NodePtr = std::shared_ptr<const Node>;

    static double eval_node(const Node& n, const EvalContext& c) {
        auto a = [&](std::size_t s) { return eval_node(*n.args[s], c); };
        switch (n.op) {
            case Op::num: return n.value;
            case Op::var_k: return c.k;
            case Op::var_i: return c.i;
            case Op::var_b0: return c.b0;
            case Op::var_x:
                if (n.index < 1 || static_cast<std::size_t>(n.index) > c.x.size()) {
                    throw ExpressionError("x" + std::to_string(n.index) + " is out of range for a state of size " +
                                          std::to_string(c.x.size()));
                }
                return c.x[static_cast<std::size_t>(n.index - 1)];
            case Op::neg: return -a(0);
            case Op::add: return a(0) + a(1);
            case Op::sub: return a(0) - a(1);
            case Op::mul: return a(0) * a(1);
            case Op::div: return a(0) / a(1);
            case Op::pow: return std::pow(a(0), a(1));
            case Op::lt: return a(0) < a(1) ? 1.0 : 0.0;
            case Op::le: return a(0) <= a(1) ? 1.0 : 0.0;
            case Op::gt: return a(0) > a(1) ? 1.0 : 0.0;
            case Op::ge: return a(0) >= a(1) ? 1.0 : 0.0;
            case Op::eq: return a(0) == a(1) ? 1.0 : 0.0;
            case Op::ne: return a(0) != a(1) ? 1.0 : 0.0;
            case Op::sin: return std::sin(a(0));
            case Op::cos: return std::cos(a(0));
            case Op::exp: return std::exp(a(0));
            case Op::sqrt: return std::sqrt(a(0));
            case Op::abs: return std::abs(a(0));
            case Op::floor: return std::floor(a(0));
            case Op::mod: {
                const double x = a(0);
                const double m = a(1);
                return x - m * std::floor(x / m);
            }
            case Op::sat: return sat(a(0), a(1));
            case Op::min: return std::min(a(0), a(1));
            case Op::max: return std::max(a(0), a(1));
        }
        return 0.0;
    }

    static int max_index(const Node& n) {
        int best = n.op == Op::var_x ? n.index : 0;
        for (const auto& c : n.args) {
            best = std::max(best, max_index(*c));
        }
        return best;
    }

    struct Parser {
        const std::string& s;
        std::size_t pos;

        void skip_ws() {
            while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) {
                ++pos;
            }
        }
        bool accept(const char* tok) {
            skip_ws();
            const std::string t(tok);
            if (s.compare(pos, t.size(), t) == 0) {
                pos += t.size();
                return true;
            }
            return false;
        }
        [[noreturn]] void fail(const std::string& what) const {
            throw ExpressionError(what + " at offset " + std::to_string(pos) + " in '" + s + "'");
        }
        static NodePtr make(Op op, std::vector<NodePtr> args) {
            return std::make_shared<Node>(Node{op, 0.0, 0, std::move(args)});
        }

        NodePtr parse_expr() {
            NodePtr lhs = parse_sum();
            static const std::pair<const char*, Op> cmp[] = {
                {"<=", Op::le}, {">=", Op::ge}, {"==", Op::eq}, {"!=", Op::ne}, {"<", Op::lt}, {">", Op::gt}};
            for (const auto& [tok, op] : cmp) {
                if (accept(tok)) {
                    return make(op, {lhs, parse_sum()});
                }
            }
            return lhs;
        }
        NodePtr parse_sum() {
            NodePtr lhs = parse_product();
            for (;;) {
                if (accept("+")) {
                    lhs = make(Op::add, {lhs, parse_product()});
                } else if (accept("-")) {
                    lhs = make(Op::sub, {lhs, parse_product()});
                } else {
                    return lhs;
                }
            }
        }
        NodePtr parse_product() {
            NodePtr lhs = parse_unary();
            for (;;) {
                if (accept("*")) {
                    lhs = make(Op::mul, {lhs, parse_unary()});
                } else if (accept("/")) {
                    lhs = make(Op::div, {lhs, parse_unary()});
                } else {
                    return lhs;
                }
            }
        }
        NodePtr parse_unary() {
            if (accept("-")) {
                return make(Op::neg, {parse_unary()});
            }
            if (accept("+")) {
                return parse_unary();
            }
            return parse_power();
        }
        NodePtr parse_power() {
            NodePtr base = parse_atom();
            if (accept("^")) {
                return make(Op::pow, {base, parse_unary()});
            }
            return base;
        }
        NodePtr parse_atom() {
            skip_ws();
            if (pos >= s.size()) {
                fail("unexpected end of expression");
            }
            if (accept("(")) {
                NodePtr e = parse_expr();
                if (!accept(")")) {
                    fail("expected ')'");
                }
                return e;
            }
            const char c = s[pos];
            if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                std::size_t used = 0;
                double v = 0.0;
                try {
                    v = std::stod(s.substr(pos), &used);
                } catch (const std::exception&) {
                    fail("malformed number");
                }
                pos += used;
                return std::make_shared<Node>(Node{Op::num, v, 0, {}});
            }
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                const std::size_t start = pos;
                while (pos < s.size() &&
                       (std::isalnum(static_cast<unsigned char>(s[pos])) || s[pos] == '_')) {
                    ++pos;
                }
                const std::string name = s.substr(start, pos - start);
                skip_ws();
                if (pos < s.size() && s[pos] == '(') {
                    ++pos;
                    return parse_call(name);
                }
                return variable(name);
            }
            fail(std::string("unexpected character '") + c + "'");
        }
        NodePtr variable(const std::string& name) {
            if (name == "k") return make(Op::var_k, {});
            if (name == "i") return make(Op::var_i, {});
            if (name == "b0") return make(Op::var_b0, {});
            if (name.size() > 1 && name[0] == 'x') {
                const std::string digits = name.substr(1);
                if (digits.find_first_not_of("0123456789") == std::string::npos) {
                    const int index = digits.size() > 6 ? 0 : std::stoi(digits);
                    if (index < 1) {
                        fail("state index in '" + name + "' must be between 1 and 999999");
                    }
                    return std::make_shared<Node>(Node{Op::var_x, 0.0, index, {}});
                }
            }
            if (name == "pi") return std::make_shared<Node>(Node{Op::num, M_PI, 0, {}});
            fail("unknown name '" + name + "'");
        }
        NodePtr parse_call(const std::string& name) {
            std::vector<NodePtr> args;
            if (!accept(")")) {
                do {
                    args.push_back(parse_expr());
                } while (accept(","));
                if (!accept(")")) {
                    fail("expected ')' after arguments of " + name);
                }
            }
            static const std::pair<const char*, std::pair<Op, std::size_t>> fns[] = {
                {"sin", {Op::sin, 1}},   {"cos", {Op::cos, 1}}, {"exp", {Op::exp, 1}},
                {"sqrt", {Op::sqrt, 1}}, {"abs", {Op::abs, 1}}, {"floor", {Op::floor, 1}},
                {"mod", {Op::mod, 2}},   {"sat", {Op::sat, 2}}, {"min", {Op::min, 2}},
                {"max", {Op::max, 2}},
            };
            for (const auto& [fname, spec] : fns) {
                if (name == fname) {
                    if (args.size() != spec.second) {
                        fail(name + " expects " + std::to_string(spec.second) + " argument(s)");
                    }
                    return make(spec.first, std::move(args));
                }
            }
            fail("unknown function '" + name + "'");
        }
    };

    std::string source_;
    NodePtr root_;
};

}  // namespace dkf
