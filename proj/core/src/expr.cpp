#include "qvi/expr.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <sstream>

namespace qvi::expr {

namespace {

struct FuncInfo {
    const char* name;
    Func func;
    int arity;
};

constexpr FuncInfo kFuncs[] = {
    {"sin", Func::Sin, 1},  {"cos", Func::Cos, 1},  {"exp", Func::Exp, 1},
    {"log", Func::Log, 1},  {"sqrt", Func::Sqrt, 1}, {"abs", Func::Abs, 1},
    {"tanh", Func::Tanh, 1}, {"min", Func::Min, 2},  {"max", Func::Max, 2},
    {"pow", Func::Pow, 2},
};

const FuncInfo* find_func(std::string_view name) {
    for (const auto& f : kFuncs)
        if (name == f.name) return &f;
    return nullptr;
}

class Parser {
public:
    Parser(std::string_view src, const std::vector<std::string>& vars)
        : src_(src), vars_(vars) {}

    AstPtr run() {
        skip_ws();
        if (pos_ >= src_.size()) fail("expected expression", pos_);
        AstPtr root = parse_expr();
        skip_ws();
        if (pos_ < src_.size()) fail("expected end of input", pos_);
        return root;
    }

private:
    std::string_view src_;
    const std::vector<std::string>& vars_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what, std::size_t at) {
        std::ostringstream os;
        os << "syntax error at offset " << at << ": " << what;
        throw ParseError(os.str(), at);
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool peek_is(char c) {
        skip_ws();
        return pos_ < src_.size() && src_[pos_] == c;
    }

    bool consume(char c) {
        if (peek_is(c)) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c, const char* what) {
        skip_ws();
        if (pos_ >= src_.size() || src_[pos_] != c) fail(what, pos_);
        ++pos_;
    }

    // expr    := term (('+'|'-') term)*           left associative
    // term    := unary (('*'|'/') unary)*         left associative
    // unary   := '-' unary | power
    // power   := primary ('^' unary)?             right associative
    // primary := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
    AstPtr parse_expr() {
        AstPtr lhs = parse_term();
        for (;;) {
            skip_ws();
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) {
                char op = src_[pos_++];
                AstPtr rhs = parse_term();
                lhs = make_binary(op, lhs, rhs);
            } else {
                return lhs;
            }
        }
    }

    AstPtr parse_term() {
        AstPtr lhs = parse_unary();
        for (;;) {
            skip_ws();
            if (pos_ < src_.size() && (src_[pos_] == '*' || src_[pos_] == '/')) {
                char op = src_[pos_++];
                AstPtr rhs = parse_unary();
                lhs = make_binary(op, lhs, rhs);
            } else {
                return lhs;
            }
        }
    }

    AstPtr parse_unary() {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == '-') {
            ++pos_;
            AstPtr inner = parse_unary();
            auto node = std::make_shared<Node>();
            node->kind = Kind::Unary;
            node->op = '-';
            node->args = {inner};
            return node;
        }
        return parse_power();
    }

    AstPtr parse_power() {
        AstPtr base = parse_primary();
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == '^') {
            ++pos_;
            AstPtr exponent = parse_unary();  // right associative, allows 2^-3
            return make_binary('^', base, exponent);
        }
        return base;
    }

    AstPtr parse_primary() {
        skip_ws();
        if (pos_ >= src_.size()) fail("expected number, identifier or '('", pos_);
        char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            AstPtr inner = parse_expr();
            expect(')', "expected ')'");
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        fail("expected number, identifier or '('", pos_);
    }

    AstPtr parse_number() {
        std::size_t start = pos_;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t mark = pos_++;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ >= src_.size() || !std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                pos_ = mark;  // "2e" is "2" followed by identifier -> error below
            } else {
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            }
        }
        double value = 0.0;
        auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
        if (res.ec != std::errc() || res.ptr != src_.data() + pos_)
            fail("malformed number literal", start);
        auto node = std::make_shared<Node>();
        node->kind = Kind::Constant;
        node->value = value;
        return node;
    }

    AstPtr parse_ident() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        std::string name(src_.substr(start, pos_ - start));
        if (peek_is('(')) {
            const FuncInfo* info = find_func(name);
            if (!info) {
                std::ostringstream os;
                os << "unknown function '" << name
                   << "'; supported: sin cos exp log sqrt abs tanh min max pow";
                throw ParseError(os.str(), start);
            }
            expect('(', "expected '('");
            std::vector<AstPtr> args;
            args.push_back(parse_expr());
            while (consume(',')) args.push_back(parse_expr());
            expect(')', "expected ')' or ','");
            if (static_cast<int>(args.size()) != info->arity) {
                std::ostringstream os;
                os << "function '" << name << "' takes " << info->arity << " argument"
                   << (info->arity == 1 ? "" : "s") << ", got " << args.size();
                throw ParseError(os.str(), start);
            }
            auto node = std::make_shared<Node>();
            node->kind = Kind::Call;
            node->func = info->func;
            node->name = name;
            node->args = std::move(args);
            return node;
        }
        auto it = std::find(vars_.begin(), vars_.end(), name);
        if (it == vars_.end()) {
            std::ostringstream os;
            os << "unknown identifier '" << name << "'; allowed:";
            for (const auto& v : vars_) os << ' ' << v;
            throw ParseError(os.str(), start);
        }
        auto node = std::make_shared<Node>();
        node->kind = Kind::Variable;
        node->name = name;
        node->slot = static_cast<int>(it - vars_.begin());
        return node;
    }

    static AstPtr make_binary(char op, AstPtr lhs, AstPtr rhs) {
        auto node = std::make_shared<Node>();
        node->kind = Kind::Binary;
        node->op = op;
        node->args = {std::move(lhs), std::move(rhs)};
        return node;
    }
};

[[noreturn]] void domain_error(const std::string& what) { throw EvalError("domain error: " + what); }

double checked(double v, const char* what) {
    if (!std::isfinite(v)) domain_error(std::string(what) + " produced a non-finite value");
    return v;
}

double eval_call(Func f, const Node& ast, std::span<const double> slots);

double eval_impl(const Node& ast, std::span<const double> slots) {
    switch (ast.kind) {
        case Kind::Constant:
            return ast.value;
        case Kind::Variable:
            return slots[static_cast<std::size_t>(ast.slot)];
        case Kind::Unary:
            return -eval_impl(*ast.args[0], slots);
        case Kind::Binary: {
            double a = eval_impl(*ast.args[0], slots);
            double b = eval_impl(*ast.args[1], slots);
            switch (ast.op) {
                case '+': return checked(a + b, "addition");
                case '-': return checked(a - b, "subtraction");
                case '*': return checked(a * b, "multiplication");
                case '/':
                    if (b == 0.0) domain_error("division by zero");
                    return checked(a / b, "division");
                case '^': return checked(std::pow(a, b), "pow");
                default: break;
            }
            throw EvalError("corrupt AST: unknown binary operator");
        }
        case Kind::Call:
            return eval_call(ast.func, ast, slots);
    }
    throw EvalError("corrupt AST: unknown node kind");
}

double eval_call(Func f, const Node& ast, std::span<const double> slots) {
    double a = eval_impl(*ast.args[0], slots);
    switch (f) {
        case Func::Sin: return std::sin(a);
        case Func::Cos: return std::cos(a);
        case Func::Exp: return checked(std::exp(a), "exp");
        case Func::Log:
            if (a <= 0.0) domain_error("log of non-positive value");
            return std::log(a);
        case Func::Sqrt:
            if (a < 0.0) domain_error("sqrt of negative value");
            return std::sqrt(a);
        case Func::Abs: return std::fabs(a);
        case Func::Tanh: return std::tanh(a);
        case Func::Min: return std::min(a, eval_impl(*ast.args[1], slots));
        case Func::Max: return std::max(a, eval_impl(*ast.args[1], slots));
        case Func::Pow: return checked(std::pow(a, eval_impl(*ast.args[1], slots)), "pow");
    }
    throw EvalError("corrupt AST: unknown function");
}

int precedence(const Node& n) {
    // Looser binds lower. Constants/variables/calls are atoms.
    if (n.kind == Kind::Binary) {
        switch (n.op) {
            case '+':
            case '-': return 1;
            case '*':
            case '/': return 2;
            case '^': return 4;
            default: return 0;
        }
    }
    if (n.kind == Kind::Unary) return 3;
    return 5;
}

void print(const Node& n, std::ostringstream& os) {
    auto child = [&](const Node& c, bool needs_paren) {
        if (needs_paren) os << '(';
        print(c, os);
        if (needs_paren) os << ')';
    };
    switch (n.kind) {
        case Kind::Constant: {
            char buf[32];
            auto res = std::to_chars(buf, buf + sizeof(buf), n.value);
            os.write(buf, res.ptr - buf);
            return;
        }
        case Kind::Variable:
            os << n.name;
            return;
        case Kind::Unary:
            os << '-';
            // -(a+b), -(a^b) need parens; -(-a) prints as --a which reparses fine.
            child(*n.args[0], precedence(*n.args[0]) < 3 || n.args[0]->op == '^');
            return;
        case Kind::Binary: {
            int p = precedence(n);
            const Node& lhs = *n.args[0];
            const Node& rhs = *n.args[1];
            if (n.op == '^') {
                // Right associative, and the base must be an atom: (-a)^b, (a+b)^c.
                child(lhs, precedence(lhs) < 5);
                os << '^';
                child(rhs, precedence(rhs) < 3);
            } else {
                child(lhs, precedence(lhs) < p);
                os << n.op;
                // Left associative: a-(b+c), a/(b*c) keep parens on the right.
                child(rhs, precedence(rhs) <= p);
            }
            return;
        }
        case Kind::Call: {
            os << n.name << '(';
            print(*n.args[0], os);
            for (std::size_t i = 1; i < n.args.size(); ++i) {
                os << ',';
                print(*n.args[i], os);
            }
            os << ')';
            return;
        }
    }
}

void collect(const Node& n, std::vector<std::string>& out) {
    if (n.kind == Kind::Variable) {
        if (std::find(out.begin(), out.end(), n.name) == out.end()) out.push_back(n.name);
    }
    for (const auto& c : n.args) collect(*c, out);
}

}  // namespace

std::vector<std::string> default_variables(int dim) {
    std::vector<std::string> vars{"t"};
    for (const char* prefix : {"x", "b", "e"})
        for (int i = 1; i <= dim; ++i) vars.push_back(prefix + std::to_string(i));
    return vars;
}

AstPtr parse(std::string_view source, const std::vector<std::string>& variables) {
    return Parser(source, variables).run();
}

double eval(const Node& ast, std::span<const double> slots) { return eval_impl(ast, slots); }

double eval(const Node& ast, const std::map<std::string, double>& bindings) {
    std::vector<std::string> names = variables_of(ast);
    // Re-slot against the binding map; slot indices from parse() refer to the
    // declared list, which the map does not have to mirror.
    std::vector<double> slots;
    std::map<std::string, int> index;
    for (const auto& name : names) {
        auto it = bindings.find(name);
        if (it == bindings.end()) throw EvalError("missing binding for variable '" + name + "'");
        index[name] = static_cast<int>(slots.size());
        slots.push_back(it->second);
    }
    struct Reslot {
        const std::map<std::string, int>& index;
        AstPtr run(const Node& n) {
            auto copy = std::make_shared<Node>(n);
            if (n.kind == Kind::Variable) copy->slot = index.at(n.name);
            copy->args.clear();
            for (const auto& c : n.args) copy->args.push_back(run(*c));
            return copy;
        }
    } reslot{index};
    return eval_impl(*reslot.run(ast), slots);
}

std::string to_string(const Node& ast) {
    std::ostringstream os;
    print(ast, os);
    return os.str();
}

std::vector<std::string> variables_of(const Node& ast) {
    std::vector<std::string> out;
    collect(ast, out);
    return out;
}

}  // namespace qvi::expr
