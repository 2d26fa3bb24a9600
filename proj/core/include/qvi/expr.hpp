#ifndef QVI_EXPR_HPP
#define QVI_EXPR_HPP

// Small arithmetic expression language used to define model coefficients in
// config files. ASTs are immutable after parse; evaluation is pure, so trees
// can be shared freely between worker threads.

#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qvi::expr {

/// Syntax or identifier error, with the byte offset into the source text.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg), offset_(offset) {}
    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// Missing binding or arithmetic domain error (log of non-positive, sqrt of
/// negative, division by zero, non-finite result).
class EvalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Kind { Constant, Variable, Unary, Binary, Call };

enum class Func { Sin, Cos, Exp, Log, Sqrt, Abs, Tanh, Min, Max, Pow };

struct Node;
using AstPtr = std::shared_ptr<const Node>;

struct Node {
    Kind kind = Kind::Constant;
    double value = 0.0;     // Constant
    std::string name;       // Variable
    int slot = -1;          // Variable: index into the declared-name list
    char op = 0;            // Binary: one of + - * / ^ ; Unary: '-'
    Func func = Func::Sin;  // Call
    std::vector<AstPtr> args;
};

/// The default declared set {t, x1..xd, b1..bd, e1..ed} for dimension d.
std::vector<std::string> default_variables(int dim);

/// Parses `source` against the declared variable list. Unknown identifiers
/// and malformed syntax raise ParseError with a byte offset. Variable slots
/// in the returned tree index into `variables`.
AstPtr parse(std::string_view source, const std::vector<std::string>& variables);

/// Fast evaluation path: `slots[i]` carries the value of `variables[i]` that
/// was passed to parse().
double eval(const Node& ast, std::span<const double> slots);

/// Named-binding evaluation; every variable occurring in the tree must be
/// bound or EvalError is raised.
double eval(const Node& ast, const std::map<std::string, double>& bindings);

/// Prints with the minimal parenthesization that reparses to an identical
/// tree.
std::string to_string(const Node& ast);

/// Names of the variables occurring in the tree, in first-occurrence order.
std::vector<std::string> variables_of(const Node& ast);

}  // namespace qvi::expr

#endif
