#pragma once

#include <string>
#include <string_view>

#include "tensorcalc/expr.hpp"

namespace tensorcalc {

// Parses a program: `var` declarations, optional `let` bindings and one
// expression line per output. See the grammar in the README.
ExprDag parse(std::string_view text);

// Canonical explicit text for a DAG. parse(print_expr(d)) rebuilds d node
// for node; shared interior nodes are bound with `let`.
std::string print_expr(const ExprDag& dag);

// Shortest decimal text that reads back to the identical double.
std::string format_number(double value);

}  // namespace tensorcalc
