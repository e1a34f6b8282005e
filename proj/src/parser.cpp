#include "tensorcalc/parser.hpp"

#include <cctype>
#include <charconv>
#include <functional>
#include <cmath>
#include <map>
#include <sstream>

namespace tensorcalc {

std::string format_number(double value) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

namespace {

enum class Tok { Ident, Number, Plus, Minus, Star, DotStar, Quote, LParen, RParen, Comma, Semi, Bar, Arrow, Colon, Equals,
                 Newline, End };

struct Token {
  Tok kind;
  std::string text;
  int line;
  int column;
};

std::vector<Token> lex(std::string_view src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  std::size_t i = 0;
  auto push = [&](Tok k, std::string text, int c) { out.push_back({k, std::move(text), line, c}); };
  while (i < src.size()) {
    const char ch = src[i];
    const int start = col;
    if (ch == '\n') {
      push(Tok::Newline, "\\n", start);
      ++i;
      ++line;
      col = 1;
      continue;
    }
    if (ch == ' ' || ch == '\t' || ch == '\r') {
      ++i;
      ++col;
      continue;
    }
    if (ch == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') {
      std::size_t j = i;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      push(Tok::Ident, std::string(src.substr(i, j - i)), start);
      col += static_cast<int>(j - i);
      i = j;
      continue;
    }
    const bool dot_digit = ch == '.' && i + 1 < src.size() && std::isdigit(static_cast<unsigned char>(src[i + 1]));
    if (std::isdigit(static_cast<unsigned char>(ch)) || dot_digit) {
      std::size_t j = i;
      while (j < src.size() && (std::isdigit(static_cast<unsigned char>(src[j])) || src[j] == '.')) ++j;
      if (j < src.size() && (src[j] == 'e' || src[j] == 'E')) {
        std::size_t k = j + 1;
        if (k < src.size() && (src[k] == '+' || src[k] == '-')) ++k;
        if (k < src.size() && std::isdigit(static_cast<unsigned char>(src[k]))) {
          j = k;
          while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
        }
      }
      push(Tok::Number, std::string(src.substr(i, j - i)), start);
      col += static_cast<int>(j - i);
      i = j;
      continue;
    }
    auto two = src.substr(i, 2);
    if (two == ".*") {
      push(Tok::DotStar, ".*", start);
    } else if (two == "->") {
      push(Tok::Arrow, "->", start);
    }
    if (two == ".*" || two == "->") {
      i += 2;
      col += 2;
      continue;
    }
    Tok k;
    switch (ch) {
      case '+': k = Tok::Plus; break;
      case '-': k = Tok::Minus; break;
      case '*': k = Tok::Star; break;
      case '\'': k = Tok::Quote; break;
      case '(': k = Tok::LParen; break;
      case ')': k = Tok::RParen; break;
      case ',': k = Tok::Comma; break;
      case ';': k = Tok::Semi; break;
      case '|': k = Tok::Bar; break;
      case ':': k = Tok::Colon; break;
      case '=': k = Tok::Equals; break;
      default: throw SyntaxError(std::string("unexpected character '") + ch + "'", line, start);
    }
    push(k, std::string(1, ch), start);
    ++i;
    ++col;
  }
  out.push_back({Tok::End, "end of input", line, col});
  return out;
}

// A parsed operand. Transposes of matrices and row-vector marks are kept
// as views so that X' * v folds into one einsum signature.
struct Value {
  NodeId node = 0;
  bool transposed = false;
  bool row = false;
  bool diag = false;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : toks_(lex(src)) {}

  ExprDag run() {
    for (;;) {
      while (peek().kind == Tok::Newline) ++pos_;
      if (peek().kind == Tok::End) break;
      if (is_keyword("var", Tok::Colon)) {
        declaration();
      } else if (is_keyword("let", Tok::Equals)) {
        binding();
      } else {
        Value v = expression();
        dag_.add_output(materialize(v));
      }
      if (peek().kind != Tok::End) expect(Tok::Newline, "end of line");
    }
    if (dag_.outputs().empty()) throw SyntaxError("no expression to parse", peek().line, peek().column);
    return std::move(dag_);
  }

 private:
  const Token& peek(std::size_t ahead = 0) const { return toks_[std::min(pos_ + ahead, toks_.size() - 1)]; }
  const Token& next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
  bool accept(Tok k) {
    if (peek().kind != k) return false;
    ++pos_;
    return true;
  }
  [[noreturn]] void fail(const std::string& msg, const Token& at) const { throw SyntaxError(msg, at.line, at.column); }
  const Token& expect(Tok k, const char* what) {
    if (peek().kind != k) fail(std::string("expected ") + what + ", found '" + peek().text + "'", peek());
    return next();
  }
  bool is_keyword(const char* word, Tok follow) const {
    return peek().kind == Tok::Ident && peek().text == word && peek(1).kind == Tok::Ident && peek(2).kind == follow;
  }

  Labels labels() {
    if (peek().kind != Tok::Ident) return {};
    const Token& t = next();
    Labels out = split_labels(t.text);
    if (join_labels(out) != t.text) fail("'" + t.text + "' is not a label sequence", t);
    return out;
  }

  std::vector<std::int64_t> dims() {
    std::vector<std::int64_t> out;
    if (peek().kind != Tok::Number) return out;
    do {
      const Token& t = expect(Tok::Number, "an extent");
      std::int64_t v = 0;
      auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
      if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size() || v < 1) {
        fail("extent must be a positive integer", t);
      }
      out.push_back(v);
    } while (accept(Tok::Comma));
    return out;
  }

  double number() {
    bool negative = accept(Tok::Minus);
    const Token& t = expect(Tok::Number, "a number");
    double v = 0;
    auto res = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (res.ec != std::errc() || res.ptr != t.text.data() + t.text.size()) fail("malformed number", t);
    return negative ? -v : v;
  }

  IndexSet index_set(const Labels& ls, const std::vector<std::int64_t>& ds, const Token& at) {
    if (ls.size() != ds.size()) fail("label and extent counts differ", at);
    return IndexSet::from(ls, ds);
  }

  void declaration() {
    next();
    const Token& name = expect(Tok::Ident, "a variable name");
    if (names_.count(name.text)) fail("'" + name.text + "' is already defined", name);
    expect(Tok::Colon, "':'");
    const Token& at = peek();
    Labels ls = labels();
    expect(Tok::LParen, "'('");
    auto ds = dims();
    expect(Tok::RParen, "')'");
    names_[name.text] = dag_.variable(name.text, index_set(ls, ds, at));
  }

  void binding() {
    next();
    const Token& name = expect(Tok::Ident, "a name");
    if (names_.count(name.text)) fail("'" + name.text + "' is already defined", name);
    expect(Tok::Equals, "'='");
    names_[name.text] = materialize(expression());
  }

  // -- expression grammar ---------------------------------------------------

  Value expression() {
    Value left = term();
    for (;;) {
      if (peek().kind == Tok::Plus || peek().kind == Tok::Minus) {
        const Token& op = next();
        Value right = term();
        if (op.kind == Tok::Minus) right = negate(right);
        left = add(left, right, op);
      } else {
        return left;
      }
    }
  }

  Value term() {
    Value left = unary();
    for (;;) {
      if (peek().kind == Tok::Star) {
        const Token& op = next();
        left = multiply(left, unary(), op);
      } else if (peek().kind == Tok::DotStar) {
        const Token& op = next();
        left = elementwise(left, unary(), op);
      } else {
        return left;
      }
    }
  }

  Value unary() {
    if (accept(Tok::Minus)) return negate(unary());
    return postfix();
  }

  Value postfix() {
    Value v = primary();
    while (peek().kind == Tok::Quote) {
      const Token& q = next();
      const std::size_t r = rank(v);
      if (v.diag) {
        continue;  // diag(x)' = diag(x)
      } else if (r == 2) {
        v.transposed = !v.transposed;
      } else if (r == 1) {
        v.row = !v.row;
      } else if (r > 2) {
        fail("transpose of a rank-" + std::to_string(r) + " tensor needs transpose(A; labels)", q);
      }
    }
    return v;
  }

  Value primary() {
    const Token& t = peek();
    if (t.kind == Tok::Number) return {dag_.scalar(number())};
    if (accept(Tok::LParen)) {
      Value v = expression();
      expect(Tok::RParen, "')'");
      return v;
    }
    if (t.kind != Tok::Ident) fail("expected an expression, found '" + t.text + "'", t);
    next();
    if (peek().kind == Tok::LParen) return call(t);
    auto it = names_.find(t.text);
    if (it == names_.end()) throw Error(ErrorCode::UnknownIdentifier, "unknown identifier '" + t.text + "'");
    return {it->second};
  }

  Value call(const Token& fn) {
    expect(Tok::LParen, "'('");
    const std::string& name = fn.text;
    Value out;
    if (name == "einsum") {
      const Token& at = peek();
      Labels s1 = labels();
      expect(Tok::Comma, "','");
      Labels s2 = labels();
      expect(Tok::Arrow, "'->'");
      Labels s3 = labels();
      expect(Tok::Semi, "';'");
      NodeId a = materialize(expression());
      expect(Tok::Comma, "','");
      NodeId b = materialize(expression());
      (void)at;
      out.node = dag_.einsum(a, s1, b, s2, s3);
    } else if (name == "transpose") {
      NodeId a = materialize(expression());
      expect(Tok::Semi, "';'");
      const Token& at = peek();
      Labels perm = labels();
      Labels nat = dag_.node(a).index_set.labels();
      if (perm.size() != nat.size() || labels_union(perm, nat).size() != nat.size()) {
        fail("transpose labels must permute '" + join_labels(nat) + "'", at);
      }
      out.node = dag_.einsum(a, nat, dag_.scalar(1.0), {}, perm);
    } else if (name == "delta") {
      const Token& at = peek();
      Labels left = labels();
      expect(Tok::Bar, "'|'");
      Labels right = labels();
      expect(Tok::Semi, "';'");
      auto ds = dims();
      out.node = dag_.delta(index_set(left, ds, at), index_set(right, ds, at));
    } else if (name == "fill") {
      double v = number();
      expect(Tok::Semi, "';'");
      const Token& at = peek();
      Labels ls = labels();
      expect(Tok::Semi, "';'");
      auto ds = dims();
      out.node = dag_.fill(v, index_set(ls, ds, at));
    } else if (name == "tensor") {
      const Token& at = peek();
      Labels ls = labels();
      expect(Tok::Semi, "';'");
      auto ds = dims();
      expect(Tok::Semi, "';'");
      std::vector<double> values;
      do {
        values.push_back(number());
      } while (accept(Tok::Comma));
      IndexSet set = index_set(ls, ds, at);
      if (static_cast<std::int64_t>(values.size()) != set.elements()) fail("tensor data length mismatch", at);
      out.node = dag_.tensor(set, DenseTensor(set.dims(), std::move(values)));
    } else if (name == "sum") {
      NodeId a = materialize(expression());
      out.node = dag_.einsum(a, dag_.node(a).index_set.labels(), dag_.scalar(1.0), {}, {});
    } else if (name == "diag") {
      Value v = expression();
      if (rank(v) != 1 || v.diag) fail("diag() takes a vector", fn);
      out.node = v.node;
      out.diag = true;
    } else {
      const UnaryOp* op = UnaryOpRegistry::instance().find(name);
      if (!op) throw Error(ErrorCode::UnknownIdentifier, "unknown function '" + name + "'");
      NodeId a = materialize(expression());
      if (op->kind == UnaryOp::Kind::General) {
        if (accept(Tok::Semi)) {
          out.node = dag_.gen_unary(name, a, labels());
        } else {
          out.node = dag_.gen_unary(name, a);
        }
      } else {
        out.node = dag_.elem_unary(name, a);
      }
    }
    expect(Tok::RParen, "')'");
    return out;
  }

  // -- sugar ----------------------------------------------------------------

  std::size_t rank(const Value& v) const { return dag_.node(v.node).index_set.rank(); }
  Labels natural(const Value& v) const { return dag_.node(v.node).index_set.labels(); }
  // Axis labels in row/column role order.
  Labels roles(const Value& v) const {
    Labels l = natural(v);
    if (v.transposed && l.size() == 2) std::swap(l[0], l[1]);
    return l;
  }

  NodeId materialize(const Value& v) {
    if (v.diag) {
      Label i = natural(v)[0];
      Label j = dag_.fresh_label();
      const IndexSet& s = dag_.node(v.node).index_set;
      NodeId unit = dag_.delta(s, IndexSet({{j, s[0].dim}}));
      return dag_.einsum(v.node, {i}, unit, {i, j}, {i, j});
    }
    if (v.transposed) return dag_.einsum(v.node, natural(v), dag_.scalar(1.0), {}, roles(v));
    return v.node;
  }

  Value negate(const Value& v) {
    const Node& n = dag_.node(v.node);
    if (!v.diag && n.kind == NodeKind::ConstScalar && n.index_set.empty()) return {dag_.scalar(-n.value)};
    Value out = v;
    out.node = dag_.negate(v.node);
    return out;
  }

  Label distinct(const Label& want, const Labels& taken) {
    return labels_contain(taken, want) ? dag_.fresh_label() : want;
  }

  Value scalar_product(const Value& a, const Value& b) {
    Value out;
    if (rank(a) == 0) {
      out = b;
      NodeId t = b.diag ? materialize(b) : b.node;
      out.diag = false;
      if (b.diag) out.transposed = out.row = false;
      out.node = dag_.einsum(a.node, {}, t, dag_.node(t).index_set.labels(), dag_.node(t).index_set.labels());
    } else {
      out = a;
      NodeId t = a.diag ? materialize(a) : a.node;
      out.diag = false;
      if (a.diag) out.transposed = out.row = false;
      out.node = dag_.einsum(t, dag_.node(t).index_set.labels(), b.node, {}, dag_.node(t).index_set.labels());
    }
    return out;
  }

  Value multiply(const Value& a, const Value& b, const Token& op) {
    const std::size_t ra = rank(a), rb = rank(b);
    if ((ra == 0 && !a.diag) || (rb == 0 && !b.diag)) return scalar_product(a, b);
    if (a.diag && b.diag) fail("diag(x) * diag(y) is not supported; use .*", op);
    if (b.diag) {
      if (ra != 2) fail("A * diag(x) needs a matrix A", op);
      Labels r = roles(a);
      return {dag_.einsum(a.node, natural(a), b.node, {r[0]}, r)};
    }
    if (a.diag) {
      if (rb != 2) fail("diag(x) * B needs a matrix B", op);
      Labels r = roles(b);
      return {dag_.einsum(a.node, {r[0]}, b.node, natural(b), r)};
    }
    if (ra > 2 || rb > 2) fail("'*' is defined for scalars, vectors and matrices; use einsum(...)", op);
    if (ra == 1 && rb == 1) {
      const Label la = natural(a)[0];
      if (a.row && !b.row) return {dag_.einsum(a.node, {la}, b.node, {la}, {})};
      if (!a.row && b.row) {
        const Label lb = distinct(natural(b)[0], {la});
        return {dag_.einsum(a.node, {la}, b.node, {lb}, {la, lb})};
      }
      fail("vector * vector needs a transpose (x' * y or x * y') or '.*'", op);
    }
    if (ra == 2 && rb == 1) {
      if (b.row) fail("matrix * row vector is not defined", op);
      Labels r = roles(a);
      return {dag_.einsum(a.node, natural(a), b.node, {r[1]}, {r[0]})};
    }
    if (ra == 1 && rb == 2) {
      if (!a.row) fail("column vector * matrix is not defined; transpose the vector", op);
      Labels r = roles(b);
      Value out{dag_.einsum(a.node, {r[0]}, b.node, natural(b), {r[1]})};
      out.row = true;
      return out;
    }
    // Matrix product: B's row label becomes A's column label.
    Labels ra_l = roles(a), rb_l = roles(b);
    const Label outer = distinct(rb_l[1], ra_l);
    std::map<Label, Label> rename{{rb_l[0], ra_l[1]}, {rb_l[1], outer}};
    Labels s2;
    for (const Label& l : natural(b)) s2.push_back(rename.at(l));
    return {dag_.einsum(a.node, natural(a), b.node, s2, {ra_l[0], outer})};
  }

  Value elementwise(const Value& a, const Value& b, const Token& op) {
    if (a.diag || b.diag) fail("'.*' does not take diag(...)", op);
    const std::size_t ra = rank(a), rb = rank(b);
    if (ra == 0 || rb == 0) return scalar_product(a, b);
    if (ra == rb) {
      Labels target = roles(a), rb_l = roles(b);
      std::map<Label, Label> rename;
      for (std::size_t i = 0; i < rb_l.size(); ++i) rename[rb_l[i]] = target[i];
      Labels s2;
      for (const Label& l : natural(b)) s2.push_back(rename.at(l));
      Value out{dag_.einsum(a.node, natural(a), b.node, s2, target)};
      out.row = ra == 1 && a.row;
      return out;
    }
    if (ra == 2 && rb == 1) {
      Labels r = roles(a);
      return {dag_.einsum(a.node, natural(a), b.node, {r[0]}, r)};
    }
    if (ra == 1 && rb == 2) {
      Labels r = roles(b);
      return {dag_.einsum(a.node, {r[0]}, b.node, natural(b), r)};
    }
    fail("'.*' needs equal ranks or a matrix and a vector", op);
  }

  Value add(const Value& a, const Value& b, const Token& op) {
    const std::size_t ra = a.diag ? 2 : rank(a), rb = b.diag ? 2 : rank(b);
    NodeId l = materialize(a), r = materialize(b);
    if (ra == 0 && rb != 0) l = broadcast(l, dag_.node(r).index_set);
    if (rb == 0 && ra != 0) r = broadcast(r, dag_.node(l).index_set);
    if (dag_.node(l).index_set.rank() != dag_.node(r).index_set.rank()) {
      fail("'" + op.text + "' needs operands of equal rank", op);
    }
    Value out{dag_.add(l, r)};
    out.row = ra == 1 && a.row;
    return out;
  }

  NodeId broadcast(NodeId s, const IndexSet& like) {
    const Node& n = dag_.node(s);
    if (n.kind == NodeKind::ConstScalar) return dag_.fill(n.value, like);
    const Labels l = like.labels();
    return dag_.einsum(s, {}, dag_.fill(1.0, like), l, l);
  }

  std::vector<Token> toks_;
  std::size_t pos_ = 0;
  ExprDag dag_;
  std::map<std::string, NodeId> names_;
};

std::string dims_text(const IndexSet& s) {
  std::string out;
  for (std::size_t i = 0; i < s.rank(); ++i) out += (i ? "," : "") + std::to_string(s[i].dim);
  return out;
}

}  // namespace

ExprDag parse(std::string_view text) { return Parser(text).run(); }

std::string print_expr(const ExprDag& input) {
  const ExprDag dag = input.compact();
  const auto uses = dag.use_counts();
  std::ostringstream out;
  for (const auto& name : dag.input_names()) {
    const IndexSet& s = dag.input_index_set(name);
    out << "var " << name << " : " << join_labels(s.labels()) << " (" << dims_text(s) << ")\n";
  }
  std::map<NodeId, std::string> bound;
  std::function<std::string(NodeId, bool)> text = [&](NodeId id, bool body) -> std::string {
    if (auto it = bound.find(id); it != bound.end() && !body) return it->second;
    const Node& n = dag.node(id);
    auto child = [&](std::size_t i) { return text(n.children[i], false); };
    switch (n.kind) {
      case NodeKind::Variable: return n.name;
      case NodeKind::ConstScalar:
        if (n.index_set.empty()) return format_number(n.value);
        return "fill(" + format_number(n.value) + "; " + join_labels(n.index_set.labels()) + "; " +
               dims_text(n.index_set) + ")";
      case NodeKind::ConstTensor: {
        std::string s = "tensor(" + join_labels(n.index_set.labels()) + "; " + dims_text(n.index_set) + "; ";
        bool first = true;
        for (double v : n.tensor->data()) {
          s += (first ? "" : ", ") + format_number(v);
          first = false;
        }
        return s + ")";
      }
      case NodeKind::Delta:
        return "delta(" + join_labels(n.s1.labels()) + "|" + join_labels(n.s2.labels()) + "; " + dims_text(n.s1) + ")";
      case NodeKind::Add: return "(" + child(0) + " + " + child(1) + ")";
      case NodeKind::Einsum:
        return "einsum(" + join_labels(n.s1.labels()) + "," + join_labels(n.s2.labels()) + "->" +
               join_labels(n.s3.labels()) + "; " + child(0) + ", " + child(1) + ")";
      case NodeKind::ElemUnary: return n.name + "(" + child(0) + ")";
      case NodeKind::GenUnary: {
        const Labels range = n.s2.labels();
        if (range == dag.node(n.children[0]).index_set.labels()) return n.name + "(" + child(0) + ")";
        return n.name + "(" + child(0) + "; " + join_labels(range) + ")";
      }
    }
    return "?";
  };
  for (NodeId id : dag.reachable()) {
    const Node& n = dag.node(id);
    const bool leaf = n.children.empty();
    if (leaf || uses[id] < 2) continue;
    const std::string name = "_t" + std::to_string(bound.size() + 1);
    out << "let " << name << " = " << text(id, true) << "\n";
    bound[id] = name;
  }
  for (NodeId o : dag.outputs()) out << text(o, false) << "\n";
  return out.str();
}

}  // namespace tensorcalc
