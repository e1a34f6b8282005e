#include "tensorcalc/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "tensorcalc/parser.hpp"

namespace tensorcalc {

using json = nlohmann::ordered_json;

namespace {

json set_json(const IndexSet& s) {
  json out = json::array();
  for (const Index& i : s) out.push_back(i.label + ":" + std::to_string(i.dim));
  return out;
}

IndexSet set_from_json(const json& j) {
  std::vector<Index> out;
  for (const auto& e : j) {
    const std::string s = e.get<std::string>();
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw Error(ErrorCode::FormatError, "index '" + s + "' lacks ':dim'");
    out.push_back({s.substr(0, colon), std::stoll(s.substr(colon + 1))});
  }
  return IndexSet(std::move(out));
}

Labels labels_from_json(const json& j) {
  Labels out;
  for (const auto& e : j) out.push_back(e.get<std::string>());
  return out;
}

json tensor_json(const DenseTensor& t) {
  json out;
  out["dims"] = t.dims();
  json data = json::array();
  for (double v : t.data()) data.push_back(v);
  out["data"] = std::move(data);
  return out;
}

DenseTensor tensor_of_json(const json& j) {
  auto dims = j.at("dims").get<std::vector<std::int64_t>>();
  auto data = j.at("data").get<std::vector<double>>();
  return DenseTensor(std::move(dims), std::move(data));
}

json dag_json(const ExprDag& dag) {
  json out;
  out["format"] = "tensorcalc-dag";
  out["version"] = 1;
  json inputs = json::array();
  for (const auto& name : dag.input_names()) {
    json in;
    in["name"] = name;
    in["index_set"] = set_json(dag.input_index_set(name));
    inputs.push_back(std::move(in));
  }
  out["inputs"] = std::move(inputs);
  json nodes = json::array();
  for (NodeId id = 0; id < dag.store_size(); ++id) {
    const Node& n = dag.node(id);
    json j;
    j["id"] = id;
    j["kind"] = kind_name(n.kind);
    j["index_set"] = set_json(n.index_set);
    j["children"] = n.children;
    switch (n.kind) {
      case NodeKind::Variable: j["name"] = n.name; break;
      case NodeKind::ConstScalar: j["value"] = n.value; break;
      case NodeKind::ConstTensor: j["data"] = tensor_json(*n.tensor)["data"]; break;
      case NodeKind::Delta:
        j["left"] = set_json(n.s1);
        j["right"] = set_json(n.s2);
        break;
      case NodeKind::Einsum:
        j["s1"] = n.s1.labels();
        j["s2"] = n.s2.labels();
        j["s3"] = n.s3.labels();
        break;
      case NodeKind::ElemUnary: j["op_name"] = n.name; break;
      case NodeKind::GenUnary:
        j["op_name"] = n.name;
        j["domain"] = set_json(n.s1);
        j["range"] = set_json(n.s2);
        break;
      case NodeKind::Add: break;
    }
    nodes.push_back(std::move(j));
  }
  out["nodes"] = std::move(nodes);
  out["outputs"] = dag.outputs();
  return out;
}

ExprDag dag_of_json(const json& root) {
  if (root.value("format", "") != "tensorcalc-dag") throw Error(ErrorCode::FormatError, "not a tensorcalc DAG");
  ExprDag dag;
  for (const auto& in : root.at("inputs")) {
    dag.declare_input(in.at("name").get<std::string>(), set_from_json(in.at("index_set")));
  }
  std::vector<NodeId> ids;
  for (const auto& j : root.at("nodes")) {
    auto kind = kind_from_name(j.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::FormatError, "unknown node kind");
    std::vector<NodeId> ch;
    for (const auto& c : j.at("children")) {
      const auto idx = c.get<std::size_t>();
      if (idx >= ids.size()) throw Error(ErrorCode::FormatError, "child refers forward");
      ch.push_back(ids[idx]);
    }
    const IndexSet set = set_from_json(j.at("index_set"));
    NodeId id = 0;
    switch (*kind) {
      case NodeKind::Variable: id = dag.variable(j.at("name").get<std::string>(), set); break;
      case NodeKind::ConstScalar: id = dag.fill(j.at("value").get<double>(), set); break;
      case NodeKind::ConstTensor:
        id = dag.tensor(set, DenseTensor(set.dims(), j.at("data").get<std::vector<double>>()));
        break;
      case NodeKind::Delta: id = dag.delta(set_from_json(j.at("left")), set_from_json(j.at("right"))); break;
      case NodeKind::Add: id = dag.add(ch.at(0), ch.at(1)); break;
      case NodeKind::Einsum:
        id = dag.einsum(ch.at(0), labels_from_json(j.at("s1")), ch.at(1), labels_from_json(j.at("s2")),
                        labels_from_json(j.at("s3")));
        break;
      case NodeKind::ElemUnary: id = dag.elem_unary(j.at("op_name").get<std::string>(), ch.at(0)); break;
      case NodeKind::GenUnary:
        id = dag.gen_unary(j.at("op_name").get<std::string>(), ch.at(0), set_from_json(j.at("range")).labels());
        break;
    }
    if (dag.node(id).index_set != set || id != ids.size()) {
      throw Error(ErrorCode::FormatError, "node " + std::to_string(ids.size()) + " does not rebuild as listed");
    }
    ids.push_back(id);
  }
  std::vector<NodeId> outs;
  for (const auto& o : root.at("outputs")) outs.push_back(ids.at(o.get<std::size_t>()));
  dag.set_outputs(std::move(outs));
  return dag;
}

json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("malformed JSON: ") + e.what());
  }
}

template <typename F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::FormatError, std::string("bad JSON structure: ") + e.what());
  }
}

}  // namespace

std::string dag_to_json(const ExprDag& dag) { return dag_json(dag.compact()).dump(2) + "\n"; }

ExprDag dag_from_json(std::string_view text) {
  json root = parse_json(text);
  return guarded([&] { return dag_of_json(root); });
}

std::string derivative_to_json(const DerivativeResult& input) {
  // Compaction keeps output order, so the ids follow the outputs.
  DerivativeResult r = input;
  r.dag = input.dag.compact();
  r.expr = r.dag.outputs().at(0);
  if (r.compression) {
    r.compression->core = r.dag.outputs().at(0);
    r.compression->trailing = r.dag.outputs().at(1);
  }
  json out = dag_json(r.dag);
  json d;
  d["wrt"] = r.wrt;
  d["output"] = r.output;
  d["order"] = r.order;
  d["expr_id"] = r.expr;
  out["derivative"] = std::move(d);
  if (r.compression) {
    const CompressionRecord& c = *r.compression;
    json block;
    block["core_id"] = c.core;
    block["trailing_id"] = c.trailing;
    block["sig"] = join_labels(c.core_labels) + "," + join_labels(c.trailing_labels) + "->" + join_labels(c.full_labels);
    json sig;
    sig["core"] = c.core_labels;
    sig["trailing"] = c.trailing_labels;
    sig["full"] = c.full_labels;
    block["labels"] = std::move(sig);
    json pairs = json::array();
    for (const auto& [l, rr] : c.delta_pairs) pairs.push_back(json::array({l, rr}));
    block["delta_pairs"] = std::move(pairs);
    block["core_index_set"] = set_json(r.dag.node(c.core).index_set);
    out["compression"] = std::move(block);
  }
  return out.dump(2) + "\n";
}

DerivativeResult derivative_from_json(std::string_view text) {
  json root = parse_json(text);
  return guarded([&] {
    DerivativeResult r;
    r.dag = dag_of_json(root);
    const json& d = root.at("derivative");
    r.wrt = d.at("wrt").get<std::string>();
    r.output = d.at("output").get<std::size_t>();
    r.order = d.at("order").get<int>();
    r.expr = d.at("expr_id").get<NodeId>();
    if (root.contains("compression")) {
      const json& b = root.at("compression");
      CompressionRecord c;
      c.core = b.at("core_id").get<NodeId>();
      c.trailing = b.at("trailing_id").get<NodeId>();
      c.core_labels = labels_from_json(b.at("labels").at("core"));
      c.trailing_labels = labels_from_json(b.at("labels").at("trailing"));
      c.full_labels = labels_from_json(b.at("labels").at("full"));
      for (const auto& p : b.at("delta_pairs")) c.delta_pairs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
      r.compression = c;
    }
    return r;
  });
}

std::string tensor_to_json(const DenseTensor& t) { return tensor_json(t).dump() + "\n"; }

DenseTensor tensor_from_json(std::string_view text) {
  json root = parse_json(text);
  return guarded([&] { return tensor_of_json(root); });
}

namespace {

template <typename T>
void put_le(std::string& out, T value) {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::string_view in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorCode::FormatError, "truncated TCT1 data");
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, in.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  pos += sizeof(T);
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

std::string tensor_to_tct1(const DenseTensor& t) {
  std::string out = "TCT1";
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.dims()) put_le<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  for (double v : t.data()) put_le<double>(out, v);
  return out;
}

DenseTensor tensor_from_tct1(std::string_view bytes) {
  if (bytes.substr(0, 4) != "TCT1") throw Error(ErrorCode::FormatError, "missing TCT1 magic");
  std::size_t pos = 4;
  const auto rank = get_le<std::uint32_t>(bytes, pos);
  std::vector<std::int64_t> dims;
  for (std::uint32_t i = 0; i < rank; ++i) dims.push_back(static_cast<std::int64_t>(get_le<std::uint64_t>(bytes, pos)));
  std::vector<double> data(static_cast<std::size_t>(element_count(dims)));
  for (double& v : data) v = get_le<double>(bytes, pos);
  if (pos != bytes.size()) throw Error(ErrorCode::FormatError, "trailing bytes after TCT1 data");
  return DenseTensor(std::move(dims), std::move(data));
}

DenseTensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  if (bytes.rfind("TCT1", 0) == 0) return tensor_from_tct1(bytes);
  return tensor_from_json(bytes);
}

void save_tensor(const std::string& path, const DenseTensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write '" + path + "'");
  const bool json_file = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
  out << (json_file ? tensor_to_json(t) : tensor_to_tct1(t));
}

Environment environment_from_json(std::string_view text) {
  json root = parse_json(text);
  return guarded([&] {
    Environment env;
    for (const auto& [name, value] : root.items()) env[name] = tensor_of_json(value);
    return env;
  });
}

std::string environment_to_json(const Environment& env) {
  json out;
  for (const auto& [name, t] : env) out[name] = tensor_json(t);
  return out.dump() + "\n";
}

std::string dag_to_dot(const ExprDag& input, const std::string& title) {
  const ExprDag dag = input.compact();
  std::ostringstream out;
  out << "digraph \"" << title << "\" {\n";
  out << "  rankdir=BT;\n  node [shape=box, fontname=\"Helvetica\"];\n";
  std::vector<bool> is_output(dag.store_size(), false);
  for (NodeId o : dag.outputs()) is_output[o] = true;
  for (NodeId id : dag.reachable()) {
    const Node& n = dag.node(id);
    std::string label = kind_name(n.kind);
    switch (n.kind) {
      case NodeKind::Variable: label = n.name; break;
      case NodeKind::ConstScalar: label = "const " + format_number(n.value); break;
      case NodeKind::ElemUnary:
      case NodeKind::GenUnary: label = n.name; break;
      case NodeKind::Einsum:
        label = "* " + join_labels(n.s1.labels()) + "," + join_labels(n.s2.labels()) + "->" + join_labels(n.s3.labels());
        break;
      case NodeKind::Delta: label = "delta " + join_labels(n.s1.labels()) + "|" + join_labels(n.s2.labels()); break;
      case NodeKind::Add: label = "+"; break;
      default: break;
    }
    out << "  n" << id << " [label=\"" << label << "\\n[" << n.index_set.to_string() << "]\"";
    if (n.order() >= 4) out << ", color=red, fontcolor=red";
    if (is_output[id]) out << ", peripheries=2";
    out << "];\n";
  }
  for (NodeId id : dag.reachable()) {
    for (NodeId c : dag.node(id).children) out << "  n" << c << " -> n" << id << ";\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace tensorcalc
