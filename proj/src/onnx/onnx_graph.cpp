#include "onnx/onnx_graph.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "attnsel/errors.h"
#include "onnx.pb.h"

namespace attnsel::onnx {

Value Value::floats(std::vector<std::int64_t> shape, std::vector<float> data) {
  Value v;
  v.kind = Kind::kFloat;
  v.shape = std::move(shape);
  v.f = std::move(data);
  return v;
}

Value Value::ints(std::vector<std::int64_t> shape, std::vector<std::int64_t> data) {
  Value v;
  v.kind = Kind::kInt;
  v.shape = std::move(shape);
  v.i = std::move(data);
  return v;
}

Value Value::bools(std::vector<std::int64_t> shape, std::vector<std::int64_t> data) {
  auto v = ints(std::move(shape), std::move(data));
  v.kind = Kind::kBool;
  return v;
}

std::size_t Value::size() const {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::int64_t Node::attr_int(const std::string& key, std::int64_t fallback) const {
  const auto it = attrs.find(key);
  return it != attrs.end() && it->second.i ? *it->second.i : fallback;
}

float Node::attr_float(const std::string& key, float fallback) const {
  const auto it = attrs.find(key);
  return it != attrs.end() && it->second.f ? *it->second.f : fallback;
}

std::string Node::attr_string(const std::string& key, const std::string& fallback) const {
  const auto it = attrs.find(key);
  return it != attrs.end() && it->second.s ? *it->second.s : fallback;
}

std::optional<std::vector<std::int64_t>> Node::attr_ints(const std::string& key) const {
  const auto it = attrs.find(key);
  if (it == attrs.end()) return std::nullopt;
  return it->second.ints;
}

const Value& OpContext::in(std::size_t k) const {
  if (k >= inputs.size() || inputs[k] == nullptr) {
    throw FormatError(node.op + " node '" + node.name + "' is missing required input " + std::to_string(k));
  }
  return *inputs[k];
}

namespace {

template <typename T>
T read_le(const std::string& raw, std::size_t index) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint8_t>>;
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(T); ++b) {
    bits |= static_cast<U>(static_cast<std::uint8_t>(raw[index * sizeof(T) + b])) << (8 * b);
  }
  return std::bit_cast<T>(bits);
}

Value convert_tensor(const ::onnx::TensorProto& t) {
  if (t.data_location() == ::onnx::TensorProto::EXTERNAL) {
    throw FormatError("tensor '" + t.name() + "' uses external data, which is not supported");
  }
  std::vector<std::int64_t> shape(t.dims().begin(), t.dims().end());
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  const auto& raw = t.raw_data();
  const bool has_raw = t.has_raw_data();

  switch (t.data_type()) {
    case ::onnx::TensorProto::FLOAT: {
      std::vector<float> v(n);
      for (std::size_t k = 0; k < n; ++k) v[k] = has_raw ? read_le<float>(raw, k) : t.float_data(static_cast<int>(k));
      return Value::floats(std::move(shape), std::move(v));
    }
    case ::onnx::TensorProto::DOUBLE: {
      std::vector<float> v(n);
      for (std::size_t k = 0; k < n; ++k) {
        v[k] = static_cast<float>(has_raw ? read_le<double>(raw, k) : t.double_data(static_cast<int>(k)));
      }
      return Value::floats(std::move(shape), std::move(v));
    }
    case ::onnx::TensorProto::INT64: {
      std::vector<std::int64_t> v(n);
      for (std::size_t k = 0; k < n; ++k) v[k] = has_raw ? read_le<std::int64_t>(raw, k) : t.int64_data(static_cast<int>(k));
      return Value::ints(std::move(shape), std::move(v));
    }
    case ::onnx::TensorProto::INT32: {
      std::vector<std::int64_t> v(n);
      for (std::size_t k = 0; k < n; ++k) v[k] = has_raw ? read_le<std::int32_t>(raw, k) : t.int32_data(static_cast<int>(k));
      return Value::ints(std::move(shape), std::move(v));
    }
    case ::onnx::TensorProto::BOOL:
    case ::onnx::TensorProto::UINT8:
    case ::onnx::TensorProto::INT8: {
      std::vector<std::int64_t> v(n);
      for (std::size_t k = 0; k < n; ++k) {
        if (has_raw) {
          v[k] = t.data_type() == ::onnx::TensorProto::INT8 ? static_cast<std::int8_t>(raw[k])
                                                            : static_cast<std::uint8_t>(raw[k]);
        } else {
          v[k] = t.int32_data(static_cast<int>(k));
        }
      }
      return t.data_type() == ::onnx::TensorProto::BOOL ? Value::bools(std::move(shape), std::move(v))
                                                        : Value::ints(std::move(shape), std::move(v));
    }
    default:
      throw FormatError("tensor '" + t.name() + "' has unsupported data type " + std::to_string(t.data_type()));
  }
}

Attribute convert_attribute(const ::onnx::AttributeProto& a) {
  Attribute out;
  switch (a.type()) {
    case ::onnx::AttributeProto::INT:
      out.i = a.i();
      break;
    case ::onnx::AttributeProto::FLOAT:
      out.f = a.f();
      break;
    case ::onnx::AttributeProto::STRING:
      out.s = a.s();
      break;
    case ::onnx::AttributeProto::INTS:
      out.ints.assign(a.ints().begin(), a.ints().end());
      break;
    case ::onnx::AttributeProto::FLOATS:
      out.floats.assign(a.floats().begin(), a.floats().end());
      break;
    case ::onnx::AttributeProto::TENSOR:
      out.t = convert_tensor(a.t());
      break;
    default:
      throw FormatError("attribute '" + a.name() + "' has unsupported type " + std::to_string(a.type()));
  }
  return out;
}

}  // namespace

Graph Graph::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open ONNX model: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(bytes, path.string());
}

Graph Graph::parse(const std::string& bytes, std::string id) {
  ::onnx::ModelProto model;
  if (!model.ParseFromString(bytes)) throw FormatError(id + ": not a valid ONNX model");

  Graph g;
  g.id_ = std::move(id);
  for (const auto& imp : model.opset_import()) {
    if (imp.domain().empty() || imp.domain() == "ai.onnx") g.opset_ = imp.version();
  }
  if (g.opset_ == 0) throw FormatError(g.id_ + ": model imports no default-domain opset");

  const auto& graph = model.graph();
  for (const auto& init : graph.initializer()) g.initializers_.emplace(init.name(), convert_tensor(init));
  for (const auto& in : graph.input()) {
    if (!g.initializers_.count(in.name())) g.inputs_.push_back(in.name());
  }
  for (const auto& out : graph.output()) g.outputs_.push_back(out.name());

  const auto& registry = op_registry();
  std::set<std::string> missing;
  for (const auto& n : graph.node()) {
    if (!n.domain().empty() && n.domain() != "ai.onnx") {
      throw FormatError(g.id_ + ": node '" + n.name() + "' uses custom domain '" + n.domain() + "'");
    }
    Node node;
    node.op = n.op_type();
    node.name = n.name();
    node.inputs.assign(n.input().begin(), n.input().end());
    node.outputs.assign(n.output().begin(), n.output().end());
    for (const auto& a : n.attribute()) node.attrs.emplace(a.name(), convert_attribute(a));
    if (!registry.count(node.op)) missing.insert(node.op);
    g.nodes_.push_back(std::move(node));
  }
  if (!missing.empty()) {
    std::string msg = g.id_ + ": unsupported ONNX operators:";
    for (const auto& op : missing) msg += " " + op;
    throw FormatError(msg);
  }

  for (std::size_t k = 0; k < g.nodes_.size(); ++k) {
    for (const auto& name : g.nodes_[k].inputs) {
      if (!name.empty()) g.last_use_[name] = k;
    }
  }
  return g;
}

std::map<std::string, Value> Graph::run(const std::map<std::string, Value>& feeds,
                                        const std::vector<std::string>& wanted) const {
  const auto& names = wanted.empty() ? outputs_ : wanted;
  const std::set<std::string> keep(names.begin(), names.end());
  std::unordered_map<std::string, Value> env;
  for (const auto& name : inputs_) {
    const auto it = feeds.find(name);
    if (it == feeds.end()) throw BackendError(id_ + ": missing graph input '" + name + "'");
    env.emplace(name, it->second);
  }

  auto lookup = [&](const std::string& name) -> const Value* {
    if (name.empty()) return nullptr;
    if (auto it = env.find(name); it != env.end()) return &it->second;
    if (auto it = initializers_.find(name); it != initializers_.end()) return &it->second;
    throw BackendError(id_ + ": value '" + name + "' used before it is produced");
  };

  const auto& registry = op_registry();
  std::vector<const Value*> args;
  for (std::size_t k = 0; k < nodes_.size(); ++k) {
    const auto& node = nodes_[k];
    args.clear();
    for (const auto& name : node.inputs) args.push_back(lookup(name));
    std::vector<Value> results;
    try {
      results = registry.at(node.op)(OpContext{node, opset_, args});
    } catch (const BackendError&) {
      throw;
    } catch (const std::exception& e) {
      throw BackendError(id_ + ": " + node.op + " node '" + node.name + "' failed: " + e.what());
    }
    for (std::size_t o = 0; o < node.outputs.size() && o < results.size(); ++o) {
      if (!node.outputs[o].empty()) env[node.outputs[o]] = std::move(results[o]);
    }
    for (const auto& name : node.inputs) {
      auto it = last_use_.find(name);
      if (it != last_use_.end() && it->second == k && !keep.count(name)) env.erase(name);
    }
  }

  std::map<std::string, Value> out;
  for (const auto& name : names) {
    const auto* v = lookup(name);
    if (!v) throw BackendError(id_ + ": output '" + name + "' was not produced");
    out.emplace(name, *v);
  }
  return out;
}

}  // namespace attnsel::onnx
