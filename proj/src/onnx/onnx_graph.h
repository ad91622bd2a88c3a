#pragma once

// Minimal CPU executor for ONNX graphs exported from vision transformers.
// Supports the operator subset torch emits for ViT-style encoders (see
// op_registry in onnx_ops.cpp); float32 / int64 / bool tensors only.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace attnsel::onnx {

enum class Kind { kFloat, kInt, kBool };

// Host tensor. Scalars have an empty shape. Ints and bools share `i`.
struct Value {
  Kind kind = Kind::kFloat;
  std::vector<std::int64_t> shape;
  std::vector<float> f;
  std::vector<std::int64_t> i;

  static Value floats(std::vector<std::int64_t> shape, std::vector<float> data);
  static Value ints(std::vector<std::int64_t> shape, std::vector<std::int64_t> data);
  static Value bools(std::vector<std::int64_t> shape, std::vector<std::int64_t> data);

  std::size_t size() const;
  std::int64_t rank() const { return static_cast<std::int64_t>(shape.size()); }
  bool is_float() const { return kind == Kind::kFloat; }
};

struct Attribute {
  std::optional<std::int64_t> i;
  std::optional<float> f;
  std::optional<std::string> s;
  std::vector<std::int64_t> ints;
  std::vector<float> floats;
  std::optional<Value> t;
};

struct Node {
  std::string op;
  std::string name;
  std::vector<std::string> inputs;   // "" marks an omitted optional input
  std::vector<std::string> outputs;
  std::map<std::string, Attribute> attrs;

  std::int64_t attr_int(const std::string& key, std::int64_t fallback) const;
  float attr_float(const std::string& key, float fallback) const;
  std::string attr_string(const std::string& key, const std::string& fallback) const;
  std::optional<std::vector<std::int64_t>> attr_ints(const std::string& key) const;
  bool has(const std::string& key) const { return attrs.count(key) != 0; }
};

struct OpContext {
  const Node& node;
  std::int64_t opset;
  std::span<const Value* const> inputs;  // nullptr for omitted optionals

  const Value& in(std::size_t k) const;
  const Value* opt(std::size_t k) const { return k < inputs.size() ? inputs[k] : nullptr; }
  std::size_t output_count() const { return node.outputs.size(); }
};

using OpFn = std::function<std::vector<Value>(const OpContext&)>;

const std::unordered_map<std::string, OpFn>& op_registry();

class Graph {
 public:
  static Graph load(const std::filesystem::path& path);
  static Graph parse(const std::string& bytes, std::string id);

  const std::string& id() const { return id_; }
  std::int64_t opset() const { return opset_; }
  const std::vector<std::string>& input_names() const { return inputs_; }
  const std::vector<std::string>& output_names() const { return outputs_; }

  // Runs the graph; returns the requested outputs (all graph outputs if empty).
  std::map<std::string, Value> run(const std::map<std::string, Value>& feeds,
                                   const std::vector<std::string>& wanted = {}) const;

 private:
  std::string id_;
  std::int64_t opset_ = 0;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, Value> initializers_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  std::unordered_map<std::string, std::size_t> last_use_;
};

}  // namespace attnsel::onnx
