#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Core>

#include "attnsel/errors.h"
#include "onnx/onnx_graph.h"

namespace attnsel::onnx {

namespace {

using Dims = std::vector<std::int64_t>;
using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

[[noreturn]] void fail(const std::string& msg) { throw ArgumentError(msg); }

std::int64_t product(const Dims& d, std::size_t from = 0, std::size_t to = std::numeric_limits<std::size_t>::max()) {
  std::int64_t n = 1;
  for (std::size_t k = from; k < std::min(to, d.size()); ++k) n *= d[k];
  return n;
}

std::int64_t norm_axis(std::int64_t axis, std::int64_t rank) {
  if (axis < -rank || axis >= std::max<std::int64_t>(rank, 1)) {
    fail("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return axis < 0 ? axis + rank : axis;
}

Dims strides_of(const Dims& shape) {
  Dims s(shape.size(), 1);
  for (std::int64_t k = static_cast<std::int64_t>(shape.size()) - 2; k >= 0; --k) {
    s[static_cast<std::size_t>(k)] = s[static_cast<std::size_t>(k + 1)] * shape[static_cast<std::size_t>(k + 1)];
  }
  return s;
}

std::vector<std::int64_t> as_ints(const Value& v) {
  if (v.kind == Kind::kFloat) {
    std::vector<std::int64_t> out(v.f.size());
    for (std::size_t k = 0; k < v.f.size(); ++k) out[k] = static_cast<std::int64_t>(v.f[k]);
    return out;
  }
  return v.i;
}

std::vector<float> as_floats(const Value& v) {
  if (v.kind == Kind::kFloat) return v.f;
  return {v.i.begin(), v.i.end()};
}

Value like(const Value& proto, Dims shape) {
  Value v;
  v.kind = proto.kind;
  v.shape = std::move(shape);
  if (v.kind == Kind::kFloat) {
    v.f.resize(v.size());
  } else {
    v.i.resize(v.size());
  }
  return v;
}

Dims broadcast_shapes(const std::vector<const Dims*>& shapes) {
  std::size_t rank = 0;
  for (const auto* s : shapes) rank = std::max(rank, s->size());
  Dims out(rank, 1);
  for (const auto* s : shapes) {
    const auto off = rank - s->size();
    for (std::size_t k = 0; k < s->size(); ++k) {
      const auto d = (*s)[k];
      auto& o = out[off + k];
      if (d == o || d == 1) continue;
      if (o == 1) {
        o = d;
      } else {
        fail("shapes are not broadcastable");
      }
    }
  }
  return out;
}

// Walks an output shape while tracking one flat offset per broadcast input.
class Broadcaster {
 public:
  Broadcaster(Dims out_shape, const std::vector<const Dims*>& in_shapes) : out_(std::move(out_shape)) {
    const auto rank = out_.size();
    for (const auto* s : in_shapes) {
      Dims st(rank, 0);
      const auto own = strides_of(*s);
      const auto off = rank - s->size();
      for (std::size_t k = 0; k < s->size(); ++k) st[off + k] = (*s)[k] == 1 ? 0 : own[k];
      strides_.push_back(std::move(st));
    }
  }

  template <typename F>
  void run(F&& f) const {
    const auto n = static_cast<std::size_t>(product(out_));
    const auto inputs = strides_.size();
    std::vector<std::int64_t> offs(inputs, 0);
    Dims counter(out_.size(), 0);
    for (std::size_t o = 0; o < n; ++o) {
      f(o, offs.data());
      for (std::int64_t d = static_cast<std::int64_t>(out_.size()) - 1; d >= 0; --d) {
        const auto du = static_cast<std::size_t>(d);
        ++counter[du];
        for (std::size_t k = 0; k < inputs; ++k) offs[k] += strides_[k][du];
        if (counter[du] < out_[du]) break;
        for (std::size_t k = 0; k < inputs; ++k) offs[k] -= strides_[k][du] * out_[du];
        counter[du] = 0;
      }
    }
  }

 private:
  Dims out_;
  std::vector<Dims> strides_;
};

enum class BinKind { kArith, kCompare };

template <typename FF, typename FI>
Value binary(const Value& a, const Value& b, FF ff, FI fi, BinKind kind) {
  const bool floats = a.is_float() && b.is_float();
  if (a.is_float() != b.is_float()) fail("binary op on mixed float/int operands");
  const auto out_shape = broadcast_shapes({&a.shape, &b.shape});
  Value out;
  out.shape = out_shape;
  out.kind = kind == BinKind::kCompare ? Kind::kBool : a.kind;
  const auto n = out.size();
  if (out.kind == Kind::kFloat) {
    out.f.resize(n);
  } else {
    out.i.resize(n);
  }

  auto emit = [&](std::size_t o, std::size_t ia, std::size_t ib) {
    if (floats) {
      if (kind == BinKind::kCompare) {
        out.i[o] = ff(a.f[ia], b.f[ib]) != 0.0f;
      } else {
        out.f[o] = ff(a.f[ia], b.f[ib]);
      }
    } else {
      out.i[o] = fi(a.i[ia], b.i[ib]);
    }
  };

  if (a.shape == out_shape && b.shape == out_shape) {
    for (std::size_t o = 0; o < n; ++o) emit(o, o, o);
  } else if (a.shape == out_shape && b.size() == 1) {
    for (std::size_t o = 0; o < n; ++o) emit(o, o, 0);
  } else if (b.shape == out_shape && a.size() == 1) {
    for (std::size_t o = 0; o < n; ++o) emit(o, 0, o);
  } else if (a.shape == out_shape && b.shape.size() <= a.shape.size() &&
             std::equal(b.shape.rbegin(), b.shape.rend(), a.shape.rbegin())) {
    const auto m = b.size();
    for (std::size_t o = 0; o < n; ++o) emit(o, o, o % m);
  } else {
    Broadcaster(out_shape, {&a.shape, &b.shape}).run([&](std::size_t o, const std::int64_t* offs) {
      emit(o, static_cast<std::size_t>(offs[0]), static_cast<std::size_t>(offs[1]));
    });
  }
  return out;
}

template <typename F>
Value unary_float(const Value& x, F f) {
  if (!x.is_float()) fail("expected a float tensor");
  Value out = x;
  for (auto& v : out.f) v = f(v);
  return out;
}

std::vector<Value> one(Value v) {
  std::vector<Value> out;
  out.push_back(std::move(v));
  return out;
}

// ---- elementwise -------------------------------------------------------

std::vector<Value> op_add(const OpContext& c) {
  return one(binary(c.in(0), c.in(1), [](float x, float y) { return x + y; },
                    [](std::int64_t x, std::int64_t y) { return x + y; }, BinKind::kArith));
}
std::vector<Value> op_sub(const OpContext& c) {
  return one(binary(c.in(0), c.in(1), [](float x, float y) { return x - y; },
                    [](std::int64_t x, std::int64_t y) { return x - y; }, BinKind::kArith));
}
std::vector<Value> op_mul(const OpContext& c) {
  return one(binary(c.in(0), c.in(1), [](float x, float y) { return x * y; },
                    [](std::int64_t x, std::int64_t y) { return x * y; }, BinKind::kArith));
}
std::vector<Value> op_div(const OpContext& c) {
  return one(binary(c.in(0), c.in(1), [](float x, float y) { return x / y; },
                    [](std::int64_t x, std::int64_t y) {
                      if (y == 0) fail("integer division by zero");
                      return x / y;
                    },
                    BinKind::kArith));
}
std::vector<Value> op_pow(const OpContext& c) {
  auto base = c.in(0);
  auto expo = c.in(1);
  if (!base.is_float()) fail("Pow supports float bases only");
  if (!expo.is_float()) expo = Value::floats(expo.shape, as_floats(expo));
  return one(binary(base, expo,
                    [](float x, float y) {
                      if (y == 2.0f) return x * x;
                      return static_cast<float>(std::pow(static_cast<double>(x), static_cast<double>(y)));
                    },
                    [](std::int64_t, std::int64_t) -> std::int64_t { return 0; }, BinKind::kArith));
}
std::vector<Value> op_mod(const OpContext& c) {
  const bool fmod = c.node.attr_int("fmod", 0) != 0;
  return one(binary(c.in(0), c.in(1),
                    [fmod](float x, float y) {
                      if (fmod) return std::fmod(x, y);
                      float r = std::fmod(x, y);
                      if (r != 0.0f && ((r < 0) != (y < 0))) r += y;
                      return r;
                    },
                    [fmod](std::int64_t x, std::int64_t y) {
                      if (y == 0) fail("integer modulo by zero");
                      std::int64_t r = x % y;
                      if (!fmod && r != 0 && ((r < 0) != (y < 0))) r += y;
                      return r;
                    },
                    BinKind::kArith));
}
std::vector<Value> op_max(const OpContext& c) {
  Value acc = c.in(0);
  for (std::size_t k = 1; k < c.inputs.size(); ++k) {
    acc = binary(acc, c.in(k), [](float x, float y) { return std::max(x, y); },
                 [](std::int64_t x, std::int64_t y) { return std::max(x, y); }, BinKind::kArith);
  }
  return one(std::move(acc));
}
std::vector<Value> op_min(const OpContext& c) {
  Value acc = c.in(0);
  for (std::size_t k = 1; k < c.inputs.size(); ++k) {
    acc = binary(acc, c.in(k), [](float x, float y) { return std::min(x, y); },
                 [](std::int64_t x, std::int64_t y) { return std::min(x, y); }, BinKind::kArith);
  }
  return one(std::move(acc));
}
std::vector<Value> op_equal(const OpContext& c) {
  return one(binary(c.in(0), c.in(1), [](float x, float y) { return x == y ? 1.0f : 0.0f; },
                    [](std::int64_t x, std::int64_t y) -> std::int64_t { return x == y; }, BinKind::kCompare));
}
std::vector<Value> op_less(const OpContext& c) {
  return one(binary(c.in(0), c.in(1), [](float x, float y) { return x < y ? 1.0f : 0.0f; },
                    [](std::int64_t x, std::int64_t y) -> std::int64_t { return x < y; }, BinKind::kCompare));
}
std::vector<Value> op_greater(const OpContext& c) {
  return one(binary(c.in(0), c.in(1), [](float x, float y) { return x > y ? 1.0f : 0.0f; },
                    [](std::int64_t x, std::int64_t y) -> std::int64_t { return x > y; }, BinKind::kCompare));
}
std::vector<Value> op_not(const OpContext& c) {
  Value out = c.in(0);
  if (out.kind != Kind::kBool) fail("Not expects a bool tensor");
  for (auto& v : out.i) v = !v;
  return one(std::move(out));
}

std::vector<Value> op_where(const OpContext& c) {
  const auto& cond = c.in(0);
  const auto& x = c.in(1);
  const auto& y = c.in(2);
  if (x.kind != y.kind) fail("Where branches differ in type");
  const auto shape = broadcast_shapes({&cond.shape, &x.shape, &y.shape});
  Value out = like(x, shape);
  Broadcaster(shape, {&cond.shape, &x.shape, &y.shape}).run([&](std::size_t o, const std::int64_t* offs) {
    const bool pick = cond.kind == Kind::kFloat ? cond.f[static_cast<std::size_t>(offs[0])] != 0.0f
                                                : cond.i[static_cast<std::size_t>(offs[0])] != 0;
    if (out.kind == Kind::kFloat) {
      out.f[o] = pick ? x.f[static_cast<std::size_t>(offs[1])] : y.f[static_cast<std::size_t>(offs[2])];
    } else {
      out.i[o] = pick ? x.i[static_cast<std::size_t>(offs[1])] : y.i[static_cast<std::size_t>(offs[2])];
    }
  });
  return one(std::move(out));
}

template <typename F>
OpFn float_unary(F f) {
  return [f](const OpContext& c) { return one(unary_float(c.in(0), f)); };
}

std::vector<Value> op_neg(const OpContext& c) {
  Value out = c.in(0);
  for (auto& v : out.f) v = -v;
  for (auto& v : out.i) v = -v;
  return one(std::move(out));
}
std::vector<Value> op_abs(const OpContext& c) {
  Value out = c.in(0);
  for (auto& v : out.f) v = std::abs(v);
  for (auto& v : out.i) v = std::abs(v);
  return one(std::move(out));
}

std::vector<Value> op_gelu(const OpContext& c) {
  const auto approx = c.node.attr_string("approximate", "none");
  if (approx == "tanh") {
    return one(unary_float(c.in(0), [](float x) {
      const double k = std::sqrt(2.0 / 3.14159265358979323846);
      return static_cast<float>(0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x))));
    }));
  }
  return one(unary_float(c.in(0), [](float x) {
    return static_cast<float>(0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))));
  }));
}

std::vector<Value> op_identity(const OpContext& c) {
  std::vector<Value> out;
  out.push_back(c.in(0));
  if (c.output_count() > 1) out.push_back(Value::bools(c.in(0).shape, std::vector<std::int64_t>(c.in(0).size(), 1)));
  return out;
}

std::vector<Value> op_cast(const OpContext& c) {
  const auto to = c.node.attr_int("to", 1);
  const auto& x = c.in(0);
  switch (to) {
    case 1:
    case 11:
      return one(Value::floats(x.shape, as_floats(x)));
    case 2:
    case 3:
    case 6:
    case 7:
      if (x.is_float()) {
        std::vector<std::int64_t> v(x.f.size());
        for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<std::int64_t>(x.f[k]);
        return one(Value::ints(x.shape, std::move(v)));
      }
      return one(Value::ints(x.shape, x.i));
    case 9: {
      std::vector<std::int64_t> v(x.size());
      for (std::size_t k = 0; k < v.size(); ++k) v[k] = x.is_float() ? x.f[k] != 0.0f : x.i[k] != 0;
      return one(Value::bools(x.shape, std::move(v)));
    }
    default:
      fail("Cast to unsupported type " + std::to_string(to));
  }
}

// ---- constants and shapes ---------------------------------------------

std::vector<Value> op_constant(const OpContext& c) {
  const auto& n = c.node;
  if (auto it = n.attrs.find("value"); it != n.attrs.end() && it->second.t) return one(*it->second.t);
  if (auto it = n.attrs.find("value_float"); it != n.attrs.end() && it->second.f) return one(Value::floats({}, {*it->second.f}));
  if (auto it = n.attrs.find("value_int"); it != n.attrs.end() && it->second.i) return one(Value::ints({}, {*it->second.i}));
  if (auto it = n.attrs.find("value_floats"); it != n.attrs.end()) {
    const auto& v = it->second.floats;
    return one(Value::floats({static_cast<std::int64_t>(v.size())}, v));
  }
  if (auto it = n.attrs.find("value_ints"); it != n.attrs.end()) {
    const auto& v = it->second.ints;
    return one(Value::ints({static_cast<std::int64_t>(v.size())}, v));
  }
  fail("Constant node without a supported value attribute");
}

std::vector<Value> op_constant_of_shape(const OpContext& c) {
  const auto shape = as_ints(c.in(0));
  Value fill = Value::floats({1}, {0.0f});
  if (auto it = c.node.attrs.find("value"); it != c.node.attrs.end() && it->second.t) fill = *it->second.t;
  Value out = like(fill, shape);
  if (out.kind == Kind::kFloat) {
    std::fill(out.f.begin(), out.f.end(), fill.f.at(0));
  } else {
    std::fill(out.i.begin(), out.i.end(), fill.i.at(0));
  }
  return one(std::move(out));
}

std::vector<Value> op_shape(const OpContext& c) {
  const auto& s = c.in(0).shape;
  const auto rank = static_cast<std::int64_t>(s.size());
  auto start = c.node.attr_int("start", 0);
  auto end = c.node.attr_int("end", rank);
  if (start < 0) start += rank;
  if (end < 0) end += rank;
  start = std::clamp<std::int64_t>(start, 0, rank);
  end = std::clamp<std::int64_t>(end, 0, rank);
  Dims v(s.begin() + start, s.begin() + std::max(start, end));
  const auto n = static_cast<std::int64_t>(v.size());
  return one(Value::ints({n}, std::move(v)));
}

std::vector<Value> op_size(const OpContext& c) {
  return one(Value::ints({}, {static_cast<std::int64_t>(c.in(0).size())}));
}

std::vector<Value> op_reshape(const OpContext& c) {
  const auto& x = c.in(0);
  auto target = as_ints(c.in(1));
  const bool allow_zero = c.node.attr_int("allowzero", 0) != 0;
  std::int64_t infer = -1;
  std::int64_t known = 1;
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (target[k] == 0 && !allow_zero) target[k] = x.shape.at(k);
    if (target[k] == -1) {
      if (infer >= 0) fail("Reshape with more than one -1");
      infer = static_cast<std::int64_t>(k);
    } else {
      known *= target[k];
    }
  }
  if (infer >= 0) target[static_cast<std::size_t>(infer)] = known == 0 ? 0 : static_cast<std::int64_t>(x.size()) / known;
  if (static_cast<std::size_t>(product(target)) != x.size()) fail("Reshape changes the element count");
  Value out = x;
  out.shape = std::move(target);
  return one(std::move(out));
}

std::vector<Value> op_flatten(const OpContext& c) {
  const auto& x = c.in(0);
  const auto rank = x.rank();
  auto axis = c.node.attr_int("axis", 1);
  if (axis < 0) axis += rank;
  Value out = x;
  out.shape = {product(x.shape, 0, static_cast<std::size_t>(axis)), product(x.shape, static_cast<std::size_t>(axis))};
  return one(std::move(out));
}

Dims axes_from(const OpContext& c, std::size_t input_index) {
  if (const auto* v = c.opt(input_index)) return as_ints(*v);
  if (auto a = c.node.attr_ints("axes")) return *a;
  return {};
}

std::vector<Value> op_squeeze(const OpContext& c) {
  const auto& x = c.in(0);
  auto axes = axes_from(c, 1);
  for (auto& a : axes) a = norm_axis(a, x.rank());
  Dims shape;
  for (std::int64_t k = 0; k < x.rank(); ++k) {
    const auto d = x.shape[static_cast<std::size_t>(k)];
    const bool listed = std::find(axes.begin(), axes.end(), k) != axes.end();
    if (axes.empty() ? d == 1 : listed) {
      if (d != 1) fail("Squeeze of a non-unit axis");
      continue;
    }
    shape.push_back(d);
  }
  Value out = x;
  out.shape = std::move(shape);
  return one(std::move(out));
}

std::vector<Value> op_unsqueeze(const OpContext& c) {
  const auto& x = c.in(0);
  auto axes = axes_from(c, 1);
  const auto out_rank = x.rank() + static_cast<std::int64_t>(axes.size());
  for (auto& a : axes) a = norm_axis(a, out_rank);
  std::sort(axes.begin(), axes.end());
  Dims shape;
  std::size_t src = 0;
  for (std::int64_t k = 0; k < out_rank; ++k) {
    if (std::binary_search(axes.begin(), axes.end(), k)) {
      shape.push_back(1);
    } else {
      shape.push_back(x.shape.at(src++));
    }
  }
  Value out = x;
  out.shape = std::move(shape);
  return one(std::move(out));
}

std::vector<Value> op_expand(const OpContext& c) {
  const auto& x = c.in(0);
  const auto target = as_ints(c.in(1));
  const auto shape = broadcast_shapes({&x.shape, &target});
  Value out = like(x, shape);
  Broadcaster(shape, {&x.shape}).run([&](std::size_t o, const std::int64_t* offs) {
    if (out.kind == Kind::kFloat) {
      out.f[o] = x.f[static_cast<std::size_t>(offs[0])];
    } else {
      out.i[o] = x.i[static_cast<std::size_t>(offs[0])];
    }
  });
  return one(std::move(out));
}

std::vector<Value> op_range(const OpContext& c) {
  const auto& start = c.in(0);
  if (start.is_float()) {
    const double s = c.in(0).f.at(0);
    const double l = c.in(1).f.at(0);
    const double d = c.in(2).f.at(0);
    const auto n = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil((l - s) / d)));
    std::vector<float> v(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) v[static_cast<std::size_t>(k)] = static_cast<float>(s + k * d);
    return one(Value::floats({n}, std::move(v)));
  }
  const auto s = c.in(0).i.at(0);
  const auto l = c.in(1).i.at(0);
  const auto d = c.in(2).i.at(0);
  if (d == 0) fail("Range with zero delta");
  const auto n = std::max<std::int64_t>(0, (l - s + d + (d > 0 ? -1 : 1)) / d);
  std::vector<std::int64_t> v(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k < n; ++k) v[static_cast<std::size_t>(k)] = s + k * d;
  return one(Value::ints({n}, std::move(v)));
}

// ---- data movement -----------------------------------------------------

std::vector<Value> op_transpose(const OpContext& c) {
  const auto& x = c.in(0);
  const auto rank = static_cast<std::size_t>(x.rank());
  auto perm = c.node.attr_ints("perm").value_or(Dims{});
  if (perm.empty()) {
    perm.resize(rank);
    std::iota(perm.rbegin(), perm.rend(), 0);
  }
  if (perm.size() != rank) fail("Transpose perm rank mismatch");
  Dims shape(rank);
  const auto in_strides = strides_of(x.shape);
  Dims src_strides(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    shape[k] = x.shape.at(static_cast<std::size_t>(perm[k]));
    src_strides[k] = in_strides[static_cast<std::size_t>(perm[k])];
  }
  Value out = like(x, shape);
  // Iterate the output in order; inner loop over the last output axis.
  const auto n = out.size();
  if (n == 0) return one(std::move(out));
  Dims counter(rank, 0);
  const auto last = rank == 0 ? 0 : shape[rank - 1];
  const auto last_stride = rank == 0 ? 0 : src_strides[rank - 1];
  std::int64_t base = 0;
  for (std::size_t o = 0; o < n;) {
    for (std::int64_t j = 0; j < std::max<std::int64_t>(last, 1); ++j, ++o) {
      const auto s = static_cast<std::size_t>(base + j * last_stride);
      if (out.kind == Kind::kFloat) {
        out.f[o] = x.f[s];
      } else {
        out.i[o] = x.i[s];
      }
    }
    for (std::int64_t d = static_cast<std::int64_t>(rank) - 2; d >= 0; --d) {
      const auto du = static_cast<std::size_t>(d);
      ++counter[du];
      base += src_strides[du];
      if (counter[du] < shape[du]) break;
      base -= src_strides[du] * shape[du];
      counter[du] = 0;
    }
  }
  return one(std::move(out));
}

std::vector<Value> op_concat(const OpContext& c) {
  std::vector<const Value*> parts;
  for (std::size_t k = 0; k < c.inputs.size(); ++k) {
    if (c.inputs[k] && c.inputs[k]->size() > 0) parts.push_back(c.inputs[k]);
  }
  if (parts.empty()) return one(c.in(0));
  const auto& first = *parts.front();
  const auto axis = static_cast<std::size_t>(norm_axis(c.node.attr_int("axis", 0), first.rank()));
  Dims shape = first.shape;
  shape[axis] = 0;
  for (const auto* p : parts) {
    if (p->rank() != first.rank() || p->kind != first.kind) fail("Concat inputs differ in rank or type");
    shape[axis] += p->shape[axis];
  }
  Value out = like(first, shape);
  const auto outer = product(shape, 0, axis);
  std::size_t pos = 0;
  for (std::int64_t o = 0; o < outer; ++o) {
    for (const auto* p : parts) {
      const auto block = static_cast<std::size_t>(product(p->shape, axis));
      const auto from = static_cast<std::size_t>(o) * block;
      if (out.kind == Kind::kFloat) {
        std::copy_n(p->f.begin() + static_cast<std::ptrdiff_t>(from), block, out.f.begin() + static_cast<std::ptrdiff_t>(pos));
      } else {
        std::copy_n(p->i.begin() + static_cast<std::ptrdiff_t>(from), block, out.i.begin() + static_cast<std::ptrdiff_t>(pos));
      }
      pos += block;
    }
  }
  return one(std::move(out));
}

std::vector<Value> op_gather(const OpContext& c) {
  const auto& x = c.in(0);
  const auto idx = as_ints(c.in(1));
  const auto& idx_shape = c.in(1).shape;
  const auto axis = static_cast<std::size_t>(norm_axis(c.node.attr_int("axis", 0), x.rank()));
  Dims shape(x.shape.begin(), x.shape.begin() + static_cast<std::ptrdiff_t>(axis));
  shape.insert(shape.end(), idx_shape.begin(), idx_shape.end());
  shape.insert(shape.end(), x.shape.begin() + static_cast<std::ptrdiff_t>(axis) + 1, x.shape.end());
  Value out = like(x, shape);
  const auto outer = product(x.shape, 0, axis);
  const auto dim = x.shape[axis];
  const auto inner = static_cast<std::size_t>(product(x.shape, axis + 1));
  std::size_t pos = 0;
  for (std::int64_t o = 0; o < outer; ++o) {
    for (auto j : idx) {
      if (j < 0) j += dim;
      if (j < 0 || j >= dim) fail("Gather index out of range");
      const auto from = static_cast<std::size_t>(o * dim + j) * inner;
      if (out.kind == Kind::kFloat) {
        std::copy_n(x.f.begin() + static_cast<std::ptrdiff_t>(from), inner, out.f.begin() + static_cast<std::ptrdiff_t>(pos));
      } else {
        std::copy_n(x.i.begin() + static_cast<std::ptrdiff_t>(from), inner, out.i.begin() + static_cast<std::ptrdiff_t>(pos));
      }
      pos += inner;
    }
  }
  return one(std::move(out));
}

std::vector<Value> op_slice(const OpContext& c) {
  const auto& x = c.in(0);
  Dims starts, ends, axes, steps;
  if (c.opset < 10) {
    starts = c.node.attr_ints("starts").value_or(Dims{});
    ends = c.node.attr_ints("ends").value_or(Dims{});
    axes = c.node.attr_ints("axes").value_or(Dims{});
  } else {
    starts = as_ints(c.in(1));
    ends = as_ints(c.in(2));
    if (const auto* a = c.opt(3)) axes = as_ints(*a);
    if (const auto* s = c.opt(4)) steps = as_ints(*s);
  }
  if (axes.empty()) {
    axes.resize(starts.size());
    std::iota(axes.begin(), axes.end(), 0);
  }
  if (steps.empty()) steps.assign(starts.size(), 1);

  const auto rank = static_cast<std::size_t>(x.rank());
  Dims begin(rank, 0), step(rank, 1), shape = x.shape;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    const auto a = static_cast<std::size_t>(norm_axis(axes[k], x.rank()));
    const auto dim = x.shape[a];
    const auto st = steps[k];
    if (st == 0) fail("Slice step 0");
    auto s = starts[k];
    auto e = ends[k];
    if (s < 0) s = s < -dim ? -1 : s + dim;  // values below -dim clamp low
    if (e < 0) e = e < -dim ? -1 : e + dim;
    if (st > 0) {
      s = std::clamp<std::int64_t>(s, 0, dim);
      e = std::clamp<std::int64_t>(e, 0, dim);
      shape[a] = std::max<std::int64_t>(0, (e - s + st - 1) / st);
    } else {
      s = std::clamp<std::int64_t>(s, -1, dim - 1);
      e = std::clamp<std::int64_t>(e, -1, dim - 1);
      shape[a] = std::max<std::int64_t>(0, (s - e - st - 1) / -st);
    }
    begin[a] = s;
    step[a] = st;
  }
  Value out = like(x, shape);
  if (out.size() == 0) return one(std::move(out));
  const auto in_strides = strides_of(x.shape);
  Dims src_strides(rank);
  std::int64_t base = 0;
  for (std::size_t k = 0; k < rank; ++k) {
    src_strides[k] = in_strides[k] * step[k];
    base += begin[k] * in_strides[k];
  }
  // Reuse the broadcaster's counter walk with custom strides.
  Dims counter(rank, 0);
  std::int64_t off = base;
  for (std::size_t o = 0; o < out.size(); ++o) {
    if (out.kind == Kind::kFloat) {
      out.f[o] = x.f[static_cast<std::size_t>(off)];
    } else {
      out.i[o] = x.i[static_cast<std::size_t>(off)];
    }
    for (std::int64_t d = static_cast<std::int64_t>(rank) - 1; d >= 0; --d) {
      const auto du = static_cast<std::size_t>(d);
      ++counter[du];
      off += src_strides[du];
      if (counter[du] < shape[du]) break;
      off -= src_strides[du] * shape[du];
      counter[du] = 0;
    }
  }
  return one(std::move(out));
}

std::vector<Value> op_split(const OpContext& c) {
  const auto& x = c.in(0);
  const auto axis = static_cast<std::size_t>(norm_axis(c.node.attr_int("axis", 0), x.rank()));
  const auto dim = x.shape[axis];
  Dims sizes;
  if (const auto* s = c.opt(1)) {
    sizes = as_ints(*s);
  } else if (auto a = c.node.attr_ints("split")) {
    sizes = *a;
  }
  if (sizes.empty()) {
    const auto parts = static_cast<std::int64_t>(c.node.has("num_outputs") ? c.node.attr_int("num_outputs", 1)
                                                                           : static_cast<std::int64_t>(c.output_count()));
    const auto chunk = (dim + parts - 1) / parts;
    for (std::int64_t p = 0; p < parts; ++p) sizes.push_back(std::min(chunk, dim - p * chunk));
  }
  std::vector<Value> outs;
  std::int64_t offset = 0;
  for (auto sz : sizes) {
    Value start = Value::ints({1}, {offset});
    Value end = Value::ints({1}, {offset + sz});
    Value ax = Value::ints({1}, {static_cast<std::int64_t>(axis)});
    const Value* args[] = {&x, &start, &end, &ax};
    Node slice_node{"Slice", c.node.name, {}, {}, {}};
    outs.push_back(op_slice(OpContext{slice_node, std::max<std::int64_t>(c.opset, 13), args}).front());
    offset += sz;
  }
  return outs;
}

// ---- linear algebra ----------------------------------------------------

std::vector<Value> op_matmul(const OpContext& c) {
  auto a = c.in(0);
  auto b = c.in(1);
  if (!a.is_float() || !b.is_float()) fail("MatMul supports float tensors only");
  const bool a_vec = a.rank() == 1;
  const bool b_vec = b.rank() == 1;
  if (a_vec) a.shape.insert(a.shape.begin(), 1);
  if (b_vec) b.shape.push_back(1);
  const auto m = a.shape[a.shape.size() - 2];
  const auto k = a.shape.back();
  const auto k2 = b.shape[b.shape.size() - 2];
  const auto n = b.shape.back();
  if (k != k2) fail("MatMul inner dims differ");
  Dims a_batch(a.shape.begin(), a.shape.end() - 2);
  Dims b_batch(b.shape.begin(), b.shape.end() - 2);
  const auto batch = broadcast_shapes({&a_batch, &b_batch});
  Dims shape = batch;
  shape.push_back(m);
  shape.push_back(n);
  Value out = Value::floats(shape, std::vector<float>(static_cast<std::size_t>(product(shape))));
  Broadcaster(batch, {&a_batch, &b_batch}).run([&](std::size_t o, const std::int64_t* offs) {
    ConstMap am(a.f.data() + offs[0] * m * k, m, k);
    ConstMap bm(b.f.data() + offs[1] * k * n, k, n);
    MutMap om(out.f.data() + static_cast<std::int64_t>(o) * m * n, m, n);
    om.noalias() = am * bm;
  });
  if (a_vec) out.shape.erase(out.shape.end() - 2);
  if (b_vec) out.shape.pop_back();
  return one(std::move(out));
}

std::vector<Value> op_gemm(const OpContext& c) {
  const auto& a = c.in(0);
  const auto& b = c.in(1);
  const bool ta = c.node.attr_int("transA", 0) != 0;
  const bool tb = c.node.attr_int("transB", 0) != 0;
  const float alpha = c.node.attr_float("alpha", 1.0f);
  const float beta = c.node.attr_float("beta", 1.0f);
  if (a.rank() != 2 || b.rank() != 2) fail("Gemm expects rank-2 operands");
  ConstMap am(a.f.data(), a.shape[0], a.shape[1]);
  ConstMap bm(b.f.data(), b.shape[0], b.shape[1]);
  const auto m = ta ? a.shape[1] : a.shape[0];
  const auto n = tb ? b.shape[0] : b.shape[1];
  Value out = Value::floats({m, n}, std::vector<float>(static_cast<std::size_t>(m * n)));
  MutMap om(out.f.data(), m, n);
  if (ta && tb) {
    om.noalias() = am.transpose() * bm.transpose();
  } else if (ta) {
    om.noalias() = am.transpose() * bm;
  } else if (tb) {
    om.noalias() = am * bm.transpose();
  } else {
    om.noalias() = am * bm;
  }
  if (alpha != 1.0f) om *= alpha;
  if (const auto* cc = c.opt(2)) {
    const Dims shape{m, n};
    Broadcaster(shape, {&cc->shape}).run([&](std::size_t o, const std::int64_t* offs) {
      out.f[o] += beta * cc->f[static_cast<std::size_t>(offs[0])];
    });
  }
  return one(std::move(out));
}

std::vector<Value> op_conv(const OpContext& c) {
  const auto& x = c.in(0);
  const auto& w = c.in(1);
  const auto* bias = c.opt(2);
  if (x.rank() != 4 || w.rank() != 4) fail("Conv supports 2-D convolution only");
  if (c.node.attr_string("auto_pad", "NOTSET") != "NOTSET") fail("Conv auto_pad is not supported");
  const auto group = c.node.attr_int("group", 1);
  const auto strides = c.node.attr_ints("strides").value_or(Dims{1, 1});
  const auto dil = c.node.attr_ints("dilations").value_or(Dims{1, 1});
  const auto pads = c.node.attr_ints("pads").value_or(Dims{0, 0, 0, 0});
  const auto batch = x.shape[0], cin = x.shape[1], h = x.shape[2], wd = x.shape[3];
  const auto cout = w.shape[0], cpg = w.shape[1], kh = w.shape[2], kw = w.shape[3];
  if (cpg * group != cin) fail("Conv channel/group mismatch");
  const auto oh = (h + pads[0] + pads[2] - dil[0] * (kh - 1) - 1) / strides[0] + 1;
  const auto ow = (wd + pads[1] + pads[3] - dil[1] * (kw - 1) - 1) / strides[1] + 1;
  const auto opg = cout / group;
  Value out = Value::floats({batch, cout, oh, ow}, std::vector<float>(static_cast<std::size_t>(batch * cout * oh * ow)));
  RowMajor cols(cpg * kh * kw, oh * ow);
  for (std::int64_t nb = 0; nb < batch; ++nb) {
    for (std::int64_t g = 0; g < group; ++g) {
      for (std::int64_t ci = 0; ci < cpg; ++ci) {
        const float* plane = x.f.data() + ((nb * cin) + g * cpg + ci) * h * wd;
        for (std::int64_t ky = 0; ky < kh; ++ky) {
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const auto row = (ci * kh + ky) * kw + kx;
            for (std::int64_t y = 0; y < oh; ++y) {
              const auto iy = y * strides[0] - pads[0] + ky * dil[0];
              for (std::int64_t xx = 0; xx < ow; ++xx) {
                const auto ix = xx * strides[1] - pads[1] + kx * dil[1];
                cols(row, y * ow + xx) = (iy < 0 || iy >= h || ix < 0 || ix >= wd) ? 0.0f : plane[iy * wd + ix];
              }
            }
          }
        }
      }
      ConstMap wm(w.f.data() + g * opg * cpg * kh * kw, opg, cpg * kh * kw);
      MutMap om(out.f.data() + (nb * cout + g * opg) * oh * ow, opg, oh * ow);
      om.noalias() = wm * cols;
      if (bias) {
        for (std::int64_t o = 0; o < opg; ++o) om.row(o).array() += bias->f[static_cast<std::size_t>(g * opg + o)];
      }
    }
  }
  return one(std::move(out));
}

// ---- normalization and reductions -------------------------------------

std::vector<Value> op_softmax(const OpContext& c) {
  const auto& x = c.in(0);
  Value out = x;
  const auto default_axis = c.opset >= 13 ? -1 : 1;
  const auto axis = static_cast<std::size_t>(norm_axis(c.node.attr_int("axis", default_axis), x.rank()));
  std::int64_t outer, dim, inner;
  if (c.opset >= 13) {
    outer = product(x.shape, 0, axis);
    dim = x.shape[axis];
    inner = product(x.shape, axis + 1);
  } else {
    outer = product(x.shape, 0, axis);
    dim = product(x.shape, axis);
    inner = 1;
  }
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      float* base = out.f.data() + o * dim * inner + in;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::int64_t j = 0; j < dim; ++j) mx = std::max(mx, base[j * inner]);
      double total = 0.0;
      for (std::int64_t j = 0; j < dim; ++j) {
        const float e = std::exp(base[j * inner] - mx);
        base[j * inner] = e;
        total += e;
      }
      for (std::int64_t j = 0; j < dim; ++j) base[j * inner] = static_cast<float>(base[j * inner] / total);
    }
  }
  return one(std::move(out));
}

std::vector<Value> op_layer_norm(const OpContext& c) {
  const auto& x = c.in(0);
  const auto& scale = c.in(1);
  const auto* bias = c.opt(2);
  const auto axis = static_cast<std::size_t>(norm_axis(c.node.attr_int("axis", -1), x.rank()));
  const double eps = c.node.attr_float("epsilon", 1e-5f);
  const auto outer = product(x.shape, 0, axis);
  const auto norm = product(x.shape, axis);
  if (static_cast<std::int64_t>(scale.size()) != norm) fail("LayerNormalization scale size mismatch");
  Value y = x;
  Dims stat_shape = x.shape;
  for (std::size_t k = axis; k < stat_shape.size(); ++k) stat_shape[k] = 1;
  Value mean_out = Value::floats(stat_shape, std::vector<float>(static_cast<std::size_t>(outer)));
  Value inv_out = mean_out;
  for (std::int64_t o = 0; o < outer; ++o) {
    const float* src = x.f.data() + o * norm;
    float* dst = y.f.data() + o * norm;
    double mean = 0.0;
    for (std::int64_t j = 0; j < norm; ++j) mean += src[j];
    mean /= static_cast<double>(norm);
    double var = 0.0;
    for (std::int64_t j = 0; j < norm; ++j) var += (src[j] - mean) * (src[j] - mean);
    var /= static_cast<double>(norm);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::int64_t j = 0; j < norm; ++j) {
      double v = (src[j] - mean) * inv * scale.f[static_cast<std::size_t>(j)];
      if (bias) v += bias->f[static_cast<std::size_t>(j)];
      dst[j] = static_cast<float>(v);
    }
    mean_out.f[static_cast<std::size_t>(o)] = static_cast<float>(mean);
    inv_out.f[static_cast<std::size_t>(o)] = static_cast<float>(inv);
  }
  std::vector<Value> outs;
  outs.push_back(std::move(y));
  if (c.output_count() > 1) outs.push_back(std::move(mean_out));
  if (c.output_count() > 2) outs.push_back(std::move(inv_out));
  return outs;
}

enum class Reduce { kMean, kSum, kMax, kL2 };

OpFn reduce_op(Reduce kind, std::int64_t axes_input_opset) {
  return [kind, axes_input_opset](const OpContext& c) {
    const auto& x = c.in(0);
    if (!x.is_float()) fail("reductions support float tensors only");
    Dims axes = c.opset >= axes_input_opset ? (c.opt(1) ? as_ints(*c.opt(1)) : Dims{})
                                            : c.node.attr_ints("axes").value_or(Dims{});
    const bool keep = c.node.attr_int("keepdims", 1) != 0;
    if (axes.empty()) {
      if (c.node.attr_int("noop_with_empty_axes", 0) != 0) return one(x);
      axes.resize(static_cast<std::size_t>(x.rank()));
      std::iota(axes.begin(), axes.end(), 0);
    }
    for (auto& a : axes) a = norm_axis(a, x.rank());
    Dims kept = x.shape;
    for (auto a : axes) kept[static_cast<std::size_t>(a)] = 1;
    const auto out_n = static_cast<std::size_t>(product(kept));
    std::vector<double> acc(out_n, kind == Reduce::kMax ? -std::numeric_limits<double>::infinity() : 0.0);
    // Map each input element to its reduced slot.
    Dims out_strides = strides_of(kept);
    for (auto a : axes) out_strides[static_cast<std::size_t>(a)] = 0;
    Dims counter(x.shape.size(), 0);
    std::int64_t off = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x.f[i];
      auto& slot = acc[static_cast<std::size_t>(off)];
      switch (kind) {
        case Reduce::kMax:
          slot = std::max(slot, v);
          break;
        case Reduce::kL2:
          slot += v * v;
          break;
        default:
          slot += v;
      }
      for (std::int64_t d = x.rank() - 1; d >= 0; --d) {
        const auto du = static_cast<std::size_t>(d);
        ++counter[du];
        off += out_strides[du];
        if (counter[du] < x.shape[du]) break;
        off -= out_strides[du] * x.shape[du];
        counter[du] = 0;
      }
    }
    const double count = static_cast<double>(x.size()) / static_cast<double>(out_n);
    std::vector<float> vals(out_n);
    for (std::size_t k = 0; k < out_n; ++k) {
      double v = acc[k];
      if (kind == Reduce::kMean) v /= count;
      if (kind == Reduce::kL2) v = std::sqrt(v);
      vals[k] = static_cast<float>(v);
    }
    Dims shape;
    for (std::size_t k = 0; k < kept.size(); ++k) {
      const bool reduced = std::find(axes.begin(), axes.end(), static_cast<std::int64_t>(k)) != axes.end();
      if (!reduced || keep) shape.push_back(kept[k]);
    }
    return one(Value::floats(std::move(shape), std::move(vals)));
  };
}

}  // namespace

const std::unordered_map<std::string, OpFn>& op_registry() {
  static const std::unordered_map<std::string, OpFn> registry = {
      {"Add", op_add},
      {"Sub", op_sub},
      {"Mul", op_mul},
      {"Div", op_div},
      {"Pow", op_pow},
      {"Mod", op_mod},
      {"Max", op_max},
      {"Min", op_min},
      {"Equal", op_equal},
      {"Less", op_less},
      {"Greater", op_greater},
      {"Not", op_not},
      {"Where", op_where},
      {"Sqrt", float_unary([](float x) { return std::sqrt(x); })},
      {"Exp", float_unary([](float x) { return std::exp(x); })},
      {"Log", float_unary([](float x) { return std::log(x); })},
      {"Tanh", float_unary([](float x) { return std::tanh(x); })},
      {"Erf", float_unary([](float x) { return std::erf(x); })},
      {"Sigmoid", float_unary([](float x) { return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x)))); })},
      {"Relu", float_unary([](float x) { return std::max(x, 0.0f); })},
      {"Reciprocal", float_unary([](float x) { return 1.0f / x; })},
      {"Floor", float_unary([](float x) { return std::floor(x); })},
      {"Ceil", float_unary([](float x) { return std::ceil(x); })},
      {"Neg", op_neg},
      {"Abs", op_abs},
      {"Gelu", op_gelu},
      {"Identity", op_identity},
      {"Dropout", op_identity},
      {"Cast", op_cast},
      {"Constant", op_constant},
      {"ConstantOfShape", op_constant_of_shape},
      {"Shape", op_shape},
      {"Size", op_size},
      {"Reshape", op_reshape},
      {"Flatten", op_flatten},
      {"Squeeze", op_squeeze},
      {"Unsqueeze", op_unsqueeze},
      {"Expand", op_expand},
      {"Range", op_range},
      {"Transpose", op_transpose},
      {"Concat", op_concat},
      {"Gather", op_gather},
      {"Slice", op_slice},
      {"Split", op_split},
      {"MatMul", op_matmul},
      {"Gemm", op_gemm},
      {"Conv", op_conv},
      {"Softmax", op_softmax},
      {"LayerNormalization", op_layer_norm},
      {"ReduceMean", reduce_op(Reduce::kMean, 18)},
      {"ReduceSum", reduce_op(Reduce::kSum, 13)},
      {"ReduceMax", reduce_op(Reduce::kMax, 18)},
      {"ReduceL2", reduce_op(Reduce::kL2, 18)},
  };
  return registry;
}

}  // namespace attnsel::onnx
