#include "attnsel/attention_sampler.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "attnsel/errors.h"
#include "attnsel/numeric.h"

namespace attnsel {

namespace {

void check_attention_values(const Tensor& t, const char* what) {
  if (t.dtype() != DType::kF32) throw ArgumentError(std::string(what) + " must be f32");
  for (float v : t.f32()) {
    if (!std::isfinite(v) || v < 0.0f) {
      throw ArgumentError(std::string(what) + " must be finite and non-negative");
    }
  }
}

}  // namespace

MultiHeadClsAttention::MultiHeadClsAttention(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 3) {
    throw ArgumentError("multi-head attention must be heads x rows x cols, got " + shape_string(values_.shape()));
  }
  check_attention_values(values_, "attention");
}

AttentionGrid::AttentionGrid(Tensor values) : values_(std::move(values)) {
  if (values_.rank() != 2) {
    throw ArgumentError("attention grid must be rows x cols, got " + shape_string(values_.shape()));
  }
  check_attention_values(values_, "attention grid");
}

AttentionGrid average_heads(const MultiHeadClsAttention& attn) {
  const auto g = attn.grid();
  const auto cells = static_cast<std::size_t>(g.count());
  const auto heads = static_cast<std::size_t>(attn.heads());
  auto src = attn.values().f32();
  std::vector<double> acc(cells, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    for (std::size_t i = 0; i < cells; ++i) acc[i] += src[h * cells + i];
  }
  std::vector<float> out(cells);
  for (std::size_t i = 0; i < cells; ++i) out[i] = static_cast<float>(acc[i] / static_cast<double>(heads));
  return AttentionGrid(Tensor::from_f32({g.rows, g.cols}, std::move(out)));
}

std::vector<PatchSample> select_top_k(const AttentionGrid& grid, std::int64_t k) {
  const auto g = grid.grid();
  if (k < 1 || k > g.count()) {
    throw ArgumentError("top-k needs 1 <= k <= " + std::to_string(g.count()) + ", got " + std::to_string(k));
  }
  auto values = grid.values().f32();
  std::vector<std::int64_t> order(static_cast<std::size_t>(g.count()));
  std::iota(order.begin(), order.end(), 0);
  auto by_value = [&](std::int64_t a, std::int64_t b) {
    const float va = values[static_cast<std::size_t>(a)];
    const float vb = values[static_cast<std::size_t>(b)];
    return va != vb ? va > vb : a < b;
  };
  std::partial_sort(order.begin(), order.begin() + k, order.end(), by_value);

  std::vector<PatchSample> out;
  out.reserve(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < k; ++i) {
    const auto idx = order[static_cast<std::size_t>(i)];
    out.push_back({{idx / g.cols, idx % g.cols}, values[static_cast<std::size_t>(idx)], 0.0f});
  }
  return out;
}

std::vector<PatchSample> patch_probabilities(std::span<const PatchSample> topk, float temperature) {
  if (topk.empty()) throw ArgumentError("patch_probabilities needs a non-empty top-k list");
  std::vector<float> values;
  values.reserve(topk.size());
  for (const auto& s : topk) values.push_back(s.attention);
  const auto probs = softmax(values, temperature);
  std::vector<PatchSample> out(topk.begin(), topk.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i].probability = probs[i];
  return out;
}

std::vector<PatchSample> sample_patches(std::span<const PatchSample> topk_with_probs, std::int64_t n,
                                        Rng& rng) {
  if (n < 1) throw ArgumentError("sample count must be >= 1");
  if (topk_with_probs.empty()) throw ArgumentError("cannot sample from an empty distribution");
  std::vector<double> cdf(topk_with_probs.size());
  double running = 0.0;
  for (std::size_t i = 0; i < cdf.size(); ++i) {
    const double p = topk_with_probs[i].probability;
    if (!(p > 0.0) || p > 1.0) throw ArgumentError("patch probabilities must lie in (0, 1]");
    running += p;
    cdf[i] = running;
  }

  std::vector<PatchSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (std::int64_t draw = 0; draw < n; ++draw) {
    // Scale by the realised total so rounding in the probabilities never
    // leaves u beyond the last bucket.
    const double u = rng.uniform01() * running;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    out.push_back(topk_with_probs[idx]);
  }
  return out;
}

}  // namespace attnsel
