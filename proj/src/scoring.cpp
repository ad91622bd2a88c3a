#include "attnsel/scoring.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "attnsel/errors.h"

namespace attnsel {

namespace {

void check_dims(std::size_t f_dim, const DescriptionCatalog& catalog) {
  if (static_cast<std::int64_t>(f_dim) != catalog.dim()) {
    throw ArgumentError("embedding dim " + std::to_string(f_dim) + " != catalog dim " +
                        std::to_string(catalog.dim()));
  }
}

// Cosines of f against every row, in double.
void similarities(std::span<const float> f, const DescriptionCatalog& catalog, std::span<double> out) {
  const auto d = static_cast<std::size_t>(catalog.dim());
  const float* table = catalog.embeddings().f32().data();
  for (std::size_t t = 0; t < out.size(); ++t) {
    const float* r = table + t * d;
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += static_cast<double>(f[i]) * r[i];
    out[t] = acc;
  }
}

void softmax_inplace(std::span<const double> row, double tau, std::span<double> out) {
  const double max_v = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (std::size_t t = 0; t < row.size(); ++t) {
    out[t] = std::exp((row[t] - max_v) / tau);
    total += out[t];
  }
  for (auto& v : out) v /= total;
}

}  // namespace

std::vector<float> similarity_row(const UnitVector& f, const DescriptionCatalog& catalog) {
  check_dims(f.dim(), catalog);
  std::vector<double> sims(static_cast<std::size_t>(catalog.total_rows()));
  similarities(f.values(), catalog, sims);
  return {sims.begin(), sims.end()};
}

std::vector<float> description_weights(std::span<const float> sim_row, float tau) {
  return softmax(sim_row, tau);
}

ScoreTable aggregate_scores(const EmbeddingSet& crops, const DescriptionCatalog& catalog, float tau) {
  if (crops.count() == 0) throw ArgumentError("aggregate_scores needs at least one crop embedding");
  if (catalog.class_count() < 2) throw ArgumentError("classification needs K >= 2 classes");
  if (!(tau > 0.0f)) throw ArgumentError("description temperature must be > 0");
  check_dims(static_cast<std::size_t>(crops.dim()), catalog);

  const auto n = static_cast<std::int64_t>(crops.count());
  const auto T = catalog.total_rows();
  const auto K = catalog.class_count();
  const auto& row_class = catalog.row_class();

  ScoreTable table;
  table.sim = Tensor::zeros({n, T});
  table.weights = Tensor::zeros({n, T});
  auto sim_out = table.sim.f32();
  auto w_out = table.weights.f32();

  std::vector<double> scores(static_cast<std::size_t>(K), 0.0);
  std::vector<double> sims(static_cast<std::size_t>(T));
  std::vector<double> weights(static_cast<std::size_t>(T));
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& f = crops.rows[static_cast<std::size_t>(i)];
    check_dims(f.dim(), catalog);
    similarities(f.values(), catalog, sims);
    softmax_inplace(sims, tau, weights);
    for (std::int64_t t = 0; t < T; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      scores[static_cast<std::size_t>(row_class[ti])] += weights[ti] * sims[ti];
      sim_out[static_cast<std::size_t>(i * T + t)] = static_cast<float>(sims[ti]);
      w_out[static_cast<std::size_t>(i * T + t)] = static_cast<float>(weights[ti]);
    }
  }

  table.scores.assign(scores.begin(), scores.end());
  table.predicted = argmax_lowest(table.scores);
  table.margin = top_margin(table.scores);
  return table;
}

std::vector<float> baseline_clip_score(const UnitVector& f, std::span<const UnitVector> class_embeddings) {
  std::vector<float> out;
  out.reserve(class_embeddings.size());
  for (const auto& c : class_embeddings) {
    if (c.dim() != f.dim()) throw ArgumentError("class embedding dim differs from image embedding dim");
    out.push_back(static_cast<float>(dot(f.values(), c.values())));
  }
  return out;
}

std::vector<UnitVector> class_prototypes(const DescriptionCatalog& catalog) {
  std::vector<UnitVector> out;
  const auto d = static_cast<std::size_t>(catalog.dim());
  for (const auto& c : catalog.classes()) {
    std::vector<double> acc(d, 0.0);
    for (std::int64_t t = c.offset; t < c.offset + c.count; ++t) {
      const auto r = catalog.row(t);
      for (std::size_t i = 0; i < d; ++i) acc[i] += r[i];
    }
    std::vector<float> mean(acc.begin(), acc.end());
    out.push_back(l2_normalize(mean));
  }
  return out;
}

std::int64_t argmax_lowest(std::span<const float> values) {
  if (values.empty()) throw ArgumentError("argmax of an empty list");
  std::int64_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<std::int64_t>(i);
  }
  return best;
}

float top_margin(std::span<const float> values) {
  if (values.size() < 2) return 0.0f;
  std::vector<float> sorted(values.begin(), values.end());
  std::partial_sort(sorted.begin(), sorted.begin() + 2, sorted.end(), std::greater<>());
  return sorted[0] - sorted[1];
}

}  // namespace attnsel
