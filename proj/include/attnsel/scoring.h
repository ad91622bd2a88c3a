#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "attnsel/backend.h"
#include "attnsel/catalog.h"
#include "attnsel/numeric.h"
#include "attnsel/tensor.h"

namespace attnsel {

// Default description-weight temperature (cosines scaled by 100).
inline constexpr float kDefaultTau = 0.01f;

struct ScoreTable {
  Tensor sim;      // crops x T cosine similarities
  Tensor weights;  // crops x T softmax rows
  std::vector<float> scores;  // K
  std::int64_t predicted = -1;
  float margin = 0.0f;
};

// Cosine of f against every catalog row.
std::vector<float> similarity_row(const UnitVector& f, const DescriptionCatalog& catalog);

// Softmax over the full row (all descriptions of all classes jointly).
std::vector<float> description_weights(std::span<const float> sim_row, float tau = kDefaultTau);

// score(y) = sum_i sum_{t in y} w[i,t] * sim[i,t], with w[i,:] the softmax of
// crop i's full similarity row. Predicted class is the argmax (lowest index on
// ties); margin is top1 - top2.
ScoreTable aggregate_scores(const EmbeddingSet& crops, const DescriptionCatalog& catalog, float tau = kDefaultTau);

// Plain cosine per class embedding.
std::vector<float> baseline_clip_score(const UnitVector& f, std::span<const UnitVector> class_embeddings);

// Normalized mean of each class's description rows.
std::vector<UnitVector> class_prototypes(const DescriptionCatalog& catalog);

std::int64_t argmax_lowest(std::span<const float> values);

// top1 - top2; zero for fewer than two values.
float top_margin(std::span<const float> values);

}  // namespace attnsel
