#include "attnsel/backend.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "attnsel/errors.h"

namespace attnsel {

using nlohmann::json;

void SplitEncoderSpec::validate() const {
  input.validate();
  if (grid.rows * input.patch_size != input.input_size || grid.cols * input.patch_size != input.input_size) {
    throw ConfigError("input_size must equal patch_size x grid side");
  }
  if (d_model < 1 || embed_dim < 1) throw ConfigError("d_model and embed_dim must be >= 1");
  if (layers < 2 || split_layer < 1 || split_layer > layers - 1) {
    throw ConfigError("split_layer must lie in [1, layers-1] (split_layer=" + std::to_string(split_layer) +
                      ", layers=" + std::to_string(layers) + ")");
  }
}

namespace {

std::array<float, 3> triple(const json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3) throw FormatError(std::string("model_spec.json: '") + key + "' must be 3 numbers");
  return {v[0].get<float>(), v[1].get<float>(), v[2].get<float>()};
}

}  // namespace

SplitEncoderSpec load_model_spec(const std::filesystem::path& path, bool require_encoder_keys) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open model spec: " + path.string());
  SplitEncoderSpec spec;
  try {
    const auto j = json::parse(in);
    spec.input.input_size = j.at("input_size").get<std::int64_t>();
    spec.input.patch_size = j.at("patch_size").get<std::int64_t>();
    spec.input.mean = triple(j, "mean");
    spec.input.std = triple(j, "std");
    const auto& g = j.at("grid");
    if (g.is_array()) {
      if (g.size() != 2) throw FormatError("model_spec.json: 'grid' must be [rows, cols]");
      spec.grid = {g[0].get<std::int64_t>(), g[1].get<std::int64_t>()};
    } else {
      spec.grid = {g.get<std::int64_t>(), g.get<std::int64_t>()};
    }
    if (require_encoder_keys) {
      spec.d_model = j.at("d_model").get<std::int64_t>();
      spec.embed_dim = j.at("embed_dim").get<std::int64_t>();
      spec.split_layer = j.at("split_layer").get<std::int64_t>();
      spec.layers = j.at("layers").get<std::int64_t>();
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (require_encoder_keys) {
    spec.validate();
  } else {
    spec.input.validate();
  }
  return spec;
}

void save_model_spec(const SplitEncoderSpec& spec, const std::filesystem::path& path) {
  json j = {
      {"input_size", spec.input.input_size},
      {"patch_size", spec.input.patch_size},
      {"grid", {spec.grid.rows, spec.grid.cols}},
      {"d_model", spec.d_model},
      {"embed_dim", spec.embed_dim},
      {"split_layer", spec.split_layer},
      {"layers", spec.layers},
      {"mean", spec.input.mean},
      {"std", spec.input.std},
  };
  std::ofstream out(path);
  out << j.dump(2) << '\n';
}

std::vector<UnitVector> SplitEncoder::encode_images(std::span<const Tensor> inputs) const {
  std::vector<UnitVector> out;
  out.reserve(inputs.size());
  for (const auto& t : inputs) out.push_back(encode_image(t));
  return out;
}

std::vector<UnitVector> SplitEncoder::encode_suffixes(std::span<const Tensor> seqs) const {
  std::vector<UnitVector> out;
  out.reserve(seqs.size());
  for (const auto& t : seqs) out.push_back(encode_suffix(t));
  return out;
}

void SplitEncoder::check_image_input(const Tensor& input) const {
  const auto s = spec().input.input_size;
  if (input.dtype() != DType::kF32 || input.shape() != Shape{3, s, s}) {
    throw ArgumentError(model_id() + ": image input must be f32 [3," + std::to_string(s) + "," +
                        std::to_string(s) + "], got " + shape_string(input.shape()));
  }
  if (!input.all_finite()) throw ArgumentError(model_id() + ": image input contains non-finite values");
}

void SplitEncoder::check_sequence_input(const Tensor& seq) const {
  const auto& sp = spec();
  if (seq.dtype() != DType::kF32 || seq.shape() != Shape{1 + sp.patch_count(), sp.d_model}) {
    throw ArgumentError(model_id() + ": suffix input must be f32 [" + std::to_string(1 + sp.patch_count()) + "," +
                        std::to_string(sp.d_model) + "], got " + shape_string(seq.shape()));
  }
}

const char* to_string(Branch branch) {
  switch (branch) {
    case Branch::kRaw:
      return "raw";
    case Branch::kFeature:
      return "feature";
    case Branch::kFull:
      return "full";
  }
  return "unknown";
}

double max_abs_diff(const UnitVector& a, const UnitVector& b) {
  if (a.dim() != b.dim()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i]) - b[i]));
  return m;
}

}  // namespace attnsel
