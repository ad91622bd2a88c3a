#include "attnsel/catalog.h"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "attnsel/errors.h"
#include "attnsel/tensor_io.h"

namespace attnsel {

using nlohmann::json;

namespace {

constexpr double kNormTolerance = 1e-5;

}  // namespace

DescriptionCatalog::DescriptionCatalog(std::vector<CatalogClass> classes, Tensor embeddings, std::string model_id)
    : classes_(std::move(classes)), embeddings_(std::move(embeddings)), model_id_(std::move(model_id)) {
  if (classes_.empty()) throw FormatError("catalog has no classes");
  if (embeddings_.rank() != 2 || embeddings_.dtype() != DType::kF32) {
    throw FormatError("catalog embeddings must be an f32 T x d table");
  }
  std::set<std::string> names;
  std::int64_t expected_offset = 0;
  for (const auto& c : classes_) {
    if (!names.insert(c.name).second) throw FormatError("catalog class name repeated: '" + c.name + "'");
    if (c.count < 1) throw FormatError("catalog class '" + c.name + "' has no descriptions");
    if (c.offset != expected_offset) {
      throw FormatError("catalog class '" + c.name + "' offset " + std::to_string(c.offset) + ", expected " +
                        std::to_string(expected_offset));
    }
    if (!c.descriptions.empty() && static_cast<std::int64_t>(c.descriptions.size()) != c.count) {
      throw FormatError("catalog class '" + c.name + "' description texts do not match its count");
    }
    expected_offset += c.count;
    row_class_.insert(row_class_.end(), static_cast<std::size_t>(c.count),
                      static_cast<std::int64_t>(&c - classes_.data()));
  }
  if (expected_offset != embeddings_.dim(0)) {
    throw FormatError("catalog lists " + std::to_string(expected_offset) + " rows but the table has " +
                      std::to_string(embeddings_.dim(0)));
  }
  for (std::int64_t t = 0; t < embeddings_.dim(0); ++t) {
    const auto r = row(t);
    const double norm = std::sqrt(dot(r, r));
    if (std::abs(norm - 1.0) > kNormTolerance) {
      throw FormatError("catalog row " + std::to_string(t) + " is not unit-norm (norm " + std::to_string(norm) + ")");
    }
  }
}

DescriptionCatalog DescriptionCatalog::from_rows(const std::vector<std::string>& names,
                                                 const std::vector<std::vector<std::vector<float>>>& rows,
                                                 std::string model_id) {
  if (names.size() != rows.size()) throw ArgumentError("one row group per class name required");
  std::vector<CatalogClass> classes;
  std::vector<float> table;
  std::int64_t dim = -1;
  std::int64_t offset = 0;
  for (std::size_t k = 0; k < names.size(); ++k) {
    classes.push_back({names[k], offset, static_cast<std::int64_t>(rows[k].size()), {}});
    for (const auto& r : rows[k]) {
      if (dim < 0) dim = static_cast<std::int64_t>(r.size());
      if (static_cast<std::int64_t>(r.size()) != dim) throw ArgumentError("catalog rows differ in dimension");
      const auto unit = l2_normalize(r);
      table.insert(table.end(), unit.values().begin(), unit.values().end());
    }
    offset += static_cast<std::int64_t>(rows[k].size());
  }
  if (offset == 0) throw ArgumentError("catalog needs at least one row");
  return DescriptionCatalog(std::move(classes), Tensor::from_f32({offset, dim}, std::move(table)), std::move(model_id));
}

std::span<const float> DescriptionCatalog::row(std::int64_t t) const {
  const auto d = static_cast<std::size_t>(dim());
  return embeddings_.f32().subspan(static_cast<std::size_t>(t) * d, d);
}

std::optional<std::int64_t> DescriptionCatalog::find(const std::string& name) const {
  for (std::size_t k = 0; k < classes_.size(); ++k) {
    if (classes_[k].name == name) return static_cast<std::int64_t>(k);
  }
  return std::nullopt;
}

DescriptionCatalog DescriptionCatalog::subset(std::span<const std::int64_t> class_indices) const {
  std::vector<CatalogClass> classes;
  std::vector<float> table;
  std::int64_t offset = 0;
  for (auto k : class_indices) {
    auto c = cls(k);
    for (std::int64_t t = c.offset; t < c.offset + c.count; ++t) {
      const auto r = row(t);
      table.insert(table.end(), r.begin(), r.end());
    }
    c.offset = offset;
    offset += c.count;
    classes.push_back(std::move(c));
  }
  return DescriptionCatalog(std::move(classes), Tensor::from_f32({offset, dim()}, std::move(table)), model_id_);
}

DescriptionCatalog load_catalog(const std::filesystem::path& json_path,
                                const std::optional<std::filesystem::path>& table) {
  std::ifstream in(json_path);
  if (!in) throw FormatError("cannot open catalog: " + json_path.string());
  std::vector<CatalogClass> classes;
  std::string model_id;
  std::int64_t embed_dim = 0;
  try {
    const auto j = json::parse(in);
    model_id = j.value("model_id", std::string{});
    embed_dim = j.at("embed_dim").get<std::int64_t>();
    for (const auto& c : j.at("classes")) {
      CatalogClass entry;
      entry.name = c.at("name").get<std::string>();
      entry.offset = c.at("offset").get<std::int64_t>();
      entry.count = c.at("count").get<std::int64_t>();
      if (c.contains("descriptions")) entry.descriptions = c.at("descriptions").get<std::vector<std::string>>();
      classes.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw FormatError(json_path.string() + ": " + e.what());
  }
  auto table_path = table.value_or(std::filesystem::path(json_path).replace_extension(".abst"));
  auto embeddings = read_tensor(table_path);
  if (embeddings.rank() != 2 || embeddings.dim(1) != embed_dim) {
    throw FormatError(table_path.string() + ": table shape " + shape_string(embeddings.shape()) +
                      " disagrees with embed_dim " + std::to_string(embed_dim));
  }
  return DescriptionCatalog(std::move(classes), std::move(embeddings), std::move(model_id));
}

void save_catalog(const DescriptionCatalog& catalog, const std::filesystem::path& json_path) {
  json classes = json::array();
  for (const auto& c : catalog.classes()) {
    json entry = {{"name", c.name}, {"offset", c.offset}, {"count", c.count}};
    if (!c.descriptions.empty()) entry["descriptions"] = c.descriptions;
    classes.push_back(std::move(entry));
  }
  const json j = {{"model_id", catalog.model_id()},
                  {"embed_dim", catalog.dim()},
                  {"total_rows", catalog.total_rows()},
                  {"classes", std::move(classes)}};
  std::ofstream out(json_path);
  if (!out) throw FormatError("cannot write catalog: " + json_path.string());
  out << j.dump(2) << '\n';
  write_tensor(catalog.embeddings(), std::filesystem::path(json_path).replace_extension(".abst"));
}

}  // namespace attnsel
