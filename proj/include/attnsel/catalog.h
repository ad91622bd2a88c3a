#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnsel/numeric.h"
#include "attnsel/tensor.h"

namespace attnsel {

struct CatalogClass {
  std::string name;
  std::int64_t offset = 0;  // first row in the embedding table
  std::int64_t count = 0;   // descriptions for this class
  std::vector<std::string> descriptions;
};

// Per-class description embeddings, stored as one contiguous T x d table with
// each class owning a consecutive run of rows.
class DescriptionCatalog {
 public:
  DescriptionCatalog() = default;
  DescriptionCatalog(std::vector<CatalogClass> classes, Tensor embeddings, std::string model_id = {});

  // Builds offsets from per-class row groups; every row is normalized here.
  static DescriptionCatalog from_rows(const std::vector<std::string>& names,
                                      const std::vector<std::vector<std::vector<float>>>& rows,
                                      std::string model_id = {});

  std::int64_t class_count() const { return static_cast<std::int64_t>(classes_.size()); }
  std::int64_t total_rows() const { return embeddings_.empty() ? 0 : embeddings_.dim(0); }
  std::int64_t dim() const { return embeddings_.empty() ? 0 : embeddings_.dim(1); }
  const std::vector<CatalogClass>& classes() const { return classes_; }
  const CatalogClass& cls(std::int64_t k) const { return classes_.at(static_cast<std::size_t>(k)); }
  const Tensor& embeddings() const { return embeddings_; }
  const std::string& model_id() const { return model_id_; }
  std::span<const float> row(std::int64_t t) const;
  std::optional<std::int64_t> find(const std::string& name) const;

  // Class index owning each row.
  const std::vector<std::int64_t>& row_class() const { return row_class_; }

  // Keeps only the listed classes, in the given order.
  DescriptionCatalog subset(std::span<const std::int64_t> class_indices) const;

 private:
  std::vector<CatalogClass> classes_;
  Tensor embeddings_;
  std::string model_id_;
  std::vector<std::int64_t> row_class_;
};

// catalog.json next to catalog.abst (same stem) unless `table` is given.
DescriptionCatalog load_catalog(const std::filesystem::path& json_path,
                                const std::optional<std::filesystem::path>& table = std::nullopt);
void save_catalog(const DescriptionCatalog& catalog, const std::filesystem::path& json_path);

}  // namespace attnsel
