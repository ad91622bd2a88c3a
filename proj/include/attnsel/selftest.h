#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace attnsel {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

// Frozen outputs of the synthetic reference world.
struct GoldenSet {
  std::string embedding;     // JSON: reference encoder on the probe input
  std::string image_result;  // JSON: run_image on the first synthetic image, no timing
  std::string eval_report;   // canonical report JSON for the 12-image dataset
  std::vector<std::uint8_t> overlay_png;  // overlay of the first synthetic image
};

// Values compiled into the library from tests/fixtures/golden; fields are
// empty when the fixtures were absent at configure time.
const GoldenSet& builtin_goldens();

// Recomputes every golden from scratch. Scratch files go under `work_dir`
// (a fresh temp directory when empty) and are removed afterwards.
GoldenSet compute_goldens(const std::filesystem::path& work_dir = {});

void write_goldens(const GoldenSet& goldens, const std::filesystem::path& dir);

// Composition identities plus golden comparisons on the reference stack.
std::vector<CheckResult> run_reference_selftest();

// Checks exported graphs: an encoder directory (prefix/suffix), an attention
// directory, or a models directory holding encoder/ and attention/.
std::vector<CheckResult> run_backend_selftest(const std::filesystem::path& dir);

}  // namespace attnsel
