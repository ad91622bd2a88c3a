// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "attnsel/attention_sampler.h"
#include "attnsel/backend.h"
#include "attnsel/feat_select.h"
#include "attnsel/numeric.h"
#include "attnsel/pipeline.h"
#include "attnsel/scoring.h"
#include "attnsel/selftest.h"
#include "attnsel/synthetic.h"
#include "test_support.h"

using namespace attnsel;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), f, a, b, c);
  return buf;
}

std::int64_t randint(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng.uniform01() * static_cast<double>(hi - lo + 1));
}

std::vector<float> random_unit(Rng& rng, std::size_t d) {
  std::vector<float> v(d);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  const auto u = l2_normalize(v);
  return {u.values().begin(), u.values().end()};
}

Tensor random_input(std::int64_t s, Rng& rng) {
  std::vector<float> v(static_cast<std::size_t>(3 * s * s));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-2.0, 2.0));
  return Tensor::from_f32({3, s, s}, std::move(v));
}

Outcome sampler_statistics() {
  const auto start = Clock::now();
  const std::vector<PatchSample> dist{{{0, 0}, 0.0f, 0.7f}, {{0, 1}, 0.0f, 0.2f}, {{0, 2}, 0.0f, 0.1f}};
  Rng rng(2024);
  const std::int64_t n = 100000;
  const auto draws = sample_patches(dist, n, rng);
  double counts[3] = {0, 0, 0};
  for (const auto& d : draws) counts[d.patch.col] += 1.0;
  const double p[3] = {0.7, 0.2, 0.1};
  double worst = 0.0, chi2 = 0.0;
  for (int i = 0; i < 3; ++i) {
    worst = std::max(worst, std::fabs(counts[i] / n - p[i]));
    const double e = p[i] * n;
    chi2 += (counts[i] - e) * (counts[i] - e) / e;
  }
  const double secs = seconds_since(start);
  // 99.9% critical value of chi-square with 2 degrees of freedom.
  const double critical = 13.816;
  return {worst <= 0.01 && chi2 < critical && secs < 5.0,
          fmt("max|freq-p|=%.5f (tol 0.01) chi2=%.3f (crit 13.816) time=%.3fs (limit 5s)", worst, chi2, secs)};
}

Outcome bicubic_oracle() {
  Rng rng(31337);
  double worst = 0.0, worst_const = 0.0;
  for (int t = 0; t < 200; ++t) {
    const auto h = randint(rng, 2, 16), w = randint(rng, 2, 16);
    const auto oh = randint(rng, 2, 32), ow = randint(rng, 2, 32);
    std::vector<float> vals(static_cast<std::size_t>(h * w));
    std::vector<double> vd(vals.size());
    for (std::size_t i = 0; i < vals.size(); ++i) {
      vals[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
      vd[i] = vals[i];
    }
    const auto got = bicubic_resample_2d(Tensor::from_f32({h, w}, vals), oh, ow);
    const auto want = testing::bicubic_oracle(vd, h, w, oh, ow);
    for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::fabs(got.f32()[i] - want[i]));

    const float c = static_cast<float>(rng.uniform(-5.0, 5.0));
    const auto flat = bicubic_resample_2d(Tensor::from_f32({h, w}, std::vector<float>(vals.size(), c)), oh, ow);
    for (float v : flat.f32()) worst_const = std::max(worst_const, static_cast<double>(std::fabs(v - c)));
  }
  return {worst <= 1e-5 && worst_const <= 1e-6,
          fmt("200 planes max|d|=%.3g (tol 1e-5) constant max|d|=%.3g (tol 1e-6)", worst, worst_const)};
}

Outcome score_oracle() {
  Rng rng(555);
  double worst = 0.0;
  int argmax_mismatch = 0;
  for (int inst = 0; inst < 500; ++inst) {
    const auto d = static_cast<std::size_t>(randint(rng, 2, 16));
    const auto k = randint(rng, 2, 5);
    const auto crops = randint(rng, 1, 16);
    std::vector<std::string> names;
    std::vector<std::vector<std::vector<float>>> groups;
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> offsets{0};
    for (std::int64_t y = 0; y < k; ++y) {
      names.push_back("c" + std::to_string(y));
      groups.emplace_back();
      const auto m = randint(rng, 1, 6);
      for (std::int64_t j = 0; j < m; ++j) {
        groups.back().push_back(random_unit(rng, d));
        rows.emplace_back(groups.back().back().begin(), groups.back().back().end());
      }
      offsets.push_back(rows.size());
    }
    const auto cat = DescriptionCatalog::from_rows(names, groups);
    EmbeddingSet set;
    std::vector<std::vector<double>> fd;
    for (std::int64_t i = 0; i < crops; ++i) {
      const auto f = random_unit(rng, d);
      fd.emplace_back(f.begin(), f.end());
      set.add(UnitVector::from_normalized(f), {});
    }
    // Catalog rows are renormalized in float on load, so feed the stored rows to the oracle.
    for (std::size_t t = 0; t < rows.size(); ++t) {
      const auto r = cat.row(static_cast<std::int64_t>(t));
      rows[t].assign(r.begin(), r.end());
    }
    const auto table = aggregate_scores(set, cat, kDefaultTau);
    const auto want = testing::score_oracle(fd, rows, offsets, static_cast<long double>(kDefaultTau));
    for (std::size_t y = 0; y < want.size(); ++y) {
      worst = std::max(worst, std::fabs(static_cast<double>(table.scores[y]) - static_cast<double>(want[y])));
    }
    if (table.predicted != static_cast<std::int64_t>(testing::argmax_oracle(want))) ++argmax_mismatch;
  }
  return {worst <= 1e-6 && argmax_mismatch == 0,
          fmt("500 instances max|d|=%.3g (tol 1e-6) argmax mismatches=%.0f", worst, argmax_mismatch)};
}

Outcome weight_rows() {
  Rng rng(77);
  double worst_sum = 0.0, worst_shift = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const auto n = static_cast<std::size_t>(randint(rng, 2, 64));
    // Dyadic values on a 2^-12 grid keep the shifted row exactly representable,
    // so any difference comes from the weight computation itself.
    std::vector<float> row(n), shifted(n);
    const float c = static_cast<float>(randint(rng, -64, 64)) / 16.0f;
    for (std::size_t i = 0; i < n; ++i) {
      row[i] = static_cast<float>(randint(rng, -4096, 4096)) / 4096.0f;
      shifted[i] = row[i] + c;
    }
    const auto w = description_weights(row, kDefaultTau);
    const auto ws = description_weights(shifted, kDefaultTau);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += w[i];
      worst_shift = std::max(worst_shift, static_cast<double>(std::fabs(w[i] - ws[i])));
    }
    worst_sum = std::max(worst_sum, std::fabs(s - 1.0));
  }
  return {worst_sum <= 1e-6 && worst_shift <= 1e-7,
          fmt("1000 rows max|sum-1|=%.3g (tol 1e-6) max shift |d|=%.3g (tol 1e-7)", worst_sum, worst_shift)};
}

Outcome split_composition() {
  const auto enc = make_reference_encoder(kSyntheticEncoderSeed);
  Rng rng(9);
  std::vector<Tensor> inputs, seqs;
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    inputs.push_back(random_input(enc->spec().input.input_size, rng));
    const auto g = enc->encode_prefix(inputs.back());
    seqs.push_back(assemble_crop_sequence(g.cls, g.tokens));
    worst = std::max(worst, max_abs_diff(enc->encode_image(inputs.back()), enc->encode_suffix(seqs.back())));
  }
  double worst_batch = 0.0;
  const auto batch = enc->encode_images(inputs);
  const auto sbatch = enc->encode_suffixes(seqs);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    worst_batch = std::max(worst_batch, max_abs_diff(batch[i], enc->encode_image(inputs[i])));
    worst_batch = std::max(worst_batch, max_abs_diff(sbatch[i], enc->encode_suffix(seqs[i])));
  }
  return {worst <= 1e-5 && worst_batch <= 1e-5,
          fmt("50 inputs max|d|=%.3g (tol 1e-5) batch-vs-single max|d|=%.3g (tol 1e-5)", worst, worst_batch)};
}

Outcome full_box_identity() {
  const auto enc = make_reference_encoder(kSyntheticEncoderSeed);
  Rng rng(10);
  double worst = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto w = randint(rng, 20, 80), h = randint(rng, 20, 80);
    std::vector<std::uint8_t> px(static_cast<std::size_t>(w * h * 3));
    for (auto& p : px) p = static_cast<std::uint8_t>(randint(rng, 0, 255));
    const ImageTensor img(w, h, px);
    const auto box = full_image_box(img.size());
    const auto input = crop_and_preprocess(img, box, enc->spec().input);
    const auto prefix = enc->encode_prefix(input);
    const auto tb = map_box_to_tokens(box, img.size(), prefix.grid);
    const auto seq = assemble_crop_sequence(prefix.cls, resize_token_grid(crop_token_grid(prefix, tb), prefix.grid));
    worst = std::max(worst, max_abs_diff(enc->encode_suffix(seq), enc->encode_image(input)));
  }
  return {worst <= 1e-4, fmt("20 inputs max|d|=%.3g (tol 1e-4)", worst)};
}

Outcome golden_end_to_end() {
  const auto start = Clock::now();
  const auto& frozen = builtin_goldens();
  if (frozen.eval_report.empty()) return {false, "no frozen eval report compiled in"};
  const auto world = make_synthetic_world();
  testing::TempDir dir;
  write_synthetic_world(world, dir.path());
  const auto serial = evaluate_dataset(dir / "dataset", world.config, world.backends, world.catalog);
  auto config = world.config;
  config.workers = 8;
  const auto parallel = evaluate_dataset(dir / "dataset", config, world.backends, world.catalog);
  const auto json = canonical_report_json(serial);
  const bool exact = json == frozen.eval_report;
  const bool same = json == canonical_report_json(parallel);
  const bool all = serial.correct == 12 && serial.image_count == 12;
  return {exact && same && all,
          std::string("frozen report ") + (exact ? "identical" : "DIFFERS") + ", accuracy " +
              std::to_string(serial.correct) + "/" + std::to_string(serial.image_count) + ", serial vs 8 workers " +
              (same ? "identical" : "DIFFER") + fmt(", %.2fs", seconds_since(start))};
}

class OneHotAttention final : public AttentionSource {
 public:
  OneHotAttention(EncoderInputSpec spec, GridDims grid, PatchIndex hot) : spec_(spec), grid_(grid), hot_(hot) {}
  const EncoderInputSpec& input_spec() const override { return spec_; }
  GridDims grid() const override { return grid_; }
  std::string model_id() const override { return "one-hot"; }
  MultiHeadClsAttention cls_attention(const Tensor&) const override {
    std::vector<float> v(static_cast<std::size_t>(grid_.count()), 0.0f);
    v[static_cast<std::size_t>(hot_.row * grid_.cols + hot_.col)] = 1.0f;
    return MultiHeadClsAttention(Tensor::from_f32({1, grid_.rows, grid_.cols}, std::move(v)));
  }

 private:
  EncoderInputSpec spec_;
  GridDims grid_;
  PatchIndex hot_;
};

Outcome one_hot_attention() {
  const auto world = make_synthetic_world();
  const auto enc = make_reference_encoder(kSyntheticEncoderSeed);
  const PatchIndex hot{2, 1};
  Backends backends{enc, std::make_shared<OneHotAttention>(enc->spec().input, enc->spec().grid, hot)};
  // Top-1 gives a one-point distribution; top-20-style k with a sharp temperature
  // concentrates all mass on the hot patch as well.
  struct Variant {
    std::int64_t k;
    double temperature;
  };
  int checked = 0, bad_anchor = 0, bad_box = 0;
  for (const auto v : {Variant{1, 1.0}, Variant{16, 0.01}}) {
    auto config = world.config;
    config.k = v.k;
    config.patch_temperature = v.temperature;
    config.n_crops = 20;
    for (const auto& item : world.items) {
      const auto r = run_image(item.image, item.id, config, backends, world.catalog);
      const auto center = patch_center_pixels(hot, enc->spec().grid, item.image.size());
      for (const auto& t : r.crops) {
        ++checked;
        if (!(t.box.anchor == hot)) ++bad_anchor;
        if (!t.box.contains(center)) ++bad_box;
      }
    }
  }
  return {checked > 0 && bad_anchor == 0 && bad_box == 0,
          fmt("%.0f crops (k=1 T=1 and k=16 T=0.01): anchors off the hot patch=%.0f, boxes missing its center=%.0f",
              checked, bad_anchor, bad_box)};
}

}  // namespace

int main() {
  const auto start = Clock::now();
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"sampler statistics", sampler_statistics},
      {"bicubic oracle", bicubic_oracle},
      {"score aggregation oracle", score_oracle},
      {"weight row invariants", weight_rows},
      {"split composition identity", split_composition},
      {"feature branch full-box identity", full_box_identity},
      {"golden end-to-end", golden_end_to_end},
      {"degenerate attention", one_hot_attention},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.passed) ++failures;
    std::printf("%s  %s: %s\n", o.passed ? "PASS" : "FAIL", name, o.detail.c_str());
  }
  const double secs = seconds_since(start);
  std::printf("acceptance finished in %.2fs with %d failure(s)\n", secs, failures);
  return failures == 0 ? 0 : 1;
}
