#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

#include "attnsel/errors.h"
#include "attnsel/pipeline.h"

namespace attnsel {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

struct DatasetItem {
  std::string id;  // path relative to the dataset root, '/'-separated
  fs::path path;
  std::int64_t class_index = -1;  // catalog index
  std::string label;
};

std::map<std::string, std::string> load_mapping(const fs::path& path) {
  std::map<std::string, std::string> mapping;
  if (path.empty()) return mapping;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open class mapping: " + path.string());
  try {
    mapping = json::parse(in).get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": class mapping must be a JSON object of strings (" + e.what() + ")");
  }
  return mapping;
}

// Writes results in dataset order as soon as a contiguous prefix is ready.
class OrderedWriter {
 public:
  explicit OrderedWriter(const fs::path& path) {
    if (!path.empty()) {
      out_.open(path, std::ios::trunc);
      if (!out_) throw ConfigError("cannot open results file: " + path.string());
    }
  }

  void put(std::size_t index, std::string line) {
    std::lock_guard lock(mu_);
    pending_.emplace(index, std::move(line));
    while (!pending_.empty() && pending_.begin()->first == next_) {
      if (out_.is_open()) out_ << pending_.begin()->second << '\n';
      pending_.erase(pending_.begin());
      ++next_;
    }
  }

 private:
  std::mutex mu_;
  std::ofstream out_;
  std::map<std::size_t, std::string> pending_;
  std::size_t next_ = 0;
};

}  // namespace

EvalReport evaluate_dataset(const fs::path& root, const RunConfig& config, const Backends& backends,
                            const DescriptionCatalog& catalog, const EvalOptions& options) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  if (!fs::is_directory(root)) throw ConfigError("dataset root is not a directory: " + root.string());

  EvalReport report;
  report.dataset = fs::absolute(root).lexically_normal().filename().string();
  if (report.dataset.empty()) report.dataset = fs::absolute(root).lexically_normal().parent_path().filename().string();
  report.config = to_json(config);
  if (options.baseline) report.config["mode"] = "baseline";
  auto warn = [&](std::string msg) {
    if (options.on_warning) options.on_warning(msg);
    report.warnings.push_back(std::move(msg));
  };

  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.size() < 2) {
    throw ConfigError("dataset needs at least 2 class directories (K >= 2), found " + std::to_string(class_dirs.size()));
  }
  if (catalog.class_count() < 2) throw ConfigError("catalog needs at least 2 classes");

  const auto mapping = load_mapping(config.class_mapping);
  std::vector<std::string> unmatched;
  std::vector<std::int64_t> dir_class;
  for (const auto& dir : class_dirs) {
    const auto it = mapping.find(dir);
    const auto name = it == mapping.end() ? dir : it->second;
    const auto idx = catalog.find(name);
    if (!idx) unmatched.push_back(dir == name ? dir : dir + " -> " + name);
    dir_class.push_back(idx.value_or(-1));
  }
  if (!unmatched.empty()) {
    std::string msg = "dataset classes not found in catalog:";
    for (const auto& u : unmatched) msg += " '" + u + "'";
    throw ConfigError(msg);
  }

  std::vector<DatasetItem> items;
  for (std::size_t d = 0; d < class_dirs.size(); ++d) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root / class_dirs[d])) {
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) warn("class directory '" + class_dirs[d] + "' contains no images");
    for (auto& f : files) {
      const auto name = catalog.cls(dir_class[d]).name;
      items.push_back({class_dirs[d] + "/" + f.filename().string(), std::move(f), dir_class[d], name});
    }
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  struct Outcome {
    bool ok = false;
    std::int64_t predicted = -1;
    std::string error;
  };
  std::vector<Outcome> outcomes(items.size());
  OrderedWriter writer(options.jsonl);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr fatal;
  std::mutex fatal_mu;

  auto work = [&] {
    while (!abort.load()) {
      const auto i = next.fetch_add(1);
      if (i >= items.size()) return;
      const auto& item = items[i];
      auto& outcome = outcomes[i];
      try {
        ImageTensor image;
        try {
          image = decode_image(item.path);
        } catch (const std::exception& e) {
          outcome.error = e.what();
          writer.put(i, json{{"image_id", item.id}, {"label", item.label}, {"error", outcome.error}}.dump());
          continue;
        }
        auto result = options.baseline ? run_baseline(image, item.id, config, backends, catalog)
                                       : run_image(image, item.id, config, backends, catalog);
        result.label = item.label;
        outcome.ok = true;
        outcome.predicted = result.predicted;
        writer.put(i, to_json(result, catalog).dump());
      } catch (...) {
        std::lock_guard lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
        abort.store(true);
        return;
      }
    }
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(config.workers), std::max<std::size_t>(items.size(), 1));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }
  if (fatal) std::rethrow_exception(fatal);

  std::map<std::int64_t, ClassAccuracy> per_class;
  for (std::size_t d = 0; d < class_dirs.size(); ++d) {
    per_class[dir_class[d]].name = catalog.cls(dir_class[d]).name;
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!outcomes[i].ok) {
      report.errors.push_back({items[i].id, outcomes[i].error});
      continue;
    }
    auto& pc = per_class[items[i].class_index];
    ++pc.count;
    ++report.image_count;
    if (outcomes[i].predicted == items[i].class_index) {
      ++pc.correct;
      ++report.correct;
    }
  }
  for (auto& [idx, pc] : per_class) report.per_class.push_back(pc);
  report.top1_accuracy =
      report.image_count > 0 ? static_cast<double>(report.correct) / static_cast<double>(report.image_count) : 0.0;
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

json to_json(const EvalReport& r) {
  json per_class = json::array();
  for (const auto& pc : r.per_class) {
    json entry = {{"class", pc.name}, {"count", pc.count}, {"correct", pc.correct}};
    entry["accuracy"] = pc.count > 0 ? json(static_cast<double>(pc.correct) / static_cast<double>(pc.count)) : json();
    per_class.push_back(std::move(entry));
  }
  json errors = json::array();
  for (const auto& e : r.errors) errors.push_back({{"image_id", e.image_id}, {"error", e.message}});
  return {{"dataset", r.dataset},
          {"image_count", r.image_count},
          {"correct", r.correct},
          {"top1_accuracy", r.top1_accuracy},
          {"per_class", std::move(per_class)},
          {"errors", std::move(errors)},
          {"warnings", r.warnings},
          {"config", r.config},
          {"wall_time_s", r.wall_time_s}};
}

std::string canonical_report_json(const EvalReport& report) {
  auto j = to_json(report);
  j.erase("wall_time_s");
  for (const char* key : {"models_dir", "catalog", "class_mapping", "dataset", "output", "workers"}) {
    j["config"].erase(key);
  }
  return j.dump(2);
}

}  // namespace attnsel
