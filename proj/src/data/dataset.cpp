#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>

#include "subm/data.hpp"

namespace fs = std::filesystem;

namespace subm {

void save_dataset(const Dataset& ds, const std::string& root, const std::string& split) {
  const fs::path base = fs::path(root) / split;
  std::error_code ec;
  fs::create_directories(base, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + base.string());
  std::map<int, int> next_id;
  for (const auto& s : ds.samples) {
    const fs::path dir = base / std::to_string(s.label);
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string());
    char name[32];
    std::snprintf(name, sizeof(name), "%06d.grid", next_id[s.label]++);
    save_grid_file(s.grid, (dir / name).string());
  }
}

Dataset load_dataset(const std::string& root, const std::string& split) {
  const fs::path base = fs::path(root) / split;
  Dataset ds;
  if (!fs::is_directory(base)) return ds;

  std::vector<std::pair<int, fs::path>> files;
  for (const auto& label_dir : fs::directory_iterator(base)) {
    if (!label_dir.is_directory()) continue;
    const std::string name = label_dir.path().filename().string();
    int label = -1;
    try {
      std::size_t used = 0;
      label = std::stoi(name, &used);
      if (used != name.size()) label = -1;
    } catch (const std::exception&) {
    }
    if (label < 0) continue;
    for (const auto& f : fs::directory_iterator(label_dir.path())) {
      if (f.is_regular_file() && f.path().extension() == ".grid") files.emplace_back(label, f.path());
    }
  }
  std::sort(files.begin(), files.end());
  for (const auto& [label, path] : files) {
    SparseGrid g = load_grid_file(path.string());
    if (g.batch_size() != 1) {
      throw Error(ErrorCode::kParseError, path.string() + ": dataset samples must hold one grid");
    }
    ds.samples.push_back({std::move(g), label});
    ds.classes = std::max(ds.classes, label + 1);
  }
  return ds;
}

}  // namespace subm
