#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "shopalign/linalg.hpp"

namespace shopalign {

/// Per-product catalog metadata for one shop: an activity label and a
/// fixed-length feature vector (stand-in for image features).
struct Catalog {
  std::vector<std::string> ids;
  std::vector<std::string> activities;
  Mat features;  // |ids| x f

  int size() const { return static_cast<int>(ids.size()); }

  std::optional<int> row_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  void rebuild_index() {
    index_.clear();
    index_.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) index_.emplace(ids[i], static_cast<int>(i));
  }

 private:
  std::unordered_map<std::string, int> index_;
};

}  // namespace shopalign
