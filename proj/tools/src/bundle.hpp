#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "io.hpp"
#include "netme/data.hpp"
#include "netme/gmrf.hpp"

namespace netme::cli {

struct RawColumn {
  std::string name;
  std::vector<double> values;
  bool dummy = false;
};

// Everything a dataset bundle stores, with covariates on their raw scale.
struct BundleContents {
  std::vector<std::string> segment_ids;
  std::vector<double> counts;
  std::vector<double> offsets;  // km
  std::vector<double> lengths_m;
  std::vector<int> components;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // i < j
  RawColumn proxy;
  std::string proxy_label = "Road traffic";
  std::vector<RawColumn> regression;
  std::vector<RawColumn> exposure;
};

inline constexpr const char* kBundleFiles[] = {"segments.csv", "covariates.csv", "adjacency.csv",
                                               "standardization.json"};

// Writes segments.csv, covariates.csv, adjacency.csv and standardization.json.
void write_bundle(const fs::path& dir, const BundleContents& contents);

BundleContents read_bundle(const fs::path& dir);

// Standardises the covariates into a model dataset.
Dataset to_dataset(const BundleContents& contents);
IcarStructure to_icar(const BundleContents& contents);

// SHA-256 over "name sha256(file)" lines of the bundle files.
std::string bundle_hash(const fs::path& dir);
json bundle_file_hashes(const fs::path& dir);

}  // namespace netme::cli
