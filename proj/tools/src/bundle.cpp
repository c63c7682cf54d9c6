#include "bundle.hpp"

#include <map>
#include <set>

#include "netme/error.hpp"

namespace netme::cli {

namespace {

std::vector<std::string> covariate_columns(const BundleContents& b) {
  std::vector<std::string> names{b.proxy.name};
  std::set<std::string> seen{b.proxy.name};
  for (const auto* group : {&b.regression, &b.exposure})
    for (const RawColumn& c : *group)
      if (seen.insert(c.name).second) names.push_back(c.name);
  return names;
}

json scaling_json(const RawColumn& column) {
  json out = {{"column", column.name}, {"dummy", column.dummy}};
  if (!column.dummy) {
    ColumnScaling s{column.name};
    Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(column.values.data(),
                                                          static_cast<Eigen::Index>(column.values.size()));
    standardize(v, s);
    out["mean"] = s.mean;
    out["sd"] = s.sd;
  }
  return out;
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void write_bundle(const fs::path& dir, const BundleContents& b) {
  const std::size_t n = b.segment_ids.size();
  fs::create_directories(dir);

  CsvTable segments{{"segment_id", "count", "offset", "length_m", "component"}, {}};
  for (std::size_t i = 0; i < n; ++i)
    segments.rows.push_back({b.segment_ids[i], format_number(b.counts[i]), format_number(b.offsets[i]),
                             format_number(b.lengths_m[i]), std::to_string(b.components[i])});
  write_file(dir / "segments.csv", to_csv(segments));

  std::map<std::string, const RawColumn*> by_name{{b.proxy.name, &b.proxy}};
  for (const auto* group : {&b.regression, &b.exposure})
    for (const RawColumn& c : *group) by_name.emplace(c.name, &c);
  const auto names = covariate_columns(b);
  CsvTable covariates{{"segment_id"}, {}};
  for (const auto& name : names) covariates.header.push_back(name);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::string> row{b.segment_ids[i]};
    for (const auto& name : names) row.push_back(format_number(by_name.at(name)->values[i]));
    covariates.rows.push_back(std::move(row));
  }
  write_file(dir / "covariates.csv", to_csv(covariates));

  CsvTable adjacency{{"segment_a", "segment_b"}, {}};
  for (const auto& [i, j] : b.edges) adjacency.rows.push_back({b.segment_ids[i], b.segment_ids[j]});
  write_file(dir / "adjacency.csv", to_csv(adjacency));

  json proxy = scaling_json(b.proxy);
  proxy["label"] = b.proxy_label;
  json regression = json::array(), exposure = json::array();
  for (const RawColumn& c : b.regression) regression.push_back(scaling_json(c));
  for (const RawColumn& c : b.exposure) exposure.push_back(scaling_json(c));
  write_json(dir / "standardization.json",
             {{"proxy", proxy}, {"regression", regression}, {"exposure", exposure}});
}

BundleContents read_bundle(const fs::path& dir) {
  for (const char* f : kBundleFiles)
    if (!fs::exists(dir / f)) throw ValidationError("bundle " + dir.string() + " lacks " + f);
  BundleContents b;

  const CsvTable segments = read_csv(dir / "segments.csv");
  const std::size_t c_id = segments.column("segment_id"), c_count = segments.column("count"),
                    c_offset = segments.column("offset"), c_len = segments.column("length_m"),
                    c_comp = segments.column("component");
  std::map<std::string, std::size_t> index;
  for (const auto& row : segments.rows) {
    if (!index.emplace(row[c_id], b.segment_ids.size()).second)
      throw ValidationError("duplicate segment id " + row[c_id] + " in segments.csv");
    b.segment_ids.push_back(row[c_id]);
    b.counts.push_back(parse_double(row[c_count], "segments.csv count"));
    b.offsets.push_back(parse_double(row[c_offset], "segments.csv offset"));
    b.lengths_m.push_back(parse_double(row[c_len], "segments.csv length_m"));
    b.components.push_back(static_cast<int>(parse_double(row[c_comp], "segments.csv component")));
  }
  const std::size_t n = b.segment_ids.size();

  const CsvTable adjacency = read_csv(dir / "adjacency.csv");
  for (const auto& row : adjacency.rows) {
    auto a = index.find(row[adjacency.column("segment_a")]);
    auto c = index.find(row[adjacency.column("segment_b")]);
    if (a == index.end() || c == index.end())
      throw ValidationError("adjacency.csv names an unknown segment");
    b.edges.emplace_back(std::min(a->second, c->second), std::max(a->second, c->second));
  }

  const CsvTable covariates = read_csv(dir / "covariates.csv");
  if (covariates.rows.size() != n) throw ValidationError("covariates.csv and segments.csv differ in length");
  const std::size_t cov_id = covariates.column("segment_id");
  for (std::size_t i = 0; i < n; ++i)
    if (covariates.rows[i][cov_id] != b.segment_ids[i])
      throw ValidationError("covariates.csv row " + std::to_string(i + 1) + " is not segment " +
                            b.segment_ids[i]);
  auto column = [&](const json& entry) {
    RawColumn c;
    c.name = entry.at("column").get<std::string>();
    c.dummy = entry.value("dummy", false);
    const std::size_t k = covariates.column(c.name);
    for (const auto& row : covariates.rows) c.values.push_back(parse_double(row[k], "covariates.csv " + c.name));
    return c;
  };

  const json scaling = read_json(dir / "standardization.json");
  try {
    b.proxy = column(scaling.at("proxy"));
    b.proxy_label = scaling.at("proxy").value("label", b.proxy.name);
    for (const json& e : scaling.at("regression")) b.regression.push_back(column(e));
    for (const json& e : scaling.at("exposure")) b.exposure.push_back(column(e));
  } catch (const json::exception& e) {
    throw ValidationError("invalid standardization.json: " + std::string(e.what()));
  }
  return b;
}

Dataset to_dataset(const BundleContents& b) {
  Dataset data;
  const auto n = static_cast<Eigen::Index>(b.segment_ids.size());
  data.segment_ids = b.segment_ids;
  data.y = as_vector(b.counts);
  data.e = as_vector(b.offsets);
  data.w_scaling.name = b.proxy_label;
  data.w = standardize(as_vector(b.proxy.values), data.w_scaling);
  data.w_scaling.name = b.proxy_label;
  auto fill = [n](const std::vector<RawColumn>& cols, Eigen::MatrixXd& m, std::vector<ColumnScaling>& scaling) {
    m.resize(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto c = static_cast<Eigen::Index>(j);
      ColumnScaling s{cols[j].name};
      if (cols[j].dummy) {
        m.col(c) = as_vector(cols[j].values);
        s.dummy = true;
      } else {
        m.col(c) = standardize(as_vector(cols[j].values), s);
      }
      scaling.push_back(s);
    }
  };
  fill(b.regression, data.z, data.z_scaling);
  fill(b.exposure, data.ztilde, data.ztilde_scaling);
  data.validate();
  return data;
}

IcarStructure to_icar(const BundleContents& b) { return icar_structure(b.segment_ids.size(), b.edges); }

json bundle_file_hashes(const fs::path& dir) {
  json out = json::object();
  for (const char* f : kBundleFiles) out[f] = sha256_file(dir / f);
  return out;
}

std::string bundle_hash(const fs::path& dir) {
  std::string lines;
  for (const char* f : kBundleFiles) lines += std::string(f) + " " + sha256_file(dir / f) + "\n";
  return sha256_hex(lines);
}

}  // namespace netme::cli
