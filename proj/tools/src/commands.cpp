#include "commands.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "bundle.hpp"
#include "netme/diagnostics.hpp"
#include "netme/error.hpp"
#include "netme/sim.hpp"

#ifndef NETME_VERSION
#define NETME_VERSION "0.0.0"
#endif

namespace netme::cli {

namespace {

std::string printf_string(const char* format, ...) {
  va_list args;
  va_start(args, format);
  char buf[512];
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

std::string file_stem(const std::string& name) {
  std::string out;
  for (char c : name) {
    const auto u = static_cast<unsigned char>(c);
    out += std::isalnum(u) ? static_cast<char>(std::tolower(u)) : '_';
  }
  return out;
}

json state_to_json(const LatentState& s) {
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json out = {{"beta", vec(s.beta)}};
  if (s.alpha.size()) out["alpha"] = vec(s.alpha);
  if (s.theta.size()) out["theta"] = vec(s.theta);
  if (s.x.size()) out["x"] = vec(s.x);
  if (s.phi.size()) out["phi"] = vec(s.phi);
  out["tau_theta"] = s.tau_theta;
  if (s.x.size()) {
    out["tau_eps"] = s.tau_eps;
    out["tau_u"] = s.tau_u;
  }
  if (s.phi.size()) out["tau_phi"] = s.tau_phi;
  return out;
}

// Adds "outputs" with the hash of every listed file and writes manifest.json.
void write_manifest(const fs::path& dir, json manifest, const std::vector<std::string>& outputs) {
  json hashes = json::object();
  for (const auto& f : outputs) hashes[f] = sha256_file(dir / f);
  manifest["version"] = NETME_VERSION;
  manifest["outputs"] = hashes;
  write_json(dir / "manifest.json", manifest);
}

double lookup_attribute(const Segment& s, const std::optional<std::size_t>& polygon,
                        const PolygonCovariateLayer* layer, const std::string& name) {
  if (auto it = s.attributes.find(name); it != s.attributes.end()) return it->second;
  if (layer && polygon) {
    const auto& attrs = layer->polygons[*polygon].attributes;
    if (auto it = attrs.find(name); it != attrs.end()) return it->second;
  }
  throw ValidationError("segment " + s.id + " has no numeric attribute '" + name + "'");
}

// Regression rows in the published table order: intercept, covariates, the
// proxy, exposure coefficients, precisions.
std::vector<std::size_t> summary_order(const PosteriorSamples& samples) {
  std::vector<std::size_t> order{0};
  for (Eigen::Index j = 2; j < samples.n_beta; ++j) order.push_back(static_cast<std::size_t>(j));
  order.push_back(1);
  for (std::size_t j = static_cast<std::size_t>(samples.n_beta); j < samples.scalar_names.size(); ++j)
    order.push_back(j);
  return order;
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) out += (i ? "," : "") + csv_escape(fields[i]);
  return out + "\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// ingest

json cmd_ingest(const IngestOptions& o) {
  std::vector<Segment> segments = read_segments_geojson(o.network);
  const std::vector<EventPoint> events = read_events_geojson(o.events);
  std::vector<Point> segment_points, event_points;
  for (const Segment& s : segments) segment_points.insert(segment_points.end(), s.polyline.begin(), s.polyline.end());
  for (const EventPoint& e : events) event_points.push_back(e.location);
  if (looks_geographic(segment_points) || looks_geographic(event_points))
    throw ValidationError("projected coordinates required: inputs look like longitude/latitude degrees");

  const std::size_t n_input = segments.size();
  const SegmentNetwork full = build_adjacency(std::move(segments));
  const PrunePolicy policy =
      o.min_component_size ? PrunePolicy::at_least(*o.min_component_size) : PrunePolicy::keep_largest();
  const PruneResult pruned = prune_components(full, policy);
  const SegmentNetwork& net = pruned.network;
  const std::size_t n = net.size();

  const auto assignments = snap_events(events, net, o.snap_tolerance_m);
  const auto counts = count_events(assignments, net);
  json dropped = json::array();
  for (const auto& a : assignments)
    if (!a.segment_index) dropped.push_back(a.event_id);

  std::optional<PolygonCovariateLayer> layer;
  std::vector<std::optional<std::size_t>> polygon_of(n);
  if (o.polygons) {
    layer = read_polygons_geojson(*o.polygons);
    const OverlayResult overlay = overlay_covariates(net, *layer);
    polygon_of = overlay.polygon_index;
  }

  BundleContents b;
  for (std::size_t i = 0; i < n; ++i) {
    const Segment& s = net.segment(i);
    b.segment_ids.push_back(s.id);
    b.counts.push_back(counts[i]);
    b.offsets.push_back(s.length_m / 1000.0);
    b.lengths_m.push_back(s.length_m);
    b.components.push_back(net.component_label()[i]);
  }
  b.edges = net.edges();
  auto column = [&](const std::string& name) {
    RawColumn c{name, {}, false};
    for (std::size_t i = 0; i < n; ++i)
      c.values.push_back(lookup_attribute(net.segment(i), polygon_of[i], layer ? &*layer : nullptr, name));
    return c;
  };
  b.proxy = column(o.proxy);
  b.proxy_label = o.proxy_label;
  if (o.road_class_dummies) {
    std::vector<std::string> classes;
    for (const Segment& s : net.segments()) classes.push_back(s.road_class);
    const std::set<std::string> levels(classes.begin(), classes.end());
    const std::string reference = o.road_class_reference.value_or(*levels.begin());
    if (!levels.count(reference)) throw ValidationError("road class reference '" + reference + "' does not occur");
    std::vector<ColumnScaling> scaling;
    const Eigen::MatrixXd d = dummy_columns(classes, reference, "Road class ", scaling);
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      RawColumn c{scaling[static_cast<std::size_t>(j)].name, {}, true};
      for (Eigen::Index i = 0; i < d.rows(); ++i) c.values.push_back(d(i, j));
      b.regression.push_back(std::move(c));
    }
  }
  for (const auto& name : o.covariates) b.regression.push_back(column(name));
  for (const auto& name : o.exposure_covariates) b.exposure.push_back(column(name));
  // Fails early on constant or malformed columns.
  to_dataset(b);

  write_bundle(o.out, b);

  const std::size_t n_dropped = dropped.size();
  const std::string tol = format_number(o.snap_tolerance_m);
  json report = {
      {"segments_input", n_input},
      {"segments", n},
      {"edges", net.n_edges()},
      {"components_input", full.n_components()},
      {"components_pruned", pruned.components_removed},
      {"segments_pruned", pruned.n_removed},
      {"events", events.size()},
      {"events_assigned", events.size() - n_dropped},
      {"events_dropped", n_dropped},
      {"dropped_event_ids", dropped},
      {"snap_tolerance_m", o.snap_tolerance_m},
      {"message", std::to_string(n_dropped) + (n_dropped == 1 ? " event" : " events") + " dropped (>" + tol +
                      " m)"}};
  write_json(o.out / "ingest_report.json", report);

  json inputs = {{o.network.filename().string(), sha256_file(o.network)},
                 {o.events.filename().string(), sha256_file(o.events)}};
  if (o.polygons) inputs[o.polygons->filename().string()] = sha256_file(*o.polygons);
  json options = {{"proxy", o.proxy},
                  {"proxy_label", o.proxy_label},
                  {"covariates", o.covariates},
                  {"exposure_covariates", o.exposure_covariates},
                  {"road_class_dummies", o.road_class_dummies},
                  {"snap_tolerance_m", o.snap_tolerance_m}};
  if (o.min_component_size) options["min_component_size"] = *o.min_component_size;
  std::vector<std::string> outputs(std::begin(kBundleFiles), std::end(kBundleFiles));
  outputs.push_back("ingest_report.json");
  write_manifest(o.out,
                 {{"command", "ingest"}, {"inputs", inputs}, {"options", options}, {"data_hash", bundle_hash(o.out)}},
                 outputs);
  return report;
}

// ---------------------------------------------------------------------------
// simulate

json cmd_simulate(const SimulateOptions& o) {
  SimScenario sc;
  sc.variant = o.variant;
  sc.include_theta = o.include_theta;
  sc.beta0 = o.beta0;
  sc.beta_x = o.beta_x;
  sc.beta_z = o.beta_z;
  sc.alpha_z = o.alpha_z;
  sc.seed = o.seed;
  if (o.lattice == "street") {
    const double spacing = 100.0;
    sc.network = build_adjacency(make_street_grid_segments(o.rows, o.cols, spacing));
    sc.offsets.value = spacing / 1000.0;
  } else if (o.lattice == "grid") {
    sc.rows = o.rows;
    sc.cols = o.cols;
  } else {
    throw ValidationError("unknown lattice '" + o.lattice + "' (expected grid or street)");
  }
  if (o.lognormal_offsets) sc.offsets.kind = OffsetPolicy::Kind::lognormal;
  const SimulatedData sim = simulate_dataset(sc);
  const Dataset& d = sim.data;
  const std::size_t n = d.size();

  BundleContents b;
  b.segment_ids = d.segment_ids;
  b.counts.assign(d.y.data(), d.y.data() + n);
  b.offsets.assign(d.e.data(), d.e.data() + n);
  for (const Segment& s : sim.network.segments()) b.lengths_m.push_back(s.length_m);
  b.components = sim.network.component_label();
  b.edges = sim.network.edges();
  auto raw = [n](const std::string& name, const Eigen::VectorXd& v, const ColumnScaling& s) {
    RawColumn c{name, {}, false};
    for (std::size_t i = 0; i < n; ++i) c.values.push_back(v(static_cast<Eigen::Index>(i)) * s.sd + s.mean);
    return c;
  };
  b.proxy = raw("traffic", d.w, d.w_scaling);
  for (Eigen::Index j = 0; j < d.z.cols(); ++j) {
    const auto& s = d.z_scaling[static_cast<std::size_t>(j)];
    b.regression.push_back(raw(s.name, d.z.col(j), s));
  }
  for (Eigen::Index j = 0; j < d.ztilde.cols(); ++j) {
    const auto& s = d.ztilde_scaling[static_cast<std::size_t>(j)];
    b.exposure.push_back(raw(s.name, d.ztilde.col(j), s));
  }
  write_bundle(o.out, b);

  // Shifted into a plausible projected coordinate range.
  const double x0 = 400000.0, y0 = 5700000.0;
  json features = json::array(), event_features = json::array();
  std::size_t event_id = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Segment& s = sim.network.segment(i);
    json coords = json::array();
    for (const Point& p : s.polyline) coords.push_back({x0 + p.x, y0 + p.y});
    json props = {{"segment_id", s.id}, {"traffic", b.proxy.values[i]}};
    for (const auto* group : {&b.regression, &b.exposure})
      for (const RawColumn& c : *group) props[c.name] = c.values[i];
    features.push_back({{"type", "Feature"},
                        {"properties", props},
                        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}}});
    const json& a = coords.front();
    const json& z = coords.back();
    const json mid = {(a[0].get<double>() + z[0].get<double>()) / 2, (a[1].get<double>() + z[1].get<double>()) / 2};
    for (int k = 0; k < static_cast<int>(b.counts[i]); ++k)
      event_features.push_back({{"type", "Feature"},
                                {"properties", {{"id", "e" + std::to_string(event_id++)}}},
                                {"geometry", {{"type", "Point"}, {"coordinates", mid}}}});
  }
  write_json(o.out / "network.geojson", {{"type", "FeatureCollection"}, {"features", features}});
  write_json(o.out / "events.geojson", {{"type", "FeatureCollection"}, {"features", event_features}});

  json truth = {{"variant", to_string(o.variant)},
                {"seed", o.seed},
                {"lattice", o.lattice},
                {"standardized", state_to_json(sim.truth)},
                {"original", state_to_json(sim.truth_original)}};
  write_json(o.out / "truth.json", truth);

  std::vector<std::string> outputs(std::begin(kBundleFiles), std::end(kBundleFiles));
  for (const char* f : {"network.geojson", "events.geojson", "truth.json"}) outputs.push_back(f);
  json options = {{"lattice", o.lattice}, {"rows", o.rows},         {"cols", o.cols},
                  {"variant", to_string(o.variant)},               {"spatial_theta", o.include_theta},
                  {"beta0", o.beta0},       {"beta_x", o.beta_x},  {"beta_z", o.beta_z},
                  {"alpha_z", o.alpha_z},   {"lognormal_offsets", o.lognormal_offsets},
                  {"seed", o.seed}};
  write_manifest(o.out, {{"command", "simulate"}, {"options", options}, {"data_hash", bundle_hash(o.out)}},
                 outputs);
  return {{"segments", n}, {"events", event_id}, {"data_hash", bundle_hash(o.out)}};
}

// ---------------------------------------------------------------------------
// fit

json cmd_fit(const FitConfig& cfg) {
  cfg.validate();
  if (cfg.out.empty()) throw ValidationError("output.dir is required");
  const BundleContents b = read_bundle(cfg.bundle);
  const Dataset data = to_dataset(b);
  const IcarStructure icar = to_icar(b);
  const std::string data_hash = bundle_hash(cfg.bundle);
  SamplerConfig sampler = cfg.sampler;
  sampler.store_fields = true;

  const PosteriorSamples samples = run_mcmc(data, cfg.spec, icar, sampler);
  const auto summaries = summarize(samples);
  const DiagnosticsReport diag = diagnostics(samples);
  const DicResult d = dic(samples, data, cfg.spec, cfg.deviance);
  const WaicResult w = waic(samples, data, cfg.spec, cfg.deviance);
  const auto lambda = lambda_summary(samples, data, cfg.spec);
  const auto classes = predicted_vs_observed(samples, data, cfg.spec);

  const fs::path& out = cfg.out;
  fs::create_directories(out / "chains");
  std::vector<std::string> outputs;

  std::string csv = "parameter,mean,sd,q05,q95,rhat,ess_bulk,mcse_mean\n";
  json rows = json::array();
  for (std::size_t k : summary_order(samples)) {
    const ParameterSummary& s = summaries[k];
    const ParameterDiagnostics& p = diag.parameters[k];
    const std::string rhat = p.rhat ? format_number(*p.rhat) : "";
    csv += csv_line({s.name, format_number(s.mean), format_number(s.sd), format_number(s.q05), format_number(s.q95),
                     rhat, format_number(p.ess_bulk), format_number(p.mcse_mean)});
    json row = {{"parameter", s.name}, {"mean", s.mean}, {"sd", s.sd}, {"q05", s.q05}, {"q95", s.q95},
                {"ess_bulk", p.ess_bulk}};
    row["rhat"] = p.rhat ? json(*p.rhat) : json(nullptr);
    rows.push_back(row);
  }
  write_file(out / "summary.csv", csv);
  outputs.push_back("summary.csv");

  json criteria = {{"model", to_string(cfg.spec.variant)},
                   {"deviance_scope", to_string(cfg.deviance)},
                   {"dic", d.dic},
                   {"p_d", d.p_d},
                   {"dbar", d.dbar},
                   {"d_hat", d.d_hat},
                   {"waic", w.waic},
                   {"p_waic", w.p_waic},
                   {"lppd", w.lppd},
                   {"data_hash", data_hash}};
  write_json(out / "criteria.json", criteria);
  outputs.push_back("criteria.json");

  json report = {{"model", to_string(cfg.spec.variant)},
                 {"chains", samples.n_chains()},
                 {"draws_per_chain", samples.draws_per_chain()},
                 {"parameters", rows},
                 {"criteria", criteria},
                 {"warnings", diag.warnings}};
  write_file(out / "summary.txt", format_summary_table(report));
  outputs.push_back("summary.txt");

  json acceptance = json::array();
  for (const auto& c : samples.chains) acceptance.push_back(c.acceptance);
  write_json(out / "diagnostics.json", {{"warnings", diag.warnings}, {"acceptance", acceptance}});
  outputs.push_back("diagnostics.json");

  std::string lam = "segment_id,mean,sd,q05,q95\n";
  for (std::size_t i = 0; i < lambda.size(); ++i)
    lam += csv_line({data.segment_ids[i], format_number(lambda[i].mean), format_number(lambda[i].sd),
                     format_number(lambda[i].q05), format_number(lambda[i].q95)});
  write_file(out / "lambda.csv", lam);
  outputs.push_back("lambda.csv");

  std::string pvo = "class,observed,predicted\n";
  for (const CountClass& c : classes)
    pvo += csv_line({c.label, format_number(c.observed), format_number(c.predicted)});
  write_file(out / "predicted_vs_observed.csv", pvo);
  outputs.push_back("predicted_vs_observed.csv");

  std::string header = "draw";
  for (std::size_t c = 0; c < samples.n_chains(); ++c) header += ",chain" + std::to_string(c + 1);
  header += "\n";
  for (std::size_t k = 0; k < samples.scalar_names.size(); ++k) {
    std::string text = header;
    for (Eigen::Index r = 0; r < samples.draws_per_chain(); ++r) {
      text += std::to_string(r + 1);
      for (const auto& c : samples.chains) text += "," + format_number(c.scalars(r, static_cast<Eigen::Index>(k)));
      text += "\n";
    }
    const std::string name = "chains/" + file_stem(samples.scalar_names[k]) + ".csv";
    write_file(out / name, text);
    outputs.push_back(name);
  }
  {
    std::string text = "iteration";
    for (std::size_t c = 0; c < samples.n_chains(); ++c) text += ",chain" + std::to_string(c + 1);
    text += "\n";
    const std::size_t iters = samples.chains.front().logpost_trace.size();
    for (std::size_t r = 0; r < iters; ++r) {
      text += std::to_string(r + 1);
      for (const auto& c : samples.chains) text += "," + format_number(c.logpost_trace[r]);
      text += "\n";
    }
    write_file(out / "chains/logpost.csv", text);
    outputs.push_back("chains/logpost.csv");
  }

  write_manifest(out,
                 {{"command", "fit"},
                  {"inputs", bundle_file_hashes(cfg.bundle)},
                  {"data_hash", data_hash},
                  {"settings", cfg.settings()}},
                 outputs);
  return report;
}

// ---------------------------------------------------------------------------
// compare

json cmd_compare(const std::vector<fs::path>& fits, const std::optional<fs::path>& out) {
  if (fits.size() < 2) throw ValidationError("compare needs at least two fit directories");
  std::vector<ComparisonRow> rows;
  std::vector<std::string> labels;
  std::string hash;
  for (const fs::path& f : fits) {
    const json c = read_json(f / "criteria.json");
    const std::string h = c.at("data_hash").get<std::string>();
    if (hash.empty()) hash = h;
    if (h != hash)
      throw ValidationError("fit " + f.string() + " was run on different data (hash " + h.substr(0, 12) +
                            " vs " + hash.substr(0, 12) + "); comparisons across datasets are invalid");
    ComparisonRow r;
    r.model = c.at("model").get<std::string>();
    r.dic = c.at("dic").get<double>();
    r.p_d = c.at("p_d").get<double>();
    r.waic = c.at("waic").get<double>();
    r.p_waic = c.at("p_waic").get<double>();
    rows.push_back(r);
    labels.push_back(fs::path(f).lexically_normal().filename().empty()
                         ? fs::path(f).lexically_normal().parent_path().filename().string()
                         : fs::path(f).lexically_normal().filename().string());
  }
  flag_best(rows);
  json table = json::array();
  std::string csv = "fit,model,dic,p_d,waic,p_waic,best_dic,best_waic\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const ComparisonRow& r = rows[i];
    table.push_back({{"fit", labels[i]},
                     {"model", r.model},
                     {"dic", r.dic},
                     {"p_d", r.p_d},
                     {"waic", r.waic},
                     {"p_waic", r.p_waic},
                     {"best_dic", r.best_dic},
                     {"best_waic", r.best_waic}});
    csv += csv_line({labels[i], r.model, format_number(r.dic), format_number(r.p_d), format_number(r.waic),
                     format_number(r.p_waic), r.best_dic ? "true" : "false", r.best_waic ? "true" : "false"});
  }
  json report = {{"data_hash", hash}, {"rows", table}};
  if (out) {
    write_json(*out / "comparison.json", report);
    write_file(*out / "comparison.csv", csv);
    write_file(*out / "comparison.txt", format_comparison_table(report));
    json inputs = json::object();
    for (std::size_t i = 0; i < fits.size(); ++i) inputs[labels[i] + "/criteria.json"] = sha256_file(fits[i] / "criteria.json");
    write_manifest(*out, {{"command", "compare"}, {"inputs", inputs}, {"data_hash", hash}},
                   {"comparison.json", "comparison.csv", "comparison.txt"});
  }
  return report;
}

// ---------------------------------------------------------------------------
// sensitivity

std::vector<PriorAlternative> published_sensitivity_design() {
  return {{"beta_x", NormalPrior{0.0, 10.0}},       {"beta_x", NormalPrior{0.0, 100.0}},
          {"tau_eps", PcPrecisionPrior{2.0, 0.1}},  {"tau_eps", PcPrecisionPrior{0.5, 0.1}},
          {"tau_u", PcPrecisionPrior{3.0, 0.1}},    {"tau_u", PcPrecisionPrior{1.0, 0.1}}};
}

std::vector<PriorAlternative> parse_sweep(const json& doc) {
  if (!doc.is_object() || !doc.contains("alternatives") || !doc["alternatives"].is_array())
    throw ValidationError("sweep file needs an 'alternatives' array");
  std::vector<PriorAlternative> out;
  for (const json& a : doc["alternatives"]) {
    if (!a.is_object() || !a.contains("slot") || !a["slot"].is_string() || !a.contains("prior"))
      throw ValidationError("every sweep alternative needs 'slot' and 'prior'");
    const std::string slot = a["slot"].get<std::string>();
    if (slot != "beta_x" && slot != "tau_eps" && slot != "tau_u")
      throw ValidationError("sweep slot '" + slot + "' is not one of beta_x, tau_eps, tau_u");
    out.push_back({slot, parse_prior(a["prior"], "sweep " + slot)});
  }
  return out;
}

json cmd_sensitivity(const FitConfig& base, const std::vector<PriorAlternative>& alternatives,
                     const fs::path& out) {
  base.validate();
  json columns = json::array();
  std::vector<std::map<std::string, std::pair<double, double>>> cells;
  std::vector<std::string> order;
  std::optional<Error> first_error;
  for (std::size_t k = 0; k <= alternatives.size(); ++k) {
    FitConfig cfg = base;
    const std::string id = "(" + std::to_string(k) + ")";
    json col = {{"id", id}, {"dir", "col" + std::to_string(k)}};
    if (k == 0) {
      col["label"] = "default";
    } else {
      const PriorAlternative& a = alternatives[k - 1];
      cfg.spec.priors.at(a.slot) = a.prior;
      col["label"] = a.slot + " ~ " + describe(a.prior);
      col["slot"] = a.slot;
      col["prior"] = prior_to_json(a.prior);
    }
    cfg.out = out / ("col" + std::to_string(k));
    std::map<std::string, std::pair<double, double>> cell;
    try {
      const json report = cmd_fit(cfg);
      for (const json& row : report["parameters"]) {
        const std::string name = row["parameter"].get<std::string>();
        cell[name] = {row["mean"].get<double>(), row["sd"].get<double>()};
        if (std::find(order.begin(), order.end(), name) == order.end()) order.push_back(name);
      }
      col["status"] = "ok";
      col["dic"] = report["criteria"]["dic"];
      col["waic"] = report["criteria"]["waic"];
    } catch (const Error& e) {
      col["status"] = "failed";
      col["error"] = {{"kind", e.kind() == ErrorKind::validation ? "validation" : "numerical"}, {"message", e.what()}};
      if (!first_error) first_error = e;
    }
    cells.push_back(std::move(cell));
    columns.push_back(col);
  }
  bool any_ok = false;
  for (const json& c : columns) any_ok = any_ok || c["status"] == "ok";
  if (!any_ok) throw *first_error;

  json table = json::array();
  std::string csv = "parameter";
  for (const json& c : columns) csv += "," + csv_escape(c["id"].get<std::string>());
  csv += "\n";
  for (const std::string& name : order) {
    json row = {{"parameter", name}};
    json values = json::array();
    std::vector<std::string> fields{name};
    for (const auto& cell : cells) {
      auto it = cell.find(name);
      if (it == cell.end()) {
        values.push_back(nullptr);
        fields.push_back("");
      } else {
        values.push_back({{"mean", it->second.first}, {"sd", it->second.second}});
        fields.push_back(printf_string("%.3f (%.3f)", it->second.first, it->second.second));
      }
    }
    row["columns"] = values;
    table.push_back(row);
    csv += csv_line(fields);
  }
  json report = {{"columns", columns}, {"table", table}};
  write_json(out / "sensitivity.json", report);
  write_file(out / "sensitivity.csv", csv);
  write_file(out / "sensitivity.txt", format_sensitivity_table(report));
  write_manifest(out,
                 {{"command", "sensitivity"},
                  {"inputs", bundle_file_hashes(base.bundle)},
                  {"data_hash", bundle_hash(base.bundle)},
                  {"settings", base.settings()}},
                 {"sensitivity.json", "sensitivity.csv", "sensitivity.txt"});
  return report;
}

// ---------------------------------------------------------------------------
// export

json cmd_export(const fs::path& fit_dir, const fs::path& network, const fs::path& out) {
  const CsvTable lambda = read_csv(fit_dir / "lambda.csv");
  const std::size_t c_id = lambda.column("segment_id"), c_mean = lambda.column("mean"),
                    c_lo = lambda.column("q05"), c_hi = lambda.column("q95");
  const std::vector<Segment> segments = read_segments_geojson(network);
  std::map<std::string, const Segment*> by_id;
  for (const Segment& s : segments) by_id.emplace(s.id, &s);

  std::vector<std::string> orphans;
  for (const auto& row : lambda.rows)
    if (!by_id.count(row[c_id])) orphans.push_back(row[c_id]);
  if (!orphans.empty()) {
    std::string list;
    for (std::size_t i = 0; i < orphans.size() && i < 20; ++i) list += (i ? ", " : "") + orphans[i];
    if (orphans.size() > 20) list += ", ...";
    throw ValidationError(std::to_string(orphans.size()) + " fitted segment ids missing from " +
                          network.filename().string() + ": " + list);
  }

  const std::size_t n = lambda.rows.size();
  if (n == 0) throw ValidationError("lambda.csv has no rows");
  std::vector<double> mean(n);
  for (std::size_t i = 0; i < n; ++i) mean[i] = parse_double(lambda.rows[i][c_mean], "lambda.csv mean");
  std::vector<std::size_t> rank_order(n);
  std::iota(rank_order.begin(), rank_order.end(), 0);
  std::stable_sort(rank_order.begin(), rank_order.end(), [&](std::size_t a, std::size_t b) { return mean[a] < mean[b]; });
  std::vector<int> decile(n);
  for (std::size_t r = 0; r < n; ++r) decile[rank_order[r]] = static_cast<int>(r * 10 / n) + 1;

  json features = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = lambda.rows[i];
    const Segment& s = *by_id.at(row[c_id]);
    json coords = json::array();
    for (const Point& p : s.polyline) coords.push_back({p.x, p.y});
    features.push_back({{"type", "Feature"},
                        {"properties",
                         {{"segment_id", s.id},
                          {"lambda_mean", mean[i]},
                          {"lambda_low90", parse_double(row[c_lo], "lambda.csv q05")},
                          {"lambda_high90", parse_double(row[c_hi], "lambda.csv q95")},
                          {"decile", decile[i]}}},
                        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}}});
  }
  write_json(out, {{"type", "FeatureCollection"}, {"features", features}});
  return {{"features", n}, {"unmatched_network_segments", segments.size() - n}};
}

// ---------------------------------------------------------------------------
// tables

std::string format_summary_table(const json& r) {
  std::string out = "Model: " + r["model"].get<std::string>() + " (" + std::to_string(r["chains"].get<int>()) +
                    " chains, " + std::to_string(r["draws_per_chain"].get<long long>()) + " draws each)\n\n";
  out += pad("Parameter", 28) + pad("Mean (SD)", 24) + pad("90% interval", 26) + "R-hat   ESS\n";
  for (const json& row : r["parameters"]) {
    const std::string rhat = row["rhat"].is_null() ? "-" : printf_string("%.3f", row["rhat"].get<double>());
    out += pad(row["parameter"].get<std::string>(), 28) +
           pad(printf_string("%.4g (%.4g)", row["mean"].get<double>(), row["sd"].get<double>()), 24) +
           pad(printf_string("[%.4g, %.4g]", row["q05"].get<double>(), row["q95"].get<double>()), 26) +
           pad(rhat, 8) + printf_string("%.0f", row["ess_bulk"].get<double>()) + "\n";
  }
  const json& c = r["criteria"];
  out += printf_string("\nDIC %.2f (pD %.2f, %s deviance)   WAIC %.2f (pWAIC %.2f)\n", c["dic"].get<double>(),
                       c["p_d"].get<double>(), c["deviance_scope"].get<std::string>().c_str(),
                       c["waic"].get<double>(), c["p_waic"].get<double>());
  for (const json& w : r["warnings"]) out += "warning: " + w.get<std::string>() + "\n";
  return out;
}

std::string format_comparison_table(const json& c) {
  std::string out = pad("Fit", 24) + pad("Model", 14) + pad("DIC", 14) + pad("pD", 10) + pad("WAIC", 14) + "pWAIC\n";
  for (const json& r : c["rows"]) {
    out += pad(r["fit"].get<std::string>(), 24) + pad(r["model"].get<std::string>(), 14) +
           pad(printf_string("%.2f%s", r["dic"].get<double>(), r["best_dic"].get<bool>() ? "*" : ""), 14) +
           pad(printf_string("%.2f", r["p_d"].get<double>()), 10) +
           pad(printf_string("%.2f%s", r["waic"].get<double>(), r["best_waic"].get<bool>() ? "*" : ""), 14) +
           printf_string("%.2f", r["p_waic"].get<double>()) + "\n";
  }
  return out + "* lowest value of the criterion\n";
}

std::string format_sensitivity_table(const json& s) {
  std::string out = pad("Parameter", 28);
  for (const json& c : s["columns"]) out += pad(c["id"].get<std::string>(), 22);
  out += "\n";
  for (const json& row : s["table"]) {
    out += pad(row["parameter"].get<std::string>(), 28);
    for (const json& v : row["columns"])
      out += pad(v.is_null() ? "-" : printf_string("%.3f (%.3f)", v["mean"].get<double>(), v["sd"].get<double>()), 22);
    out += "\n";
  }
  out += "\n";
  for (const json& c : s["columns"]) {
    out += c["id"].get<std::string>() + ": " + c["label"].get<std::string>();
    if (c["status"] == "failed") out += "  [failed: " + c["error"]["message"].get<std::string>() + "]";
    out += "\n";
  }
  return out;
}

}  // namespace netme::cli
