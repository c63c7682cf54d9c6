#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "bundle.hpp"
#include "commands.hpp"
#include "netme/error.hpp"

using namespace netme;
using namespace netme::cli;

namespace {

const fs::path kFixtures = NETME_FIXTURE_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("netme_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

struct Invocation {
  int status = 0;
  std::string out;
};

// Runs the netme binary with stderr folded into the captured output.
Invocation run(const std::string& args) {
  const std::string cmd = std::string(NETME_BINARY) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  Invocation r;
  std::array<char, 4096> buf{};
  std::size_t got = 0;
  while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), got);
  const int status = pclose(pipe);
  r.status = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

IngestOptions toy_ingest(const fs::path& out) {
  IngestOptions o;
  o.network = kFixtures / "toy_network.geojson";
  o.events = kFixtures / "toy_events.geojson";
  o.out = out;
  return o;
}

FitConfig quick_fit(const fs::path& bundle, const fs::path& out, Variant v) {
  FitConfig c;
  c.bundle = bundle;
  c.out = out;
  c.spec.variant = v;
  c.sampler.n_iterations = 300;
  c.sampler.n_burnin = 100;
  c.sampler.thinning = 2;
  c.sampler.n_chains = 2;
  c.sampler.n_threads = 1;
  c.sampler.rng_seed = 3;
  return c;
}

fs::path simulated_bundle(const std::string& name, std::uint64_t seed = 4) {
  SimulateOptions s;
  s.out = scratch(name);
  s.rows = 5;
  s.cols = 5;
  s.seed = seed;
  cmd_simulate(s);
  return s.out;
}

}  // namespace

TEST(CliIo, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(CliIo, CsvRoundTrip) {
  const fs::path dir = scratch("csv");
  CsvTable t;
  t.header = {"name", "value"};
  t.rows = {{"plain", "1.5"}, {"with,comma", "2"}, {"say \"hi\"", "-3e-05"}};
  write_file(dir / "t.csv", to_csv(t));
  const CsvTable back = read_csv(dir / "t.csv");
  EXPECT_EQ(back.header, t.header);
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(back.column("value"), 1u);
  EXPECT_THROW(back.column("missing"), ValidationError);
  EXPECT_THROW(parse_double("1.5x", "cell"), ValidationError);
}

TEST(CliIo, NumbersRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.125, -2.5})
    EXPECT_EQ(std::stod(format_number(v)), v);
  EXPECT_EQ(format_number(0.1), "0.1");
}

TEST(CliConfig, PriorRecords) {
  const PriorSpec p = parse_prior(json{{"family", "normal"}, {"mean", 1.0}, {"precision", 4.0}}, "p");
  EXPECT_DOUBLE_EQ(std::get<NormalPrior>(p).variance, 0.25);
  EXPECT_THROW(parse_prior(json{{"family", "normal"}, {"variance", 1.0}, {"precision", 1.0}}, "p"),
               ValidationError);
  EXPECT_THROW(parse_prior(json{{"family", "pc"}, {"sigma0", 1.0}, {"alpha", 1.5}}, "p"), ValidationError);
  EXPECT_THROW(parse_prior(json{{"family", "cauchy"}}, "p"), ValidationError);
  const PriorSpec g = parse_prior(prior_to_json(GammaPrecisionPrior{1.0, 5e-5}), "p");
  EXPECT_DOUBLE_EQ(std::get<GammaPrecisionPrior>(g).rate, 5e-5);
}

TEST(CliConfig, FitConfigParsing) {
  const json doc = {{"data", {{"bundle", "b"}}},
                    {"model", {{"variant", "spatial_me"}, {"deviance", "all_blocks"}}},
                    {"priors", {{"tau_u", {{"family", "pc"}, {"sigma0", 1.0}, {"alpha", 0.1}}}}},
                    {"sampler", {{"iterations", 100}, {"burnin", 50}, {"seed", 9}}},
                    {"output", {{"dir", "out"}}}};
  const FitConfig c = parse_fit_config(doc, "/base");
  EXPECT_EQ(c.bundle, fs::path("/base/b"));
  EXPECT_EQ(c.out, fs::path("/base/out"));
  EXPECT_EQ(c.spec.variant, Variant::spatial_me);
  EXPECT_EQ(c.deviance, DevianceScope::all_blocks);
  EXPECT_EQ(c.sampler.rng_seed, 9u);
  EXPECT_TRUE(std::holds_alternative<PcPrecisionPrior>(c.spec.priors.at("tau_u")));
  EXPECT_THROW(parse_fit_config(json{{"sampler", {{"iters", 3}}}}, "/"), ValidationError);
  EXPECT_THROW(parse_fit_config(json{{"priors", {{"tau_q", {{"family", "pc"}}}}}}, "/"), ValidationError);
}

TEST(CliIngest, ToyNetwork) {
  const fs::path out = scratch("ingest_toy");
  IngestOptions o = toy_ingest(out);
  o.covariates = {"lanes"};
  o.road_class_dummies = true;
  const json report = cmd_ingest(o);
  EXPECT_EQ(report["segments"], 3);
  EXPECT_EQ(report["edges"], 2);
  EXPECT_EQ(report["events_assigned"], 4);
  EXPECT_EQ(report["message"], "0 events dropped (>10 m)");
  const CsvTable seg = read_csv(out / "segments.csv");
  ASSERT_EQ(seg.rows.size(), 3u);
  EXPECT_EQ(seg.rows[0][seg.column("count")], "1");
  EXPECT_EQ(seg.rows[1][seg.column("count")], "2");
  EXPECT_EQ(seg.rows[2][seg.column("count")], "1");
  EXPECT_EQ(seg.rows[0][seg.column("offset")], "0.1");
  const CsvTable cov = read_csv(out / "covariates.csv");
  EXPECT_TRUE(cov.has_column("Road class primary"));
  EXPECT_FALSE(cov.has_column("Road class local"));
  const Dataset d = to_dataset(read_bundle(out));
  EXPECT_EQ(d.size(), 3);
  EXPECT_NEAR(d.w.mean(), 0.0, 1e-12);
  EXPECT_TRUE(fs::exists(out / "manifest.json"));
}

TEST(CliIngest, FarEventIsDropped) {
  const fs::path out = scratch("ingest_far");
  IngestOptions o = toy_ingest(out);
  o.events = kFixtures / "far_events.geojson";
  const json report = cmd_ingest(o);
  EXPECT_EQ(report["message"], "1 event dropped (>10 m)");
  EXPECT_EQ(report["dropped_event_ids"], json::array({"e5"}));
}

TEST(CliIngest, PolygonCovariates) {
  const fs::path out = scratch("ingest_poly");
  IngestOptions o = toy_ingest(out);
  o.polygons = kFixtures / "toy_polygons.geojson";
  o.exposure_covariates = {"density"};
  cmd_ingest(o);
  const CsvTable cov = read_csv(out / "covariates.csv");
  const std::size_t c = cov.column("density");
  EXPECT_EQ(cov.rows[0][c], "5");
  EXPECT_EQ(cov.rows[1][c], "9");
  EXPECT_EQ(cov.rows[2][c], "9");
}

TEST(CliIngest, GeographicCoordinatesAreRefused) {
  IngestOptions o = toy_ingest(scratch("ingest_lonlat"));
  o.network = kFixtures / "lonlat_network.geojson";
  try {
    cmd_ingest(o);
    FAIL() << "expected refusal";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("projected coordinates required"), std::string::npos);
  }
}

TEST(CliIngest, SimulatedStreetNetworkRoundTrips) {
  SimulateOptions s;
  s.out = scratch("sim_street");
  s.lattice = "street";
  s.rows = 3;
  s.cols = 3;
  cmd_simulate(s);
  const fs::path out = scratch("sim_street_ingest");
  IngestOptions o;
  o.network = s.out / "network.geojson";
  o.events = s.out / "events.geojson";
  o.out = out;
  cmd_ingest(o);
  for (const char* f : {"segments.csv", "covariates.csv", "adjacency.csv"})
    EXPECT_EQ(read_file(s.out / f), read_file(out / f)) << f;
}

TEST(CliFit, FitCompareExport) {
  const fs::path bundle = simulated_bundle("fce_bundle");
  const fs::path root = scratch("fce");
  const json a = cmd_fit(quick_fit(bundle, root / "baseline", Variant::baseline));
  const json b = cmd_fit(quick_fit(bundle, root / "classical", Variant::classical_me));
  EXPECT_EQ(a["model"], "baseline");
  for (const char* f : {"summary.csv", "criteria.json", "lambda.csv", "diagnostics.json", "manifest.json",
                        "predicted_vs_observed.csv", "chains/logpost.csv"})
    EXPECT_TRUE(fs::exists(root / "classical" / f)) << f;
  const CsvTable summary = read_csv(root / "classical" / "summary.csv");
  EXPECT_EQ(summary.rows[0][0], "Intercept");
  EXPECT_TRUE(summary.has_column("rhat"));

  const json cmp = cmd_compare({root / "baseline", root / "classical"}, root / "cmp");
  EXPECT_EQ(cmp["rows"].size(), 2u);
  EXPECT_TRUE(fs::exists(root / "cmp" / "comparison.csv"));

  const fs::path other = simulated_bundle("fce_other", 5);
  cmd_fit(quick_fit(other, root / "other", Variant::baseline));
  try {
    cmd_compare({root / "baseline", root / "other"}, std::nullopt);
    FAIL() << "expected refusal";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("comparisons across datasets are invalid"), std::string::npos);
  }

  const json ex = cmd_export(root / "classical", bundle / "network.geojson", root / "rates.geojson");
  EXPECT_EQ(ex["features"], 25);
  const json doc = read_json(root / "rates.geojson");
  std::set<int> deciles;
  for (const json& f : doc["features"]) {
    const json& p = f["properties"];
    EXPECT_LE(p["lambda_low90"].get<double>(), p["lambda_mean"].get<double>());
    deciles.insert(p["decile"].get<int>());
  }
  EXPECT_EQ(deciles.size(), 10u);
  EXPECT_EQ(*deciles.begin(), 1);
  EXPECT_EQ(*deciles.rbegin(), 10);

  // toy network ids are not in this fit
  EXPECT_THROW(cmd_export(root / "classical", kFixtures / "toy_network.geojson", root / "x.geojson"),
               ValidationError);
}

TEST(CliFit, EmptySweepEqualsPlainFit) {
  const fs::path bundle = simulated_bundle("sweep_bundle");
  const fs::path root = scratch("sweep");
  cmd_fit(quick_fit(bundle, root / "plain", Variant::classical_me));
  const json s = cmd_sensitivity(quick_fit(bundle, {}, Variant::classical_me), {}, root / "sweep");
  ASSERT_EQ(s["columns"].size(), 1u);
  EXPECT_EQ(read_file(root / "plain" / "summary.csv"), read_file(root / "sweep" / "col0" / "summary.csv"));
}

TEST(CliFit, SweepParsing) {
  EXPECT_EQ(published_sensitivity_design().size(), 6u);
  const json doc = {{"alternatives", {{{"slot", "tau_u"}, {"prior", {{"family", "pc"}, {"sigma0", 2.0}, {"alpha", 0.1}}}}}}};
  EXPECT_EQ(parse_sweep(doc).size(), 1u);
  const json bad = {{"alternatives", {{{"slot", "beta0"}, {"prior", {{"family", "normal"}, {"variance", 1.0}}}}}}};
  EXPECT_THROW(parse_sweep(bad), ValidationError);
}

TEST(CliBinary, ExitCodes) {
  const fs::path root = scratch("binary");
  Invocation help = run("--help");
  EXPECT_EQ(help.status, 0);
  EXPECT_NE(help.out.find("ingest"), std::string::npos);

  Invocation bad = run("fit --iterations nope");
  EXPECT_EQ(bad.status, 2);
  EXPECT_NE(bad.out.find("\"validation\""), std::string::npos);

  Invocation missing = run("fit --bundle " + (root / "nowhere").string() + " -o " + (root / "fit").string());
  EXPECT_EQ(missing.status, 2);

  Invocation lonlat = run("ingest --network " + (kFixtures / "lonlat_network.geojson").string() + " --events " +
                   (kFixtures / "toy_events.geojson").string() + " -o " + (root / "b").string());
  EXPECT_EQ(lonlat.status, 2);
  EXPECT_NE(lonlat.out.find("projected coordinates required"), std::string::npos);

  Invocation far = run("ingest --network " + (kFixtures / "toy_network.geojson").string() + " --events " +
                (kFixtures / "far_events.geojson").string() + " -o " + (root / "b").string());
  EXPECT_EQ(far.status, 0);
  EXPECT_NE(far.out.find("1 event dropped (>10 m)"), std::string::npos);
}
