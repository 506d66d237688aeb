#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <sstream>

#include "lclab/config.hpp"
#include "lclab/results.hpp"
#include "lclab/runners.hpp"

namespace lclab {
namespace {

EnvLookup fake_environment(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& name) -> std::optional<std::string> {
    const auto it = vars.find(name);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

TEST(Config, MinimalFileFillsDefaults) {
  const ExperimentConfig cfg = parse_config_text("kind = lightcone\n");
  EXPECT_EQ(cfg, ExperimentConfig::defaults(ExperimentKind::lightcone));
  EXPECT_EQ(cfg.integer("grid.points"), 96);
  EXPECT_EQ(cfg.text("propagator.method"), "rk4");
}

TEST(Config, EveryKindHasValidDefaults) {
  for (ExperimentKind k : all_experiment_kinds()) {
    EXPECT_NO_THROW(validate_config(ExperimentConfig::defaults(k))) << to_string(k);
    EXPECT_EQ(find_experiment_kind(to_string(k)), k);
  }
}

TEST(Config, DriftMustBeBelowFrontSpeed) {
  try {
    parse_config_text("kind = lightcone\nspeed.c = 2\nspeed.v = 3\n");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("v must be < c"), std::string::npos) << e.what();
  }
}

TEST(Config, UnknownKeyReportsLine) {
  try {
    parse_config_text("kind = lightcone\n\ngrid.points = 64\ngrid.pionts = 64\n", "test.cfg");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("test.cfg:4"), std::string::npos) << what;
    EXPECT_NE(what.find("grid.pionts"), std::string::npos) << what;
  }
}

TEST(Config, KeyForAnotherKindIsRejected) {
  EXPECT_THROW(parse_config_text("kind = kappa_sweep\ntime.horizon = 3\n"), ParseError);
}

TEST(Config, MalformedInputsRejected) {
  EXPECT_THROW(parse_config_text("grid.points = 64\n"), ParseError);
  EXPECT_THROW(parse_config_text("kind = nonsense\n"), ParseError);
  EXPECT_THROW(parse_config_text("kind = lightcone\ngrid.points\n"), ParseError);
  EXPECT_THROW(parse_config_text("kind = lightcone\ngrid.points = 6.5\n"), ParseError);
  EXPECT_THROW(parse_config_text("kind = lightcone\ngrid.points = 64\ngrid.points = 32\n"), ParseError);
  EXPECT_THROW(parse_config_text("kind = lightcone\npropagator.method = euler\n"), ParseError);
  EXPECT_THROW(parse_config_text("kind = lightcone\ngrid.points = 512\n"), ValidationError);
}

TEST(Config, SerializationRoundTrips) {
  const ExperimentConfig cfg =
      parse_config_text("kind = rme_sweep # trailing comment\nrme.s_values = 4,8 , 16\nrme.holdout_s = 8\nspeed.c_factor = 2\n");
  const std::string text = serialize_config(cfg);
  EXPECT_EQ(text.rfind("kind = rme_sweep\n", 0), 0u);
  EXPECT_NE(text.find("rme.s_values = 4, 8, 16\n"), std::string::npos);
  const ExperimentConfig again = parse_config_text(text);
  EXPECT_EQ(again, cfg);
  EXPECT_EQ(serialize_config(again), text);
  EXPECT_EQ(config_hash(again), config_hash(cfg));
  EXPECT_EQ(config_hash(cfg).size(), 16u);
}

TEST(Config, HashIgnoresOutputAndThreads) {
  const ExperimentConfig base = parse_config_text("kind = kappa_sweep\n");
  EXPECT_EQ(config_hash(parse_config_text("kind = kappa_sweep\noutput.dir = elsewhere\nrun.threads = 4\n")),
            config_hash(base));
  EXPECT_NE(config_hash(parse_config_text("kind = kappa_sweep\nrun.seed = 2\n")), config_hash(base));
}

TEST(Config, EnvironmentOverridesFile) {
  EXPECT_EQ(environment_name("propagator.dt"), "LCLAB_PROPAGATOR_DT");
  const auto env = fake_environment({{"LCLAB_GRID_POINTS", "48"}, {"LCLAB_UNRELATED", "1"}});
  const ExperimentConfig cfg = parse_config_text("kind = lightcone\ngrid.points = 64\n", "<t>", env);
  EXPECT_EQ(cfg.integer("grid.points"), 48);
  EXPECT_THROW(parse_config_text("kind = lightcone\n", "<t>", fake_environment({{"LCLAB_GRID_POINTS", "x"}})),
               ParseError);
}

TEST(Config, ShippedConfigsParse) {
  for (ExperimentKind k : all_experiment_kinds()) {
    const std::string path = std::string(LCLAB_SOURCE_DIR) + "/configs/" + to_string(k) + ".cfg";
    const ExperimentConfig cfg = parse_config(path);
    EXPECT_EQ(cfg.kind(), k) << path;
  }
}

TEST(Results, CsvRoundTrip) {
  ResultTable t({{"name", ColumnType::text}, {"n", ColumnType::integer}, {"x", ColumnType::real}});
  t.set_metadata("kind", "demo");
  t.add_row({std::string("a"), 3LL, 0.1});
  t.add_row({std::string("b"), -7LL, 1e-300});
  t.add_row({std::string("c"), 0LL, std::nan("")});
  const std::string csv = t.to_csv();
  EXPECT_EQ(csv.rfind("# kind = demo\n# columns = name:text,n:integer,x:real\nname,n,x\n", 0), 0u) << csv;
  std::istringstream is(csv);
  const ResultTable back = ResultTable::read_csv(is);
  EXPECT_EQ(back.to_csv(), csv);
  EXPECT_EQ(back.real_at(0, "x"), 0.1);
  EXPECT_EQ(back.real_at(1, "x"), 1e-300);
  EXPECT_TRUE(std::isnan(back.real_at(2, "x")));
  ASSERT_NE(back.find_metadata("kind"), nullptr);
  EXPECT_EQ(*back.find_metadata("kind"), "demo");
}

TEST(Results, RejectsBadCells) {
  ResultTable t({{"x", ColumnType::real}});
  EXPECT_THROW(t.add_row({std::string("1")}), InvalidArgument);
  EXPECT_THROW(t.add_row({1.0, 2.0}), InvalidArgument);
  ResultTable s({{"label", ColumnType::text}});
  EXPECT_THROW(s.add_row({std::string("a,b")}), InvalidArgument);
  std::istringstream bad("# columns = x:real\nx\nnot-a-number\n");
  EXPECT_THROW(ResultTable::read_csv(bad), ParseError);
}

TEST(Results, Fnv1aReferenceValues) {
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}

TEST(Runners, KappaSweepTable) {
  const ExperimentConfig cfg = parse_config(std::string(LCLAB_SOURCE_DIR) + "/configs/kappa_sweep.cfg");
  const RunOutcome out = run_experiment(cfg);
  ASSERT_EQ(out.table.size(), 5u);
  ASSERT_EQ(out.table.columns().size(), 3u);
  EXPECT_EQ(out.table.columns()[0].name, "E");
  EXPECT_EQ(out.table.columns()[1].name, "kappa");
  EXPECT_EQ(out.table.columns()[2].name, "slope_so_far");
  EXPECT_TRUE(std::isnan(out.table.real_at(0, "slope_so_far")));
  EXPECT_EQ(out.table.real_at(0, "E"), 4.0);
  EXPECT_NEAR(out.table.real_at(4, "E"), 64.0, 1e-12);
  for (std::size_t i = 1; i < 5; ++i) EXPECT_GT(out.table.real_at(i, "kappa"), out.table.real_at(i - 1, "kappa"));
  EXPECT_TRUE(out.passed()) << ::testing::PrintToString(out.failures());
  ASSERT_NE(out.table.find_metadata("config_hash"), nullptr);
  EXPECT_EQ(*out.table.find_metadata("config_hash"), config_hash(cfg));
  ASSERT_NE(out.table.find_metadata("guide_slope"), nullptr);
  EXPECT_EQ(*out.table.find_metadata("guide_slope"), "0.5");
  std::istringstream is(out.table.to_csv());
  EXPECT_EQ(ResultTable::read_csv(is).to_csv(), out.table.to_csv());
}

TEST(Runners, SummaryListsChecksAndStatus) {
  const RunOutcome out = run_experiment(parse_config(std::string(LCLAB_SOURCE_DIR) + "/configs/claim_fits.cfg"));
  const std::string text =
      summary_text(parse_config(std::string(LCLAB_SOURCE_DIR) + "/configs/claim_fits.cfg"), out);
  EXPECT_NE(text.find("check.claim1 = PASS\n"), std::string::npos) << text;
  EXPECT_NE(text.find("check.claim2 = PASS\n"), std::string::npos) << text;
  EXPECT_NE(text.find("status = ok\n"), std::string::npos) << text;
}

}  // namespace
}  // namespace lclab
