#include <gtest/gtest.h>

#include <set>

#include "rigno/config.hpp"

using namespace rigno;

TEST(Config, DefaultsMirrorStructs) {
  const RunConfig c;
  EXPECT_EQ(get_config_value(c, "batch_size"), "16");
  EXPECT_EQ(get_config_value(c, "curriculum_fraction"), "0.2");
  EXPECT_EQ(get_config_value(c, "kind"), "derivative");
  EXPECT_EQ(get_config_value(c, "overlap_decoder"), "2");
  EXPECT_EQ(get_config_value(c, "processor_steps"), "18");
  EXPECT_EQ(get_config_value(c, "gradcut"), "true");
}

TEST(Config, TextParsing) {
  RunConfig c;
  apply_config_text(c, "# comment\n\nepochs = 7\n  mask_prob=0.25  # trailing\nkind = residual\ndata = a b.rgnd\n");
  EXPECT_EQ(c.train.epochs, 7);
  EXPECT_EQ(c.train.mask_prob, 0.25);
  EXPECT_EQ(c.train.kind, StepKind::residual);
  EXPECT_EQ(c.data, "a b.rgnd");
}

TEST(Config, UnknownKeyAndBadValues) {
  RunConfig c;
  EXPECT_THROW(apply_config_text(c, "epoch = 3\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "epochs = three\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "epochs = 3.5\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "deterministic = maybe\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "kind = sideways\n"), ConfigError);
  EXPECT_THROW(apply_config_text(c, "just words\n"), ConfigError);
  try {
    apply_config_text(c, "epochs = 1\nbogus = 2\n", "run.cfg");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("run.cfg:2"), std::string::npos);
  }
}

TEST(Config, DumpRoundTrip) {
  RunConfig a;
  a.train.epochs = 11;
  a.graph.overlap_decoder = 1.5;
  a.train.lr.lr_peak = 3.3e-4;
  a.schemes = "ar2,custom:1,2";
  a.seed = 12345678901234ULL;
  RunConfig b;
  apply_config_text(b, dump_config(a));
  EXPECT_EQ(dump_config(a), dump_config(b));
  EXPECT_EQ(b.train.lr.lr_peak, 3.3e-4);
  EXPECT_EQ(b.seed, 12345678901234ULL);
}

TEST(Config, KeysUnique) {
  std::set<std::string> names;
  for (const auto& k : config_keys()) {
    EXPECT_TRUE(names.insert(k.name).second) << k.name;
    EXPECT_FALSE(k.help.empty()) << k.name;
  }
}

TEST(Config, ValidateCatchesRanges) {
  RunConfig c;
  c.validate();
  c.members = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c.members = 20;
  c.graph.overlap_encoder = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, IndexList) {
  EXPECT_EQ(parse_index_list("1, 2,5"), (std::vector<Index>{1, 2, 5}));
  EXPECT_TRUE(parse_index_list("").empty());
  EXPECT_THROW(parse_index_list("1,x"), ConfigError);
}
