// Copyright 2026 The vxa Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <algorithm>
#include <string>

#include <gtest/gtest.h>

#include "vxa/config.hpp"

namespace vxa {
namespace {

TEST(Config, ParsesKeysCommentsAndWhitespace) {
  RunConfig rc;
  apply_config_text(rc, R"(# synthetic run
proj_dim = 64
  lr_max=0.001   # peak
cycle_steps = 300

augmentation = spec_augment
use_as_norm = false
mode_select = text_only
datasets = anon_a, anon_b
manifest = data/manifest.tsv
seed = 9
)");
  EXPECT_EQ(rc.model.proj_dim, 64);
  EXPECT_EQ(rc.train.lr.lr_max, 0.001);
  EXPECT_EQ(rc.train.lr.cycle_steps, 300);
  EXPECT_TRUE(rc.train.spec_augment());
  EXPECT_FALSE(rc.eval.use_as_norm);
  EXPECT_EQ(rc.eval.mode, EmbeddingMode::text_only);
  EXPECT_EQ(rc.train.datasets, (std::vector<std::string>{"anon_a", "anon_b"}));
  EXPECT_EQ(rc.paths.manifest, "data/manifest.tsv");
  EXPECT_EQ(rc.seed, 9u);
  EXPECT_EQ(rc.train.seed, 9u);
  EXPECT_EQ(rc.eval.seed, 9u);
}

TEST(Config, UnknownKeyRejectedWithLine) {
  RunConfig rc;
  try {
    apply_config_text(rc, "proj_dim = 8\nproj_dims = 9\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("proj_dims"), std::string::npos);
  }
  EXPECT_THROW(apply_override(rc, "nope=1"), ArgumentError);
}

TEST(Config, MalformedLinesAndValues) {
  RunConfig rc;
  EXPECT_THROW(apply_config_text(rc, "proj_dim 8\n"), ParseError);
  EXPECT_THROW(apply_config_text(rc, "proj_dim = eight\n"), ParseError);
  EXPECT_THROW(apply_config_text(rc, "proj_dim = 8x\n"), ParseError);
  EXPECT_THROW(apply_config_text(rc, "use_as_norm = maybe\n"), ParseError);
  EXPECT_THROW(apply_config_text(rc, "mode_select = both\n"), ParseError);
  EXPECT_THROW(apply_config_text(rc, "augmentation = mixup\n"), ParseError);
  EXPECT_THROW(apply_override(rc, "proj_dim"), ArgumentError);
}

TEST(Config, OverridesWin) {
  RunConfig rc;
  apply_config_text(rc, "max_epochs = 25\n");
  apply_override(rc, "max_epochs=3");
  EXPECT_EQ(rc.train.max_epochs, 3);
}

TEST(Config, KeysMirrorModelConfigFields) {
  RunConfig rc;
  const auto keys = ConfigKeys(rc).keys();
  for (const char* k : {"audio_in", "text_in", "proj_dim", "confidence_hidden", "gate_hidden", "n_classes", "dropout_audio",
                        "dropout_text", "aam_scale", "aam_margin", "lambda_e", "lambda_f", "lambda_a", "lambda_t",
                        "layer_norm_eps", "batch_size", "originals_per_batch", "max_epochs", "early_stop_patience",
                        "use_as_norm", "mode_select"})
    EXPECT_NE(std::find(keys.begin(), keys.end(), k), keys.end()) << k;
}

TEST(Config, FormatRoundTrips) {
  RunConfig a;
  apply_config_text(a, "aam_margin = 0.30000000000000004\naugmentation = spec_augment,anonymized_mix\nn_classes = 12\nout = runs/x\n");
  const auto text = format_config(a);
  RunConfig b;
  apply_config_text(b, text);
  EXPECT_EQ(format_config(b), text);
  EXPECT_EQ(b.model.aam_margin, 0.1 + 0.2);
  EXPECT_FALSE(b.n_classes_auto);
  EXPECT_EQ(b.model.n_classes, 12);
}

TEST(Config, NClassesAuto) {
  RunConfig rc;
  EXPECT_TRUE(rc.n_classes_auto);
  apply_override(rc, "n_classes=7");
  EXPECT_FALSE(rc.n_classes_auto);
  apply_override(rc, "n_classes=auto");
  EXPECT_TRUE(rc.n_classes_auto);
}

TEST(Config, ModelConfigTextIsExact) {
  ModelConfig m;
  m.dropout_text = 1.0 / 3.0;
  m.n_classes = 12;
  const auto back = parse_model_config(format_model_config(m));
  EXPECT_EQ(back.dropout_text, m.dropout_text);
  EXPECT_EQ(back.n_classes, 12);
  EXPECT_EQ(format_model_config(back), format_model_config(m));
}

TEST(Config, Defaults) {
  RunConfig rc;
  EXPECT_EQ(rc.train.batch_size, 32);
  EXPECT_EQ(rc.train.originals_per_batch, 8);
  EXPECT_EQ(rc.train.max_epochs, 25);
  EXPECT_EQ(rc.train.early_stop_patience, 10);
  EXPECT_EQ(rc.train.adamw.weight_decay, 1e-5);
  EXPECT_EQ(rc.train.lr.cycle_steps, 13000);
  EXPECT_EQ(rc.eval.cohort_top_k, 1000);
  EXPECT_TRUE(rc.eval.use_as_norm);
  EXPECT_EQ(rc.model.aam_scale, 30.0);
  EXPECT_EQ(rc.model.aam_margin, 0.15);
}

}  // namespace
}  // namespace vxa
