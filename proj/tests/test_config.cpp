#include <gtest/gtest.h>

#include <cstdlib>

#include "dacl/config.hpp"
#include "dacl/errors.hpp"

using namespace dacl;

TEST(Config, DefaultsValidateAndMatchTrainingSchedule) {
    ModelConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.epochs, 12u);
    EXPECT_EQ(c.batch_size, 32u);
    EXPECT_EQ(c.temperature, 0.07);
    EXPECT_EQ(c.warmup_ratio, 0.1);
    EXPECT_EQ(c.weight_decay, 0.01);
    EXPECT_EQ(c.patience, 3u);
}

TEST(Config, LargeConfigHyperparameters) {
    auto c = bert_base_config();
    EXPECT_EQ(c.lr, 3e-5);
    EXPECT_EQ(c.regulator_hidden, 64u);
    EXPECT_EQ(c.projection_dim, 256u);
    EXPECT_EQ(c.max_len, 256u);
    EXPECT_EQ(c.scl_weight, 0.3);
}

TEST(Config, ParsesKeyValueText) {
    ModelConfig c;
    apply_config_text(c, "# toy\nlr = 0.01\n\nn_heads=2   # trailing\ncontrastive = false\nscl_pooling = mean\n",
                      "c.cfg");
    EXPECT_EQ(c.lr, 0.01);
    EXPECT_EQ(c.n_heads, 2u);
    EXPECT_FALSE(c.contrastive);
    EXPECT_EQ(c.scl_pooling, SclPooling::Mean);
}

TEST(Config, UnknownKeyAndBadValueNameTheLine) {
    ModelConfig c;
    try {
        apply_config_text(c, "lr = 1e-3\nlearning_rate = 3\n", "c.cfg");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("c.cfg:2"), std::string::npos) << e.what();
        EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos) << e.what();
    }
    EXPECT_THROW(apply_config_text(c, "epochs = many\n", "c.cfg"), ConfigError);
    EXPECT_THROW(apply_config_text(c, "just words\n", "c.cfg"), ConfigError);
    EXPECT_THROW(c.set("nope", "1"), ConfigError);
}

TEST(Config, ValidateNamesOffendingKey) {
    ModelConfig c;
    c.n_heads = 5;  // 64 is not divisible by 5
    try {
        c.validate();
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("n_heads"), std::string::npos) << e.what();
    }
    ModelConfig t;
    t.temperature = 0.0;
    EXPECT_THROW(t.validate(), ConfigError);
    ModelConfig f;
    f.freeze_layers = 5;
    EXPECT_THROW(f.validate(), ConfigError);
}

TEST(Config, EnvironmentOverrides) {
    ::setenv("DACL_LR", "0.25", 1);
    ::setenv("DACL_DYNAMIC_ATTENTION", "false", 1);
    ModelConfig c;
    apply_env_overrides(c);
    ::unsetenv("DACL_LR");
    ::unsetenv("DACL_DYNAMIC_ATTENTION");
    EXPECT_EQ(c.lr, 0.25);
    EXPECT_FALSE(c.dynamic_attention);

    ::setenv("DACL_EPOCHS", "-3", 1);
    ModelConfig d;
    EXPECT_THROW(apply_env_overrides(d), ConfigError);
    ::unsetenv("DACL_EPOCHS");
}

TEST(Config, JsonRoundTripCoversEveryKey) {
    ModelConfig c;
    c.lr = 0.0123;
    c.n_layers = 3;
    c.dynamic_attention = false;
    c.scl_pooling = SclPooling::Mean;
    c.seed = 123456789012345ULL;
    auto j = c.to_json();
    for (const auto& [key, help] : config_keys()) {
        EXPECT_TRUE(j.contains(key)) << key;
        EXPECT_FALSE(help.empty()) << key;
    }
    auto back = ModelConfig::from_json(j);
    EXPECT_EQ(back.to_json(), j);
    for (const auto& [key, help] : config_keys()) EXPECT_EQ(back.get(key), c.get(key)) << key;
}
