#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "tcseg/config.hpp"
#include "tcseg/errors.hpp"

using namespace tcseg;

TEST(Config, DefaultsValidate) {
    const TrainConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(c.iterations, 1000u);
    EXPECT_EQ(c.eval_every, 50u);
    EXPECT_EQ(c.lr, 0.01);
    EXPECT_EQ(c.ema_alpha, 0.99);
    EXPECT_EQ(c.seeds.size(), 5u);
    EXPECT_EQ(c.labeled_batch + c.unlabeled_batch, 4u);
    EXPECT_NO_THROW(preset("large").validate());
    EXPECT_EQ(preset("large").iterations, 20000u);
    EXPECT_EQ(preset("large").network.num_stages, 5u);
    EXPECT_THROW(preset("laptop"), ArgumentError);
}

TEST(Config, JsonRoundTrip) {
    TrainConfig c = preset("desk");
    c.name = "custom";
    c.seeds = {7, 8};
    c.iterations = 321;
    c.reliability.tau = 0.01;
    c.reliability.tau_min = 0.2;
    c.reliability.tau_max = 0.75;
    c.morphology.connectivity = 26;
    c.ablation.disable_feat_space = true;
    c.pseudo_mode = PseudoMode::self_branch;
    c.data.kind = BlobKind::ellipsoid;
    c.data.noise_sigma = 0.123456789012345;
    const std::string text = config_to_json(c);
    const TrainConfig back = config_from_json(text);
    EXPECT_EQ(config_to_json(back), text);
    EXPECT_EQ(back.name, "custom");
    EXPECT_EQ(back.seeds, (std::vector<std::uint64_t>{7, 8}));
    EXPECT_EQ(back.data.noise_sigma, 0.123456789012345);
    EXPECT_EQ(back.pseudo_mode, PseudoMode::self_branch);
    EXPECT_TRUE(back.ablation == c.ablation);
}

TEST(Config, PartialOverrideKeepsBase) {
    TrainConfig base;
    base.iterations = 77;
    const TrainConfig c = config_from_json(R"({"reliability": {"tau": 0.1}, "ablation": {"disable_U": true}})", base);
    EXPECT_EQ(c.iterations, 77u);
    EXPECT_EQ(c.reliability.tau, 0.1);
    EXPECT_EQ(c.reliability.tau_max, base.reliability.tau_max);
    EXPECT_TRUE(c.ablation.disable_U);
    EXPECT_FALSE(c.ablation.disable_C);
}

TEST(Config, UnknownKeysAreErrors) {
    EXPECT_THROW(config_from_json(R"({"itertions": 5})"), ArgumentError);
    EXPECT_THROW(config_from_json(R"({"train": {"iters": 5}})"), ArgumentError);
    EXPECT_THROW(config_from_json(R"({"reliability": {"tau_mx": 0.9}})"), ArgumentError);
    EXPECT_THROW(config_from_json(R"({"train": {"iterations": "many"}})"), ArgumentError);
    EXPECT_THROW(config_from_json("{not json"), ArgumentError);
    EXPECT_THROW(config_from_json(R"({"train": {"pseudo_mode": "sideways"}})"), ArgumentError);
}

TEST(Config, LoadFromFile) {
    const auto path = std::filesystem::temp_directory_path() / "tcseg_config_test.json";
    std::ofstream(path) << R"({"name": "fromfile", "train": {"eval_every": 10}})";
    const TrainConfig c = load_config(path);
    EXPECT_EQ(c.name, "fromfile");
    EXPECT_EQ(c.eval_every, 10u);
    EXPECT_THROW(load_config(path.string() + ".missing"), ArgumentError);
}

TEST(Config, ValidationRejectsBadValues) {
    auto bad = [](auto mutate) {
        TrainConfig c;
        mutate(c);
        return c;
    };
    EXPECT_THROW(bad([](TrainConfig& c) { c.labeled_batch = 3; }).validate(), ArgumentError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.iterations = 0; }).validate(), ArgumentError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.patch = {14, 16, 16}; }).validate(), ArgumentError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.window = {64, 16, 16}; }).validate(), ArgumentError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.ema_alpha = 1.2; }).validate(), ArgumentError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.reliability.tau_min = 0.9; }).validate(), ArgumentError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.seeds.clear(); }).validate(), ArgumentError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.morphology.connectivity = 18; }).validate(), ArgumentError);
    EXPECT_THROW(bad([](TrainConfig& c) { c.network.num_classes = 3; }).validate(), ArgumentError);
}

TEST(Config, AblationSwitchesCompose) {
    TrainConfig c;
    c.ablation = {true, true, true, true, true, true};
    EXPECT_NO_THROW(c.validate());
    const ReliabilityConfig r = c.effective_reliability();
    EXPECT_FALSE(r.use_uncertainty);
    EXPECT_FALSE(r.use_confidence);
    c.ablation = {};
    EXPECT_TRUE(c.effective_reliability().use_uncertainty);
    EXPECT_TRUE(c.effective_reliability().use_confidence);
}

TEST(Config, UnsupervisedWeightHook) {
    TrainConfig c;
    EXPECT_EQ(c.unsup_weight(0), 1.0);
    EXPECT_EQ(c.unsup_weight(500), 1.0);
    c.unsup_rampup = 100;
    EXPECT_EQ(c.unsup_weight(0), 0.0);
    EXPECT_EQ(c.unsup_weight(25), 0.25);
    EXPECT_EQ(c.unsup_weight(100), 1.0);
    EXPECT_EQ(c.unsup_weight(1000), 1.0);
}
