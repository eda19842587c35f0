#include <doctest.h>

#include "evoact/config.hpp"

using namespace evoact;
using nlohmann::json;

TEST_CASE("defaults survive a json round trip") {
    RunConfig def;
    def.run_id = "r";
    RunConfig back = config_from_json(config_to_json(def));
    CHECK(back.backbone.d_z == def.backbone.d_z);
    CHECK(back.dit.depth == def.dit.depth);
    CHECK(back.flow.beta_alpha == def.flow.beta_alpha);
    CHECK(back.sampler_steps == def.sampler_steps);
    CHECK(back.train.stage2_steps == def.train.stage2_steps);
    CHECK(back.seed == def.seed);
    CHECK(to_string(back.dit.variant) == to_string(def.dit.variant));
}

TEST_CASE("unknown keys are rejected at every level") {
    CHECK_THROWS_AS(config_from_json(json{{"nonsense", 1}}), config_error);
    CHECK_THROWS_AS(config_from_json(json{{"backbone", {{"bogus", 1}}}}), config_error);
    CHECK_THROWS_AS(config_from_json(json{{"train", {{"lr", 0.1}}}}), config_error);
}

TEST_CASE("partial configs overlay the defaults") {
    RunConfig c = config_from_json(json{{"dit", {{"depth", 3}}}, {"integration", {{"variant", "C"}}}});
    CHECK(c.dit.depth == 3);
    CHECK(c.dit.variant == Variant::C);
    CHECK(c.backbone.d_z == RunConfig{}.backbone.d_z);
}

TEST_CASE("flow clamp array parses and validates") {
    RunConfig c = config_from_json(json{{"flow", {{"clamp", {0.05, 0.95}}}}});
    CHECK(c.flow.clamp_lo == 0.05);
    CHECK(c.flow.clamp_hi == 0.95);
    CHECK_THROWS_AS(config_from_json(json{{"flow", {{"clamp", {0.9, 0.1}}}}}), config_error);
    CHECK_THROWS_AS(config_from_json(json{{"flow", {{"clamp", {0.1}}}}}), config_error);
}

TEST_CASE("validation catches inconsistent geometry") {
    json bad{{"dit", {{"width", 64}}}};  // != backbone.d_z
    CHECK_THROWS_AS(config_from_json(bad), config_error);
    json bad2{{"env", {{"image_size", 16}}}};  // != backbone image size
    CHECK_THROWS_AS(config_from_json(bad2), config_error);
    json bad3{{"sampler", {{"steps", 0}}}};
    CHECK_THROWS_AS(config_from_json(bad3), config_error);
    json bad4{{"chunk", {{"h", 0}}}};
    CHECK_THROWS_AS(config_from_json(bad4), config_error);
}

TEST_CASE("stage-2 backbone lr may be zero, others must be positive") {
    RunConfig c = config_from_json(json{{"train", {{"lr2_backbone", 0.0}}}});
    CHECK(c.train.lr2_backbone == 0.0);
    CHECK_THROWS_AS(config_from_json(json{{"train", {{"lr_stage1", 0.0}}}}), config_error);
    CHECK_THROWS_AS(config_from_json(json{{"train", {{"lr2_expert", -1.0}}}}), config_error);
}
