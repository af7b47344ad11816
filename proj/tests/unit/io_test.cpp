// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/config.hpp"
#include "gsstream/errors.hpp"
#include "gsstream/image_io.hpp"
#include "gsstream/predictor.hpp"
#include "gsstream/scene_io.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstring>

namespace gss {
namespace {

TEST(Ppm, EncodesQuantisedP6) {
    ImageBuffer img(2, 1);
    img.rgb = {0.0, 0.5, 1.0, 1.7, -0.2, 0.2};
    const std::string bytes = encode_ppm(img);
    const std::string header = "P6\n2 1\n255\n";
    ASSERT_EQ(bytes.substr(0, header.size()), header);
    const std::string payload = bytes.substr(header.size());
    ASSERT_EQ(payload.size(), 6u);
    const unsigned char expected[6] = {0, 128, 255, 255, 0, 51};
    EXPECT_EQ(std::memcmp(payload.data(), expected, 6), 0);
}

TEST(Ppm, RoundTripWithinQuantisation) {
    const auto img = test::image_from_values(5, 3, test::lcg_values(1, 45));
    const ImageBuffer back = decode_ppm(encode_ppm(img));
    ASSERT_EQ(back.width, 5);
    ASSERT_EQ(back.height, 3);
    for (std::size_t i = 0; i < img.rgb.size(); ++i) {
        EXPECT_NEAR(back.rgb[i], img.rgb[i], 0.5 / 255 + 1e-12);
    }
    EXPECT_EQ(encode_ppm(back), encode_ppm(img));
}

TEST(Ppm, MalformedInputThrowsParseError) {
    EXPECT_THROW(decode_ppm("P3\n1 1\n255\n"), ParseError);
    EXPECT_THROW(decode_ppm("P6\n2 2\n255\nabc"), ParseError);
    EXPECT_THROW(decode_ppm(""), ParseError);
}

TEST(Gsdp, HeaderLayoutAndExactRoundTrip) {
    Plane p(3, 2);
    p.values = {0.0, 1.5, -2.25, 3.0, 1e-3, 7.0};
    const std::string bytes = encode_gsdp({p});
    ASSERT_EQ(bytes.size(), 16u + 6 * 4);
    EXPECT_EQ(bytes.substr(0, 4), "GSDP");
    std::uint32_t w = 0, h = 0, c = 0;
    std::memcpy(&w, bytes.data() + 4, 4);
    std::memcpy(&h, bytes.data() + 8, 4);
    std::memcpy(&c, bytes.data() + 12, 4);
    EXPECT_EQ(w, 3u);
    EXPECT_EQ(h, 2u);
    EXPECT_EQ(c, 1u);
    float second = 0;
    std::memcpy(&second, bytes.data() + 16 + 4, 4);
    EXPECT_EQ(second, 1.5f);
    const auto planes = decode_gsdp(bytes);
    ASSERT_EQ(planes.size(), 1u);
    for (std::size_t i = 0; i < p.size(); ++i) {
        EXPECT_EQ(planes[0].values[i], static_cast<double>(static_cast<float>(p.values[i])));
    }
    EXPECT_THROW(decode_gsdp("GSDX" + bytes.substr(4)), ParseError);
    EXPECT_THROW(decode_gsdp(bytes.substr(0, bytes.size() - 1)), ParseError);
}

TEST(Frames, SaveListLoad) {
    const auto dir = test::scratch_dir("frames");
    for (int k : {2, 0, 1}) {
        ImageBuffer img(4, 3);
        img.rgb.assign(img.rgb.size(), 0.25 * k);
        img.depth.assign(img.depth.size(), 1.0 + k);
        save_frame(dir, k, img);
    }
    const auto files = list_frames(dir);
    ASSERT_EQ(files.size(), 3u);
    EXPECT_EQ(files[1].rgb.filename(), "frame_0001.ppm");
    const ImageBuffer f2 = load_frame(files[2]);
    EXPECT_EQ(f2.depth[0], 3.0);
    EXPECT_EQ(f2.alpha[0], 1.0);
    std::filesystem::remove(dir / "frame_0001.depth.gsdp");
    EXPECT_THROW(list_frames(dir), ParseError);
}

DynamicGaussian sample_gaussian() {
    DynamicGaussian g;
    g.base.mu = Vec3(0.1234567890123, -1.0 / 3.0, 2.0);
    g.base.scale = Vec3(0.01, 0.02, 1.0 / 7.0);
    g.base.rotation = normalize_quaternion(1, 2, 3, 4);
    g.base.opacity = 0.3;
    g.base.color = Vec3(0.1, 0.2, 0.3);
    g.deform = {Vec3(0.05, -0.1, 0.0), 4.0, 0.5, 3.0};
    g.id = {3, 17};
    return g;
}

TEST(SceneJson, FieldLayout) {
    const Json j = gaussian_to_json(sample_gaussian());
    EXPECT_EQ(j.at("id"), Json::array({3, 17}));
    EXPECT_EQ(j.at("mu").size(), 3u);
    EXPECT_EQ(j.at("quat").size(), 4u);
    EXPECT_EQ(j.at("gamma"), Json::array({4.0, 0.5}));
    EXPECT_EQ(j.at("t0"), 3.0);
    EXPECT_TRUE(j.contains("alpha"));
    EXPECT_TRUE(j.contains("velocity"));
    EXPECT_TRUE(j.contains("color"));
    EXPECT_TRUE(j.contains("scale"));
}

TEST(SceneJson, RoundTripIsBitExact) {
    Rng rng(5);
    Scene scene;
    scene.frame_time = 3.0;
    for (int i = 0; i < 20; ++i) {
        DynamicGaussian g;
        g.base = test::random_gaussian(rng);
        g.deform = {Vec3(rng.uniform() - 0.5, rng.uniform() - 0.5, 0), 0.1 + 10 * rng.uniform(),
                    rng.uniform(), 3.0};
        g.id = {3, static_cast<std::uint32_t>(i)};
        scene.gaussians.push_back(g);
    }
    const std::string text = dump_json(scene_to_json(scene));
    EXPECT_EQ(scene_from_json(parse_json(text)), scene);
    const auto dir = test::scratch_dir("scene");
    save_scene(dir / "s.json", scene);
    EXPECT_EQ(load_scene(dir / "s.json"), scene);
}

TEST(SceneJson, MalformedThrowsParseError) {
    EXPECT_THROW(parse_json("{not json"), ParseError);
    EXPECT_THROW(scene_from_json(parse_json(R"({"gaussians": [{"id": [0, 0]}]})")), ParseError);
    Json j = gaussian_to_json(sample_gaussian());
    j["mu"] = Json::array({1, 2});
    EXPECT_THROW(gaussian_from_json(j), ParseError);
}

TEST(SceneJson, RotationNormalisedOnLoad) {
    Json j = gaussian_to_json(sample_gaussian());
    j["quat"] = Json::array({2, 0, 0, 0});
    EXPECT_EQ(gaussian_from_json(j).base.rotation, (Quaternion{1, 0, 0, 0}));
}

TEST(IdKey, RoundTrip) {
    EXPECT_EQ(id_key({3, 17}), "3:17");
    EXPECT_EQ(parse_id_key("3:17"), (GaussianId{3, 17}));
    EXPECT_THROW(parse_id_key("3-17"), ParseError);
}

TEST(PredictorState, JsonRoundTrip) {
    PredictorState s;
    s.backend = "fit";
    s.frame_index = 4;
    s.payload = Json{{"x", Json::array({0.1, 1.0 / 3.0})}};
    EXPECT_EQ(PredictorState::from_json(parse_json(dump_json(s.to_json()))), s);
    EXPECT_THROW(PredictorState::from_json(Json::object()), ParseError);
}

TEST(Config, ParsesCommentsAndBlankLines) {
    const auto map = parse_config("# header\n\nseed = 7  # trailing\n fit.iterations=10\n");
    EXPECT_EQ(map.size(), 2u);
    EXPECT_EQ(map.at("seed"), "7");
    EXPECT_EQ(map.at("fit.iterations"), "10");
}

TEST(Config, RejectsMalformedInput) {
    EXPECT_THROW(parse_config("seed 7\n"), ParseError);
    EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), ParseError);
    EXPECT_THROW(parse_config(" = 2\n"), ParseError);
    EXPECT_THROW(RunConfig::from_map({{"no.such.key", "1"}}), ParseError);
    EXPECT_THROW(RunConfig::from_map({{"seed", "abc"}}), ParseError);
    EXPECT_THROW(RunConfig::from_map({{"fit.deterministic_init", "maybe"}}), ParseError);
    EXPECT_THROW(RunConfig::from_map({{"threads", "-1"}}), ParseError);
}

TEST(Config, AppliesEveryTypedField) {
    const RunConfig cfg = RunConfig::from_map(parse_config(R"(
camera.fx = 128
camera.fy = 72
camera.width = 128
camera.height = 72
seed = 9
predictor = fit
threads = 2
fit.n_gaussians = 32
fit.candidates = 3
fit.deterministic_init = true
loss.lambda_depth = 0.1
stream.prune_epsilon = 0.01
stream.render_fractions = 0, 0.25, 1
raster.blur = 0.5
)"));
    EXPECT_EQ(cfg.camera.fx, 128.0);
    EXPECT_TRUE(cfg.camera_explicit);
    EXPECT_EQ(cfg.seed, 9u);
    EXPECT_EQ(cfg.fit.seed, 9u);
    EXPECT_EQ(cfg.predictor, "fit");
    EXPECT_EQ(cfg.fit.n_gaussians, 32);
    EXPECT_EQ(cfg.fit.candidates, 3);
    EXPECT_TRUE(cfg.fit.deterministic_init);
    EXPECT_EQ(cfg.fit.weights.lambda_depth, 0.1);
    EXPECT_EQ(cfg.stream.prune_epsilon, 0.01);
    EXPECT_EQ(cfg.stream.render_fractions, (std::vector<double>{0, 0.25, 1}));
    EXPECT_EQ(cfg.stream.raster.blur, 0.5);
    EXPECT_EQ(cfg.fit.raster.blur, 0.5);
    EXPECT_EQ(cfg.stream.raster.threads, 2);
}

TEST(Config, CameraDefaultsAndFit) {
    RunConfig cfg;
    EXPECT_EQ(cfg.camera.fx, 256.0);
    EXPECT_EQ(cfg.camera.fy, 144.0);
    const OrthoCamera unit = cfg.camera_for(64, 48);
    EXPECT_EQ(unit.fx, 64.0);
    EXPECT_EQ(unit.fy, 48.0);
    cfg.apply({{"camera.width", "32"}, {"camera.height", "32"}});
    EXPECT_EQ(cfg.camera_for(32, 32).width, 32);
    EXPECT_THROW(cfg.camera_for(64, 48), ShapeError);
}

} // namespace
} // namespace gss
