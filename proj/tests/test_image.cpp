#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "uniview/errors.hpp"
#include "uniview/image.hpp"
#include "uniview/rng.hpp"

using namespace uniview;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST(Image, TensorRoundTrip) {
    Rng rng(1);
    Image img(5, 4);
    for (auto& v : img.pixels) v = rng.uniform();
    auto t = tensor_from_image(img);
    ASSERT_EQ(t->shape, (std::vector<std::int64_t>{3, 4, 5}));
    Image back = image_from_tensor(*t);
    EXPECT_EQ(back.pixels, img.pixels);
    EXPECT_EQ(back.width, 5);
    EXPECT_EQ(back.height, 4);
}

TEST(Image, PngRoundTripExactAfterQuantization) {
    Rng rng(2);
    Image img(32, 32);
    for (auto& v : img.pixels) v = rng.uniform();
    const std::string path = temp_path("uniview_roundtrip.png");
    write_png(path, img);
    Image back = read_png(path);
    ASSERT_EQ(back.width, img.width);
    ASSERT_EQ(back.height, img.height);
    Image q = quantized(img);
    for (std::size_t i = 0; i < q.pixels.size(); ++i)
        EXPECT_DOUBLE_EQ(back.pixels[i], q.pixels[i]);
    std::remove(path.c_str());
}

TEST(Image, PngClampsOutOfRangeValues) {
    Image img(2, 1);
    img.at(0, 0, 0) = -0.5;
    img.at(1, 0, 0) = 1.5;
    img.at(2, 0, 0) = 0.25;
    const std::string path = temp_path("uniview_clamp.png");
    write_png(path, img);
    Image back = read_png(path);
    EXPECT_DOUBLE_EQ(back.at(0, 0, 0), 0.0);
    EXPECT_DOUBLE_EQ(back.at(1, 0, 0), 1.0);
    EXPECT_NEAR(back.at(2, 0, 0), 0.25, 0.5 / 255.0);
    std::remove(path.c_str());
}

TEST(Image, NonSquareAndSinglePixel) {
    Image wide(7, 3, 0.5);
    const std::string path = temp_path("uniview_wide.png");
    write_png(path, wide);
    Image back = read_png(path);
    EXPECT_EQ(back.width, 7);
    EXPECT_EQ(back.height, 3);
    std::remove(path.c_str());

    Image one(1, 1);
    one.at(0, 0, 0) = 1.0;
    write_png(path, one);
    back = read_png(path);
    EXPECT_DOUBLE_EQ(back.at(0, 0, 0), 1.0);
    EXPECT_DOUBLE_EQ(back.at(1, 0, 0), 0.0);
    std::remove(path.c_str());
}

TEST(Image, ReadRejectsGarbage) {
    const std::string path = temp_path("uniview_garbage.png");
    {
        std::ofstream f(path, std::ios::binary);
        f << "definitely not a png";
    }
    EXPECT_THROW(read_png(path), IoError);
    std::remove(path.c_str());
    EXPECT_THROW(read_png(temp_path("uniview_missing_file.png")), IoError);
}

TEST(Image, GradientPatternSurvivesRoundTrip) {
    Image img(16, 9);
    for (int y = 0; y < 9; ++y)
        for (int x = 0; x < 16; ++x) {
            img.at(0, y, x) = x / 15.0;
            img.at(1, y, x) = y / 8.0;
            img.at(2, y, x) = (x + y) / 23.0;
        }
    const std::string path = temp_path("uniview_gradient.png");
    write_png(path, img);
    Image back = read_png(path);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 16; ++x)
                EXPECT_NEAR(back.at(c, y, x), img.at(c, y, x), 0.5 / 255.0 + 1e-12);
    std::remove(path.c_str());
}
