#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "patchstyle/error.hpp"
#include "patchstyle/image.hpp"

namespace patchstyle {
namespace {

TEST(ReflectIndex, MirrorsWithoutRepeatingTheEdge) {
    EXPECT_EQ(reflect_index(-1, 5), 1);
    EXPECT_EQ(reflect_index(-2, 5), 2);
    EXPECT_EQ(reflect_index(5, 5), 3);
    EXPECT_EQ(reflect_index(6, 5), 2);
    EXPECT_EQ(reflect_index(8, 5), 0);
    EXPECT_EQ(reflect_index(0, 1), 0);
    EXPECT_EQ(reflect_index(-7, 1), 0);
    for (int i = -40; i < 40; ++i) {
        int r = reflect_index(i, 7);
        EXPECT_GE(r, 0);
        EXPECT_LT(r, 7);
    }
}

TEST(PadToMultiple, ReflectsRightAndBottomOnly) {
    Image img(5, 3, 1);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x) img.at(x, y, 0) = static_cast<float>(10 * y + x);
    Image p = pad_to_multiple(img, 4);
    ASSERT_EQ(p.width, 8);
    ASSERT_EQ(p.height, 4);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 5; ++x) EXPECT_EQ(p.at(x, y, 0), img.at(x, y, 0));
    EXPECT_EQ(p.at(5, 0, 0), img.at(3, 0, 0));
    EXPECT_EQ(p.at(7, 1, 0), img.at(1, 1, 0));
    EXPECT_EQ(p.at(0, 3, 0), img.at(0, 1, 0));
}

TEST(PadToMultiple, DivisibleImageIsUnchanged) {
    Image img = testing::texture(8, 12, 1);
    EXPECT_EQ(pad_to_multiple(img, 4), img);
}

TEST(Crop, RejectsOutOfBoundsWindows) {
    Image img(4, 4, 3);
    EXPECT_THROW(crop(img, 2, 2, 3, 1), Error);
    EXPECT_EQ(crop(img, 1, 1, 3, 3).width, 3);
}

TEST(Png, RoundTripsThroughEightBits) {
    Image img = testing::texture(17, 9, 5);
    auto bytes = encode_png(img);
    Image back = decode_png_rgb(bytes);
    EXPECT_EQ(back, quantize_8bit(img));
    EXPECT_LE(testing::max_abs_diff(back, img), 0.5 / 255.0 + 1e-6);
}

TEST(Png, MaskThresholdsAtHalf) {
    Mask m(6, 2, false);
    m.set(1, 0, true);
    m.set(5, 1, true);
    testing::TempDir dir;
    write_mask_png(dir / "m.png", m);
    Mask back = read_mask(dir / "m.png");
    EXPECT_EQ(back.bits, m.bits);
    EXPECT_EQ(back.count(), 2u);
}

TEST(Png, GarbageBytesRaiseIoError) {
    std::vector<uint8_t> junk{1, 2, 3, 4};
    try {
        decode_png_rgb(junk);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::io);
    }
}

TEST(ConcatChannels, StacksAndChecksExtent) {
    Image a(3, 2, 3, 0.25f);
    Image b(3, 2, 3, 0.75f);
    Image c = concat_channels(a, b);
    EXPECT_EQ(c.channels, 6);
    EXPECT_FLOAT_EQ(c.at(2, 1, 2), 0.25f);
    EXPECT_FLOAT_EQ(c.at(2, 1, 3), 0.75f);
    EXPECT_THROW(concat_channels(a, Image(2, 2, 3)), Error);
}

}  // namespace
}  // namespace patchstyle
