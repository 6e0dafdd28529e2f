#include <gtest/gtest.h>

#include <bit>
#include <cstring>

#include "distill/imageio/pfm.hpp"
#include "distill/imageio/pnm.hpp"
#include "distill/imageio/resize.hpp"
#include "test_support.hpp"

using namespace distill;
using testing_support::random_values;
using testing_support::TempDir;

TEST(Ppm, SingleRedPixel) {
    const Image img = to_image(decode_pnm(std::string("P6\n1 1\n255\n") + '\xff' + '\0' + '\0'));
    EXPECT_EQ(img.channels, 3);
    EXPECT_EQ(img.data, (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(Ppm, GrayRampQuantization) {
    const std::string bytes = std::string("P5\n2 2\n255\n") + '\x00' + '\x55' + '\xaa' + '\xff';
    const Image img = to_image(decode_pnm(bytes));
    const double expected[4] = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(img.data[i], expected[i], 1e-9);
}

TEST(Ppm, RoundTripIsByteIdentical) {
    TempDir tmp("ppm");
    for (int channels : {1, 3}) {
        PnmData raster{7, 5, channels, {}};
        for (double v : random_values(7 * 5 * channels, 3 + channels, 0.0, 256.0)) {
            raster.bytes.push_back(static_cast<std::uint8_t>(std::min(255.0, v)));
        }
        const auto path = tmp.path() / (channels == 3 ? "a.ppm" : "a.pgm");
        write_ppm(path, to_image(raster));
        EXPECT_EQ(read_pnm_raw(path).bytes, raster.bytes);
        const std::string first = detail::read_file_bytes(path);
        write_ppm(path, read_ppm(path));
        EXPECT_EQ(detail::read_file_bytes(path), first);
    }
}

TEST(Ppm, HeaderCommentsAreSkipped) {
    const PnmData d = decode_pnm(std::string("P5\n# made by hand\n1 1\n255\n") + '\x10');
    EXPECT_EQ(d.bytes, std::vector<std::uint8_t>{0x10});
}

TEST(Ppm, MalformedInputIsRejected) {
    EXPECT_THROW(decode_pnm("P3\n1 1\n255\n0 0 0"), FormatError);
    EXPECT_THROW(decode_pnm(std::string("P5\n1 1\n65535\n") + "ab"), FormatError);
    EXPECT_THROW(decode_pnm("P6\n2 2\n255\nabc"), FormatError);
    EXPECT_THROW(decode_pnm("P6\n2"), FormatError);
    TempDir tmp("ppm_missing");
    EXPECT_THROW(read_ppm(tmp.path() / "none.ppm"), MissingInput);
}

TEST(Ppm, WritingClampsAndRounds) {
    Image img(3, 1, 1);
    img.data = {-0.5, 0.5, 1.7};
    EXPECT_EQ(to_raster(img).bytes, (std::vector<std::uint8_t>{0, 128, 255}));
}

TEST(Pfm, TwoPixelRoundTrip) {
    TempDir tmp("pfm2");
    FloatMap m(2, 1);
    m.data = {1.5, -1.0};
    write_pfm(tmp.path() / "a.pfm", m);
    EXPECT_EQ(read_pfm(tmp.path() / "a.pfm"), m);
}

TEST(Pfm, HeaderAndBottomUpLittleEndianLayout) {
    FloatMap m(1, 2);
    m.data = {1.0, 2.0};  // top row 1.0, bottom row 2.0
    const std::string bytes = encode_pfm(m);
    const std::string header = "Pf\n1 2\n-1.0\n";
    ASSERT_EQ(bytes.substr(0, header.size()), header);
    std::uint32_t first = 0;
    for (int b = 0; b < 4; ++b) first |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[header.size() + b])) << (8 * b);
    EXPECT_EQ(std::bit_cast<float>(first), 2.0f);  // bottom row stored first
}

TEST(Pfm, AllZeroMapIsAllInvalid) {
    TempDir tmp("pfm0");
    write_pfm(tmp.path() / "z.pfm", FloatMap(4, 3, 0.0));
    const FloatMap back = read_pfm(tmp.path() / "z.pfm");
    EXPECT_EQ(back, FloatMap(4, 3, 0.0));
    EXPECT_EQ(DisparityMap::from_float_map(back).valid_count(), 0u);
}

TEST(Pfm, RandomMapWithInvalidPixelsRoundTripsBitExact) {
    TempDir tmp("pfmr");
    FloatMap m(13, 9);
    const auto vals = random_values(m.pixels(), 17, 0.0, 40.0);
    const auto coin = random_values(m.pixels(), 18, 0.0, 1.0);
    for (std::size_t i = 0; i < m.pixels(); ++i) m.data[i] = coin[i] < 0.3 ? kInvalidValue : static_cast<float>(vals[i]);
    write_pfm(tmp.path() / "r.pfm", m);
    const std::string first = detail::read_file_bytes(tmp.path() / "r.pfm");
    const FloatMap back = read_pfm(tmp.path() / "r.pfm");
    EXPECT_EQ(back, m);
    write_pfm(tmp.path() / "r2.pfm", back);
    EXPECT_EQ(detail::read_file_bytes(tmp.path() / "r2.pfm"), first);
}

TEST(Pfm, UnsupportedVariantsAreRejected) {
    EXPECT_THROW(decode_pfm("PF\n1 1\n-1.0\n0000"), FormatError);
    EXPECT_THROW(decode_pfm("Pf\n1 1\n1.0\n0000"), FormatError);
    EXPECT_THROW(decode_pfm("Pf\n2 2\n-1.0\n0000"), FormatError);
    const float nan = std::nanf("");
    std::string bad = "Pf\n1 1\n-1.0\n";
    bad.append(reinterpret_cast<const char*>(&nan), 4);
    EXPECT_THROW(decode_pfm(bad), FormatError);
}

TEST(DisparityMapTest, ValidZeroSurvivesInMemoryButNotOnDisk) {
    DisparityMap d(2, 1);
    d.set(0, 0, 0.0);
    EXPECT_TRUE(d.is_valid(0, 0));
    EXPECT_FALSE(d.is_valid(1, 0));
    const DisparityMap back = DisparityMap::from_float_map(d.to_float_map());
    EXPECT_FALSE(back.is_valid(0, 0));
}

TEST(Resize, IdentitySizeIsUnchanged) {
    Image img(5, 4, 3);
    img.data = random_values(img.data.size(), 21, 0.0, 1.0);
    EXPECT_EQ(resize_bilinear(img, 5, 4), img);
    DisparityMap d(5, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x)
            if ((x + y) % 3) d.set(x, y, x + 0.25 * y);
    EXPECT_EQ(resize_bilinear(d, 5, 4), d);
}

TEST(Resize, HalvingWidthHalvesDisparity) {
    FloatMap m(8, 4, 10.0);
    const FloatMap half = resize_bilinear(m, 4, 4, ResizeMode::Disparity);
    for (double v : half.data) EXPECT_DOUBLE_EQ(v, 5.0);
}

TEST(Resize, ValidQuadrantAveragesIntoOnePixel) {
    DisparityMap d(4, 4);
    d.set(0, 0, 2.0);
    d.set(1, 0, 4.0);
    d.set(0, 1, 6.0);
    d.set(1, 1, 8.0);
    const DisparityMap half = resize_bilinear(d, 2, 2);
    EXPECT_EQ(half.valid_count(), 1u);
    ASSERT_TRUE(half.is_valid(0, 0));
    EXPECT_DOUBLE_EQ(half.at(0, 0), 5.0 * 0.5);
}

TEST(Resize, UpsamplingInterpolatesAndSkipsInvalid) {
    Image img(2, 1, 1);
    img.data = {0.0, 1.0};
    const Image up = resize_bilinear(img, 4, 1);
    EXPECT_EQ(up.data, (std::vector<double>{0.0, 0.25, 0.75, 1.0}));
    DisparityMap d(2, 1);
    d.set(0, 0, 3.0);
    const DisparityMap dup = resize_bilinear(d, 4, 1);
    for (int x = 0; x < 3; ++x) {
        ASSERT_TRUE(dup.is_valid(x, 0));
        EXPECT_DOUBLE_EQ(dup.at(x, 0), 6.0);
    }
    EXPECT_FALSE(dup.is_valid(3, 0));  // both taps on the invalid pixel
}

TEST(Resize, BadTargetIsRejected) {
    EXPECT_THROW(resize_bilinear(Image(2, 2, 1), 0, 2), InvalidArgument);
}
