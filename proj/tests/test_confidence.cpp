#include <gtest/gtest.h>

#include "distill/confidence/confidence.hpp"
#include "distill/scenegen/scene.hpp"
#include "distill/teacher/matcher.hpp"
#include "test_support.hpp"

using namespace distill;
using namespace distill::confidence;
using testing_support::random_values;

namespace {

DisparityMap one_row(std::initializer_list<double> values) {
    DisparityMap d(static_cast<int>(values.size()), 1);
    int x = 0;
    for (double v : values) d.set(x++, 0, v);
    return d;
}

// Teacher output and labels for default scenes.
std::vector<ConfidenceSample> teacher_samples(std::uint64_t first_seed, int count, std::vector<DisparityMap>* gt = nullptr,
                                              bool hard = false) {
    std::vector<ConfidenceSample> out;
    for (int k = 0; k < count; ++k) {
        scene::SceneSpec spec;
        if (hard) {
            spec.noise_sigma = 0.08;
            spec.flat_prob = 0.4;
        }
        spec.seed = first_seed + static_cast<std::uint64_t>(k);
        const scene::StereoSample s = scene::generate_scene(spec);
        const DisparityMap d = teacher::compute_disparity(s.left, s.right, teacher::MatcherConfig{});
        out.push_back({d, gt_confidence(d, s.gt_disparity)});
        if (gt) gt->push_back(s.gt_disparity);
    }
    return out;
}

ConfidenceNetConfig quick_config(int epochs, std::size_t patches = 512) {
    ConfidenceNetConfig cfg;
    cfg.epochs = epochs;
    cfg.patches_per_epoch = patches;
    cfg.probe_patches = 512;
    cfg.seed = 21;
    return cfg;
}

}  // namespace

TEST(GtConfidence, StrictThreeThresholdAndExclusions) {
    const DisparityMap gt = one_row({10.0, 10.0, 10.0, 10.0, 10.0, 10.0});
    DisparityMap pred = one_row({12.5, 12.999, 13.0, 7.0, 10.0, 0.0});
    pred.invalidate(5, 0);
    const ConfidenceLabels l = gt_confidence(pred, gt);
    EXPECT_EQ(l.label, (std::vector<int>{1, 1, 0, 0, 1, nn::kIgnoreLabel}));
    DisparityMap gt_hole = gt;
    gt_hole.invalidate(0, 0);
    EXPECT_EQ(gt_confidence(pred, gt_hole).label[0], nn::kIgnoreLabel);
    EXPECT_THROW(gt_confidence(pred, DisparityMap(5, 1)), ShapeError);
}

TEST(ConfidenceNet, LayoutCollapsesPatchToOneOutput) {
    ConfidenceNetConfig cfg;
    nn::Network net = build_confidence_net(cfg);
    const nn::Tensor out = net.forward(nn::Tensor({3, 1, 9, 9}, random_values(243, 2, 0.0, 1.0)), nn::Mode::Eval);
    EXPECT_EQ(out.shape(), (nn::Shape{3, 1, 1, 1}));
    cfg.patch_size = 8;
    EXPECT_THROW(build_confidence_net(cfg), InvalidArgument);
}

TEST(ConfidenceNet, LearnsSeparableCentreRule) {
    // label 1 iff the centre disparity is below half the range
    std::vector<ConfidenceSample> set;
    for (std::uint64_t k = 0; k < 4; ++k) {
        DisparityMap d(24, 24);
        const auto vals = random_values(d.pixels(), 100 + k, 0.0, 16.0);
        ConfidenceLabels l{24, 24, std::vector<int>(d.pixels())};
        for (std::size_t i = 0; i < d.pixels(); ++i) {
            d.value[i] = vals[i];
            d.valid[i] = 1;
            l.label[i] = vals[i] / 16.0 < 0.5 ? 1 : 0;
        }
        set.push_back({d, l});
    }
    ConfidenceNetConfig cfg;
    cfg.seed = 3;
    auto result = train_confidence_net(set, cfg);
    EXPECT_GE(confidence_accuracy(result.net, set, cfg), 0.95);
}

TEST(ConfidenceNet, FirstEpochLowersLossOnSyntheticScenes) {
    const auto set = teacher_samples(200, 4);
    const auto result = train_confidence_net(set, quick_config(1));
    ASSERT_EQ(result.epoch_loss.size(), 1u);
    EXPECT_LT(result.epoch_loss[0], result.initial_loss);
}

TEST(ConfidenceNet, SameSeedSameDataSameParameters) {
    const auto set = teacher_samples(210, 2);
    auto a = train_confidence_net(set, quick_config(2));
    auto b = train_confidence_net(set, quick_config(2));
    const auto sa = a.net.state(), sb = b.net.state();
    ASSERT_EQ(sa.size(), sb.size());
    for (std::size_t k = 0; k < sa.size(); ++k) {
        const auto da = sa[k].tensor.data(), db = sb[k].tensor.data();
        EXPECT_TRUE(std::equal(da.begin(), da.end(), db.begin(), db.end())) << sa[k].name;
    }
    EXPECT_EQ(a.epoch_loss, b.epoch_loss);
}

TEST(ConfidenceNet, NothingLabelledIsAnError) {
    DisparityMap d(12, 12);
    ConfidenceLabels l{12, 12, std::vector<int>(d.pixels(), nn::kIgnoreLabel)};
    EXPECT_THROW(train_confidence_net({{d, l}}, quick_config(1)), InvalidArgument);
    EXPECT_THROW(train_confidence_net({}, quick_config(1)), InvalidArgument);
}

TEST(ConfidenceMapTest, AllInvalidInputGivesZeros) {
    ConfidenceNetConfig cfg;
    nn::Network net = build_confidence_net(cfg);
    const ConfidenceMap c = predict_confidence_map(net, DisparityMap(16, 12), cfg);
    for (double v : c.data) EXPECT_EQ(v, 0.0);
}

TEST(ConfidenceMapTest, BorderBandIsZeroAndValuesInUnitRange) {
    ConfidenceNetConfig cfg;
    nn::Network net = build_confidence_net(cfg);
    DisparityMap d(20, 15);
    const auto vals = random_values(d.pixels(), 9, 0.0, 16.0);
    for (std::size_t i = 0; i < d.pixels(); ++i) {
        d.value[i] = vals[i];
        d.valid[i] = 1;
    }
    d.invalidate(10, 7);
    const ConfidenceMap c = predict_confidence_map(net, d, cfg);
    const int r = cfg.radius();
    for (int y = 0; y < 15; ++y)
        for (int x = 0; x < 20; ++x) {
            const bool border = x < r || y < r || x >= 20 - r || y >= 15 - r;
            if (border) EXPECT_EQ(c.at(x, y), 0.0);
            EXPECT_GE(c.at(x, y), 0.0);
            EXPECT_LE(c.at(x, y), 1.0);
            if (!border && (x != 10 || y != 7)) EXPECT_GT(c.at(x, y), 0.0);
        }
    EXPECT_EQ(c.at(10, 7), 0.0);
    EXPECT_THROW(predict_confidence_map(net, DisparityMap(8, 20), cfg), InvalidArgument);
}

TEST(ConfidenceMapTest, DenseInferenceMatchesPatchwiseForward) {
    ConfidenceNetConfig cfg;
    nn::Network net = build_confidence_net(cfg);
    DisparityMap d(13, 11);
    const auto vals = random_values(d.pixels(), 31, 0.0, 16.0);
    for (std::size_t i = 0; i < d.pixels(); ++i) d.set(static_cast<int>(i % 13), static_cast<int>(i / 13), vals[i]);
    const ConfidenceMap c = predict_confidence_map(net, d, cfg);
    for (int y = 4; y < 7; ++y)
        for (int x = 4; x < 9; ++x) {
            std::vector<double> patch;
            for (int dy = -4; dy <= 4; ++dy)
                for (int dx = -4; dx <= 4; ++dx) patch.push_back(d.at(x + dx, y + dy) / 16.0);
            const double logit = net.forward(nn::Tensor({1, 1, 9, 9}, patch), nn::Mode::Eval)[0];
            EXPECT_NEAR(c.at(x, y), 1.0 / (1.0 + std::exp(-logit)), 1e-12);
        }
}

TEST(ConfidenceMapTest, LearnedConfidenceSeparatesGoodFromBadPixels) {
    const auto train = teacher_samples(300, 8);
    const ConfidenceNetConfig cfg = quick_config(30, 1024);
    auto result = train_confidence_net(train, cfg);
    const auto held_out = teacher_samples(400, 6);
    double good_sum = 0, bad_sum = 0;
    std::size_t good_n = 0, bad_n = 0;
    for (std::size_t k = 0; k < held_out.size(); ++k) {
        const ConfidenceMap c = predict_confidence_map(result.net, held_out[k].disparity, cfg);
        const int r = cfg.radius(), w = c.width;
        for (int y = r; y < c.height - r; ++y)
            for (int x = r; x < w - r; ++x) {
                const int label = held_out[k].labels.label[static_cast<std::size_t>(y) * w + x];
                if (label == 1) { good_sum += c.at(x, y); ++good_n; }
                if (label == 0) { bad_sum += c.at(x, y); ++bad_n; }
            }
    }
    ASSERT_GT(good_n, 0u);
    ASSERT_GT(bad_n, 0u);
    EXPECT_GT(good_sum / good_n, bad_sum / bad_n);
}

// Noisy scenes with textureless objects, where the teacher actually fails.
TEST(ConfidenceMapTest, SparsificationCurveMostlyFalls) {
    const auto train = teacher_samples(500, 8, nullptr, true);
    const ConfidenceNetConfig cfg = quick_config(30, 1024);
    auto result = train_confidence_net(train, cfg);
    std::vector<DisparityMap> gt;
    const auto held_out = teacher_samples(600, 6, &gt, true);
    std::vector<double> errors, conf;
    for (std::size_t k = 0; k < held_out.size(); ++k) {
        const DisparityMap& d = held_out[k].disparity;
        const ConfidenceMap c = predict_confidence_map(result.net, d, cfg);
        const int r = cfg.radius();
        for (int y = r; y < d.height - r; ++y)
            for (int x = r; x < d.width - r; ++x) {
                if (!d.is_valid(x, y)) continue;
                errors.push_back(std::abs(d.at(x, y) - gt[k].at(x, y)));
                conf.push_back(c.at(x, y));
            }
    }
    const auto curve = sparsification_curve(errors, conf, 20);
    ASSERT_EQ(curve.size(), 20u);
    int rises = 0;
    for (std::size_t k = 1; k < curve.size(); ++k) rises += curve[k] > curve[k - 1] + 1e-12;
    EXPECT_LE(rises, 3);
    EXPECT_LT(curve.back(), curve.front());
}

TEST(Sparsification, HandExample) {
    const std::vector<double> err{4.0, 1.0, 3.0, 0.0};
    const std::vector<double> c{0.1, 0.8, 0.2, 0.9};
    const auto curve = sparsification_curve(err, c, 4);
    EXPECT_EQ(curve, (std::vector<double>{2.0, 4.0 / 3.0, 0.5, 0.0}));
}

TEST(LrcBaseline, ConsistentInconsistentAndInvalid) {
    DisparityMap left(6, 1), right(6, 1);
    for (int x = 0; x < 6; ++x) right.set(x, 0, 2.0);
    left.set(3, 0, 2.0);  // lands on xr = 1, right says 2
    left.set(4, 0, 4.0);  // lands on xr = 0, right says 2
    left.set(1, 0, 3.0);  // lands outside
    const ConfidenceMap c = lrc_confidence_baseline(left, right);
    EXPECT_DOUBLE_EQ(c.at(3, 0), 1.0);
    EXPECT_NEAR(c.at(4, 0), std::exp(-2.0), 1e-15);
    EXPECT_NEAR(c.at(4, 0), 0.135, 5e-4);
    EXPECT_EQ(c.at(1, 0), 0.0);
    EXPECT_EQ(c.at(0, 0), 0.0);
    right.invalidate(1, 0);
    EXPECT_EQ(lrc_confidence_baseline(left, right).at(3, 0), 0.0);
}
