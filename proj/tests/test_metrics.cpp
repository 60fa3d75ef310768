#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "refinegan/metrics.hpp"

namespace rg = refinegan;

namespace {

rg::Tensor<std::uint8_t> mask_of(const std::vector<std::uint8_t>& vals, std::size_t s, std::size_t r,
                                 std::size_t c) {
    rg::Tensor<std::uint8_t> t(s, r, c, 1);
    for (std::size_t i = 0; i < vals.size(); ++i) t[i] = vals[i];
    return t;
}

rg::Tensor<std::uint8_t> random_mask(std::size_t s, std::size_t r, std::size_t c, rg::Rng& rng,
                                     double p) {
    rg::Tensor<std::uint8_t> t(s, r, c, 1);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rg::rand_uniform(rng) < p ? 1 : 0;
    return t;
}

// Counting oracle over binarized masks for a single class.
rg::ConfusionCounts confusion_oracle(const rg::Tensor<std::uint8_t>& pred,
                                     const rg::Tensor<std::uint8_t>& truth, int cls) {
    rg::ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] == cls, t = truth[i] == cls;
        if (p && t) ++c.tp;
        else if (p && !t) ++c.fp;
        else if (!p && t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

// O(n^2) brute force: directed distances from every boundary voxel of a to
// the nearest boundary voxel of b, physical spacing applied per axis.
struct BruteSurface {
    std::vector<double> a_to_b, b_to_a;
};

std::vector<std::array<double, 3>> boundary_points(const rg::Tensor<std::uint8_t>& m,
                                                   const std::array<double, 3>& sp) {
    const auto b = rg::metrics_detail::boundary_of(m);
    std::vector<std::array<double, 3>> pts;
    const std::size_t S = m.dim(0), R = m.dim(1), C = m.dim(2);
    for (std::size_t i = 0; i < S; ++i)
        for (std::size_t j = 0; j < R; ++j)
            for (std::size_t k = 0; k < C; ++k)
                if (b(i, j, k, 0))
                    pts.push_back({static_cast<double>(i) * sp[0], static_cast<double>(j) * sp[1],
                                   static_cast<double>(k) * sp[2]});
    return pts;
}

BruteSurface brute_surface(const rg::Tensor<std::uint8_t>& a, const rg::Tensor<std::uint8_t>& b,
                           const std::array<double, 3>& sp) {
    const auto pa = boundary_points(a, sp);
    const auto pb = boundary_points(b, sp);
    BruteSurface out;
    for (const auto& p : pa) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : pb) {
            const double d0 = p[0] - q[0], d1 = p[1] - q[1], d2 = p[2] - q[2];
            best = std::min(best, std::sqrt(d0 * d0 + d1 * d1 + d2 * d2));
        }
        out.a_to_b.push_back(best);
    }
    for (const auto& q : pb) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : pa) {
            const double d0 = p[0] - q[0], d1 = p[1] - q[1], d2 = p[2] - q[2];
            best = std::min(best, std::sqrt(d0 * d0 + d1 * d1 + d2 * d2));
        }
        out.b_to_a.push_back(best);
    }
    return out;
}

double brute_assd(const BruteSurface& s) {
    double sum = 0;
    for (double d : s.a_to_b) sum += d;
    for (double d : s.b_to_a) sum += d;
    return sum / static_cast<double>(s.a_to_b.size() + s.b_to_a.size());
}

double brute_max(const BruteSurface& s) {
    double m = 0;
    for (double d : s.a_to_b) m = std::max(m, d);
    for (double d : s.b_to_a) m = std::max(m, d);
    return m;
}

double brute_hd95(const BruteSurface& s) {
    std::vector<double> all = s.a_to_b;
    all.insert(all.end(), s.b_to_a.begin(), s.b_to_a.end());
    return rg::percentile(all, 95.0);
}

}  // namespace

TEST(Confusion, MatchesCountingOracle) {
    rg::Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto pred = random_mask(2, 9, 9, rng, 0.4);
        const auto truth = random_mask(2, 9, 9, rng, 0.3);
        const auto got = rg::confusion(pred, truth, 1);
        const auto want = confusion_oracle(pred, truth, 1);
        EXPECT_EQ(got.tp, want.tp);
        EXPECT_EQ(got.fp, want.fp);
        EXPECT_EQ(got.tn, want.tn);
        EXPECT_EQ(got.fn, want.fn);
        EXPECT_EQ(got.total(), pred.size());
    }
}

TEST(OverlapMetrics, ClosedFormsAndIdentities) {
    rg::Rng rng(6);
    for (int trial = 0; trial < 30; ++trial) {
        const auto pred = random_mask(1, 12, 12, rng, 0.5);
        const auto truth = random_mask(1, 12, 12, rng, 0.35);
        const auto c = rg::confusion(pred, truth, 1);
        const double dice = rg::dice(c), iou = rg::iou(c);
        EXPECT_NEAR(rg::voe(c), 1.0 - iou, 1e-12);
        EXPECT_NEAR(dice, 2.0 * iou / (1.0 + iou), 1e-12);
        EXPECT_NEAR(rg::sensitivity(c), 1.0 - rg::fnr(c), 1e-12);
        EXPECT_NEAR(rg::specificity(c), 1.0 - rg::fpr(c), 1e-12);
        const double denom = 2.0 * c.tp + c.fp + c.fn;
        if (denom > 0) EXPECT_NEAR(dice, 2.0 * c.tp / denom, 1e-12);
    }
}

TEST(OverlapMetrics, EmptyMaskConventions) {
    rg::ConfusionCounts both_empty{0, 0, 100, 0};
    EXPECT_DOUBLE_EQ(rg::dice(both_empty), 1.0);
    EXPECT_DOUBLE_EQ(rg::iou(both_empty), 1.0);
    EXPECT_DOUBLE_EQ(rg::voe(both_empty), 0.0);
    EXPECT_DOUBLE_EQ(rg::sensitivity(both_empty), 1.0);
    EXPECT_DOUBLE_EQ(rg::specificity(both_empty), 1.0);
    rg::ConfusionCounts pred_only{0, 5, 95, 0};
    EXPECT_DOUBLE_EQ(rg::dice(pred_only), 0.0);
    EXPECT_DOUBLE_EQ(rg::sensitivity(pred_only), 1.0);  // no positives to miss
    rg::ConfusionCounts truth_only{0, 0, 95, 5};
    EXPECT_DOUBLE_EQ(rg::dice(truth_only), 0.0);
    EXPECT_DOUBLE_EQ(rg::sensitivity(truth_only), 0.0);
}

TEST(Rvd, SignedAndAntisymmetric) {
    // pred 6 voxels vs truth 4: (6-4)/4 = 0.5
    EXPECT_DOUBLE_EQ(rg::rvd(6, 4).value(), 0.5);
    EXPECT_DOUBLE_EQ(rg::rvd(4, 6).value(), -1.0 / 3.0);
    // rvd(a,b) = -rvd(b,a) * |b| / |a|
    const double ab = rg::rvd(6, 4).value();
    const double ba = rg::rvd(4, 6).value();
    EXPECT_NEAR(ab, -ba * 6.0 / 4.0, 1e-12);
}

TEST(Rvd, EmptyTruthConventions) {
    EXPECT_DOUBLE_EQ(rg::rvd(0, 0).value(), 0.0);
    EXPECT_FALSE(rg::rvd(3, 0).has_value());
}

TEST(Percentile, LinearInterpolation) {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    EXPECT_DOUBLE_EQ(rg::percentile(v, 0.0), 1.0);
    EXPECT_DOUBLE_EQ(rg::percentile(v, 100.0), 4.0);
    EXPECT_DOUBLE_EQ(rg::percentile(v, 50.0), 2.5);
    std::vector<double> w{5.0};
    EXPECT_DOUBLE_EQ(rg::percentile(w, 95.0), 5.0);
    std::vector<double> empty;
    EXPECT_THROW(rg::percentile(empty, 50.0), rg::DataError);
}

TEST(Surface, ThreeFourFiveExample) {
    // Two single-voxel masks offset by (0,3,4): every distance is 5.
    auto a = mask_of(std::vector<std::uint8_t>(1 * 8 * 8, 0), 1, 8, 8);
    auto b = a;
    a(0, 0, 0, 0) = 1;
    b(0, 3, 4, 0) = 1;
    const auto d = rg::surface_distances(a, b);
    EXPECT_NEAR(d.assd, 5.0, 1e-12);
    EXPECT_NEAR(d.mssd, 5.0, 1e-12);
    EXPECT_NEAR(d.hd_max, 5.0, 1e-12);
    EXPECT_NEAR(d.hd95, 5.0, 1e-12);
}

TEST(Surface, IdenticalMasksAreZero) {
    rg::Rng rng(9);
    const auto m = random_mask(2, 10, 10, rng, 0.4);
    const auto d = rg::surface_distances(m, m);
    EXPECT_DOUBLE_EQ(d.assd, 0.0);
    EXPECT_DOUBLE_EQ(d.mssd, 0.0);
}

TEST(Surface, EmptyMaskIsError) {
    const auto empty = mask_of(std::vector<std::uint8_t>(8 * 8, 0), 1, 8, 8);
    auto full = empty;
    full(0, 2, 2, 0) = 1;
    EXPECT_THROW(rg::surface_distances(empty, full), rg::DataError);
    EXPECT_THROW(rg::surface_distances(full, empty), rg::DataError);
    EXPECT_THROW(rg::surface_distances(empty, empty), rg::DataError);
}

TEST(Surface, MatchesBruteForceOracle) {
    rg::Rng rng(11);
    int done = 0;
    while (done < 25) {
        const std::size_t s = 1 + rg::rand_index(rng, 3);
        const auto a = random_mask(s, 8, 8, rng, 0.3);
        const auto b = random_mask(s, 8, 8, rng, 0.3);
        if (!rg::metrics_detail::any_set(a) || !rg::metrics_detail::any_set(b)) continue;
        const std::array<double, 3> sp{1.0, 1.0, 1.0};
        const auto got = rg::surface_distances(a, b, sp);
        const auto brute = brute_surface(a, b, sp);
        EXPECT_NEAR(got.assd, brute_assd(brute), 1e-9);
        EXPECT_NEAR(got.mssd, brute_max(brute), 1e-9);
        EXPECT_NEAR(got.hd_max, brute_max(brute), 1e-9);
        EXPECT_NEAR(got.hd95, brute_hd95(brute), 1e-9);
        ++done;
    }
}

TEST(Surface, AnisotropicSpacing) {
    rg::Rng rng(13);
    int done = 0;
    while (done < 10) {
        const auto a = random_mask(2, 6, 6, rng, 0.35);
        const auto b = random_mask(2, 6, 6, rng, 0.35);
        if (!rg::metrics_detail::any_set(a) || !rg::metrics_detail::any_set(b)) continue;
        const std::array<double, 3> sp{2.5, 1.0, 0.5};
        const auto got = rg::surface_distances(a, b, sp);
        const auto brute = brute_surface(a, b, sp);
        EXPECT_NEAR(got.assd, brute_assd(brute), 1e-9);
        EXPECT_NEAR(got.mssd, brute_max(brute), 1e-9);
        EXPECT_NEAR(got.hd95, brute_hd95(brute), 1e-9);
        ++done;
    }
}

TEST(Surface, OrderingInvariants) {
    rg::Rng rng(15);
    int done = 0;
    while (done < 15) {
        const auto a = random_mask(2, 8, 8, rng, 0.3);
        const auto b = random_mask(2, 8, 8, rng, 0.3);
        if (!rg::metrics_detail::any_set(a) || !rg::metrics_detail::any_set(b)) continue;
        const auto d = rg::surface_distances(a, b);
        EXPECT_GE(d.mssd + 1e-12, d.hd95);
        EXPECT_GE(d.mssd + 1e-12, d.assd);
        EXPECT_DOUBLE_EQ(d.mssd, d.hd_max);
        // symmetry of the pooled quantities
        const auto r = rg::surface_distances(b, a);
        EXPECT_NEAR(d.assd, r.assd, 1e-12);
        EXPECT_NEAR(d.mssd, r.mssd, 1e-12);
        EXPECT_NEAR(d.hd95, r.hd95, 1e-12);
        ++done;
    }
}

TEST(Boundary, ErosionDefinition) {
    // 3x3 solid square in one slice: every voxel of it is boundary except
    // none (all have an off in-plane neighbour except the centre... the
    // centre's 4-neighbourhood is all on, so only the ring is boundary).
    auto m = mask_of(std::vector<std::uint8_t>(5 * 5, 0), 1, 5, 5);
    for (std::size_t j = 1; j <= 3; ++j)
        for (std::size_t k = 1; k <= 3; ++k) m(0, j, k, 0) = 1;
    const auto b = rg::metrics_detail::boundary_of(m);
    EXPECT_EQ(b(0, 2, 2, 0), 0);  // interior
    EXPECT_EQ(b(0, 1, 1, 0), 1);
    EXPECT_EQ(b(0, 1, 2, 0), 1);
    std::size_t count = 0;
    for (auto v : b.flat()) count += v;
    EXPECT_EQ(count, 8u);
}

TEST(Boundary, SingleSliceUsesInPlaneNeighbours) {
    // With one slice the out-of-plane neighbours don't exist; a full plane
    // must still erode to an interior, not report everything as boundary.
    auto m = mask_of(std::vector<std::uint8_t>(7 * 7, 1), 1, 7, 7);
    const auto b = rg::metrics_detail::boundary_of(m);
    EXPECT_EQ(b(0, 3, 3, 0), 0);
    EXPECT_EQ(b(0, 0, 3, 0), 1);
}

TEST(Evaluate, PerfectPrediction) {
    rg::SegMap truth;
    truth.class_count = 2;
    truth.labels = mask_of(std::vector<std::uint8_t>(4 * 6 * 6, 0), 4, 6, 6);
    truth.labels(1, 2, 2, 0) = 1;
    truth.labels(1, 2, 3, 0) = 1;
    truth.labels(2, 2, 2, 0) = 1;
    const rg::MetricReport rep =
        rg::evaluate(truth, truth, {1, 1, 1}, rg::default_regions(2), "p0");
    ASSERT_EQ(rep.rows.size(), 1u);
    const auto& row = rep.rows[0];
    EXPECT_DOUBLE_EQ(row.dice, 1.0);
    EXPECT_DOUBLE_EQ(row.voe, 0.0);
    EXPECT_DOUBLE_EQ(row.rvd.value(), 0.0);
    EXPECT_DOUBLE_EQ(row.assd.value(), 0.0);
}

TEST(Evaluate, CompositeRegionUnionsLabels) {
    rg::SegMap truth, pred;
    truth.class_count = pred.class_count = 3;
    truth.labels = mask_of(std::vector<std::uint8_t>(1 * 4 * 4, 0), 1, 4, 4);
    pred.labels = mask_of(std::vector<std::uint8_t>(1 * 4 * 4, 0), 1, 4, 4);
    truth.labels(0, 0, 0, 0) = 1;
    truth.labels(0, 0, 1, 0) = 2;
    pred.labels(0, 0, 0, 0) = 2;  // wrong class, right union
    pred.labels(0, 0, 1, 0) = 1;
    std::vector<rg::RegionSpec> regions = rg::default_regions(3);
    regions.push_back({"whole", {1, 2}});
    const rg::MetricReport rep = rg::evaluate(pred, truth, {1, 1, 1}, regions, "p0");
    ASSERT_EQ(rep.rows.size(), 3u);
    EXPECT_DOUBLE_EQ(rep.rows[0].dice, 0.0);  // class1 swapped
    EXPECT_DOUBLE_EQ(rep.rows[1].dice, 0.0);
    EXPECT_DOUBLE_EQ(rep.rows[2].dice, 1.0);  // union identical
}

TEST(Evaluate, EmptyRegionOmitsDistances) {
    rg::SegMap truth, pred;
    truth.class_count = pred.class_count = 2;
    truth.labels = mask_of(std::vector<std::uint8_t>(1 * 4 * 4, 0), 1, 4, 4);
    pred.labels = mask_of(std::vector<std::uint8_t>(1 * 4 * 4, 0), 1, 4, 4);
    pred.labels(0, 1, 1, 0) = 1;
    const rg::MetricReport rep = rg::evaluate(pred, truth, {1, 1, 1}, rg::default_regions(2), "p0");
    const auto& row = rep.rows[0];
    EXPECT_FALSE(row.assd.has_value());
    EXPECT_FALSE(row.hd95.has_value());
    EXPECT_FALSE(row.rvd.has_value());  // truth empty, pred not
    EXPECT_DOUBLE_EQ(row.dice, 0.0);
}

TEST(Evaluate, RejectsProbMaps) {
    rg::SegMap probs;
    probs.class_count = 2;
    probs.probs = rg::Tensor<float>(1, 2, 2, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        probs.probs[i * 2] = 1.0f;
        probs.probs[i * 2 + 1] = 0.0f;
    }
    rg::SegMap labels;
    labels.class_count = 2;
    labels.labels = mask_of(std::vector<std::uint8_t>(4, 0), 1, 2, 2);
    EXPECT_THROW(rg::evaluate(probs, labels, {1, 1, 1}, rg::default_regions(2)), rg::DataError);
}

TEST(MetricsCsv, FixedHeaderAndEmptyCells) {
    rg::SegMap truth, pred;
    truth.class_count = pred.class_count = 2;
    truth.labels = mask_of(std::vector<std::uint8_t>(1 * 4 * 4, 0), 1, 4, 4);
    pred.labels = mask_of(std::vector<std::uint8_t>(1 * 4 * 4, 0), 1, 4, 4);
    pred.labels(0, 1, 1, 0) = 1;  // truth empty: rvd + distances blank
    std::vector<rg::MetricReport> reps;
    reps.push_back(rg::evaluate(pred, truth, {1, 1, 1}, rg::default_regions(2), "p7"));
    const std::string csv = rg::metrics_csv(reps);
    const std::string header = csv.substr(0, csv.find('\n'));
    EXPECT_EQ(header,
              "patient,region,dice,iou,voe,rvd,sensitivity,specificity,fnr,fpr,hd_max,hd95,assd,mssd");
    const std::string row = csv.substr(csv.find('\n') + 1);
    EXPECT_NE(row.find("p7,class1,0,"), std::string::npos);
    // four trailing empty cells for the four distance columns, plus empty rvd
    EXPECT_NE(row.find(",,,,"), std::string::npos);
}

TEST(MetricsCsv, DeterministicBytes) {
    rg::Rng rng(23);
    const auto t = random_mask(2, 6, 6, rng, 0.4);
    const auto p = random_mask(2, 6, 6, rng, 0.4);
    rg::SegMap truth, pred;
    truth.class_count = pred.class_count = 2;
    truth.labels = t;
    pred.labels = p;
    std::vector<rg::MetricReport> reps1, reps2;
    reps1.push_back(rg::evaluate(pred, truth, {1, 1, 1}, rg::default_regions(2), "x"));
    reps2.push_back(rg::evaluate(pred, truth, {1, 1, 1}, rg::default_regions(2), "x"));
    EXPECT_EQ(rg::metrics_csv(reps1), rg::metrics_csv(reps2));
}
