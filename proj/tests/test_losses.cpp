#include "test_helpers.hpp"

#include <qaf/diffcore/grad_check.hpp>
#include <qaf/losses/losses.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace qaf;
using qaf::testing::random_set;
using qaf::testing::tiny_shape;
using qaf::testing::vars_of;

namespace {

Var vec(std::initializer_list<double> v) { return constant(Array::vector(v)); }

ClassifierHead head_of(std::size_t rows, std::size_t cols, std::vector<double> v)
{
    return {parameter(Array::matrix(rows, cols, std::move(v)))};
}

Array random_matrix(std::size_t r, std::size_t c, Rng& rng)
{
    Array a(Shape{r, c});
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = normal01(rng);
    return a;
}

// Plain softmax cross-entropy with logits <v_j, x>.
double cross_entropy_oracle(const Array& V, const Array& x, std::size_t y)
{
    std::vector<double> logits(V.rows());
    double mx = -1e300;
    for (std::size_t j = 0; j < V.rows(); ++j) {
        double s = 0.0;
        for (std::size_t d = 0; d < x.size(); ++d) s += V.at(j, d) * x[d];
        logits[j] = s;
        mx = std::max(mx, s);
    }
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    return mx + std::log(z) - logits[y];
}

// Triangle with the given side lengths, embedded in 3-D.
Array triangle(double d01, double d02, double d12)
{
    const double x = (d01 * d01 + d02 * d02 - d12 * d12) / (2.0 * d01);
    const double y = std::sqrt(d02 * d02 - x * x);
    return Array::matrix(3, 3, {0, 0, 0, d01, 0, 0, x, y, 0});
}

// Energy of unit vectors at the given angles in the plane.
double planar_energy(const std::vector<double>& angles)
{
    double e = 0.0;
    for (std::size_t i = 0; i < angles.size(); ++i)
        for (std::size_t l = 0; l < angles.size(); ++l) {
            if (i == l) continue;
            const double dx = std::cos(angles[i]) - std::cos(angles[l]);
            const double dy = std::sin(angles[i]) - std::sin(angles[l]);
            e += 1.0 / (dx * dx + dy * dy);
        }
    return e;
}

double angle_between(const Array& W, std::size_t a, std::size_t b)
{
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t d = 0; d < W.cols(); ++d) {
        dot += W.at(a, d) * W.at(b, d);
        na += W.at(a, d) * W.at(a, d);
        nb += W.at(b, d) * W.at(b, d);
    }
    return std::acos(std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

} // namespace

TEST(AngularLoss, AlignedFeatureAgainstOrthogonalClass)
{
    auto head = head_of(2, 2, {1, 0, 0, 1});
    auto l = angular_loss({vec({1, 0})}, {0}, head, Margins{1, 0, 0});
    EXPECT_NEAR(l->value.item(), -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)), 1e-6);
    EXPECT_NEAR(l->value.item(), 0.31326, 1e-5);
}

TEST(AngularLoss, EquiangularFeatureGivesLogM)
{
    auto head = head_of(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto x = vec({1, 1, 1});
    const double plain = angular_loss({x}, {1}, head, Margins{1, 0, 0})->value.item();
    EXPECT_NEAR(plain, std::log(3.0), 1e-12);
    const double with_m3 = angular_loss({x}, {1}, head, Margins{1, 0, 0.2})->value.item();
    EXPECT_GT(with_m3, plain);
}

TEST(AngularLoss, NoMarginEqualsSoftmaxCrossEntropy)
{
    Rng rng = make_stream(31);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t M = 2 + trial % 5, D = 3 + trial % 4;
        Array V = random_matrix(M, D, rng);
        renormalize_rows(V);
        std::vector<Var> xs;
        std::vector<std::uint32_t> ys;
        double oracle = 0.0;
        for (int i = 0; i < 3; ++i) {
            Array x = random_matrix(1, D, rng);
            x = x.reshaped(Shape{D});
            const auto y = static_cast<std::uint32_t>((trial + i) % M);
            oracle += cross_entropy_oracle(V, x, y) / 3.0;
            xs.push_back(constant(x));
            ys.push_back(y);
        }
        auto l = angular_loss(xs, ys, ClassifierHead{constant(V)}, Margins{1, 0, 0});
        EXPECT_NEAR(l->value.item(), oracle, 1e-10);
        EXPECT_GE(l->value.item(), 0.0);
    }
}

TEST(AngularLoss, MarginsNeverDecreaseTheLoss)
{
    Rng rng = make_stream(32);
    for (int trial = 0; trial < 100; ++trial) {
        Array V = random_matrix(4, 5, rng);
        renormalize_rows(V);
        auto x = constant(random_matrix(1, 5, rng).reshaped(Shape{5}));
        ClassifierHead head{constant(V)};
        const double base = angular_loss({x}, {1}, head, Margins{1, 0, 0})->value.item();
        const double margin = angular_loss({x}, {1}, head, Margins{1.1, 0.4, 0.2})->value.item();
        EXPECT_GE(margin, base - 1e-9);
    }
}

TEST(AngularLoss, RenormalizingRescaledHeadPreservesLoss)
{
    Rng rng = make_stream(33);
    Array V = random_matrix(3, 4, rng);
    renormalize_rows(V);
    auto x = constant(Array::vector({0.3, -1.2, 0.5, 2.0}));
    const double before = angular_loss({x}, {2}, ClassifierHead{constant(V)}, Margins{1.1, 0.4, 0.2})->value.item();
    Array scaled = V;
    for (std::size_t r = 0; r < 3; ++r)
        for (auto& v : scaled.row(r)) v *= 0.5 + static_cast<double>(r);
    renormalize_rows(scaled);
    const double after = angular_loss({x}, {2}, ClassifierHead{constant(scaled)}, Margins{1.1, 0.4, 0.2})->value.item();
    EXPECT_NEAR(before, after, 1e-12);
}

TEST(AngularLoss, LargeAngleIsClampedAndFinite)
{
    auto head = head_of(2, 2, {1, 0, 0, 1});
    // theta = pi, so m1 theta + m2 exceeds pi and the target cosine saturates at -1.
    auto l = angular_loss({vec({-2, 0})}, {0}, head, Margins{1.2, 0.4, 0.0});
    const double oracle = std::log(std::exp(-2.0) + std::exp(0.0)) + 2.0;
    EXPECT_NEAR(l->value.item(), oracle, 1e-6);
}

TEST(AngularLoss, Errors)
{
    auto head = head_of(2, 2, {1, 0, 0, 1});
    EXPECT_THROW(angular_loss({vec({0, 0})}, {0}, head, Margins{}), Error);
    EXPECT_THROW(angular_loss({vec({1, 0})}, {2}, head, Margins{}), Error);
    EXPECT_THROW(angular_loss({vec({1, 0})}, {0, 1}, head, Margins{}), ShapeError);
    EXPECT_THROW(angular_loss({vec({1, 0})}, {0}, head_of(1, 2, {1, 0}), Margins{}), Error);
}

TEST(AngularLoss, GradientMatchesFiniteDifferences)
{
    Rng rng = make_stream(34);
    auto head = ClassifierHead{parameter(random_matrix(3, 4, rng))};
    std::vector<Var> xs = {parameter(Array::vector({0.5, -0.3, 1.2, 0.1})), parameter(Array::vector({-0.7, 0.9, 0.2, 0.4}))};
    auto report = grad_check([&] { return angular_loss(xs, {0, 2}, head, Margins{1.1, 0.4, 0.2}); },
                             {head.weights, xs[0], xs[1]}, 1e-6, 1e-4);
    EXPECT_TRUE(report.passed) << report.worst;
}

TEST(UniformLoss, TwoCenterExamples)
{
    EXPECT_NEAR(uniform_loss(constant(Array::matrix(2, 2, {0, 0, 1, 0})))->value.item(), 0.5, 1e-12);
    EXPECT_NEAR(uniform_loss(constant(Array::matrix(2, 2, {3, 4, 3, 4})))->value.item(), 1.0, 1e-12);
    EXPECT_NEAR(uniform_loss(constant(Array::matrix(2, 2, {0, 0, 999, 0})))->value.item(), 0.001, 1e-12);
    EXPECT_THROW(uniform_loss(constant(Array::matrix(1, 2, {0, 0}))), Error);
}

TEST(UniformLoss, StrictlyDecreasesWhenOneDistanceGrows)
{
    Rng rng = make_stream(35);
    for (int trial = 0; trial < 100; ++trial) {
        const double d02 = 1.0 + uniform01(rng), d12 = 1.0 + uniform01(rng);
        const double lo = std::abs(d02 - d12) + 0.05, hi = d02 + d12 - 0.05;
        const double a = lo + (hi - lo) * 0.8 * uniform01(rng);
        const double b = a + (hi - a) * (0.1 + 0.8 * uniform01(rng));
        const double la = uniform_loss(constant(triangle(a, d02, d12)))->value.item();
        const double lb = uniform_loss(constant(triangle(b, d02, d12)))->value.item();
        EXPECT_LT(lb, la);
        const double oracle = (2.0 / (a + 1) + 2.0 / (d02 + 1) + 2.0 / (d12 + 1)) / 6.0;
        EXPECT_NEAR(la, oracle, 1e-12);
    }
}

TEST(UniformLoss, GradientMatchesFiniteDifferences)
{
    Rng rng = make_stream(36);
    auto c = parameter(random_matrix(4, 3, rng));
    auto report = grad_check([&] { return uniform_loss(c); }, {c}, 1e-6, 1e-4);
    EXPECT_TRUE(report.passed) << report.worst;
}

TEST(RepresentationLoss, Examples)
{
    EXPECT_NEAR(representation_loss({{vec({3, 0}), vec({0, 1})}})->value.item(), 1.0, 1e-12);
    EXPECT_NEAR(representation_loss({{vec({6, 0}), vec({0, 2})}})->value.item(), 2.0, 1e-12);
    EXPECT_NEAR(representation_loss({{vec({3, 4}), vec({0, 5}), vec({5, 0})}})->value.item(), 0.0, 1e-12);
    EXPECT_EQ(representation_loss({{vec({3, 4})}})->value.item(), 0.0);
    EXPECT_THROW(representation_loss({{vec({0, 0}), vec({0, 0})}}), Error);
    EXPECT_THROW(representation_loss({}), Error);
}

TEST(RepresentationLoss, MatchesBruteForceAndIsHomogeneous)
{
    Rng rng = make_stream(37);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t K = 2 + trial % 3, N = 1 + trial % 4;
        std::vector<std::vector<Var>> batch, scaled;
        double oracle = 0.0;
        for (std::size_t s = 0; s < N; ++s) {
            std::vector<double> norms;
            std::vector<Var> zs, zs2;
            for (std::size_t k = 0; k < K; ++k) {
                Array z = random_matrix(1, 3, rng).reshaped(Shape{3});
                norms.push_back(std::hypot(z[0], z[1], z[2]));
                zs.push_back(constant(z));
                Array z2 = z;
                for (std::size_t i = 0; i < z2.size(); ++i) z2[i] *= 2.5;
                zs2.push_back(constant(z2));
            }
            double num = 0.0, den = 0.0;
            for (std::size_t a = 0; a < K; ++a) {
                den += norms[a];
                for (std::size_t b = 0; b < K; ++b) num += (norms[a] - norms[b]) * (norms[a] - norms[b]);
            }
            oracle += num / den;
            batch.push_back(zs);
            scaled.push_back(zs2);
        }
        oracle /= static_cast<double>(N * K * (K - 1));
        const double l = representation_loss(batch)->value.item();
        EXPECT_NEAR(l, oracle, 1e-12);
        EXPECT_NEAR(representation_loss(scaled)->value.item(), 2.5 * l, 1e-12);
    }
}

TEST(CenterAlignmentLoss, Examples)
{
    CenterBank bank;
    bank.multimodal = constant(Array::matrix(1, 2, {2, 0}));
    bank.unimodal = {constant(Array::matrix(1, 2, {-5, 0}))};
    EXPECT_NEAR(center_alignment_loss(bank)->value.item(), 4.0, 1e-12);
    bank.unimodal = {constant(Array::matrix(1, 2, {0, 3}))};
    EXPECT_NEAR(center_alignment_loss(bank)->value.item(), 2.0, 1e-12);
    bank.unimodal = {constant(Array::matrix(1, 2, {7, 0}))};
    EXPECT_NEAR(center_alignment_loss(bank)->value.item(), 0.0, 1e-12);
    bank.unimodal = {constant(Array::matrix(1, 2, {0, 0}))};
    EXPECT_THROW(center_alignment_loss(bank), Error);
}

TEST(CenterAlignmentLoss, GradientMatchesFiniteDifferences)
{
    Rng rng = make_stream(38);
    CenterBank bank;
    bank.multimodal = parameter(random_matrix(3, 4, rng));
    bank.unimodal = {parameter(random_matrix(3, 4, rng)), parameter(random_matrix(3, 4, rng))};
    auto report = grad_check([&] { return center_alignment_loss(bank); },
                             {bank.multimodal, bank.unimodal[0], bank.unimodal[1]}, 1e-6, 1e-4);
    EXPECT_TRUE(report.passed) << report.worst;
}

TEST(HypersphericalEnergy, Examples)
{
    EXPECT_NEAR(hyperspherical_energy(constant(Array::matrix(2, 2, {1, 0, 0, 1})))->value.item(), 1.0, 1e-12);
    auto antipodal = constant(Array::matrix(2, 2, {1, 0, -1, 0}));
    EXPECT_NEAR(hyperspherical_energy(antipodal)->value.item(), 0.5, 1e-12);
    EXPECT_GE(hyperspherical_energy(antipodal, nullptr, true)->value.item(), 1.0 / kEnergyEps);
    // Orthogonal pair in half space: four virtual vectors at 90 degree steps.
    const double half = hyperspherical_energy(constant(Array::matrix(2, 2, {1, 0, 0, 1})), nullptr, true)->value.item();
    EXPECT_NEAR(half, 8.0 * 0.5 + 4.0 * 0.25, 1e-12);
    EXPECT_THROW(hyperspherical_energy(constant(Array::matrix(2, 2, {1, 0, 0, 0}))), Error);
    EXPECT_THROW(hyperspherical_energy(constant(Array::matrix(1, 2, {1, 0}))), Error);
}

TEST(HypersphericalEnergy, InvariantToRowRescaling)
{
    Rng rng = make_stream(39);
    for (int trial = 0; trial < 30; ++trial) {
        Array W = random_matrix(5, 6, rng);
        Array S = W;
        for (std::size_t r = 0; r < 5; ++r) {
            const double f = 0.1 + 3.0 * uniform01(rng);
            for (auto& v : S.row(r)) v *= f;
        }
        auto P = constant(random_matrix(3, 6, rng));
        for (bool half : {false, true}) {
            const double a = hyperspherical_energy(constant(W), &P, half)->value.item();
            const double b = hyperspherical_energy(constant(S), &P, half)->value.item();
            EXPECT_NEAR(a, b, 1e-9 * a);
        }
    }
}

TEST(HypersphericalEnergy, ProjectionShapeIsChecked)
{
    auto P = constant(Array::matrix(1, 3, {1, 0, 0}));
    EXPECT_THROW(hyperspherical_energy(constant(Array::matrix(2, 2, {1, 0, 0, 1})), &P), ShapeError);
}

TEST(HypersphericalEnergy, GradientMatchesFiniteDifferences)
{
    Rng rng = make_stream(40);
    auto W = parameter(random_matrix(4, 5, rng));
    auto P = parameter(random_matrix(3, 5, rng));
    for (bool half : {false, true}) {
        auto report = grad_check([&] { return hyperspherical_energy(W, &P, half); }, {W, P}, 1e-6, 1e-4);
        EXPECT_TRUE(report.passed) << report.worst;
    }
}

TEST(HypersphericalEnergy, DescentSpreadsThreePlanarVectorsEvenly)
{
    // Oracle: grid search over the two free angles with the first fixed at 0.
    double best = 1e300, best_a = 0.0, best_b = 0.0;
    const int steps = 720;
    for (int i = 1; i < steps; ++i)
        for (int j = i + 1; j < steps; ++j) {
            const double a = 2.0 * std::numbers::pi * i / steps, b = 2.0 * std::numbers::pi * j / steps;
            const double e = planar_energy({0.0, a, b});
            if (e < best) {
                best = e;
                best_a = a;
                best_b = b;
            }
        }
    const double oracle_gap = std::min(best_a, best_b - best_a) * 180.0 / std::numbers::pi;

    Rng rng = make_stream(41);
    auto W = parameter(random_matrix(3, 2, rng));
    for (int it = 0; it < 3000; ++it) {
        W->zero_grad();
        auto e = hyperspherical_energy(W);
        backward(e);
        for (std::size_t i = 0; i < W->value.size(); ++i) W->value[i] -= 0.02 * W->grad[i];
        renormalize_rows(W->value);
    }
    for (auto [a, b] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{1, 2}}) {
        const double ang = angle_between(W->value, a, b);
        EXPECT_NEAR(ang, 120.0, 1.0);
        EXPECT_NEAR(ang, oracle_gap, 1.0);
    }
}

TEST(CompactnessLoss, SingleOrthogonalLayer)
{
    HyperParams hp;
    hp.half_space = false;
    hp.lambda_h0 = 0.0;
    ProjectionBank bank;
    auto out = constant(Array::matrix(2, 2, {1, 0, 0, 1}));
    auto l = compactness_loss({constant(Array::matrix(2, 2, {1, 0, 0, 1}))}, out, bank, hp);
    EXPECT_NEAR(l.total->value.item(), hp.lambda_h * 0.5 * 1.0, 1e-12);

    hp.lambda_h = 0.0;
    EXPECT_EQ(compactness_loss({constant(Array::matrix(2, 2, {1, 0, 0, 1}))}, out, bank, hp).total->value.item(), 0.0);
}

TEST(CompactnessLoss, WideLayersAreProjected)
{
    HyperParams hp;
    hp.projected_dim = 4;
    hp.lambda_h0 = 0.0;
    FusionModel model(tiny_shape(2), 42);
    LossState state(model, 3, hp, 43);
    ASSERT_NE(state.projections.for_width(6), nullptr);
    ASSERT_EQ(state.projections.for_width(4), nullptr);
    const Var& P = *state.projections.for_width(6);
    EXPECT_EQ(P->shape(), (Shape{4, 6}));

    double oracle = 0.0;
    for (const auto* layer : model.layers()) {
        const auto N = layer->weight->value.rows();
        if (N < 2) continue;
        const auto* proj = state.projections.for_width(layer->in_features());
        oracle += hyperspherical_energy(layer->weight, proj, true)->value.item() / static_cast<double>(N * (N - 1));
    }
    EXPECT_NEAR(compactness_loss(model, state, hp).total->value.item(), hp.lambda_h * oracle, 1e-9 * oracle);
}

TEST(CompactnessLoss, GradientMatchesFiniteDifferences)
{
    HyperParams hp;
    hp.projected_dim = 4;
    FusionModel model(tiny_shape(2), 44);
    LossState state(model, 3, hp, 45);
    auto params = vars_of(model.parameters());
    for (auto& v : vars_of(state.parameters())) params.push_back(v);
    auto report = grad_check([&] { return compactness_loss(model, state, hp).total; }, params, 1e-6, 1e-4);
    EXPECT_TRUE(report.passed) << report.worst << " max=" << report.max_rel_error;
}

namespace {

struct TinyProblem {
    FusionModel model;
    LossState state;
    std::vector<MultimodalSampleSet> sets;
    std::vector<std::uint32_t> labels;

    explicit TinyProblem(const HyperParams& hp, std::uint64_t seed = 50)
        : model(tiny_shape(2), seed), state(model, 3, hp, seed + 1)
    {
        Rng rng = make_stream(seed + 2);
        qaf::testing::jitter_biases(model, rng);
        for (std::uint32_t i = 0; i < 4; ++i) {
            sets.push_back(random_set(model.shape(), {1 + i % 3, 2}, i % 3, rng));
            labels.push_back(i % 3);
        }
    }

    std::vector<ForwardOutput> forward() const
    {
        std::vector<ForwardOutput> out;
        for (const auto& s : sets) out.push_back(model_forward(model, s, DropoutSpec{{0, 0}, 0, 0, false, 0}));
        return out;
    }
};

} // namespace

TEST(SeparabilityLoss, ZeroWeightsLeaveAngularTerm)
{
    HyperParams hp;
    hp.lambda_u = hp.lambda_r = hp.lambda_c = hp.lambda_ak = hp.lambda_uk = 0.0;
    TinyProblem p(hp);
    auto l = separability_loss(p.forward(), p.labels, p.state, hp);
    EXPECT_EQ(l.total->value.item(), l.term("angular"));
    EXPECT_THROW(l.term("missing"), Error);
}

TEST(SeparabilityLoss, VerificationModeDropsAlignment)
{
    HyperParams hp;
    hp.lambda_c = 0.2;
    TinyProblem p(hp);
    hp.verification = true;
    EXPECT_EQ(separability_loss(p.forward(), p.labels, p.state, hp).term("alignment"), 0.0);
    hp.verification = false;
    const double lc = separability_loss(p.forward(), p.labels, p.state, hp).term("alignment");
    EXPECT_NEAR(lc, 0.2 * center_alignment_loss(p.state.centers)->value.item(), 1e-12);
    EXPECT_GT(lc, 0.0);
}

TEST(SeparabilityLoss, WeightedTermsMatchComponents)
{
    HyperParams hp;
    hp.verification = false;
    TinyProblem p(hp);
    auto batch = p.forward();
    auto l = separability_loss(batch, p.labels, p.state, hp);
    EXPECT_NEAR(l.term("uniform"), uniform_loss(p.state.centers.multimodal)->value.item(), 1e-12);
    std::vector<Var> y1;
    for (const auto& f : batch) y1.push_back(f.Y[1]);
    const double lak = angular_loss(y1, p.labels, p.state.unimodal_heads[1], hp.unimodal)->value.item();
    EXPECT_NEAR(l.term("uni_angular/1"), 0.5 * 0.3 * lak, 1e-12);
    EXPECT_NEAR(l.term("uni_uniform/0"), 0.5 * 0.3 * uniform_loss(p.state.centers.unimodal[0])->value.item(), 1e-12);
}

TEST(TotalLoss, BreakdownSumsToTotal)
{
    for (bool verification : {true, false}) {
        HyperParams hp;
        hp.verification = verification;
        hp.projected_dim = 4;
        TinyProblem p(hp);
        auto l = total_loss(p.forward(), p.labels, p.model, p.state, hp);
        EXPECT_NEAR(l.total->value.item(), l.sum_of_terms(), 1e-12);
        for (const auto& [name, v] : l.terms) EXPECT_GE(v, 0.0) << name;
    }
}

TEST(TotalLoss, ZeroCompactnessWeightsGiveSeparabilityLoss)
{
    HyperParams hp;
    hp.lambda_h = hp.lambda_h0 = 0.0;
    TinyProblem p(hp);
    auto batch = p.forward();
    EXPECT_NEAR(total_loss(batch, p.labels, p.model, p.state, hp).total->value.item(),
                separability_loss(batch, p.labels, p.state, hp).total->value.item(), 1e-12);
}

TEST(TotalLoss, GradientMatchesFiniteDifferences)
{
    HyperParams hp;
    hp.verification = false;
    hp.projected_dim = 4;
    TinyProblem p(hp);
    auto params = vars_of(p.model.parameters());
    for (auto& v : vars_of(p.state.parameters())) params.push_back(v);
    auto report = grad_check([&] { return total_loss(p.forward(), p.labels, p.model, p.state, hp).total; }, params,
                             1e-6, 1e-4);
    EXPECT_TRUE(report.passed) << report.worst << " max=" << report.max_rel_error;
}

TEST(UpdateCenters, EmaExamples)
{
    Array c = Array::matrix(2, 2, {0, 0, 5, 5});
    update_center_rows(c, {Array::vector({2, 0})}, {0}, 0.5);
    EXPECT_EQ(c, Array::matrix(2, 2, {1, 0, 5, 5}));

    Array full = Array::matrix(1, 2, {9, 9});
    update_center_rows(full, {Array::vector({1, 2}), Array::vector({3, 4})}, {0, 0}, 1.0);
    EXPECT_EQ(full, Array::matrix(1, 2, {2, 3}));

    Array frozen = Array::matrix(1, 2, {9, 9});
    update_center_rows(frozen, {Array::vector({1, 2})}, {0}, 0.0);
    EXPECT_EQ(frozen, Array::matrix(1, 2, {9, 9}));

    EXPECT_THROW(update_center_rows(c, {Array::vector({1, 2})}, {2}, 0.5), Error);
    EXPECT_THROW(update_center_rows(c, {Array::vector({1, 2, 3})}, {0}, 0.5), ShapeError);
}

TEST(UpdateCenters, BankUpdateUsesEachSpace)
{
    HyperParams hp;
    TinyProblem p(hp);
    auto batch = p.forward();
    const Array before = p.state.centers.unimodal[1]->value;
    update_centers(p.state.centers, batch, p.labels);
    for (std::size_t j = 0; j < 4; ++j) {
        double m = 0.0;
        for (std::size_t i : {0u, 3u}) m += batch[i].Y[1]->value[j] / 2.0;
        EXPECT_NEAR(p.state.centers.unimodal[1]->value.at(0, j), 0.5 * before.at(0, j) + 0.5 * m, 1e-12);
    }
}

TEST(HyperParams, Validation)
{
    HyperParams hp;
    EXPECT_NO_THROW(hp.validate());
    EXPECT_EQ(hp.effective_lambda_c(), 0.0);
    hp.multimodal.m1 = 0.9;
    EXPECT_THROW(hp.validate(), ConfigError);
    hp = HyperParams{};
    hp.lambda_u = -1;
    EXPECT_THROW(hp.validate(), ConfigError);
    EXPECT_THROW(LossState(FusionModel(tiny_shape(2), 1), 1, HyperParams{}, 2), ConfigError);
}
