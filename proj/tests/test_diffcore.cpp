#include <qaf/diffcore/grad_check.hpp>
#include <qaf/rng.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <string>

using namespace qaf;

namespace {

Array random_array(const Shape& shape, Rng& rng, double lo = -2.0, double hi = 2.0)
{
    Array a(shape);
    std::uniform_real_distribution<double> u(lo, hi);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = u(rng);
    return a;
}

/// Keeps |x| >= margin so kinked primitives are not probed at their kinks.
Array away_from_zero(Array a, double margin)
{
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::abs(a[i]) < margin) a[i] = a[i] < 0 ? -margin : margin;
    return a;
}

struct PrimitiveCase {
    std::string name;
    std::function<std::vector<Array>(Rng&)> point;
    std::function<Var(const std::vector<Var>&)> op;
};

/// Reduces a primitive's output to a scalar with fixed random weights, so every
/// output element participates in the check.
Var weighted_sum(const Var& y)
{
    Array w(y->shape());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.7 * static_cast<double>(i) + 0.3) + 1.3;
    return sum(mul(y, constant(std::move(w))));
}

} // namespace

TEST(Diffcore, ReluDefinition)
{
    auto y = relu(constant(Array::vector({-1.0, 2.0})));
    EXPECT_EQ(y->value, Array::vector({0.0, 2.0}));
}

TEST(Diffcore, SoftmaxOfEqualInputsIsUniform)
{
    auto y = softmax(constant(Array::vector({0.0, 0.0, 0.0})));
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(y->value[i], 1.0 / 3.0, 1e-15);
}

TEST(Diffcore, SigmoidSlopeAtZeroMatchesFiniteDifference)
{
    const double h = 1e-6;
    auto f = [](double x) { return sigmoid(constant(Array::scalar(x)))->value.item(); };
    const double numeric = (f(h) - f(-h)) / (2 * h);
    EXPECT_NEAR(numeric, 0.25, 1e-9);

    auto x = parameter(Array::scalar(0.0));
    backward(sigmoid(x));
    EXPECT_NEAR(x->grad[0], numeric, 1e-9);
}

TEST(Diffcore, SumGradientIsOnes)
{
    auto w = parameter(Array::vector({0.3, -1.0, 2.0}));
    backward(sum(w));
    EXPECT_EQ(w->grad, Array::vector({1.0, 1.0, 1.0}));
}

TEST(Diffcore, NormGradientMatchesAnalyticAndNumeric)
{
    auto w = parameter(Array::vector({3.0, 4.0}));
    backward(norm(w));
    EXPECT_NEAR(w->grad[0], 0.6, 1e-15);
    EXPECT_NEAR(w->grad[1], 0.8, 1e-15);

    auto report = grad_check_at([](const std::vector<Var>& p) { return norm(p[0]); }, {Array::vector({3.0, 4.0})},
                                1e-5, 1e-8);
    EXPECT_TRUE(report.passed) << report.worst;
}

TEST(Diffcore, ConstantRootLeavesZeroGradient)
{
    auto w = parameter(Array::vector({1.0, 2.0}));
    auto c = constant(Array::vector({5.0, 6.0}));
    auto root = add(sum(c), sum(mul(w, constant(Array::vector({0.0, 0.0})))));
    backward(root);
    EXPECT_EQ(w->grad, Array::vector({0.0, 0.0}));
}

TEST(Diffcore, BackwardRejectsNonScalarRoot)
{
    auto w = parameter(Array::vector({1.0, 2.0}));
    EXPECT_THROW(backward(w), ShapeError);
}

TEST(Diffcore, GradCheckSquareAtThree)
{
    auto report =
        grad_check_at([](const std::vector<Var>& p) { return square(p[0]); }, {Array::scalar(3.0)}, 1e-5, 1e-6);
    EXPECT_TRUE(report.passed) << report.worst;
    EXPECT_LE(report.max_rel_error, 1e-6);
}

TEST(Diffcore, GradCheckConstantFunction)
{
    auto report = grad_check_at([](const std::vector<Var>&) { return scalar_constant(4.0); },
                                {Array::vector({1.0, -2.0})}, 1e-5, 1e-12);
    EXPECT_TRUE(report.passed);
    EXPECT_EQ(report.max_rel_error, 0.0);
}

TEST(Diffcore, GradCheckRejectsNonPositiveStep)
{
    EXPECT_THROW(grad_check_at([](const std::vector<Var>& p) { return sum(p[0]); }, {Array::scalar(1.0)}, 0.0, 1e-4),
                 Error);
}

TEST(Diffcore, ShapeErrorNamesPrimitiveAndShapes)
{
    auto a = constant(Array::vector({1.0, 2.0}));
    auto b = constant(Array::vector({1.0, 2.0, 3.0}));
    try {
        add(a, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("add"), std::string::npos);
        EXPECT_NE(msg.find("[2]"), std::string::npos);
        EXPECT_NE(msg.find("[3]"), std::string::npos);
    }
    EXPECT_THROW(matmul(constant(Array(Shape{2, 3})), constant(Array(Shape{2}))), ShapeError);
}

TEST(Diffcore, NonFiniteForwardIsAnError)
{
    EXPECT_THROW(exp(constant(Array::scalar(1000.0))), NonFiniteError);
    EXPECT_THROW(log(constant(Array::scalar(0.0))), NonFiniteError);
    EXPECT_THROW(div(constant(Array::scalar(1.0)), constant(Array::scalar(0.0))), NonFiniteError);
    EXPECT_THROW(normalize(constant(Array::vector({0.0, 0.0}))), NonFiniteError);
}

TEST(Diffcore, AcosGradientStaysFiniteOnClosedInterval)
{
    for (double x : {-1.0, -1.0 + 1e-9, 0.0, 1.0 - 1e-9, 1.0}) {
        auto p = parameter(Array::scalar(x));
        backward(acos(p));
        EXPECT_TRUE(std::isfinite(p->grad[0])) << x;
    }
}

TEST(Diffcore, SharedSubexpressionsAccumulate)
{
    // DAG: y = x*x reused twice; tree: two independent copies of x*x.
    const Array x0 = Array::vector({0.7, -1.3, 2.1});
    auto x = parameter(x0);
    auto y = mul(x, x);
    backward(sum(add(y, mul(y, y))));

    auto xt = parameter(x0);
    auto y1 = mul(xt, xt);
    auto y2 = mul(xt, xt);
    auto y3 = mul(xt, xt);
    backward(sum(add(y1, mul(y2, y3))));
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_DOUBLE_EQ(x->grad[i], xt->grad[i]);
        EXPECT_NEAR(x->grad[i], 2 * x0[i] + 4 * std::pow(x0[i], 3), 1e-12);
    }
}

TEST(Diffcore, MatmulShapes)
{
    auto a = constant(Array::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    auto v = constant(Array::vector({1, 0, -1}));
    EXPECT_EQ(matmul(a, v)->value, Array::vector({-2, -2}));
    auto b = constant(Array::matrix(2, 3, {1, 0, 0, 0, 1, 0}));
    EXPECT_EQ(matmul_nt(a, b)->value, Array::matrix(2, 2, {1, 2, 4, 5}));
    EXPECT_EQ(matmul(a, transpose(b))->value, matmul_nt(a, b)->value);
}

TEST(Diffcore, PairwiseSquaredDistances)
{
    auto d = pairwise_sq_dist(constant(Array::matrix(3, 2, {0, 0, 3, 4, 0, 1})));
    EXPECT_EQ(d->value, Array::matrix(3, 3, {0, 25, 1, 25, 0, 18, 1, 18, 0}));
}

// Every primitive: analytic gradient vs central differences (h = 1e-5 scaled
// by |x|+1) at 100 random points, max relative error 1e-4.
TEST(Diffcore, EveryPrimitiveMatchesFiniteDifferences)
{
    const std::vector<PrimitiveCase> cases = {
        {"matmul", [](Rng& r) { return std::vector{random_array({3, 4}, r), random_array({4, 2}, r)}; },
         [](const auto& p) { return matmul(p[0], p[1]); }},
        {"matvec", [](Rng& r) { return std::vector{random_array({3, 4}, r), random_array({4}, r)}; },
         [](const auto& p) { return matmul(p[0], p[1]); }},
        {"matmul_nt", [](Rng& r) { return std::vector{random_array({3, 4}, r), random_array({2, 4}, r)}; },
         [](const auto& p) { return matmul_nt(p[0], p[1]); }},
        {"transpose", [](Rng& r) { return std::vector{random_array({3, 2}, r)}; },
         [](const auto& p) { return transpose(p[0]); }},
        {"add", [](Rng& r) { return std::vector{random_array({5}, r), random_array({5}, r)}; },
         [](const auto& p) { return add(p[0], p[1]); }},
        {"sub", [](Rng& r) { return std::vector{random_array({5}, r), random_array({5}, r)}; },
         [](const auto& p) { return sub(p[0], p[1]); }},
        {"mul", [](Rng& r) { return std::vector{random_array({5}, r), random_array({5}, r)}; },
         [](const auto& p) { return mul(p[0], p[1]); }},
        {"div", [](Rng& r) { return std::vector{random_array({5}, r), random_array({5}, r, 0.5, 2.0)}; },
         [](const auto& p) { return div(p[0], p[1]); }},
        {"add_bias", [](Rng& r) { return std::vector{random_array({3, 4}, r), random_array({4}, r)}; },
         [](const auto& p) { return add_bias(p[0], p[1]); }},
        {"scale", [](Rng& r) { return std::vector{random_array({4}, r)}; },
         [](const auto& p) { return scale(p[0], -1.7); }},
        {"scale_by", [](Rng& r) { return std::vector{random_array({4}, r), random_array({}, r)}; },
         [](const auto& p) { return scale_by(p[0], p[1]); }},
        {"relu", [](Rng& r) { return std::vector{away_from_zero(random_array({6}, r), 1e-3)}; },
         [](const auto& p) { return relu(p[0]); }},
        {"sigmoid", [](Rng& r) { return std::vector{random_array({6}, r, -5, 5)}; },
         [](const auto& p) { return sigmoid(p[0]); }},
        {"exp", [](Rng& r) { return std::vector{random_array({6}, r)}; }, [](const auto& p) { return exp(p[0]); }},
        {"log", [](Rng& r) { return std::vector{random_array({6}, r, 0.2, 3.0)}; },
         [](const auto& p) { return log(p[0]); }},
        {"cos", [](Rng& r) { return std::vector{random_array({6}, r, -4, 4)}; },
         [](const auto& p) { return cos(p[0]); }},
        {"acos", [](Rng& r) { return std::vector{random_array({6}, r, -0.95, 0.95)}; },
         [](const auto& p) { return acos(p[0]); }},
        {"square", [](Rng& r) { return std::vector{random_array({6}, r)}; },
         [](const auto& p) { return square(p[0]); }},
        {"sqrt", [](Rng& r) { return std::vector{random_array({6}, r, 0.1, 4.0)}; },
         [](const auto& p) { return sqrt(p[0]); }},
        {"reciprocal", [](Rng& r) { return std::vector{random_array({6}, r, 0.3, 3.0)}; },
         [](const auto& p) { return reciprocal(p[0]); }},
        {"floor_at", [](Rng& r) { return std::vector{away_from_zero(random_array({6}, r), 1e-3)}; },
         [](const auto& p) { return floor_at(p[0], 0.0); }},
        {"clamp", [](Rng& r) { return std::vector{away_from_zero(random_array({6}, r, -3, 3), 1e-3)}; },
         [](const auto& p) { return clamp(add_scalar(p[0], 0.0), -1.5, 1.5); }},
        {"softmax", [](Rng& r) { return std::vector{random_array({5}, r)}; },
         [](const auto& p) { return softmax(p[0]); }},
        {"logsumexp", [](Rng& r) { return std::vector{random_array({5}, r)}; },
         [](const auto& p) { return logsumexp(p[0]); }},
        {"norm", [](Rng& r) { return std::vector{random_array({5}, r)}; }, [](const auto& p) { return norm(p[0]); }},
        {"normalize", [](Rng& r) { return std::vector{random_array({5}, r)}; },
         [](const auto& p) { return normalize(p[0]); }},
        {"row_norms", [](Rng& r) { return std::vector{random_array({3, 4}, r)}; },
         [](const auto& p) { return row_norms(p[0]); }},
        {"normalize_rows", [](Rng& r) { return std::vector{random_array({3, 4}, r)}; },
         [](const auto& p) { return normalize_rows(p[0]); }},
        {"dot", [](Rng& r) { return std::vector{random_array({5}, r), random_array({5}, r)}; },
         [](const auto& p) { return dot(p[0], p[1]); }},
        {"sum", [](Rng& r) { return std::vector{random_array({2, 3}, r)}; }, [](const auto& p) { return sum(p[0]); }},
        {"mean", [](Rng& r) { return std::vector{random_array({2, 3}, r)}; },
         [](const auto& p) { return mean(p[0]); }},
        {"concat", [](Rng& r) { return std::vector{random_array({2}, r), random_array({3}, r)}; },
         [](const auto& p) { return concat({p[0], p[1]}); }},
        {"stack_rows", [](Rng& r) { return std::vector{random_array({3}, r), random_array({3}, r)}; },
         [](const auto& p) { return stack_rows({p[0], p[1]}); }},
        {"concat_rows", [](Rng& r) { return std::vector{random_array({2, 3}, r), random_array({1, 3}, r)}; },
         [](const auto& p) { return concat_rows({p[0], p[1]}); }},
        {"pick", [](Rng& r) { return std::vector{random_array({4}, r)}; }, [](const auto& p) { return pick(p[0], 2); }},
        {"reshape", [](Rng& r) { return std::vector{random_array({2, 3}, r)}; },
         [](const auto& p) { return reshape(p[0], Shape{3, 2}); }},
        {"pairwise_sq_dist", [](Rng& r) { return std::vector{random_array({4, 3}, r)}; },
         [](const auto& p) { return pairwise_sq_dist(p[0]); }},
    };

    Rng rng = make_stream(20240601);
    for (const auto& c : cases) {
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            auto report = grad_check_at([&](const std::vector<Var>& p) { return weighted_sum(c.op(p)); },
                                        c.point(rng), 1e-5, 1e-4);
            worst = std::max(worst, report.max_rel_error);
            ASSERT_TRUE(report.passed) << c.name << " trial " << trial << ": " << report.worst;
        }
        RecordProperty(c.name, std::to_string(worst));
    }
}
