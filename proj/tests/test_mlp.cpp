#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "seqgoal/mlp.hpp"
#include "seqgoal/rng.hpp"

using namespace seqgoal;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Straight-line forward pass, independent of the library implementation.
std::vector<double> oracle_forward(const Mlp& net, const std::vector<double>& input,
                                   OutputActivation out_act) {
    std::vector<double> a = input;
    for (int k = 0; k < net.num_layers(); ++k) {
        const int rows = static_cast<int>(net.w[k].rows());
        const int cols = static_cast<int>(net.w[k].cols());
        std::vector<double> next(rows, 0.0);
        for (int i = 0; i < rows; ++i) {
            double acc = net.b[k][i];
            for (int j = 0; j < cols; ++j) acc += net.w[k](i, j) * a[j];
            if (k + 1 < net.num_layers())
                acc = std::max(0.0, acc);
            else if (out_act == OutputActivation::kTanh)
                acc = std::tanh(acc);
            next[i] = acc;
        }
        a = std::move(next);
    }
    return a;
}

double upstream_dot_output(const Mlp& net, const VectorXd& input, const VectorXd& upstream,
                           OutputActivation act) {
    return upstream.dot(mlp_forward(net, input, act));
}

VectorXd random_vector(int n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
    return v;
}

}  // namespace

TEST(MlpForward, ZeroNetworkGivesZeroOutput) {
    Mlp net = make_mlp({3, 5, 2});
    const VectorXd out = mlp_forward(net, VectorXd::Constant(3, 7.5), OutputActivation::kIdentity);
    EXPECT_EQ(out, VectorXd::Zero(2));
}

TEST(MlpForward, SingleAffineLayer) {
    Mlp net = make_mlp({2, 1});
    net.w[0] << 1.0, 1.0;
    VectorXd in(2);
    in << 3.0, -5.0;
    const VectorXd out = mlp_forward(net, in, OutputActivation::kIdentity);
    EXPECT_DOUBLE_EQ(out[0], -2.0);
}

TEST(MlpForward, MatchesIndependentOracle) {
    Rng rng(101);
    Mlp net = make_mlp_random({4, 8, 1}, rng);
    for (int trial = 0; trial < 20; ++trial) {
        const VectorXd x = random_vector(4, rng, -2.0, 2.0);
        for (auto act : {OutputActivation::kIdentity, OutputActivation::kTanh}) {
            const VectorXd got = mlp_forward(net, x, act);
            const auto want = oracle_forward(net, {x[0], x[1], x[2], x[3]}, act);
            ASSERT_EQ(want.size(), 1u);
            EXPECT_NEAR(got[0], want[0], 1e-12);
        }
    }
}

TEST(MlpForward, DeterministicBitIdentical) {
    Rng rng(7);
    Mlp net = make_mlp_random({5, 16, 16, 3}, rng);
    const VectorXd x = random_vector(5, rng);
    const VectorXd a = mlp_forward(net, x, OutputActivation::kTanh);
    const VectorXd b = mlp_forward(net, x, OutputActivation::kTanh);
    for (int i = 0; i < 3; ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(MlpForward, BatchAgreesWithPerColumn) {
    Rng rng(11);
    Mlp net = make_mlp_random({4, 12, 2}, rng);
    MatrixXd batch(4, 9);
    for (int c = 0; c < batch.cols(); ++c) batch.col(c) = random_vector(4, rng);
    ForwardCache cache;
    const MatrixXd out = mlp_forward_batch(net, batch, OutputActivation::kTanh, cache);
    for (int c = 0; c < batch.cols(); ++c) {
        const VectorXd single = mlp_forward(net, batch.col(c), OutputActivation::kTanh);
        EXPECT_LT((out.col(c) - single).cwiseAbs().maxCoeff(), 1e-14);
    }
}

TEST(MlpForward, DimensionMismatchThrows) {
    Mlp net = make_mlp({3, 4, 1});
    EXPECT_THROW(mlp_forward(net, VectorXd::Zero(2), OutputActivation::kIdentity),
                 std::invalid_argument);
}

TEST(MlpBackward, ZeroUpstreamGivesZeroGradients) {
    Rng rng(3);
    Mlp net = make_mlp_random({3, 8, 2}, rng);
    const GradientSet g = mlp_backward(net, random_vector(3, rng), VectorXd::Zero(2),
                                       OutputActivation::kIdentity);
    for (const auto& m : g.w) EXPECT_EQ(m, MatrixXd::Zero(m.rows(), m.cols()));
    for (const auto& v : g.b) EXPECT_EQ(v, VectorXd::Zero(v.size()));
}

TEST(MlpBackward, ScalarChainRule) {
    Mlp net = make_mlp({1, 1});
    net.w[0](0, 0) = 0.37;
    VectorXd x(1), up(1);
    x << 2.25;
    up << 1.0;
    VectorXd input_grad;
    const GradientSet g = mlp_backward(net, x, up, OutputActivation::kIdentity, &input_grad);
    EXPECT_DOUBLE_EQ(g.w[0](0, 0), 2.25);   // d/dw = x
    EXPECT_DOUBLE_EQ(g.b[0][0], 1.0);       // d/db = 1
    EXPECT_DOUBLE_EQ(input_grad[0], 0.37);  // d/dx = w
}

// Central finite differences against the analytic gradients, including the
// input gradient. 1e-4 relative tolerance with a 1e-6 absolute floor.
TEST(MlpBackward, FiniteDifferenceOracle) {
    Rng rng(42);
    const double h = 1e-5;
    Mlp net = make_mlp_random({3, 16, 2}, rng);
    const VectorXd x = random_vector(3, rng);
    const VectorXd up = random_vector(2, rng);
    for (auto act : {OutputActivation::kIdentity, OutputActivation::kTanh}) {
        VectorXd input_grad;
        const GradientSet g = mlp_backward(net, x, up, act, &input_grad);
        for (int k = 0; k < net.num_layers(); ++k) {
            for (Eigen::Index i = 0; i < net.w[k].size(); ++i) {
                Mlp probe = net;
                probe.w[k].data()[i] += h;
                const double fp = upstream_dot_output(probe, x, up, act);
                probe.w[k].data()[i] -= 2 * h;
                const double fm = upstream_dot_output(probe, x, up, act);
                const double fd = (fp - fm) / (2 * h);
                const double tol = 1e-4 * std::max(std::abs(fd), 1e-2);
                ASSERT_NEAR(g.w[k].data()[i], fd, tol);
            }
        }
        for (int i = 0; i < 3; ++i) {
            VectorXd xp = x, xm = x;
            xp[i] += h;
            xm[i] -= h;
            const double fd =
                (upstream_dot_output(net, xp, up, act) - upstream_dot_output(net, xm, up, act)) /
                (2 * h);
            ASSERT_NEAR(input_grad[i], fd, 1e-4 * std::max(std::abs(fd), 1e-2));
        }
    }
}

// Spec property: >=100 random (network, input) pairs, every parameter within
// 1e-4 relative (1e-6 absolute floor) of central differences.
TEST(MlpBackward, GradCheckHundredRandomNetworks) {
    Rng rng(2024);
    const double h = 1e-5;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<int> sizes;
        sizes.push_back(rng.uniform_int(1, 5));
        const int hidden = rng.uniform_int(1, 2);
        for (int i = 0; i < hidden; ++i) sizes.push_back(rng.uniform_int(2, 12));
        sizes.push_back(rng.uniform_int(1, 3));
        Mlp net = make_mlp_random(sizes, rng);
        const VectorXd x = random_vector(sizes.front(), rng, -1.5, 1.5);
        const VectorXd up = random_vector(sizes.back(), rng);
        const auto act = (trial % 2 == 0) ? OutputActivation::kIdentity : OutputActivation::kTanh;
        const GradientSet g = mlp_backward(net, x, up, act);
        for (int k = 0; k < net.num_layers(); ++k) {
            for (Eigen::Index i = 0; i < net.w[k].size(); ++i) {
                Mlp probe = net;
                probe.w[k].data()[i] += h;
                const double fp = upstream_dot_output(probe, x, up, act);
                probe.w[k].data()[i] -= 2 * h;
                const double fm = upstream_dot_output(probe, x, up, act);
                const double fd = (fp - fm) / (2 * h);
                const double err = std::abs(g.w[k].data()[i] - fd);
                ASSERT_LE(err, 1e-4 * std::abs(fd) + 1e-6)
                    << "trial " << trial << " layer " << k << " param " << i;
            }
            for (Eigen::Index i = 0; i < net.b[k].size(); ++i) {
                Mlp probe = net;
                probe.b[k][i] += h;
                const double fp = upstream_dot_output(probe, x, up, act);
                probe.b[k][i] -= 2 * h;
                const double fm = upstream_dot_output(probe, x, up, act);
                const double fd = (fp - fm) / (2 * h);
                const double err = std::abs(g.b[k][i] - fd);
                ASSERT_LE(err, 1e-4 * std::abs(fd) + 1e-6);
            }
        }
    }
}

TEST(Adam, ZeroGradientsAreIdentityOnWeights) {
    Rng rng(5);
    Mlp net = make_mlp_random({2, 6, 1}, rng);
    const Mlp before = net;
    GradientSet g;
    resize_like(g, net);
    for (auto& m : g.w) m.setZero();
    for (auto& v : g.b) v.setZero();
    for (int step = 0; step < 10; ++step) EXPECT_TRUE(adam_step(net, g, 1e-2));
    for (int k = 0; k < net.num_layers(); ++k) {
        EXPECT_EQ(net.w[k], before.w[k]);
        EXPECT_EQ(net.b[k], before.b[k]);
        EXPECT_EQ(net.adam_mw[k], MatrixXd::Zero(net.w[k].rows(), net.w[k].cols()));
    }
    EXPECT_EQ(net.adam_t, 10);
}

// Closed-form identity for step 1: m_hat/sqrt(v_hat) = g/|g|, so the delta is
// -lr * sign(g) up to eps rounding.
TEST(Adam, FirstStepMovesBySignTimesLr) {
    for (double g0 : {0.003, -1.7, 250.0}) {
        Mlp net = make_mlp({1, 1});
        net.w[0](0, 0) = 1.0;
        GradientSet g;
        resize_like(g, net);
        g.w[0](0, 0) = g0;
        g.b[0][0] = 0.0;
        const double lr = 1e-3;
        ASSERT_TRUE(adam_step(net, g, lr));
        const double delta = net.w[0](0, 0) - 1.0;
        EXPECT_NEAR(delta, -lr * (g0 > 0 ? 1.0 : -1.0), lr * 1e-4);
        EXPECT_EQ(net.adam_t, 1);
    }
}

// Two fixed scalar steps against a straight-line Adam trace computed here.
TEST(Adam, TwoStepHandTrace) {
    const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double g1 = 0.5, g2 = -0.25;
    double w = 2.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 2; ++t) {
        const double g = (t == 1) ? g1 : g2;
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        w -= lr * mh / (std::sqrt(vh) + eps);
    }

    Mlp net = make_mlp({1, 1});
    net.w[0](0, 0) = 2.0;
    GradientSet g;
    resize_like(g, net);
    g.b[0][0] = 0.0;
    g.w[0](0, 0) = g1;
    ASSERT_TRUE(adam_step(net, g, lr, b1, b2, eps));
    g.w[0](0, 0) = g2;
    ASSERT_TRUE(adam_step(net, g, lr, b1, b2, eps));
    EXPECT_NEAR(net.w[0](0, 0), w, 1e-15);
}

TEST(Adam, NonFiniteGradientsRejectStep) {
    Rng rng(9);
    Mlp net = make_mlp_random({2, 4, 1}, rng);
    const Mlp before = net;
    GradientSet g;
    resize_like(g, net);
    for (auto& m : g.w) m.setConstant(1.0);
    for (auto& v : g.b) v.setConstant(1.0);
    g.w[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_FALSE(adam_step(net, g, 1e-3));
    EXPECT_EQ(net.adam_t, before.adam_t);
    for (int k = 0; k < net.num_layers(); ++k) EXPECT_EQ(net.w[k], before.w[k]);
}

TEST(Polyak, EndpointAndMidpoint) {
    Rng rng(13);
    const Mlp source = make_mlp_random({3, 8, 2}, rng);
    Mlp target = make_mlp({3, 8, 2});

    Mlp t1 = target;
    polyak_update(t1, source, 1.0);
    for (int k = 0; k < t1.num_layers(); ++k) {
        EXPECT_EQ(t1.w[k], source.w[k]);
        EXPECT_EQ(t1.b[k], source.b[k]);
    }
    const VectorXd x = random_vector(3, rng);
    EXPECT_EQ(mlp_forward(t1, x, OutputActivation::kTanh),
              mlp_forward(source, x, OutputActivation::kTanh));

    Mlp t0 = target;
    polyak_update(t0, source, 0.0);
    for (int k = 0; k < t0.num_layers(); ++k) EXPECT_EQ(t0.w[k], target.w[k]);

    Mlp th = target;  // target starts at zero, so the midpoint is source / 2
    polyak_update(th, source, 0.5);
    for (int k = 0; k < th.num_layers(); ++k)
        EXPECT_LT((th.w[k] - 0.5 * source.w[k]).cwiseAbs().maxCoeff(), 1e-16);

    Mlp bad = make_mlp({3, 9, 2});
    EXPECT_THROW(polyak_update(bad, source, 0.5), std::invalid_argument);
}

TEST(Checkpoint, RoundTripBitExact) {
    Rng rng(77);
    Mlp net = make_mlp_random({4, 32, 32, 2}, rng);
    GradientSet g;
    resize_like(g, net);
    for (auto& m : g.w) m.setConstant(0.01);
    for (auto& v : g.b) v.setConstant(-0.02);
    adam_step(net, g, 1e-3);

    std::stringstream ss;
    save_mlp(net, ss);
    const Mlp back = load_mlp(ss);
    ASSERT_EQ(back.layer_sizes, net.layer_sizes);
    EXPECT_EQ(back.adam_t, net.adam_t);
    for (int k = 0; k < net.num_layers(); ++k) {
        EXPECT_EQ(back.w[k], net.w[k]);
        EXPECT_EQ(back.b[k], net.b[k]);
        EXPECT_EQ(back.adam_vw[k], net.adam_vw[k]);
    }
    const VectorXd x = random_vector(4, rng);
    EXPECT_EQ(mlp_forward(back, x, OutputActivation::kTanh),
              mlp_forward(net, x, OutputActivation::kTanh));
}

TEST(Checkpoint, BadMagicThrows) {
    std::stringstream ss;
    ss << "not a checkpoint";
    EXPECT_THROW(load_mlp(ss), std::runtime_error);
}
