#include "dkf/dkf.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

using namespace dkf;
using testing_support::random_matrix;
using testing_support::random_spd;
using testing_support::uniform_int;

namespace {

/// Time-invariant model with per-sensor H, R, B; f and noises unused.
SystemModel constant_model(const Mat& A_bar, const Mat& G_bar, const std::vector<Mat>& H, const std::vector<Mat>& R,
                           const std::vector<Mat>& B) {
    SystemModel m;
    m.n = static_cast<int>(A_bar.rows());
    m.p = static_cast<int>(G_bar.cols());
    for (const auto& h : H) {
        m.m.push_back(static_cast<int>(h.rows()));
    }
    m.A_bar = [A_bar](int) { return A_bar; };
    m.G_bar = [G_bar](int) { return G_bar; };
    m.H_bar = [H](int, int i) { return H[static_cast<std::size_t>(i)]; };
    m.R = [R](int, int i) { return R[static_cast<std::size_t>(i)]; };
    m.B = [B](int, int i) { return B[static_cast<std::size_t>(i)]; };
    const int n = m.n;
    const int p = m.p;
    m.Q = [n](int) { return Mat::Identity(n, n); };
    m.Q_hat = [p](int) { return Mat::Identity(p, p); };
    return m;
}

SystemModel example_model() {
    Mat a(2, 2);
    a << 1, 1, 0, 2;
    Mat g(2, 1);
    g << 1, 1;
    Mat h1(1, 2);
    h1 << 1, 0;
    Mat h2(1, 2);
    h2 << 0, 1;
    Mat h3(1, 2);
    h3 << 1, 1;
    const Mat one = Mat::Identity(1, 1);
    return constant_model(a, g, {h1, h2, h3}, {one, one, one}, {one, one, one});
}

/// Reachability by Warshall closure.
bool closure_strongly_connected(const Mat& adj) {
    const auto n = adj.rows();
    std::vector<std::vector<bool>> r(static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(n)));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            r[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = i == j || adj(i, j) > 0.0;
        }
    }
    for (std::size_t k = 0; k < static_cast<std::size_t>(n); ++k) {
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
            for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) {
                if (r[i][k] && r[k][j]) {
                    r[i][j] = true;
                }
            }
        }
    }
    for (const auto& row : r) {
        for (bool b : row) {
            if (!b) {
                return false;
            }
        }
    }
    return true;
}

Mat random_stochastic(Rng& rng, int n, double density) {
    Mat a = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        a(i, i) = dkf::uniform(0.1, 1.0, rng);
        for (int j = 0; j < n; ++j) {
            if (i != j && dkf::uniform(0.0, 1.0, rng) < density) {
                a(i, j) = dkf::uniform(0.1, 1.0, rng);
            }
        }
        a.row(i) /= a.row(i).sum();
    }
    return a;
}

}  // namespace

// ---------------------------------------------------------------- extended model

TEST(ExtendedModel, ExampleBlocks) {
    const auto ext = build_extended_model(example_model());
    Mat expected(3, 3);
    expected << 1, 1, 1, 0, 2, 1, 0, 0, 1;
    EXPECT_EQ(ext.A(0), expected);
    Mat h(1, 3);
    h << 1, 0, 0;
    EXPECT_EQ(ext.H(0, 0), h);
    Mat d(3, 1);
    d << 0, 0, 1;
    EXPECT_EQ(ext.D(), d);
}

TEST(ExtendedModel, NoUncertaintyIsOriginal) {
    Mat a(2, 2);
    a << 0.9, 0.1, 0, 1.1;
    Mat h(1, 2);
    h << 1, 2;
    const auto ext = build_extended_model(constant_model(a, Mat(2, 0), {h}, {Mat::Identity(1, 1)}, {Mat::Zero(1, 1)}));
    EXPECT_EQ(ext.A(3), a);
    EXPECT_EQ(ext.H(3, 0), h);
    EXPECT_EQ(ext.D().cols(), 0);
    EXPECT_EQ(ext.Q_bar(0), Mat::Zero(2, 2));
}

TEST(ExtendedModel, BlocksRecoverInputsExactly) {
    Rng rng = keyed_stream(11, StreamTag::battery, {});
    for (int t = 0; t < 50; ++t) {
        const int n = uniform_int(rng, 1, 4);
        const int p = uniform_int(rng, 1, 3);
        const Mat a = random_matrix(rng, n, n);
        const Mat g = random_matrix(rng, n, p);
        const Mat h = random_matrix(rng, 2, n);
        auto sys = constant_model(a, g, {h}, {Mat::Identity(2, 2)}, {Mat::Zero(2, 2)});
        const Mat qh = random_spd(rng, p, 0.1, 2.0);
        sys.Q_hat = [qh](int) { return qh; };
        const auto ext = build_extended_model(sys);
        const Mat A = ext.A(0);
        EXPECT_EQ(A.topLeftCorner(n, n), a);
        EXPECT_EQ(A.topRightCorner(n, p), g);
        EXPECT_EQ(A.bottomLeftCorner(p, n), Mat::Zero(p, n));
        EXPECT_EQ(A.bottomRightCorner(p, p), Mat::Identity(p, p));
        EXPECT_EQ(ext.H(0, 0).leftCols(n), h);
        EXPECT_EQ(ext.H(0, 0).rightCols(p), Mat::Zero(2, p));
        EXPECT_EQ(ext.Q_bar(0).bottomRightCorner(p, p), qh);
        EXPECT_EQ(ext.Q_tilde(0).topLeftCorner(n, n), Mat::Identity(n, n));
    }
}

TEST(ExtendedModel, RejectsInconsistentDimensions) {
    Mat a = Mat::Identity(2, 2);
    Mat h(1, 3);
    h.setOnes();
    EXPECT_THROW(build_extended_model(constant_model(a, Mat(2, 0), {h}, {Mat::Identity(1, 1)}, {Mat::Zero(1, 1)})),
                 ValidationError);
}

TEST(Transition, IdentityAndComposition) {
    const auto ext = build_extended_model(example_model());
    EXPECT_EQ(transition(ext, 4, 4), Mat::Identity(3, 3));
    EXPECT_TRUE(transition(ext, 5, 1).isApprox(transition(ext, 5, 3) * transition(ext, 3, 1), 1e-14));
    const auto& sys = ext.original();
    const Mat phi = transition(ext, 6, 2);
    EXPECT_TRUE(phi.topLeftCorner(2, 2).isApprox(transition_bar(sys, 6, 2), 1e-14));
    EXPECT_TRUE(phi.topRightCorner(2, 1).isApprox(transition_coupling(sys, 6, 2), 1e-14));
}

// ---------------------------------------------------------------- observability

TEST(Observability, ExampleMarginsAndRank) {
    const auto ext = build_extended_model(example_model());
    const auto rep = check_collective_observability(ext, 0, 10, 2.0);
    EXPECT_GT(rep.margin1, 5.77);
    EXPECT_TRUE(rep.holds);
    Mat h(3, 2);
    h << 1, 0, 0, 1, 1, 1;
    const auto rank = check_rank_condition(ext.original().A_bar(0), ext.original().G_bar(0), h);
    EXPECT_EQ(rank.rank, 3);
    EXPECT_TRUE(rank.holds);
}

TEST(Observability, NoObservationsGivesMinusAlpha) {
    Mat a(2, 2);
    a << 1, 1, 0, 1;
    const Mat h = Mat::Zero(1, 2);
    const auto ext = build_extended_model(
        constant_model(a, Mat::Ones(2, 1), {h, h}, {Mat::Identity(1, 1), Mat::Identity(1, 1)},
                       {Mat::Zero(1, 1), Mat::Zero(1, 1)}));
    const auto rep = check_collective_observability(ext, 0, 5, 0.7);
    EXPECT_DOUBLE_EQ(rep.margin1, -0.7);
    EXPECT_FALSE(rep.holds);
}

TEST(Observability, IdentityStackHoldsIffAlphaBelowN) {
    constexpr int kSensors = 3;
    const Mat I = Mat::Identity(2, 2);
    std::vector<Mat> h(kSensors, I);
    std::vector<Mat> r(kSensors, 0.5 * I);
    std::vector<Mat> b(kSensors, 0.5 * I);
    const auto ext = build_extended_model(constant_model(I, Mat(2, 0), h, r, b));
    const auto g = observability_grammian(ext, 0, 0);
    EXPECT_TRUE(g.theta11.isApprox(kSensors * I, 1e-15));
    EXPECT_TRUE(check_collective_observability(ext, 0, 0, 2.9).holds);
    EXPECT_FALSE(check_collective_observability(ext, 0, 0, 3.1).holds);
}

TEST(Observability, MatchesBruteForceGrammian) {
    Rng rng = keyed_stream(12, StreamTag::battery, {});
    int decided = 0;
    for (int t = 0; t < 300; ++t) {
        const int n = uniform_int(rng, 1, 3);
        const int p = uniform_int(rng, 0, 2);
        const int sensors = uniform_int(rng, 1, 3);
        std::vector<Mat> h;
        std::vector<Mat> r;
        std::vector<Mat> b;
        for (int i = 0; i < sensors; ++i) {
            const int m = uniform_int(rng, 1, 2);
            h.push_back(random_matrix(rng, m, n));
            r.push_back(random_spd(rng, m, 0.2, 2.0));
            b.push_back(testing_support::random_psd(rng, m, 1.0));
        }
        auto sys = constant_model(Mat::Zero(n, n), Mat::Zero(n, p), h, r, b);
        std::vector<Mat> as;
        std::vector<Mat> gs;
        for (int k = 0; k < 6; ++k) {
            as.push_back(random_matrix(rng, n, n) + Mat::Identity(n, n));
            gs.push_back(random_matrix(rng, n, p));
        }
        sys.A_bar = [as](int k) { return as[static_cast<std::size_t>(k)]; };
        sys.G_bar = [gs](int k) { return gs[static_cast<std::size_t>(k)]; };
        const auto ext = build_extended_model(sys);
        const int window = uniform_int(rng, 0, 4);
        const int k0 = uniform_int(rng, 0, 5 - window);
        const double alpha = dkf::uniform(0.01, 3.0, rng);

        Mat oracle = Mat::Zero(n + p, n + p);
        for (int j = k0; j <= k0 + window; ++j) {
            Mat phi = Mat::Identity(n + p, n + p);
            for (int s = k0; s < j; ++s) {
                phi = ext.A(s) * phi;
            }
            for (int i = 0; i < sensors; ++i) {
                const Mat hp = ext.H(j, i) * phi;
                oracle += hp.transpose() * (r[static_cast<std::size_t>(i)] + b[static_cast<std::size_t>(i)]).inverse() *
                          hp;
            }
        }
        const auto rep = check_collective_observability(ext, k0, window, alpha);
        const Mat got = rep.grammian.assembled();
        EXPECT_LE((got - oracle).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, oracle.cwiseAbs().maxCoeff()));
        const double lam = lambda_min(symmetrize(oracle) - alpha * Mat::Identity(n + p, n + p));
        if (std::abs(lam) > 1e-6) {
            ++decided;
            EXPECT_EQ(rep.holds, lam > 0.0) << "case " << t << " lambda " << lam;
        }
    }
    EXPECT_GT(decided, 250);
}

TEST(RankCondition, Examples) {
    Mat a(2, 2);
    a << 1, 0.5, 0, 0.3;
    const auto fails = check_rank_condition(a, Mat::Zero(2, 1), Mat::Identity(2, 2));
    EXPECT_FALSE(fails.holds);
    Mat half(1, 1);
    half << 0.5;
    const auto scalar = check_rank_condition(half, Mat(1, 0), Mat::Identity(1, 1));
    EXPECT_EQ(scalar.rank, 1);
    EXPECT_TRUE(scalar.holds);
}

// ---------------------------------------------------------------- supporting sequences

TEST(Lss, ConstantNonsingularGreedySpacing) {
    std::vector<Mat> seq(20, Mat::Identity(2, 2));
    const auto r = find_lss(seq, 3, 0.5);
    ASSERT_EQ(r.times.size(), 6u);
    for (std::size_t l = 0; l < r.times.size(); ++l) {
        EXPECT_EQ(r.times[l], 3 * static_cast<int>(l));
    }
    EXPECT_EQ(r.sup_gap, 3);
}

TEST(Lss, SingularTailSchedule) {
    const auto model = to_system_model(preset("sec63"));
    const auto r = find_lss(model.A_bar, 40, 8, 1e-6);
    ASSERT_GE(r.times.size(), 3u);
    EXPECT_EQ(r.times[0], 0);
    EXPECT_EQ(r.times[1], 10);
    EXPECT_EQ(r.times[2], 20);
}

TEST(Lss, AllZeroIsEmptyWithDiagnostic) {
    const auto r = find_lss(std::vector<Mat>(10, Mat::Zero(2, 2)), 2, 1e-8);
    EXPECT_FALSE(r.found());
    EXPECT_FALSE(r.diagnostic.empty());
}

TEST(Lss, WindowsSatisfyThresholdAndSpacing) {
    Rng rng = keyed_stream(13, StreamTag::battery, {});
    for (int t = 0; t < 100; ++t) {
        const int n = uniform_int(rng, 1, 3);
        std::vector<Mat> seq;
        for (int k = 0; k < 60; ++k) {
            Mat a = random_matrix(rng, n, n);
            if (dkf::uniform(0.0, 1.0, rng) < 0.15) {
                a.row(0).setZero();
            }
            seq.push_back(a);
        }
        const int L = uniform_int(rng, 1, 5);
        const double beta = 1e-3;
        const auto r = find_lss(seq, L, beta);
        for (std::size_t l = 0; l < r.times.size(); ++l) {
            for (int s = 0; s < L; ++s) {
                const Mat& a = seq[static_cast<std::size_t>(r.times[l] + s)];
                EXPECT_GE(lambda_min(a * a.transpose()), beta);
            }
            if (l > 0) {
                EXPECT_GE(r.times[l] - r.times[l - 1], L);
            }
        }
    }
}

TEST(Lss, ExtendedAndOriginalSequencesAgree) {
    Rng rng = keyed_stream(14, StreamTag::battery, {});
    for (int t = 0; t < 100; ++t) {
        const int n = uniform_int(rng, 1, 3);
        const int p = uniform_int(rng, 1, 2);
        std::vector<Mat> bar;
        std::vector<Mat> ext;
        double gmax = 0.0;
        for (int k = 0; k < 40; ++k) {
            Mat a = random_matrix(rng, n, n);
            if (dkf::uniform(0.0, 1.0, rng) < 0.2) {
                a.row(0).setZero();
            }
            const Mat g = random_matrix(rng, n, p);
            Eigen::JacobiSVD<Mat> svd(g);
            gmax = std::max(gmax, svd.singularValues()(0));
            Mat big = Mat::Zero(n + p, n + p);
            big.topLeftCorner(n, n) = a;
            big.topRightCorner(n, p) = g;
            big.bottomRightCorner(p, p).setIdentity();
            bar.push_back(a);
            ext.push_back(big);
        }
        const int L = uniform_int(rng, 1, 4);
        const double beta = dkf::uniform(1e-3, 2.0, rng);
        const double reduced = std::min(beta, 1.0) / ((1.0 + gmax) * (1.0 + gmax));
        // an L-SS of the extended sequence is one of the original at the same beta
        if (find_lss(ext, L, beta).found()) {
            EXPECT_TRUE(find_lss(bar, L, beta).found());
        }
        // and conversely at the reduced threshold
        if (find_lss(bar, L, beta).found()) {
            EXPECT_TRUE(find_lss(ext, L, reduced).found());
        }
        for (std::size_t k = 0; k < bar.size(); ++k) {
            const double lb = lambda_min(bar[k] * bar[k].transpose());
            const double le = lambda_min(ext[k] * ext[k].transpose());
            EXPECT_GE(lb, le - 1e-12);
            EXPECT_GE(le, std::min(lb, 1.0) / ((1.0 + gmax) * (1.0 + gmax)) - 1e-12);
        }
    }
}

// ---------------------------------------------------------------- topology

TEST(Digraph, RejectsInvalidAdjacency) {
    Mat a(2, 2);
    a << 0.5, 0.4, 0.5, 0.5;
    EXPECT_THROW(Digraph{a}, ValidationError);
    a << 0, 1, 0.5, 0.5;
    EXPECT_THROW(Digraph{a}, ValidationError);
    a << 1.2, -0.2, 0.5, 0.5;
    EXPECT_THROW(Digraph{a}, ValidationError);
    EXPECT_THROW(Digraph{Mat::Identity(2, 3)}, ValidationError);
    a << 0.5, 0.5, 0.5, 0.5;
    EXPECT_NO_THROW(Digraph{a});
}

TEST(Digraph, RowStochasticCheckMatchesDefinition) {
    Rng rng = keyed_stream(15, StreamTag::battery, {});
    for (int t = 0; t < 500; ++t) {
        const int n = uniform_int(rng, 1, 5);
        Mat a = random_stochastic(rng, n, 0.5);
        const int mode = uniform_int(rng, 0, 3);
        const int i = uniform_int(rng, 0, n - 1);
        bool valid = true;
        if (mode == 1) {
            a.row(i) *= 0.9;
            valid = false;
        } else if (mode == 2) {
            a(i, i) = 0.0;
            a.row(i) /= a.row(i).sum() > 0 ? a.row(i).sum() : 1.0;
            valid = false;
        }
        EXPECT_EQ(!Digraph::check(a).has_value(), valid) << a;
    }
}

TEST(Topology, SwitchingSignal) {
    const auto c = preset("sec61");
    const auto topo = to_topology(c);
    EXPECT_EQ(topo.sigma(0), 1);
    EXPECT_EQ(topo.sigma(5), 2);
    EXPECT_EQ(topo.sigma(7), 2);
    EXPECT_EQ(topo.sigma(14), 3);
    EXPECT_EQ(topo.adjacency_at(14).adjacency(), c.graphs[2]);
    EXPECT_EQ(topo.dwell_boundaries(20), (std::vector<int>{0, 5, 10, 15, 20}));
}

TEST(Topology, StrongConnectivityExamples) {
    Mat cycle(3, 3);
    cycle << 0.5, 0, 0.5, 0.5, 0.5, 0, 0, 0.5, 0.5;
    EXPECT_TRUE(is_strongly_connected(Digraph{cycle}));
    EXPECT_FALSE(is_strongly_connected(Digraph{Mat::Identity(2, 2)}));
    const auto c = preset("sec61");
    const Digraph g1{c.graphs[0]};
    const Digraph g2{c.graphs[1]};
    const Digraph g3{c.graphs[2]};
    EXPECT_TRUE(is_strongly_connected(union_graph({&g1, &g2, &g3})));
    for (const auto& g : c.graphs) {
        EXPECT_FALSE(is_strongly_connected(Digraph{g}));
    }
}

TEST(Topology, StrongConnectivityMatchesClosureOracle) {
    Rng rng = keyed_stream(16, StreamTag::battery, {});
    int connected = 0;
    for (int t = 0; t < 1000; ++t) {
        const int n = uniform_int(rng, 1, 6);
        const Mat a = random_stochastic(rng, n, dkf::uniform(0.05, 0.6, rng));
        const bool oracle = closure_strongly_connected(a);
        connected += oracle ? 1 : 0;
        EXPECT_EQ(is_strongly_connected(Digraph{a}), oracle) << a;
    }
    EXPECT_GT(connected, 100);
    EXPECT_LT(connected, 900);
}

TEST(Topology, UnionEdgeSetIsSetUnion) {
    Rng rng = keyed_stream(17, StreamTag::battery, {});
    for (int t = 0; t < 200; ++t) {
        const int n = uniform_int(rng, 1, 6);
        const Digraph a{random_stochastic(rng, n, 0.3)};
        const Digraph b{random_stochastic(rng, n, 0.3)};
        const Digraph u = union_graph(a, b);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                EXPECT_EQ(u.has_edge(i, j), a.has_edge(i, j) || b.has_edge(i, j));
            }
        }
    }
}

TEST(Topology, JointConnectivityMatchesOracle) {
    const auto c = preset("sec61");
    const auto topo = to_topology(c);
    const int horizon = 300;
    const auto rep = check_joint_connectivity(topo, horizon, uniform_endpoints(horizon, 5));
    bool any_fail = false;
    for (const auto& iv : rep.intervals) {
        Mat u = Mat::Zero(4, 4);
        for (int k = iv.begin; k <= std::min(iv.end, horizon - 1); ++k) {
            u += topo.adjacency_at(k).adjacency();
        }
        EXPECT_EQ(iv.connected, closure_strongly_connected(u)) << "[" << iv.begin << "," << iv.end << ")";
        any_fail = any_fail || !iv.connected;
    }
    // graphs 1 and 2 together never reach nodes 1 and 2 from nodes 3 and 4
    EXPECT_TRUE(any_fail);

    const auto k0 = joint_connectivity_bound(topo, horizon);
    ASSERT_TRUE(k0.has_value());
    EXPECT_TRUE(check_joint_connectivity(topo, horizon, uniform_endpoints(horizon, *k0)).all_pass());
    EXPECT_FALSE(check_joint_connectivity(topo, horizon, uniform_endpoints(horizon, *k0 - 1)).all_pass());
    EXPECT_LE(*k0, 15);
}

TEST(Topology, SingleDisconnectedGraphFailsEverywhere) {
    const TopologySchedule topo({Digraph{Mat::Identity(3, 3)}}, [](int) { return 1; });
    const auto rep = check_joint_connectivity(topo, 20, uniform_endpoints(20, 4));
    EXPECT_EQ(rep.failures().size(), rep.intervals.size());
    EXPECT_FALSE(joint_connectivity_bound(topo, 20).has_value());
}

TEST(Topology, AlternatingHalvesOfARing) {
    Mat a(4, 4);
    a << 0.5, 0.5, 0, 0, 0, 1, 0, 0, 0, 0, 0.5, 0.5, 0, 0, 0, 1;
    Mat b(4, 4);
    b << 1, 0, 0, 0, 0, 0.5, 0.5, 0, 0, 0, 1, 0, 0.5, 0, 0, 0.5;
    const TopologySchedule topo({Digraph{a}, Digraph{b}}, [](int k) { return k % 2 + 1; });
    EXPECT_FALSE(is_strongly_connected(Digraph{a}));
    EXPECT_FALSE(is_strongly_connected(Digraph{b}));
    EXPECT_TRUE(check_joint_connectivity(topo, 40, uniform_endpoints(40, 2)).all_pass());
}

TEST(Topology, SigmaOutOfRangeIsRejected) {
    const TopologySchedule topo({Digraph{Mat::Identity(2, 2)}}, [](int k) { return k; });
    EXPECT_THROW((void)topo.sigma(0), ValidationError);
    EXPECT_THROW((void)topo.sigma(2), ValidationError);
    EXPECT_EQ(topo.sigma(1), 1);
}
