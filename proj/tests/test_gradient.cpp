#include <gtest/gtest.h>

#include <mimosnn/mimosnn.hpp>
#include "test_support.hpp"

using namespace mimosnn;
namespace mt = mimosnn::testing;

namespace {

std::vector<VirtualEvent> events_from(std::vector<Real> z, std::vector<Real> w) {
    std::vector<VirtualEvent> ev;
    for (std::size_t i = 0; i < z.size(); ++i) ev.push_back({z[i], i, 0, w[i]});
    return ev;
}

Real first_spike(std::vector<VirtualEvent> ev, Real theta) {
    const auto r = find_next_spike(ev, 0, theta);
    return r ? r->z_out : kInf;
}

}  // namespace

TEST(SpikeGrad, SingleCausalEvent) {
    const auto ev = events_from({1}, {2});
    const auto r = *find_next_spike(ev, 0, 1.0);
    EXPECT_EQ(spike_grad_wrt_inputs(ev, r)[0], 2.0);
    EXPECT_EQ(spike_grad_wrt_weights(ev, r)[0], -1.0);

    const Real fd_z = mt::central_difference([&](Real z) { return first_spike(events_from({z}, {2}), 1.0); }, 1.0);
    const Real fd_w = mt::central_difference([&](Real w) { return first_spike(events_from({1}, {w}), 1.0); }, 2.0);
    EXPECT_TRUE(mt::gradient_matches(2.0, fd_z));
    EXPECT_TRUE(mt::gradient_matches(-1.0, fd_w));
}

TEST(SpikeGrad, TwoCausalEvents) {
    const auto ev = events_from({1, 1.2}, {1, 1});
    const auto r = *find_next_spike(ev, 0, 1.0);
    ASSERT_EQ(r.causal, (CausalSet{0, 2}));
    const auto g = spike_grad_wrt_inputs(ev, r);
    EXPECT_EQ(g[0], 1.0);
    EXPECT_EQ(g[1], 1.0);
    for (std::size_t k = 0; k < 2; ++k) {
        const Real fd = mt::central_difference(
            [&](Real z) {
                auto e = ev;
                e[k].z = z;
                return first_spike(e, 1.0);
            },
            ev[k].z);
        EXPECT_TRUE(mt::gradient_matches(g[k], fd)) << k << ' ' << fd;
    }
}

TEST(SpikeGrad, NonCausalIsZero) {
    const auto ev = events_from({1, 10}, {2, 1});
    const auto r = *find_next_spike(ev, 0, 1.0);
    EXPECT_EQ(spike_grad_wrt_inputs(ev, r)[1], 0.0);
    EXPECT_EQ(spike_grad_wrt_weights(ev, r)[1], 0.0);
}

TEST(SpikeGrad, EventAtOutputTimeHasZeroWeightGradient) {
    const std::vector<VirtualEvent> ev{{2, 0, 0, 2}};
    SpikeRecord rec{{0, 1}, 2, 4, 1, 2};
    EXPECT_EQ(spike_grad_wrt_weights(ev, rec)[0], 0.0);
}

TEST(Projection, SumsPerChannel) {
    const std::vector<VirtualEvent> ev{{1, 0, 0, 1}, {2, 0, 1, 1}, {3, 0, 2, 1}, {4, 1, 0, 1}};
    const std::vector<Real> per{0.1, 0.2, -0.05, 0};
    const auto g = project_to_channel_weights<VirtualEvent>(per, ev, 3);
    EXPECT_NEAR(g[0], 0.25, 1e-15);
    EXPECT_EQ(g[1], 0.0);
    EXPECT_EQ(g[2], 0.0);
    const std::vector<VirtualEvent> single{{1, 0, 0, 1}, {2, 1, 0, 1}};
    const std::vector<Real> per2{0.3, -0.7};
    EXPECT_EQ(project_to_channel_weights<VirtualEvent>(per2, single, 2), per2);
}

TEST(NeuronBackward, ZeroUpstream) {
    const auto ev = events_from({1, 2}, {2, 2});
    const auto out = neuron_forward(ev, NeuronConfig(1, 0.1, 1));
    const std::vector<Real> up(out.trace.size(), 0);
    const auto g = neuron_backward(ev, out.trace, up, 2);
    for (Real v : g.d_events) EXPECT_EQ(v, 0);
    for (Real v : g.d_weights) EXPECT_EQ(v, 0);
}

TEST(NeuronBackward, UnitUpstreamGivesRawDerivatives) {
    const auto ev = events_from({1, 10}, {2, 1});
    const auto out = neuron_forward(ev, NeuronConfig(1, kInf, 1));
    ASSERT_EQ(out.trace.size(), 1u);
    const auto g = neuron_backward(ev, out.trace, std::vector<Real>{1}, 2);
    EXPECT_EQ(g.d_events, spike_grad_wrt_inputs(ev, out.trace[0]));
    EXPECT_EQ(g.d_weights, spike_grad_wrt_weights(ev, out.trace[0]));
}

TEST(NeuronBackward, DisjointSpikesHaveNoCrossTerms) {
    // two spikes, one per event, each with its own causal set
    std::vector<VirtualEvent> ev{{1, 0, 0, 2}, {10, 0, 1, 2}};
    const NeuronConfig cfg(1, 0.5, 1);
    const auto out = neuron_forward(ev, cfg);
    ASSERT_EQ(out.spikes.size(), 2u);
    const std::vector<Real> up{0.7, -1.3};
    const auto g = neuron_backward(ev, out.trace, up, 1);
    EXPECT_DOUBLE_EQ(g.d_events[0], 0.7 * 2);
    EXPECT_DOUBLE_EQ(g.d_events[1], -1.3 * 2);

    const auto loss = [&](const std::vector<VirtualEvent>& e) {
        const auto o = neuron_forward(e, cfg);
        return 0.7 * o.spikes[0] - 1.3 * o.spikes[1];
    };
    for (std::size_t k = 0; k < 2; ++k) {
        const Real fd = mt::central_difference(
            [&](Real z) {
                auto e = ev;
                e[k].z = z;
                return loss(e);
            },
            ev[k].z);
        EXPECT_TRUE(mt::gradient_matches(g.d_events[k], fd));
    }
    const Real fd_w = mt::central_difference(
        [&](Real w) {
            auto e = ev;
            for (auto& x : e) x.weight = w;
            return loss(e);
        },
        2.0);
    EXPECT_TRUE(mt::gradient_matches(g.d_weights[0], fd_w));
}

TEST(NetworkBackward, SilentOutputsGiveZeroBuffer) {
    NetworkTopology net({1, 2, 2}, NeuronConfig{});
    const std::vector<ZTrain> in{{1.0}};
    const auto fwd = network_forward_z(in, net);
    const auto g = network_backward(net, fwd, std::vector<Real>{1, 1});
    for (const auto& m : g.d_weights)
        for (Real v : m.data) EXPECT_EQ(v, 0);
    EXPECT_TRUE(g.all_finite());
    EXPECT_THROW(network_backward(net, fwd, std::vector<Real>{1}), ShapeError);
}

TEST(NetworkBackward, ChainIsProductOfFactors) {
    NetworkTopology net({1, 1, 1}, NeuronConfig(1, 0.1, 1));
    net.weights[0].data = {2};
    net.weights[1].data = {3};
    const std::vector<ZTrain> in{{1.0}};
    const auto fwd = network_forward_z(in, net);
    // z1 = 2 z0 / 1, z2 = 3 z1 / 2
    EXPECT_EQ(fwd.output_z[0], 3.0);
    const auto g = network_backward(net, fwd, std::vector<Real>{1});
    EXPECT_DOUBLE_EQ(g.d_input_z[0][0], 2.0 * 1.5);
    const Real fd = mt::central_difference(
        [&](Real z) {
            const std::vector<ZTrain> x{{z}};
            return network_forward_z(x, net).output_z[0];
        },
        1.0);
    EXPECT_TRUE(mt::gradient_matches(g.d_input_z[0][0], fd));
}

TEST(NetworkBackward, LinearInUpstream) {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const auto inst = mt::random_instance(rng);
        const auto z = mt::to_z(inst);
        const auto fwd = network_forward_z(z, inst.net);
        std::vector<Real> up(inst.net.output_size());
        for (Real& u : up) u = standard_normal(rng);
        std::vector<Real> up2 = up;
        for (Real& u : up2) u *= 0.5;  // power of two keeps the scaling exact
        const auto g1 = network_backward(inst.net, fwd, up);
        const auto g2 = network_backward(inst.net, fwd, up2);
        for (std::size_t l = 0; l < g1.d_weights.size(); ++l)
            for (std::size_t i = 0; i < g1.d_weights[l].data.size(); ++i)
                EXPECT_EQ(g2.d_weights[l].data[i], 0.5 * g1.d_weights[l].data[i]);
    }
}

TEST(NetworkBackward, MatchesFiniteDifferencesOnRandomNets) {
    Rng rng(31);
    int accepted = 0;
    for (int trial = 0; trial < 2000 && accepted < 30; ++trial) {
        const auto inst = mt::random_instance(rng);
        const auto z = mt::to_z(inst);
        const auto fwd = network_forward_z(z, inst.net);
        if (!mt::well_separated(inst.net, fwd)) continue;
        bool any = false;
        for (Real v : fwd.output_z) any = any || v < kInf;
        if (!any) continue;
        ++accepted;
        std::vector<Real> coeff(inst.net.output_size());
        for (Real& c : coeff) c = 2 * uniform01(rng) - 1;
        std::vector<Real> up(coeff.size(), 0);
        for (std::size_t p = 0; p < up.size(); ++p)
            if (fwd.output_z[p] < kInf) up[p] = coeff[p];
        const auto g = network_backward(inst.net, fwd, up);

        for (std::size_t l = 0; l < inst.net.weights.size(); ++l)
            for (std::size_t i = 0; i < inst.net.weights[l].data.size(); ++i) {
                const Real fd = mt::central_difference(
                    [&](Real w) {
                        auto net = inst.net;
                        net.weights[l].data[i] = w;
                        return mt::readout_loss(network_forward_z(z, net).output_z, coeff);
                    },
                    inst.net.weights[l].data[i]);
                EXPECT_TRUE(mt::gradient_matches(g.d_weights[l].data[i], fd))
                    << "layer " << l << " entry " << i << ": " << g.d_weights[l].data[i] << " vs " << fd;
            }
        for (std::size_t c = 0; c < z.size(); ++c)
            for (std::size_t j = 0; j < z[c].size(); ++j) {
                const Real fd = mt::central_difference(
                    [&](Real v) {
                        auto x = z;
                        x[c][j] = v;
                        return mt::readout_loss(network_forward_z(x, inst.net).output_z, coeff);
                    },
                    z[c][j]);
                const Real a = j < g.d_input_z[c].size() ? g.d_input_z[c][j] : 0;
                EXPECT_TRUE(mt::gradient_matches(a, fd)) << "input " << c << '/' << j << ": " << a << " vs " << fd;
            }
    }
    EXPECT_EQ(accepted, 30);
}

TEST(GradientBufferTest, ScaleAndAccumulate) {
    const NetworkTopology net({2, 2}, NeuronConfig{});
    auto a = GradientBuffer::zeros_like(net);
    a.d_weights[0].data = {1, 2, 3, 4};
    auto b = a;
    a += b;
    EXPECT_EQ(a.d_weights[0].data, (std::vector<Real>{2, 4, 6, 8}));
    a.scale(0.5);
    EXPECT_EQ(a.d_weights[0].data, b.d_weights[0].data);
    a.d_weights[0].data[0] = kInf;
    EXPECT_FALSE(a.all_finite());
}
