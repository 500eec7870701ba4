#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "pcc/network.hpp"
#include "pcc/rng.hpp"
#include "pcc/sim.hpp"
#include "pcc/train.hpp"

using Catch::Approx;
using namespace pcc;

namespace {

Volume random_volume(std::uint64_t seed, std::size_t side, double lo = 0.1, double hi = 1.0) {
    Volume v(side, side, side);
    rng::Stream s(seed, 71);
    for (double& x : v.voxels) x = s.uniform(lo, hi);
    return v;
}

}  // namespace

TEST_CASE("l1 loss") {
    SECTION("identical volumes score zero") {
        Volume v = random_volume(1, 8);
        REQUIRE(l1_loss(v, v) == 0.0);
    }

    SECTION("constant volumes 0.5 vs 0.6 score 0.1") {
        Volume a(4, 4, 4, 0.5), b(4, 4, 4, 0.6);
        REQUIRE(l1_loss(a, b) == Approx(0.1).margin(1e-14));
    }

    SECTION("a single gap-1 voxel among N scores 1/N") {
        Volume a(4, 4, 4, 0.3), b(4, 4, 4, 0.3);
        b.voxels[17] += 1.0;
        REQUIRE(l1_loss(a, b) == Approx(1.0 / 64.0).margin(1e-15));
    }

    SECTION("shape mismatch is rejected") {
        Volume a(4, 4, 4), b(4, 4, 8);
        REQUIRE_THROWS_AS(l1_loss(a, b), contract_error);
    }

    SECTION("tape form agrees with the plain form") {
        Volume a = random_volume(2, 6), b = random_volume(3, 6);
        Tape tape;
        Tensor ra = tape.constant({1, a.size()}, a.voxels);
        Tensor rb = tape.constant({1, b.size()}, b.voxels);
        REQUIRE(l1_loss_row(ra, rb).scalar() == Approx(l1_loss(a, b)).margin(1e-15));
    }
}

TEST_CASE("adversarial losses") {
    SECTION("both scores at one half") {
        auto [loss_d, loss_g] = gan_losses(0.5, 0.5);
        REQUIRE(loss_d == Approx(2.0 * std::log(2.0)).margin(1e-12));
        REQUIRE(loss_g == Approx(std::log(2.0)).margin(1e-12));
    }

    SECTION("a perfect discriminator drives its loss to zero") {
        auto [loss_d, loss_g] = gan_losses(1.0 - 1e-12, 1e-12);
        REQUIRE(loss_d == Approx(0.0).margin(1e-9));
        (void)loss_g;
    }

    SECTION("a perfectly fooled discriminator zeroes the generator term") {
        auto [loss_d, loss_g] = gan_losses(0.5, 1.0 - 1e-12);
        REQUIRE(loss_g == Approx(0.0).margin(1e-9));
        (void)loss_d;
    }

    SECTION("scores outside the open interval are rejected") {
        REQUIRE_THROWS_AS(gan_losses(0.0, 0.5), contract_error);
        REQUIRE_THROWS_AS(gan_losses(0.5, 1.0), contract_error);
        REQUIRE_THROWS_AS(gan_losses(-0.1, 0.5), contract_error);
        REQUIRE_THROWS_AS(gan_losses(0.5, 1.7), contract_error);
    }

    SECTION("losses are strictly positive inside the interval") {
        for (double d : {0.01, 0.3, 0.5, 0.9, 0.99}) {
            auto [loss_d, loss_g] = gan_losses(d, d);
            REQUIRE(loss_d > 0.0);
            REQUIRE(loss_g > 0.0);
        }
    }

    SECTION("the generator term pushes d_fake upward") {
        Tape tape;
        Tensor d_fake = tape.input({1, 1}, {0.4}, true);
        tape.backward(sub(tape.scalar_const(0.0), log(d_fake)));
        REQUIRE(tape.grad(d_fake)[0] < 0.0);  // descending the loss raises d_fake
    }
}

TEST_CASE("total generator loss") {
    REQUIRE(total_generator_loss(0.7, 0.01, 100.0) == Approx(1.7).margin(1e-12));
    REQUIRE(total_generator_loss(0.42, 0.9, 0.0) == 0.42);
    REQUIRE(total_generator_loss(0.42, 0.0, 100.0) == 0.42);
}

TEST_CASE("learning rate schedule") {
    TrainConfig cfg;  // 150 epochs, plateau 50, 2e-4

    SECTION("paper defaults at the spot epochs") {
        REQUIRE(lr_at_epoch(10, cfg) == 2e-4);
        REQUIRE(lr_at_epoch(100, cfg) == Approx(1e-4).margin(1e-19));
        REQUIRE(lr_at_epoch(150, cfg) == 0.0);
    }

    SECTION("non-increasing and continuous at the plateau boundary") {
        double prev = lr_at_epoch(0, cfg);
        for (std::size_t e = 1; e <= cfg.epochs; ++e) {
            const double lr = lr_at_epoch(e, cfg);
            REQUIRE(lr <= prev);
            prev = lr;
        }
        REQUIRE(lr_at_epoch(cfg.lr_plateau_epochs, cfg) == cfg.lr_init);
    }

    SECTION("out-of-range epochs are rejected") {
        REQUIRE_THROWS_AS(lr_at_epoch(151, cfg), contract_error);
    }

    SECTION("degenerate all-plateau schedule") {
        TrainConfig flat;
        flat.epochs = 10;
        flat.lr_plateau_epochs = 10;
        REQUIRE(lr_at_epoch(5, flat) == flat.lr_init);
        REQUIRE(lr_at_epoch(10, flat) == 0.0);
    }
}

TEST_CASE("adam optimizer") {
    TrainConfig cfg;

    SECTION("zero gradients are a fixed point for parameters") {
        ParamStore store;
        store.add("p", {2, 2}, {1.0, -2.0, 3.0, 0.5});
        OptimizerState state = OptimizerState::for_store(store);
        store.zero_grads();
        const std::vector<double> before = store.at("p").value;
        adam_step(store, state, 1e-3, cfg);
        REQUIRE(store.at("p").value == before);
    }

    SECTION("zero gradients decay accumulated moments toward zero") {
        ParamStore store;
        store.add("p", {1, 1}, {1.0});
        OptimizerState state = OptimizerState::for_store(store);
        state.m[0] = {0.4};
        state.v[0] = {0.2};
        store.zero_grads();
        adam_step(store, state, 1e-3, cfg);
        REQUIRE(state.m[0][0] == Approx(0.4 * cfg.adam_beta1).margin(1e-15));
        REQUIRE(state.v[0][0] == Approx(0.2 * cfg.adam_beta2).margin(1e-15));
        for (int i = 0; i < 500; ++i) {
            store.zero_grads();
            adam_step(store, state, 1e-3, cfg);
        }
        REQUIRE(std::fabs(state.m[0][0]) < 1e-12);
    }

    SECTION("first step with unit gradient moves by about lr") {
        ParamStore store;
        store.add("p", {1, 1}, {0.0});
        OptimizerState state = OptimizerState::for_store(store);
        store.at("p").grad = {1.0};
        adam_step(store, state, 1e-3, cfg);
        // bias-corrected ratio is 1/(1 + eps) on the first step
        REQUIRE(store.at("p").value[0] == Approx(-1e-3).epsilon(1e-6));
    }

    SECTION("constant gradients drive the step size to lr") {
        ParamStore store;
        store.add("p", {1, 1}, {0.0});
        OptimizerState state = OptimizerState::for_store(store);
        double prev = 0.0;
        double last_step = 0.0;
        for (int i = 0; i < 1000; ++i) {
            store.at("p").grad = {1.0};
            adam_step(store, state, 1e-3, cfg);
            last_step = prev - store.at("p").value[0];
            prev = store.at("p").value[0];
        }
        REQUIRE(last_step == Approx(1e-3).epsilon(1e-2));
    }

    SECTION("non-finite gradients abort with the parameter name") {
        ParamStore store;
        store.add("oddball", {1, 1}, {0.0});
        OptimizerState state = OptimizerState::for_store(store);
        store.at("oddball").grad = {std::numeric_limits<double>::quiet_NaN()};
        try {
            adam_step(store, state, 1e-3, cfg);
            FAIL("expected train_error");
        } catch (const train_error& e) {
            REQUIRE(std::string(e.what()).find("oddball") != std::string::npos);
        }
    }
}

TEST_CASE("pure intensity regression decreases the l1 loss") {
    // Adversarial term disabled: 50 generator-only steps on one noisy patch.
    ModelConfig cfg = ModelConfig::for_side(16, 4);
    TrainConfig tcfg;
    tcfg.rng_seed = 7;
    ParamStore gen = init_generator_params(cfg, 7);
    OptimizerState state = OptimizerState::for_store(gen);
    Volume spet = random_volume(70, 16, 0.4, 1.0);
    Volume lpet = simulate_low_dose(spet, 0.25, 7);

    std::vector<double> l1_curve;
    for (int step = 0; step < 50; ++step) {
        Tape tape;
        TapeParams params(tape, gen, true);
        Tensor row = generator_forward_row(tape, lpet, params, cfg);
        Tensor target = tape.constant({1, spet.size()}, spet.voxels);
        Tensor l1 = l1_loss_row(row, target);
        l1_curve.push_back(l1.scalar());
        tape.backward(l1);
        params.accumulate_grads();
        adam_step(gen, state, 2e-4, tcfg);
    }
    REQUIRE(l1_curve.back() < l1_curve.front());
}

TEST_CASE("training loop") {
    ModelConfig mcfg = ModelConfig::for_side(16, 4);
    TrainConfig tcfg;
    tcfg.epochs = 2;
    tcfg.lr_plateau_epochs = 1;
    tcfg.batch_size = 4;
    tcfg.rng_seed = 11;
    tcfg.patch_stride = 8;

    auto make_subject = [&](std::uint64_t seed) {
        SubjectPair subject;
        subject.id = "s" + std::to_string(seed);
        subject.spet = random_volume(seed, 16, 0.3, 1.0);
        subject.lpet = simulate_low_dose(subject.spet, 0.25, seed);
        return subject;
    };
    std::vector<SubjectPair> train{make_subject(1), make_subject(2)};
    std::vector<SubjectPair> val{make_subject(3)};

    SECTION("zero epochs return initial parameters and an empty log") {
        TrainConfig zero = tcfg;
        zero.epochs = 0;
        zero.lr_plateau_epochs = 0;
        ParamStore gen = init_generator_params(mcfg, 21);
        ParamStore disc = init_discriminator_params(mcfg, 22);
        const std::vector<double> head = gen.at("embed.w").value;
        TrainResult result = train_run(train, val, gen, disc, mcfg, zero);
        REQUIRE(result.log.empty());
        REQUIRE(gen.at("embed.w").value == head);
    }

    SECTION("runs log every epoch and validation psnr") {
        ParamStore gen = init_generator_params(mcfg, 23);
        ParamStore disc = init_discriminator_params(mcfg, 24);
        std::ostringstream log;
        TrainResult result = train_run(train, val, gen, disc, mcfg, tcfg, &log);
        REQUIRE(result.log.size() == 2);
        REQUIRE(result.log[0].epoch == 0);
        REQUIRE(result.log[0].lr == 2e-4);
        REQUIRE(result.log[0].l1 > 0.0);
        REQUIRE(result.log[0].loss_d > 0.0);
        REQUIRE(result.log[0].val_psnr > 0.0);
        const std::string text = log.str();
        REQUIRE(text.find("epoch\tlr\tloss_D\tloss_G_adv\tl1\tval_psnr\n") == 0);
        REQUIRE(std::count(text.begin(), text.end(), '\n') == 3);
    }

    SECTION("identical seeds reproduce the metric log bitwise") {
        auto run = [&] {
            ParamStore gen = init_generator_params(mcfg, 25);
            ParamStore disc = init_discriminator_params(mcfg, 26);
            std::ostringstream log;
            train_run(train, val, gen, disc, mcfg, tcfg, &log);
            return log.str();
        };
        const std::string a = run();
        const std::string b = run();
        REQUIRE(!a.empty());
        REQUIRE(a == b);
    }

    SECTION("thread count does not change the result") {
        auto run = [&](std::size_t threads) {
            TrainConfig t = tcfg;
            t.threads = threads;
            ParamStore gen = init_generator_params(mcfg, 27);
            ParamStore disc = init_discriminator_params(mcfg, 28);
            std::ostringstream log;
            train_run(train, val, gen, disc, mcfg, t, &log);
            return log.str();
        };
        REQUIRE(run(1) == run(2));
    }

    SECTION("an empty training set is rejected") {
        ParamStore gen = init_generator_params(mcfg, 29);
        ParamStore disc = init_discriminator_params(mcfg, 30);
        REQUIRE_THROWS_AS(train_run({}, val, gen, disc, mcfg, tcfg), contract_error);
    }
}

TEST_CASE("patch-wise reconstruction") {
    ModelConfig cfg = ModelConfig::for_side(16, 4);
    ParamStore gen = init_generator_params(cfg, 31);  // zero head: identity

    SECTION("identity generator reconstructs the input exactly") {
        Volume v = random_volume(32, 32, 0.2, 1.0);
        Volume out = reconstruct_volume(v, gen, cfg, 8);
        REQUIRE(out.same_shape(v));
        for (std::size_t i = 0; i < v.size(); ++i)
            REQUIRE(out.voxels[i] == Approx(v.voxels[i]).margin(0.0));
    }

    SECTION("thread counts agree bitwise") {
        ParamStore gen2 = init_generator_params(cfg, 33, /*zero_head=*/false);
        Volume v = random_volume(34, 32, 0.2, 1.0);
        Volume a = reconstruct_volume(v, gen2, cfg, 8, 1);
        Volume b = reconstruct_volume(v, gen2, cfg, 8, 2);
        REQUIRE(a.voxels == b.voxels);
    }
}
