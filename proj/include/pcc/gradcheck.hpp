#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pcc/network.hpp"
#include "pcc/rng.hpp"
#include "pcc/tensor.hpp"
#include "pcc/train.hpp"
#include "pcc/volume.hpp"

namespace pcc {

// Compares analytic parameter gradients against central finite differences
// on a random sample of parameter coordinates.
//
//   backward: runs one forward/backward pass, leaving d(loss)/d(param) in
//             each parameter's grad accumulator.
//   eval:     recomputes the scalar loss from the stores' current values.
//
// Returns max over sampled coordinates of |analytic - central| /
// max(1, |central|).
inline double check_param_gradients(const std::vector<ParamStore*>& stores,
                                    const std::function<void()>& backward,
                                    const std::function<double()>& eval,
                                    std::size_t n_samples, std::uint64_t seed, double step) {
    if (!(step > 0.0)) throw contract_error("check_param_gradients: step must be positive");
    for (ParamStore* s : stores) s->zero_grads();
    backward();

    std::size_t total = 0;
    for (ParamStore* s : stores) total += s->scalar_count();
    if (total == 0) throw contract_error("check_param_gradients: no parameters");

    rng::Stream pick(seed, 37);
    double worst = 0.0;
    for (std::size_t sample = 0; sample < n_samples; ++sample) {
        std::size_t flat = pick.below(total);
        Param* param = nullptr;
        for (ParamStore* s : stores) {
            for (Param& p : s->items()) {
                if (flat < p.shape.numel()) {
                    param = &p;
                    break;
                }
                flat -= p.shape.numel();
            }
            if (param) break;
        }
        const double saved = param->value[flat];
        param->value[flat] = saved + step;
        const double hi = eval();
        param->value[flat] = saved - step;
        const double lo = eval();
        param->value[flat] = saved;
        const double central = (hi - lo) / (2.0 * step);
        const double analytic = param->grad[flat];
        const double err = std::fabs(analytic - central) / std::max(1.0, std::fabs(central));
        if (err > worst) worst = err;
    }
    return worst;
}

// Full-network gradient integrity check: random inputs and parameters
// (including a nonzero reversion head, which would otherwise zero out the
// upstream gradients), both generator and discriminator losses.
struct GradCheckReport {
    double generator_loss_err = 0.0;      // adv + lambda * L1 through G and D
    double discriminator_loss_err = 0.0;  // -log D(x,y) - log(1 - D(x, G(x)))

    double worst() const { return std::max(generator_loss_err, discriminator_loss_err); }
};

inline GradCheckReport gradcheck_full_network(const ModelConfig& cfg, std::uint64_t seed,
                                              std::size_t n_samples, double step) {
    cfg.validate();
    ParamStore gen = init_generator_params(cfg, seed, /*zero_head=*/false);
    ParamStore disc = init_discriminator_params(cfg, seed + 1);
    const std::size_t s = cfg.input_side;
    Volume lpet(s, s, s), spet(s, s, s);
    rng::Stream vs(seed, 41);
    for (double& v : lpet.voxels) v = vs.uniform(0.1, 1.0);
    for (double& v : spet.voxels) v = vs.uniform(0.1, 1.0);

    GradCheckReport report;
    {
        // Generator objective; gradients reach every G parameter and, through
        // the adversarial term, every D parameter. Routing is recorded on
        // the analytic pass and replayed under perturbation: the straight-
        // through treatment differentiates the loss at fixed assignments, so
        // the probe has to hold them fixed too.
        RoutingTrace trace;
        auto backward = [&] {
            Tape tape;
            tape.set_routing(&trace);
            TapeParams gp(tape, gen, true);
            TapeParams dp(tape, disc, true);
            Tensor row = generator_forward_row(tape, lpet, gp, cfg);
            Tensor d_fake = discriminator_forward_row(tape, lpet, row, dp, cfg);
            Tensor target = tape.constant({1, spet.size()}, spet.voxels);
            Tensor loss = add(sub(tape.scalar_const(0.0), log(d_fake)),
                              mul_scalar(l1_loss_row(row, target), cfg.lambda));
            tape.backward(loss);
            gp.accumulate_grads();
            dp.accumulate_grads();
        };
        auto eval = [&]() -> double {
            Tape tape;
            trace.replay = true;
            trace.rewind();
            tape.set_routing(&trace);
            TapeParams gp(tape, gen, false);
            TapeParams dp(tape, disc, false);
            Tensor row = generator_forward_row(tape, lpet, gp, cfg);
            Tensor d_fake = discriminator_forward_row(tape, lpet, row, dp, cfg);
            Tensor target = tape.constant({1, spet.size()}, spet.voxels);
            return -std::log(d_fake.scalar()) + cfg.lambda * l1_loss_row(row, target).scalar();
        };
        report.generator_loss_err =
            check_param_gradients({&gen, &disc}, backward, eval, n_samples, seed + 2, step);
    }
    {
        // Discriminator objective with the generator output detached.
        const Volume fake = generator_forward(lpet, gen, cfg);
        RoutingTrace trace;
        auto backward = [&] {
            Tape tape;
            tape.set_routing(&trace);
            TapeParams dp(tape, disc, true);
            Tensor d_real = discriminator_forward(tape, lpet, spet, dp, cfg);
            Tensor d_fake = discriminator_forward(tape, lpet, fake, dp, cfg);
            Tensor loss = sub(tape.scalar_const(0.0),
                              add(log(d_real), log(sub(tape.scalar_const(1.0), d_fake))));
            tape.backward(loss);
            dp.accumulate_grads();
        };
        auto eval = [&]() -> double {
            Tape tape;
            trace.replay = true;
            trace.rewind();
            tape.set_routing(&trace);
            TapeParams dp(tape, disc, false);
            const double d_real = discriminator_forward(tape, lpet, spet, dp, cfg).scalar();
            const double d_fake = discriminator_forward(tape, lpet, fake, dp, cfg).scalar();
            return -std::log(d_real) - std::log(1.0 - d_fake);
        };
        report.discriminator_loss_err =
            check_param_gradients({&disc}, backward, eval, n_samples, seed + 3, step);
    }
    return report;
}

}  // namespace pcc
