#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <exception>
#include <memory>
#include <mutex>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "pcc/errors.hpp"
#include "pcc/metrics.hpp"
#include "pcc/network.hpp"
#include "pcc/rng.hpp"
#include "pcc/sim.hpp"
#include "pcc/tensor.hpp"
#include "pcc/volume.hpp"

namespace pcc {

struct TrainConfig {
    std::size_t epochs = 150;
    std::size_t batch_size = 4;
    double lr_init = 2e-4;
    std::size_t lr_plateau_epochs = 50;
    double lambda = 100.0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t rng_seed = 0;
    std::size_t patch_stride = 8;
    std::size_t threads = 1;
    bool saturating_adv = false;  // literal log(1 - D) generator term, for fidelity runs

    void validate() const {
        if (!(lr_init > 0.0)) throw contract_error("train config: lr_init must be positive");
        if (lr_plateau_epochs > epochs)
            throw contract_error("train config: plateau exceeds epoch count");
        if (lambda < 0.0) throw contract_error("train config: lambda must be nonnegative");
        if (batch_size == 0) throw contract_error("train config: batch size must be positive");
        if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
            throw contract_error("train config: betas must lie in [0, 1)");
        if (!(adam_eps > 0.0)) throw contract_error("train config: eps must be positive");
        if (patch_stride == 0) throw contract_error("train config: stride must be positive");
    }
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean absolute voxel error (mean, not sum, so the lambda weighting is
// scale-free across patch sizes).
inline double l1_loss(const Volume& estimate, const Volume& target) {
    if (!estimate.same_shape(target)) throw contract_error("l1_loss: volume shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < estimate.size(); ++i)
        acc += std::fabs(target.voxels[i] - estimate.voxels[i]);
    return acc / static_cast<double>(estimate.size());
}

// Tape form of the same loss over 1 x n intensity rows.
inline Tensor l1_loss_row(const Tensor& estimate, const Tensor& target) {
    if (!(estimate.shape() == target.shape()))
        throw contract_error("l1_loss_row: shape mismatch");
    return mean_all(abs(sub(target, estimate)));
}

// Discriminator and (non-saturating) generator adversarial losses from the
// two scores: loss_D = -log d_real - log(1 - d_fake), loss_G = -log d_fake.
inline std::pair<double, double> gan_losses(double d_real, double d_fake) {
    if (!(d_real > 0.0 && d_real < 1.0 && d_fake > 0.0 && d_fake < 1.0))
        throw contract_error("gan_losses: scores must lie strictly inside (0, 1)");
    const double loss_d = -std::log(d_real) - std::log(1.0 - d_fake);
    const double loss_g = -std::log(d_fake);
    return {loss_d, loss_g};
}

inline double total_generator_loss(double adv, double l1, double lambda) {
    return adv + lambda * l1;
}

// Constant lr_init up to the plateau epoch, then linear decay hitting
// exactly zero at the final boundary. Defined on [0, epochs], inclusive at
// the top so the boundary value is queryable.
inline double lr_at_epoch(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch > cfg.epochs)
        throw contract_error("lr_at_epoch: epoch " + std::to_string(epoch) + " out of range");
    if (epoch < cfg.lr_plateau_epochs) return cfg.lr_init;
    if (cfg.epochs == cfg.lr_plateau_epochs) return epoch < cfg.epochs ? cfg.lr_init : 0.0;
    return cfg.lr_init * static_cast<double>(cfg.epochs - epoch) /
           static_cast<double>(cfg.epochs - cfg.lr_plateau_epochs);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct OptimizerState {
    std::vector<std::vector<double>> m, v;  // aligned with the store's parameter order
    std::size_t step = 0;

    static OptimizerState for_store(const ParamStore& store) {
        OptimizerState st;
        for (const Param& p : store.items()) {
            st.m.emplace_back(p.shape.numel(), 0.0);
            st.v.emplace_back(p.shape.numel(), 0.0);
        }
        return st;
    }
};

// Standard bias-corrected adaptive-moment update; consumes and clears the
// accumulated gradients.
inline void adam_step(ParamStore& store, OptimizerState& state, double lr,
                      const TrainConfig& cfg) {
    if (state.m.size() != store.size())
        throw contract_error("adam_step: optimizer state does not match the store");
    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
    for (std::size_t pi = 0; pi < store.size(); ++pi) {
        Param& p = store.items()[pi];
        if (p.grad.empty()) p.grad.assign(p.shape.numel(), 0.0);
        std::vector<double>& m = state.m[pi];
        std::vector<double>& v = state.v[pi];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            if (!std::isfinite(g))
                throw train_error("non-finite gradient in parameter " + p.name);
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g;
            v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
        p.grad.assign(p.value.size(), 0.0);
    }
}

// ---------------------------------------------------------------------------
// Deterministic parallel map: each index writes only its own slot, so
// results are identical for any thread count.
// ---------------------------------------------------------------------------

template <typename Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min(threads, count);
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// Patch-wise inference
// ---------------------------------------------------------------------------

// Runs the generator over overlapping patches and reassembles by overlap
// averaging.
inline Volume reconstruct_volume(const Volume& lpet, ParamStore& gen, const ModelConfig& cfg,
                                 std::size_t stride, std::size_t threads = 1) {
    PatchGrid grid = plan_patches(lpet, cfg.input_side, stride);
    std::vector<Volume> outputs(grid.origins.size());
    parallel_for(grid.origins.size(), threads, [&](std::size_t i) {
        Volume patch = extract_patch(lpet, grid.origins[i], grid.patch_side);
        outputs[i] = generator_forward(patch, gen, cfg);
    });
    return assemble_patches(grid, outputs);
}

// ---------------------------------------------------------------------------
// Adversarial training loop
// ---------------------------------------------------------------------------

struct SubjectPair {
    std::string id;
    Volume spet;
    Volume lpet;
};

struct EpochStats {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss_d = 0.0;
    double loss_g_adv = 0.0;
    double l1 = 0.0;
    double val_psnr = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> log;
};

inline void write_metric_log_header(std::ostream& os) {
    os << "epoch\tlr\tloss_D\tloss_G_adv\tl1\tval_psnr\n";
}

inline void write_metric_log_line(std::ostream& os, const EpochStats& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\n", s.epoch, s.lr,
                  s.loss_d, s.loss_g_adv, s.l1, s.val_psnr);
    os << buf;
}

namespace detail {

struct PatchPair {
    Volume lpet;
    Volume spet;
};

inline std::vector<PatchPair> collect_patches(const std::vector<SubjectPair>& subjects,
                                              std::size_t side, std::size_t stride) {
    std::vector<PatchPair> out;
    for (const SubjectPair& subject : subjects) {
        if (!subject.spet.same_shape(subject.lpet))
            throw contract_error("training: subject " + subject.id + " volume shape mismatch");
        PatchGrid grid = plan_patches(subject.lpet, side, stride);
        for (const auto& origin : grid.origins)
            out.push_back(PatchPair{extract_patch(subject.lpet, origin, side),
                                    extract_patch(subject.spet, origin, side)});
    }
    return out;
}

}  // namespace detail

// One discriminator update then one generator update per batch; fully
// deterministic for a fixed seed (counter-based shuffling, fixed-order
// gradient reduction, slot-indexed parallelism).
inline TrainResult train_run(const std::vector<SubjectPair>& train_subjects,
                             const std::vector<SubjectPair>& val_subjects, ParamStore& gen,
                             ParamStore& disc, const ModelConfig& mcfg, const TrainConfig& tcfg,
                             std::ostream* metric_log = nullptr) {
    mcfg.validate();
    tcfg.validate();
    if (train_subjects.empty()) throw contract_error("train_run: empty training set");
    std::vector<detail::PatchPair> patches =
        detail::collect_patches(train_subjects, mcfg.input_side, tcfg.patch_stride);
    OptimizerState g_state = OptimizerState::for_store(gen);
    OptimizerState d_state = OptimizerState::for_store(disc);
    TrainResult result;
    if (metric_log) write_metric_log_header(*metric_log);

    std::vector<std::size_t> order(patches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const double lr = lr_at_epoch(epoch, tcfg);
        // Seeded Fisher-Yates reshuffle per epoch.
        rng::Stream shuffle(tcfg.rng_seed, 0x20000000ull + epoch);
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle.below(i)]);

        double sum_loss_d = 0.0, sum_adv = 0.0, sum_l1 = 0.0;
        std::size_t n_samples = 0;
        for (std::size_t start = 0; start < order.size(); start += tcfg.batch_size) {
            const std::size_t b = std::min(tcfg.batch_size, order.size() - start);
            const double inv_b = 1.0 / static_cast<double>(b);

            // Discriminator step: score (real, fake) pairs with the
            // generator output detached.
            struct DSlot {
                std::unique_ptr<Tape> tape;
                std::unique_ptr<TapeParams> params;
                double loss_d = 0.0;
            };
            std::vector<DSlot> d_slots(b);
            try {
                parallel_for(b, tcfg.threads, [&](std::size_t s) {
                    const detail::PatchPair& sample = patches[order[start + s]];
                    Volume fake = generator_forward(sample.lpet, gen, mcfg);
                    DSlot& slot = d_slots[s];
                    slot.tape = std::make_unique<Tape>();
                    slot.params = std::make_unique<TapeParams>(*slot.tape, disc, true);
                    Tensor d_real =
                        discriminator_forward(*slot.tape, sample.lpet, sample.spet, *slot.params,
                                              mcfg);
                    Tensor d_fake =
                        discriminator_forward(*slot.tape, sample.lpet, fake, *slot.params, mcfg);
                    Tensor loss = sub(slot.tape->scalar_const(0.0),
                                      add(log(d_real), log(sub(slot.tape->scalar_const(1.0),
                                                               d_fake))));
                    slot.loss_d = loss.scalar();
                    slot.tape->backward(mul_scalar(loss, inv_b));
                });
                for (DSlot& slot : d_slots) {
                    slot.params->accumulate_grads();
                    sum_loss_d += slot.loss_d;
                }
                adam_step(disc, d_state, lr, tcfg);

                // Generator step: adversarial term through the (frozen)
                // discriminator plus the weighted intensity error.
                struct GSlot {
                    std::unique_ptr<Tape> tape;
                    std::unique_ptr<TapeParams> params;
                    double adv = 0.0;
                    double l1 = 0.0;
                };
                std::vector<GSlot> g_slots(b);
                parallel_for(b, tcfg.threads, [&](std::size_t s) {
                    const detail::PatchPair& sample = patches[order[start + s]];
                    GSlot& slot = g_slots[s];
                    slot.tape = std::make_unique<Tape>();
                    slot.params = std::make_unique<TapeParams>(*slot.tape, gen, true);
                    TapeParams d_frozen(*slot.tape, disc, false);
                    Tensor row = generator_forward_row(*slot.tape, sample.lpet, *slot.params, mcfg);
                    Tensor d_fake =
                        discriminator_forward_row(*slot.tape, sample.lpet, row, d_frozen, mcfg);
                    Tensor adv = tcfg.saturating_adv
                                     ? log(sub(slot.tape->scalar_const(1.0), d_fake))
                                     : sub(slot.tape->scalar_const(0.0), log(d_fake));
                    Tensor target =
                        slot.tape->constant(Shape{1, sample.spet.size()}, sample.spet.voxels);
                    Tensor l1 = l1_loss_row(row, target);
                    slot.adv = adv.scalar();
                    slot.l1 = l1.scalar();
                    Tensor loss = add(adv, mul_scalar(l1, tcfg.lambda));
                    slot.tape->backward(mul_scalar(loss, inv_b));
                });
                for (GSlot& slot : g_slots) {
                    slot.params->accumulate_grads();
                    sum_adv += slot.adv;
                    sum_l1 += slot.l1;
                }
                adam_step(gen, g_state, lr, tcfg);
            } catch (const error& e) {
                throw train_error("epoch " + std::to_string(epoch) + ", batch " +
                                  std::to_string(start / tcfg.batch_size) + ": " + e.what());
            }
            n_samples += b;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.loss_d = sum_loss_d / static_cast<double>(n_samples);
        stats.loss_g_adv = sum_adv / static_cast<double>(n_samples);
        stats.l1 = sum_l1 / static_cast<double>(n_samples);
        if (!val_subjects.empty()) {
            double acc = 0.0;
            for (const SubjectPair& subject : val_subjects) {
                Volume epet = reconstruct_volume(subject.lpet, gen, mcfg, tcfg.patch_stride,
                                                 tcfg.threads);
                acc += psnr_capped(epet, subject.spet);
            }
            stats.val_psnr = acc / static_cast<double>(val_subjects.size());
        }
        result.log.push_back(stats);
        if (metric_log) write_metric_log_line(*metric_log, stats);
    }
    return result;
}

}  // namespace pcc
