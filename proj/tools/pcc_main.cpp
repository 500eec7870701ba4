// Command-line front end: phantom simulation, adversarial training,
// patch-wise reconstruction, metric evaluation, gradient checking and a
// built-in invariant self-test.
//
// Exit codes: 0 success, 1 contract/IO failure, 2 usage error.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "pcc/cluster.hpp"
#include "pcc/gradcheck.hpp"
#include "pcc/metrics.hpp"
#include "pcc/network.hpp"
#include "pcc/pointset.hpp"
#include "pcc/rng.hpp"
#include "pcc/sim.hpp"
#include "pcc/tensor.hpp"
#include "pcc/train.hpp"
#include "pcc/volume.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonModelFlags {
    std::size_t side = 64;
    std::size_t width = 16;
    std::size_t k = 8;
    std::size_t clusters = 8;
    double lambda = 100.0;
};

struct TrainFlags {
    std::size_t epochs = 150;
    std::size_t batch = 4;
    double lr = 2e-4;
    std::size_t plateau = 50;
    std::uint64_t seed = 0;
    std::size_t stride = 8;
    std::size_t threads = 1;
    bool saturating_adv = false;
};

void add_model_flags(CLI::App* cmd, CommonModelFlags& flags) {
    cmd->add_option("--side", flags.side, "Patch edge length S (multiple of 16)");
    cmd->add_option("--width", flags.width, "Base channel width W0");
    cmd->add_option("--k", flags.k, "Neighbors per anchor and per center");
    cmd->add_option("--clusters", flags.clusters, "Total cluster count c");
    cmd->add_option("--lambda", flags.lambda, "Weight of the intensity error term");
}

pcc::ModelConfig model_config(const CommonModelFlags& flags) {
    pcc::ModelConfig cfg = pcc::ModelConfig::for_side(flags.side, flags.width);
    cfg.k = flags.k;
    cfg.clusters = flags.clusters;
    cfg.lambda = flags.lambda;
    cfg.validate();
    return cfg;
}

// The desk profile shrinks the network and schedule so the whole pipeline
// runs in seconds on one core. Explicitly passed flags still win.
void apply_profile(const std::string& profile, CLI::App* cmd, CommonModelFlags& model,
                   TrainFlags* train) {
    if (profile == "full" || profile.empty()) return;
    if (profile != "desk") throw CLI::ValidationError("--profile", "expected 'desk' or 'full'");
    auto unset = [&](const char* name) {
        const CLI::Option* opt = cmd->get_option_no_throw(name);
        return opt == nullptr || opt->count() == 0;
    };
    if (unset("--side")) model.side = 16;
    if (unset("--width")) model.width = 8;
    if (train) {
        if (unset("--epochs")) train->epochs = 20;
        // Short desk runs spend their whole budget at the initial rate and
        // use a denser patch grid; both are needed for the toy run to
        // converge within 20 epochs.
        if (unset("--plateau")) train->plateau = train->epochs;
        if (unset("--stride")) train->stride = 4;
    }
}

// Manifest entries may be bare filenames or relative paths; resolve them
// against the manifest's own directory so datasets are relocatable.
std::string resolve_against(const std::string& manifest_path, const std::string& entry) {
    fs::path p(entry);
    if (p.is_absolute()) return entry;
    return (fs::path(manifest_path).parent_path() / p).string();
}

std::vector<pcc::SubjectPair> load_subjects(const std::string& manifest_path) {
    std::vector<pcc::SubjectPair> subjects;
    std::size_t index = 0;
    for (const pcc::ManifestEntry& entry : pcc::read_manifest(manifest_path)) {
        pcc::SubjectPair subject;
        char id[16];
        std::snprintf(id, sizeof id, "subj%03zu", index++);
        subject.id = id;
        subject.spet = pcc::read_volume(resolve_against(manifest_path, entry.spet_path));
        subject.lpet = pcc::read_volume(resolve_against(manifest_path, entry.lpet_path));
        subjects.push_back(std::move(subject));
    }
    return subjects;
}

std::vector<pcc::SubjectPair> pick(const std::vector<pcc::SubjectPair>& all,
                                   const std::vector<std::size_t>& indices) {
    std::vector<pcc::SubjectPair> out;
    for (std::size_t i : indices) {
        if (i >= all.size())
            throw pcc::contract_error("subject index " + std::to_string(i) +
                                      " out of range (manifest has " +
                                      std::to_string(all.size()) + ")");
        out.push_back(all[i]);
    }
    return out;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

int run_simulate(std::size_t subjects, std::size_t side, std::uint64_t seed,
                 const std::string& out_dir, double dose, double scale,
                 const pcc::PhantomSpec& proto) {
    fs::create_directories(out_dir);
    std::vector<pcc::ManifestEntry> manifest;
    for (std::size_t i = 0; i < subjects; ++i) {
        pcc::PhantomSpec spec = proto;
        spec.shape = {side, side, side};
        spec.seed = seed + i;
        pcc::Volume spet = pcc::gen_phantom(spec);
        pcc::Volume lpet = pcc::simulate_low_dose(spet, dose, seed + i, scale);
        char spet_name[32], lpet_name[32];
        std::snprintf(spet_name, sizeof spet_name, "subj%03zu_spet.pccvol", i);
        std::snprintf(lpet_name, sizeof lpet_name, "subj%03zu_lpet.pccvol", i);
        pcc::write_volume((fs::path(out_dir) / spet_name).string(), spet);
        pcc::write_volume((fs::path(out_dir) / lpet_name).string(), lpet);
        manifest.push_back({spet_name, lpet_name});
    }
    pcc::write_manifest((fs::path(out_dir) / "manifest.tsv").string(), manifest);
    std::printf("simulated %zu subjects of side %zu into %s\n", subjects, side,
                out_dir.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int run_train(const std::string& manifest, const std::string& out_dir,
              const CommonModelFlags& model_flags, const TrainFlags& train_flags,
              std::vector<std::size_t> train_idx, std::vector<std::size_t> val_idx) {
    pcc::ModelConfig mcfg = model_config(model_flags);
    pcc::TrainConfig tcfg;
    tcfg.epochs = train_flags.epochs;
    tcfg.batch_size = train_flags.batch;
    tcfg.lr_init = train_flags.lr;
    tcfg.lr_plateau_epochs = train_flags.plateau;
    tcfg.lambda = model_flags.lambda;
    tcfg.rng_seed = train_flags.seed;
    tcfg.patch_stride = train_flags.stride;
    tcfg.threads = train_flags.threads;
    tcfg.saturating_adv = train_flags.saturating_adv;
    tcfg.validate();

    std::vector<pcc::SubjectPair> all = load_subjects(manifest);
    if (all.empty()) throw pcc::contract_error("manifest lists no subjects");
    if (train_idx.empty() && val_idx.empty()) {
        for (std::size_t i = 0; i + 1 < all.size(); ++i) train_idx.push_back(i);
        if (all.size() > 1)
            val_idx.push_back(all.size() - 1);
        else
            train_idx.push_back(0);
    }
    std::vector<pcc::SubjectPair> train_set = pick(all, train_idx);
    std::vector<pcc::SubjectPair> val_set = pick(all, val_idx);

    pcc::ParamStore gen = pcc::init_generator_params(mcfg, tcfg.rng_seed);
    pcc::ParamStore disc = pcc::init_discriminator_params(mcfg, tcfg.rng_seed);

    fs::create_directories(out_dir);
    std::ofstream log((fs::path(out_dir) / "metrics.tsv").string());
    if (!log) throw pcc::io_error("cannot open metric log in " + out_dir);
    pcc::TrainResult result = pcc::train_run(train_set, val_set, gen, disc, mcfg, tcfg, &log);
    pcc::save_checkpoint((fs::path(out_dir) / "model.pccckpt").string(),
                         {{"g", &gen}, {"d", &disc}});
    if (!result.log.empty()) {
        const pcc::EpochStats& last = result.log.back();
        std::printf("trained %zu epochs: l1 %.6f, val psnr %.3f dB\n", result.log.size(),
                    last.l1, last.val_psnr);
    } else {
        std::printf("trained 0 epochs (initial parameters saved)\n");
    }
    return 0;
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

int run_reconstruct(const std::string& manifest, const std::string& ckpt,
                    const std::string& out_dir, const CommonModelFlags& model_flags,
                    std::size_t stride, std::size_t threads) {
    pcc::ModelConfig cfg = model_config(model_flags);
    pcc::ParamStore gen = pcc::init_generator_params(cfg, 0);
    pcc::ParamStore disc = pcc::init_discriminator_params(cfg, 0);
    pcc::load_checkpoint(ckpt, {{"g", &gen}, {"d", &disc}});
    fs::create_directories(out_dir);
    std::vector<pcc::SubjectPair> subjects = load_subjects(manifest);
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        pcc::Volume epet = pcc::reconstruct_volume(subjects[i].lpet, gen, cfg, stride, threads);
        char name[32];
        std::snprintf(name, sizeof name, "subj%03zu_epet.pccvol", i);
        pcc::write_volume((fs::path(out_dir) / name).string(), epet);
    }
    std::printf("reconstructed %zu subjects into %s\n", subjects.size(), out_dir.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

int run_evaluate(const std::string& manifest, const std::string& recon_dir,
                 const std::string& out_path) {
    std::vector<pcc::SubjectPair> subjects = load_subjects(manifest);
    std::vector<std::string> names;
    std::vector<pcc::MetricReport> reports;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "subj%03zu_epet.pccvol", i);
        pcc::Volume epet = pcc::read_volume((fs::path(recon_dir) / name).string());
        names.push_back(subjects[i].id);
        reports.push_back(pcc::evaluate_metrics(epet, subjects[i].spet));
    }
    if (out_path.empty()) {
        pcc::write_report(std::cout, names, reports);
    } else {
        std::ofstream os(out_path);
        if (!os) throw pcc::io_error("cannot open report file: " + out_path);
        pcc::write_report(os, names, reports);
    }
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

int run_gradcheck(std::size_t side, std::size_t width, std::uint64_t seed,
                  std::size_t samples, double step) {
    pcc::ModelConfig cfg = pcc::ModelConfig::for_side(side, width);
    pcc::GradCheckReport report = pcc::gradcheck_full_network(cfg, seed, samples, step);
    std::printf("generator-loss max relative error:     %.3e\n", report.generator_loss_err);
    std::printf("discriminator-loss max relative error: %.3e\n", report.discriminator_loss_err);
    std::printf("max relative error: %.3e\n", report.worst());
    return report.worst() < 1e-4 ? 0 : 1;
}

// ---------------------------------------------------------------------------
// selftest: a compact pass over the library's structural invariants.
// ---------------------------------------------------------------------------

int run_selftest() {
    int failures = 0;
    auto check = [&](const char* name, bool ok) {
        std::printf("%s %s\n", ok ? "ok  " : "FAIL", name);
        if (!ok) ++failures;
    };

    {  // primitive gradients against the finite-difference oracle
        auto f = [](pcc::Tape& t, const pcc::Tensor& x) {
            pcc::Tensor w = t.constant({2, 3}, {0.3, -0.2, 0.5, 0.1, 0.4, -0.6});
            pcc::Tensor b = t.constant({2, 1}, {0.05, -0.1});
            return pcc::sum_all(pcc::sigmoid(pcc::linear(w, x, b)));
        };
        pcc::rng::Stream s(1, 91);
        std::vector<double> at(12);
        for (double& v : at) v = s.uniform(-1.0, 1.0);
        check("primitive gradients vs central differences",
              pcc::finite_diff_check(f, {3, 4}, at, 1e-5) < 1e-4);
    }
    {  // exact kNN against a quadratic scan
        pcc::rng::Stream s(2, 91);
        const std::size_t n = 200, q = 30, k = 6;
        std::vector<double> coords(3 * n), queries(3 * q);
        for (double& c : coords) c = s.next_double();
        for (double& c : queries) c = s.next_double();
        pcc::IndexMatrix fast = pcc::knn_indices(coords, n, queries, q, k);
        bool ok = true;
        for (std::size_t qi = 0; qi < q && ok; ++qi) {
            std::vector<std::pair<double, std::size_t>> cand(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double dx = coords[i] - queries[qi];
                const double dy = coords[n + i] - queries[q + qi];
                const double dz = coords[2 * n + i] - queries[2 * q + qi];
                cand[i] = {dx * dx + dy * dy + dz * dz, i};
            }
            std::sort(cand.begin(), cand.end());
            for (std::size_t r = 0; r < k; ++r) ok = ok && fast.at(qi, r) == cand[r].second;
        }
        check("knn matches the exhaustive scan", ok);
    }
    {  // cluster partition + aggregation convex hull
        pcc::Tape tape;
        pcc::rng::Stream s(3, 91);
        const std::size_t d = 4, n = 120;
        std::vector<double> features(d * n), coords(3 * n);
        for (double& v : features) v = s.uniform(0.2, 2.0);
        for (double& v : coords) v = s.next_double();
        pcc::PointSet ps;
        ps.features = tape.constant({d, n}, features);
        ps.coords = coords;
        pcc::Tensor centers = pcc::propose_centers(ps, 2, 8);
        pcc::ClusterAssignment assign = pcc::assign_clusters(ps, centers);
        std::size_t total = 0;
        for (const auto& g : assign.groups) total += g.size();
        check("cluster assignment partitions the point set", total == n);

        pcc::Tensor alpha = tape.constant({1, 1}, {1.0});
        pcc::Tensor beta = tape.constant({1, 1}, {0.0});
        bool hull_ok = true;
        for (std::size_t j = 0; j < assign.groups.size() && hull_ok; ++j) {
            if (assign.groups[j].empty()) continue;
            pcc::Tensor members = pcc::gather_cols(ps.features, assign.groups[j]);
            pcc::Tensor sims = pcc::gather_cols(assign.similarity, assign.groups[j]);
            pcc::Tensor center = pcc::gather_cols(centers, {j});
            pcc::Tensor g = pcc::aggregate_cluster(members, sims, center, alpha, beta);
            for (std::size_t r = 0; r < d && hull_ok; ++r) {
                double lo = center.values()[r], hi = lo;
                for (std::size_t m = 0; m < members.cols(); ++m) {
                    lo = std::min(lo, members.values()[r * members.cols() + m]);
                    hi = std::max(hi, members.values()[r * members.cols() + m]);
                }
                hull_ok = g.values()[r] >= lo - 1e-12 && g.values()[r] <= hi + 1e-12;
            }
        }
        check("aggregation stays in the member convex hull", hull_ok);
    }
    {  // construct/revert identity
        pcc::Volume v(8, 8, 8);
        pcc::rng::Stream s(4, 91);
        for (double& x : v.voxels) x = s.uniform(0.0, 1.0);
        pcc::Tape tape;
        std::vector<double> wv(3 * 4, 0.0);
        wv[0] = 1.0;
        wv[5] = 0.7;
        wv[10] = -0.3;
        pcc::Tensor w = tape.constant({3, 4}, wv);
        pcc::Tensor b = tape.constant({3, 1}, {0, 0, 0});
        pcc::PointSet ps = pcc::construct_points(tape, v, w, b);
        pcc::Tensor hw = tape.constant({1, 3}, {1, 0, 0});
        pcc::Tensor hb = tape.constant({1, 1}, {0});
        pcc::Volume back = pcc::revert_points(ps, hw, hb);
        check("construct/revert round trip is exact", back.voxels == v.voxels);
    }
    {  // extract/assemble identity and the 729-patch plan
        pcc::PhantomSpec spec;
        spec.shape = {24, 24, 24};
        spec.seed = 5;
        pcc::Volume v = pcc::gen_phantom(spec);
        pcc::PatchGrid grid = pcc::plan_patches(v, 8, 4);
        pcc::Volume out = pcc::assemble_patches(grid, pcc::extract_patches(v, grid));
        check("extract/assemble round trip is exact", out.voxels == v.voxels);
        pcc::Volume big(128, 128, 128, 0.0);
        check("side-64 stride-8 plan on a 128-cube yields 729 patches",
              pcc::plan_patches(big, 64, 8).origins.size() == 729);
    }
    {  // zero-head identity and stage arithmetic
        pcc::ModelConfig cfg = pcc::ModelConfig::for_side(16, 4);
        pcc::ParamStore gen = pcc::init_generator_params(cfg, 6);
        pcc::Volume v(16, 16, 16);
        pcc::rng::Stream s(6, 91);
        for (double& x : v.voxels) x = s.uniform(0.1, 1.0);
        pcc::Volume out = pcc::generator_forward(v, gen, cfg);
        check("zero reversion head is the identity map", out.voxels == v.voxels);

        pcc::Tape tape;
        pcc::TapeParams params(tape, gen, false);
        pcc::StageDims dims;
        pcc::generator_forward_row(tape, v, params, cfg, &dims);
        bool ok = dims.size() == 9 && dims.front().first == 4096 && dims.back().first == 4096;
        for (std::size_t i = 1; i <= 4 && ok; ++i)
            ok = dims[i].first == dims[i - 1].first / 8 && dims[i].second == 2 * dims[i - 1].second;
        for (std::size_t j = 5; j <= 8 && ok; ++j)
            ok = dims[j].first == dims[j - 1].first * 8 && dims[j].second == dims[j - 1].second / 2;
        check("stage counts eighth and widths double, mirrored back", ok);
    }
    {  // learning-rate schedule boundary values
        pcc::TrainConfig cfg;
        check("learning-rate schedule hits the spot values",
              pcc::lr_at_epoch(10, cfg) == 2e-4 && pcc::lr_at_epoch(100, cfg) == 1e-4 &&
                  pcc::lr_at_epoch(150, cfg) == 0.0);
    }
    {  // metric fixed points
        pcc::Volume v(8, 8, 8);
        pcc::rng::Stream s(7, 91);
        for (double& x : v.voxels) x = s.uniform(0.1, 1.0);
        check("metric fixed points (psnr cap, ssim 1, nmse 0)",
              pcc::psnr_capped(v, v) == 99.0 && pcc::ssim(v, v) == 1.0 && pcc::nmse(v, v) == 0.0);
    }

    std::printf("%s\n", failures == 0 ? "selftest passed" : "selftest FAILED");
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"3D point-based context-clusters reconstruction toolkit"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "Optional key = value configuration file");

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate phantom subjects and low-dose inputs");
    std::size_t sim_subjects = 4, sim_side = 64;
    std::uint64_t sim_seed = 0;
    std::string sim_out = "data";
    double sim_dose = 0.25, sim_scale = pcc::kDefaultCountScale;
    pcc::PhantomSpec phantom;
    sim->add_option("--subjects", sim_subjects, "Number of subjects");
    sim->add_option("--side", sim_side, "Volume edge length");
    sim->add_option("--seed", sim_seed, "Base RNG seed");
    sim->add_option("--out", sim_out, "Output directory");
    sim->add_option("--dose", sim_dose, "Dose fraction in (0, 1]");
    sim->add_option("--scale", sim_scale, "Counts per unit intensity at full dose");
    sim->add_option("--ellipsoids", phantom.ellipsoids, "Structures per phantom");
    sim->add_option("--background", phantom.background, "Background intensity");
    sim->add_option("--blur", phantom.blur_width, "Gaussian blur sigma (voxels)");

    // train
    auto* train = app.add_subcommand("train", "Adversarial training on a dataset manifest");
    std::string train_manifest, train_out = "run", train_profile = "full";
    CommonModelFlags train_model;
    TrainFlags train_flags;
    std::vector<std::size_t> train_subjects, val_subjects;
    train->add_option("--manifest", train_manifest, "Dataset manifest")->required();
    train->add_option("--out", train_out, "Output directory (checkpoint + metric log)");
    train->add_option("--profile", train_profile, "Preset: full or desk");
    add_model_flags(train, train_model);
    train->add_option("--epochs", train_flags.epochs, "Training epochs");
    train->add_option("--batch", train_flags.batch, "Batch size");
    train->add_option("--lr", train_flags.lr, "Initial learning rate");
    train->add_option("--plateau", train_flags.plateau, "Epochs at the initial rate");
    train->add_option("--seed", train_flags.seed, "RNG seed");
    train->add_option("--stride", train_flags.stride, "Patch stride");
    train->add_option("--threads", train_flags.threads, "Worker threads (1 = canonical)");
    train->add_flag("--saturating-adv", train_flags.saturating_adv,
                    "Use the literal log(1 - D) generator term");
    train->add_option("--train-subjects", train_subjects, "Training subject indices")
        ->delimiter(',');
    train->add_option("--val-subjects", val_subjects, "Validation subject indices")
        ->delimiter(',');

    // reconstruct
    auto* rec = app.add_subcommand("reconstruct", "Patch-wise inference over a manifest");
    std::string rec_manifest, rec_ckpt, rec_out = "recon", rec_profile = "full";
    CommonModelFlags rec_model;
    std::size_t rec_stride = 8, rec_threads = 1;
    rec->add_option("--manifest", rec_manifest, "Dataset manifest")->required();
    rec->add_option("--ckpt", rec_ckpt, "Model checkpoint")->required();
    rec->add_option("--out", rec_out, "Output directory");
    rec->add_option("--profile", rec_profile, "Preset: full or desk");
    add_model_flags(rec, rec_model);
    rec->add_option("--stride", rec_stride, "Patch stride");
    rec->add_option("--threads", rec_threads, "Worker threads (1 = canonical)");

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "PSNR/SSIM/NMSE of reconstructions");
    std::string eval_manifest, eval_recon, eval_out;
    eval->add_option("--manifest", eval_manifest, "Dataset manifest")->required();
    eval->add_option("--recon", eval_recon, "Directory of subjNNN_epet.pccvol files")->required();
    eval->add_option("--out", eval_out, "Report file (stdout when omitted)");

    // gradcheck
    auto* grad =
        app.add_subcommand("gradcheck", "Full-network gradients vs central finite differences");
    std::size_t gc_side = 16, gc_width = 4, gc_samples = 50;
    std::uint64_t gc_seed = 3;
    double gc_step = 1e-5;
    grad->add_option("--side", gc_side, "Patch edge length");
    grad->add_option("--width", gc_width, "Base channel width");
    grad->add_option("--seed", gc_seed, "RNG seed");
    grad->add_option("--samples", gc_samples, "Parameter coordinates to probe");
    grad->add_option("--step", gc_step, "Central-difference step");

    // selftest
    app.add_subcommand("selftest", "Run the built-in invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (sim->parsed()) {
            return run_simulate(sim_subjects, sim_side, sim_seed, sim_out, sim_dose, sim_scale,
                                phantom);
        }
        if (train->parsed()) {
            apply_profile(train_profile, train, train_model, &train_flags);
            return run_train(train_manifest, train_out, train_model, train_flags, train_subjects,
                             val_subjects);
        }
        if (rec->parsed()) {
            apply_profile(rec_profile, rec, rec_model, nullptr);
            return run_reconstruct(rec_manifest, rec_ckpt, rec_out, rec_model, rec_stride,
                                   rec_threads);
        }
        if (eval->parsed()) return run_evaluate(eval_manifest, eval_recon, eval_out);
        if (grad->parsed()) return run_gradcheck(gc_side, gc_width, gc_seed, gc_samples, gc_step);
        return run_selftest();
    } catch (const pcc::error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
