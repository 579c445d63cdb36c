// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria are exact-math checks, oracle equivalence and
// ablation-direction runs at desk scale; each carries a wall-clock budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <graspall/graspall.hpp>

using namespace graspall;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

struct Check {
    std::ostringstream msg;
    bool pass = true;

    void expect(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!msg.str().empty()) msg << "; ";
            msg << what;
        }
    }
};

double iou_of(const SemanticMask& pred, const SemanticMask& gt) {
    eval::IouAccumulator acc;
    acc.add(pred, gt);
    return acc.miou();
}

// ---------------------------------------------------------------------------

Outcome criterion_ema() {
    Check c;
    ResponseLibrary lib(1, 8, 0.05);
    ema_update(lib, 0, FeatureVector(8, 0.0));
    ema_update(lib, 0, FeatureVector(8, 1.0));
    for (int i = 0; i < 8; ++i)
        c.expect(lib.slot_ptr(0)[i] == 0.05, "0.05-vector not exact");

    Rng rng(1);
    ResponseLibrary lib2(1, 6, 0.05);
    FeatureVector s0(6);
    for (double& v : s0.data) v = rng.uniform(-1, 1);
    ema_update(lib2, 0, s0);
    std::vector<FeatureVector> fs;
    for (int j = 0; j < 200; ++j) {
        FeatureVector f(6);
        for (double& v : f.data) v = rng.uniform(-1, 1);
        fs.push_back(f);
        ema_update(lib2, 0, f);
    }
    for (int i = 0; i < 6; ++i) {
        double expect = std::pow(0.95, 200) * s0.data[i];
        for (int j = 1; j <= 200; ++j) expect += 0.05 * std::pow(0.95, 200 - j) * fs[j - 1].data[i];
        c.expect(std::abs(lib2.slot_ptr(0)[i] - expect) < 1e-9, "geometric closed form mismatch");
    }
    return {c.pass, c.msg.str()};
}

Outcome criterion_plc_gradient() {
    Check c;
    const int N = 4, R = 16, D = 8;
    double worst = 0.0;
    for (int instance = 0; instance < 20; ++instance) {
        Rng rng(3000 + instance);
        plc::CurveBank bank = plc::init_curve_bank(N, R, 100 + instance);
        for (double& p : bank.params) p += rng.uniform(-0.5, 0.5);
        ResponseLibrary lib(N, D);
        for (int n = 0; n < N; ++n) {
            FeatureVector s(D);
            for (double& v : s.data) v = rng.uniform(-1, 1);
            ema_update(lib, n, s);
        }
        FeatureVector f(D);
        for (double& v : f.data) v = rng.uniform(-1, 1);
        HistogramDescriptor h;
        h.values.resize(R);
        double acc = 0;
        for (int i = 0; i < R; ++i) {
            acc += rng.uniform() + 1e-6;
            h.values[i] = acc;
        }
        for (double& v : h.values) v /= acc;

        auto sc = plc::spectral_consistency_grad(bank, h, f, lib);
        const double step = 1e-5;
        for (int i = 0; i < N * R; ++i) {
            plc::CurveBank plus = bank, minus = bank;
            plus.params[i] += step;
            minus.params[i] -= step;
            double fd = (plc::spectral_consistency_grad(plus, h, f, lib).loss -
                         plc::spectral_consistency_grad(minus, h, f, lib).loss) /
                        (2 * step);
            double rel = std::abs(fd - sc.grad_params[i]) /
                         std::max({1e-6, std::abs(fd), std::abs(sc.grad_params[i])});
            worst = std::max(worst, rel);
        }
    }
    c.expect(worst < 1e-4, "max rel grad error " + std::to_string(worst));
    return {c.pass, "max rel err " + std::to_string(worst)};
}

Outcome criterion_soft_hard() {
    Check c;
    plc::CurveBank bank = plc::init_curve_bank(12, 32, 55);
    bank.tau = 1e-3;
    Rng rng(7);
    int checked = 0, agree = 0;
    for (int trial = 0; trial < 100; ++trial) {
        HistogramDescriptor h;
        h.values.resize(32);
        double acc = 0;
        for (int i = 0; i < 32; ++i) {
            acc += rng.uniform() + 1e-6;
            h.values[i] = acc;
        }
        for (double& v : h.values) v /= acc;
        auto m = plc::match_soft(bank, h);
        std::vector<double> sorted = m.distances;
        std::sort(sorted.begin(), sorted.end());
        if (sorted[1] - sorted[0] < 1e-6) continue;
        ++checked;
        int argmax = 0;
        for (int n = 1; n < 12; ++n)
            if (m.weights[n] > m.weights[argmax]) argmax = n;
        agree += (argmax == m.hard_id);
    }
    c.expect(checked > 0 && agree == checked,
             std::to_string(agree) + "/" + std::to_string(checked) + " agreements");
    return {c.pass, std::to_string(agree) + "/" + std::to_string(checked) + " non-degenerate cases"};
}

Outcome criterion_attention() {
    Check c;
    Rng rng(11);
    const int C = 8, cells = 16;
    fusion::AttentionProjections proj = fusion::AttentionProjections::make(C, rng);
    fusion::FeatureMap q(4, 4, C), kv(4, 4, C);
    for (double& v : q.cells.a) v = rng.uniform(-1, 1);
    for (double& v : kv.cells.a) v = rng.uniform(-1, 1);
    fusion::AttentionResult res = fusion::cross_attention(q, kv, proj);

    Mat Q = matmul(q.cells, proj.wq);
    Mat K = matmul(kv.cells, proj.wk);
    Mat V = matmul(kv.cells, proj.wv);
    for (int r = 0; r < cells; ++r) {
        double row_sum = 0.0;
        std::vector<double> z(cells);
        double mx = -1e300;
        for (int s = 0; s < cells; ++s) {
            double dot = 0;
            for (int k = 0; k < C; ++k) dot += Q.at(r, k) * K.at(s, k);
            z[s] = dot / std::sqrt(double(C));
            mx = std::max(mx, z[s]);
        }
        double sum = 0;
        for (double& v : z) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (int s = 0; s < cells; ++s) {
            row_sum += res.score.at(r, s);
            c.expect(res.score.at(r, s) >= 0.0, "negative score");
            c.expect(std::abs(res.score.at(r, s) - z[s] / sum) < 1e-6, "oracle mismatch");
        }
        c.expect(std::abs(row_sum - 1.0) <= 1e-6, "row sum off");
        for (int k = 0; k < C; ++k) {
            double acc = 0;
            for (int s = 0; s < cells; ++s) acc += (z[s] / sum) * V.at(s, k);
            c.expect(std::abs(res.out.cells.at(r, k) - acc) < 1e-6, "output oracle mismatch");
        }
    }
    for (int k = 0; k < C; ++k) {
        double lo = 1e300, hi = -1e300;
        for (int s = 0; s < cells; ++s) {
            lo = std::min(lo, V.at(s, k));
            hi = std::max(hi, V.at(s, k));
        }
        for (int r = 0; r < cells; ++r)
            c.expect(res.out.cells.at(r, k) >= lo - 1e-9 && res.out.cells.at(r, k) <= hi + 1e-9,
                     "outside V hull");
    }
    return {c.pass, c.msg.str()};
}

Outcome criterion_grasp_oracle() {
    Check c;
    int agree_point = 0, agree_plan = 0, total = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Rng rng(5000 + trial);
        SemanticMask mask(16, 13, 0);
        for (auto& cl : mask.classes)
            if (rng.uniform() > 0.5) cl = static_cast<std::uint8_t>(1 + rng.index(5));
        DepthMap d(16, 13, 0.0, true);
        for (double& v : d.depth) v = rng.uniform(0.5, 1.5);
        if (grasp::extract_regions(mask).empty()) continue;
        ++total;

        // exhaustive two-stage enumeration
        auto brute = [&](const SemanticMask& m) {
            std::vector<int> areas(256, 0);
            for (auto cl : m.classes) ++areas[cl];
            int best_class = 0;
            for (int cl = 1; cl < 256; ++cl)
                if (areas[cl] > 0 && (best_class == 0 || areas[cl] > areas[best_class]))
                    best_class = cl;
            int k = std::max(1, static_cast<int>(std::ceil(0.01 * areas[best_class])));
            int rmin = 99, rmax = -1, cmin = 99, cmax = -1;
            std::vector<std::tuple<double, long, int, int>> cand;
            for (int r = 0; r < m.height; ++r)
                for (int col = 0; col < m.width; ++col)
                    if (m.at(r, col) == best_class) {
                        rmin = std::min(rmin, r);
                        rmax = std::max(rmax, r);
                        cmin = std::min(cmin, col);
                        cmax = std::max(cmax, col);
                        cand.emplace_back(d.depth_at(r, col), long(r) * m.width + col, r, col);
                    }
            std::sort(cand.begin(), cand.end());
            cand.resize(std::min<std::size_t>(k, cand.size()));
            double cr = (rmin + rmax) / 2, cc = (cmin + cmax) / 2;
            grasp::GraspPoint best;
            double bd = 1e300;
            long bi = -1;
            for (auto [dep, idx, r, col] : cand) {
                double d2 = (r - cr) * (r - cr) + (col - cc) * (col - cc);
                if (d2 < bd || (d2 == bd && idx < bi)) {
                    bd = d2;
                    bi = idx;
                    best = {best_class, r, col, dep};
                }
            }
            return best;
        };

        grasp::GraspPoint got = grasp::select_grasp_point(mask, d, 0);
        grasp::GraspPoint expect = brute(mask);
        if (got.class_id == expect.class_id && got.row == expect.row && got.col == expect.col)
            ++agree_point;

        grasp::GraspPlan plan = grasp::plan_grasp_sequence(mask, d, 0);
        SemanticMask work = mask;
        bool plan_ok = true;
        std::size_t step = 0;
        while (!grasp::extract_regions(work).empty()) {
            grasp::GraspPoint e = brute(work);
            if (step >= plan.points.size() || plan.points[step].class_id != e.class_id ||
                plan.points[step].row != e.row || plan.points[step].col != e.col) {
                plan_ok = false;
                break;
            }
            for (auto& cl : work.classes)
                if (cl == e.class_id) cl = 0;
            ++step;
        }
        plan_ok &= (step == plan.points.size());
        agree_plan += plan_ok;
    }
    c.expect(agree_point == total, "select agreement " + std::to_string(agree_point));
    c.expect(agree_plan == total, "plan agreement " + std::to_string(agree_plan));
    return {c.pass,
            std::to_string(agree_point) + "/" + std::to_string(total) + " select, " +
                std::to_string(agree_plan) + "/" + std::to_string(total) + " plans"};
}

Outcome criterion_tsd_en() {
    Check c;
    int improved = 0;
    for (int trial = 0; trial < 100; ++trial) {
        synth::SceneSpec spec;
        spec.seed = 7000 + trial;
        spec.width = spec.height = 32;
        spec.garment_count = 1 + (trial % 3);
        DepthMap clean = synth::generate_scene(spec).depth;

        Rng rng(9000 + trial);
        DepthMap corrupted = clean;
        for (int i = 0; i < corrupted.pixels(); ++i) {
            corrupted.depth[i] += 0.02 * rng.normal();
            if (rng.uniform() < 0.05) corrupted.valid[i] = 0;
        }
        double mae_in = 0;
        int n_in = 0;
        for (int i = 0; i < clean.pixels(); ++i)
            if (!corrupted.is_hole(i)) {
                mae_in += std::abs(corrupted.depth[i] - clean.depth[i]);
                ++n_in;
            }
        mae_in /= std::max(1, n_in);

        DepthMap out = imageproc::fill_holes(imageproc::bilateral_filter(corrupted));
        double mae_out = 0;
        for (int i = 0; i < clean.pixels(); ++i) mae_out += std::abs(out.depth[i] - clean.depth[i]);
        mae_out /= clean.pixels();
        improved += (mae_out < mae_in);
    }
    c.expect(improved >= 95, "improved only " + std::to_string(improved) + "/100");
    return {c.pass, std::to_string(improved) + "/100 trials improved"};
}

struct AblationResult {
    int full_beats_fixed = 0;
    int full_drop_smaller = 0;
    int seeds = 0;
};

AblationResult run_ablation() {
    AblationResult res;
    const std::vector<double> levels = {1.0, 0.9, 0.8, 0.6};
    for (int seed = 0; seed < 5; ++seed) {
        ++res.seeds;
        std::uint64_t base = 10000 + static_cast<std::uint64_t>(seed) * 1000;

        fusion::Dataset train_set, test_set;
        auto fill = [&](fusion::Dataset& ds, std::uint64_t first, int groups) {
            for (int g = 0; g < groups; ++g) {
                synth::SceneSpec spec;
                spec.seed = first + static_cast<std::uint64_t>(g);
                spec.width = spec.height = 48;
                spec.garment_count = 1 + (g % 3);
                synth::Scene scene = synth::generate_scene(spec);
                fusion::Group group;
                for (double lvl : levels) {
                    synth::Scene deg = synth::degrade(scene, lvl);
                    fusion::Sample s;
                    s.rgb = std::move(deg.rgb);
                    s.depth = deg.depth;
                    s.mask = deg.mask;
                    s.level = lvl;
                    s.group = static_cast<int>(ds.groups.size());
                    group.samples.push_back(static_cast<int>(ds.samples.size()));
                    ds.samples.push_back(std::move(s));
                }
                ds.groups.push_back(std::move(group));
            }
        };
        fill(train_set, base, 60);
        fill(test_set, base + 500, 15);

        fusion::ModelConfig cfg;
        cfg.plc_curves = 8;
        cfg.plc_points = 64;
        fusion::prepare_dataset(train_set, cfg);
        fusion::prepare_dataset(test_set, cfg);

        auto train_variant = [&](fusion::Variant variant) {
            fusion::ModelConfig vc = cfg;
            vc.variant = variant;
            fusion::Model m = fusion::make_model(vc, 77 + static_cast<std::uint64_t>(seed));
            fusion::train_luminance_alignment(m, train_set, 4, 0.05);
            fusion::train_structure(m, train_set, 3, 0.05);
            fusion::train_mask(m, train_set, 10, 0.08);
            return m;
        };
        fusion::Model full = train_variant(fusion::Variant::full);
        fusion::Model fixed = train_variant(fusion::Variant::fixed_slot);
        fusion::Model nolib = train_variant(fusion::Variant::no_library);

        auto evaluate = [&](const fusion::Model& m) {
            eval::IouAccumulator all;
            std::map<std::string, eval::IouAccumulator> bands;
            for (const auto& s : test_set.samples) {
                SemanticMask pred = fusion::predict_mask(m, s.rgb);
                all.add(pred, s.mask);
                bands[eval::band_key(s.mean_luma)].add(pred, s.mask);
            }
            return std::pair{all.miou(),
                             bands["90-120"].miou() - bands["0-30"].miou()};
        };
        auto [full_miou, full_drop] = evaluate(full);
        auto [fixed_miou, fixed_drop] = evaluate(fixed);
        auto [nolib_miou, nolib_drop] = evaluate(nolib);
        (void)nolib_miou;

        std::printf("    seed %d: full %.4f (drop %.4f) fixed-slot %.4f no-library drop %.4f\n",
                    seed, full_miou, full_drop, fixed_miou, nolib_drop);
        res.full_beats_fixed += (full_miou > fixed_miou);
        res.full_drop_smaller += (full_drop < nolib_drop);
    }
    return res;
}

Outcome criterion_fda() {
    Check c;
    auto smooth = [](int w, int h, std::uint64_t seed, double base_level) {
        Rng rng(seed);
        double f1 = rng.uniform(1, 3), f2 = rng.uniform(1, 3);
        double p1 = rng.uniform(0, 6.28), p2 = rng.uniform(0, 6.28);
        RgbImage img(w, h);
        for (int r = 0; r < h; ++r)
            for (int col = 0; col < w; ++col)
                for (int ch = 0; ch < 3; ++ch)
                    img.at(r, col, ch) = base_level + 0.12 * std::sin(6.28318 * f1 * col / w + p1 + ch) *
                                                          std::cos(6.28318 * f2 * r / h + p2);
        return img;
    };
    RgbImage src = smooth(40, 32, 21, 0.55);
    RgbImage tgt = smooth(40, 32, 22, 0.45);

    RgbImage id0 = fda::fda_transfer(src, tgt, 0.0);
    c.expect(id0.data == src.data, "beta=0 not exact identity");

    RgbImage self = fda::fda_transfer(src, src, 0.05);
    double self_diff = 0;
    for (std::size_t i = 0; i < src.data.size(); ++i)
        self_diff = std::max(self_diff, std::abs(self.data[i] - src.data[i]));
    c.expect(self_diff < 1e-5, "self transfer diff " + std::to_string(self_diff));

    fda::Spectrum ss = fda::forward_spectrum(src);
    for (double beta : {0.01, 0.05, 0.09}) {
        RgbImage out = fda::fda_transfer(src, tgt, beta);
        fda::Spectrum os = fda::forward_spectrum(out);
        for (int ch = 0; ch < 3; ++ch)
            for (std::size_t i = 0; i < os.phase[ch].size(); ++i) {
                if (os.amplitude[ch][i] <= 1e-6 || ss.amplitude[ch][i] <= 1e-6) continue;
                double d = std::abs(os.phase[ch][i] - ss.phase[ch][i]);
                d = std::min(d, 2 * 3.141592653589793 - d);
                c.expect(d < 1e-6, "phase drift at beta " + std::to_string(beta));
            }
    }
    return {c.pass, c.msg.str()};
}

Outcome criterion_determinism(const std::string& cli) {
    Check c;
    // library-level round trips
    plc::CurveBank bank = plc::init_curve_bank(12, 256, 5);
    auto b1 = plc::serialize_curve_bank(bank);
    c.expect(plc::serialize_curve_bank(plc::deserialize_curve_bank(b1, "m")) == b1,
             "curve bank round trip");
    ResponseLibrary lib(6, 8);
    ema_update(lib, 2, FeatureVector(8, 0.7));
    auto l1 = serialize_library(lib);
    c.expect(serialize_library(deserialize_library(l1, "m")) == l1, "library round trip");

    fusion::ModelConfig cfg;
    cfg.channels = 8;
    cfg.plc_curves = 4;
    cfg.plc_points = 16;
    fusion::Model model = fusion::make_model(cfg, 9);
    std::string dir = (fs::temp_directory_path() / "graspall_acc_ckpt").string();
    fs::create_directories(dir);
    fusion::save_model(model, dir + "/model.gal");
    fusion::save_model(fusion::load_model(dir + "/model.gal"), dir + "/model2.gal");
    c.expect(io::read_file(dir + "/model.gal") == io::read_file(dir + "/model2.gal"),
             "checkpoint round trip");

    // CLI byte-reproducibility with a fixed seed
    std::string base = (fs::temp_directory_path() / "graspall_acc_cli").string();
    fs::remove_all(base);
    fs::create_directories(base);
    std::ofstream(base + "/cfg") << "synth.scenes = 3\nsynth.width = 48\nsynth.height = 48\n"
                                 << "plc.curves = 6\nplc.points = 32\nfusion.channels = 8\n"
                                 << "train.align_epochs = 2\ntrain.structure_epochs = 1\n"
                                 << "train.mask_epochs = 2\n";
    auto sh = [&](const std::string& args) {
        std::string cmd = cli + " " + args + " >/dev/null 2>&1";
        return std::system(cmd.c_str()) == 0;
    };
    c.expect(sh("synth --out " + base + "/c1 --seed 4 --config " + base + "/cfg"), "synth run 1");
    c.expect(sh("synth --out " + base + "/c2 --seed 4 --config " + base + "/cfg"), "synth run 2");
    for (const auto& e : fs::recursive_directory_iterator(base + "/c1"))
        if (e.is_regular_file()) {
            std::string rel = fs::relative(e.path(), base + "/c1").string();
            c.expect(io::read_file(e.path().string()) ==
                         io::read_file((fs::path(base) / "c2" / rel).string()),
                     "synth bytes differ: " + rel);
        }
    c.expect(sh("train --corpus " + base + "/c1 --out " + base + "/r1 --seed 8 --config " + base + "/cfg"),
             "train run 1");
    c.expect(sh("train --corpus " + base + "/c1 --out " + base + "/r2 --seed 8 --config " + base + "/cfg"),
             "train run 2");
    c.expect(io::read_file(base + "/r1/model.gal") == io::read_file(base + "/r2/model.gal"),
             "train bytes differ");
    return {c.pass, c.msg.str()};
}

} // namespace

int main() {
    using clock = std::chrono::steady_clock;
    int failures = 0;
    AblationResult ablation;

    struct Entry {
        const char* name;
        double budget_s;
        std::function<Outcome()> fn;
    };

    std::vector<Entry> entries = {
        {"1. EMA exactness (alpha = 0.05, geometric closed form)", 1.0, criterion_ema},
        {"2. PLC spectral-consistency gradient vs finite differences", 5.0, criterion_plc_gradient},
        {"3. soft/hard match consistency at tau = 1e-3", 1.0, criterion_soft_hard},
        {"4. attention sanity vs dense oracle", 5.0, criterion_attention},
        {"5. grasp search equals exhaustive enumeration", 10.0, criterion_grasp_oracle},
        {"6. TSD-En improves noisy, holed depth", 30.0, criterion_tsd_en},
        {"7. full pipeline beats the fixed-slot ablation", 600.0,
         [&] {
             ablation = run_ablation();
             bool ok = ablation.full_beats_fixed >= 4;
             return Outcome{ok, std::to_string(ablation.full_beats_fixed) + "/5 seeds"};
         }},
        {"8. bright-to-dark mIoU drop smaller than the no-library ablation", 1.0,
         [&] {
             bool ok = ablation.seeds == 5 && ablation.full_drop_smaller >= 4;
             return Outcome{ok, std::to_string(ablation.full_drop_smaller) + "/5 seeds"};
         }},
        {"9. FDA identity, self-transfer and phase preservation", 5.0, criterion_fda},
        {"10. determinism and bit-exact serialization", 120.0,
         [] { return criterion_determinism(GRASPALL_CLI_PATH); }},
    };

    for (auto& e : entries) {
        auto t0 = clock::now();
        Outcome o;
        try {
            o = e.fn();
        } catch (const std::exception& ex) {
            o.pass = false;
            o.detail = std::string("exception: ") + ex.what();
        }
        double secs = std::chrono::duration<double>(clock::now() - t0).count();
        bool in_budget = secs <= e.budget_s;
        bool pass = o.pass && in_budget;
        std::printf("[%s] %s (%.2fs%s)%s%s\n", pass ? "PASS" : "FAIL", e.name, secs,
                    in_budget ? "" : " OVER BUDGET", o.detail.empty() ? "" : " - ",
                    o.detail.c_str());
        failures += !pass;
    }
    if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
