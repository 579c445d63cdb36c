// Batch CLI wiring the perception stack into reproducible pipelines.
// Exit codes: 0 success, 1 usage, 2 data error, 3 numeric error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <graspall/graspall.hpp>

namespace fs = std::filesystem;
using namespace graspall;

namespace {

Config load_config(const std::string& path) {
    return path.empty() ? Config() : Config::from_file(path);
}

fusion::ModelConfig model_config(const Config& cfg, const std::string& variant) {
    fusion::ModelConfig mc;
    mc.patch = cfg.geti("fusion.patch");
    mc.channels = cfg.geti("fusion.channels");
    mc.classes = cfg.geti("fusion.classes");
    mc.plc_curves = cfg.geti("plc.curves");
    mc.plc_points = cfg.geti("plc.points");
    mc.tau = cfg.getd("plc.tau");
    mc.alpha = cfg.getd("memory.alpha");
    mc.plc_lr = cfg.getd("plc.lr");
    mc.canny_sigma = cfg.getd("canny.sigma");
    mc.canny_low = cfg.getd("canny.low");
    mc.canny_high = cfg.getd("canny.high");
    if (variant == "full")
        mc.variant = fusion::Variant::full;
    else if (variant == "fixed-slot")
        mc.variant = fusion::Variant::fixed_slot;
    else if (variant == "no-library")
        mc.variant = fusion::Variant::no_library;
    else
        throw InvalidArgument("unknown variant: " + variant);
    return mc;
}

fusion::Dataset load_corpus_dataset(const std::string& corpus) {
    fusion::Dataset ds;
    std::map<std::uint64_t, int> group_of_seed;
    for (const std::string& dir : synth::list_corpus(corpus)) {
        synth::LoadedScene sc = synth::load_scene_dir(dir);
        auto [it, fresh] = group_of_seed.emplace(sc.seed, static_cast<int>(ds.groups.size()));
        if (fresh) ds.groups.emplace_back();
        fusion::Sample s;
        s.rgb = std::move(sc.rgb);
        s.depth = std::move(sc.depth);
        s.mask = std::move(sc.mask);
        s.level = sc.level;
        s.group = it->second;
        ds.groups[it->second].samples.push_back(static_cast<int>(ds.samples.size()));
        ds.samples.push_back(std::move(s));
    }
    if (ds.samples.empty()) throw DataError("corpus is empty: " + corpus);
    return ds;
}

DepthMap depth_for_grasping(const DepthMap& d, const Config& cfg) {
    bool holes = false;
    for (int i = 0; i < d.pixels() && !holes; ++i) holes = d.is_hole(i);
    if (!holes) return d;
    DepthMap smooth = imageproc::bilateral_filter(d, cfg.getd("bilateral.sigma_s"),
                                                  cfg.getd("bilateral.sigma_i"),
                                                  cfg.geti("bilateral.window"));
    return imageproc::fill_holes(smooth);
}

int grasp_k(const Config& cfg, int area) {
    double pct = cfg.getd("grasp.k_percent");
    return std::max(1, static_cast<int>(std::ceil(pct / 100.0 * area)));
}

void write_json(const std::string& path, const nlohmann::ordered_json& j) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw DataError("cannot write " + path);
    f << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::string& out_dir, std::uint64_t seed, const std::string& config_path,
              int scenes_override, const std::string& levels_override, int width_override,
              int height_override) {
    Config cfg = load_config(config_path);
    if (scenes_override > 0) cfg.set("synth.scenes", std::to_string(scenes_override));
    if (!levels_override.empty()) cfg.set("synth.levels", levels_override);
    if (width_override > 0) cfg.set("synth.width", std::to_string(width_override));
    if (height_override > 0) cfg.set("synth.height", std::to_string(height_override));

    int scenes = cfg.geti("synth.scenes");
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < scenes; ++i) seeds.push_back(seed + static_cast<std::uint64_t>(i));
    int written = synth::make_corpus(out_dir, seeds, cfg.get_list("synth.levels"),
                                     cfg.geti("synth.width"), cfg.geti("synth.height"));
    std::printf("wrote %d scene triplets under %s\n", written, out_dir.c_str());
    return 0;
}

int cmd_train(const std::string& corpus, const std::string& out_dir, std::uint64_t seed,
              const std::string& config_path, const std::string& variant,
              const std::string& resume) {
    Config cfg = load_config(config_path);
    fusion::ModelConfig mc = model_config(cfg, variant);

    fusion::Model model = resume.empty() ? fusion::make_model(mc, seed)
                                         : fusion::load_model(resume);
    fusion::Dataset ds = load_corpus_dataset(corpus);
    fusion::prepare_dataset(ds, model.cfg);

    double lr = cfg.getd("train.lr");
    auto la = fusion::train_luminance_alignment(model, ds, cfg.geti("train.align_epochs"), lr);
    if (la.skipped_groups > 0)
        std::fprintf(stderr, "warning: %d group(s) of size 1 skipped in alignment\n",
                     la.skipped_groups);
    fusion::TrainLog ls, lm;
    if (cfg.geti("train.structure_epochs") > 0)
        ls = fusion::train_structure(model, ds, cfg.geti("train.structure_epochs"), lr);
    if (cfg.geti("train.mask_epochs") > 0)
        lm = fusion::train_mask(model, ds, cfg.geti("train.mask_epochs"), lr);

    fs::create_directories(out_dir);
    fusion::save_model(model, out_dir + "/model.gal");

    nlohmann::ordered_json log;
    log["seed"] = seed;
    log["variant"] = variant;
    log["align_loss"] = la.epoch_loss;
    log["structure_loss"] = ls.epoch_loss;
    log["mask_loss"] = lm.epoch_loss;
    write_json(out_dir + "/train_log.json", log);
    std::printf("checkpoint written to %s/model.gal\n", out_dir.c_str());
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& image_path,
                const std::string& depth_path, const std::string& out_mask,
                const std::string& out_grasp, const std::string& config_path) {
    Config cfg = load_config(config_path);
    fusion::Model model = fusion::load_model(model_path);
    RgbImage img = io::read_rgb_png(image_path);
    DepthMap depth = io::read_depth_pgm(depth_path);

    SemanticMask mask = fusion::predict_mask(model, img);
    io::write_mask_png(out_mask, mask);

    DepthMap d = depth_for_grasping(depth, cfg);
    grasp::GraspPlan plan = grasp::plan_grasp_sequence(mask, d, 0);
    write_json(out_grasp, grasp::plan_to_json(plan));
    std::printf("mask -> %s, %zu grasp point(s) -> %s\n", out_mask.c_str(), plan.points.size(),
                out_grasp.c_str());
    return 0;
}

int cmd_eval(const std::string& model_path, const std::string& corpus, const std::string& out_path,
             const std::string& config_path) {
    Config cfg = load_config(config_path);
    fusion::Model model = fusion::load_model(model_path);
    eval::EvalReport report;
    for (const std::string& dir : synth::list_corpus(corpus)) {
        synth::LoadedScene sc = synth::load_scene_dir(dir);
        SemanticMask pred = fusion::predict_mask(model, sc.rgb);
        DepthMap d = depth_for_grasping(sc.depth, cfg);
        grasp::GraspPlan plan = grasp::plan_grasp_sequence(pred, d, 0);
        report.add(sc.mean_luma, pred, sc.mask, plan, sc.depth);
    }
    nlohmann::ordered_json j = report.to_json();
    if (!out_path.empty()) write_json(out_path, j);
    std::printf("%s\n", j.dump(2).c_str());
    return 0;
}

int cmd_enhance_depth(const std::string& in_path, const std::string& out_path,
                      const std::string& config_path) {
    Config cfg = load_config(config_path);
    DepthMap d = io::read_depth_pgm(in_path);
    DepthMap smooth = imageproc::bilateral_filter(d, cfg.getd("bilateral.sigma_s"),
                                                  cfg.getd("bilateral.sigma_i"),
                                                  cfg.geti("bilateral.window"));
    DepthMap filled = imageproc::fill_holes(smooth);
    io::write_depth_pgm(out_path, filled);
    std::printf("enhanced depth -> %s\n", out_path.c_str());
    return 0;
}

std::vector<std::string> png_files_sorted(const std::string& dir) {
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png")
            names.push_back(e.path().filename().string());
    std::sort(names.begin(), names.end());
    if (names.empty()) throw DataError("no .png files in " + dir);
    return names;
}

int cmd_fda(const std::string& source, const std::string& target, const std::string& out,
            double beta, std::uint64_t seed, const std::string& config_path) {
    Config cfg = load_config(config_path);
    if (beta < 0) beta = cfg.getd("fda.beta");

    if (fs::is_directory(source)) {
        // batch mode: every source is paired with a uniformly drawn target style
        if (!fs::is_directory(target))
            throw DataError("fda batch mode needs a target directory: " + target);
        auto sources = png_files_sorted(source);
        auto targets = png_files_sorted(target);
        fs::create_directories(out);
        Rng rng(seed);
        for (const auto& name : sources) {
            RgbImage src = io::read_rgb_png(source + "/" + name);
            const std::string& tname = targets[rng.index(static_cast<int>(targets.size()))];
            RgbImage tgt = io::read_rgb_png(target + "/" + tname);
            io::write_rgb_png(out + "/" + name, fda::fda_transfer(src, tgt, beta));
        }
        std::printf("styled %zu image(s) -> %s\n", sources.size(), out.c_str());
        return 0;
    }
    RgbImage src = io::read_rgb_png(source);
    RgbImage tgt = io::read_rgb_png(target);
    io::write_rgb_png(out, fda::fda_transfer(src, tgt, beta));
    std::printf("styled image -> %s\n", out.c_str());
    return 0;
}

int cmd_inspect(const std::string& model_path, const std::string& plc_path,
                const std::string& lib_path) {
    nlohmann::ordered_json j;
    auto curve_stats = [](const plc::CurveBank& bank) {
        nlohmann::ordered_json cb;
        cb["curves"] = bank.n_curves;
        cb["points"] = bank.points;
        cb["tau"] = bank.tau;
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (int n = 0; n < bank.n_curves; ++n) {
            auto v = plc::curve_values(bank, n);
            nlohmann::ordered_json c;
            c["id"] = n;
            c["q25"] = v[bank.points / 4];
            c["q50"] = v[bank.points / 2];
            c["q75"] = v[3 * bank.points / 4];
            arr.push_back(c);
        }
        cb["quartiles"] = arr;
        return cb;
    };
    auto lib_stats = [](const ResponseLibrary& lib) {
        nlohmann::ordered_json lj;
        lj["slots"] = lib.slots;
        lj["dim"] = lib.dim;
        lj["alpha"] = lib.alpha;
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (int s = 0; s < lib.slots; ++s) {
            nlohmann::ordered_json e;
            e["id"] = s;
            e["initialized"] = lib.initialized[s] != 0;
            double norm = 0.0;
            const double* p = lib.slot_ptr(s);
            for (int i = 0; i < lib.dim; ++i) norm += p[i] * p[i];
            e["l2"] = std::sqrt(norm);
            arr.push_back(e);
        }
        lj["slot_stats"] = arr;
        return lj;
    };

    if (!model_path.empty()) {
        fusion::Model model = fusion::load_model(model_path);
        j["curve_bank"] = curve_stats(model.bank);
        j["luminance_library"] = lib_stats(model.lib_l);
        j["structural_library"] = lib_stats(model.lib_s);
        j["classes"] = model.cfg.classes;
        j["channels"] = model.cfg.channels;
        j["patch"] = model.cfg.patch;
    } else if (!plc_path.empty()) {
        j["curve_bank"] = curve_stats(plc::load_curve_bank(plc_path));
    } else if (!lib_path.empty()) {
        j["library"] = lib_stats(load_library(lib_path));
    } else {
        throw InvalidArgument("inspect: pass --model, --plc or --library");
    }
    std::printf("%s\n", j.dump(2).c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Illumination-adaptive garment perception pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir, corpus, model_path, image_path, depth_path;
    std::string out_mask, out_grasp, out_json, in_path, out_path;
    std::string source, target, variant = "full", resume, plc_path, lib_path;
    std::uint64_t seed = 0;
    double beta = -1.0;
    int scenes = 0, width = 0, height = 0;

    auto* synth_cmd = app.add_subcommand("synth", "generate a multi-illumination corpus");
    synth_cmd->add_option("--out", out_dir, "corpus directory")->required();
    synth_cmd->add_option("--seed", seed, "base scene seed")->required();
    synth_cmd->add_option("--config", config_path, "key=value config file");
    synth_cmd->add_option("--scenes", scenes, "number of scenes");
    std::string levels;
    synth_cmd->add_option("--levels", levels, "comma-separated degradation levels");
    synth_cmd->add_option("--width", width, "image width");
    synth_cmd->add_option("--height", height, "image height");

    auto* train_cmd = app.add_subcommand("train", "train the full pipeline on a corpus");
    train_cmd->add_option("--corpus", corpus, "corpus directory")->required();
    train_cmd->add_option("--out", out_dir, "output directory for the checkpoint")->required();
    train_cmd->add_option("--seed", seed, "model init seed")->required();
    train_cmd->add_option("--config", config_path, "key=value config file");
    train_cmd->add_option("--variant", variant, "full | fixed-slot | no-library");
    train_cmd->add_option("--resume", resume, "checkpoint to continue from");

    auto* predict_cmd = app.add_subcommand("predict", "semantic mask + grasp plan for one image");
    predict_cmd->add_option("--model", model_path, "model.gal checkpoint")->required();
    predict_cmd->add_option("--image", image_path, "input RGB PNG")->required();
    predict_cmd->add_option("--depth", depth_path, "input 16-bit depth PGM")->required();
    predict_cmd->add_option("--out-mask", out_mask, "output mask PNG")->required();
    predict_cmd->add_option("--out-grasp", out_grasp, "output grasp plan JSON")->required();
    predict_cmd->add_option("--config", config_path, "key=value config file");

    auto* eval_cmd = app.add_subcommand("eval", "mIoU / mGSR over a corpus, by luminance band");
    eval_cmd->add_option("--model", model_path, "model.gal checkpoint")->required();
    eval_cmd->add_option("--corpus", corpus, "corpus directory")->required();
    eval_cmd->add_option("--out", out_json, "metrics JSON path");
    eval_cmd->add_option("--config", config_path, "key=value config file");

    auto* enh_cmd = app.add_subcommand("enhance-depth", "bilateral smoothing + hole filling");
    enh_cmd->add_option("--in", in_path, "input depth PGM")->required();
    enh_cmd->add_option("--out", out_path, "output depth PGM")->required();
    enh_cmd->add_option("--config", config_path, "key=value config file");

    auto* fda_cmd = app.add_subcommand("fda", "low-frequency amplitude style transfer");
    fda_cmd->add_option("--source", source, "source PNG or directory")->required();
    fda_cmd->add_option("--target", target, "target PNG or style-pool directory")->required();
    fda_cmd->add_option("--out", out_path, "output PNG or directory")->required();
    fda_cmd->add_option("--beta", beta, "low-frequency half-side fraction");
    fda_cmd->add_option("--seed", seed, "pairing seed for batch mode");
    fda_cmd->add_option("--config", config_path, "key=value config file");

    auto* inspect_cmd = app.add_subcommand("inspect", "dump curve bank / library stats as JSON");
    inspect_cmd->add_option("--model", model_path, "model.gal checkpoint");
    inspect_cmd->add_option("--plc", plc_path, "curve bank file");
    inspect_cmd->add_option("--library", lib_path, "response library file");

    try {
        app.parse(argc, argv);
        if (*synth_cmd) return cmd_synth(out_dir, seed, config_path, scenes, levels, width, height);
        if (*train_cmd) return cmd_train(corpus, out_dir, seed, config_path, variant, resume);
        if (*predict_cmd)
            return cmd_predict(model_path, image_path, depth_path, out_mask, out_grasp, config_path);
        if (*eval_cmd) return cmd_eval(model_path, corpus, out_json, config_path);
        if (*enh_cmd) return cmd_enhance_depth(in_path, out_path, config_path);
        if (*fda_cmd) return cmd_fda(source, target, out_path, beta, seed, config_path);
        if (*inspect_cmd) return cmd_inspect(model_path, plc_path, lib_path);
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const InvalidArgument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const DataError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
