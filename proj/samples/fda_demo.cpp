// Transfers the illumination style of a dark rendering onto a bright one
// and reports how far the mean luma moved.

#include <cstdio>
#include <graspall/graspall.hpp>

using namespace graspall;

int main() {
    synth::SceneSpec spec;
    spec.seed = 3;
    spec.width = spec.height = 96;
    spec.garment_count = 3;
    synth::Scene bright = synth::generate_scene(spec);
    synth::Scene dark = synth::degrade(bright, 0.7);

    for (double beta : {0.0, 0.01, 0.05, 0.1}) {
        RgbImage styled = fda::fda_transfer(bright.rgb, dark.rgb, beta);
        double luma = imageproc::mean_luma_255(imageproc::rgb_to_luma(styled));
        std::printf("beta %.2f: mean luma %.1f (source %.1f, target %.1f)\n", beta, luma,
                    bright.mean_luma, dark.mean_luma);
    }
    return 0;
}
