#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "support/wav_write.hpp"

namespace odekws::testsupport {

/// Speech-Commands-shaped corpus of synthetic utterances. Each word is a
/// tone at its own base frequency with per-clip jitter in frequency,
/// amplitude, onset and length, so classes are separable but not trivial
/// duplicates. Includes background noise recordings and the two split
/// list files.
struct SynthSpec {
    std::vector<std::pair<std::string, int>> words;  // word -> total clips
    int val_per_word = 4;
    int test_per_word = 4;
    int noise_files = 2;
    int noise_seconds = 5;
    uint64_t seed = 1234;
};

inline double synth_word_frequency(size_t word_index) {
    static const double table[] = {350.0, 700.0, 1250.0, 2100.0,
                                   3300.0, 5000.0, 900.0,  1700.0};
    return table[word_index % (sizeof(table) / sizeof(table[0]))];
}

inline std::vector<float> synth_utterance(double base_freq, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> freq_jitter(0.97, 1.03);
    std::uniform_real_distribution<double> amp_d(0.3, 0.8);
    std::uniform_int_distribution<int> onset_d(0, 3000);
    std::uniform_int_distribution<int> len_d(9000, 13000);
    std::uniform_real_distribution<double> hiss_d(-0.01, 0.01);

    const double freq = base_freq * freq_jitter(rng);
    const double amp = amp_d(rng);
    const int onset = onset_d(rng);
    const int len = len_d(rng);

    std::vector<float> clip(16000, 0.0f);
    for (int n = 0; n < len && onset + n < 16000; ++n) {
        // quarter-sine fade at both ends to avoid clicks
        const double edge = std::min({1.0, n / 800.0, (len - 1 - n) / 800.0});
        clip[static_cast<size_t>(onset + n)] = static_cast<float>(
            amp * edge * std::sin(2.0 * std::numbers::pi * freq * n / 16000.0));
    }
    for (auto& v : clip) v += static_cast<float>(hiss_d(rng));
    return clip;
}

/// Build the corpus under `dir` (wiped first). Returns the root path.
inline std::string make_synth_corpus(const std::filesystem::path& dir,
                                     const SynthSpec& spec) {
    namespace fs = std::filesystem;
    fs::remove_all(dir);
    fs::create_directories(dir);

    std::ofstream val_list(dir / "validation_list.txt");
    std::ofstream test_list(dir / "testing_list.txt");

    for (size_t w = 0; w < spec.words.size(); ++w) {
        const auto& [word, count] = spec.words[w];
        fs::create_directories(dir / word);
        std::mt19937_64 rng(spec.seed ^ (0x517eull + w * 7919ull));
        for (int i = 0; i < count; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "%04d_nohash_0.wav", i);
            write_wav((dir / word / name).string(),
                      synth_utterance(synth_word_frequency(w), rng));
            if (i < spec.val_per_word)
                val_list << word << "/" << name << "\n";
            else if (i < spec.val_per_word + spec.test_per_word)
                test_list << word << "/" << name << "\n";
        }
    }

    fs::create_directories(dir / "_background_noise_");
    std::mt19937_64 noise_rng(spec.seed ^ 0xbadull);
    for (int k = 0; k < spec.noise_files; ++k) {
        char name[32];
        std::snprintf(name, sizeof(name), "noise_%d.wav", k);
        write_wav((dir / "_background_noise_" / name).string(),
                  noise_clip(noise_rng, spec.noise_seconds * 16000, 0.3));
    }
    return dir.string();
}

}  // namespace odekws::testsupport
