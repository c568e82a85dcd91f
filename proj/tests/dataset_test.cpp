#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "odekws/dataset.hpp"
#include "odekws/errors.hpp"
#include "support/synth_dataset.hpp"
#include "support/wav_write.hpp"

namespace {

namespace fs = std::filesystem;
using odekws::build_index;
using odekws::DatasetIndex;
using odekws::Entry;
using odekws::LabelMap;
using odekws::testsupport::make_synth_corpus;
using odekws::testsupport::SynthSpec;

// One corpus shared by the index tests: two keywords, one unknown donor.
// Per word: 6 validation clips, 5 test clips, the rest train.
const std::string& corpus_root() {
    static const std::string root = [] {
        SynthSpec spec;
        spec.words = {{"yes", 41}, {"no", 41}, {"marvin", 22}};
        spec.val_per_word = 6;
        spec.test_per_word = 5;
        return make_synth_corpus(fs::temp_directory_path() / "odekws_dataset_test", spec);
    }();
    return root;
}

int count_label(const std::vector<Entry>& split, int label) {
    return static_cast<int>(std::count_if(split.begin(), split.end(),
                                          [&](const Entry& e) { return e.label == label; }));
}

TEST(LabelMap, StandardTask) {
    const LabelMap labels = LabelMap::standard();
    EXPECT_EQ(labels.n_classes(), 12);
    EXPECT_EQ(labels.label_of("yes"), 0);
    EXPECT_EQ(labels.label_of("stop"), 8);
    EXPECT_EQ(labels.label_of("go"), 9);
    EXPECT_EQ(labels.label_of("marvin"), 10);  // not a target keyword
    EXPECT_EQ(labels.unknown_label(), 10);
    EXPECT_EQ(labels.silence_label(), 11);
    EXPECT_EQ(labels.class_name(11), "_silence_");
    EXPECT_THROW(labels.class_name(12), odekws::ConfigError);
}

TEST(LabelMap, SubsetTask) {
    const LabelMap labels = LabelMap::subset({"yes", "no"});
    EXPECT_EQ(labels.n_classes(), 4);
    EXPECT_EQ(labels.label_of("no"), 1);
    EXPECT_EQ(labels.label_of("up"), 2);  // folded into unknown
    EXPECT_EQ(labels.silence_label(), 3);

    EXPECT_THROW(LabelMap::subset({}), odekws::ConfigError);
    EXPECT_THROW(LabelMap::subset({"yes", "yes"}), odekws::ConfigError);
    EXPECT_THROW(LabelMap::subset({""}), odekws::ConfigError);
}

TEST(Index, SplitSizesAndComposition) {
    const LabelMap labels = LabelMap::subset({"yes", "no"});
    const DatasetIndex index = build_index(corpus_root(), labels, 17);

    // Keywords: 30+30 train, 6+6 val, 5+5 test. Unknown and silence each
    // add floor(0.1 * keywords) per split.
    EXPECT_EQ(index.train.size(), 60u + 6 + 6);
    EXPECT_EQ(index.val.size(), 12u + 1 + 1);
    EXPECT_EQ(index.test.size(), 10u + 1 + 1);

    EXPECT_EQ(count_label(index.train, 0), 30);
    EXPECT_EQ(count_label(index.train, 1), 30);
    EXPECT_EQ(count_label(index.train, labels.unknown_label()), 6);
    EXPECT_EQ(count_label(index.train, labels.silence_label()), 6);
    EXPECT_EQ(count_label(index.val, labels.unknown_label()), 1);
    EXPECT_EQ(count_label(index.test, labels.silence_label()), 1);

    std::set<uint64_t> salts;
    for (const Entry& e : index.train) {
        if (e.is_silence) {
            EXPECT_TRUE(e.path.empty());
            EXPECT_EQ(e.label, labels.silence_label());
            salts.insert(e.salt);
        } else {
            EXPECT_TRUE(fs::exists(e.path)) << e.path;
        }
        if (e.label == labels.unknown_label()) EXPECT_EQ(e.word, "marvin");
    }
    EXPECT_EQ(salts.size(), 6u);  // every silence entry draws its own crop

    EXPECT_EQ(index.noise_files.size(), 2u);
}

TEST(Index, RespectsSplitListsExactly) {
    const LabelMap labels = LabelMap::subset({"yes", "no"});
    const DatasetIndex index = build_index(corpus_root(), labels, 17);

    // Files 0000..0005 of each word are validation, 0006..0010 test.
    for (const Entry& e : index.val)
        if (!e.is_silence && e.word == "yes")
            EXPECT_LT(fs::path(e.path).filename().string(), std::string("0006"));
    for (const Entry& e : index.test)
        if (!e.is_silence && e.word == "no") {
            const std::string name = fs::path(e.path).filename().string();
            EXPECT_GE(name, std::string("0006"));
            EXPECT_LT(name, std::string("0011"));
        }

    // No clip lands in two splits.
    std::set<std::string> seen;
    for (const auto* split : {&index.train, &index.val, &index.test})
        for (const Entry& e : *split)
            if (!e.path.empty()) EXPECT_TRUE(seen.insert(e.path).second) << e.path;
}

TEST(Index, DeterministicForASeed) {
    const LabelMap labels = LabelMap::subset({"yes", "no"});
    const DatasetIndex a = build_index(corpus_root(), labels, 99);
    const DatasetIndex b = build_index(corpus_root(), labels, 99);
    ASSERT_EQ(a.train.size(), b.train.size());
    for (size_t i = 0; i < a.train.size(); ++i) {
        EXPECT_EQ(a.train[i].path, b.train[i].path);
        EXPECT_EQ(a.train[i].label, b.train[i].label);
        EXPECT_EQ(a.train[i].salt, b.train[i].salt);
    }

    // A different seed draws different silence crops.
    const DatasetIndex c = build_index(corpus_root(), labels, 100);
    bool salt_differs = false;
    for (size_t i = 0; i < a.train.size(); ++i)
        if (a.train[i].is_silence && a.train[i].salt != c.train[i].salt)
            salt_differs = true;
    EXPECT_TRUE(salt_differs);
}

TEST(Index, LayoutProblemsAreReported) {
    const LabelMap labels = LabelMap::subset({"yes", "no"});
    EXPECT_THROW(build_index("/nonexistent/place", labels, 1), odekws::LayoutError);

    // A keyword with no clips anywhere leaves a split empty.
    EXPECT_THROW(build_index(corpus_root(), LabelMap::subset({"absent"}), 1),
                 odekws::EmptySplitError);

    const fs::path bare = fs::temp_directory_path() / "odekws_dataset_bare";
    fs::remove_all(bare);
    fs::create_directories(bare / "yes");
    EXPECT_THROW(build_index(bare.string(), labels, 1), odekws::LayoutError);  // no lists

    std::ofstream(bare / "validation_list.txt") << "";
    std::ofstream(bare / "testing_list.txt") << "";
    odekws::testsupport::write_wav((bare / "yes" / "a.wav").string(),
                                   std::vector<float>(16000, 0.1f));
    // yes clips exist in train but val/test keyword splits are empty
    EXPECT_THROW(build_index(bare.string(), LabelMap::subset({"yes"}), 1),
                 odekws::EmptySplitError);
}

TEST(Batching, CoverageAndDeterminism) {
    const auto batches = odekws::epoch_batches(130, 64, 7, 0, true);
    ASSERT_EQ(batches.size(), 3u);
    EXPECT_EQ(batches[0].size(), 64u);
    EXPECT_EQ(batches[1].size(), 64u);
    EXPECT_EQ(batches[2].size(), 2u);

    std::set<size_t> all;
    for (const auto& b : batches)
        for (size_t i : b) EXPECT_TRUE(all.insert(i).second);
    EXPECT_EQ(all.size(), 130u);  // every index exactly once

    const auto same = odekws::epoch_batches(130, 64, 7, 0, true);
    EXPECT_EQ(batches, same);
    const auto next_epoch = odekws::epoch_batches(130, 64, 7, 1, true);
    EXPECT_NE(batches, next_epoch);

    const auto plain = odekws::epoch_batches(5, 2, 7, 0, false);
    EXPECT_EQ(plain[0], (std::vector<size_t>{0, 1}));
    EXPECT_EQ(plain[2], (std::vector<size_t>{4}));

    EXPECT_THROW(odekws::epoch_batches(0, 64, 7, 0, true), odekws::EmptySplitError);
    EXPECT_THROW(odekws::epoch_batches(10, 0, 7, 0, true), odekws::ConfigError);
}

TEST(Waveforms, EntriesAndCache) {
    const LabelMap labels = LabelMap::subset({"yes", "no"});
    const DatasetIndex index = build_index(corpus_root(), labels, 17);
    const auto pool = odekws::load_noise_pool(index);
    ASSERT_EQ(pool.size(), 2u);
    EXPECT_EQ(pool[0].size(), 5u * 16000u);

    const Entry* silence = nullptr;
    const Entry* spoken = nullptr;
    for (const Entry& e : index.train) {
        if (e.is_silence && !silence) silence = &e;
        if (!e.is_silence && !spoken) spoken = &e;
    }
    ASSERT_NE(silence, nullptr);
    ASSERT_NE(spoken, nullptr);

    const auto wave = odekws::entry_waveform(*spoken, pool);
    EXPECT_EQ(wave.size(), 16000u);
    const auto quiet = odekws::entry_waveform(*silence, pool);
    const auto again = odekws::entry_waveform(*silence, pool);
    EXPECT_EQ(quiet, again);  // salted draw is stable

    odekws::FeatureCache cache;
    const auto& f1 = cache.features(*spoken, pool);
    const auto& f2 = cache.features(*spoken, pool);
    EXPECT_EQ(&f1, &f2);  // second hit is memoized
    EXPECT_EQ(cache.size(), 1u);
    EXPECT_EQ(f1.size(), 101u * 40u);
}

}  // namespace
