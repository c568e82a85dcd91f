#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "odekws/augment.hpp"
#include "odekws/errors.hpp"
#include "odekws/mfcc.hpp"
#include "odekws/wav.hpp"

namespace odekws {

/// Class layout of a task: a list of target keywords followed by the two
/// synthetic classes (everything-else and silence).
class LabelMap {
public:
    static LabelMap standard() {
        return LabelMap({"yes", "no", "up", "down", "left", "right", "on", "off",
                         "stop", "go"});
    }

    static LabelMap subset(std::vector<std::string> keywords) {
        return LabelMap(std::move(keywords));
    }

    const std::vector<std::string>& keywords() const { return keywords_; }
    int unknown_label() const { return static_cast<int>(keywords_.size()); }
    int silence_label() const { return static_cast<int>(keywords_.size()) + 1; }
    int n_classes() const { return static_cast<int>(keywords_.size()) + 2; }

    bool is_keyword(const std::string& word) const {
        return std::find(keywords_.begin(), keywords_.end(), word) != keywords_.end();
    }

    /// Label for a spoken word: its keyword index, or the unknown class.
    int label_of(const std::string& word) const {
        const auto it = std::find(keywords_.begin(), keywords_.end(), word);
        if (it == keywords_.end()) return unknown_label();
        return static_cast<int>(it - keywords_.begin());
    }

    std::string class_name(int label) const {
        if (label >= 0 && label < static_cast<int>(keywords_.size()))
            return keywords_[static_cast<size_t>(label)];
        if (label == unknown_label()) return "_unknown_";
        if (label == silence_label()) return "_silence_";
        throw ConfigError("label " + std::to_string(label) + " outside task with " +
                          std::to_string(n_classes()) + " classes");
    }

private:
    explicit LabelMap(std::vector<std::string> keywords) : keywords_(std::move(keywords)) {
        if (keywords_.empty()) throw ConfigError("a task needs at least one keyword");
        std::unordered_set<std::string> seen;
        for (const auto& w : keywords_) {
            if (w.empty()) throw ConfigError("empty keyword in task definition");
            if (!seen.insert(w).second) throw ConfigError("duplicate keyword: " + w);
        }
    }

    std::vector<std::string> keywords_;
};

enum class Split { train = 0, val = 1, test = 2 };

inline const char* split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

struct Entry {
    std::string path;  // empty for silence entries
    std::string word;
    int label = 0;
    bool is_silence = false;
    uint64_t salt = 0;  // pins the waveform of a silence entry
};

struct DatasetIndex {
    std::string root;
    std::vector<Entry> train, val, test;
    std::vector<std::string> noise_files;

    const std::vector<Entry>& split(Split s) const {
        switch (s) {
            case Split::val: return val;
            case Split::test: return test;
            default: return train;
        }
    }
};

namespace detail {

inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t stream, uint64_t index) {
    return mix64(mix64(seed ^ stream * 0x100000001b3ull) ^ index);
}

inline std::unordered_set<std::string> read_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw LayoutError("missing split list: " + path.string());
    std::unordered_set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n' ||
                                 line.back() == ' '))
            line.pop_back();
        if (!line.empty()) out.insert(line);
    }
    return out;
}

}  // namespace detail

/// Scan a dataset laid out Speech-Commands style: one directory per spoken
/// word, `_background_noise_` for noise recordings, and two list files
/// assigning clips to the validation and test splits (everything else
/// trains). Keyword clips keep their word's label; non-keyword words donate
/// a deterministic subsample as the unknown class, and silence entries are
/// synthesized, both sized at `extra_frac` of the split's keyword count
/// (rounded down).
inline DatasetIndex build_index(const std::string& root, const LabelMap& labels,
                                uint64_t seed, double extra_frac = 0.1) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(root)) throw LayoutError("dataset root is not a directory: " + root);

    const auto val_list = detail::read_list(fs::path(root) / "validation_list.txt");
    const auto test_list = detail::read_list(fs::path(root) / "testing_list.txt");

    DatasetIndex index;
    index.root = root;

    std::vector<std::string> words;
    for (const auto& dirent : fs::directory_iterator(root)) {
        if (!dirent.is_directory()) continue;
        const std::string name = dirent.path().filename().string();
        if (name.empty() || name.front() == '_') continue;
        words.push_back(name);
    }
    std::sort(words.begin(), words.end());
    if (words.empty()) throw LayoutError("no word directories under " + root);

    std::vector<Entry>* splits[3] = {&index.train, &index.val, &index.test};
    std::vector<Entry> unknown_pool[3];
    size_t keyword_count[3] = {0, 0, 0};

    for (const auto& word : words) {
        std::vector<std::string> files;
        for (const auto& f : fs::directory_iterator(fs::path(root) / word))
            if (f.is_regular_file() && f.path().extension() == ".wav")
                files.push_back(f.path().filename().string());
        std::sort(files.begin(), files.end());

        for (const auto& file : files) {
            const std::string rel = word + "/" + file;
            int s = 0;
            if (val_list.count(rel))
                s = 1;
            else if (test_list.count(rel))
                s = 2;
            Entry e{(fs::path(root) / rel).string(), word, 0, false, 0};
            if (labels.is_keyword(word)) {
                e.label = labels.label_of(word);
                splits[s]->push_back(std::move(e));
                ++keyword_count[s];
            } else {
                e.label = labels.unknown_label();
                unknown_pool[s].push_back(std::move(e));
            }
        }
    }

    for (int s = 0; s < 3; ++s) {
        if (keyword_count[s] == 0)
            throw EmptySplitError(std::string("no keyword clips in the ") +
                                  split_name(static_cast<Split>(s)) + " split");
        const size_t target =
            static_cast<size_t>(extra_frac * static_cast<double>(keyword_count[s]));

        auto& pool = unknown_pool[s];
        std::mt19937_64 rng(detail::derive_seed(seed, 0xabcdu, static_cast<uint64_t>(s)));
        std::shuffle(pool.begin(), pool.end(), rng);
        const size_t take = std::min(target, pool.size());
        for (size_t i = 0; i < take; ++i) splits[s]->push_back(std::move(pool[i]));

        for (size_t i = 0; i < target; ++i) {
            Entry e;
            e.word = "_silence_";
            e.label = labels.silence_label();
            e.is_silence = true;
            e.salt = detail::derive_seed(seed, 0x51edu + static_cast<uint64_t>(s), i);
            splits[s]->push_back(std::move(e));
        }
    }

    const auto noise_dir = fs::path(root) / "_background_noise_";
    if (!fs::is_directory(noise_dir))
        throw LayoutError("missing _background_noise_ directory under " + root);
    for (const auto& f : fs::directory_iterator(noise_dir))
        if (f.is_regular_file() && f.path().extension() == ".wav")
            index.noise_files.push_back(f.path().string());
    std::sort(index.noise_files.begin(), index.noise_files.end());
    if (index.noise_files.empty())
        throw LayoutError("no background recordings under " + noise_dir.string());

    return index;
}

/// Load every background recording at its native length.
inline std::vector<std::vector<float>> load_noise_pool(const DatasetIndex& index) {
    std::vector<std::vector<float>> pool;
    pool.reserve(index.noise_files.size());
    for (const auto& path : index.noise_files) pool.push_back(load_wav(path));
    return pool;
}

/// One-second waveform for an entry: its file, or its salted noise crop.
inline std::vector<float> entry_waveform(const Entry& e,
                                         const std::vector<std::vector<float>>& noise_pool) {
    if (e.is_silence) return realize_silence(noise_pool, e.salt);
    return normalize_clip(load_wav(e.path));
}

/// Batch order for one epoch: a deterministic permutation keyed by
/// (seed, epoch) chopped into batches, the last one possibly short.
inline std::vector<std::vector<size_t>> epoch_batches(size_t n, int batch_size,
                                                      uint64_t seed, int epoch,
                                                      bool shuffled) {
    if (n == 0) throw EmptySplitError("cannot batch an empty split");
    if (batch_size < 1) throw ConfigError("batch size must be positive");
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    if (shuffled) {
        std::mt19937_64 rng(detail::derive_seed(seed, 0xba7c4u, static_cast<uint64_t>(epoch)));
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<std::vector<size_t>> batches;
    for (size_t at = 0; at < n; at += static_cast<size_t>(batch_size)) {
        const size_t end = std::min(n, at + static_cast<size_t>(batch_size));
        batches.emplace_back(order.begin() + static_cast<long>(at),
                             order.begin() + static_cast<long>(end));
    }
    return batches;
}

/// Memoized clean (un-augmented) features, for the evaluation splits.
class FeatureCache {
public:
    const std::vector<float>& features(const Entry& e,
                                       const std::vector<std::vector<float>>& noise_pool,
                                       const MfccConfig& cfg = {}) {
        const std::string key =
            e.is_silence ? "silence#" + std::to_string(e.salt) : e.path;
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        auto inserted =
            cache_.emplace(key, mfcc_features(entry_waveform(e, noise_pool), cfg));
        return inserted.first->second;
    }

    size_t size() const { return cache_.size(); }

private:
    std::unordered_map<std::string, std::vector<float>> cache_;
};

}  // namespace odekws
