#include <gtest/gtest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "odekws/checkpoint.hpp"
#include "odekws/errors.hpp"
#include "odekws/model.hpp"
#include "odekws/trainer.hpp"

namespace {

namespace fs = std::filesystem;
using odekws::build_model;
using odekws::Checkpoint;
using odekws::config_digest;
using odekws::fnv1a64;
using odekws::hex64;
using odekws::kStemTime;
using odekws::LoadedModel;
using odekws::load_model;
using odekws::Model;
using odekws::ModelSpec;
using odekws::read_checkpoint;
using odekws::save_checkpoint;
using odekws::split_task;
using odekws::StatRecord;
using odekws::TrainConfig;
using odekws::Variant;

std::string temp_path(const std::string& name) {
    return (fs::temp_directory_path() / name).string();
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return std::vector<char>(std::istreambuf_iterator<char>(is),
                             std::istreambuf_iterator<char>());
}

// A model with a populated statistics database, as training would leave it.
Model<float> make_stocked_model(Variant v, int n_classes, std::uint64_t seed) {
    auto model = build_model<float>(ModelSpec::for_variant(v, n_classes), seed);
    std::mt19937_64 rng(seed * 31 + 7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    const auto stock = [&](const std::string& layer, int ch, double t, std::uint64_t count) {
        std::vector<double> mean(ch), var(ch);
        for (int c = 0; c < ch; ++c) {
            mean[c] = dist(rng);
            var[c] = 1.0 + 0.5 * dist(rng);
        }
        model.db.merge(layer, t, mean, var, count);
    };
    const int w = model.spec.width;
    stock("stem_norm", w, kStemTime, 640);
    for (const auto& layer : model.ode_norms)
        for (double t : {0.0, 0.1234567, 0.5, 0.99999}) stock(layer.layer_id, w, t, 320);
    return model;
}

TEST(Digest, StableAndSensitive) {
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);  // offset basis
    EXPECT_EQ(hex64(0xabcull), "0000000000000abc");

    const ModelSpec spec = ModelSpec::for_variant(Variant::tcnn20);
    const TrainConfig cfg = TrainConfig::for_variant(Variant::tcnn20, 42);
    const std::string d1 = config_digest(spec, cfg);
    EXPECT_EQ(d1.size(), 16u);
    EXPECT_EQ(d1, config_digest(spec, cfg));  // pure function

    TrainConfig other = cfg;
    other.seed = 43;
    EXPECT_NE(d1, config_digest(spec, other));
    other = cfg;
    other.lr0 = 0.2;
    EXPECT_NE(d1, config_digest(spec, other));
    EXPECT_NE(d1, config_digest(ModelSpec::for_variant(Variant::tcnn30), cfg));
}

TEST(TaskString, SplitsOnCommas) {
    EXPECT_TRUE(split_task("").empty());
    EXPECT_EQ(split_task("yes"), (std::vector<std::string>{"yes"}));
    EXPECT_EQ(split_task("yes,no"), (std::vector<std::string>{"yes", "no"}));
}

TEST(Checkpoint, RoundTripsByteForByte) {
    auto model = make_stocked_model(Variant::tcnn20, 4, 5);
    const std::string path_a = temp_path("odekws_ckpt_a.bin");
    const std::string path_b = temp_path("odekws_ckpt_b.bin");

    save_checkpoint(path_a, model, "00112233aabbccdd", "alpha,bravo", 3);
    LoadedModel loaded = load_model(path_a);

    EXPECT_EQ(loaded.task, "alpha,bravo");
    EXPECT_EQ(loaded.config_digest, "00112233aabbccdd");
    EXPECT_EQ(loaded.produced_epoch, 3u);
    EXPECT_EQ(loaded.labels.n_classes(), 4);
    EXPECT_EQ(loaded.model.spec.variant, Variant::tcnn20);

    // Weights and statistics survive exactly.
    auto pa = model.parameters();
    auto pb = loaded.model.parameters();
    ASSERT_EQ(pa.size(), pb.size());
    for (size_t i = 0; i < pa.size(); ++i) {
        EXPECT_EQ(pa[i]->name, pb[i]->name);
        ASSERT_EQ(pa[i]->tensor.dims(), pb[i]->tensor.dims());
        for (std::int64_t j = 0; j < pa[i]->tensor.size(); ++j)
            EXPECT_EQ(pa[i]->tensor[j], pb[i]->tensor[j]);
    }
    const auto& la = model.db.layers();
    const auto& lb = loaded.model.db.layers();
    ASSERT_EQ(la.size(), lb.size());
    for (const auto& [name, recs] : la) {
        ASSERT_TRUE(lb.count(name)) << name;
        const auto& other = lb.at(name);
        ASSERT_EQ(recs.size(), other.size());
        for (const auto& [key, rec] : recs) {
            ASSERT_TRUE(other.count(key)) << name << " @ " << key;
            const StatRecord<float>& o = other.at(key);
            EXPECT_EQ(rec.count, o.count);
            for (size_t c = 0; c < rec.mean.size(); ++c) {
                EXPECT_EQ(rec.mean[c], o.mean[c]);
                EXPECT_EQ(rec.var[c], o.var[c]);
            }
        }
    }

    // Saving what was loaded reproduces the identical byte stream.
    save_checkpoint(path_b, loaded.model, loaded.config_digest, loaded.task,
                    static_cast<int>(loaded.produced_epoch));
    EXPECT_EQ(slurp(path_a), slurp(path_b));
}

TEST(Checkpoint, StandardTaskUsesTheEmptyString) {
    auto model = make_stocked_model(Variant::tdnn32, 12, 6);
    const std::string path = temp_path("odekws_ckpt_std.bin");
    save_checkpoint(path, model, "ffffffffffffffff", "", 30);
    LoadedModel loaded = load_model(path);
    EXPECT_EQ(loaded.labels.n_classes(), 12);
    EXPECT_EQ(loaded.labels.keywords().size(), 10u);
    EXPECT_EQ(loaded.model.spec.variant, Variant::tdnn32);
    EXPECT_EQ(loaded.produced_epoch, 30u);
}

TEST(Checkpoint, RejectsForeignAndDamagedFiles) {
    const std::string garbage = temp_path("odekws_ckpt_garbage.bin");
    {
        std::ofstream os(garbage, std::ios::binary);
        os << "RIFFxxxxWAVE and then some";
    }
    EXPECT_THROW(read_checkpoint(garbage), odekws::ParseError);
    EXPECT_THROW(read_checkpoint(temp_path("odekws_ckpt_missing.bin")), odekws::IoError);

    // Truncation anywhere must be called out, not silently zero-filled.
    auto model = make_stocked_model(Variant::tcnn20, 4, 5);
    const std::string whole = temp_path("odekws_ckpt_whole.bin");
    save_checkpoint(whole, model, "00112233aabbccdd", "alpha,bravo", 3);
    const std::vector<char> bytes = slurp(whole);
    const std::string cut = temp_path("odekws_ckpt_cut.bin");
    for (size_t keep : {size_t(4), size_t(30), bytes.size() / 2, bytes.size() - 3}) {
        {
            std::ofstream os(cut, std::ios::binary | std::ios::trunc);
            os.write(bytes.data(), static_cast<std::streamsize>(keep));
        }
        EXPECT_THROW(read_checkpoint(cut), odekws::ParseError) << "kept " << keep;
    }

    // Trailing junk is equally suspicious.
    {
        std::ofstream os(cut, std::ios::binary | std::ios::trunc);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        os << "extra";
    }
    EXPECT_THROW(read_checkpoint(cut), odekws::ParseError);
}

TEST(Checkpoint, RejectsMismatchedShapes) {
    // A tdnn29 checkpoint relabeled as tdnn32 must fail the fit, not load.
    auto model = make_stocked_model(Variant::tdnn29, 4, 5);
    const std::string path = temp_path("odekws_ckpt_relabel.bin");
    save_checkpoint(path, model, "00112233aabbccdd", "alpha,bravo", 1);

    std::vector<char> bytes = slurp(path);
    const std::string from = "ode-tdnn29";
    const std::string to = "ode-tdnn32";
    auto it = std::search(bytes.begin(), bytes.end(), from.begin(), from.end());
    ASSERT_NE(it, bytes.end());
    std::copy(to.begin(), to.end(), it);
    {
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    EXPECT_THROW(load_model(path), odekws::ParseError);
}

TEST(Checkpoint, LoadedModelInfersIdentically) {
    auto model = make_stocked_model(Variant::tcnn20, 4, 5);
    const std::string path = temp_path("odekws_ckpt_infer.bin");
    save_checkpoint(path, model, "0000000000000000", "alpha,bravo", 1);
    LoadedModel loaded = load_model(path);

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    odekws::Tensor<float> x({1, 101, 40});
    for (std::int64_t i = 0; i < x.size(); ++i) x[i] = dist(rng);

    odekws::ForwardOptions opts;
    opts.mode = odekws::RunMode::infer;
    opts.tolerance = 0.1;

    odekws::Tape<float> ta(false), tb(false);
    auto ra = forward(ta, model, ta.leaf(x), opts);
    auto rb = forward(tb, loaded.model, tb.leaf(x), opts);
    const auto& va = ta.value(ra.logits);
    const auto& vb = tb.value(rb.logits);
    ASSERT_EQ(va.size(), vb.size());
    for (std::int64_t i = 0; i < va.size(); ++i) EXPECT_EQ(va[i], vb[i]);
    EXPECT_EQ(ra.stats.nfe, rb.stats.nfe);
}

}  // namespace
