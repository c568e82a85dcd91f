#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "odekws/checkpoint.hpp"
#include "odekws/dataset.hpp"
#include "odekws/errors.hpp"
#include "odekws/model.hpp"
#include "odekws/trainer.hpp"

namespace odekws::cli {

namespace detail {

// The unknown/silence subsample and silence waveforms are pinned by this
// constant, so every command sees the same splits whatever --seed says
// (--seed steers initialization, shuffling and augmentation only).
inline constexpr std::uint64_t kDatasetSeed = 17;

inline std::string num(double v) {
    char buf[64];
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
        if (std::strtod(buf, nullptr) == v) break;  // shortest exact form
    }
    return buf;
}

inline std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f%%", 100.0 * v);
    return buf;
}

inline LabelMap labels_for(const std::string& subset) {
    return subset.empty() ? LabelMap::standard() : LabelMap::subset(split_task(subset));
}

inline Split split_from_name(const std::string& name) {
    if (name == "validation") return Split::val;
    if (name == "test") return Split::test;
    throw ConfigError("unknown split: " + name);
}

inline std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    return parts;
}

inline std::vector<double> parse_doubles(const std::string& s) {
    std::vector<double> out;
    for (const std::string& part : split_commas(s)) {
        if (part.empty()) throw ConfigError("empty entry in value list '" + s + "'");
        char* end = nullptr;
        const double v = std::strtod(part.c_str(), &end);
        if (end != part.c_str() + part.size())
            throw ConfigError("not a number: '" + part + "'");
        out.push_back(v);
    }
    return out;
}

inline std::ofstream open_csv(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);  // binary: LF endings
    if (!os) throw IoError("cannot write CSV: " + path);
    return os;
}

// --- prepare -------------------------------------------------------------

struct PrepareArgs {
    std::string data_dir;
    std::string subset;
};

inline int cmd_prepare(const PrepareArgs& a) {
    const LabelMap labels = labels_for(a.subset);
    const DatasetIndex index = build_index(a.data_dir, labels, kDatasetSeed);

    std::printf("dataset: %s\n", index.root.c_str());
    std::printf("task: %s (%d classes)\n",
                a.subset.empty() ? "standard ten keywords" : a.subset.c_str(),
                labels.n_classes());
    std::printf("noise recordings: %zu\n", index.noise_files.size());
    std::printf("splits: train %zu, validation %zu, test %zu\n\n", index.train.size(),
                index.val.size(), index.test.size());

    std::printf("%-12s %8s %12s %8s\n", "class", "train", "validation", "test");
    for (int label = 0; label < labels.n_classes(); ++label) {
        const auto count = [&](const std::vector<Entry>& split) {
            return std::count_if(split.begin(), split.end(),
                                 [&](const Entry& e) { return e.label == label; });
        };
        std::printf("%-12s %8lld %12lld %8lld\n", labels.class_name(label).c_str(),
                    static_cast<long long>(count(index.train)),
                    static_cast<long long>(count(index.val)),
                    static_cast<long long>(count(index.test)));
    }
    return 0;
}

// --- train ---------------------------------------------------------------

struct TrainArgs {
    std::string model;
    std::string data_dir;
    std::uint64_t seed = 0;
    std::string out;
    int epochs = 30;
    std::string subset;
};

inline int cmd_train(const TrainArgs& a) {
    const Variant variant = variant_from_name(a.model);
    const LabelMap labels = labels_for(a.subset);
    const DatasetIndex index = build_index(a.data_dir, labels, kDatasetSeed);
    const auto noise = load_noise_pool(index);

    const ModelSpec spec = ModelSpec::for_variant(variant, labels.n_classes());
    const TrainConfig cfg = TrainConfig::for_variant(variant, a.seed, a.epochs);
    auto model = build_model<float>(spec, a.seed);

    std::printf("training %s on %zu clips (%d classes), seed %llu, %d epochs\n",
                a.model.c_str(), index.train.size(), labels.n_classes(),
                static_cast<unsigned long long>(a.seed), a.epochs);
    const TrainResult result = train(model, index, noise, cfg, {}, &std::cout);

    save_checkpoint(a.out, model, config_digest(spec, cfg), a.subset, result.produced_epoch);
    {
        auto os = open_csv(a.out + ".steps.csv");
        os << "step,loss\n";
        for (const auto& [step, loss] : result.step_losses)
            os << step << "," << num(loss) << "\n";
    }
    {
        auto os = open_csv(a.out + ".epochs.csv");
        os << "epoch,val_accuracy,mean_nfe\n";
        for (const auto& m : result.epoch_metrics)
            os << m.epoch << "," << num(m.val_accuracy) << "," << num(m.mean_nfe) << "\n";
    }

    std::printf("best validation accuracy: %s\n",
                pct(result.best_validation_accuracy).c_str());
    std::printf("wrote %s, %s.steps.csv, %s.epochs.csv\n", a.out.c_str(), a.out.c_str(),
                a.out.c_str());
    return 0;
}

// --- eval ----------------------------------------------------------------

struct EvalArgs {
    std::string ckpt;
    std::string data_dir;
    std::string split = "test";
    double tol = -1.0;  // negative: use the variant's inference tolerance
    int batch_size = 1;
    std::string bn = "lbn";
};

inline int cmd_eval(const EvalArgs& a) {
    LoadedModel loaded = load_model(a.ckpt);
    const DatasetIndex index = build_index(a.data_dir, loaded.labels, kDatasetSeed);
    const auto noise = load_noise_pool(index);
    FeatureCache cache;

    const double tol = a.tol > 0 ? a.tol : loaded.model.spec.infer_tolerance;
    const BnMode bn = a.bn == "naive" ? BnMode::naive : BnMode::lbn;
    const EvalResult r = evaluate(loaded.model, index, split_from_name(a.split), tol,
                                  a.batch_size, bn, noise, cache);

    std::printf("%s on %s split (%s, tolerance %s, batch %d)\n",
                variant_name(loaded.model.spec.variant).c_str(), a.split.c_str(),
                a.bn.c_str(), num(tol).c_str(), a.batch_size);
    std::printf("accuracy:   %s (%d/%d)\n", pct(r.accuracy).c_str(), r.correct, r.total);
    std::printf("mean NFE:   %s\n", num(r.mean_nfe).c_str());
    std::printf("multiplies: %lld per classification\n\n",
                static_cast<long long>(r.total_mults));
    std::printf("tolerance,accuracy,mean_nfe,total_mults\n");
    std::printf("%s,%s,%s,%lld\n", num(tol).c_str(), num(r.accuracy).c_str(),
                num(r.mean_nfe).c_str(), static_cast<long long>(r.total_mults));
    return 0;
}

// --- count -----------------------------------------------------------------

struct CountArgs {
    std::string model;
    int nfe = 0;
};

inline int cmd_count(const CountArgs& a) {
    const ModelSpec spec = ModelSpec::for_variant(variant_from_name(a.model));
    const CostReport report = cost(spec);

    std::printf("%s cost model\n", a.model.c_str());
    std::printf("%-12s %10s %14s\n", "layer", "params", "multiplies");
    for (const auto& row : report.rows)
        std::printf("%-12s %10lld %14lld%s\n", row.name.c_str(),
                    static_cast<long long>(row.params), static_cast<long long>(row.mults),
                    row.per_eval ? " per eval" : "");
    std::printf("%-12s %10lld\n\n", "total", static_cast<long long>(report.total_params));
    std::printf("total multiplies: %lld + %lld x NFE\n",
                static_cast<long long>(report.mults_fixed),
                static_cast<long long>(report.mults_per_eval));
    std::printf("at NFE = %d:      %lld\n\n", a.nfe,
                static_cast<long long>(report.total_mults(a.nfe)));
    std::printf("layer,params,mults,per_eval\n");
    for (const auto& row : report.rows)
        std::printf("%s,%lld,%lld,%d\n", row.name.c_str(),
                    static_cast<long long>(row.params), static_cast<long long>(row.mults),
                    row.per_eval ? 1 : 0);
    return 0;
}

// --- sweep -----------------------------------------------------------------

struct SweepArgs {
    std::string ckpt;
    std::string data_dir;
    std::string axis;
    std::string values;
    std::string csv;
};

inline int cmd_sweep(const SweepArgs& a) {
    LoadedModel loaded = load_model(a.ckpt);
    const DatasetIndex index = build_index(a.data_dir, loaded.labels, kDatasetSeed);
    const auto noise = load_noise_pool(index);
    FeatureCache cache;

    const std::vector<double> values = parse_doubles(a.values);
    if (values.empty()) throw ConfigError("--values must list at least one value");

    auto os = open_csv(a.csv);
    if (a.axis == "tolerance") {
        os << "tolerance,accuracy,mean_nfe,total_mults\n";
        for (double tol : values) {
            if (!(tol > 0)) throw ConfigError("tolerances must be positive");
            const EvalResult r = evaluate(loaded.model, index, Split::test, tol, 1,
                                          BnMode::lbn, noise, cache);
            os << num(tol) << "," << num(r.accuracy) << "," << num(r.mean_nfe) << ","
               << r.total_mults << "\n";
            std::printf("tolerance %s: accuracy %s, mean NFE %s\n", num(tol).c_str(),
                        pct(r.accuracy).c_str(), num(r.mean_nfe).c_str());
        }
    } else {
        os << "batch_size,accuracy_lbn,accuracy_naive\n";
        for (double v : values) {
            const int batch = static_cast<int>(v);
            if (batch < 1 || static_cast<double>(batch) != v)
                throw ConfigError("batch sizes must be positive integers");
            const EvalResult lbn = evaluate(loaded.model, index, Split::test,
                                            loaded.model.spec.infer_tolerance, batch,
                                            BnMode::lbn, noise, cache);
            const EvalResult naive = evaluate(loaded.model, index, Split::test,
                                              loaded.model.spec.infer_tolerance, batch,
                                              BnMode::naive, noise, cache);
            os << batch << "," << num(lbn.accuracy) << "," << num(naive.accuracy) << "\n";
            std::printf("batch %d: lbn %s, naive %s\n", batch, pct(lbn.accuracy).c_str(),
                        pct(naive.accuracy).c_str());
        }
    }
    os.flush();
    if (!os) throw IoError("failed while writing CSV: " + a.csv);
    std::printf("wrote %s\n", a.csv.c_str());
    return 0;
}

}  // namespace detail

/// Entry point, exposed for in-process testing. `args` excludes the
/// program name. Exit codes: 0 success, 1 runtime failure, 2 usage or
/// file-format error.
inline int run(std::vector<std::string> args) {
    CLI::App app{"Keyword spotting with an ODE-defined classifier depth"};
    app.require_subcommand(1);

    detail::PrepareArgs prep;
    auto* prepare = app.add_subcommand("prepare", "Scan a dataset directory and summarize it");
    prepare->add_option("--data-dir", prep.data_dir, "Dataset root directory")->required();
    prepare->add_option("--subset", prep.subset,
                        "Comma-separated keywords replacing the standard ten");

    detail::TrainArgs tr;
    auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
    train->add_option("--model", tr.model, "ode-tcnn20|ode-tcnn30|ode-tdnn32|ode-tdnn29")
        ->required();
    train->add_option("--data-dir", tr.data_dir, "Dataset root directory")->required();
    train->add_option("--seed", tr.seed, "Initialization/shuffling/augmentation seed")
        ->required();
    train->add_option("--out", tr.out, "Checkpoint output path")->required();
    train->add_option("--epochs", tr.epochs, "Training epochs (default 30)");
    train->add_option("--subset", tr.subset,
                      "Comma-separated keywords replacing the standard ten");

    detail::EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "Score a checkpoint on a split");
    eval->add_option("--ckpt", ev.ckpt, "Checkpoint path")->required();
    eval->add_option("--data-dir", ev.data_dir, "Dataset root directory")->required();
    eval->add_option("--split", ev.split, "validation|test")
        ->required()
        ->check(CLI::IsMember({"validation", "test"}));
    eval->add_option("--tol", ev.tol, "Solver tolerance (default: the variant's)");
    eval->add_option("--batch-size", ev.batch_size, "Evaluation batch size (default 1)");
    eval->add_option("--bn", ev.bn, "lbn|naive (default lbn)")
        ->check(CLI::IsMember({"lbn", "naive"}));

    detail::CountArgs ct;
    auto* count = app.add_subcommand("count", "Parameter and multiply accounting");
    count->add_option("--model", ct.model, "ode-tcnn20|ode-tcnn30|ode-tdnn32|ode-tdnn29")
        ->required();
    count->add_option("--nfe", ct.nfe, "Function evaluations to price")
        ->required()
        ->check(CLI::NonNegativeNumber);

    detail::SweepArgs sw;
    auto* sweep = app.add_subcommand("sweep", "Evaluate along a tolerance or batch axis");
    sweep->add_option("--ckpt", sw.ckpt, "Checkpoint path")->required();
    sweep->add_option("--data-dir", sw.data_dir, "Dataset root directory")->required();
    sweep->add_option("--axis", sw.axis, "tolerance|batch")
        ->required()
        ->check(CLI::IsMember({"tolerance", "batch"}));
    sweep->add_option("--values", sw.values, "Comma-separated axis values")->required();
    sweep->add_option("--csv", sw.csv, "Output CSV path")->required();

    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
        if (prepare->parsed()) return detail::cmd_prepare(prep);
        if (train->parsed()) return detail::cmd_train(tr);
        if (eval->parsed()) return detail::cmd_eval(ev);
        if (count->parsed()) return detail::cmd_count(ct);
        if (sweep->parsed()) return detail::cmd_sweep(sw);
        return 2;  // unreachable: require_subcommand(1)
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints the message or the help text
        return code == 0 ? 0 : 2;
    } catch (const LayoutError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace odekws::cli
