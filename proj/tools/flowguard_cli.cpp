// flowguard command-line front end. JSON results go to stdout, logs to
// stderr. Exit codes: 0 success, 1 validation error, 2 I/O error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <flowguard/flowguard.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// JSON config files mapping option names (optionally nested per
// subcommand) to values; same schema as the flags themselves.
class ConfigJson : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        json j;
        for (const CLI::Option* opt : app->get_options({})) {
            if (!opt->get_lnames().empty() && opt->get_configurable()) {
                const std::string name = opt->get_lnames()[0];
                if (opt->count() == 1) {
                    j[name] = opt->results().at(0);
                } else if (opt->count() > 1) {
                    j[name] = opt->results();
                } else if (default_also && !opt->get_default_str().empty()) {
                    j[name] = opt->get_default_str();
                }
            }
        }
        return j.dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        json j;
        input >> j;
        return walk(j, "", {});
    }

private:
    std::vector<CLI::ConfigItem> walk(const json& j, const std::string& name,
                                      std::vector<std::string> prefix) const {
        std::vector<CLI::ConfigItem> results;
        if (j.is_object()) {
            if (!name.empty()) prefix.push_back(name);
            for (auto it = j.begin(); it != j.end(); ++it) {
                auto sub = walk(it.value(), it.key(), prefix);
                results.insert(results.end(), sub.begin(), sub.end());
            }
            return results;
        }
        CLI::ConfigItem item;
        item.name = name;
        item.parents = std::move(prefix);
        if (j.is_array()) {
            for (const auto& v : j) {
                item.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
            }
        } else if (j.is_boolean()) {
            item.inputs.push_back(j.get<bool>() ? "true" : "false");
        } else if (j.is_string()) {
            item.inputs.push_back(j.get<std::string>());
        } else {
            item.inputs.push_back(j.dump());
        }
        results.push_back(std::move(item));
        return results;
    }
};

void emit(const json& j) { std::cout << j.dump(2) << std::endl; }

std::vector<int> parse_stage_spec(const std::string& spec) {
    // single stage: "49,45,40,35,30"
    std::vector<int> steps;
    std::string tok;
    std::istringstream in(spec);
    while (std::getline(in, tok, ',')) steps.push_back(std::stoi(tok));
    return steps;
}

std::vector<std::vector<int>> parse_stages_spec(const std::string& spec) {
    // stages separated by ';': "49,45;40,35"
    std::vector<std::vector<int>> stages;
    std::string tok;
    std::istringstream in(spec);
    while (std::getline(in, tok, ';')) stages.push_back(parse_stage_spec(tok));
    return stages;
}

std::map<std::string, flowguard::AffineDecoder> load_decoder_map(const fs::path& dir) {
    std::map<std::string, flowguard::AffineDecoder> decoders;
    if (!fs::is_directory(dir)) {
        throw flowguard::IoError("decoders: not a directory: " + dir.string());
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "decoder.json")) {
            decoders.emplace(entry.path().filename().string(),
                             flowguard::load_affine_decoder(entry.path()));
        }
    }
    if (decoders.empty()) {
        throw flowguard::IoError("decoders: no decoder subdirectories under " + dir.string());
    }
    return decoders;
}

std::vector<flowguard::LatentImagePair> load_pairs_dir(const fs::path& dir) {
    std::ifstream f(dir / "pairs.json");
    if (!f) throw flowguard::IoError("fit-decoder: missing " + (dir / "pairs.json").string());
    json meta;
    f >> meta;
    const int count = meta.at("count").get<int>();
    std::vector<flowguard::LatentImagePair> pairs;
    pairs.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const std::string stem = "pair_" + std::to_string(i);
        pairs.emplace_back(flowguard::read_tensor(dir / (stem + "_z.fgt")),
                           flowguard::read_tensor(dir / (stem + "_x.fgt")));
    }
    return pairs;
}

struct SynthOpts {
    std::string out;
    int n = 200;
    std::vector<std::string> models{"model_a"};
    int T = 50;
    std::vector<int> steps{20, 22, 24, 25, 27, 30, 35, 40, 45, 49};
    std::vector<std::size_t> latent_dims{4, 16, 16};
    std::vector<std::size_t> image_dims{3, 32, 32};
    int hidden_channels = 8;
    int emit_pairs = 0;
    bool emit_decoders = false;
    int decoder_pairs = 1200;
    std::uint64_t seed = 0;
};

int run_synth(const SynthOpts& o) {
    const auto sched = flowguard::default_schedule(o.T);
    auto steps = o.steps;
    std::sort(steps.begin(), steps.end());
    steps.erase(std::unique(steps.begin(), steps.end()), steps.end());

    const fs::path out_dir(o.out);
    json result;
    result["out"] = out_dir.generic_string();

    if (o.emit_pairs > 0) {
        // latent/image pairs from the first model's reference decoder,
        // for fit-decoder
        const flowguard::ReferenceDecoder refdec(
            o.latent_dims, o.image_dims,
            flowguard::model_decoder_seed(o.seed, o.models.at(0)), o.hidden_channels);
        const auto pairs = flowguard::sample_fit_pairs(refdec, o.emit_pairs, o.seed);
        fs::create_directories(out_dir);
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            const std::string stem = "pair_" + std::to_string(i);
            flowguard::write_tensor(pairs[i].first, out_dir / (stem + "_z.fgt"));
            flowguard::write_tensor(pairs[i].second, out_dir / (stem + "_x.fgt"));
        }
        json meta;
        meta["count"] = o.emit_pairs;
        meta["latent_dims"] = o.latent_dims;
        meta["image_dims"] = o.image_dims;
        std::ofstream f(out_dir / "pairs.json", std::ios::trunc);
        f << meta.dump(2) << "\n";
        result["pairs"] = o.emit_pairs;
        emit(result);
        return 0;
    }

    const auto manifest = flowguard::build_synthetic_dataset(
        o.n, o.models, sched, steps, o.seed, out_dir, o.latent_dims, o.image_dims,
        o.hidden_channels);
    result["records"] = manifest.records.size();
    result["total_steps"] = manifest.total_steps;
    result["steps"] = steps;
    result["models"] = o.models;

    if (o.emit_decoders) {
        // per-model affine decoders fit against the model's own reference
        // decoder, so train/eval can run straight from this directory
        for (const auto& model : o.models) {
            const flowguard::ReferenceDecoder refdec(
                o.latent_dims, o.image_dims, flowguard::model_decoder_seed(o.seed, model),
                o.hidden_channels);
            const auto pairs = flowguard::sample_fit_pairs(
                refdec, o.decoder_pairs, flowguard::Rng::derive(o.seed, 0xdec0de).next_u64());
            const auto dec = flowguard::fit_closed_form(pairs, 1e-6);
            flowguard::save_affine_decoder(dec, out_dir / "decoders" / model);
        }
        result["decoders"] = (out_dir / "decoders").generic_string();
    }
    emit(result);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowguard: in-generation NSFW detection for latent diffusion trajectories"};
    app.require_subcommand(1);
    app.config_formatter(std::make_shared<ConfigJson>());
    app.set_config("--config", "", "JSON config file (flags win over file values)");

    // ---- synth ----
    SynthOpts so;
    auto* synth = app.add_subcommand("synth", "generate a synthetic trajectory dataset");
    synth->add_option("--out", so.out, "output directory")->required();
    synth->add_option("--n", so.n, "trajectories per model id");
    synth->add_option("--models", so.models, "model ids")->delimiter(',');
    synth->add_option("--T", so.T, "total generation steps");
    synth->add_option("--steps", so.steps, "stored generation steps")->delimiter(',');
    synth->add_option("--latent-dims", so.latent_dims, "latent dims C,H,W")->delimiter(',');
    synth->add_option("--image-dims", so.image_dims, "image dims 3,H,W")->delimiter(',');
    synth->add_option("--hidden-channels", so.hidden_channels, "reference decoder width");
    synth->add_option("--emit-pairs", so.emit_pairs,
                      "emit N latent/image fit pairs instead of a dataset");
    synth->add_flag("--emit-decoders", so.emit_decoders,
                    "also fit and store per-model affine decoders");
    synth->add_option("--decoder-pairs", so.decoder_pairs,
                      "fit pairs per decoder with --emit-decoders");
    synth->add_option("--seed", so.seed, "RNG seed")->envname("FLOWGUARD_SEED");

    // ---- fit-decoder ----
    struct {
        std::string pairs, out;
        std::string method = "closed";
        double ridge = 0.0;
        double lr = 0.01;
        int epochs = 20;
        int batch = 128;
        std::uint64_t seed = 0;
    } fo;
    auto* fit = app.add_subcommand("fit-decoder", "fit the affine latent decoder");
    fit->add_option("--pairs", fo.pairs, "directory of latent/image pairs")->required();
    fit->add_option("--out", fo.out, "output decoder directory")->required();
    fit->add_option("--method", fo.method, "closed | gradient")
        ->check(CLI::IsMember({"closed", "gradient"}));
    fit->add_option("--ridge", fo.ridge, "ridge strength (closed form)");
    fit->add_option("--lr", fo.lr, "learning rate (gradient)");
    fit->add_option("--epochs", fo.epochs, "epochs (gradient)");
    fit->add_option("--batch", fo.batch, "mini-batch size (gradient)");
    fit->add_option("--seed", fo.seed, "RNG seed")->envname("FLOWGUARD_SEED");

    // ---- decode ----
    struct {
        std::string decoder, input, output;
    } dco;
    auto* dec = app.add_subcommand("decode", "apply a stored affine decoder to a latent");
    dec->add_option("--decoder", dco.decoder, "decoder directory")->required();
    dec->add_option("--input", dco.input, "latent .fgt file")->required();
    dec->add_option("--output", dco.output, "output image .fgt file")->required();

    // ---- filter ----
    struct {
        std::string input, output;
        double r = 0.2;
    } flo;
    auto* filt = app.add_subcommand("filter", "frequency low-pass filter an image tensor");
    filt->add_option("--input", flo.input, "input .fgt file")->required();
    filt->add_option("--output", flo.output, "output .fgt file")->required();
    filt->add_option("--r", flo.r, "keep-radius ratio in (0,1]");

    // ---- train ----
    struct {
        std::string dataset, decoders, out;
        double r = 0.2;
        int epochs_per_stage = 4;
        double lr = 1e-4;
        double lambda = 0.01;
        int batch = 128;
        std::string stages;
        std::string lr_schedule = "fixed";
        std::uint64_t seed = 0;
    } to;
    auto* train = app.add_subcommand("train", "curriculum-train the trajectory classifier");
    train->add_option("--dataset", to.dataset, "dataset directory (with manifest.json)")
        ->required();
    train->add_option("--decoders", to.decoders, "per-model decoder directory")->required();
    train->add_option("--out", to.out, "output classifier directory")->required();
    train->add_option("--r", to.r, "low-pass keep ratio");
    train->add_option("--epochs-per-stage", to.epochs_per_stage, "epochs per stage");
    train->add_option("--lr", to.lr, "learning rate");
    train->add_option("--lambda", to.lambda, "temporal consistency weight");
    train->add_option("--batch", to.batch, "mini-batch size");
    train->add_option("--stages", to.stages,
                      "stage spec, e.g. \"49,45,40,35,30;45,40,35,30,25\" (default 4-stage plan)");
    train->add_option("--lr-schedule", to.lr_schedule, "fixed | cosine_warmup")
        ->check(CLI::IsMember({"fixed", "cosine_warmup"}));
    train->add_option("--seed", to.seed, "RNG seed")->envname("FLOWGUARD_SEED");

    // ---- guard ----
    struct {
        std::string dataset, decoder, classifier, out;
        int record = 0;
        std::vector<int> steps{20, 30, 40};
        double threshold = 0.5;
        double r = 0.2;
    } go;
    auto* guard = app.add_subcommand("guard", "early-exit guard over one stored trajectory");
    guard->add_option("--dataset", go.dataset, "dataset directory")->required();
    guard->add_option("--record", go.record, "record index in the manifest");
    guard->add_option("--decoder", go.decoder, "affine decoder directory")->required();
    guard->add_option("--classifier", go.classifier, "classifier directory")->required();
    guard->add_option("--steps", go.steps, "inspected generation steps")->delimiter(',');
    guard->add_option("--threshold", go.threshold, "decision threshold");
    guard->add_option("--r", go.r, "low-pass keep ratio");
    guard->add_option("--out", go.out, "where to copy the final image on a safe verdict");

    // ---- eval ----
    struct {
        std::string dataset, decoders, classifier;
        std::vector<int> steps{20};
        double threshold = 0.5;
        double r = 0.2;
    } eo;
    auto* ev = app.add_subcommand("eval", "metrics of the guard over a labeled dataset");
    ev->add_option("--dataset", eo.dataset, "dataset directory")->required();
    ev->add_option("--decoders", eo.decoders, "per-model decoder directory")->required();
    ev->add_option("--classifier", eo.classifier, "classifier directory")->required();
    ev->add_option("--steps", eo.steps, "inspected generation steps")->delimiter(',');
    ev->add_option("--threshold", eo.threshold, "decision threshold");
    ev->add_option("--r", eo.r, "low-pass keep ratio");

    // ---- bench ----
    struct {
        std::vector<std::size_t> latent_dims{4, 8, 8};
        std::vector<std::size_t> image_dims{3, 128, 128};
        std::vector<std::size_t> batches{1, 10, 50};
        std::size_t reps = 5;
        std::size_t hidden_channels = 32;
        std::uint64_t seed = 0;
    } bo;
    auto* bench = app.add_subcommand("bench", "linear vs reference decoder benchmark");
    bench->add_option("--latent-dims", bo.latent_dims, "latent dims C,H,W")->delimiter(',');
    bench->add_option("--image-dims", bo.image_dims, "image dims 3,H,W")->delimiter(',');
    bench->add_option("--batches", bo.batches, "batch sizes")->delimiter(',');
    bench->add_option("--reps", bo.reps, "timing repetitions");
    bench->add_option("--hidden-channels", bo.hidden_channels, "reference decoder width");
    bench->add_option("--seed", bo.seed, "RNG seed")->envname("FLOWGUARD_SEED");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            // --help and friends
            return app.exit(e);
        }
        std::cerr << e.what() << "\n\n" << app.help() << std::flush;
        return 1;
    }

    try {
        if (synth->parsed()) return run_synth(so);

        if (fit->parsed()) {
            const auto pairs = load_pairs_dir(fo.pairs);
            flowguard::AffineDecoder decoder =
                fo.method == "closed"
                    ? flowguard::fit_closed_form(pairs, fo.ridge)
                    : flowguard::fit_gradient(pairs, fo.lr, fo.epochs, fo.batch, fo.seed);
            flowguard::save_affine_decoder(decoder, fo.out);
            json result;
            result["method"] = fo.method;
            result["pairs"] = pairs.size();
            result["loss"] = flowguard::affine_fit_loss(decoder, pairs);
            result["parameter_count"] = decoder.parameter_count();
            result["out"] = fs::path(fo.out).generic_string();
            emit(result);
            return 0;
        }

        if (dec->parsed()) {
            const auto decoder = flowguard::load_affine_decoder(dco.decoder);
            const auto z = flowguard::read_tensor(dco.input);
            const auto x = decoder.decode(z);
            flowguard::write_tensor(x, dco.output);
            emit(json{{"input", dco.input}, {"output", dco.output}, {"dims", x.dims()}});
            return 0;
        }

        if (filt->parsed()) {
            const auto x = flowguard::read_tensor(flo.input);
            double max_imag = 0.0;
            const auto y = flowguard::apply_lpf(x, flo.r, &max_imag);
            flowguard::write_tensor(y, flo.output);
            emit(json{{"input", flo.input},
                      {"output", flo.output},
                      {"r", flo.r},
                      {"max_imag_residue", max_imag}});
            return 0;
        }

        if (train->parsed()) {
            const fs::path base(to.dataset);
            const auto manifest = flowguard::read_manifest(base / "manifest.json");
            const auto decoders = load_decoder_map(to.decoders);
            flowguard::CurriculumPlan plan = flowguard::make_default_plan(manifest.total_steps);
            if (!to.stages.empty()) plan.stages = parse_stages_spec(to.stages);
            plan.epochs_per_stage = to.epochs_per_stage;
            plan.learning_rate = to.lr;
            plan.lambda = to.lambda;
            plan.batch = to.batch;
            plan.seed = to.seed;
            plan.lr_schedule = to.lr_schedule;
            plan.validate(manifest.total_steps);

            std::cerr << "training on " << manifest.records.size() << " records, "
                      << plan.stages.size() << " stages\n";
            auto [classifier, report] =
                flowguard::train_curriculum(manifest, base, decoders, to.r, plan);
            classifier.save(to.out, json{{"lpf_r", to.r}});

            json result;
            result["out"] = fs::path(to.out).generic_string();
            result["stage_losses"] = report.stage_losses;
            json acc = json::object();
            for (const auto& [s, a] : report.step_accuracy) acc[std::to_string(s)] = a;
            result["step_accuracy"] = acc;
            emit(result);
            return 0;
        }

        if (guard->parsed()) {
            const fs::path base(go.dataset);
            const auto manifest = flowguard::read_manifest(base / "manifest.json");
            if (go.record < 0 || static_cast<std::size_t>(go.record) >= manifest.records.size()) {
                throw flowguard::ValidationError("guard: record index out of range");
            }
            flowguard::GuardConfig cfg;
            cfg.steps = go.steps;
            std::sort(cfg.steps.begin(), cfg.steps.end());
            cfg.threshold = go.threshold;
            cfg.lpf_r = go.r;
            cfg.decoder = flowguard::load_affine_decoder(go.decoder);
            cfg.classifier = flowguard::Classifier::load(go.classifier);

            const auto& rec = manifest.records[static_cast<std::size_t>(go.record)];
            std::vector<std::pair<int, flowguard::Tensor>> stream;
            for (std::size_t i = 0; i < rec.steps.size(); ++i) {
                stream.emplace_back(rec.steps[i],
                                    flowguard::read_tensor(base / rec.latent_paths[i]));
            }
            const auto decision = flowguard::run_guard(cfg, stream, nullptr);

            json result;
            result["label"] = decision.label;
            if (decision.trigger_step) result["trigger_step"] = *decision.trigger_step;
            json scores = json::array();
            for (const auto& [s, p] : decision.scores) {
                scores.push_back({{"step", s}, {"score", p}});
            }
            result["scores"] = scores;
            result["reference_decodes"] = decision.reference_decodes;
            if (decision.label == 0 && !go.out.empty() && !rec.final_image_path.empty()) {
                // safe verdict: surface the stored final image
                flowguard::write_tensor(flowguard::read_tensor(base / rec.final_image_path),
                                        go.out);
                result["final_image"] = go.out;
            }
            emit(result);
            return 0;
        }

        if (ev->parsed()) {
            const fs::path base(eo.dataset);
            const auto manifest = flowguard::read_manifest(base / "manifest.json");
            const auto decoders = load_decoder_map(eo.decoders);
            const auto classifier = flowguard::Classifier::load(eo.classifier);
            auto steps = eo.steps;
            std::sort(steps.begin(), steps.end());

            const auto trajectories = flowguard::load_trajectories(manifest, base, &steps);
            std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
            std::map<std::string, std::vector<flowguard::Trajectory>> by_model;
            for (const auto& t : trajectories) by_model[t.model_id].push_back(t);
            for (const auto& [model, group] : by_model) {
                auto it = decoders.find(model);
                if (it == decoders.end()) {
                    throw flowguard::ValidationError("eval: no decoder for model " + model);
                }
                flowguard::GuardConfig cfg;
                cfg.steps = steps;
                cfg.threshold = eo.threshold;
                cfg.lpf_r = eo.r;
                cfg.decoder = it->second;
                cfg.classifier = classifier;
                const auto m = flowguard::evaluate(cfg, group);
                tp += m.tp;
                fp += m.fp;
                tn += m.tn;
                fn += m.fn;
            }
            emit(flowguard::metrics_to_json(flowguard::metrics_from_counts(tp, fp, tn, fn)));
            return 0;
        }

        if (bench->parsed()) {
            const auto report = flowguard::bench_decoders(bo.latent_dims, bo.image_dims,
                                                          bo.batches, bo.reps, bo.seed,
                                                          bo.hidden_channels);
            emit(flowguard::bench_to_json(report));
            return 0;
        }
    } catch (const flowguard::IoError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 2;
    } catch (const flowguard::ValidationError& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 1;
}
