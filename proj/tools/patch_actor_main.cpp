// Command-line front end: data generation, training, inference, verified
// selection, evaluation, and overlay export behind one binary. Every
// workflow takes explicit seeds, logs its resolved configuration and input
// digests, and writes byte-deterministic outputs.
//
// Exit codes: 0 success; 2 usage error; 3 missing/unreadable file;
// 4 schema mismatch or unsupported version; 5 empty supervision;
// 6 degenerate labels; 7 generation failure; 8 invalid argument;
// 9 numerical error; 1 anything else.

#include "patch_actor/candidates.hpp"
#include "patch_actor/errors.hpp"
#include "patch_actor/evalharness.hpp"
#include "patch_actor/hash.hpp"
#include "patch_actor/io.hpp"
#include "patch_actor/log.hpp"
#include "patch_actor/rng.hpp"
#include "patch_actor/synthgui.hpp"
#include "patch_actor/training.hpp"
#include "patch_actor/verifier.hpp"
#include "patch_actor/visualize.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

using namespace patch_actor;
using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kStreamVerifierData = 0x76646174; // "vdat"

void log_input(const std::string& path) {
    PA_LOG_INFO("input %s digest %016llx", path.c_str(),
                static_cast<unsigned long long>(file_digest(path)));
}

/// Dataset read with the malformed-line budget: over 10% unreadable lines
/// means the file, not the lines, is the problem.
RecordsFile read_records_checked(const std::string& path) {
    RecordsFile file = read_records(path);
    const std::size_t total = file.records.size() + file.skipped_lines.size();
    if (10 * file.skipped_lines.size() > total) {
        throw SchemaError(path + ": more than 10% of lines are malformed");
    }
    if (file.records.empty()) throw SchemaError(path + ": no readable records");
    log_input(path);
    return file;
}

VerifierDataFile read_examples_checked(const std::string& path) {
    VerifierDataFile file = read_verifier_examples(path);
    const std::size_t total = file.examples.size() + file.skipped_lines.size();
    if (10 * file.skipped_lines.size() > total) {
        throw SchemaError(path + ": more than 10% of lines are malformed");
    }
    if (file.examples.empty()) throw SchemaError(path + ": no readable examples");
    log_input(path);
    return file;
}

Model load_model_logged(const std::string& path) {
    log_input(path);
    return load_model(path);
}

std::unique_ptr<Scorer> make_scorer(const std::string& kind, const std::string& verifier_path,
                                    Scalar oracle_noise, std::uint64_t seed) {
    if (kind == "oracle") return std::make_unique<OracleScorer>(oracle_noise, seed);
    if (kind == "toy") {
        if (verifier_path.empty()) {
            throw InvalidArgument("--scorer toy requires --verifier <file>");
        }
        log_input(verifier_path);
        return std::make_unique<ToyVerifier>(load_verifier(verifier_path));
    }
    throw InvalidArgument("unknown scorer '" + kind + "'");
}

/// Runs fn over [0, n) on a small worker pool; slot order makes the result
/// independent of scheduling. A record that throws becomes a skip.
std::vector<std::optional<std::string>> map_records(
    std::size_t n, int workers, const std::function<std::string(std::size_t)>& fn) {
    std::vector<std::optional<std::string>> out(n);
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                out[i] = fn(i);
            } catch (const std::exception& e) {
                PA_LOG_WARN("record %zu failed: %s", i, e.what());
            }
        }
    };
    const int count =
        std::max(1, std::min(workers, static_cast<int>(std::min<std::size_t>(n, 64))));
    if (count == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(count));
        for (int w = 0; w < count; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    return out;
}

void write_lines(const std::string& path, const char* schema,
                 const std::vector<std::optional<std::string>>& lines) {
    std::size_t skipped = 0;
    for (const auto& line : lines) {
        if (!line) ++skipped;
    }
    if (10 * skipped > lines.size()) {
        throw SchemaError("more than 10% of records failed; refusing to write " + path);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot open for writing: " + path);
    ordered_json header;
    header["schema"] = schema;
    out << header.dump() << '\n';
    for (const auto& line : lines) {
        if (line) out << *line << '\n';
    }
    if (!out) throw FileError("write failed: " + path);
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
    std::uint64_t seed = 0;
    std::string out_dir;
    std::string profile = "default";
    int screens = 1100;
    int records_cap = 0; // 0 = keep everything
    int grid_w = kDefaultImageW;
    int grid_h = kDefaultImageH;
    int patch_px = kDefaultPatchPx;
    int min_elems = kDefaultMinElements;
    int max_elems = kDefaultMaxElements;
    int classes = kDefaultClassCount;
    Scalar noise = -1.0; // <0 = profile default
};

void cmd_gen_data(const GenDataArgs& a) {
    const bool stress = a.profile == "stress";
    GenConfig gcfg;
    gcfg.adjacent_pairs = stress;
    gcfg.noise_scale = a.noise >= 0.0 ? a.noise : (stress ? 0.3 : 0.1);
    PA_LOG_INFO("gen-data: seed=%llu screens=%d records=%d profile=%s grid=%dx%d/%d "
                "elems=%d..%d classes=%d noise=%.3f out=%s",
                static_cast<unsigned long long>(a.seed), a.screens, a.records_cap,
                a.profile.c_str(), a.grid_w, a.grid_h, a.patch_px, a.min_elems, a.max_elems,
                a.classes, gcfg.noise_scale, a.out_dir.c_str());

    const PatchGrid grid = make_grid(a.grid_w, a.grid_h, a.patch_px);
    std::vector<GroundingRecord> records = gen_dataset(a.seed, a.screens, grid, a.min_elems,
                                                       a.max_elems, a.classes, gcfg, a.profile);
    if (a.records_cap > 0) {
        if (static_cast<int>(records.size()) < a.records_cap) {
            throw GenerationFailed("gen-data: " + std::to_string(a.screens) +
                                   " screens yielded only " + std::to_string(records.size()) +
                                   " records, need " + std::to_string(a.records_cap) +
                                   "; raise --screens");
        }
        records.resize(static_cast<std::size_t>(a.records_cap));
    }
    fs::create_directories(a.out_dir);
    const std::string rec_path = (fs::path(a.out_dir) / "records.jsonl").string();
    const std::string ver_path = (fs::path(a.out_dir) / "verifier.jsonl").string();
    write_records(rec_path, records);
    const std::vector<VerifierExample> examples =
        gen_verifier_data(records, mix_seed(a.seed, kStreamVerifierData));
    write_verifier_examples(ver_path, examples);
    std::printf("wrote %zu records to %s\n", records.size(), rec_path.c_str());
    std::printf("wrote %zu verifier examples to %s\n", examples.size(), ver_path.c_str());
}

// -------------------------------------------------------------------- train

struct TrainArgs {
    std::string dataset;
    std::string out;
    std::string loss_csv; // default: loss.csv next to out
    std::uint64_t seed = 0;
    int d = kDefaultDim;
    int classes = kDefaultClassCount;
    int epochs = 10;
    Scalar lr = 1e-3;
    int batch = 32;
    int warmup = 1;
    std::string mode = "full";
};

void cmd_train(const TrainArgs& a) {
    PA_LOG_INFO("train: dataset=%s seed=%llu d=%d classes=%d epochs=%d lr=%g batch=%d "
                "warmup=%d mode=%s out=%s",
                a.dataset.c_str(), static_cast<unsigned long long>(a.seed), a.d, a.classes,
                a.epochs, a.lr, a.batch, a.warmup, a.mode.c_str(), a.out.c_str());
    const RecordsFile data = read_records_checked(a.dataset);

    Model model = init_model(a.d, a.classes, a.seed);
    TrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.warmup_epochs = a.warmup;
    cfg.seed = a.seed;
    cfg.mode = a.mode == "lite" ? TrainMode::lite : TrainMode::full;
    const TrainResult result = train(model, data.records, cfg);

    save_model(a.out, model);
    const std::string csv_path =
        a.loss_csv.empty() ? (fs::path(a.out).parent_path() / "loss.csv").string() : a.loss_csv;
    write_loss_csv(csv_path, result.epoch_mean_loss);
    std::printf("trained on %zu records (%zu rejected), final mean loss %.6f\n",
                data.records.size() - result.rejected_indices.size(),
                result.rejected_indices.size(),
                result.epoch_mean_loss.empty() ? 0.0 : result.epoch_mean_loss.back());
    std::printf("model: %s\nloss curve: %s\n", a.out.c_str(), csv_path.c_str());
}

// ----------------------------------------------------------- train-verifier

struct TrainVerifierArgs {
    std::string dataset;
    std::string out;
    std::string model; // optional: reuse this model's encoder
    std::uint64_t seed = 0;
    int d = kDefaultDim;
    int classes = kDefaultClassCount;
    int epochs = 30;
    Scalar lr = 0.05;
    int batch = 32;
    int crop_px = 1000;
};

void cmd_train_verifier(const TrainVerifierArgs& a) {
    PA_LOG_INFO("train-verifier: dataset=%s seed=%llu d=%d classes=%d epochs=%d lr=%g "
                "batch=%d crop_px=%d model=%s out=%s",
                a.dataset.c_str(), static_cast<unsigned long long>(a.seed), a.d, a.classes,
                a.epochs, a.lr, a.batch, a.crop_px, a.model.empty() ? "-" : a.model.c_str(),
                a.out.c_str());
    const VerifierDataFile data = read_examples_checked(a.dataset);
    EncoderParams encoder;
    if (a.model.empty()) {
        encoder = init_encoder(a.d, a.classes, a.seed);
    } else {
        encoder = load_model_logged(a.model).encoder;
    }
    VerifierTrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.epochs = a.epochs;
    cfg.batch_size = a.batch;
    cfg.seed = a.seed;
    cfg.crop_px = a.crop_px;
    const ToyVerifier verifier = train_toy_verifier(data.examples, encoder, cfg);
    save_verifier(a.out, verifier);
    std::printf("trained verifier on %zu examples, training accuracy %.4f\n",
                data.examples.size(), verifier_accuracy(verifier, data.examples, a.crop_px));
    std::printf("verifier: %s\n", a.out.c_str());
}

// -------------------------------------------------------------------- infer

struct InferArgs {
    std::string model;
    std::string dataset;
    std::string out;
    int max_pool = 20;
    Scalar rel_filter = 0.2;
    int workers = 1;
};

void cmd_infer(const InferArgs& a) {
    PA_LOG_INFO("infer: model=%s dataset=%s max_pool=%d rel_filter=%g workers=%d out=%s",
                a.model.c_str(), a.dataset.c_str(), a.max_pool, a.rel_filter, a.workers,
                a.out.c_str());
    const Model model = load_model_logged(a.model);
    const RecordsFile data = read_records_checked(a.dataset);
    SelectionConfig cfg;
    cfg.max_pool = a.max_pool;
    cfg.rel_filter = a.rel_filter;

    const auto lines = map_records(data.records.size(), a.workers, [&](std::size_t i) {
        const GroundingRecord& rec = data.records[i];
        const AttentionMap map = ground(model, rec);
        const CandidateSet set = build_candidates(map, cfg);
        ordered_json line;
        line["id"] = rec.id;
        line["candidates"] = ordered_json::parse(candidates_json(set)).at("candidates");
        return line.dump();
    });
    write_lines(a.out, kCandidatesSchema, lines);
    std::printf("wrote candidates for %zu records to %s\n", data.records.size(), a.out.c_str());
}

// ------------------------------------------------------------------- select

struct SelectArgs {
    std::string model;
    std::string dataset;
    std::string out;
    std::string scorer = "oracle";
    std::string verifier;
    Scalar oracle_noise = 0.0;
    std::uint64_t seed = 0;
    Scalar gamma = 0.95;
    int max_pool = 20;
    Scalar rel_filter = 0.2;
    int crop_px = 1000;
    std::vector<int> agg_crops;
    int workers = 1;
};

SelectionConfig selection_config(const SelectArgs& a) {
    SelectionConfig cfg;
    cfg.max_pool = a.max_pool;
    cfg.rel_filter = a.rel_filter;
    cfg.gamma = a.gamma;
    cfg.crop_px = a.crop_px;
    if (!a.agg_crops.empty()) {
        cfg.agg_crops = a.agg_crops;
        cfg.use_aggregation = true;
    }
    return cfg;
}

void cmd_select(const SelectArgs& a) {
    PA_LOG_INFO("select: model=%s dataset=%s scorer=%s gamma=%g crop_px=%d agg=%zu "
                "workers=%d out=%s",
                a.model.c_str(), a.dataset.c_str(), a.scorer.c_str(), a.gamma, a.crop_px,
                a.agg_crops.size(), a.workers, a.out.c_str());
    const Model model = load_model_logged(a.model);
    const RecordsFile data = read_records_checked(a.dataset);
    const std::unique_ptr<Scorer> scorer =
        make_scorer(a.scorer, a.verifier, a.oracle_noise, a.seed);
    const SelectionConfig cfg = selection_config(a);

    const auto lines = map_records(data.records.size(), a.workers, [&](std::size_t i) {
        const GroundingRecord& rec = data.records[i];
        const AttentionMap map = ground(model, rec);
        const CandidateSet set = build_candidates(map, cfg);
        const SelectionResult res = select(set, rec, *scorer, cfg);
        ordered_json line;
        line["id"] = rec.id;
        const ordered_json body = ordered_json::parse(selection_json(res));
        for (const auto& [key, value] : body.items()) line[key] = value;
        return line.dump();
    });
    write_lines(a.out, kSelectionsSchema, lines);
    std::printf("wrote selections for %zu records to %s\n", data.records.size(), a.out.c_str());
}

// --------------------------------------------------------------------- eval

struct EvalArgs {
    std::string model;
    std::string dataset;
    std::string out; // optional report path
    std::string pipeline = "plain";
    std::string scorer = "oracle";
    std::string verifier;
    Scalar oracle_noise = 0.0;
    std::uint64_t seed = 0;
    Scalar gamma = 0.95;
    int max_pool = 20;
    Scalar rel_filter = 0.2;
    int crop_px = 1000;
    std::vector<int> agg_crops;
    int workers = 1;
    int hit_k = 3;
};

void cmd_eval(const EvalArgs& a) {
    PA_LOG_INFO("eval: model=%s dataset=%s pipeline=%s scorer=%s gamma=%g workers=%d "
                "hit_k=%d out=%s",
                a.model.c_str(), a.dataset.c_str(), a.pipeline.c_str(), a.scorer.c_str(),
                a.gamma, a.workers, a.hit_k, a.out.empty() ? "-" : a.out.c_str());
    const Model model = load_model_logged(a.model);
    const RecordsFile data = read_records_checked(a.dataset);

    EvalConfig cfg;
    if (a.pipeline == "plain") {
        cfg.pipeline = Pipeline::plain;
    } else if (a.pipeline == "verified") {
        cfg.pipeline = Pipeline::verified;
    } else {
        throw InvalidArgument("unknown pipeline '" + a.pipeline + "'");
    }
    cfg.selection.max_pool = a.max_pool;
    cfg.selection.rel_filter = a.rel_filter;
    cfg.selection.gamma = a.gamma;
    cfg.selection.crop_px = a.crop_px;
    if (!a.agg_crops.empty()) {
        cfg.selection.agg_crops = a.agg_crops;
        cfg.selection.use_aggregation = true;
    }
    cfg.workers = a.workers;
    cfg.hit_k_max = a.hit_k;

    std::unique_ptr<Scorer> scorer;
    if (cfg.pipeline == Pipeline::verified) {
        scorer = make_scorer(a.scorer, a.verifier, a.oracle_noise, a.seed);
    }
    const EvalOutcome outcome = evaluate(data.records, model, scorer.get(), cfg);
    const EvalReport& r = outcome.report;

    std::printf("pipeline: %s\n", r.pipeline.c_str());
    std::printf("%-16s %8s %10s\n", "category", "records", "accuracy");
    for (const auto& [name, stats] : r.categories) {
        std::printf("%-16s %8zu %10.4f\n", name.c_str(), static_cast<std::size_t>(stats.count),
                    stats.accuracy);
    }
    std::printf("%-16s %8zu %10.4f\n", "overall", static_cast<std::size_t>(r.record_count),
                r.overall);
    for (const auto& [k, rate] : r.hit_at) std::printf("hit@%d %.4f  ", k, rate);
    std::printf("\n");
    if (cfg.pipeline == Pipeline::verified) {
        std::printf("mean scorer calls per record: %.3f\n", r.mean_evaluated);
    }
    if (r.skipped_count > 0) {
        std::printf("skipped records: %zu\n", static_cast<std::size_t>(r.skipped_count));
    }
    if (!a.out.empty()) {
        write_report(a.out, r);
        std::printf("report: %s\n", a.out.c_str());
    }
}

// ---------------------------------------------------------------- visualize

struct VisualizeArgs {
    std::string model;
    std::string dataset;
    std::string out_dir;
    std::vector<std::string> ids; // empty = every record
    Scalar alpha = 0.3;
    std::string resample = "bilinear";
};

void cmd_visualize(const VisualizeArgs& a) {
    PA_LOG_INFO("visualize: model=%s dataset=%s ids=%zu alpha=%g resample=%s out=%s",
                a.model.c_str(), a.dataset.c_str(), a.ids.size(), a.alpha, a.resample.c_str(),
                a.out_dir.c_str());
    const Model model = load_model_logged(a.model);
    const RecordsFile data = read_records_checked(a.dataset);
    OverlayConfig cfg;
    cfg.alpha = a.alpha;
    if (a.resample == "nearest") {
        cfg.resample = Resample::nearest;
    } else if (a.resample == "bilinear") {
        cfg.resample = Resample::bilinear;
    } else {
        throw InvalidArgument("unknown resample '" + a.resample + "'");
    }

    fs::create_directories(a.out_dir);
    const std::set<std::string> wanted(a.ids.begin(), a.ids.end());
    std::set<std::string> seen;
    int written = 0;
    for (const GroundingRecord& rec : data.records) {
        if (!wanted.empty() && wanted.find(rec.id) == wanted.end()) continue;
        seen.insert(rec.id);
        const auto* synth = std::get_if<SynthScreen>(&rec.screen);
        if (synth == nullptr) {
            PA_LOG_WARN("record %s has no synthetic screen to render; skipped", rec.id.c_str());
            continue;
        }
        const ImageRgb base = render_screen(*synth);
        const AttentionMap map = ground(model, rec);
        const std::string path =
            (fs::path(a.out_dir) / (rec.id + ".overlay.ppm")).string();
        write_ppm(path, render_overlay(base, map, cfg));
        ++written;
    }
    for (const std::string& id : wanted) {
        if (seen.find(id) == seen.end()) {
            PA_LOG_WARN("record id %s not found in the dataset", id.c_str());
        }
    }
    std::printf("wrote %d overlays to %s\n", written, a.out_dir.c_str());
}

void add_scorer_flags(CLI::App* sub, std::string& scorer, std::string& verifier,
                      Scalar& oracle_noise, std::uint64_t& seed) {
    sub->add_option("--scorer", scorer, "Scoring backend")
        ->check(CLI::IsMember({"oracle", "toy"}))
        ->capture_default_str();
    sub->add_option("--verifier", verifier, "Trained verifier file (required for --scorer toy)");
    sub->add_option("--oracle-noise", oracle_noise, "Oracle flip probability in [0,1)")
        ->capture_default_str();
    sub->add_option("--seed", seed, "Seed keying oracle score flips")->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Coordinate-free GUI grounding: attention-head training, candidate "
                 "extraction, verifier-guided selection, and evaluation on synthetic screens."};
    // Options given after a subcommand name fall through to the root so a single
    // --config flag serves every subcommand; INI keys live in a [subcommand]
    // section (or use dotted keys such as train.dataset=...).
    app.fallthrough(true);
    app.set_config("--config", "",
                   "INI config file; put keys in a [subcommand] section "
                   "(e.g. [train] then dataset=...); flags override file values");
    app.require_subcommand(1);

    GenDataArgs gen;
    CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate a seeded synthetic dataset "
                                                       "(records.jsonl + verifier.jsonl)");
    gen_cmd->add_option("--seed", gen.seed, "Generation seed")->required();
    gen_cmd->add_option("--out", gen.out_dir, "Output directory")->required();
    gen_cmd->add_option("--profile", gen.profile,
                        "default: spread elements; stress: adjacent distractor pairs")
        ->check(CLI::IsMember({"default", "stress"}))
        ->capture_default_str();
    gen_cmd->add_option("--screens", gen.screens, "Screens to generate")->capture_default_str();
    gen_cmd->add_option("--records", gen.records_cap,
                        "Keep exactly this many records (0 = all)")
        ->capture_default_str();
    gen_cmd->add_option("--grid-w", gen.grid_w, "Image width px")->capture_default_str();
    gen_cmd->add_option("--grid-h", gen.grid_h, "Image height px")->capture_default_str();
    gen_cmd->add_option("--patch-px", gen.patch_px, "Patch edge px")->capture_default_str();
    gen_cmd->add_option("--min-elems", gen.min_elems, "Min elements per screen")
        ->capture_default_str();
    gen_cmd->add_option("--max-elems", gen.max_elems, "Max elements per screen")
        ->capture_default_str();
    gen_cmd->add_option("--classes", gen.classes, "Element class count")->capture_default_str();
    gen_cmd->add_option("--noise", gen.noise,
                        "Background feature noise scale (default 0.1, stress 0.3)");
    gen_cmd->callback([&] { cmd_gen_data(gen); });

    TrainArgs tr;
    CLI::App* train_cmd =
        app.add_subcommand("train", "Train the grounding model on a records file");
    train_cmd->add_option("--dataset", tr.dataset, "records.jsonl")->required();
    train_cmd->add_option("--seed", tr.seed, "Init + shuffle seed")->required();
    train_cmd->add_option("--out", tr.out, "Model output file")->required();
    train_cmd->add_option("--loss-csv", tr.loss_csv, "Loss curve CSV (default: loss.csv next "
                                                     "to the model)");
    train_cmd->add_option("--d", tr.d, "Feature dimension")->capture_default_str();
    train_cmd->add_option("--classes", tr.classes, "Class vocabulary size")
        ->capture_default_str();
    train_cmd->add_option("--epochs", tr.epochs, "Epochs")->capture_default_str();
    train_cmd->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--batch", tr.batch, "Minibatch size")->capture_default_str();
    train_cmd->add_option("--warmup", tr.warmup, "Head-only warm-up epochs")
        ->capture_default_str();
    train_cmd->add_option("--mode", tr.mode, "full: unfreeze encoder after warm-up; "
                                             "lite: encoder stays frozen")
        ->check(CLI::IsMember({"full", "lite"}))
        ->capture_default_str();
    train_cmd->callback([&] { cmd_train(tr); });

    TrainVerifierArgs tv;
    CLI::App* tv_cmd = app.add_subcommand("train-verifier",
                                          "Train the logistic verifier on example pairs");
    tv_cmd->add_option("--dataset", tv.dataset, "verifier.jsonl")->required();
    tv_cmd->add_option("--seed", tv.seed, "Encoder init + shuffle seed")->required();
    tv_cmd->add_option("--out", tv.out, "Verifier output file")->required();
    tv_cmd->add_option("--model", tv.model, "Reuse this model's encoder instead of a fresh one");
    tv_cmd->add_option("--d", tv.d, "Feature dimension (fresh encoder)")->capture_default_str();
    tv_cmd->add_option("--classes", tv.classes, "Class vocabulary size (fresh encoder)")
        ->capture_default_str();
    tv_cmd->add_option("--epochs", tv.epochs, "Epochs")->capture_default_str();
    tv_cmd->add_option("--lr", tv.lr, "Learning rate")->capture_default_str();
    tv_cmd->add_option("--batch", tv.batch, "Minibatch size")->capture_default_str();
    tv_cmd->add_option("--crop-px", tv.crop_px, "Crop side in pixels")->capture_default_str();
    tv_cmd->callback([&] { cmd_train_verifier(tv); });

    InferArgs inf;
    CLI::App* infer_cmd =
        app.add_subcommand("infer", "Emit candidate points per record as JSON lines");
    infer_cmd->add_option("--model", inf.model, "Trained model file")->required();
    infer_cmd->add_option("--dataset", inf.dataset, "records.jsonl")->required();
    infer_cmd->add_option("--out", inf.out, "Candidates output file")->required();
    infer_cmd->add_option("--max-pool", inf.max_pool, "Candidate pool cap")
        ->capture_default_str();
    infer_cmd->add_option("--rel-filter", inf.rel_filter,
                          "Keep patches above this fraction of the max weight")
        ->capture_default_str();
    infer_cmd->add_option("--workers", inf.workers, "Worker threads")->capture_default_str();
    infer_cmd->callback([&] { cmd_infer(inf); });

    SelectArgs sel;
    CLI::App* select_cmd = app.add_subcommand(
        "select", "Run verifier-guided selection per record and emit JSON lines");
    select_cmd->add_option("--model", sel.model, "Trained model file")->required();
    select_cmd->add_option("--dataset", sel.dataset, "records.jsonl")->required();
    select_cmd->add_option("--out", sel.out, "Selections output file")->required();
    add_scorer_flags(select_cmd, sel.scorer, sel.verifier, sel.oracle_noise, sel.seed);
    select_cmd->add_option("--gamma", sel.gamma, "Early-exit score threshold")
        ->capture_default_str();
    select_cmd->add_option("--max-pool", sel.max_pool, "Candidate pool cap")
        ->capture_default_str();
    select_cmd->add_option("--rel-filter", sel.rel_filter,
                           "Keep patches above this fraction of the max weight")
        ->capture_default_str();
    select_cmd->add_option("--crop-px", sel.crop_px, "Crop side in pixels")
        ->capture_default_str();
    select_cmd->add_option("--agg-crops", sel.agg_crops,
                           "Comma-separated crop sides; enables multi-scale score averaging")
        ->delimiter(',');
    select_cmd->add_option("--workers", sel.workers, "Worker threads")->capture_default_str();
    select_cmd->callback([&] { cmd_select(sel); });

    EvalArgs ev;
    CLI::App* eval_cmd =
        app.add_subcommand("eval", "Evaluate a pipeline and print the accuracy table");
    eval_cmd->add_option("--model", ev.model, "Trained model file")->required();
    eval_cmd->add_option("--dataset", ev.dataset, "records.jsonl")->required();
    eval_cmd->add_option("--out", ev.out, "Report JSON output file (optional)");
    eval_cmd->add_option("--pipeline", ev.pipeline, "plain: top candidate; verified: "
                                                    "scorer-guided selection")
        ->check(CLI::IsMember({"plain", "verified"}))
        ->capture_default_str();
    add_scorer_flags(eval_cmd, ev.scorer, ev.verifier, ev.oracle_noise, ev.seed);
    eval_cmd->add_option("--gamma", ev.gamma, "Early-exit score threshold")
        ->capture_default_str();
    eval_cmd->add_option("--max-pool", ev.max_pool, "Candidate pool cap")
        ->capture_default_str();
    eval_cmd->add_option("--rel-filter", ev.rel_filter,
                         "Keep patches above this fraction of the max weight")
        ->capture_default_str();
    eval_cmd->add_option("--crop-px", ev.crop_px, "Crop side in pixels")->capture_default_str();
    eval_cmd->add_option("--agg-crops", ev.agg_crops,
                         "Comma-separated crop sides; enables multi-scale score averaging")
        ->delimiter(',');
    eval_cmd->add_option("--workers", ev.workers, "Worker threads")->capture_default_str();
    eval_cmd->add_option("--hit-k", ev.hit_k, "Deepest Hit@k to report")->capture_default_str();
    eval_cmd->callback([&] { cmd_eval(ev); });

    VisualizeArgs vis;
    CLI::App* vis_cmd =
        app.add_subcommand("visualize", "Write attention overlays as {id}.overlay.ppm");
    vis_cmd->add_option("--model", vis.model, "Trained model file")->required();
    vis_cmd->add_option("--dataset", vis.dataset, "records.jsonl")->required();
    vis_cmd->add_option("--out", vis.out_dir, "Output directory")->required();
    vis_cmd->add_option("--ids", vis.ids, "Comma-separated record ids (default: all)")
        ->delimiter(',');
    vis_cmd->add_option("--alpha", vis.alpha, "Heatmap blend weight in [0,1]")
        ->capture_default_str();
    vis_cmd->add_option("--resample", vis.resample, "Heatmap upsampling")
        ->check(CLI::IsMember({"nearest", "bilinear"}))
        ->capture_default_str();
    vis_cmd->callback([&] { cmd_visualize(vis); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const FileError& e) {
        PA_LOG_ERROR("%s", e.what());
        return 3;
    } catch (const UnsupportedVersion& e) {
        PA_LOG_ERROR("%s", e.what());
        return 4;
    } catch (const SchemaError& e) {
        PA_LOG_ERROR("%s", e.what());
        return 4;
    } catch (const EmptySupervision& e) {
        PA_LOG_ERROR("%s", e.what());
        return 5;
    } catch (const DegenerateLabels& e) {
        PA_LOG_ERROR("%s", e.what());
        return 6;
    } catch (const GenerationFailed& e) {
        PA_LOG_ERROR("%s", e.what());
        return 7;
    } catch (const InvalidArgument& e) {
        PA_LOG_ERROR("%s", e.what());
        return 8;
    } catch (const NumericalError& e) {
        PA_LOG_ERROR("%s", e.what());
        return 9;
    } catch (const std::exception& e) {
        PA_LOG_ERROR("%s", e.what());
        return 1;
    }
    return 0;
}
