#include "patch_actor/io.hpp"

#include "patch_actor/errors.hpp"
#include "patch_actor/hash.hpp"
#include "patch_actor/log.hpp"

#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <utility>

namespace patch_actor {

namespace {

using ordered_json = nlohmann::ordered_json;

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FileError("cannot open for writing: " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FileError("cannot open for reading: " + path);
    return in;
}

// First line of every JSONL file / top of every JSON document: the schema
// tag. A recognizably-tagged but different version is UnsupportedVersion;
// anything else malformed is SchemaError.
void check_schema(const ordered_json& j, const char* expected, const std::string& path) {
    if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string()) {
        throw SchemaError(path + ": missing schema tag");
    }
    const std::string found = j["schema"].get<std::string>();
    if (found != expected) {
        throw UnsupportedVersion(path + ": schema '" + found + "', this build reads '" +
                                 expected + "'");
    }
}

ordered_json parse_document(const std::string& path, std::istream& in) {
    ordered_json j = ordered_json::parse(in, nullptr, false);
    if (j.is_discarded()) throw SchemaError(path + ": not valid JSON");
    return j;
}

ordered_json bbox_to_json(const NormBBox& b) {
    return ordered_json::array({b.left, b.top, b.right, b.bottom});
}

NormBBox bbox_from_json(const ordered_json& j) {
    if (!j.is_array() || j.size() != 4) throw SchemaError("bbox must be [l,t,r,b]");
    return {j[0].get<Scalar>(), j[1].get<Scalar>(), j[2].get<Scalar>(), j[3].get<Scalar>()};
}

ordered_json grid_to_json(const PatchGrid& g) {
    ordered_json j;
    j["cols"] = g.cols;
    j["rows"] = g.rows;
    j["patch_px"] = g.patch_px;
    return j;
}

PatchGrid grid_from_json(const ordered_json& j, const ordered_json& record) {
    PatchGrid g;
    g.cols = j.at("cols").get<int>();
    g.rows = j.at("rows").get<int>();
    g.patch_px = j.at("patch_px").get<int>();
    if (g.cols < 1 || g.rows < 1 || g.patch_px < 1) throw SchemaError("non-positive grid");
    g.image_w_px = record.value("image_w_px", g.cols * g.patch_px);
    g.image_h_px = record.value("image_h_px", g.rows * g.patch_px);
    if (g.image_w_px < 1 || g.image_h_px < 1) throw SchemaError("non-positive image dims");
    return g;
}

ordered_json matrix_to_json(const Matrix& m) {
    ordered_json a = ordered_json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
    }
    return a;
}

Matrix matrix_from_json(const ordered_json& a, Eigen::Index rows, Eigen::Index cols,
                        const char* what) {
    if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != rows * cols) {
        throw SchemaError(std::string(what) + ": expected " + std::to_string(rows * cols) +
                          " values");
    }
    Matrix m(rows, cols);
    std::size_t i = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = a[i++].get<Scalar>();
    }
    return m;
}

ordered_json vector_to_json(const Vector& v) {
    ordered_json a = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Vector vector_from_json(const ordered_json& a, Eigen::Index size, const char* what) {
    if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != size) {
        throw SchemaError(std::string(what) + ": expected " + std::to_string(size) + " values");
    }
    Vector v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = a[i].get<Scalar>();
    return v;
}

ordered_json record_to_json(const GroundingRecord& rec) {
    ordered_json j;
    if (const auto* synth = std::get_if<SynthScreen>(&rec.screen)) {
        j["seed"] = synth->seed;
        j["grid"] = grid_to_json(synth->grid);
        ordered_json elements = ordered_json::array();
        for (const Element& e : synth->elements) {
            ordered_json el;
            el["class"] = e.class_id;
            el["bbox"] = bbox_to_json(e.bbox);
            elements.push_back(std::move(el));
        }
        j["elements"] = std::move(elements);
        j["instruction"] = rec.instruction;
        j["gt_bbox"] = bbox_to_json(rec.gt_bbox);
        j["noise_scale"] = synth->background_noise_scale;
        j["image_w_px"] = synth->grid.image_w_px;
        j["image_h_px"] = synth->grid.image_h_px;
    } else {
        const auto& ext = std::get<ExternalScreen>(rec.screen);
        j["image_path"] = ext.image_path;
        j["grid"] = grid_to_json(ext.grid);
        ordered_json features = ordered_json::array();
        for (Eigen::Index c = 0; c < ext.patch_features.cols(); ++c) {
            features.push_back(vector_to_json(ext.patch_features.col(c)));
        }
        j["patch_features"] = std::move(features);
        j["anchor"] = vector_to_json(ext.anchor);
        j["instruction_text"] = rec.instruction_text;
        j["gt_bbox"] = bbox_to_json(rec.gt_bbox);
        j["image_w_px"] = ext.grid.image_w_px;
        j["image_h_px"] = ext.grid.image_h_px;
    }
    j["id"] = rec.id;
    j["category"] = rec.category;
    return j;
}

GroundingRecord record_from_json(const ordered_json& j, std::size_t line_index) {
    if (!j.is_object()) throw SchemaError("record is not an object");
    GroundingRecord rec;
    rec.id = j.value("id", "record-" + std::to_string(line_index));
    rec.category = j.value("category", std::string("default"));
    rec.gt_bbox = bbox_from_json(j.at("gt_bbox"));

    const PatchGrid grid = grid_from_json(j.at("grid"), j);
    if (j.contains("image_path")) {
        ExternalScreen ext;
        ext.image_path = j["image_path"].get<std::string>();
        ext.grid = grid;
        const ordered_json& features = j.at("patch_features");
        if (!features.is_array() ||
            static_cast<int>(features.size()) != grid.patch_count()) {
            throw SchemaError("patch_features must list one vector per patch");
        }
        const ordered_json& anchor = j.at("anchor");
        if (!anchor.is_array() || anchor.empty()) throw SchemaError("anchor missing");
        const Eigen::Index d = static_cast<Eigen::Index>(anchor.size());
        ext.anchor = vector_from_json(anchor, d, "anchor");
        ext.patch_features.resize(d, grid.patch_count());
        for (int c = 0; c < grid.patch_count(); ++c) {
            ext.patch_features.col(c) = vector_from_json(features[c], d, "patch_features");
        }
        rec.instruction_text = j.value("instruction_text", std::string());
        rec.screen = std::move(ext);
    } else {
        SynthScreen synth;
        synth.seed = j.at("seed").get<std::uint64_t>();
        synth.grid = grid;
        synth.background_noise_scale = j.value("noise_scale", 0.1);
        for (const ordered_json& el : j.at("elements")) {
            Element e;
            e.class_id = el.at("class").get<int>();
            e.bbox = bbox_from_json(el.at("bbox"));
            synth.elements.push_back(e);
        }
        rec.instruction = j.at("instruction").get<int>();
        rec.screen = std::move(synth);
    }
    return rec;
}

ordered_json encoder_to_json(const EncoderParams& enc) {
    ordered_json j;
    j["class_emb"] = matrix_to_json(enc.class_emb);
    j["background_emb"] = vector_to_json(enc.background_emb);
    j["instr_emb"] = matrix_to_json(enc.instr_emb);
    return j;
}

EncoderParams encoder_from_json(const ordered_json& j, int d, int class_count) {
    EncoderParams enc;
    enc.class_emb = matrix_from_json(j.at("class_emb"), d, class_count, "class_emb");
    enc.background_emb = vector_from_json(j.at("background_emb"), d, "background_emb");
    enc.instr_emb = matrix_from_json(j.at("instr_emb"), d, class_count, "instr_emb");
    return enc;
}

ordered_json mlp_to_json(const Mlp& m) {
    ordered_json j;
    j["w1"] = matrix_to_json(m.w1);
    j["b1"] = vector_to_json(m.b1);
    j["w2"] = matrix_to_json(m.w2);
    j["b2"] = vector_to_json(m.b2);
    return j;
}

Mlp mlp_from_json(const ordered_json& j, int d, const char* what) {
    Mlp m;
    m.w1 = matrix_from_json(j.at("w1"), d, d, what);
    m.b1 = vector_from_json(j.at("b1"), d, what);
    m.w2 = matrix_from_json(j.at("w2"), d, d, what);
    m.b2 = vector_from_json(j.at("b2"), d, what);
    return m;
}

template <typename Fn>
void read_jsonl(const std::string& path, const char* schema,
                std::vector<std::size_t>& skipped, Fn&& per_line) {
    std::ifstream in = open_in(path);
    std::string line;
    bool saw_header = false;
    std::size_t body_index = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ordered_json j = ordered_json::parse(line, nullptr, false);
        if (!saw_header) {
            if (j.is_discarded()) throw SchemaError(path + ": header line is not valid JSON");
            check_schema(j, schema, path);
            saw_header = true;
            continue;
        }
        if (j.is_discarded()) {
            PA_LOG_WARN("%s: line %zu is not valid JSON; skipped", path.c_str(), body_index);
            skipped.push_back(body_index);
        } else {
            try {
                per_line(j, body_index);
            } catch (const std::exception& e) {
                PA_LOG_WARN("%s: line %zu invalid (%s); skipped", path.c_str(), body_index,
                            e.what());
                skipped.push_back(body_index);
            }
        }
        ++body_index;
    }
    if (!saw_header) throw SchemaError(path + ": empty file, expected a schema header");
}

ordered_json header_line(const char* schema) {
    ordered_json j;
    j["schema"] = schema;
    return j;
}

} // namespace

void write_records(const std::string& path, const std::vector<GroundingRecord>& records) {
    std::ofstream out = open_out(path);
    out << header_line(kRecordsSchema).dump() << '\n';
    for (const GroundingRecord& rec : records) out << record_to_json(rec).dump() << '\n';
    if (!out) throw FileError("write failed: " + path);
}

RecordsFile read_records(const std::string& path) {
    RecordsFile file;
    read_jsonl(path, kRecordsSchema, file.skipped_lines,
               [&](const ordered_json& j, std::size_t line) {
                   file.records.push_back(record_from_json(j, line));
               });
    return file;
}

void write_verifier_examples(const std::string& path,
                             const std::vector<VerifierExample>& examples) {
    std::ofstream out = open_out(path);
    out << header_line(kVerifierDataSchema).dump() << '\n';
    for (const VerifierExample& ex : examples) {
        ordered_json j;
        j["record"] = record_to_json(ex.record);
        j["point"] = ordered_json::array({ex.point.x, ex.point.y});
        j["label"] = ex.label;
        out << j.dump() << '\n';
    }
    if (!out) throw FileError("write failed: " + path);
}

VerifierDataFile read_verifier_examples(const std::string& path) {
    VerifierDataFile file;
    read_jsonl(path, kVerifierDataSchema, file.skipped_lines,
               [&](const ordered_json& j, std::size_t line) {
                   VerifierExample ex;
                   ex.record = record_from_json(j.at("record"), line);
                   const ordered_json& p = j.at("point");
                   if (!p.is_array() || p.size() != 2) throw SchemaError("point must be [x,y]");
                   ex.point = {p[0].get<Scalar>(), p[1].get<Scalar>()};
                   ex.label = j.at("label").get<bool>();
                   file.examples.push_back(std::move(ex));
               });
    return file;
}

void save_model(const std::string& path, const Model& model) {
    if (!model.head.finite() || !model.encoder.class_emb.allFinite() ||
        !model.encoder.background_emb.allFinite() || !model.encoder.instr_emb.allFinite()) {
        throw NumericalError("save_model: refusing to write non-finite parameters");
    }
    ordered_json j;
    j["schema"] = kModelSchema;
    j["d"] = model.head.d;
    j["class_count"] = model.encoder.class_count();
    j["encoder"] = encoder_to_json(model.encoder);
    ordered_json head;
    head["wq"] = matrix_to_json(model.head.wq);
    head["wk"] = matrix_to_json(model.head.wk);
    head["wv"] = matrix_to_json(model.head.wv);
    head["mlp_anchor"] = mlp_to_json(model.head.mlp_anchor);
    head["mlp_patch"] = mlp_to_json(model.head.mlp_patch);
    j["head"] = std::move(head);

    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
    if (!out) throw FileError("write failed: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream in = open_in(path);
    const ordered_json j = parse_document(path, in);
    check_schema(j, kModelSchema, path);
    try {
        const int d = j.at("d").get<int>();
        const int class_count = j.at("class_count").get<int>();
        if (d < 1 || class_count < 1) throw SchemaError(path + ": non-positive dimensions");
        Model model;
        model.encoder = encoder_from_json(j.at("encoder"), d, class_count);
        const ordered_json& head = j.at("head");
        model.head.d = d;
        model.head.wq = matrix_from_json(head.at("wq"), d, d, "wq");
        model.head.wk = matrix_from_json(head.at("wk"), d, d, "wk");
        model.head.wv = matrix_from_json(head.at("wv"), d, d, "wv");
        model.head.mlp_anchor = mlp_from_json(head.at("mlp_anchor"), d, "mlp_anchor");
        model.head.mlp_patch = mlp_from_json(head.at("mlp_patch"), d, "mlp_patch");
        return model;
    } catch (const ordered_json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

void save_verifier(const std::string& path, const ToyVerifier& verifier) {
    if (!verifier.weights().allFinite()) {
        throw NumericalError("save_verifier: refusing to write non-finite weights");
    }
    ordered_json j;
    j["schema"] = kVerifierSchema;
    j["d"] = verifier.encoder().dim();
    j["class_count"] = verifier.encoder().class_count();
    j["encoder"] = encoder_to_json(verifier.encoder());
    j["weights"] = vector_to_json(verifier.weights());

    std::ofstream out = open_out(path);
    out << j.dump(2) << '\n';
    if (!out) throw FileError("write failed: " + path);
}

ToyVerifier load_verifier(const std::string& path) {
    std::ifstream in = open_in(path);
    const ordered_json j = parse_document(path, in);
    check_schema(j, kVerifierSchema, path);
    try {
        const int d = j.at("d").get<int>();
        const int class_count = j.at("class_count").get<int>();
        if (d < 1 || class_count < 1) throw SchemaError(path + ": non-positive dimensions");
        EncoderParams enc = encoder_from_json(j.at("encoder"), d, class_count);
        Vector w = vector_from_json(j.at("weights"), ToyVerifier::feature_dim(d), "weights");
        return ToyVerifier(std::move(enc), std::move(w));
    } catch (const ordered_json::exception& e) {
        throw SchemaError(path + ": " + e.what());
    }
}

void write_loss_csv(const std::string& path, const std::vector<Scalar>& epoch_mean_loss) {
    std::ofstream out = open_out(path);
    out << "epoch,mean_loss\n";
    char buf[64];
    for (std::size_t e = 0; e < epoch_mean_loss.size(); ++e) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", e, epoch_mean_loss[e]);
        out << buf;
    }
    if (!out) throw FileError("write failed: " + path);
}

std::string candidates_json(const CandidateSet& candidates) {
    ordered_json arr = ordered_json::array();
    for (const CandidatePoint& c : candidates.candidates) {
        ordered_json j;
        j["x"] = c.point_px.x;
        j["y"] = c.point_px.y;
        j["weight"] = c.weight;
        j["source"] = to_string(c.source);
        arr.push_back(std::move(j));
    }
    ordered_json out;
    out["candidates"] = std::move(arr);
    return out.dump();
}

std::string selection_json(const SelectionResult& selection) {
    ordered_json j;
    j["chosen"] = ordered_json{{"x", selection.chosen.point_px.x},
                               {"y", selection.chosen.point_px.y}};
    j["score"] = selection.score;
    j["evaluated_count"] = selection.evaluated_count;
    j["early_exit"] = selection.early_exit;
    j["fallback_used"] = selection.fallback_used;
    j["failure_count"] = selection.failure_count;
    return j.dump();
}

std::string report_json(const EvalReport& report) {
    ordered_json j;
    j["schema"] = kReportSchema;
    j["pipeline"] = report.pipeline;
    ordered_json cats;
    ordered_json counts_per_cat;
    for (const auto& [name, stats] : report.categories) {
        cats[name] = stats.accuracy;
        counts_per_cat[name] = stats.count;
    }
    j["categories"] = std::move(cats);
    j["overall"] = report.overall;
    ordered_json hits;
    for (const auto& [k, rate] : report.hit_at) hits[std::to_string(k)] = rate;
    j["hit_at"] = std::move(hits);
    j["verifier"] = ordered_json{{"mean_evaluated", report.mean_evaluated}};
    ordered_json counts;
    counts["records"] = report.record_count;
    counts["skipped"] = report.skipped_count;
    counts["per_category"] = std::move(counts_per_cat);
    j["counts"] = std::move(counts);
    char digest[32];
    std::snprintf(digest, sizeof digest, "%016llx",
                  static_cast<unsigned long long>(report.config_digest));
    j["config_digest"] = digest;
    return j.dump(2);
}

void write_report(const std::string& path, const EvalReport& report) {
    std::ofstream out = open_out(path);
    out << report_json(report) << '\n';
    if (!out) throw FileError("write failed: " + path);
}

std::uint64_t file_digest(const std::string& path) {
    std::ifstream in = open_in(path);
    std::uint64_t h = kFnvOffset;
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
        if (!in) break;
    }
    return h;
}

} // namespace patch_actor
