#include "revgen/mining.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <set>

#include "json.hpp"
#include "revgen/schemas.hpp"

namespace revgen::mining {

using nlohmann::json;

std::string kind_name(FieldKind k) {
    switch (k) {
        case FieldKind::categorical: return "categorical";
        case FieldKind::numeric: return "numeric";
        case FieldKind::text: return "text";
    }
    return "?";
}

Result<FieldKind> kind_from(const std::string& name) {
    using R = Result<FieldKind>;
    if (name == "categorical") return R(FieldKind::categorical);
    if (name == "numeric") return R(FieldKind::numeric);
    if (name == "text") return R(FieldKind::text);
    return R::failure("bad_kind", "unknown field kind: " + name);
}

const MiningField* MiningSchema::find(const std::string& name) const {
    for (const MiningField& f : fields) {
        if (f.name == name) return &f;
    }
    return nullptr;
}

VoidResult validate_schema(const MiningSchema& schema) {
    if (schema.fields.empty()) {
        return VoidResult::failure("bad_schema", "schema has no fields");
    }
    std::set<std::string> seen;
    for (const MiningField& f : schema.fields) {
        if (f.name.empty()) {
            return VoidResult::failure("bad_schema", "field with empty name");
        }
        if (!seen.insert(f.name).second) {
            return VoidResult::failure("bad_schema", "duplicate field: " + f.name);
        }
        if (f.kind == FieldKind::numeric && f.unit.empty()) {
            return VoidResult::failure("bad_schema",
                                       "numeric field without canonical unit: " + f.name);
        }
        if (f.kind == FieldKind::categorical && f.allowed.empty()) {
            return VoidResult::failure("bad_schema",
                                       "categorical field without allowed values: " + f.name);
        }
        if (f.has_range && f.min_value > f.max_value) {
            return VoidResult::failure("bad_schema", "inverted range on field: " + f.name);
        }
    }
    return ok_void();
}

Result<MiningSchema> schema_from_json(const std::string& text) {
    using R = Result<MiningSchema>;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("fields") || !j["fields"].is_array()) {
        return R::failure("bad_schema", "schema file must be an object with a fields array");
    }
    MiningSchema schema;
    for (const auto& jf : j["fields"]) {
        if (!jf.is_object() || !jf.contains("name") || !jf.contains("kind")) {
            return R::failure("bad_schema", "each field needs name and kind");
        }
        MiningField f;
        f.name = jf["name"].get<std::string>();
        auto kind = kind_from(jf["kind"].get<std::string>());
        if (!kind.ok()) return R(kind.error());
        f.kind = kind.value();
        if (jf.contains("unit")) f.unit = jf["unit"].get<std::string>();
        if (jf.contains("allowed")) {
            for (const auto& a : jf["allowed"]) f.allowed.push_back(a.get<std::string>());
        }
        if (jf.contains("synonyms")) {
            for (const auto& [k, v] : jf["synonyms"].items()) {
                f.synonyms[k] = v.get<std::string>();
            }
        }
        if (jf.contains("min") || jf.contains("max")) {
            if (!jf.contains("min") || !jf.contains("max")) {
                return R::failure("bad_schema", "field " + f.name + " declares half a range");
            }
            f.has_range = true;
            f.min_value = jf["min"].get<double>();
            f.max_value = jf["max"].get<double>();
        }
        schema.fields.push_back(std::move(f));
    }
    auto valid = validate_schema(schema);
    if (!valid.ok()) return R(valid.error());
    return R(std::move(schema));
}

std::string schema_to_json(const MiningSchema& schema) {
    json j;
    j["fields"] = json::array();
    for (const MiningField& f : schema.fields) {
        json jf;
        jf["name"] = f.name;
        jf["kind"] = kind_name(f.kind);
        if (!f.unit.empty()) jf["unit"] = f.unit;
        if (!f.allowed.empty()) jf["allowed"] = f.allowed;
        if (!f.synonyms.empty()) {
            json syn = json::object();
            for (const auto& [k, v] : f.synonyms) syn[k] = v;
            jf["synonyms"] = syn;
        }
        if (f.has_range) {
            jf["min"] = f.min_value;
            jf["max"] = f.max_value;
        }
        j["fields"].push_back(std::move(jf));
    }
    return j.dump(2);
}

Result<MiningSchema> load_schema(const std::string& path) {
    using R = Result<MiningSchema>;
    auto text = read_file(path);
    if (!text.ok()) return R(text.error());
    auto schema = schema_from_json(text.value());
    if (!schema.ok()) {
        return R::failure(schema.error().code, path + ": " + schema.error().message);
    }
    return schema;
}

MiningSchema default_schema() {
    MiningSchema s;
    auto cat = [](std::string name, std::vector<std::string> allowed,
                  std::map<std::string, std::string> syn) {
        MiningField f;
        f.name = std::move(name);
        f.kind = FieldKind::categorical;
        f.allowed = std::move(allowed);
        f.synonyms = std::move(syn);
        return f;
    };
    auto num = [](std::string name, std::string unit, double lo, double hi) {
        MiningField f;
        f.name = std::move(name);
        f.kind = FieldKind::numeric;
        f.unit = std::move(unit);
        f.has_range = true;
        f.min_value = lo;
        f.max_value = hi;
        return f;
    };
    auto txt = [](std::string name) {
        MiningField f;
        f.name = std::move(name);
        f.kind = FieldKind::text;
        return f;
    };

    s.fields.push_back(cat("catalyst_type",
                           {"alloy", "intermetallic", "oxide", "single atom", "supported metal",
                            "zeolite", "other"},
                           {{"bimetallic", "alloy"},
                            {"sac", "single atom"},
                            {"singleatomcatalyst", "single atom"},
                            {"metaloxide", "oxide"},
                            {"supported", "supported metal"}}));
    s.fields.push_back(txt("active_element"));
    s.fields.push_back(txt("promoter"));
    s.fields.push_back(txt("support"));
    s.fields.push_back(cat("preparation_method",
                           {"impregnation", "coprecipitation", "sol-gel", "hydrothermal",
                            "deposition-precipitation", "ald", "galvanic replacement", "other"},
                           {{"wetimpregnation", "impregnation"},
                            {"incipientwetnessimpregnation", "impregnation"},
                            {"atomiclayerdeposition", "ald"},
                            {"depositionprecipitation", "deposition-precipitation"}}));
    s.fields.push_back(txt("structure"));
    s.fields.push_back(num("selectivity", "%", 0.0, 100.0));
    s.fields.push_back(num("conversion", "%", 0.0, 100.0));
    s.fields.push_back(num("stability", "h", 0.0, 1e6));
    s.fields.push_back(num("temperature", "°C", -273.15, 3000.0));
    s.fields.push_back(num("pressure", "MPa", 0.0, 1000.0));
    s.fields.push_back(num("space_velocity", "h^-1", 0.0, 1e9));
    s.fields.push_back(num("loading", "wt%", 0.0, 100.0));
    s.fields.push_back(num("year", "year", 1800.0, 2100.0));
    return s;
}

std::string format_fields_for_prompt(const MiningSchema& schema) {
    std::string out;
    for (const MiningField& f : schema.fields) {
        out += "- " + f.name + " (";
        switch (f.kind) {
            case FieldKind::numeric:
                out += "numeric, unit " + f.unit;
                if (f.has_range) {
                    char buf[64];
                    std::snprintf(buf, sizeof(buf), ", range %g to %g", f.min_value,
                                  f.max_value);
                    out += buf;
                }
                break;
            case FieldKind::categorical:
                out += "one of: " + join(f.allowed, " | ");
                break;
            case FieldKind::text:
                out += "text";
                break;
        }
        out += ")\n";
    }
    return out;
}

std::string obs_status_name(ObsStatus s) {
    switch (s) {
        case ObsStatus::ok: return "ok";
        case ObsStatus::unparseable: return "unparseable";
        case ObsStatus::out_of_range: return "out_of_range";
    }
    return "?";
}

namespace {

std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// Lowercase alphanumerics only, so "Pt-Sn", "pt sn", and "PtSn" collide.
std::string match_key(const std::string& s) {
    std::string key;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    return key;
}

// Collapses the unit spellings the conversion table knows about. Unknown
// spellings come back unchanged so the error can name them.
std::string canonical_unit(const std::string& raw_unit) {
    std::string u;
    for (char c : raw_unit) {
        if (c == ' ' || c == '\t') continue;
        u += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    while (!u.empty() && u.back() == '.') u.pop_back();
    if (u.empty()) return "";
    if (u == "%" || u == "percent") return "%";
    if (u == "wt%" || u == "wt.%" || u == "wt") return "wt%";
    if (u == "\xc2\xb0c" || u == "c" || u == "celsius" || u == "degc") return "\xc2\xb0""C";
    if (u == "k" || u == "kelvin") return "K";
    if (u == "h" || u == "hr" || u == "hrs" || u == "hour" || u == "hours") return "h";
    if (u == "min" || u == "mins" || u == "minute" || u == "minutes") return "min";
    if (u == "h^-1" || u == "h-1" || u == "1/h" || u == "/h") return "h^-1";
    if (u == "mpa") return "MPa";
    if (u == "year" || u == "years" || u == "yr") return "year";
    return raw_unit;
}

// True when the source unit converts into the target canonical, writing the
// converted value. Bare numbers adopt the canonical unit, except that
// percent-family fields read values in [0,1] as fractions.
bool convert_unit(double v, const std::string& from, const std::string& to, double* out) {
    if (from.empty()) {
        if ((to == "%" || to == "wt%") && v >= 0.0 && v <= 1.0) {
            *out = v * 100.0;
        } else {
            *out = v;
        }
        return true;
    }
    if (from == to) {
        *out = v;
        return true;
    }
    if ((from == "%" && to == "wt%") || (from == "wt%" && to == "%")) {
        *out = v;
        return true;
    }
    if (from == "K" && to == "\xc2\xb0""C") {
        *out = v - 273.15;
        return true;
    }
    if (from == "\xc2\xb0""C" && to == "K") {
        *out = v + 273.15;
        return true;
    }
    if (from == "min" && to == "h") {
        *out = v / 60.0;
        return true;
    }
    if (from == "h" && to == "min") {
        *out = v * 60.0;
        return true;
    }
    return false;
}

}  // namespace

FieldObservation normalize(FieldObservation obs, const MiningField& field) {
    obs.unit.clear();
    obs.value.clear();
    obs.number = 0.0;
    obs.status = ObsStatus::unparseable;
    obs.note.clear();

    std::string raw = trim(obs.raw);
    if (raw.empty()) {
        obs.note = obs.note.empty() ? "empty value" : obs.note;
        return obs;
    }

    switch (field.kind) {
        case FieldKind::text: {
            // Collapse internal whitespace runs; the text itself is the value.
            std::string collapsed;
            bool in_space = false;
            for (char c : raw) {
                if (std::isspace(static_cast<unsigned char>(c))) {
                    in_space = true;
                    continue;
                }
                if (in_space && !collapsed.empty()) collapsed += ' ';
                in_space = false;
                collapsed += c;
            }
            obs.value = collapsed;
            obs.status = ObsStatus::ok;
            return obs;
        }
        case FieldKind::categorical: {
            std::string key = match_key(raw);
            auto syn = field.synonyms.find(key);
            if (syn == field.synonyms.end()) syn = field.synonyms.find(raw);
            if (syn != field.synonyms.end()) {
                obs.value = syn->second;
                obs.status = ObsStatus::ok;
                return obs;
            }
            for (const std::string& a : field.allowed) {
                if (match_key(a) == key) {
                    obs.value = a;
                    obs.status = ObsStatus::ok;
                    return obs;
                }
            }
            obs.note = "unknown category: " + raw;
            return obs;
        }
        case FieldKind::numeric:
            break;
    }

    const char* start = raw.c_str();
    if (*start == '~' || *start == '<' || *start == '>') ++start;
    char* end = nullptr;
    double v = std::strtod(start, &end);
    if (end == start) {
        obs.note = "no number in: " + raw;
        return obs;
    }
    std::string unit_text = trim(std::string(end));
    std::string unit = canonical_unit(unit_text);
    obs.unit = unit;

    double converted = 0.0;
    if (!convert_unit(v, unit, field.unit, &converted)) {
        obs.note = "unknown unit: " + unit_text;
        return obs;
    }
    obs.number = converted;
    obs.value = format_number(converted);
    if (field.has_range && (converted < field.min_value || converted > field.max_value)) {
        obs.status = ObsStatus::out_of_range;
        obs.note = "outside " + format_number(field.min_value) + ".." +
                   format_number(field.max_value);
        return obs;
    }
    obs.status = ObsStatus::ok;
    return obs;
}

Result<DocMining> extract_fields(gateway::Gateway& gw, const corpus::Document& doc,
                                 const MiningSchema& schema, int repetitions) {
    using R = Result<DocMining>;
    if (repetitions < 1) {
        return R::failure("bad_repetitions", "repetitions must be >= 1");
    }
    if (doc.body.empty()) {
        return R::failure("empty_body", "document has no ingested body: " + doc.doi);
    }
    auto valid = validate_schema(schema);
    if (!valid.ok()) return R(valid.error());

    DocMining mined;
    mined.doi = doc.doi;
    mined.repetitions = repetitions;
    std::string fields_block = format_fields_for_prompt(schema);

    for (int rep = 1; rep <= repetitions; ++rep) {
        gateway::CompletionRequest req;
        req.template_id = "mine";
        req.vars = {{"fields", fields_block}, {"document", doc.body}};
        req.key = {"mine", doc.doi, "r" + std::to_string(rep)};
        auto resp = gw.complete_structured(req, "mining-record");
        if (!resp.ok()) {
            if (resp.error().code == "retry_exhausted" ||
                resp.error().code == "format_exhausted") {
                mined.missing_repetitions.push_back(rep);
                continue;
            }
            return R(resp.error());
        }
        const auto& payload = std::get<schemas::RecordPayload>(resp.value().structured.payload);

        // First occurrence wins when a response repeats a field name.
        std::map<std::string, std::string> reported;
        for (const schemas::FieldValue& fv : payload.fields) {
            reported.emplace(match_key(fv.name), fv.value);
        }
        for (const MiningField& field : schema.fields) {
            FieldObservation obs;
            obs.doi = doc.doi;
            obs.field = field.name;
            obs.repetition = rep;
            auto it = reported.find(match_key(field.name));
            if (it == reported.end()) {
                obs.status = ObsStatus::unparseable;
                obs.note = "not reported";
            } else {
                obs.raw = it->second;
                obs = normalize(std::move(obs), field);
            }
            mined.observations.push_back(std::move(obs));
        }
    }
    return R(std::move(mined));
}

namespace {

struct Bucket {
    std::string value;
    double number = 0.0;
    bool is_numeric = false;
    int votes = 0;
};

// Sorted numeric values that agree within relative tolerance 1e-6 share a
// bucket; the smallest member is the representative.
std::vector<Bucket> bucket_numeric(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    std::vector<Bucket> buckets;
    for (double v : values) {
        if (!buckets.empty()) {
            double rep = buckets.back().number;
            double tol = 1e-6 * std::max({std::fabs(v), std::fabs(rep), 1e-300});
            if (std::fabs(v - rep) <= tol) {
                ++buckets.back().votes;
                continue;
            }
        }
        Bucket b;
        b.number = v;
        b.value = format_number(v);
        b.is_numeric = true;
        b.votes = 1;
        buckets.push_back(std::move(b));
    }
    return buckets;
}

}  // namespace

MinedRecord aggregate_record(const DocMining& mined, const MiningSchema& schema) {
    MinedRecord rec;
    rec.doi = mined.doi;
    rec.valid_repetitions = mined.landed();

    // Thin evidence never votes: fewer than half the requested passes landed.
    bool sufficient = rec.valid_repetitions >= (mined.repetitions + 1) / 2;
    int threshold = rec.valid_repetitions / 2 + 1;

    for (const MiningField& field : schema.fields) {
        std::vector<double> numbers;
        std::map<std::string, int> votes;
        for (const FieldObservation& obs : mined.observations) {
            if (obs.field != field.name || obs.status != ObsStatus::ok) continue;
            if (field.kind == FieldKind::numeric) {
                numbers.push_back(obs.number);
            } else {
                ++votes[obs.value];
            }
        }

        Bucket winner;
        if (field.kind == FieldKind::numeric) {
            for (Bucket& b : bucket_numeric(std::move(numbers))) {
                if (b.votes > winner.votes) winner = std::move(b);
            }
        } else {
            for (const auto& [value, count] : votes) {
                if (count > winner.votes) {
                    winner.value = value;
                    winner.votes = count;
                }
            }
        }

        if (!sufficient || winner.votes < threshold) {
            rec.abstained.push_back(field.name);
            continue;
        }
        MinedField out;
        out.field = field.name;
        out.value = winner.value;
        out.number = winner.number;
        out.is_numeric = winner.is_numeric;
        out.votes = winner.votes;
        out.confidence = static_cast<double>(winner.votes) / rec.valid_repetitions;
        rec.fields.push_back(std::move(out));
    }
    return rec;
}

std::string record_to_json(const MinedRecord& rec) {
    json j;
    j["doi"] = rec.doi;
    j["valid_repetitions"] = rec.valid_repetitions;
    j["fields"] = json::array();
    for (const MinedField& f : rec.fields) {
        json jf;
        jf["field"] = f.field;
        jf["value"] = f.value;
        jf["is_numeric"] = f.is_numeric;
        if (f.is_numeric) jf["number"] = f.number;
        jf["votes"] = f.votes;
        jf["confidence"] = f.confidence;
        j["fields"].push_back(std::move(jf));
    }
    j["abstained"] = rec.abstained;
    return j.dump();
}

Result<MinedRecord> record_from_json(const std::string& text) {
    using R = Result<MinedRecord>;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("doi") || !j.contains("fields")) {
        return R::failure("bad_record", "not a mined record: " + text.substr(0, 80));
    }
    MinedRecord rec;
    rec.doi = j["doi"].get<std::string>();
    rec.valid_repetitions = j.value("valid_repetitions", 0);
    for (const auto& jf : j["fields"]) {
        MinedField f;
        f.field = jf["field"].get<std::string>();
        f.value = jf["value"].get<std::string>();
        f.is_numeric = jf.value("is_numeric", false);
        if (f.is_numeric) f.number = jf.value("number", 0.0);
        f.votes = jf.value("votes", 0);
        f.confidence = jf.value("confidence", 0.0);
        rec.fields.push_back(std::move(f));
    }
    if (j.contains("abstained")) {
        for (const auto& a : j["abstained"]) rec.abstained.push_back(a.get<std::string>());
    }
    return R(std::move(rec));
}

VoidResult save_records(const std::vector<MinedRecord>& recs, const std::string& path) {
    std::string body;
    for (const MinedRecord& r : recs) {
        body += record_to_json(r);
        body += '\n';
    }
    return write_file_atomic(path, body);
}

Result<std::vector<MinedRecord>> load_records(const std::string& path) {
    using R = Result<std::vector<MinedRecord>>;
    auto lines = read_lines(path);
    if (!lines.ok()) return R(lines.error());
    std::vector<MinedRecord> recs;
    for (const std::string& line : lines.value()) {
        if (trim(line).empty()) continue;
        auto rec = record_from_json(line);
        if (!rec.ok()) return R(rec.error());
        recs.push_back(std::move(rec).take());
    }
    return R(std::move(recs));
}

std::string chart_kind_name(ChartKind k) {
    switch (k) {
        case ChartKind::counts: return "counts";
        case ChartKind::peaks: return "peaks";
        case ChartKind::crosstab: return "crosstab";
    }
    return "?";
}

namespace {

const MinedField* record_field(const MinedRecord& rec, const std::string& name) {
    for (const MinedField& f : rec.fields) {
        if (f.field == name) return &f;
    }
    return nullptr;
}

VoidResult check_field(const MiningSchema& schema, const std::string& name) {
    if (name.empty()) {
        return VoidResult::failure("unknown_field", "chart spec names an empty field");
    }
    if (schema.find(name) == nullptr) {
        return VoidResult::failure("unknown_field", "chart spec references unknown field: " + name);
    }
    return ok_void();
}

}  // namespace

Result<DatasetExport> build_dataset(const std::vector<MinedRecord>& records,
                                    const ChartSpec& spec, const MiningSchema& schema) {
    using R = Result<DatasetExport>;
    if (records.empty()) {
        return R::failure("no_records", "dataset build needs at least one record");
    }

    std::vector<std::string> referenced;
    switch (spec.kind) {
        case ChartKind::counts:
            referenced = {spec.year_field, spec.category_field};
            break;
        case ChartKind::peaks:
            referenced = {spec.group_field};
            referenced.insert(referenced.end(), spec.metrics.begin(), spec.metrics.end());
            break;
        case ChartKind::crosstab:
            referenced = {spec.x_field, spec.y_field};
            for (const Threshold& t : spec.thresholds) referenced.push_back(t.field);
            break;
    }
    for (const std::string& name : referenced) {
        auto okf = check_field(schema, name);
        if (!okf.ok()) return R(okf.error());
    }

    DatasetExport out;
    switch (spec.kind) {
        case ChartKind::counts: {
            out.csv = csv_row({spec.year_field, spec.category_field, "count"}) + "\n";
            std::map<std::pair<double, std::string>, int> counts;
            for (const MinedRecord& rec : records) {
                const MinedField* year = record_field(rec, spec.year_field);
                const MinedField* cat = record_field(rec, spec.category_field);
                if (year == nullptr || cat == nullptr) continue;
                ++counts[{year->is_numeric ? year->number : 0.0, cat->value}];
            }
            for (const auto& [key, count] : counts) {
                out.csv += csv_row(
                    {format_number(key.first), key.second, std::to_string(count)});
                out.csv += '\n';
            }
            break;
        }
        case ChartKind::peaks: {
            std::vector<std::string> header = {spec.group_field};
            header.insert(header.end(), spec.metrics.begin(), spec.metrics.end());
            out.csv = csv_row(header) + "\n";
            std::map<std::string, std::vector<std::optional<double>>> peaks;
            for (const MinedRecord& rec : records) {
                const MinedField* group = record_field(rec, spec.group_field);
                if (group == nullptr) continue;
                auto& row = peaks[group->value];
                row.resize(spec.metrics.size());
                for (std::size_t m = 0; m < spec.metrics.size(); ++m) {
                    const MinedField* metric = record_field(rec, spec.metrics[m]);
                    if (metric == nullptr || !metric->is_numeric) continue;
                    if (!row[m].has_value() || metric->number > *row[m]) {
                        row[m] = metric->number;
                    }
                }
            }
            for (const auto& [group, row] : peaks) {
                std::vector<std::string> cells = {group};
                for (const auto& peak : row) {
                    cells.push_back(peak.has_value() ? format_number(*peak) : "");
                }
                out.csv += csv_row(cells);
                out.csv += '\n';
            }
            break;
        }
        case ChartKind::crosstab: {
            out.csv = csv_row({"doi", spec.x_field, spec.y_field}) + "\n";
            std::vector<const MinedRecord*> sorted;
            for (const MinedRecord& rec : records) sorted.push_back(&rec);
            std::sort(sorted.begin(), sorted.end(),
                      [](const MinedRecord* a, const MinedRecord* b) { return a->doi < b->doi; });
            for (const MinedRecord* rec : sorted) {
                bool passes = true;
                for (const Threshold& t : spec.thresholds) {
                    const MinedField* f = record_field(*rec, t.field);
                    if (f == nullptr || !f->is_numeric || f->number < t.min) {
                        passes = false;
                        break;
                    }
                }
                if (!passes) continue;
                const MinedField* x = record_field(*rec, spec.x_field);
                const MinedField* y = record_field(*rec, spec.y_field);
                if (x == nullptr || y == nullptr) continue;
                out.csv += csv_row({rec->doi, x->value, y->value});
                out.csv += '\n';
            }
            break;
        }
    }

    json sidecar;
    sidecar["name"] = spec.name;
    sidecar["kind"] = chart_kind_name(spec.kind);
    switch (spec.kind) {
        case ChartKind::counts:
            sidecar["year_field"] = spec.year_field;
            sidecar["category_field"] = spec.category_field;
            break;
        case ChartKind::peaks:
            sidecar["group_field"] = spec.group_field;
            sidecar["metrics"] = spec.metrics;
            break;
        case ChartKind::crosstab:
            sidecar["x_field"] = spec.x_field;
            sidecar["y_field"] = spec.y_field;
            sidecar["thresholds"] = json::array();
            for (const Threshold& t : spec.thresholds) {
                sidecar["thresholds"].push_back({{"field", t.field}, {"min", t.min}});
            }
            break;
    }
    sidecar["records"] = records.size();
    out.spec_json = sidecar.dump(2);
    return R(std::move(out));
}

VoidResult write_dataset(const DatasetExport& ds, const ChartSpec& spec,
                         const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        return VoidResult::failure("io_error", "cannot create " + dir + ": " + ec.message());
    }
    auto csv = write_file_atomic(dir + "/" + spec.name + ".csv", ds.csv);
    if (!csv.ok()) return csv;
    return write_file_atomic(dir + "/" + spec.name + ".spec.json", ds.spec_json);
}

std::vector<ChartSpec> default_chart_specs(double min_selectivity, double min_conversion,
                                           double min_stability_h) {
    ChartSpec counts;
    counts.kind = ChartKind::counts;
    counts.name = "publications";
    counts.year_field = "year";
    counts.category_field = "catalyst_type";

    ChartSpec peaks;
    peaks.kind = ChartKind::peaks;
    peaks.name = "peak_performance";
    peaks.group_field = "promoter";
    peaks.metrics = {"selectivity", "conversion", "stability"};

    ChartSpec crosstab;
    crosstab.kind = ChartKind::crosstab;
    crosstab.name = "selectivity_vs_conversion";
    crosstab.x_field = "selectivity";
    crosstab.y_field = "conversion";
    crosstab.thresholds = {{"selectivity", min_selectivity},
                           {"conversion", min_conversion},
                           {"stability", min_stability_h}};

    return {counts, peaks, crosstab};
}

}  // namespace revgen::mining
