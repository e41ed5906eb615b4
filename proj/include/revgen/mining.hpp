#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "revgen/corpus.hpp"
#include "revgen/gateway.hpp"
#include "revgen/util.hpp"

namespace revgen::mining {

enum class FieldKind { categorical, numeric, text };

std::string kind_name(FieldKind k);
Result<FieldKind> kind_from(const std::string& name);

struct MiningField {
    std::string name;
    FieldKind kind = FieldKind::text;
    std::string unit;                          // canonical unit, numeric fields only
    std::vector<std::string> allowed;          // categorical vocabulary
    std::map<std::string, std::string> synonyms;  // match key -> allowed value
    bool has_range = false;
    double min_value = 0.0, max_value = 0.0;
};

struct MiningSchema {
    std::vector<MiningField> fields;

    const MiningField* find(const std::string& name) const;
};

// Field names unique; numeric fields carry a unit; categorical fields carry
// at least one allowed value.
VoidResult validate_schema(const MiningSchema& schema);

Result<MiningSchema> schema_from_json(const std::string& text);
std::string schema_to_json(const MiningSchema& schema);
Result<MiningSchema> load_schema(const std::string& path);

// The catalyst-property schema used when no schema file is configured.
MiningSchema default_schema();

// Field list as shown to the model inside the mining prompt.
std::string format_fields_for_prompt(const MiningSchema& schema);

enum class ObsStatus { ok, unparseable, out_of_range };

std::string obs_status_name(ObsStatus s);

struct FieldObservation {
    std::string doi;
    std::string field;
    int repetition = 0;
    std::string raw;      // value text exactly as the model emitted it
    std::string unit;     // unit recognized in the raw text, if any
    std::string value;    // canonical form; meaningful when status != unparseable
    double number = 0.0;  // canonical numeric value for numeric fields
    ObsStatus status = ObsStatus::unparseable;
    std::string note;     // reason when status != ok
};

// Re-derives unit, value, and status from obs.raw against the schema field.
// Percent-family fields treat bare values in [0,1] as fractions; kelvin and
// minutes convert to the celsius/hour canonicals; anything outside the
// conversion table is unparseable. Out-of-range values keep their converted
// number and are flagged, never clamped.
FieldObservation normalize(FieldObservation obs, const MiningField& field);

struct DocMining {
    std::string doi;
    int repetitions = 0;  // requested count
    std::vector<int> missing_repetitions;
    std::vector<FieldObservation> observations;

    int landed() const { return repetitions - static_cast<int>(missing_repetitions.size()); }
};

// Runs R structured passes over the document and normalizes every reported
// field. Fields a response omits become unparseable observations for that
// repetition; an exhausted repetition is recorded missing instead.
Result<DocMining> extract_fields(gateway::Gateway& gw, const corpus::Document& doc,
                                 const MiningSchema& schema, int repetitions);

struct MinedField {
    std::string field;
    std::string value;
    double number = 0.0;
    bool is_numeric = false;
    int votes = 0;
    double confidence = 0.0;  // votes / valid repetitions
};

struct MinedRecord {
    std::string doi;
    int valid_repetitions = 0;
    std::vector<MinedField> fields;      // strict-majority winners only
    std::vector<std::string> abstained;  // schema fields with no winner
};

// Strict-majority vote per field over ok observations; numeric values bucket
// with relative tolerance 1e-6. Fewer than ceil(R/2) landed repetitions
// abstains every field rather than voting on thin evidence.
MinedRecord aggregate_record(const DocMining& mined, const MiningSchema& schema);

std::string record_to_json(const MinedRecord& rec);
Result<MinedRecord> record_from_json(const std::string& text);
VoidResult save_records(const std::vector<MinedRecord>& recs, const std::string& path);
Result<std::vector<MinedRecord>> load_records(const std::string& path);

enum class ChartKind { counts, peaks, crosstab };

std::string chart_kind_name(ChartKind k);

struct Threshold {
    std::string field;
    double min = 0.0;
};

struct ChartSpec {
    ChartKind kind = ChartKind::counts;
    std::string name;  // basename of the export
    // counts: rows are (year_field, category_field, count)
    std::string year_field, category_field;
    // peaks: per group_field value, the max of each metric
    std::string group_field;
    std::vector<std::string> metrics;
    // crosstab: (doi, x_field, y_field) for records passing every threshold
    std::string x_field, y_field;
    std::vector<Threshold> thresholds;
};

struct DatasetExport {
    std::string csv;
    std::string spec_json;
};

// Chart-ready table plus a JSON sidecar describing how it was derived.
Result<DatasetExport> build_dataset(const std::vector<MinedRecord>& records,
                                    const ChartSpec& spec, const MiningSchema& schema);

// Writes <dir>/<name>.csv and <dir>/<name>.spec.json.
VoidResult write_dataset(const DatasetExport& ds, const ChartSpec& spec,
                         const std::string& dir);

// The three default exports: publication counts per year and catalyst type,
// peak performance per promoter, and the thresholded selectivity/conversion
// cross table.
std::vector<ChartSpec> default_chart_specs(double min_selectivity, double min_conversion,
                                           double min_stability_h);

}  // namespace revgen::mining
