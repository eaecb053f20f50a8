#pragma once

#include <string>
#include <vector>

namespace rili {

// One scan. nodule_size_cm / months_post_sbrt may be NaN when the source CSV
// left the cell empty; subgroup filters reject rows they cannot evaluate.
struct ManifestRow {
    std::string patient_id;
    std::string scan_id;
    std::string volume_path;
    int label = 0; // 0 = no injury, 1 = injury
    double nodule_size_cm = 0;
    double months_post_sbrt = 0;
};

struct Manifest {
    std::vector<ManifestRow> rows;
};

inline constexpr const char* kManifestHeader =
    "patient_id,scan_id,volume_path,label,nodule_size_cm,months_post_sbrt";

// scan_id unique and non-empty, patient_id non-empty, label in {0,1}.
void validate_manifest(const Manifest& m);

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

// volume_path entries are stored relative to the manifest file's directory
// (absolute paths pass through untouched).
std::string resolve_volume_path(const std::string& manifest_path, const std::string& volume_path);

// Unique patient ids in first-appearance order.
std::vector<std::string> patient_ids(const Manifest& m);

// Predicate syntax: "<column> <op> <number>" where column is one of
// nodule_size_cm / months_post_sbrt and op is <=, <, >=, >, or ==.
// Whitespace around tokens is ignored. Examples: "nodule_size_cm<=2.5",
// "months_post_sbrt <= 3". Unknown columns and rows with a missing value in
// the filtered column are errors that name the column. Row order is kept.
std::vector<ManifestRow> subgroup_filter(const std::vector<ManifestRow>& rows, const std::string& predicate);

} // namespace rili
