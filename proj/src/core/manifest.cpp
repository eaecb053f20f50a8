#include "manifest.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "error.hpp"

namespace rili {

namespace {

std::string format_double(double v) {
    if (std::isnan(v)) return "";
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw Error("manifest: failed to format number");
    return std::string(buf, end);
}

double parse_double(const std::string& s, const std::string& column, size_t line_no) {
    if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw FormatError("manifest line " + std::to_string(line_no) + ": bad " + column + " value '" + s + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

void validate_manifest(const Manifest& m) {
    if (m.rows.empty()) throw ValidationError("manifest has no rows");
    std::unordered_set<std::string> seen;
    for (const auto& r : m.rows) {
        if (r.patient_id.empty()) throw ValidationError("manifest: empty patient_id (scan '" + r.scan_id + "')");
        if (r.scan_id.empty()) throw ValidationError("manifest: empty scan_id (patient '" + r.patient_id + "')");
        if (!seen.insert(r.scan_id).second)
            throw ValidationError("manifest: duplicate scan_id '" + r.scan_id + "'");
        if (r.label != 0 && r.label != 1)
            throw ValidationError("manifest: scan '" + r.scan_id + "' has label " + std::to_string(r.label) +
                                  ", expected 0 or 1");
    }
}

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw FormatError("manifest '" + path + "' is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kManifestHeader)
        throw FormatError("manifest '" + path + "': bad header '" + line + "', expected '" + kManifestHeader + "'");

    Manifest m;
    size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != 6)
            throw FormatError("manifest line " + std::to_string(line_no) + ": expected 6 columns, got " +
                              std::to_string(cells.size()));
        ManifestRow r;
        r.patient_id = cells[0];
        r.scan_id = cells[1];
        r.volume_path = cells[2];
        int label = 0;
        auto [ptr, ec] = std::from_chars(cells[3].data(), cells[3].data() + cells[3].size(), label);
        if (ec != std::errc{} || ptr != cells[3].data() + cells[3].size())
            throw FormatError("manifest line " + std::to_string(line_no) + ": bad label '" + cells[3] + "'");
        r.label = label;
        r.nodule_size_cm = parse_double(cells[4], "nodule_size_cm", line_no);
        r.months_post_sbrt = parse_double(cells[5], "months_post_sbrt", line_no);
        m.rows.push_back(std::move(r));
    }
    validate_manifest(m);
    return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
    validate_manifest(m);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest '" + path + "'");
    out << kManifestHeader << "\n";
    for (const auto& r : m.rows) {
        out << r.patient_id << ',' << r.scan_id << ',' << r.volume_path << ',' << r.label << ','
            << format_double(r.nodule_size_cm) << ',' << format_double(r.months_post_sbrt) << "\n";
    }
    if (!out) throw IoError("failed writing manifest '" + path + "'");
}

std::string resolve_volume_path(const std::string& manifest_path, const std::string& volume_path) {
    std::filesystem::path vp(volume_path);
    if (vp.is_absolute()) return volume_path;
    return (std::filesystem::path(manifest_path).parent_path() / vp).string();
}

std::vector<std::string> patient_ids(const Manifest& m) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& r : m.rows)
        if (seen.insert(r.patient_id).second) out.push_back(r.patient_id);
    return out;
}

std::vector<ManifestRow> subgroup_filter(const std::vector<ManifestRow>& rows, const std::string& predicate) {
    // Parse "<column> <op> <number>".
    std::string s;
    for (char c : predicate)
        if (!std::isspace(static_cast<unsigned char>(c))) s += c;
    size_t op_pos = s.find_first_of("<>=");
    if (op_pos == std::string::npos || op_pos == 0)
        throw ValidationError("subgroup predicate '" + predicate + "': expected <column> <op> <value>");
    std::string column = s.substr(0, op_pos);
    std::string op;
    size_t val_pos = op_pos;
    while (val_pos < s.size() && (s[val_pos] == '<' || s[val_pos] == '>' || s[val_pos] == '=')) {
        op += s[val_pos];
        ++val_pos;
    }
    if (op != "<=" && op != "<" && op != ">=" && op != ">" && op != "==")
        throw ValidationError("subgroup predicate '" + predicate + "': unsupported operator '" + op + "'");
    double threshold = 0;
    {
        std::string num = s.substr(val_pos);
        auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), threshold);
        if (ec != std::errc{} || ptr != num.data() + num.size() || num.empty())
            throw ValidationError("subgroup predicate '" + predicate + "': bad numeric value '" + num + "'");
    }

    double ManifestRow::* field = nullptr;
    if (column == "nodule_size_cm")
        field = &ManifestRow::nodule_size_cm;
    else if (column == "months_post_sbrt")
        field = &ManifestRow::months_post_sbrt;
    else
        throw ValidationError("subgroup predicate: manifest has no column '" + column + "'");

    std::vector<ManifestRow> out;
    for (const auto& r : rows) {
        double v = r.*field;
        if (std::isnan(v))
            throw ValidationError("subgroup filter: scan '" + r.scan_id + "' is missing column '" + column + "'");
        bool keep = op == "<="  ? v <= threshold
                    : op == "<" ? v < threshold
                    : op == ">=" ? v >= threshold
                    : op == ">"  ? v > threshold
                                 : v == threshold;
        if (keep) out.push_back(r);
    }
    if (out.empty()) throw ValidationError("no samples in subgroup '" + predicate + "'");
    return out;
}

} // namespace rili
