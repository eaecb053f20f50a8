#include "dataset.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "checkpoint.hpp"
#include "error.hpp"

namespace rili {

InputImage prep_volume(const Volume& v, const PrepConfig& cfg) {
    validate_prep_config(cfg);
    Volume r = resample(v, cfg.target_spacing_mm, cfg.fill_hu);
    Volume c = crop_isocenter(r, cfg.crop_side_mm, cfg.fill_hu);
    Volume w = window_normalize(c, cfg.window_lo_hu, cfg.window_hi_hu);
    if (cfg.input_mode == "orthogonal") return extract_orthogonal(w, cfg.input_resolution);
    return extract_axial_repeat(w, cfg.input_resolution);
}

Tensor input_to_tensor(const InputImage& img) {
    Tensor t({3, img.resolution, img.resolution});
    std::copy(img.data.begin(), img.data.end(), t.data.begin());
    return t;
}

PreppedDataset prep_dataset(const Manifest& m, const std::string& manifest_path, const PrepConfig& cfg) {
    validate_manifest(m);
    validate_prep_config(cfg);
    PreppedDataset d;
    d.prep = cfg;
    for (const auto& row : m.rows) {
        std::string path = resolve_volume_path(manifest_path, row.volume_path);
        Volume v;
        try {
            v = load_volume(path);
        } catch (const Error& e) {
            throw IoError("scan '" + row.scan_id + "': " + e.what());
        }
        d.scan_ids.push_back(row.scan_id);
        d.inputs[row.scan_id] = input_to_tensor(prep_volume(v, cfg));
        d.labels[row.scan_id] = row.label;
    }
    return d;
}

void save_prepped(const PreppedDataset& d, const std::string& dir) {
    std::filesystem::path root(dir);
    std::filesystem::create_directories(root);
    nlohmann::ordered_json j;
    j["target_spacing_mm"] = d.prep.target_spacing_mm;
    j["crop_side_mm"] = d.prep.crop_side_mm;
    j["window_lo_hu"] = d.prep.window_lo_hu;
    j["window_hi_hu"] = d.prep.window_hi_hu;
    j["fill_hu"] = d.prep.fill_hu;
    j["input_resolution"] = d.prep.input_resolution;
    j["input_mode"] = d.prep.input_mode;
    auto scans = nlohmann::ordered_json::array();
    std::vector<NamedTensor> arrays;
    for (const auto& id : d.scan_ids) {
        scans.push_back({{"scan_id", id}, {"label", d.labels.at(id)}});
        arrays.push_back({id, d.inputs.at(id)});
    }
    j["scans"] = scans;
    std::ofstream out(root / "prep.json", std::ios::trunc);
    if (!out) throw IoError("cannot write '" + (root / "prep.json").string() + "'");
    out << j.dump(2) << "\n";
    save_arrays(arrays, (root / "inputs.bin").string());
}

PreppedDataset load_prepped(const std::string& dir) {
    std::filesystem::path root(dir);
    std::ifstream in(root / "prep.json");
    if (!in) throw IoError("cannot open '" + (root / "prep.json").string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("prep.json: " + std::string(e.what()));
    }
    PreppedDataset d;
    try {
        d.prep.target_spacing_mm = j.at("target_spacing_mm").get<std::array<double, 3>>();
        d.prep.crop_side_mm = j.at("crop_side_mm").get<double>();
        d.prep.window_lo_hu = j.at("window_lo_hu").get<double>();
        d.prep.window_hi_hu = j.at("window_hi_hu").get<double>();
        d.prep.fill_hu = j.at("fill_hu").get<double>();
        d.prep.input_resolution = j.at("input_resolution").get<int64_t>();
        d.prep.input_mode = j.at("input_mode").get<std::string>();
        for (const auto& s : j.at("scans")) {
            d.scan_ids.push_back(s.at("scan_id").get<std::string>());
            d.labels[d.scan_ids.back()] = s.at("label").get<int>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("prep.json: " + std::string(e.what()));
    }
    auto arrays = load_arrays((root / "inputs.bin").string());
    for (auto& a : arrays) d.inputs[a.name] = std::move(a.tensor);
    for (const auto& id : d.scan_ids)
        if (!d.inputs.count(id)) throw FormatError("prepped dataset: missing input tensor for scan '" + id + "'");
    return d;
}

std::vector<Sample> gather_samples(const PreppedDataset& d, const std::vector<std::string>& scan_ids) {
    std::vector<Sample> out;
    out.reserve(scan_ids.size());
    for (const auto& id : scan_ids) {
        auto it = d.inputs.find(id);
        if (it == d.inputs.end()) throw ValidationError("prepped dataset has no scan '" + id + "'");
        out.push_back({it->second, d.labels.at(id)});
    }
    return out;
}

} // namespace rili
