#include "core/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>

#include <nlohmann/json.hpp>

#include "core/error.hpp"
#include "core/lora.hpp"

namespace rili {

namespace {

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const std::string& in, size_t& pos) {
    if (pos + 4 > in.size()) throw FormatError("checkpoint: truncated header");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
    pos += 4;
    return v;
}

} // namespace

void save_arrays(const std::vector<NamedTensor>& arrays, const std::string& path) {
    std::string out;
    put_u32(out, static_cast<uint32_t>(arrays.size()));
    for (const auto& a : arrays) {
        put_u32(out, static_cast<uint32_t>(a.name.size()));
        out.append(a.name);
        put_u32(out, static_cast<uint32_t>(a.tensor.shape.size()));
        for (const int64_t d : a.tensor.shape) put_u32(out, static_cast<uint32_t>(d));
    }
    for (const auto& a : arrays)
        for (const float f : a.tensor.data) put_u32(out, std::bit_cast<uint32_t>(f));

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    os.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!os) throw IoError("checkpoint: short write to '" + path + "'");
}

std::vector<NamedTensor> load_arrays(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
    std::string in((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

    size_t pos = 0;
    const uint32_t count = get_u32(in, pos);
    std::vector<NamedTensor> arrays;
    arrays.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = get_u32(in, pos);
        if (pos + name_len > in.size()) throw FormatError("checkpoint: truncated name table");
        NamedTensor nt;
        nt.name = in.substr(pos, name_len);
        pos += name_len;
        const uint32_t ndim = get_u32(in, pos);
        if (ndim > 8) throw FormatError("checkpoint: implausible rank " + std::to_string(ndim));
        Shape shape(ndim);
        for (uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int64_t>(get_u32(in, pos));
        nt.tensor = Tensor::zeros(shape);
        arrays.push_back(std::move(nt));
    }
    for (auto& a : arrays)
        for (auto& f : a.tensor.data) f = std::bit_cast<float>(get_u32(in, pos));
    if (pos != in.size()) throw FormatError("checkpoint: trailing bytes in '" + path + "'");
    return arrays;
}

void save_checkpoint(const Model& m, const std::string& path) {
    std::vector<NamedTensor> arrays;
    arrays.reserve(m.order.size());
    for (const auto& name : m.order) arrays.push_back({name, m.params.at(name)->value});
    save_arrays(arrays, path);
}

void load_checkpoint(Model& m, const std::string& path) {
    for (auto& a : load_arrays(path)) {
        if (!m.has(a.name)) throw ValidationError("checkpoint: model has no parameter '" + a.name + "'");
        auto& p = m.at(a.name);
        if (p->value.shape != a.tensor.shape)
            throw ValidationError("checkpoint: shape mismatch for '" + a.name + "': model " +
                                  shape_str(p->value.shape) + " vs file " + shape_str(a.tensor.shape));
        p->value = std::move(a.tensor);
    }
}

void save_adapter_checkpoint(const Model& m, const std::string& path) {
    if (m.lora.rank == 0) throw Error("adapter checkpoint: no adapters present");
    std::vector<NamedTensor> arrays;
    for (const auto& name : m.order)
        if (detail::is_adapter(name) || detail::is_head(name))
            arrays.push_back({name, m.params.at(name)->value});
    save_arrays(arrays, path);

    nlohmann::ordered_json j;
    j["rank"] = m.lora.rank;
    j["alpha"] = m.lora.alpha;
    j["targets"] = m.lora.targets;
    std::ofstream os(path + ".json", std::ios::trunc);
    if (!os) throw IoError("adapter checkpoint: cannot write '" + path + ".json'");
    os << j.dump(2) << "\n";
}

} // namespace rili
