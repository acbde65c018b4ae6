#include "gradleak/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "gradleak/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "container payload is little-endian; big-endian hosts are unsupported");

namespace gradleak {

namespace {
constexpr char kMagic[8] = {'G', 'L', 'T', 'C', '0', '0', '0', '1'};
}

void save_container(const std::filesystem::path& path, const Container& container) {
    nlohmann::json header;
    header["entries"] = nlohmann::json::array();
    uint64_t offset = 0;
    for (const auto& e : container.entries) {
        header["entries"].push_back({{"name", e.name},
                                     {"shape", e.tensor.shape()},
                                     {"dtype", "f64"},
                                     {"offset", offset}});
        offset += static_cast<uint64_t>(e.tensor.numel()) * sizeof(double);
    }
    header["meta"] = container.meta;
    std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f.write(kMagic, sizeof(kMagic));
    uint64_t hlen = hs.size();
    f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& e : container.entries) {
        auto d = e.tensor.data();
        f.write(reinterpret_cast<const char*>(d.data()),
                static_cast<std::streamsize>(d.size() * sizeof(double)));
    }
    if (!f) throw IoError("write failed: " + path.string());
}

Container load_container(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path.string());
    char magic[8];
    f.read(magic, sizeof(magic));
    if (!f || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("not a tensor container: " + path.string());
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw IoError("truncated header: " + path.string());

    nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw IoError("malformed container header: " + path.string());

    std::streampos payload_start = f.tellg();
    Container out;
    out.meta = header.value("meta", nlohmann::json::object());
    for (const auto& e : header.at("entries")) {
        if (e.at("dtype").get<std::string>() != "f64")
            throw IoError("unsupported dtype in " + path.string());
        Shape shape = e.at("shape").get<Shape>();
        uint64_t offset = e.at("offset").get<uint64_t>();
        int64_t n = shape_numel(shape);
        std::vector<double> data(static_cast<size_t>(n));
        f.seekg(payload_start + static_cast<std::streamoff>(offset));
        f.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (!f) throw IoError("truncated payload in " + path.string());
        out.entries.push_back(
            {e.at("name").get<std::string>(), Tensor::from_data(std::move(shape), std::move(data))});
    }
    return out;
}

uint64_t tensor_bytes_checksum(const std::vector<NamedTensor>& tensors) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& t : tensors) {
        auto d = t.tensor.data();
        const auto* p = reinterpret_cast<const unsigned char*>(d.data());
        for (size_t i = 0; i < d.size() * sizeof(double); ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace gradleak
