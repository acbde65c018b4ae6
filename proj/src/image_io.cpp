#include "gradleak/image_io.hpp"

#include <cmath>
#include <fstream>

namespace gradleak {

namespace {

/// Next whitespace-separated header token, skipping '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {}
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    return tok;
}

}  // namespace

Tensor load_image(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open image: " + path.string());

    std::string magic = next_token(f);
    int64_t channels;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw IoError(path.string() + ": unsupported format '" + magic + "' (need binary P5/P6)");

    auto parse_int = [&](const char* what) {
        std::string tok = next_token(f);
        try {
            size_t used = 0;
            long long v = std::stoll(tok, &used);
            if (used != tok.size() || v <= 0) throw std::invalid_argument(what);
            return static_cast<int64_t>(v);
        } catch (const std::exception&) {
            throw IoError(path.string() + ": malformed header (" + std::string(what) + ")");
        }
    };
    int64_t width = parse_int("width");
    int64_t height = parse_int("height");
    int64_t maxval = parse_int("maxval");
    if (maxval != 255) throw IoError(path.string() + ": unsupported maxval " + std::to_string(maxval));

    std::vector<unsigned char> raw(static_cast<size_t>(width * height * channels));
    f.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw IoError(path.string() + ": truncated pixel data");

    // interleaved rows -> planar CxHxW
    std::vector<double> data(raw.size());
    for (int64_t y = 0; y < height; ++y)
        for (int64_t x = 0; x < width; ++x)
            for (int64_t c = 0; c < channels; ++c)
                data[static_cast<size_t>((c * height + y) * width + x)] =
                    static_cast<double>(raw[static_cast<size_t>((y * width + x) * channels + c)]) /
                    255.0;
    return Tensor::from_data({channels, height, width}, std::move(data));
}

void save_image(const std::filesystem::path& path, const Tensor& image) {
    if (image.ndim() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
        throw IoError("save_image: expected CxHxW with 1 or 3 channels, got " +
                      shape_str(image.shape()));
    int64_t channels = image.dim(0), height = image.dim(1), width = image.dim(2);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f << (channels == 1 ? "P5" : "P6") << "\n" << width << " " << height << "\n255\n";

    auto p = image.data();
    std::vector<unsigned char> raw(p.size());
    for (int64_t y = 0; y < height; ++y)
        for (int64_t x = 0; x < width; ++x)
            for (int64_t c = 0; c < channels; ++c) {
                double v = p[static_cast<size_t>((c * height + y) * width + x)];
                v = std::min(std::max(v, 0.0), 1.0);
                raw[static_cast<size_t>((y * width + x) * channels + c)] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
    f.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!f) throw IoError("write failed: " + path.string());
}

}  // namespace gradleak
