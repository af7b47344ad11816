// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#include "gsstream/image_io.hpp"

#include "gsstream/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

namespace gss {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "GSDP I/O assumes a little-endian host");

void put_u32(std::string &out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

std::uint32_t get_u32(const std::string &in, std::size_t offset) {
    std::uint32_t v;
    std::memcpy(&v, in.data() + offset, 4);
    return v;
}

} // namespace

std::string read_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError(fmt::format("cannot open {}", path.string()));
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path &path, const std::string &bytes) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(fmt::format("cannot write {}", path.string()));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string encode_ppm(const ImageBuffer &img) {
    std::string out = fmt::format("P6\n{} {}\n255\n", img.width, img.height);
    out.reserve(out.size() + img.rgb.size());
    for (const double c : img.rgb) {
        out.push_back(static_cast<char>(
            static_cast<unsigned char>(std::lround(255.0 * std::clamp(c, 0.0, 1.0)))));
    }
    return out;
}

void write_ppm(const fs::path &path, const ImageBuffer &img) { write_file(path, encode_ppm(img)); }

ImageBuffer decode_ppm(const std::string &bytes) {
    std::size_t pos = 0;
    const auto next_token = [&]() {
        while (pos < bytes.size()) {
            if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') {
                    ++pos;
                }
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
            ++pos;
        }
        return bytes.substr(start, pos - start);
    };
    if (next_token() != "P6") {
        throw ParseError("not a binary PPM (P6) file");
    }
    int w = 0, h = 0, maxval = 0;
    try {
        w = std::stoi(next_token());
        h = std::stoi(next_token());
        maxval = std::stoi(next_token());
    } catch (const std::exception &) {
        throw ParseError("malformed PPM header");
    }
    if (w <= 0 || h <= 0 || maxval != 255) {
        throw ParseError("unsupported PPM dimensions or bit depth");
    }
    ++pos; // single whitespace byte after maxval
    const std::size_t n = std::size_t(w) * h * 3;
    if (bytes.size() < pos + n) {
        throw ParseError("truncated PPM payload");
    }
    ImageBuffer img(w, h);
    for (std::size_t i = 0; i < n; ++i) {
        img.rgb[i] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
    }
    return img;
}

ImageBuffer read_ppm(const fs::path &path) { return decode_ppm(read_file(path)); }

std::string encode_gsdp(const std::vector<Plane> &channels) {
    if (channels.empty()) {
        throw ShapeError("GSDP needs at least one channel");
    }
    const int w = channels[0].width;
    const int h = channels[0].height;
    for (const auto &c : channels) {
        if (c.width != w || c.height != h) {
            throw ShapeError("GSDP channels must share dimensions");
        }
    }
    std::string out = "GSDP";
    put_u32(out, static_cast<std::uint32_t>(w));
    put_u32(out, static_cast<std::uint32_t>(h));
    put_u32(out, static_cast<std::uint32_t>(channels.size()));
    const std::size_t n = std::size_t(w) * h;
    out.reserve(16 + n * channels.size() * 4);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto &c : channels) {
            const float v = static_cast<float>(c.values[i]);
            char buf[4];
            std::memcpy(buf, &v, 4);
            out.append(buf, 4);
        }
    }
    return out;
}

void write_gsdp(const fs::path &path, const Plane &plane) {
    write_file(path, encode_gsdp({plane}));
}

std::vector<Plane> decode_gsdp(const std::string &bytes) {
    if (bytes.size() < 16 || bytes.compare(0, 4, "GSDP") != 0) {
        throw ParseError("not a GSDP file");
    }
    const std::uint32_t w = get_u32(bytes, 4);
    const std::uint32_t h = get_u32(bytes, 8);
    const std::uint32_t channels = get_u32(bytes, 12);
    if (w == 0 || h == 0 || channels == 0) {
        throw ParseError("GSDP header has zero extent");
    }
    const std::size_t n = std::size_t(w) * h;
    if (bytes.size() != 16 + n * channels * 4) {
        throw ParseError("GSDP payload size does not match header");
    }
    std::vector<Plane> out(channels, Plane(int(w), int(h)));
    std::size_t offset = 16;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::uint32_t c = 0; c < channels; ++c) {
            float v;
            std::memcpy(&v, bytes.data() + offset, 4);
            out[c].values[i] = v;
            offset += 4;
        }
    }
    return out;
}

Plane read_gsdp(const fs::path &path) {
    auto planes = decode_gsdp(read_file(path));
    return std::move(planes.front());
}

void write_render(const fs::path &dir, const ImageBuffer &img, const std::string &stem) {
    const std::string prefix = stem.empty() ? "" : stem + ".";
    write_ppm(dir / (prefix + "rgb.ppm"), img);
    write_gsdp(dir / (prefix + "depth.gsdp"), depth_plane(img));
    write_gsdp(dir / (prefix + "alpha.gsdp"), alpha_plane(img));
}

std::string frame_stem(int index) { return fmt::format("frame_{:04d}", index); }

std::vector<FrameFiles> list_frames(const fs::path &dir) {
    if (!fs::is_directory(dir)) {
        throw ParseError(fmt::format("{} is not a directory", dir.string()));
    }
    static const std::regex pattern(R"(frame_(\d+)\.ppm)");
    std::vector<std::pair<int, fs::path>> found;
    for (const auto &entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (std::regex_match(name, m, pattern)) {
            found.emplace_back(std::stoi(m[1].str()), entry.path());
        }
    }
    std::sort(found.begin(), found.end());
    std::vector<FrameFiles> out;
    for (const auto &[index, path] : found) {
        FrameFiles f;
        f.rgb = path;
        const std::string stem = path.stem().string();
        f.depth = dir / (stem + ".depth.gsdp");
        if (!fs::exists(f.depth)) {
            throw ParseError(fmt::format("frame {} has no depth file", path.string()));
        }
        const fs::path mask = dir / (stem + ".mask.gsdp");
        if (fs::exists(mask)) {
            f.mask = mask;
        }
        out.push_back(f);
    }
    return out;
}

ImageBuffer load_frame(const FrameFiles &files) {
    ImageBuffer img = read_ppm(files.rgb);
    const Plane depth = read_gsdp(files.depth);
    if (depth.width != img.width || depth.height != img.height) {
        throw ParseError(fmt::format("depth size of {} differs from its RGB", files.depth.string()));
    }
    img.depth = depth.values;
    std::fill(img.alpha.begin(), img.alpha.end(), 1.0);
    return img;
}

void save_frame(const fs::path &dir, int index, const ImageBuffer &frame) {
    const std::string stem = frame_stem(index);
    write_ppm(dir / (stem + ".ppm"), frame);
    write_gsdp(dir / (stem + ".depth.gsdp"), depth_plane(frame));
}

} // namespace gss
