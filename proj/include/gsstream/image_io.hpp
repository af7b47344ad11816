// Copyright Contributors to the gsstream Project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include "gsstream/image.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace gss {

/// Binary P6, 8 bit; value = round(255 * clamp(c, 0, 1)).
std::string encode_ppm(const ImageBuffer &img);
void write_ppm(const std::filesystem::path &path, const ImageBuffer &img);
/// Reads RGB into a fresh ImageBuffer (depth and alpha zero). Throws ParseError.
ImageBuffer read_ppm(const std::filesystem::path &path);
ImageBuffer decode_ppm(const std::string &bytes);

/// "GSDP" magic, u32 width, u32 height, u32 channels (little endian), then
/// row-major float32 samples with channels interleaved.
std::string encode_gsdp(const std::vector<Plane> &channels);
void write_gsdp(const std::filesystem::path &path, const Plane &plane);
std::vector<Plane> decode_gsdp(const std::string &bytes);
Plane read_gsdp(const std::filesystem::path &path);

/// Writes rgb.ppm, depth.gsdp and alpha.gsdp into `dir`.
void write_render(const std::filesystem::path &dir, const ImageBuffer &img,
                  const std::string &stem = "");

/// An RGB-D(-mask) frame stored as <stem>.ppm + <stem>.depth.gsdp [+ <stem>.mask.gsdp].
struct FrameFiles {
    std::filesystem::path rgb;
    std::filesystem::path depth;
    std::filesystem::path mask; // empty when absent
};

std::string frame_stem(int index);
/// Sorted frame_NNNN pairs in `dir`. Throws ParseError when a PPM has no depth file.
std::vector<FrameFiles> list_frames(const std::filesystem::path &dir);
/// RGB in `rgb`, depth in `depth`; alpha is set to 1.
ImageBuffer load_frame(const FrameFiles &files);
void save_frame(const std::filesystem::path &dir, int index, const ImageBuffer &frame);

std::string read_file(const std::filesystem::path &path);
void write_file(const std::filesystem::path &path, const std::string &bytes);

} // namespace gss
