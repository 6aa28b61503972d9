#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "lumen/image.hpp"

namespace lumen {

// Portable float map. "PF" is 3-channel, "Pf" single-channel; a negative
// scale marks little-endian payloads; rows are stored bottom-to-top.

namespace pfm_detail {

inline void write_header(std::ofstream& os, const char* magic, int w, int h) {
    os << magic << "\n" << w << " " << h << "\n" << "-1.0" << "\n";
}

struct Header {
    bool color = false;
    int width = 0, height = 0;
    double scale = -1.0;
};

inline Header read_header(std::ifstream& is, const std::string& path) {
    std::string magic;
    is >> magic;
    Header h;
    if (magic == "PF")
        h.color = true;
    else if (magic == "Pf")
        h.color = false;
    else
        throw std::runtime_error("not a PFM file: " + path);
    is >> h.width >> h.height >> h.scale;
    if (!is || h.width < 1 || h.height < 1)
        throw std::runtime_error("malformed PFM header: " + path);
    if (h.scale >= 0.0)
        throw std::runtime_error("big-endian PFM is not supported: " + path);
    is.get(); // single whitespace byte before the payload
    return h;
}

} // namespace pfm_detail

inline void write_pfm(const std::string& path, const ImageRgb& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    pfm_detail::write_header(os, "PF", img.width, img.height);
    for (int y = img.height - 1; y >= 0; --y)
        os.write(reinterpret_cast<const char*>(&img.data[static_cast<std::size_t>(y) *
                                                         img.width * 3]),
                 static_cast<std::streamsize>(img.width * 3 * sizeof(float)));
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline void write_pfm(const std::string& path, const ImageGray& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    pfm_detail::write_header(os, "Pf", img.width, img.height);
    for (int y = img.height - 1; y >= 0; --y)
        os.write(reinterpret_cast<const char*>(&img.data[static_cast<std::size_t>(y) *
                                                         img.width]),
                 static_cast<std::streamsize>(img.width * sizeof(float)));
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline ImageRgb read_pfm_rgb(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    auto h = pfm_detail::read_header(is, path);
    if (!h.color) throw std::runtime_error("expected a 3-channel PFM: " + path);
    ImageRgb img(h.width, h.height);
    for (int y = h.height - 1; y >= 0; --y) {
        is.read(reinterpret_cast<char*>(&img.data[static_cast<std::size_t>(y) * h.width * 3]),
                static_cast<std::streamsize>(h.width * 3 * sizeof(float)));
        if (!is) throw std::runtime_error("truncated PFM payload: " + path);
    }
    return img;
}

inline ImageGray read_pfm_gray(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open: " + path);
    auto h = pfm_detail::read_header(is, path);
    if (h.color) throw std::runtime_error("expected a single-channel PFM: " + path);
    ImageGray img(h.width, h.height);
    for (int y = h.height - 1; y >= 0; --y) {
        is.read(reinterpret_cast<char*>(&img.data[static_cast<std::size_t>(y) * h.width]),
                static_cast<std::streamsize>(h.width * sizeof(float)));
        if (!is) throw std::runtime_error("truncated PFM payload: " + path);
    }
    return img;
}

} // namespace lumen
